"""Pure-Python/numpy implementation of the hot growth kernels.

This module mirrors ``_kernels.pyx`` operation for operation and is used
whenever the compiled extension is unavailable (or ``BOREALROT_PURE=1``).
"""
from __future__ import annotations

import numpy as np


def basal_area_per_stem(midpoints: np.ndarray) -> np.ndarray:
    # midpoints in cm, result in m^2
    return np.pi * (midpoints / 200.0) ** 2


def thinning_fractions(stems: np.ndarray, midpoints: np.ndarray,
                       q: float, gamma: float) -> np.ndarray:
    """Per-class removal fractions for one species.

    Removal weight is proportional to ``(d / d_qmd) ** gamma``; the scale is
    solved by water-filling so that the removed basal area is exactly the
    fraction ``q`` of the species' basal area, with fractions capped at 1.
    """
    n_cls = stems.shape[0]
    frac = np.zeros(n_cls)
    if q <= 0.0:
        return frac
    if gamma == 0.0:
        frac[stems > 0.0] = q
        return frac
    ba = basal_area_per_stem(midpoints)
    total_n = 0.0
    sum_nd2 = 0.0
    total_ba = 0.0
    for j in range(n_cls):
        if stems[j] > 0.0:
            total_n += stems[j]
            sum_nd2 += stems[j] * midpoints[j] * midpoints[j]
            total_ba += stems[j] * ba[j]
    if total_n <= 0.0:
        return frac
    dq = (sum_nd2 / total_n) ** 0.5
    w = (midpoints / dq) ** gamma
    order = range(n_cls - 1, -1, -1) if gamma > 0.0 else range(n_cls)
    order = [j for j in order if stems[j] > 0.0]
    target = q * total_ba
    clamped_ba = 0.0
    for k, j in enumerate(order):
        rest_w = 0.0
        for jj in order[k:]:
            rest_w += w[jj] * stems[jj] * ba[jj]
        lam = (target - clamped_ba) / rest_w
        if lam * w[j] <= 1.0:
            for jj in order[k:]:
                frac[jj] = lam * w[jj]
            return frac
        frac[j] = 1.0
        clamped_ba += stems[j] * ba[j]
    return frac


def simulate(stems0: np.ndarray, n_steps: int, site_index: float,
             fert0: float, inc: np.ndarray, surv: np.ndarray,
             ingr: np.ndarray, midpoints: np.ndarray, class_width: float,
             step_years: float, bump: float, fert_duration: float,
             thin_steps: np.ndarray, thin_q: np.ndarray,
             thin_gamma: np.ndarray, fert_steps: np.ndarray):
    """Run ``n_steps`` growth steps with events applied at grid nodes.

    Returns ``(pre, post, clock)`` where ``pre[i]`` is the state at node ``i``
    before any event, ``post[i]`` after thinnings and fertilization at that
    node, and ``clock[i]`` the remaining fertilization effect after events.
    """
    n_sp, n_cls = stems0.shape
    pre = np.zeros((n_steps + 1, n_sp, n_cls))
    post = np.zeros((n_steps + 1, n_sp, n_cls))
    clock = np.zeros(n_steps + 1)
    ba_stem = basal_area_per_stem(midpoints)
    d = midpoints
    d2 = midpoints * midpoints
    thin_at = {int(s): k for k, s in enumerate(thin_steps)}
    fert_at = {int(s) for s in fert_steps}

    x = np.array(stems0, dtype=float)
    fert = float(fert0)
    for i in range(n_steps + 1):
        if i > 0:
            x, fert = _advance(x, fert, site_index, inc, surv, ingr, d, d2,
                               ba_stem, class_width, step_years, bump)
        pre[i] = x
        k = thin_at.get(i)
        if k is not None:
            x = x.copy()
            for s in range(n_sp):
                f = thinning_fractions(x[s], midpoints, thin_q[k, s],
                                       thin_gamma[k])
                x[s] = x[s] - x[s] * f
        if i in fert_at:
            fert = fert_duration
        post[i] = x
        clock[i] = fert
    return pre, post, clock


def _advance(x, fert, site_index, inc, surv, ingr, d, d2, ba_stem,
             class_width, step_years, bump):
    ba = float(np.sum(x * ba_stem))
    si = site_index + bump if fert > 0.0 else site_index
    dd = (inc[:, 0:1] + inc[:, 1:2] * d + inc[:, 2:3] * d2
          + inc[:, 3:4] * ba + inc[:, 4:5] * si)
    dd = np.maximum(dd, 0.0)
    u = np.minimum(dd * step_years / class_width, 1.0)
    u[:, -1] = 0.0
    z = (surv[:, 0:1] + surv[:, 1:2] * d + surv[:, 2:3] * d2
         + surv[:, 3:4] * ba + surv[:, 4:5] * si)
    s = (1.0 / (1.0 + np.exp(-z))) ** step_years
    alive = x * s
    moved = alive * u
    out = alive - moved
    out[:, 1:] += moved[:, :-1]
    g = np.maximum(ingr[:, 0] + ingr[:, 1] * ba + ingr[:, 2] * si, 0.0)
    # no seed source, no ingrowth
    g[x.sum(axis=1) <= 0.0] = 0.0
    out[:, 0] += g * step_years
    fert = max(0.0, fert - step_years)
    return out, fert


def cycle_curve(times, sp, sq, vp, vq, revenue, thin_nodes, fert_nodes,
                bare_land, regeneration, fert_cost, interest, operating):
    """Cycle expectations for every rotation ending at node ``k >= 1``.

    ``sp``/``sq`` are stock values before/after the events at each node and
    ``vp``/``vq`` the volumes.  Before the first node the stand grows
    linearly from nothing.  Returns ``(profit, capitalization, return_rate,
    volume)`` indexed by ``k - 1``.
    """
    n = times.shape[0] - 1
    a0 = times[0]
    tau = times[1:]
    h = times[1:] - times[:-1]
    stock_int = sp[0] * a0 * 0.5 + np.cumsum(h * (sq[:-1] + sp[1:]) * 0.5)
    vol_int = vp[0] * a0 * 0.5 + np.cumsum(h * (vq[:-1] + vp[1:]) * 0.5)
    # a stand observed at age 0 brings its stock with it
    g0 = sp[0] if a0 > 0.0 else 0.0
    growth = g0 + np.cumsum(sp[1:] - sq[:-1])

    realization = np.zeros(n + 1)
    for k in thin_nodes:
        realization[k] = revenue[k] - (sp[k] - sq[k])
    realized = np.cumsum(realization)[1:]

    k_idx = np.arange(1, n + 1)
    book = np.zeros(n)
    fert_atoms = np.zeros(n)
    for m in fert_nodes:
        later = [k for k in thin_nodes if k > m]
        w = min(later) if later else n + 1
        active = k_idx >= m
        end = np.where(k_idx >= w, times[min(w, n)], tau)
        book = book + np.where(active, fert_cost * (end - times[m]), 0.0)
        fert_atoms = fert_atoms - np.where(active, fert_cost, 0.0)

    cap_int = (bare_land + regeneration) * tau + book + stock_int
    profit_int = (growth + realized + fert_atoms - regeneration
                  - interest * cap_int - operating * tau)
    profit = profit_int / tau
    cap = cap_int / tau
    ret = np.full(n, np.nan)
    pos = cap > 0.0
    ret[pos] = profit[pos] / cap[pos]
    return profit, cap, ret, vol_int / tau
