# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled growth kernels.

Same contract as ``_kernels_py``; the arithmetic is ordered identically so
that both backends agree to rounding.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, pow, sqrt, M_PI, NAN

cnp.import_array()


cdef enum:
    MAX_CLASSES = 64


cdef void _thin_species(const double[:] x, const double[:] mid, const double[:] ba,
                        double q, double gamma, double[:] frac) noexcept nogil:
    cdef Py_ssize_t n_cls = x.shape[0]
    cdef Py_ssize_t j, jj, start, stop, step
    cdef double total_n = 0.0, sum_nd2 = 0.0, total_ba = 0.0
    cdef double dq, target, clamped_ba, rest_w, lam
    cdef double w[MAX_CLASSES]
    for j in range(n_cls):
        frac[j] = 0.0
    if q <= 0.0:
        return
    if gamma == 0.0:
        for j in range(n_cls):
            if x[j] > 0.0:
                frac[j] = q
        return
    for j in range(n_cls):
        if x[j] > 0.0:
            total_n += x[j]
            sum_nd2 += x[j] * mid[j] * mid[j]
            total_ba += x[j] * ba[j]
    if total_n <= 0.0:
        return
    dq = pow(sum_nd2 / total_n, 0.5)
    for j in range(n_cls):
        w[j] = pow(mid[j] / dq, gamma)
    if gamma > 0.0:
        start = n_cls - 1
        stop = -1
        step = -1
    else:
        start = 0
        stop = n_cls
        step = 1
    target = q * total_ba
    clamped_ba = 0.0
    j = start
    while j != stop:
        if x[j] > 0.0:
            rest_w = 0.0
            jj = j
            while jj != stop:
                if x[jj] > 0.0:
                    rest_w += w[jj] * x[jj] * ba[jj]
                jj += step
            lam = (target - clamped_ba) / rest_w
            if lam * w[j] <= 1.0:
                jj = j
                while jj != stop:
                    if x[jj] > 0.0:
                        frac[jj] = lam * w[jj]
                    jj += step
                return
            frac[j] = 1.0
            clamped_ba += x[j] * ba[j]
        j += step


def thinning_fractions(stems, midpoints, double q, double gamma):
    cdef const double[:] x = np.ascontiguousarray(stems, dtype=np.float64)
    cdef const double[:] mid = np.ascontiguousarray(midpoints, dtype=np.float64)
    if x.shape[0] > MAX_CLASSES:
        raise ValueError(f"at most {MAX_CLASSES} diameter classes")
    cdef double[:] ba = np.pi * (np.asarray(mid) / 200.0) ** 2
    frac = np.zeros(x.shape[0])
    cdef double[:] f = frac
    _thin_species(x, mid, ba, q, gamma, f)
    return frac


def simulate(stems0, Py_ssize_t n_steps, double site_index, double fert0,
             inc, surv, ingr, midpoints, double class_width,
             double step_years, double bump, double fert_duration,
             thin_steps, thin_q, thin_gamma, fert_steps):
    cdef const double[:, :] x0 = np.ascontiguousarray(stems0, dtype=np.float64)
    cdef Py_ssize_t n_sp = x0.shape[0], n_cls = x0.shape[1]
    if n_cls > MAX_CLASSES:
        raise ValueError(f"at most {MAX_CLASSES} diameter classes")
    cdef const double[:, :] c_inc = np.ascontiguousarray(inc, dtype=np.float64)
    cdef const double[:, :] c_surv = np.ascontiguousarray(surv, dtype=np.float64)
    cdef const double[:, :] c_ingr = np.ascontiguousarray(ingr, dtype=np.float64)
    cdef const double[:] mid = np.ascontiguousarray(midpoints, dtype=np.float64)
    cdef const cnp.int64_t[:] t_steps = np.ascontiguousarray(thin_steps, dtype=np.int64)
    cdef const double[:, :] t_q = np.ascontiguousarray(thin_q, dtype=np.float64).reshape(-1, n_sp)
    cdef const double[:] t_g = np.ascontiguousarray(thin_gamma, dtype=np.float64)
    cdef const cnp.int64_t[:] f_steps = np.ascontiguousarray(fert_steps, dtype=np.int64)

    pre_arr = np.zeros((n_steps + 1, n_sp, n_cls))
    post_arr = np.zeros((n_steps + 1, n_sp, n_cls))
    clock_arr = np.zeros(n_steps + 1)
    cdef double[:, :, :] pre = pre_arr
    cdef double[:, :, :] post = post_arr
    cdef double[:] clock = clock_arr

    ba_arr = np.pi * (np.asarray(mid) / 200.0) ** 2
    cdef double[:] ba_stem = ba_arr
    cur_arr = np.array(x0, dtype=np.float64)
    nxt_arr = np.zeros((n_sp, n_cls))
    frac_arr = np.zeros(n_cls)
    cdef double[:, :] cur = cur_arr
    cdef double[:, :] nxt = nxt_arr
    cdef double[:] frac = frac_arr

    cdef Py_ssize_t i, s, j, k
    cdef Py_ssize_t n_thin = t_steps.shape[0], n_fert = f_steps.shape[0]
    cdef double fert = fert0
    cdef double ba, si, d, dd, u, z, sv, alive, moved, g, n_sp_total

    with nogil:
        for i in range(n_steps + 1):
            if i > 0:
                ba = 0.0
                for s in range(n_sp):
                    for j in range(n_cls):
                        ba += cur[s, j] * ba_stem[j]
                si = site_index + bump if fert > 0.0 else site_index
                for s in range(n_sp):
                    for j in range(n_cls):
                        nxt[s, j] = 0.0
                for s in range(n_sp):
                    n_sp_total = 0.0
                    for j in range(n_cls):
                        n_sp_total += cur[s, j]
                    for j in range(n_cls):
                        if cur[s, j] == 0.0:
                            # empty class contributes nothing
                            continue
                        d = mid[j]
                        dd = (c_inc[s, 0] + c_inc[s, 1] * d + c_inc[s, 2] * (d * d)
                              + c_inc[s, 3] * ba + c_inc[s, 4] * si)
                        if dd < 0.0:
                            dd = 0.0
                        u = dd * step_years / class_width
                        if u > 1.0:
                            u = 1.0
                        if j == n_cls - 1:
                            u = 0.0
                        z = (c_surv[s, 0] + c_surv[s, 1] * d + c_surv[s, 2] * (d * d)
                             + c_surv[s, 3] * ba + c_surv[s, 4] * si)
                        sv = pow(1.0 / (1.0 + exp(-z)), step_years)
                        alive = cur[s, j] * sv
                        moved = alive * u
                        nxt[s, j] = nxt[s, j] + (alive - moved)
                        if j + 1 < n_cls:
                            nxt[s, j + 1] = moved
                    g = c_ingr[s, 0] + c_ingr[s, 1] * ba + c_ingr[s, 2] * si
                    if g < 0.0 or n_sp_total <= 0.0:
                        g = 0.0
                    nxt[s, 0] = nxt[s, 0] + g * step_years
                for s in range(n_sp):
                    for j in range(n_cls):
                        cur[s, j] = nxt[s, j]
                fert = fert - step_years
                if fert < 0.0:
                    fert = 0.0
            for s in range(n_sp):
                for j in range(n_cls):
                    pre[i, s, j] = cur[s, j]
            for k in range(n_thin):
                if t_steps[k] == i:
                    for s in range(n_sp):
                        _thin_species(cur[s], mid, ba_stem, t_q[k, s], t_g[k], frac)
                        for j in range(n_cls):
                            cur[s, j] = cur[s, j] - cur[s, j] * frac[j]
            for k in range(n_fert):
                if f_steps[k] == i:
                    fert = fert_duration
            for s in range(n_sp):
                for j in range(n_cls):
                    post[i, s, j] = cur[s, j]
            clock[i] = fert
    return pre_arr, post_arr, clock_arr


def cycle_curve(times_, sp_, sq_, vp_, vq_, revenue_, thin_nodes_, fert_nodes_,
                double bare_land, double regeneration, double fert_cost,
                double interest, double operating):
    cdef const double[:] times = np.ascontiguousarray(times_, dtype=np.float64)
    cdef const double[:] sp = np.ascontiguousarray(sp_, dtype=np.float64)
    cdef const double[:] sq = np.ascontiguousarray(sq_, dtype=np.float64)
    cdef const double[:] vp = np.ascontiguousarray(vp_, dtype=np.float64)
    cdef const double[:] vq = np.ascontiguousarray(vq_, dtype=np.float64)
    cdef const double[:] rev = np.ascontiguousarray(revenue_, dtype=np.float64)
    cdef const cnp.int64_t[:] tn = np.ascontiguousarray(thin_nodes_, dtype=np.int64)
    cdef const cnp.int64_t[:] fn = np.ascontiguousarray(fert_nodes_, dtype=np.int64)
    cdef Py_ssize_t n = times.shape[0] - 1
    cdef Py_ssize_t k, i, j, m, w, idx
    profit_arr = np.empty(n)
    cap_arr = np.empty(n)
    ret_arr = np.empty(n)
    vol_arr = np.empty(n)
    cdef double[:] profit = profit_arr
    cdef double[:] cap = cap_arr
    cdef double[:] ret = ret_arr
    cdef double[:] vol = vol_arr
    cdef double a0 = times[0]
    cdef double s_acc = 0.0, v_acc = 0.0, g_acc = 0.0, r_acc = 0.0
    cdef double h, tau, book, atoms, end, cap_int, profit_int, g0
    with nogil:
        g0 = sp[0] if a0 > 0.0 else 0.0
        for j in range(tn.shape[0]):
            if tn[j] == 0:
                r_acc += rev[0] - (sp[0] - sq[0])
        for k in range(1, n + 1):
            idx = k - 1
            tau = times[k]
            h = times[k] - times[k - 1]
            s_acc += h * (sq[k - 1] + sp[k]) * 0.5
            v_acc += h * (vq[k - 1] + vp[k]) * 0.5
            g_acc += sp[k] - sq[k - 1]
            for j in range(tn.shape[0]):
                if tn[j] == k:
                    r_acc += rev[k] - (sp[k] - sq[k])
            book = 0.0
            atoms = 0.0
            for i in range(fn.shape[0]):
                m = fn[i]
                if m > k:
                    continue
                w = n + 1
                for j in range(tn.shape[0]):
                    if tn[j] > m and tn[j] < w:
                        w = tn[j]
                if w <= k:
                    end = times[w]
                else:
                    end = tau
                book += fert_cost * (end - times[m])
                atoms -= fert_cost
            cap_int = ((bare_land + regeneration) * tau + book
                       + (sp[0] * a0 * 0.5 + s_acc))
            profit_int = ((g0 + g_acc) + r_acc + atoms - regeneration
                          - interest * cap_int - operating * tau)
            profit[idx] = profit_int / tau
            cap[idx] = cap_int / tau
            if cap[idx] > 0.0:
                ret[idx] = profit[idx] / cap[idx]
            else:
                ret[idx] = NAN
            vol[idx] = (vp[0] * a0 * 0.5 + v_acc) / tau
    return profit_arr, cap_arr, ret_arr, vol_arr
