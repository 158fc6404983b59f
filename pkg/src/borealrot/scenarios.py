"""Fertilization scenarios paired with their unfertilized baselines.

The baseline of every scenario is the thinning-optimized unfertilized stand
and its maturity ``tau_b`` (the rotation maximizing the expected return
rate).  Four timings are compared:

``AfterFirstThinning`` / ``AfterSecondThinning``
    fertilize at the time of the baseline's first (second) thinning and
    search the thinnings again with the fertilization fixed;
``TenYearsBeforeMaturity``
    fertilize at ``tau_b - 10`` keeping schedule and rotation;
``AtMaturityExtendTen``
    fertilize at ``tau_b`` and harvest ten years later.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from .economics import EconomicConfig
from .errors import PreconditionError
from .growth import SPECIES, STEP_YEARS, GrowthParams, StandState, basal_area_per_stem
from .optimizer import OptimizationConfig, SearchResult, curve_argmax, greedy_thinning_search
from .schedule import Schedule, simulate_schedule

EXTENSION_YEARS = 10.0
LEAD_YEARS = 10.0


class NotApplicable(PreconditionError):
    """The scenario's timing does not exist for this baseline."""


class ScenarioKind(str, Enum):
    AFTER_FIRST_THINNING = "AfterFirstThinning"
    AFTER_SECOND_THINNING = "AfterSecondThinning"
    TEN_YEARS_BEFORE_MATURITY = "TenYearsBeforeMaturity"
    AT_MATURITY_EXTEND_TEN = "AtMaturityExtendTen"

    @classmethod
    def parse(cls, name: str) -> "ScenarioKind":
        try:
            return cls(name)
        except ValueError:
            raise PreconditionError(
                f"unknown scenario kind {name!r}; expected one of "
                + ", ".join(k.value for k in cls)) from None


def rotation_extension_expense(delta_r: float, tau_plus: float, cap_plus: float) -> float:
    """Expense of a rotation change, ``-delta_r * tau_plus * cap_plus`` (Eur/ha).

    Negative when the change pays off.
    """
    if not (tau_plus > 0.0 and cap_plus > 0.0):
        raise PreconditionError("need tau_plus > 0 and cap_plus > 0")
    # + 0.0 turns a negative zero into zero
    return -delta_r * tau_plus * cap_plus + 0.0


def stock_expense_rate(expense: float, delta_v: float, tau_plus: float) -> float:
    """Expense per unit of extra mean stock per year, Eur/(m^3 a)."""
    if delta_v == 0.0:
        raise PreconditionError("delta_v is zero: no stock enhancement")
    if not tau_plus > 0.0:
        raise PreconditionError("need tau_plus > 0")
    return expense / (delta_v * tau_plus)


def extension_only_rate(rate: float, tau_plus: float, delta_tau: float) -> float:
    """Rescale a per-cycle rate to the extension years alone."""
    if delta_tau == 0.0:
        raise PreconditionError("delta_tau is zero")
    return rate * tau_plus / delta_tau


@dataclass(frozen=True)
class Comparison:
    """Deltas of one curve point against a reference point.

    ``extension_expense`` uses the compared point's rotation and
    capitalization; the per-volume rates are ``None`` where undefined
    (no stock change, no extension).
    """

    label: str
    tau_ref: float
    tau: float
    r_ref: float
    r: float
    volume_ref: float
    volume: float
    capitalization_ref: float
    capitalization: float
    extension_expense: float
    stock_expense_rate: Optional[float]
    extension_only_rate: Optional[float]
    carbon_stem: float
    carbon_total: float

    @property
    def delta_tau(self) -> float:
        return self.tau - self.tau_ref

    @property
    def delta_r(self) -> float:
        return self.r - self.r_ref

    @property
    def delta_volume(self) -> float:
        return self.volume - self.volume_ref

    @property
    def delta_volume_pct(self) -> float:
        if self.volume_ref == 0.0:
            return math.nan
        return 100.0 * self.delta_volume / self.volume_ref

    @property
    def delta_capitalization(self) -> float:
        return self.capitalization - self.capitalization_ref

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "tau_ref": self.tau_ref, "tau": self.tau, "delta_tau": self.delta_tau,
            "r_ref": self.r_ref, "r": self.r, "delta_r": self.delta_r,
            "volume_ref": self.volume_ref, "volume": self.volume,
            "delta_volume": self.delta_volume, "delta_volume_pct": self.delta_volume_pct,
            "capitalization_ref": self.capitalization_ref,
            "capitalization": self.capitalization,
            "delta_capitalization": self.delta_capitalization,
            "extension_expense": self.extension_expense,
            "stock_expense_rate": self.stock_expense_rate,
            "extension_only_rate": self.extension_only_rate,
            "carbon_delta_stem": self.carbon_stem,
            "carbon_delta_total": self.carbon_total,
        }


def _point(curve: Dict[str, np.ndarray], tau: float) -> Dict[str, float]:
    idx = np.flatnonzero(np.abs(curve["tau"] - tau) < 1e-9)
    if idx.size == 0:
        raise PreconditionError(f"rotation {tau} is not on the evaluated curve")
    i = int(idx[0])
    return {k: float(v[i]) for k, v in curve.items()}


def compare(label: str, ref_curve, ref_tau: float, curve, tau: float,
            cfg: EconomicConfig) -> Comparison:
    a = _point(ref_curve, ref_tau)
    b = _point(curve, tau)
    dr = b["return_rate"] - a["return_rate"]
    dv = b["volume"] - a["volume"]
    dtau = tau - ref_tau
    expense = rotation_extension_expense(dr, tau, b["capitalization"])
    rate = stock_expense_rate(expense, dv, tau) if dv != 0.0 else None
    only = extension_only_rate(rate, tau, dtau) if (rate is not None and dtau > 0.0) else None
    return Comparison(
        label=label, tau_ref=ref_tau, tau=tau,
        r_ref=a["return_rate"], r=b["return_rate"],
        volume_ref=a["volume"], volume=b["volume"],
        capitalization_ref=a["capitalization"], capitalization=b["capitalization"],
        extension_expense=expense, stock_expense_rate=rate, extension_only_rate=only,
        # deltas may be negative, so scale directly
        carbon_stem=dv * cfg.carbon_factor_stem,
        carbon_total=dv * cfg.carbon_factor_total)


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    """Paired unfertilized and fertilized runs of one scenario.

    ``optimum`` compares each run at its own best rotation.  ``matched``
    fertilizes without re-planning: the baseline schedule plus the
    fertilization, at the baseline maturity (at the extended rotation for
    ``AtMaturityExtendTen``); ``matched_curve`` is that run's curve.  For ``AtMaturityExtendTen``
    ``extension`` holds the unfertilized ten-year extension against the
    baseline optimum.
    """

    kind: ScenarioKind
    baseline_schedule: Schedule
    fertilized_schedule: Schedule
    baseline_curve: Dict[str, np.ndarray]
    fertilized_curve: Dict[str, np.ndarray]
    optimum: Comparison
    matched: Comparison
    matched_curve: Dict[str, np.ndarray]
    extension: Optional[Comparison] = None
    fertilization_time: float = math.nan
    evaluations: int = 0
    trace: Dict[str, Any] = field(default_factory=dict)

    @property
    def tau_baseline(self) -> float:
        return self.optimum.tau_ref

    @property
    def tau_fertilized(self) -> float:
        return self.optimum.tau

    @property
    def delta_tau(self) -> float:
        return self.optimum.delta_tau

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "kind": self.kind.value,
            "fertilization_time": self.fertilization_time,
            "tau_baseline": self.tau_baseline,
            "tau_fertilized": self.tau_fertilized,
            "delta_tau": self.delta_tau,
            "baseline_schedule": self.baseline_schedule.to_dict(),
            "fertilized_schedule": self.fertilized_schedule.to_dict(),
            "optimum": self.optimum.to_dict(),
            "matched": self.matched.to_dict(),
        }
        if self.extension is not None:
            out["extension_unfertilized"] = self.extension.to_dict()
        return out


def check_applicable(state: StandState) -> None:
    """Reject stands outside the mesic, mineral-soil, spruce-dominated domain."""
    site = state.site
    if site.site_class != "mesic" or site.soil != "mineral":
        raise PreconditionError(
            f"fertilization scenarios need a mesic mineral-soil site, got "
            f"{site.site_class}/{site.soil}")
    ba = (state.stems * basal_area_per_stem()).sum(axis=1)
    if not ba[SPECIES.index("spruce")] >= ba.max() or ba.max() <= 0.0:
        raise PreconditionError("fertilization scenarios need a spruce-dominated stand")


def _curve(initial, schedule, growth, cfg, hi, backend):
    lo = initial.age
    return simulate_schedule(initial, schedule, growth, cfg, window=(lo, hi),
                             backend=backend).curve


def run_scenario(kind: ScenarioKind, initial: StandState, growth: GrowthParams,
                 cfg: EconomicConfig, opt: Optional[OptimizationConfig] = None,
                 baseline: Optional[SearchResult] = None, backend=None) -> ScenarioResult:
    """Run one fertilization scenario against the thinning-optimized baseline.

    ``baseline`` may be passed to reuse an earlier unfertilized search on
    the same stand and configuration.
    """
    kind = ScenarioKind(kind)
    opt = opt or OptimizationConfig()
    check_applicable(initial)
    if baseline is None:
        baseline = greedy_thinning_search(initial, growth, cfg, opt, backend=backend)
    base = baseline.schedule
    tau_b = base.rotation
    thin_t = base.thinning_times
    evaluations = baseline.evaluations
    extension = None
    trace: Dict[str, Any] = {"baseline": baseline.trace.rows}

    if kind in (ScenarioKind.AFTER_FIRST_THINNING, ScenarioKind.AFTER_SECOND_THINNING):
        need = 1 if kind is ScenarioKind.AFTER_FIRST_THINNING else 2
        if len(thin_t) < need:
            raise NotApplicable(
                f"{kind.value} needs a baseline with at least {need} thinning(s), "
                f"found {len(thin_t)}")
        t_f = thin_t[need - 1]
        hi = opt.max_rotation
        found = greedy_thinning_search(initial, growth, cfg, opt, fertilizations=(t_f,),
                                       backend=backend)
        evaluations += found.evaluations
        trace["fertilized"] = found.trace.rows
        fert = found.schedule
        base_curve = _curve(initial, base, growth, cfg, hi, backend)
        fert_curve = _curve(initial, fert, growth, cfg, hi, backend)
        tau_f = fert.rotation
    elif kind is ScenarioKind.TEN_YEARS_BEFORE_MATURITY:
        t_f = tau_b - LEAD_YEARS
        if t_f < initial.age:
            raise NotApplicable(
                f"fertilization at {t_f} would precede the initial age {initial.age}")
        hi = opt.max_rotation
        fert = replace(base, fertilizations=(t_f,))
        base_curve = _curve(initial, base, growth, cfg, hi, backend)
        fert_curve = _curve(initial, fert, growth, cfg, hi, backend)
        tau_f = tau_b
    else:
        t_f = tau_b
        tau_f = tau_b + EXTENSION_YEARS
        hi = max(opt.max_rotation, tau_f)
        fert = Schedule(tau_f, base.thinnings, (t_f,))
        base_curve = _curve(initial, base.with_rotation(tau_f), growth, cfg, hi, backend)
        fert_curve = _curve(initial, fert, growth, cfg, hi, backend)

    optimum = compare("optimum", base_curve, tau_b, fert_curve, tau_f, cfg)
    # fixed-rotation comparison: fertilize but keep the baseline schedule
    # and the baseline (or prescribed extended) rotation
    matched_curve = fert_curve
    tau_m = tau_f
    if kind in (ScenarioKind.AFTER_FIRST_THINNING, ScenarioKind.AFTER_SECOND_THINNING):
        tau_m = tau_b
        matched_curve = _curve(initial, replace(base, fertilizations=(t_f,)), growth, cfg,
                               hi, backend)
    matched = compare("matched", base_curve, tau_m, matched_curve, tau_m, cfg)
    if kind is ScenarioKind.AT_MATURITY_EXTEND_TEN:
        extension = compare("extension_unfertilized", base_curve, tau_b,
                            base_curve, tau_f, cfg)
    return ScenarioResult(kind, base, fert, base_curve, fert_curve, optimum, matched,
                          matched_curve, extension, float(t_f), evaluations, trace)


def best_point(curve: Dict[str, np.ndarray]):
    """``(max return rate, rotation)`` of a curve; shortest rotation on ties."""
    return curve_argmax(curve["tau"], curve["return_rate"])


__all__ = [
    "ScenarioKind", "ScenarioResult", "NotApplicable", "Comparison", "compare", "run_scenario",
    "rotation_extension_expense", "stock_expense_rate", "extension_only_rate",
    "check_applicable", "best_point", "EXTENSION_YEARS", "LEAD_YEARS", "STEP_YEARS",
]
