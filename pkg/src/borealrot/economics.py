"""Stand valuation, rotation ledger and periodic-cycle expectations.

Under periodic boundary conditions one rotation ``[0, tau]`` repeats forever
and the stand is observed at a uniformly random time.  The expected profit
rate and the expected capitalization are then plain time averages over the
cycle, and the expected return rate on capital is their ratio.

Capitalization ``K(t)`` is a balance-sheet quantity: bare land value, the
standing stock at clearcut stumpage prices, and the book values of not yet
amortized regeneration and fertilization expenses.  The profit rate is on the
profit/loss basis: stock value growth, interest and operating expenses, and
amortization write-offs.  Investments and withdrawals move ``K`` but are not
profit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import PreconditionError
from .growth import ASSORTMENTS, SPECIES, GrowthParams, StandState

HARVEST_TYPES = ("thinning", "clearcut")


@dataclass(frozen=True)
class EconomicConfig:
    """Prices (Eur/m^3), costs (Eur/ha) and carbon factors (tCO2/m^3).

    ``prices[harvest_type][species][assortment]``.
    """

    prices: Mapping[str, Mapping[str, Mapping[str, float]]]
    regeneration_cost: float
    fertilization_cost: float
    bare_land_value: float
    interest_rate: float = 0.0
    operating_cost: float = 0.0
    carbon_factor_stem: float = 1.0
    carbon_factor_total: float = 2.0
    price_level: str = "2019"

    def __post_init__(self):
        for ht in HARVEST_TYPES:
            if ht not in self.prices:
                raise PreconditionError(f"price table lacks harvest type {ht!r}")
            for sp in SPECIES:
                for a in ASSORTMENTS:
                    try:
                        p = float(self.prices[ht][sp][a])
                    except KeyError:
                        raise PreconditionError(
                            f"price table lacks {ht}/{sp}/{a}") from None
                    if not (math.isfinite(p) and p >= 0.0):
                        raise PreconditionError(f"price {ht}/{sp}/{a} must be >= 0")
        for name in ("regeneration_cost", "fertilization_cost", "bare_land_value",
                     "operating_cost"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise PreconditionError(f"{name} must be finite and >= 0")
        if not math.isfinite(self.interest_rate):
            raise PreconditionError("interest_rate must be finite")
        if self.carbon_factor_stem < 0.0 or self.carbon_factor_total < self.carbon_factor_stem:
            raise PreconditionError(
                "carbon factors need 0 <= carbon_factor_stem <= carbon_factor_total")

    def price(self, species: str, assortment: str, harvest_type: str) -> float:
        try:
            return float(self.prices[harvest_type][species][assortment])
        except KeyError:
            raise PreconditionError(
                f"no price for {harvest_type}/{species}/{assortment}") from None

    def price_matrix(self, harvest_type: str) -> np.ndarray:
        """Prices as a ``(species, assortment)`` array."""
        return np.array([[self.price(sp, a, harvest_type) for a in ASSORTMENTS]
                         for sp in SPECIES])

    def value_per_stem(self, growth: GrowthParams, harvest_type: str) -> np.ndarray:
        """Stumpage value (Eur) of one stem per species and class."""
        vol = growth.volume_per_stem()
        share = growth.sawlog_share()
        p = self.price_matrix(harvest_type)
        saw = vol * share
        return saw * p[:, 0:1] + (vol - saw) * p[:, 1:2]

    def scaled(self, c: float) -> "EconomicConfig":
        """Copy with every monetary value multiplied by ``c``."""
        prices = {ht: {sp: {a: c * float(v) for a, v in row.items()}
                       for sp, row in table.items()}
                  for ht, table in self.prices.items()}
        return replace(self, prices=prices,
                       regeneration_cost=c * self.regeneration_cost,
                       fertilization_cost=c * self.fertilization_cost,
                       bare_land_value=c * self.bare_land_value,
                       operating_cost=c * self.operating_cost)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EconomicConfig":
        carbon = data.get("carbon", {})
        return cls(
            prices={ht: {sp: {a: float(v) for a, v in row.items()}
                         for sp, row in table.items()}
                    for ht, table in data["prices"].items()},
            regeneration_cost=float(data["regeneration_cost"]),
            fertilization_cost=float(data["fertilization_cost"]),
            bare_land_value=float(data["bare_land_value"]),
            interest_rate=float(data.get("interest_rate", 0.0)),
            operating_cost=float(data.get("operating_cost", 0.0)),
            carbon_factor_stem=float(carbon.get("stem", 1.0)),
            carbon_factor_total=float(carbon.get("total", 2.0)),
            price_level=str(data.get("price_level", "2019")),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": 1,
            "kind": "econ_config",
            "price_level": self.price_level,
            "prices": {ht: {sp: dict(row) for sp, row in table.items()}
                       for ht, table in self.prices.items()},
            "regeneration_cost": self.regeneration_cost,
            "fertilization_cost": self.fertilization_cost,
            "bare_land_value": self.bare_land_value,
            "interest_rate": self.interest_rate,
            "operating_cost": self.operating_cost,
            "carbon": {"stem": self.carbon_factor_stem,
                       "total": self.carbon_factor_total},
        }

    @classmethod
    def default(cls) -> "EconomicConfig":
        from .io import load_econ_config, default_data_path
        return load_econ_config(default_data_path("econ_config.json"))


def _priced(volumes: Mapping[str, Mapping[str, float]], harvest_type: str,
            cfg: EconomicConfig) -> float:
    total = 0.0
    for sp, row in volumes.items():
        if sp not in SPECIES:
            raise PreconditionError(f"unknown species {sp!r}")
        for a, v in row.items():
            if a not in ASSORTMENTS:
                raise PreconditionError(f"unknown assortment {a!r}")
            if v < 0.0:
                raise PreconditionError("volumes must be >= 0")
            total += v * cfg.price(sp, a, harvest_type)
    return total


def stumpage_value(volumes: Mapping[str, Mapping[str, float]],
                   cfg: EconomicConfig) -> float:
    """Standing stock valued at clearcut prices."""
    return _priced(volumes, "clearcut", cfg)


def harvest_revenue(removed_volumes: Mapping[str, Mapping[str, float]],
                    harvest_type: str, cfg: EconomicConfig) -> float:
    if harvest_type not in HARVEST_TYPES:
        raise PreconditionError(f"unknown harvest type {harvest_type!r}")
    return _priced(removed_volumes, harvest_type, cfg)


def stand_value(state: StandState, growth: GrowthParams, cfg: EconomicConfig,
                book_value: float = 0.0) -> float:
    """Capitalization of the stand: stock + bare land + book values."""
    stock = float(np.sum(state.stems * cfg.value_per_stem(growth, "clearcut")))
    return stock + cfg.bare_land_value + book_value


def carbon_equivalent(volume: float, cfg: EconomicConfig, mode: str = "total") -> float:
    """CO2 equivalent (t/ha) of a commercial volume (m^3/ha)."""
    if volume < 0.0:
        raise PreconditionError("volume must be >= 0")
    if mode == "stem":
        return volume * cfg.carbon_factor_stem
    if mode == "total":
        return volume * cfg.carbon_factor_total
    raise PreconditionError(f"unknown carbon mode {mode!r}")


@dataclass(frozen=True)
class LedgerEvent:
    """Instantaneous ledger entry.

    ``category`` is one of ``investment`` and ``withdrawal`` (cash flows that
    move capitalization only; ``amount`` is the positive cash magnitude) or
    ``amortization`` and ``realization`` (profit atoms; ``amount`` is the
    signed profit contribution).
    """

    time: float
    kind: str
    category: str
    amount: float

    @property
    def is_profit(self) -> bool:
        return self.category in ("amortization", "realization")


@dataclass(frozen=True, eq=False)
class Ledger:
    """Piecewise-linear rotation ledger over ``[0, tau]``.

    Segment ``i`` spans ``times[i]..times[i+1]``; ``*_start``/``*_end`` are
    the one-sided limits at its ends, so jumps at event nodes are exact.
    """

    times: np.ndarray
    capital_start: np.ndarray
    capital_end: np.ndarray
    profit_start: np.ndarray
    profit_end: np.ndarray
    volume_start: np.ndarray
    volume_end: np.ndarray
    events: Tuple[LedgerEvent, ...] = ()
    bare_land_value: float = 0.0

    @property
    def tau(self) -> float:
        return float(self.times[-1] - self.times[0])

    def profit_atoms(self) -> float:
        return math.fsum(e.amount for e in self.events if e.is_profit)


@dataclass(frozen=True)
class CycleExpectation:
    tau: float
    expected_profit_rate: float
    expected_capitalization: float
    expected_return_rate: float
    expected_volume: float
    b: float = 0.0


def _segment_integral(times, start, end) -> float:
    h = np.diff(np.asarray(times, dtype=float))
    return float(np.sum(h * (np.asarray(start) + np.asarray(end)) * 0.5))


def _check_tau(ledger: Ledger) -> float:
    tau = ledger.tau
    if not tau > 0.0:
        raise PreconditionError(f"cycle duration must be > 0, got {tau}")
    return tau


def expected_profit_rate(ledger: Ledger) -> float:
    """Time average of the profit rate over the cycle, atoms included."""
    tau = _check_tau(ledger)
    cont = _segment_integral(ledger.times, ledger.profit_start, ledger.profit_end)
    return (cont + ledger.profit_atoms()) / tau


def expected_capitalization(ledger: Ledger) -> float:
    tau = _check_tau(ledger)
    return _segment_integral(ledger.times, ledger.capital_start, ledger.capital_end) / tau


def expected_volume(ledger: Ledger) -> float:
    tau = _check_tau(ledger)
    return _segment_integral(ledger.times, ledger.volume_start, ledger.volume_end) / tau


def expected_return_rate(ledger: Ledger) -> float:
    cap = expected_capitalization(ledger)
    if not cap > 0.0:
        raise PreconditionError(
            f"expected capitalization must be > 0 for a return rate, got {cap}")
    return expected_profit_rate(ledger) / cap


def cycle_expectation(ledger: Ledger) -> CycleExpectation:
    return CycleExpectation(
        tau=ledger.tau,
        expected_profit_rate=expected_profit_rate(ledger),
        expected_capitalization=expected_capitalization(ledger),
        expected_return_rate=expected_return_rate(ledger),
        expected_volume=expected_volume(ledger),
    )


# ---------------------------------------------------------------------------
# Valuation of a simulated trajectory


@dataclass(frozen=True)
class TrajectoryValues:
    """Per-node monetary and volume quantities of a trajectory.

    ``*_pre``/``*_post`` bracket the events at each node; ``revenue`` is the
    thinning revenue at each node (0 where nothing is thinned).
    """

    times: np.ndarray
    stock_pre: np.ndarray
    stock_post: np.ndarray
    volume_pre: np.ndarray
    volume_post: np.ndarray
    revenue: np.ndarray
    thinning_nodes: Tuple[int, ...]
    fertilization_nodes: Tuple[int, ...]


@dataclass(frozen=True)
class ValueTables:
    """Per-stem value and volume tables for one (growth, economics) pair."""

    clearcut: np.ndarray
    thinning: np.ndarray
    volume: np.ndarray

    @classmethod
    def build(cls, growth: GrowthParams, cfg: EconomicConfig) -> "ValueTables":
        return cls(cfg.value_per_stem(growth, "clearcut"),
                   cfg.value_per_stem(growth, "thinning"),
                   growth.volume_per_stem())


def value_trajectory(trajectory, tables: ValueTables) -> TrajectoryValues:
    pre, post = trajectory.pre, trajectory.post
    cc = tables.clearcut.ravel()
    vol = tables.volume.ravel()
    n = pre.shape[0]
    flat_pre = pre.reshape(n, -1)
    flat_post = post.reshape(n, -1)
    removed = flat_pre - flat_post
    return TrajectoryValues(
        times=trajectory.times,
        stock_pre=flat_pre @ cc,
        stock_post=flat_post @ cc,
        volume_pre=flat_pre @ vol,
        volume_post=flat_post @ vol,
        revenue=removed @ tables.thinning.ravel(),
        thinning_nodes=tuple(trajectory.thinning_nodes),
        fertilization_nodes=tuple(trajectory.fertilization_nodes),
    )


def _write_off_node(fert_node: int, thinning_nodes: Sequence[int]) -> Optional[int]:
    later = [k for k in thinning_nodes if k > fert_node]
    return min(later) if later else None


def expectation_curve(values: TrajectoryValues, cfg: EconomicConfig,
                      backend=None) -> Dict[str, np.ndarray]:
    """Cycle expectations for every rotation ending at node ``k >= 1``.

    Events at a node ``<= k`` are part of rotation ``k``.  ``build_ledger``
    plus the ``expected_*`` functions compute the same numbers one rotation
    at a time.
    """
    t = np.asarray(values.times, dtype=float)
    if len(t) < 2:
        empty = np.zeros(0)
        return {"tau": empty, "profit_rate": empty, "capitalization": empty,
                "return_rate": empty, "volume": empty}
    impl = backend or kernels
    profit, cap, ret, vol = impl.cycle_curve(
        t, values.stock_pre, values.stock_post, values.volume_pre, values.volume_post,
        values.revenue, np.array(values.thinning_nodes, dtype=np.int64),
        np.array(values.fertilization_nodes, dtype=np.int64),
        cfg.bare_land_value, cfg.regeneration_cost, cfg.fertilization_cost,
        cfg.interest_rate, cfg.operating_cost)
    return {"tau": t[1:].copy(), "profit_rate": profit, "capitalization": cap,
            "return_rate": ret, "volume": vol}


def build_ledger(trajectory, schedule, cfg: EconomicConfig, growth: GrowthParams,
                 tables: Optional[ValueTables] = None) -> Ledger:
    """Explicit ledger of one rotation ``[0, schedule.rotation]``.

    Regeneration cost is booked at establishment and written off at the final
    harvest.  A fertilization payment is booked when applied and written off
    at the first harvest after it.  Thinning revenue is a withdrawal; the gap
    between it and the clearcut value of the removed stock is realized as a
    profit atom.
    """
    tau = float(schedule.rotation)
    times_all = np.asarray(trajectory.times, dtype=float)
    a0 = float(times_all[0])
    for ev_t in list(schedule.thinning_times) + list(schedule.fertilization_times):
        if not (0.0 <= ev_t <= tau):
            raise PreconditionError(
                f"schedule event at t={ev_t} lies outside [0, {tau}]")
    if not (tau > a0):
        raise PreconditionError(f"rotation {tau} must exceed initial age {a0}")
    k_end = int(round((tau - a0) / (times_all[1] - times_all[0]))) if len(times_all) > 1 else 0
    if k_end >= len(times_all) or not math.isclose(times_all[k_end], tau, abs_tol=1e-9):
        raise PreconditionError(f"rotation {tau} is not a node of the trajectory")

    vals = value_trajectory(trajectory, tables or ValueTables.build(growth, cfg))
    thin_nodes = [k for k in vals.thinning_nodes if k <= k_end]
    fert_nodes = [m for m in vals.fertilization_nodes if m <= k_end]
    if sorted(thin_nodes) != sorted(_nodes_for(schedule.thinning_times, times_all)):
        raise PreconditionError("trajectory thinnings disagree with the schedule")
    if sorted(fert_nodes) != sorted(_nodes_for(schedule.fertilization_times, times_all)):
        raise PreconditionError("trajectory fertilizations disagree with the schedule")

    step = float(times_all[1] - times_all[0]) if len(times_all) > 1 else 2.5
    juv = list(np.arange(0.0, a0, step))
    juv_times = juv + [a0] if a0 > 0.0 else [0.0]
    times = np.array(juv_times + list(times_all[1:k_end + 1]))
    n_juv = len(juv_times) - 1

    stock_l = np.zeros(len(times))  # left limit at node
    stock_r = np.zeros(len(times))  # right limit at node
    vol_l = np.zeros(len(times))
    vol_r = np.zeros(len(times))
    for i, ti in enumerate(juv_times):
        frac = ti / a0 if a0 > 0.0 else 1.0
        stock_l[i] = stock_r[i] = vals.stock_pre[0] * frac
        vol_l[i] = vol_r[i] = vals.volume_pre[0] * frac
    for k in range(0, k_end + 1):
        i = n_juv + k
        stock_l[i] = vals.stock_pre[k]
        stock_r[i] = vals.stock_post[k]
        vol_l[i] = vals.volume_pre[k]
        vol_r[i] = vals.volume_post[k]

    events = [LedgerEvent(0.0, "regeneration", "investment", cfg.regeneration_cost)]
    book_l = np.full(len(times), cfg.regeneration_cost)
    book_r = np.full(len(times), cfg.regeneration_cost)
    for k in thin_nodes:
        tk = float(times_all[k])
        events.append(LedgerEvent(tk, "thinning_revenue", "withdrawal",
                                  float(vals.revenue[k])))
        events.append(LedgerEvent(
            tk, "thinning_realization", "realization",
            float(vals.revenue[k] - (vals.stock_pre[k] - vals.stock_post[k]))))
    c = cfg.fertilization_cost
    for m in fert_nodes:
        tm = float(times_all[m])
        w = _write_off_node(m, thin_nodes)
        tw = float(times_all[w]) if w is not None else tau
        events.append(LedgerEvent(tm, "fertilization", "investment", c))
        events.append(LedgerEvent(tw, "fertilization_amortization", "amortization", -c))
        i_m, i_w = n_juv + m, (n_juv + w if w is not None else len(times) - 1)
        book_r[i_m:i_w] += c
        book_l[i_m + 1:i_w + 1] += c
    events.append(LedgerEvent(tau, "clearcut_revenue", "withdrawal",
                              float(vals.stock_pre[k_end] if k_end not in thin_nodes
                                    else vals.stock_post[k_end])))
    events.append(LedgerEvent(tau, "regeneration_amortization", "amortization",
                              -cfg.regeneration_cost))
    events.sort(key=lambda e: e.time)

    cap_l = cfg.bare_land_value + book_l + stock_l
    cap_r = cfg.bare_land_value + book_r + stock_r
    h = np.diff(times)
    slope = (stock_l[1:] - stock_r[:-1]) / h
    r = cfg.interest_rate
    cap_start, cap_end = cap_r[:-1], cap_l[1:]
    return Ledger(
        times=times,
        capital_start=cap_start,
        capital_end=cap_end,
        profit_start=slope - r * cap_start - cfg.operating_cost,
        profit_end=slope - r * cap_end - cfg.operating_cost,
        volume_start=vol_r[:-1],
        volume_end=vol_l[1:],
        events=tuple(events),
        bare_land_value=cfg.bare_land_value,
    )


def _nodes_for(event_times, times_all) -> list:
    a0 = float(times_all[0])
    step = float(times_all[1] - times_all[0]) if len(times_all) > 1 else 2.5
    return [int(round((t - a0) / step)) for t in event_times
            if t <= times_all[-1] + 1e-9]
