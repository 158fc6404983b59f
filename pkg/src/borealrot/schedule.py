"""Management schedules, thinning, and schedule simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .economics import (CycleExpectation, EconomicConfig, Ledger, ValueTables,
                        build_ledger, expectation_curve, value_trajectory)
from .errors import PreconditionError
from .growth import (ASSORTMENTS, MIDPOINTS, N_CLASSES, SPECIES, STEP_YEARS,
                     GrowthParams, StandState, run_kernel, species_index)

GAMMAS = (-2.0, -1.0, 0.0, 1.0, 2.0)
Q_MAX = 0.9


def on_grid(t: float, origin: float = 0.0, step: float = STEP_YEARS) -> bool:
    k = (t - origin) / step
    return abs(k - round(k)) < 1e-9


@dataclass(frozen=True)
class ThinningSpec:
    """One thinning.

    ``q`` maps species to the fraction of that species' basal area removed;
    species not listed are left alone.  Within a species the removal weight
    of a class is ``(d / d_qmd) ** gamma``.  ``fractions`` optionally gives
    explicit per-class removal fractions and then overrides ``q``/``gamma``.
    """

    time: float
    q: Mapping[str, float] = field(default_factory=dict)
    gamma: float = 0.0
    fractions: Optional[Mapping[str, Tuple[float, ...]]] = None

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "gamma", float(self.gamma))
        q = {sp: float(v) for sp, v in self.q.items()}
        for sp, v in q.items():
            species_index(sp)
            if not (0.0 <= v <= Q_MAX):
                raise PreconditionError(f"thinning intensity for {sp} must lie in [0, 0.9]")
        object.__setattr__(self, "q", q)
        if not math.isfinite(self.gamma):
            raise PreconditionError("allocation exponent must be finite")
        if self.fractions is not None:
            fr = {}
            for sp, vec in self.fractions.items():
                species_index(sp)
                vec = tuple(float(v) for v in vec)
                if len(vec) != N_CLASSES or not all(0.0 <= v <= 1.0 for v in vec):
                    raise PreconditionError(
                        f"explicit removal fractions for {sp} need {N_CLASSES} values in [0, 1]")
                fr[sp] = vec
            object.__setattr__(self, "fractions", fr)

    @classmethod
    def uniform(cls, time: float, q: float, gamma: float = 0.0,
                species: Sequence[str] = SPECIES) -> "ThinningSpec":
        return cls(time, {sp: q for sp in species}, gamma)

    def q_vector(self) -> np.ndarray:
        return np.array([self.q.get(sp, 0.0) for sp in SPECIES])

    def fraction_matrix(self) -> Optional[np.ndarray]:
        if self.fractions is None:
            return None
        out = np.zeros((len(SPECIES), N_CLASSES))
        for sp, vec in self.fractions.items():
            out[species_index(sp)] = vec
        return out

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"time": self.time, "q": dict(self.q), "gamma": self.gamma}
        if self.fractions is not None:
            d["fractions"] = {sp: list(v) for sp, v in self.fractions.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ThinningSpec":
        return cls(d["time"], d.get("q", {}), d.get("gamma", 0.0), d.get("fractions"))


@dataclass(frozen=True)
class Schedule:
    """Rotation length plus thinning and fertilization events (years of age)."""

    rotation: float
    thinnings: Tuple[ThinningSpec, ...] = ()
    fertilizations: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rotation", float(self.rotation))
        object.__setattr__(self, "thinnings", tuple(self.thinnings))
        object.__setattr__(self, "fertilizations",
                           tuple(sorted(float(t) for t in self.fertilizations)))
        if not (self.rotation > 0.0) or not on_grid(self.rotation):
            raise PreconditionError(
                f"rotation must be a positive multiple of 2.5 years, got {self.rotation}")
        times = [th.time for th in self.thinnings]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise PreconditionError("thinning times must be strictly increasing")
        for t in times + list(self.fertilizations):
            if not (0.0 < t <= self.rotation):
                raise PreconditionError(
                    f"event at t={t} lies outside (0, {self.rotation}]")
            if not on_grid(t):
                raise PreconditionError(f"event at t={t} is not on the 2.5-year grid")

    @property
    def thinning_times(self) -> Tuple[float, ...]:
        return tuple(th.time for th in self.thinnings)

    @property
    def fertilization_times(self) -> Tuple[float, ...]:
        return self.fertilizations

    @property
    def last_event(self) -> float:
        return max(self.thinning_times + self.fertilizations, default=0.0)

    def with_rotation(self, rotation: float) -> "Schedule":
        return Schedule(rotation, self.thinnings, self.fertilizations)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": 1,
            "kind": "schedule",
            "rotation": self.rotation,
            "thinnings": [th.to_dict() for th in self.thinnings],
            "fertilizations": list(self.fertilizations),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Schedule":
        return cls(d["rotation"],
                   tuple(ThinningSpec.from_dict(t) for t in d.get("thinnings", [])),
                   tuple(d.get("fertilizations", [])))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stand states on the step grid.

    ``pre[i]`` is the state at ``times[i]`` before events, ``post[i]`` after
    the thinning (if any) and then the fertilization (if any) at that node.
    """

    times: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    clock: np.ndarray
    initial: StandState
    thinning_nodes: Tuple[int, ...] = ()
    fertilization_nodes: Tuple[int, ...] = ()

    def state(self, i: int, after_events: bool = True) -> StandState:
        stems = self.post[i] if after_events else self.pre[i]
        return StandState(float(self.times[i]), np.maximum(stems, 0.0),
                          self.initial.site, float(self.clock[i]))

    def states(self) -> List[StandState]:
        return [self.state(i) for i in range(len(self.times))]

    def removed(self, i: int) -> np.ndarray:
        return self.pre[i] - self.post[i]


def thinning_removal(state: StandState, spec: ThinningSpec) -> np.ndarray:
    """Stems removed per species and class by ``spec``."""
    explicit = spec.fraction_matrix()
    if explicit is not None:
        return state.stems * explicit
    q = spec.q_vector()
    out = np.zeros_like(state.stems)
    for s in range(len(SPECIES)):
        f = kernels.thinning_fractions(state.stems[s], MIDPOINTS, float(q[s]), spec.gamma)
        out[s] = state.stems[s] * f
    return out


def removed_volumes(removed: np.ndarray, growth: GrowthParams) -> Dict[str, Dict[str, float]]:
    vol = removed * growth.volume_per_stem()
    saw = vol * growth.sawlog_share()
    return {sp: {"sawlog": float(np.sum(saw[i])), "pulp": float(np.sum(vol[i] - saw[i]))}
            for i, sp in enumerate(SPECIES)}


def apply_thinning(state: StandState, spec: ThinningSpec, growth: GrowthParams
                   ) -> Tuple[StandState, Dict[str, Dict[str, float]]]:
    """Thin ``state``; return the new state and the removed volumes (m^3/ha)."""
    removed = thinning_removal(state, spec)
    after = state.stems - removed
    if np.any(after < 0.0):
        raise PreconditionError("thinning produced negative stems")
    return (StandState(state.age, after, state.site, state.fert_remaining),
            removed_volumes(removed, growth))


def _node(t: float, a0: float, n_steps: int, what: str) -> int:
    if not on_grid(t, a0):
        raise PreconditionError(f"{what} at t={t} is not on the step grid from age {a0}")
    k = int(round((t - a0) / STEP_YEARS))
    if not (0 <= k <= n_steps):
        raise PreconditionError(
            f"{what} at t={t} lies outside the simulated span [{a0}, {a0 + n_steps * STEP_YEARS}]")
    return k


def simulate_trajectory(initial: StandState, thinnings: Sequence[ThinningSpec],
                        fertilizations: Sequence[float], growth: GrowthParams,
                        n_steps: int, backend=None) -> Trajectory:
    """Step ``initial`` forward ``n_steps`` times applying the events."""
    a0 = initial.age
    if not on_grid(a0):
        raise PreconditionError(f"initial age {a0} is not a multiple of 2.5 years")
    t_nodes = [_node(th.time, a0, n_steps, "thinning") for th in thinnings]
    f_nodes = sorted(_node(t, a0, n_steps, "fertilization") for t in fertilizations)
    # overlapping applications are rejected like apply_fertilization does
    clock0 = initial.fert_remaining
    for prev, cur in zip([None] + f_nodes, f_nodes):
        elapsed = (cur - prev) * STEP_YEARS if prev is not None else cur * STEP_YEARS
        remaining = growth.fertilization_years if prev is not None else clock0
        if elapsed < remaining:
            raise PreconditionError(
                "fertilization overlaps an active application")

    explicit = [k for k, th in enumerate(thinnings) if th.fractions is not None]
    if not explicit:
        pre, post, clock = run_kernel(
            initial, growth, n_steps,
            np.array(t_nodes, dtype=np.int64),
            np.array([th.q_vector() for th in thinnings]).reshape(-1, len(SPECIES)),
            np.array([th.gamma for th in thinnings]),
            np.array(f_nodes, dtype=np.int64), backend=backend)
    else:
        pre, post, clock = _simulate_segmented(initial, thinnings, t_nodes,
                                               f_nodes, growth, n_steps, backend)
    times = a0 + STEP_YEARS * np.arange(n_steps + 1)
    return Trajectory(times, pre, post, clock, initial, tuple(t_nodes), tuple(f_nodes))


def _simulate_segmented(initial, thinnings, t_nodes, f_nodes, growth, n_steps, backend):
    """Chain kernel calls around thinnings given by explicit fractions."""
    n_sp = len(SPECIES)
    pre = np.zeros((n_steps + 1, n_sp, N_CLASSES))
    post = np.zeros_like(pre)
    clock = np.zeros(n_steps + 1)
    state = initial
    start = 0
    cuts = sorted({k for k, th in zip(t_nodes, thinnings) if th.fractions is not None})
    for stop in cuts + [n_steps]:
        lo = start if start == 0 else start + 1  # node `start` is already final
        seg_t = [(k - start, th) for k, th in zip(t_nodes, thinnings)
                 if lo <= k <= stop and th.fractions is None]
        seg_f = [m - start for m in f_nodes if lo <= m <= stop]
        # explicit thinning and fertilization at the cut node are applied below
        if stop != n_steps:
            seg_f = [m for m in seg_f if m != stop - start]
        p, q, c = run_kernel(
            state, growth, stop - start,
            np.array([k for k, _ in seg_t], dtype=np.int64),
            np.array([th.q_vector() for _, th in seg_t]).reshape(-1, n_sp),
            np.array([th.gamma for _, th in seg_t]),
            np.array(seg_f, dtype=np.int64), backend=backend)
        off = lo - start
        pre[lo:stop + 1] = p[off:]
        post[lo:stop + 1] = q[off:]
        clock[lo:stop + 1] = c[off:]
        if stop == n_steps:
            break
        spec = next(th for k, th in zip(t_nodes, thinnings) if k == stop)
        stems = p[-1] - p[-1] * spec.fraction_matrix()
        fert = c[-1]
        if stop in f_nodes:
            fert = growth.fertilization_years
        post[stop] = stems
        clock[stop] = fert
        state = StandState(initial.age + stop * STEP_YEARS, stems, initial.site, fert)
        start = stop
    return pre, post, clock


@dataclass(frozen=True, eq=False)
class SimulationResult:
    trajectory: Trajectory
    ledger: Optional[Ledger]
    curve: Dict[str, np.ndarray]

    def expectations(self) -> List[CycleExpectation]:
        c = self.curve
        return [CycleExpectation(float(t), float(p), float(k), float(r), float(v))
                for t, p, k, r, v in zip(c["tau"], c["profit_rate"], c["capitalization"],
                                         c["return_rate"], c["volume"])]


def curve_mask(tau: np.ndarray, last_event: float, window: Tuple[float, float]) -> np.ndarray:
    lo, hi = window
    return (tau > last_event + 1e-9) & (tau >= lo - 1e-9) & (tau <= hi + 1e-9)


def simulate_schedule(initial: StandState, schedule: Schedule, growth: GrowthParams,
                      cfg: EconomicConfig, window: Optional[Tuple[float, float]] = None,
                      tables: Optional[ValueTables] = None, backend=None) -> SimulationResult:
    """Simulate ``schedule`` and evaluate the cycle expectations.

    The curve holds one point per step-end rotation age in ``window``
    (default: up to ``schedule.rotation``) that falls after the last event.
    The ledger is that of ``schedule.rotation``.
    """
    a0 = initial.age
    if schedule.thinnings or schedule.fertilizations:
        first = min(schedule.thinning_times + schedule.fertilizations)
        if first < a0:
            raise PreconditionError(
                f"first event at t={first} precedes the initial age {a0}")
    lo, hi = window if window is not None else (a0, schedule.rotation)
    horizon = max(hi, schedule.rotation)
    if horizon <= a0:
        raise PreconditionError(f"nothing to simulate: horizon {horizon} <= age {a0}")
    n_steps = int(round((horizon - a0) / STEP_YEARS))
    tables = tables or ValueTables.build(growth, cfg)
    traj = simulate_trajectory(initial, schedule.thinnings, schedule.fertilizations,
                               growth, n_steps, backend=backend)
    full = expectation_curve(value_trajectory(traj, tables), cfg, backend)
    mask = curve_mask(full["tau"], schedule.last_event, (lo, hi))
    curve = {k: v[mask] for k, v in full.items()}
    ledger = None
    if schedule.rotation > a0:
        ledger = build_ledger(traj, schedule, cfg, growth, tables)
    return SimulationResult(traj, ledger, curve)
