"""Rotation choice and incremental thinning search.

Starting from the unthinned stand, thinnings are added one at a time.  Each
proposal enumerates the new thinning's (time, intensity, allocation) grid
with the accepted thinnings held fixed, then re-tunes all thinnings by
coordinate descent.  A proposal is kept only if the best return rate over
rotation ages improves by more than ``epsilon``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .economics import (CycleExpectation, EconomicConfig, TrajectoryValues, ValueTables,
                        expectation_curve, value_trajectory)
from .errors import PreconditionError
from .growth import CLASS_WIDTH, MIDPOINTS, SPECIES, STEP_YEARS, GrowthParams, StandState
from .schedule import (GAMMAS, Q_MAX, Schedule, ThinningSpec, curve_mask, on_grid,
                       simulate_trajectory)

log = logging.getLogger(__name__)

# (time, per-species q, gamma); q is indexed like SPECIES
Candidate = Tuple[float, Tuple[float, ...], float]


@dataclass(frozen=True)
class OptimizationConfig:
    """Search discretization.

    ``thinning_times``/``intensities`` override the default grids (every
    2.5 years from the initial age to ``max_rotation - 2.5``, and
    ``q_step..q_max``).  With ``species_allocation="independent"`` each
    present species gets its own intensity coordinate; otherwise one
    intensity applies to all species.
    """

    min_rotation: float = 0.0
    max_rotation: float = 120.0
    q_step: float = 0.05
    q_max: float = Q_MAX
    gammas: Tuple[float, ...] = GAMMAS
    thinning_times: Optional[Tuple[float, ...]] = None
    intensities: Optional[Tuple[float, ...]] = None
    epsilon: float = 1e-5
    max_thinnings: int = 3
    species_allocation: str = "independent"
    max_joint_candidates: int = 10_000
    max_refine_sweeps: int = 50

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise PreconditionError("epsilon must be > 0")
        if self.species_allocation not in ("independent", "uniform"):
            raise PreconditionError("species_allocation must be 'independent' or 'uniform'")
        if not (0.0 < self.q_step <= self.q_max <= Q_MAX):
            raise PreconditionError("need 0 < q_step <= q_max <= 0.9")
        if not on_grid(self.max_rotation):
            raise PreconditionError("max_rotation must be on the 2.5-year grid")
        if self.max_thinnings < 0:
            raise PreconditionError("max_thinnings must be >= 0")

    def q_grid(self) -> Tuple[float, ...]:
        if self.intensities is not None:
            return tuple(sorted(float(q) for q in self.intensities))
        n = int(math.floor(self.q_max / self.q_step + 1e-9))
        return tuple(round(k * self.q_step, 10) for k in range(1, n + 1))

    def time_grid(self, initial_age: float) -> Tuple[float, ...]:
        if self.thinning_times is not None:
            return tuple(sorted(float(t) for t in self.thinning_times))
        n = int(round((self.max_rotation - initial_age) / STEP_YEARS))
        return tuple(initial_age + STEP_YEARS * k for k in range(n))

    def window(self, initial_age: float) -> Tuple[float, float]:
        return (max(self.min_rotation, initial_age), self.max_rotation)


def optimal_rotation(curve: Sequence[CycleExpectation]) -> float:
    """Rotation with the greatest expected return rate; ties go to the shortest."""
    if not curve:
        raise PreconditionError("empty curve")
    best = None
    for pt in sorted(curve, key=lambda p: p.tau):
        r = pt.expected_return_rate
        if r != r:
            continue
        if best is None or r > best.expected_return_rate:
            best = pt
    if best is None:
        raise PreconditionError("curve has no finite return rate")
    return best.tau


def curve_argmax(tau: np.ndarray, r: np.ndarray) -> Tuple[float, float]:
    """``(max r, tau)`` over finite points; first (shortest) on ties."""
    best_r, best_t = -math.inf, math.nan
    for t, v in zip(tau, r):
        if v == v and v > best_r:
            best_r, best_t = float(v), float(t)
    return best_r, best_t


class Evaluator:
    """Curve evaluation of thinning sets for one stand, with memoization."""

    def __init__(self, initial: StandState, growth: GrowthParams, cfg: EconomicConfig,
                 opt: OptimizationConfig, fertilizations: Sequence[float] = (),
                 horizon: Optional[float] = None, backend=None):
        self.initial = initial
        self.growth = growth
        self.cfg = cfg
        self.opt = opt
        self.fertilizations = tuple(fertilizations)
        self.window = opt.window(initial.age)
        horizon = max(self.window[1], horizon or 0.0)
        self.n_steps = int(round((horizon - initial.age) / STEP_YEARS))
        self.tables = ValueTables.build(growth, cfg)
        self.backend = backend
        self.present = tuple(i for i in range(len(SPECIES))
                             if np.any(initial.stems[i] > 0.0))
        self._cache: Dict[Tuple[Candidate, ...], Tuple[float, float]] = {}
        self.evaluations = 0
        self._prepare()

    def _prepare(self):
        # the unthinned run with the fixed fertilizations; candidates restart
        # from a stored run of their leading thinnings (at worst this one)
        impl = self.backend or kernels
        self._impl = impl
        self._coef = self.growth.coefficient_arrays()
        self._f_nodes = np.array(sorted(int(round((t - self.initial.age) / STEP_YEARS))
                                        for t in self.fertilizations), dtype=np.int64)
        base = simulate_trajectory(self.initial, (), self.fertilizations, self.growth,
                                   self.n_steps, backend=self.backend)
        self._cc = self.tables.clearcut.ravel()
        self._th = self.tables.thinning.ravel()
        self._vol = self.tables.volume.ravel()
        self._times = base.times
        self._last_fert = max(self.fertilizations, default=-math.inf)
        self._checkpoints = {(): (base.pre, base.clock, value_trajectory(base, self.tables))}

    def checkpoint(self, cands: Sequence[Candidate]) -> None:
        """Store the run of ``cands`` for reuse as a prefix."""
        key = tuple(sorted(cands))
        if key in self._checkpoints:
            return
        if len(self._checkpoints) > 512:
            self._checkpoints = {(): self._checkpoints[()]}
        self._checkpoints[key] = self._run(key, full=True)

    def _run(self, cands: Tuple[Candidate, ...], full: bool = False):
        a0 = self.initial.age
        nodes = [int(round((t - a0) / STEP_YEARS)) for t, _, _ in cands]
        j = len(cands)
        while tuple(cands[:j]) not in self._checkpoints:
            j -= 1
        pre0, clock0, v0 = self._checkpoints[tuple(cands[:j])]
        if j == len(cands):
            return pre0, clock0, v0
        e = nodes[j]
        fert = self.initial.fert_remaining if e == 0 else max(0.0, clock0[e - 1] - STEP_YEARS)
        inc, surv, ingr = self._coef
        g = self.growth
        rest = cands[j:]
        pre, post, clock = self._impl.simulate(
            pre0[e], self.n_steps - e, self.initial.site.site_index, fert,
            inc, surv, ingr, MIDPOINTS, CLASS_WIDTH, g.step_years,
            g.fertilization_bump, g.fertilization_years,
            np.array(nodes[j:], dtype=np.int64) - e,
            np.array([q for _, q, _ in rest], dtype=float),
            np.array([gm for _, _, gm in rest], dtype=float),
            self._f_nodes[self._f_nodes >= e] - e)
        m = pre.shape[0]
        fp = pre.reshape(m, -1)
        fq = post.reshape(m, -1)
        values = TrajectoryValues(
            times=self._times,
            stock_pre=np.concatenate((v0.stock_pre[:e], fp @ self._cc)),
            stock_post=np.concatenate((v0.stock_post[:e], fq @ self._cc)),
            volume_pre=np.concatenate((v0.volume_pre[:e], fp @ self._vol)),
            volume_post=np.concatenate((v0.volume_post[:e], fq @ self._vol)),
            revenue=np.concatenate((v0.revenue[:e], (fp - fq) @ self._th)),
            thinning_nodes=tuple(nodes),
            fertilization_nodes=tuple(int(k) for k in self._f_nodes),
        )
        if not full:
            return None, None, values
        return (np.concatenate((pre0[:e], pre)), np.concatenate((clock0[:e], clock)), values)

    def specs(self, cands: Sequence[Candidate]) -> Tuple[ThinningSpec, ...]:
        return tuple(ThinningSpec(t, {SPECIES[i]: q[i] for i in self.present}, g)
                     for t, q, g in sorted(cands))

    def curve(self, cands: Sequence[Candidate]) -> Dict[str, np.ndarray]:
        specs = self.specs(cands)
        traj = simulate_trajectory(self.initial, specs, self.fertilizations,
                                   self.growth, self.n_steps, backend=self.backend)
        full = expectation_curve(value_trajectory(traj, self.tables), self.cfg, self.backend)
        last = max([s.time for s in specs] + list(self.fertilizations), default=0.0)
        mask = curve_mask(full["tau"], last, self.window)
        return {k: v[mask] for k, v in full.items()}

    def objective(self, cands: Sequence[Candidate]) -> Tuple[float, float]:
        key = tuple(sorted(cands))
        hit = self._cache.get(key)
        if hit is None:
            full = expectation_curve(self._run(key)[2], self.cfg, self._impl)
            last = max(key[-1][0] if key else -math.inf, self._last_fert)
            tau = full["tau"]
            r = np.where(curve_mask(tau, last, self.window), full["return_rate"], np.nan)
            r = np.where(np.isnan(r), -np.inf, r)
            i = int(np.argmax(r))
            hit = (float(r[i]), float(tau[i])) if np.isfinite(r[i]) else (-math.inf, math.nan)
            self._cache[key] = hit
            self.evaluations += 1
        return hit


@dataclass
class SearchTrace:
    rows: List[Tuple[int, str, float, float]] = field(default_factory=list)

    def add(self, iteration: int, description: str, value: float, tau: float):
        self.rows.append((iteration, description, value, tau))


@dataclass(frozen=True, eq=False)
class SearchResult:
    schedule: Schedule
    best_return_rate: float
    trace: SearchTrace
    evaluations: int
    first_accepted: Optional[ThinningSpec] = None


def describe(spec: ThinningSpec) -> str:
    qs = ",".join(f"{sp}={q:g}" for sp, q in spec.q.items())
    return f"t={spec.time:g};gamma={spec.gamma:g};q[{qs}]"


class _Search:
    def __init__(self, ev: Evaluator):
        self.ev = ev
        self.opt = ev.opt
        self.qs = self.opt.q_grid()
        self.times = tuple(t for t in self.opt.time_grid(ev.initial.age)
                           if t >= ev.initial.age - 1e-9)
        self.gammas = tuple(sorted(self.opt.gammas))
        self.n_present = len(ev.present)

    def _qvec(self, values: Sequence[float]) -> Tuple[float, ...]:
        out = [0.0] * len(SPECIES)
        for i, v in zip(self.ev.present, values):
            out[i] = v
        return tuple(out)

    def _intensity_options(self) -> List[Tuple[float, ...]]:
        per_species = (self.opt.species_allocation == "independent" and self.n_present > 1)
        if per_species:
            size = len(self.times) * len(self.gammas) * len(self.qs) ** self.n_present
            if size <= self.opt.max_joint_candidates:
                return [self._qvec(v) for v in itertools.product(self.qs, repeat=self.n_present)]
        return [self._qvec([q] * self.n_present) for q in self.qs]

    def joint(self, fixed: List[Candidate]) -> Tuple[float, float, Optional[Candidate]]:
        """Exhaustive search over one new thinning; order breaks ties."""
        taken = {c[0] for c in fixed}
        fixed = sorted(fixed)
        for j in range(1, len(fixed) + 1):
            self.ev.checkpoint(fixed[:j])
        best = (-math.inf, math.nan, None)
        for t in self.times:
            if t in taken:
                continue
            for q in self._intensity_options():
                for g in self.gammas:
                    cand = (t, q, g)
                    r, tau = self.ev.objective(fixed + [cand])
                    if r > best[0]:
                        best = (r, tau, cand)
        return best

    def _coordinate_moves(self, cands: List[Candidate], idx: int):
        t, q, g = cands[idx]
        yield "time", [(tt, q, g) for tt in self._time_options(cands, idx)]
        yield "gamma", [(t, q, gg) for gg in self.gammas]
        if self.opt.species_allocation == "independent" and self.n_present > 1:
            for i in self.ev.present:
                opts = []
                for qq in self.qs:
                    qv = list(q)
                    qv[i] = qq
                    opts.append((t, tuple(qv), g))
                yield f"q[{SPECIES[i]}]", opts
        else:
            yield "q", [(t, self._qvec([qq] * self.n_present), g) for qq in self.qs]

    def _time_options(self, cands: List[Candidate], idx: int) -> List[float]:
        lo = cands[idx - 1][0] if idx > 0 else -math.inf
        hi = cands[idx + 1][0] if idx + 1 < len(cands) else math.inf
        return [tt for tt in self.times if lo < tt < hi]

    def refine(self, cands: List[Candidate], value: float) -> Tuple[List[Candidate], float, float]:
        cands = sorted(cands)
        tau = self.ev.objective(cands)[1]
        eps = self.opt.epsilon
        for _ in range(self.opt.max_refine_sweeps):
            moved = False
            for idx in range(len(cands)):
                self.ev.checkpoint(cands[:idx])
                for _name, options in self._coordinate_moves(cands, idx):
                    best_local = (value, None, tau)
                    for alt in options:
                        trial = cands[:idx] + [alt] + cands[idx + 1:]
                        r, tr = self.ev.objective(trial)
                        if r > best_local[0]:
                            best_local = (r, alt, tr)
                    if best_local[1] is not None and best_local[0] > value + eps:
                        cands = sorted(cands[:idx] + [best_local[1]] + cands[idx + 1:])
                        value, tau = best_local[0], best_local[2]
                        moved = True
            if not moved:
                break
        return cands, value, tau


def greedy_thinning_search(initial: StandState, growth: GrowthParams, cfg: EconomicConfig,
                           opt: Optional[OptimizationConfig] = None,
                           fertilizations: Sequence[float] = (),
                           backend=None) -> SearchResult:
    """Add thinnings one by one while each improves the best return rate.

    ``fertilizations`` are held fixed throughout.  Returns the accepted
    schedule with its return-maximizing rotation.
    """
    opt = opt or OptimizationConfig()
    ev = Evaluator(initial, growth, cfg, opt, fertilizations, backend=backend)
    search = _Search(ev)
    trace = SearchTrace()
    accepted: List[Candidate] = []
    value, tau = ev.objective(accepted)
    if not math.isfinite(value):
        raise PreconditionError("no feasible rotation age in the search window")
    trace.add(0, "no thinning", value, tau)
    first: Optional[ThinningSpec] = None
    iteration = 0
    while len(accepted) < opt.max_thinnings:
        iteration += 1
        r_new, _, cand = search.joint(accepted)
        if cand is None:
            break
        proposal, r_ref, tau_ref = search.refine(accepted + [cand], r_new)
        log.debug("proposal %d: joint %.6g refined %.6g (current %.6g)",
                  iteration, r_new, r_ref, value)
        if not r_ref > value + opt.epsilon:
            break
        accepted, value, tau = proposal, r_ref, tau_ref
        if first is None:
            first = ev.specs(accepted)[0]
        specs = ev.specs(accepted)
        trace.add(iteration, " | ".join(describe(s) for s in specs), value, tau)
    schedule = Schedule(tau, ev.specs(accepted), tuple(fertilizations))
    return SearchResult(schedule, value, trace, ev.evaluations, first)

