"""Diameter-class matrix growth model.

A stand is a ``(species, diameter class)`` array of stems per hectare.  One
growth step covers 30 months: each class survives with a logistic
probability, a fraction of the survivors moves up one class according to the
diameter increment, and ingrowth enters the smallest class of every species
already present in the stand.  Fertilization
raises the site index used by all three functions for a fixed number of
years.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from . import kernels
from .errors import PreconditionError, SchemaError

SPECIES: Tuple[str, ...] = ("spruce", "pine", "birch", "other")
ASSORTMENTS: Tuple[str, ...] = ("sawlog", "pulp")
N_CLASSES = 12
CLASS_WIDTH = 5.0
MIDPOINTS = CLASS_WIDTH * np.arange(1, N_CLASSES + 1, dtype=float)
STEP_MONTHS = 30
STEP_YEARS = STEP_MONTHS / 12.0
FERTILIZATION_YEARS = 10.0
SITE_CLASSES = ("mesic",)
SOILS = ("mineral",)


def species_index(name: str) -> int:
    try:
        return SPECIES.index(name)
    except ValueError:
        raise PreconditionError(f"unknown species {name!r}") from None


@dataclass(frozen=True)
class SiteDescriptor:
    """Site productivity.

    ``site_index`` is the dominant height (m) at breast-height age 40.
    """

    site_index: float
    site_class: str = "mesic"
    soil: str = "mineral"

    def __post_init__(self):
        if not (5.0 < self.site_index < 40.0):
            raise PreconditionError(
                f"site_index must lie in (5, 40), got {self.site_index}")
        if self.site_class not in SITE_CLASSES:
            raise PreconditionError(f"unsupported site class {self.site_class!r}")
        if self.soil not in SOILS:
            raise PreconditionError(f"unsupported soil {self.soil!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StandState:
    """Stand at one instant.

    ``stems`` has shape ``(len(SPECIES), N_CLASSES)``, stems/ha per class.
    ``fert_remaining`` counts the years of active fertilization effect.
    """

    age: float
    stems: np.ndarray
    site: SiteDescriptor
    fert_remaining: float = 0.0

    def __post_init__(self):
        stems = np.asarray(self.stems, dtype=float)
        if stems.shape != (len(SPECIES), N_CLASSES):
            raise PreconditionError(
                f"stems must have shape {(len(SPECIES), N_CLASSES)}, got {stems.shape}")
        if not np.all(np.isfinite(stems)) or np.any(stems < 0.0):
            raise PreconditionError("stems must be finite and non-negative")
        if not (self.age >= 0.0):
            raise PreconditionError(f"age must be >= 0, got {self.age}")
        if not (0.0 <= self.fert_remaining <= FERTILIZATION_YEARS):
            raise PreconditionError(
                f"fert_remaining must lie in [0, 10], got {self.fert_remaining}")
        object.__setattr__(self, "stems", _frozen(stems))
        object.__setattr__(self, "age", float(self.age))
        object.__setattr__(self, "fert_remaining", float(self.fert_remaining))

    @classmethod
    def from_distributions(cls, age: float, distributions: Mapping[str, Any],
                           site: SiteDescriptor, fert_remaining: float = 0.0
                           ) -> "StandState":
        stems = np.zeros((len(SPECIES), N_CLASSES))
        for name, values in distributions.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (N_CLASSES,):
                raise PreconditionError(
                    f"{name}: expected {N_CLASSES} diameter classes, got {values.shape}")
            stems[species_index(name)] = values
        return cls(age, stems, site, fert_remaining)

    def distribution(self, species: str) -> np.ndarray:
        return self.stems[species_index(species)]

    @property
    def distributions(self) -> Dict[str, np.ndarray]:
        return {sp: self.stems[i] for i, sp in enumerate(SPECIES)
                if np.any(self.stems[i] > 0.0)}

    @property
    def basal_area(self) -> float:
        return float(np.sum(self.stems * basal_area_per_stem()))

    @property
    def total_stems(self) -> float:
        return float(np.sum(self.stems))

    def __eq__(self, other):
        if not isinstance(other, StandState):
            return NotImplemented
        return (self.age == other.age and self.site == other.site
                and self.fert_remaining == other.fert_remaining
                and np.array_equal(self.stems, other.stems))

    __hash__ = None


def basal_area_per_stem() -> np.ndarray:
    """Basal area (m^2) of one stem at each class midpoint."""
    return np.pi * (MIDPOINTS / 200.0) ** 2


@dataclass(frozen=True)
class SpeciesParams:
    """Coefficients for one species.

    increment : annual diameter increment (cm/a),
        ``b0 + b1*d + b2*d^2 + b3*BA + b4*SI``, truncated at 0.
    survival : annual survival logit, ``c0 + c1*d + c2*d^2 + c3*BA + c4*SI``.
    ingrowth : stems/ha/a entering the smallest class,
        ``g0 + g1*BA + g2*SI``, truncated at 0.
    volume : ``(a, b)`` of the per-stem volume ``a * d**b`` (m^3, d in cm).
    sawlog_max : sawlog share of stem volume at and above the ramp top.
    """

    increment: Tuple[float, float, float, float, float]
    survival: Tuple[float, float, float, float, float]
    ingrowth: Tuple[float, float, float]
    volume: Tuple[float, float]
    sawlog_max: float

    def __post_init__(self):
        for name, n in (("increment", 5), ("survival", 5), ("ingrowth", 3), ("volume", 2)):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != n:
                raise PreconditionError(f"{name} needs {n} coefficients, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise PreconditionError(f"non-finite {name} coefficient")
            object.__setattr__(self, name, vals)
        if self.increment[4] < 0.0:
            raise PreconditionError(
                "increment must be non-decreasing in site index (b4 >= 0)")
        if self.volume[0] < 0.0:
            raise PreconditionError("volume scale must be >= 0")
        if not (0.0 <= self.sawlog_max <= 1.0):
            raise PreconditionError("sawlog_max must lie in [0, 1]")


@dataclass(frozen=True)
class GrowthParams:
    """Coefficient sets for all species plus fertilization response."""

    species: Mapping[str, SpeciesParams]
    fertilization_bump: float = 5.0
    fertilization_years: float = FERTILIZATION_YEARS
    sawlog_ramp: Tuple[float, float] = (17.0, 28.0)
    step_months: int = STEP_MONTHS
    notes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        missing = [sp for sp in SPECIES if sp not in self.species]
        if missing:
            raise PreconditionError(f"growth params missing species {missing}")
        if self.step_months != STEP_MONTHS:
            raise PreconditionError("the growth step is fixed at 30 months")
        if not (math.isfinite(self.fertilization_bump) and self.fertilization_bump >= 0.0):
            raise PreconditionError("fertilization bump must be finite and >= 0")
        if self.fertilization_years != FERTILIZATION_YEARS:
            raise PreconditionError("fertilization effect lasts 10 years")
        lo, hi = self.sawlog_ramp
        if not (0.0 <= lo < hi):
            raise PreconditionError("sawlog ramp needs 0 <= start < end")

    @property
    def step_years(self) -> float:
        return self.step_months / 12.0

    def coefficient_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        inc = np.array([self.species[sp].increment for sp in SPECIES])
        surv = np.array([self.species[sp].survival for sp in SPECIES])
        ingr = np.array([self.species[sp].ingrowth for sp in SPECIES])
        return inc, surv, ingr

    def volume_per_stem(self) -> np.ndarray:
        """Stem volume (m^3) per species and class midpoint."""
        out = np.empty((len(SPECIES), N_CLASSES))
        for i, sp in enumerate(SPECIES):
            a, b = self.species[sp].volume
            out[i] = a * MIDPOINTS ** b
        return out

    def sawlog_share(self) -> np.ndarray:
        lo, hi = self.sawlog_ramp
        ramp = np.clip((MIDPOINTS - lo) / (hi - lo), 0.0, 1.0)
        return np.array([self.species[sp].sawlog_max * ramp for sp in SPECIES])

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GrowthParams":
        species = {}
        for sp, block in data["species"].items():
            species[sp] = SpeciesParams(
                increment=tuple(block["increment"]),
                survival=tuple(block["survival"]),
                ingrowth=tuple(block["ingrowth"]),
                volume=tuple(block["volume"]),
                sawlog_max=float(block["sawlog_max"]),
            )
        fert = data.get("fertilization", {})
        return cls(
            species=species,
            fertilization_bump=float(fert.get("site_index_bump", 5.0)),
            fertilization_years=float(fert.get("duration_years", FERTILIZATION_YEARS)),
            sawlog_ramp=tuple(data.get("sawlog_ramp", (17.0, 28.0))),
            step_months=int(data.get("step_months", STEP_MONTHS)),
            notes=dict(data.get("notes", {})),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": 1,
            "kind": "growth_params",
            "notes": dict(self.notes),
            "step_months": self.step_months,
            "fertilization": {"site_index_bump": self.fertilization_bump,
                              "duration_years": self.fertilization_years},
            "sawlog_ramp": list(self.sawlog_ramp),
            "species": {
                sp: {"increment": list(p.increment), "survival": list(p.survival),
                     "ingrowth": list(p.ingrowth), "volume": list(p.volume),
                     "sawlog_max": p.sawlog_max}
                for sp, p in self.species.items()
            },
        }

    @classmethod
    def default(cls) -> "GrowthParams":
        from .io import load_growth_params, default_data_path
        return load_growth_params(default_data_path("growth_params.json"))


def effective_site_index(state: StandState, bump: float = 5.0) -> float:
    """Site index seen by the growth functions (raised while fertilized)."""
    if state.fert_remaining > 0.0:
        return state.site.site_index + bump
    return state.site.site_index


_NO_EVENTS = (np.zeros(0, dtype=np.int64), np.zeros((0, len(SPECIES))),
              np.zeros(0), np.zeros(0, dtype=np.int64))


def run_kernel(state: StandState, params: GrowthParams, n_steps: int,
               thin_steps=None, thin_q=None, thin_gamma=None, fert_steps=None,
               backend=None):
    """Call the growth kernel on ``state``; see ``_kernels_py.simulate``."""
    impl = backend or kernels
    inc, surv, ingr = params.coefficient_arrays()
    ts, tq, tg, fs = _NO_EVENTS
    if thin_steps is not None:
        ts, tq, tg = thin_steps, thin_q, thin_gamma
    if fert_steps is not None:
        fs = fert_steps
    return impl.simulate(
        state.stems, int(n_steps), state.site.site_index, state.fert_remaining,
        inc, surv, ingr, MIDPOINTS, CLASS_WIDTH, params.step_years,
        params.fertilization_bump, params.fertilization_years,
        np.asarray(ts, dtype=np.int64), np.asarray(tq, dtype=float),
        np.asarray(tg, dtype=float), np.asarray(fs, dtype=np.int64))


def advance_step(state: StandState, params: GrowthParams) -> StandState:
    """Grow the stand by one 30-month step."""
    _, post, clock = run_kernel(state, params, 1)
    return StandState(state.age + params.step_years, post[1], state.site,
                      float(clock[1]))


def apply_fertilization(state: StandState,
                        duration: float = FERTILIZATION_YEARS) -> StandState:
    if state.fert_remaining > 0.0:
        raise PreconditionError(
            "fertilization overlaps an active application "
            f"({state.fert_remaining} years remaining)")
    return replace(state, fert_remaining=float(duration))


def stand_metrics(state: StandState, params: GrowthParams) -> Dict[str, Any]:
    """Basal area, stem count and volume by species and assortment."""
    vol = state.stems * params.volume_per_stem()
    saw = vol * params.sawlog_share()
    volume = {}
    for i, sp in enumerate(SPECIES):
        volume[sp] = {"sawlog": float(np.sum(saw[i])),
                      "pulp": float(np.sum(vol[i] - saw[i]))}
    return {
        "basal_area": state.basal_area,
        "stems": state.total_stems,
        "volume": volume,
        "total_volume": float(np.sum(vol)),
    }
