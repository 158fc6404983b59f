"""Synthetic spruce-dominated mesic stands.

Aggregates are drawn inside the ranges of the reference field stands (age
30-45 a, 1655-2451 stems/ha, basal area 29-49 m^2/ha); class distributions
are discretized normals whose location is solved so that the basal area hits
its drawn target.
"""
from __future__ import annotations

from typing import List

import numpy as np

from .growth import (MIDPOINTS, N_CLASSES, SPECIES, SiteDescriptor, StandState,
                     basal_area_per_stem)
from .io import StandFile

AGE_RANGE = (30.0, 45.0)
STEMS_RANGE = (1655.0, 2451.0)
BA_RANGE = (29.0, 49.0)
SITE_INDEX_RANGE = (24.0, 28.0)

# mean diameter of each species relative to spruce
_REL_SIZE = {"spruce": 1.0, "pine": 1.1, "birch": 0.9, "other": 0.8}


def _shape(mu: float, rel: float) -> np.ndarray:
    m = mu * rel
    w = np.exp(-0.5 * ((MIDPOINTS - m) / (0.35 * m)) ** 2)
    return w / w.sum()


def _stand_stems(shares: dict, n_total: float, mu: float) -> np.ndarray:
    stems = np.zeros((len(SPECIES), N_CLASSES))
    for i, sp in enumerate(SPECIES):
        if shares.get(sp, 0.0) > 0.0:
            stems[i] = n_total * shares[sp] * _shape(mu, _REL_SIZE[sp])
    return stems


def _solve_location(shares: dict, n_total: float, ba_target: float) -> float:
    ba = basal_area_per_stem()
    lo, hi = 3.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(_stand_stems(shares, n_total, mid) * ba) < ba_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_stand(rng: np.random.Generator, stand_id: str, note: str = "") -> StandFile:
    ages = np.arange(AGE_RANGE[0], AGE_RANGE[1] + 1e-9, 2.5)
    age = float(rng.choice(ages))
    # margins keep the aggregates inside the ranges after rounding
    n_total = float(rng.uniform(STEMS_RANGE[0] + 10.0, STEMS_RANGE[1] - 10.0))
    ba_target = float(rng.uniform(BA_RANGE[0] + 0.5, BA_RANGE[1] - 0.5))
    si = float(np.round(rng.uniform(*SITE_INDEX_RANGE) * 2.0) / 2.0)
    spruce = float(rng.uniform(0.6, 0.85))
    pine_part = float(rng.uniform(0.2, 0.8))
    shares = {"spruce": spruce, "pine": (1.0 - spruce) * pine_part,
              "birch": (1.0 - spruce) * (1.0 - pine_part)}
    mu = _solve_location(shares, n_total, ba_target)
    stems = np.round(_stand_stems(shares, n_total, mu), 1)
    state = StandState(age, stems, SiteDescriptor(si))
    provenance = ("synthetic stand drawn from the reference aggregate ranges "
                  "(age 30-45 a, 1655-2451 stems/ha, basal area 29-49 m2/ha)")
    if note:
        provenance = f"{provenance}; {note}"
    return StandFile(stand_id, state, provenance)


def generate_stands(seed: int, count: int) -> List[StandFile]:
    """``count`` stands, deterministic for a given ``seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return [generate_stand(rng, f"synthetic-{seed}-{i + 1}",
                           note=f"gen-stands seed={seed} index={i + 1}")
            for i in range(count)]


def check_ranges(state: StandState) -> bool:
    """True when the stand's aggregates lie inside the reference ranges."""
    return (AGE_RANGE[0] <= state.age <= AGE_RANGE[1]
            and STEMS_RANGE[0] <= state.total_stems <= STEMS_RANGE[1]
            and BA_RANGE[0] <= state.basal_area <= BA_RANGE[1])
