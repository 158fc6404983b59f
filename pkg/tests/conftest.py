import math
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import settings

from borealrot.economics import EconomicConfig, Ledger, LedgerEvent
from borealrot.growth import MIDPOINTS, SPECIES, GrowthParams, SiteDescriptor, SpeciesParams, StandState
from borealrot.io import bundled_stands
from borealrot.optimizer import greedy_thinning_search
from borealrot.scenarios import NotApplicable, ScenarioKind, run_scenario

settings.register_profile("ci", deadline=None, derandomize=True)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def growth():
    return GrowthParams.default()


@pytest.fixture(scope="session")
def econ():
    return EconomicConfig.default()


@pytest.fixture(scope="session")
def stands():
    return bundled_stands()


def make_params(increment=(0.0, 0.0, 0.0, 0.0, 0.0), survival=(50.0, 0.0, 0.0, 0.0, 0.0),
                ingrowth=(0.0, 0.0, 0.0), bump=5.0):
    """Same coefficients for every species; defaults give the identity step."""
    sp = SpeciesParams(increment, survival, ingrowth, (1e-4, 2.6), 0.8)
    return GrowthParams({name: sp for name in SPECIES}, fertilization_bump=bump)


def single_class_state(stems=1000.0, cls=3, species="spruce", age=40.0, si=26.0, fert=0.0):
    x = np.zeros((len(SPECIES), len(MIDPOINTS)))
    x[SPECIES.index(species), cls] = stems
    return StandState(age, x, SiteDescriptor(si), fert)


def logit(p):
    return math.log(p / (1.0 - p))


@pytest.fixture(scope="session")
def bundled_results(stands, growth, econ):
    """Baseline search plus all four scenarios for every bundled stand."""
    out = {}
    for st in stands:
        base = greedy_thinning_search(st.state, growth, econ)
        per = {"baseline": base}
        for kind in ScenarioKind:
            try:
                per[kind] = run_scenario(kind, st.state, growth, econ, baseline=base)
            except NotApplicable:
                per[kind] = None
        out[st.stand_id] = per
    return out


SMALL_OPTIMIZER = {"max_rotation": 90.0, "q_step": 0.3, "gammas": [0.0, 1.0],
                   "max_thinnings": 2, "species_allocation": "uniform"}


def write_small_manifest(folder, count=2, **extra):
    """Manifest over the first ``count`` bundled stands with a coarse search."""
    import json
    from borealrot.io import default_data_path
    stands = [str(default_data_path(f"stands/synthetic-1-{i}.json")) for i in range(1, count + 1)]
    doc = {"schema_version": 1, "kind": "manifest", "stands": stands,
           "scenarios": ["AfterFirstThinning", "AfterSecondThinning",
                         "TenYearsBeforeMaturity", "AtMaturityExtendTen"],
           "seed": 1, "optimizer": SMALL_OPTIMIZER, **extra}
    path = folder / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def random_ledger(rng):
    n = int(rng.integers(1, 60))
    h = rng.uniform(0.1, 5.0, size=n)
    times = np.concatenate(([0.0], np.cumsum(h)))
    pieces = [rng.uniform(-500, 2000, size=n) for _ in range(6)]
    pieces[0] = rng.uniform(100, 20000, size=n)  # capital stays positive
    pieces[1] = rng.uniform(100, 20000, size=n)
    events = tuple(LedgerEvent(float(rng.uniform(0, times[-1])), "x",
                               str(rng.choice(["amortization", "realization", "withdrawal"])),
                               float(rng.uniform(-2000, 2000)))
                   for _ in range(int(rng.integers(0, 5))))
    return Ledger(times, *pieces, events=events)


def oracle(times, start, end, atoms=0.0, resolution=1000):
    """Average over the cycle by trapezoids on a 1000x finer grid plus atoms."""
    total = []
    for a, b, ya, yb in zip(times[:-1], times[1:], start, end):
        s = np.linspace(0.0, 1.0, resolution + 1)
        t = a + (b - a) * s
        y = ya + (yb - ya) * s
        total.append(np.sum((t[1:] - t[:-1]) * (y[1:] + y[:-1]) * 0.5))
    return (math.fsum(total) + atoms) / (times[-1] - times[0])


ACCEPTANCE = {}


@contextmanager
def criterion(number, title):
    """Record one acceptance criterion as PASS or FAIL and print the verdict."""
    try:
        yield
    except BaseException:
        ACCEPTANCE[number] = (title, "FAIL")
        print(f"criterion {number}: FAIL - {title}")
        raise
    if ACCEPTANCE.get(number, ("", "PASS"))[1] == "PASS":
        ACCEPTANCE[number] = (title, "PASS")
    print(f"criterion {number}: PASS - {title}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, verdict = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {verdict} - {title}")
