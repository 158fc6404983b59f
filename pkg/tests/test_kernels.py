import numpy as np
import pytest
from hypothesis import given, strategies as st

from borealrot import kernels
from borealrot.economics import EconomicConfig, ValueTables, expectation_curve, value_trajectory
from borealrot.growth import CLASS_WIDTH, MIDPOINTS, N_CLASSES, SPECIES, GrowthParams
from borealrot.io import bundled_stands
from borealrot.schedule import ThinningSpec, simulate_trajectory

PY = kernels.get_backend("python")
DEFAULT = GrowthParams.default()
ECON = EconomicConfig.default()
STANDS = bundled_stands()

pytestmark = pytest.mark.skipif(kernels.BACKEND != "compiled",
                                reason="compiled extension not built")


def compiled():
    return kernels.get_backend("compiled")


def random_stems(rng):
    x = rng.uniform(0.0, 500.0, (len(SPECIES), N_CLASSES))
    x[rng.random(x.shape) < 0.4] = 0.0
    return x


def run(impl, stems, rng_seed, n_steps=30):
    rng = np.random.default_rng(rng_seed)
    inc, surv, ingr = DEFAULT.coefficient_arrays()
    t_steps = np.sort(rng.choice(np.arange(1, n_steps), 2, replace=False)).astype(np.int64)
    t_q = rng.uniform(0.0, 0.9, (2, len(SPECIES)))
    t_g = rng.choice([-2.0, -1.0, 0.0, 1.0, 2.0], 2)
    f_steps = np.array([int(rng.integers(0, n_steps))], dtype=np.int64)
    return impl.simulate(stems, n_steps, float(rng.uniform(16, 32)), 0.0, inc, surv, ingr,
                         MIDPOINTS, CLASS_WIDTH, 2.5, DEFAULT.fertilization_bump,
                         DEFAULT.fertilization_years, t_steps, t_q, t_g, f_steps)


@given(seed=st.integers(0, 2**32 - 1))
def test_simulate_equivalent(seed):
    stems = random_stems(np.random.default_rng(seed))
    for a, b in zip(run(PY, stems, seed), run(compiled(), stems, seed)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-9)


@given(seed=st.integers(0, 2**32 - 1), q=st.floats(0.0, 0.9),
       gamma=st.floats(-3.0, 3.0))
def test_thinning_fractions_equivalent(seed, q, gamma):
    row = random_stems(np.random.default_rng(seed))[0]
    a = PY.thinning_fractions(row, MIDPOINTS, q, gamma)
    b = compiled().thinning_fractions(row, MIDPOINTS, q, gamma)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


@given(seed=st.integers(0, 2**32 - 1))
def test_cycle_curve_equivalent(seed):
    rng = np.random.default_rng(seed)
    state = STANDS[int(rng.integers(0, len(STANDS)))].state
    a0 = state.age
    specs = (ThinningSpec.uniform(a0 + 10.0, 0.3, 1.0), ThinningSpec.uniform(a0 + 25.0, 0.2))
    traj = simulate_trajectory(state, specs, (a0 + 12.5,), DEFAULT, 30)
    cfg = ECON
    vals = value_trajectory(traj, ValueTables.build(DEFAULT, cfg))
    a = expectation_curve(vals, cfg, PY)
    b = expectation_curve(vals, cfg, compiled())
    for k in a:
        assert np.allclose(a[k], b[k], rtol=1e-12, atol=1e-9, equal_nan=True)


def test_too_many_classes_rejected():
    with pytest.raises(ValueError):
        compiled().thinning_fractions(np.ones(65), 5.0 * np.arange(1, 66), 0.3, 1.0)
