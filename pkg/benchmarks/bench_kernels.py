"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Prints per-call times for each kernel and backend plus the speedup, and the
wall time of one greedy thinning search on a bundled stand.
"""
import argparse
import time
import timeit

import numpy as np

from borealrot import kernels
from borealrot.economics import EconomicConfig, ValueTables, value_trajectory
from borealrot.growth import CLASS_WIDTH, MIDPOINTS, SPECIES, GrowthParams
from borealrot.io import bundled_stands
from borealrot.optimizer import OptimizationConfig, greedy_thinning_search
from borealrot.schedule import ThinningSpec, simulate_trajectory


def cases(growth, cfg, state):
    inc, surv, ingr = growth.coefficient_arrays()
    n_sp = len(SPECIES)
    t_steps = np.array([4, 10], dtype=np.int64)
    t_q = np.full((2, n_sp), 0.3)
    t_g = np.array([1.0, 0.0])
    f_steps = np.array([5], dtype=np.int64)
    sim_args = (np.asarray(state.stems), 32, state.site.site_index, 0.0, inc, surv, ingr,
                MIDPOINTS, CLASS_WIDTH, growth.step_years, growth.fertilization_bump,
                growth.fertilization_years, t_steps, t_q, t_g, f_steps)
    row = np.asarray(state.stems[0])
    a0 = state.age
    traj = simulate_trajectory(state, (ThinningSpec.uniform(a0 + 10, 0.3, 1.0),
                                       ThinningSpec.uniform(a0 + 25, 0.3)),
                               (a0 + 12.5,), growth, 32)
    v = value_trajectory(traj, ValueTables.build(growth, cfg))
    curve_args = (v.times, v.stock_pre, v.stock_post, v.volume_pre, v.volume_post, v.revenue,
                  np.array(v.thinning_nodes, dtype=np.int64),
                  np.array(v.fertilization_nodes, dtype=np.int64),
                  cfg.bare_land_value, cfg.regeneration_cost, cfg.fertilization_cost,
                  cfg.interest_rate, cfg.operating_cost)
    return {
        "simulate": lambda impl: impl.simulate(*sim_args),
        "thinning_fractions": lambda impl: impl.thinning_fractions(row, MIDPOINTS, 0.3, 1.5),
        "cycle_curve": lambda impl: impl.cycle_curve(*curve_args),
    }


def per_call(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    growth, cfg = GrowthParams.default(), EconomicConfig.default()
    state = bundled_stands()[0].state
    backends = {"python": kernels.get_backend("python")}
    try:
        backends["compiled"] = kernels.get_backend("compiled")
    except ImportError:
        print("compiled extension not built; timing the python backend only")

    print(f"{'kernel':<20}{'python':>14}{'compiled':>14}{'speedup':>10}")
    for name, call in cases(growth, cfg, state).items():
        t = {b: per_call(lambda impl=impl: call(impl), args.repeat)
             for b, impl in backends.items()}
        py = t["python"]
        cc = t.get("compiled")
        cc_txt = f"{cc * 1e6:11.1f} us" if cc else f"{'-':>14}"
        speed = f"{py / cc:9.1f}x" if cc else f"{'-':>10}"
        print(f"{name:<20}{py * 1e6:11.1f} us{cc_txt}{speed}")

    opt = OptimizationConfig(max_rotation=100.0, q_step=0.15, max_thinnings=2,
                             species_allocation="uniform")
    for b, impl in backends.items():
        start = time.perf_counter()
        res = greedy_thinning_search(state, growth, cfg, opt, backend=impl)
        print(f"greedy search [{b}]: {time.perf_counter() - start:.2f} s, "
              f"{res.evaluations} evaluations")


if __name__ == "__main__":
    main()
