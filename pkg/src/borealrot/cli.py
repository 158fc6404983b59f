"""Command-line interface: simulate, optimize, scenario, gen-stands.

Exit codes are 0 on success, 2 for unreadable or malformed input, 3 when
the input is well formed but violates a domain precondition, and 4 when an
internal invariant fails.  Every command computes all of its results before
writing anything, so a failing run leaves no partial output behind.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .economics import EconomicConfig
from .errors import InvariantError, PreconditionError, SchemaError
from .growth import STEP_YEARS, GrowthParams
from .io import (LEDGER_HEADER, StandFile, atomic_write_text, csv_text, default_data_path,
                 dumps_json, fmt, ledger_rows, load_econ_config, load_growth_params,
                 load_manifest, load_schedule, load_stand, stand_to_dict)
from .optimizer import OptimizationConfig, curve_argmax, describe, greedy_thinning_search
from .scenarios import NotApplicable, ScenarioKind, check_applicable, run_scenario
from .schedule import Schedule, simulate_schedule
from .standgen import generate_stands

log = logging.getLogger("borealrot")

ENV_GROWTH = "BOREALROT_GROWTH_PARAMS"
ENV_ECON = "BOREALROT_ECON_CONFIG"

CURVE_HEADER = ("tau", "profit_rate", "capitalization", "return_rate", "volume")
TRACE_HEADER = ("iteration", "thinnings", "max_return_rate", "rotation")

Outputs = Dict[str, str]


def _config_paths(args, manifest: Optional[Dict[str, Any]] = None) -> Tuple[str, str]:
    # flag, then manifest, then environment, then the bundled defaults
    manifest = manifest or {}
    growth = (args.growth_params or manifest.get("growth_params")
              or os.environ.get(ENV_GROWTH) or str(default_data_path("growth_params.json")))
    econ = (args.econ_config or manifest.get("econ_config")
            or os.environ.get(ENV_ECON) or str(default_data_path("econ_config.json")))
    return growth, econ


def _load_configs(args, manifest=None) -> Tuple[GrowthParams, EconomicConfig]:
    growth_path, econ_path = _config_paths(args, manifest)
    return load_growth_params(growth_path), load_econ_config(econ_path)


def _opt_config(args, overrides: Optional[Dict[str, Any]] = None) -> OptimizationConfig:
    kw = dict(overrides or {})
    for key in ("gammas", "thinning_times", "intensities"):
        if key in kw:
            kw[key] = tuple(float(v) for v in kw[key])
    if getattr(args, "max_rotation", None) is not None:
        kw["max_rotation"] = args.max_rotation
    return OptimizationConfig(**kw)


def curve_rows(curve: Dict[str, np.ndarray]) -> List[List[Any]]:
    return [[float(curve[k][i]) for k in CURVE_HEADER] for i in range(len(curve["tau"]))]


def _write_all(out_dir: Path, outputs: Outputs) -> None:
    for name in sorted(outputs):
        atomic_write_text(out_dir / name, outputs[name])


def _optimum(curve) -> Dict[str, Any]:
    r, tau = curve_argmax(curve["tau"], curve["return_rate"])
    return {"rotation": tau if math.isfinite(r) else None,
            "max_return_rate": r if math.isfinite(r) else None}


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> Outputs:
    stand = load_stand(args.stand)
    growth, cfg = _load_configs(args)
    horizon = args.max_rotation
    if args.schedule:
        schedule = load_schedule(args.schedule)
        horizon = max(horizon, schedule.rotation)
    else:
        schedule = Schedule(horizon)
    res = simulate_schedule(stand.state, schedule, growth, cfg,
                            window=(stand.state.age, horizon))
    out: Outputs = {"curve.csv": csv_text(CURVE_HEADER, curve_rows(res.curve))}
    summary = {"schema_version": 1, "kind": "simulation", "stand": stand.stand_id,
               "schedule": schedule.to_dict(), **_optimum(res.curve)}
    if res.ledger is not None:
        out["ledger.csv"] = csv_text(LEDGER_HEADER, ledger_rows(res.ledger))
        exp = [p for p in res.expectations() if abs(p.tau - schedule.rotation) < 1e-9]
        if exp:
            summary["at_rotation"] = {"rotation": exp[0].tau,
                                      "return_rate": exp[0].expected_return_rate,
                                      "profit_rate": exp[0].expected_profit_rate,
                                      "capitalization": exp[0].expected_capitalization,
                                      "volume": exp[0].expected_volume}
    out["summary.json"] = dumps_json(summary)
    return out


# -- optimize -----------------------------------------------------------------

def trace_rows(rows) -> List[List[Any]]:
    return [[it, desc, float(v), float(t)] for it, desc, v, t in rows]


def cmd_optimize(args) -> Outputs:
    stand = load_stand(args.stand)
    growth, cfg = _load_configs(args)
    opt = _opt_config(args)
    result = greedy_thinning_search(stand.state, growth, cfg, opt)
    rows = result.trace.rows
    for (_, _, a, _), (_, _, b, _) in zip(rows, rows[1:]):
        if not b > a:
            raise InvariantError("search trace is not strictly increasing")
    sim = simulate_schedule(stand.state, result.schedule, growth, cfg,
                            window=(stand.state.age, opt.max_rotation))
    summary = {"schema_version": 1, "kind": "optimization", "stand": stand.stand_id,
               "rotation": result.schedule.rotation,
               "max_return_rate": result.best_return_rate,
               "thinnings": [describe(s) for s in result.schedule.thinnings],
               "evaluations": result.evaluations}
    return {
        "schedule.json": dumps_json(result.schedule.to_dict()),
        "trace.csv": csv_text(TRACE_HEADER, trace_rows(rows)),
        "curve.csv": csv_text(CURVE_HEADER, curve_rows(sim.curve)),
        "summary.json": dumps_json(summary),
    }


# -- scenario -----------------------------------------------------------------

PAIR_HEADERS = {
    "return_rate": ("tau", "baseline", "fertilized", "fertilized_same_schedule"),
    "volume": ("tau", "baseline", "fertilized", "fertilized_same_schedule"),
}


def _paired_rows(res, key: str) -> List[List[Any]]:
    curves = (res.baseline_curve, res.fertilized_curve, res.matched_curve)
    taus = sorted({round(float(t), 9) for c in curves for t in c["tau"]})
    lookup = [{round(float(t), 9): float(v) for t, v in zip(c["tau"], c[key])} for c in curves]
    return [[t] + [m.get(t, math.nan) for m in lookup] for t in taus]


def stand_scenarios(stand: StandFile, growth: GrowthParams, cfg: EconomicConfig,
                    opt: OptimizationConfig, kinds: Sequence[ScenarioKind]):
    """All scenario outputs of one stand: ``(files, results, skipped)``."""
    sid = stand.stand_id
    base = greedy_thinning_search(stand.state, growth, cfg, opt)
    files: Outputs = {
        f"{sid}/baseline_schedule.json": dumps_json(base.schedule.to_dict()),
        f"{sid}/baseline_trace.csv": csv_text(TRACE_HEADER, trace_rows(base.trace.rows)),
    }
    results, skipped = [], []
    for kind in kinds:
        try:
            res = run_scenario(kind, stand.state, growth, cfg, opt, baseline=base)
        except NotApplicable as exc:
            skipped.append({"stand": sid, "kind": kind.value, "reason": str(exc)})
            continue
        d = f"{sid}/{kind.value}"
        for key, header in PAIR_HEADERS.items():
            files[f"{d}/{key}.csv"] = csv_text(header, _paired_rows(res, key))
        files[f"{d}/fertilized_schedule.json"] = dumps_json(res.fertilized_schedule.to_dict())
        if "fertilized" in res.trace:
            files[f"{d}/fertilized_trace.csv"] = csv_text(
                TRACE_HEADER, trace_rows(res.trace["fertilized"]))
        results.append({"stand": sid, **res.to_dict()})
    return files, results, skipped


EXPENSE_HEADER = ("stand", "rotation", "extended_rotation",
                  "expense_unfertilized", "expense_fertilized",
                  "stock_rate_unfertilized", "stock_rate_fertilized",
                  "extension_rate_unfertilized", "extension_rate_fertilized",
                  "delta_volume_pct_unfertilized", "delta_volume_pct_fertilized")


def expense_rows(results: Sequence[Dict[str, Any]]) -> List[List[Any]]:
    rows = []
    for r in results:
        if r["kind"] != ScenarioKind.AT_MATURITY_EXTEND_TEN.value:
            continue
        u, f = r["extension_unfertilized"], r["optimum"]
        rows.append([r["stand"], u["tau_ref"], u["tau"],
                     u["extension_expense"], f["extension_expense"],
                     u["stock_expense_rate"], f["stock_expense_rate"],
                     u["extension_only_rate"], f["extension_only_rate"],
                     u["delta_volume_pct"], f["delta_volume_pct"]])
    return rows


def _stand_job(payload):
    return stand_scenarios(*payload)


def cmd_scenario(args) -> Tuple[Path, Outputs]:
    manifest = load_manifest(args.manifest)
    growth, cfg = _load_configs(args, manifest)
    opt = _opt_config(args, manifest.get("optimizer"))
    seed = args.seed if args.seed is not None else manifest.get("seed", 1)
    kinds = [ScenarioKind.parse(k) for k in manifest.get("scenarios",
                                                         [k.value for k in ScenarioKind])]
    stands = [load_stand(p) for p in manifest.get("stands", [])]
    files: Outputs = {}
    if "generate" in manifest:
        generated = generate_stands(seed, manifest["generate"]["count"])
        for st in generated:
            files[f"stands/{st.stand_id}.json"] = dumps_json(stand_to_dict(st))
        stands += generated
    if not stands:
        raise PreconditionError("manifest lists no stands")
    ids = [s.stand_id for s in stands]
    if len(set(ids)) != len(ids):
        raise PreconditionError("stand ids in the manifest are not unique")
    for st in stands:
        try:
            check_applicable(st.state)
        except PreconditionError as exc:
            raise PreconditionError(f"stand {st.stand_id}: {exc}") from None

    payloads = [(st, growth, cfg, opt, kinds) for st in stands]
    jobs = max(1, int(args.jobs))
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
            parts = list(pool.map(_stand_job, payloads))
    else:
        parts = [_stand_job(p) for p in payloads]

    results, skipped = [], []
    for f, r, s in parts:  # in manifest order whatever the worker count
        files.update(f)
        results.extend(r)
        skipped.extend(s)
    files["extension_expense.csv"] = csv_text(EXPENSE_HEADER, expense_rows(results))
    files["summary.json"] = dumps_json({
        "schema_version": 1, "kind": "scenario_summary", "seed": seed,
        "stands": ids, "scenarios": [k.value for k in kinds],
        "results": results, "skipped": skipped})
    out_dir = Path(args.out_dir or manifest.get("out_dir") or "borealrot-out")
    return out_dir, files


# -- gen-stands ---------------------------------------------------------------

def cmd_gen_stands(args) -> Outputs:
    if args.count < 1:
        raise PreconditionError("--count must be >= 1")
    return {f"{st.stand_id}.json": dumps_json(stand_to_dict(st))
            for st in generate_stands(args.seed, args.count)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="borealrot",
        description="Stand growth, thinning optimization and fertilization scenarios.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def configs(p):
        p.add_argument("--growth-params", help=f"growth parameter JSON (env {ENV_GROWTH})")
        p.add_argument("--econ-config", help=f"economic config JSON (env {ENV_ECON})")
        p.add_argument("--out-dir", help="output directory")

    p = sub.add_parser("simulate", help="curves of one stand under a given schedule")
    p.add_argument("--stand", required=True)
    p.add_argument("--schedule", help="schedule JSON; default is no thinning")
    p.add_argument("--max-rotation", type=float, default=120.0)
    configs(p)

    p = sub.add_parser("optimize", help="greedy thinning search for one stand")
    p.add_argument("--stand", required=True)
    p.add_argument("--max-rotation", type=float, default=None)
    configs(p)

    p = sub.add_parser("scenario", help="fertilization scenarios for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="seed for generated stands (overrides the manifest)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    configs(p)

    p = sub.add_parser("gen-stands", help="write synthetic stand files")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--out-dir", default="stands")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "scenario":
            out_dir, outputs = cmd_scenario(args)
        else:
            handler = {"simulate": cmd_simulate, "optimize": cmd_optimize,
                       "gen-stands": cmd_gen_stands}[args.command]
            outputs = handler(args)
            out_dir = Path(args.out_dir or ".")
        _write_all(out_dir, outputs)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {len(outputs)} file(s) to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
