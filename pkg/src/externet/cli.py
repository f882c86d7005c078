"""Command-line front end: generate, solve, batch, oracle-check.

batch runs generated instances through a pipeline plus the exhaustive
oracle, writes one CSV row per instance with a fixed column set, and exits
nonzero when any theorem bound is violated beyond the tolerance.  The
worker pool size is capped by the EXTERNET_THREADS environment variable;
ordering and per-trial randomness derive from (seed, instance index), so
output bytes do not depend on scheduling.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .concave import solve_concave_beta, solve_concave_pd
from .config import ExperimentConfig
from .contention import solve_convex_curvature
from .generate import generate_instance
from .instance import Instance, Regime
from .lovasz import solve_lovasz_kt
from .negative import solve_negative
from .oracle import brute_force, check_monotone, check_submodular, check_supermodular
from .reports import CSV_COLUMNS, SolveReport
from .serialize import load_instance, save_instance

__all__ = ["ALGORITHMS", "cmd_batch", "cmd_generate", "cmd_oracle_check", "cmd_solve", "main"]


ALGORITHMS = {
    "lovasz-kt": (Regime.POSITIVE_LINEAR,),
    "poly-lovasz-kt": (Regime.POSITIVE_LINEAR, Regime.POSITIVE_CONVEX),
    "convex-fcr": (Regime.POSITIVE_LINEAR, Regime.POSITIVE_CONVEX),
    "concave-pd": (Regime.POSITIVE_CONCAVE,),
    "concave-beta": (Regime.POSITIVE_CONCAVE,),
    "negative-cg": (Regime.NEGATIVE_LINEAR,),
    "oracle": tuple(Regime),
}


def _check_regime(algorithm: str, inst: Instance) -> None:
    expected = ALGORITHMS[algorithm]
    if inst.regime not in expected:
        names = ", ".join(r.value for r in expected)
        raise ValueError(
            f"algorithm {algorithm!r} expects regime {names}; instance has {inst.regime.value}"
        )


def run_pipeline(algorithm: str, inst: Instance, cfg: ExperimentConfig) -> SolveReport:
    _check_regime(algorithm, inst)
    if algorithm in ("lovasz-kt", "poly-lovasz-kt"):
        return solve_lovasz_kt(inst, cfg, algorithm=algorithm)
    if algorithm == "convex-fcr":
        return solve_convex_curvature(inst, cfg)
    if algorithm == "concave-pd":
        return solve_concave_pd(inst, cfg)
    if algorithm == "concave-beta":
        return solve_concave_beta(inst, cfg)
    if algorithm == "negative-cg":
        return solve_negative(inst, cfg)
    if algorithm == "oracle":
        start = time.perf_counter()
        result = brute_force(inst)
        report = SolveReport(
            algorithm="oracle",
            regime=inst.regime.value,
            n=inst.n,
            m=inst.m,
            oracle_opt=result.opt_value,
            seed=cfg.seed,
            diagnostics={"enumerated": result.enumerated, "opt_assign": result.opt_alloc.assign.tolist()},
            wall_time_ms=(time.perf_counter() - start) * 1e3,
        )
        return report
    raise ValueError(f"unknown algorithm {algorithm!r}")


# --------------------------------------------------------------------------
# Verbs
# --------------------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for idx in range(cfg.instance_count):
        inst = generate_instance(
            cfg.regime,
            cfg.n,
            cfg.m,
            seed=np.random.SeedSequence([cfg.seed, idx]),
            externality=cfg.externality,
            diagonally_dominant=cfg.diagonally_dominant,
            graph_mode=cfg.graph_mode,
            edge_probability=cfg.edge_probability,
        )
        path = out / f"{cfg.regime.lower()}_n{cfg.n}_m{cfg.m}_s{cfg.seed}_{idx:04d}.json"
        save_instance(inst, path)
        paths.append(path)
    return paths


def cmd_solve(
    instance_path: str | Path,
    algorithm: str,
    cfg: ExperimentConfig,
    with_oracle: bool = False,
) -> SolveReport:
    inst = load_instance(instance_path)
    report = run_pipeline(algorithm, inst, cfg)
    report.instance_id = Path(instance_path).stem
    if with_oracle and algorithm != "oracle":
        report.attach_oracle(brute_force(inst).opt_value)
    return report


def _batch_one(args: tuple) -> tuple[int, SolveReport]:
    algorithm, cfg_dict, idx = args
    cfg = ExperimentConfig(**cfg_dict)
    inst = generate_instance(
        cfg.regime,
        cfg.n,
        cfg.m,
        seed=np.random.SeedSequence([cfg.seed, idx]),
        externality=cfg.externality,
        diagonally_dominant=cfg.diagonally_dominant,
        graph_mode=cfg.graph_mode,
        edge_probability=cfg.edge_probability,
    )
    trial_cfg = dataclasses.replace(cfg, seed=int(np.random.SeedSequence([cfg.seed, idx, 1]).generate_state(1)[0]))
    report = run_pipeline(algorithm, inst, trial_cfg)
    report.instance_id = f"{cfg.regime}-{idx:04d}"
    report.seed = cfg.seed
    if algorithm != "oracle":
        report.attach_oracle(brute_force(inst).opt_value)
    return idx, report


def _worker_count(requested: int | None, jobs: int) -> int:
    env = os.environ.get("EXTERNET_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    workers = requested if requested is not None else cap
    return max(1, min(workers, cap, jobs))


def cmd_batch(
    algorithm: str,
    cfg: ExperimentConfig,
    out_csv: str | Path | None = None,
    workers: int | None = None,
) -> tuple[list[SolveReport], int]:
    """Run instance_count generated instances through the pipeline and the
    oracle.  Returns (reports ordered by instance id, count of bound
    violations beyond cfg.tolerance)."""
    jobs = [(algorithm, dataclasses.asdict(cfg), idx) for idx in range(cfg.instance_count)]
    nworkers = _worker_count(workers, len(jobs))
    results: dict[int, SolveReport] = {}
    if nworkers == 1:
        for job in jobs:
            idx, report = _batch_one(job)
            results[idx] = report
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            for idx, report in pool.map(_batch_one, jobs):
                results[idx] = report
    reports = [results[idx] for idx in sorted(results)]

    violations = 0
    for report in reports:
        if report.guarantee_bound is None or report.empirical_ratio is None:
            continue
        if report.empirical_ratio < report.guarantee_bound - cfg.tolerance:
            violations += 1

    if out_csv is not None:
        path = Path(out_csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for report in reports:
                writer.writerow(report.csv_row())
    return reports, violations


def cmd_oracle_check(instance_path: str | Path) -> dict:
    """Brute-force optimum plus the structure checks appropriate to the
    regime, as a JSON-ready dict."""
    inst = load_instance(instance_path)
    result = brute_force(inst)
    out: dict = {
        "instance": Path(instance_path).stem,
        "regime": inst.regime.value,
        "opt_value": result.opt_value,
        "opt_assign": result.opt_alloc.assign.tolist(),
        "enumerated": result.enumerated,
        "items": [],
    }
    for i in range(inst.m):
        entry: dict = {"item": i}
        if inst.regime is Regime.NEGATIVE_LINEAR:
            sub = check_submodular(inst, i)
            mono = check_monotone(inst, i)
            entry["submodular"] = sub.holds
            entry["monotone"] = mono.holds
            if not sub.holds:
                entry["submodular_witness"] = dataclasses.asdict(sub.witness)
        else:
            sup = check_supermodular(inst, i)
            entry["supermodular"] = sup.holds
            if not sup.holds:
                entry["supermodular_witness"] = dataclasses.asdict(sup.witness)
        out["items"].append(entry)
    return out


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="JSON file with ExperimentConfig fields")
    parser.add_argument("--regime", type=str, default=None)
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--m", type=int, default=None)
    parser.add_argument("--instance-count", type=int, default=None)
    parser.add_argument("--rounding-trials", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--max-iters", type=int, default=None)
    parser.add_argument("--step-scale", type=float, default=None)
    parser.add_argument("--greedy-steps", type=int, default=None)
    parser.add_argument("--mc-samples", type=int, default=None)
    parser.add_argument("--tolerance", type=float, default=None)
    parser.add_argument("--externality", type=str, default=None,
                        help='JSON spec, e.g. {"family": "Polynomial", "coefficients": [0, 1]}')
    parser.add_argument("--diagonally-dominant", action="store_true", default=None)
    parser.add_argument("--graph-mode", action="store_true", default=None)
    parser.add_argument("--edge-probability", type=float, default=None)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        data.update(json.loads(Path(args.config).read_text()))
    overrides = {
        "regime": args.regime,
        "n": args.n,
        "m": args.m,
        "instance_count": args.instance_count,
        "rounding_trials": args.rounding_trials,
        "seed": args.seed,
        "max_iters": args.max_iters,
        "step_scale": args.step_scale,
        "greedy_steps": args.greedy_steps,
        "mc_samples": args.mc_samples,
        "tolerance": args.tolerance,
        "diagonally_dominant": args.diagonally_dominant,
        "graph_mode": args.graph_mode,
        "edge_probability": args.edge_probability,
    }
    if args.externality:
        overrides["externality"] = json.loads(args.externality)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="externet",
        description="Approximation pipelines for social welfare maximization under network externalities",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write random instance JSON files")
    _add_config_args(p_gen)
    p_gen.add_argument("--out-dir", type=str, required=True)

    p_solve = sub.add_parser("solve", help="run one pipeline on an instance file")
    _add_config_args(p_solve)
    p_solve.add_argument("--instance", type=str, required=True)
    p_solve.add_argument("--algorithm", type=str, required=True, choices=sorted(ALGORITHMS))
    p_solve.add_argument("--with-oracle", action="store_true")
    p_solve.add_argument("--out", type=str, default=None)

    p_batch = sub.add_parser("batch", help="generated instances through pipeline + oracle, CSV out")
    _add_config_args(p_batch)
    p_batch.add_argument("--algorithm", type=str, required=True, choices=sorted(set(ALGORITHMS) - {"oracle"}))
    p_batch.add_argument("--out", type=str, required=True)
    p_batch.add_argument("--workers", type=int, default=None)

    p_check = sub.add_parser("oracle-check", help="brute-force optimum and structure checks")
    p_check.add_argument("--instance", type=str, required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            cfg = _config_from_args(args)
            paths = cmd_generate(cfg, args.out_dir)
            for path in paths:
                print(path)
            return 0
        if args.command == "solve":
            cfg = _config_from_args(args)
            report = cmd_solve(args.instance, args.algorithm, cfg, with_oracle=args.with_oracle)
            text = report.to_json()
            if args.out:
                Path(args.out).write_text(text + "\n")
            print(text)
            return 0
        if args.command == "batch":
            cfg = _config_from_args(args)
            reports, violations = cmd_batch(args.algorithm, cfg, out_csv=args.out, workers=args.workers)
            print(f"wrote {len(reports)} rows to {args.out}; bound violations: {violations}")
            return 1 if violations else 0
        if args.command == "oracle-check":
            print(json.dumps(cmd_oracle_check(args.instance), indent=2, sort_keys=True))
            return 0
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
