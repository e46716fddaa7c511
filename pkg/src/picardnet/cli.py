"""Batch experiment runner: solve, build-verify and sweep subcommands.

Experiments are driven by a JSON config validated against a published
schema (unknown keys are rejected); outputs are CSV files with '.'
decimals, LF line endings and 17-significant-digit floats, plus JSON
summaries, so reruns with the same config and seed are byte-identical.

Exit codes: 0 success, 2 config error, 3 resource guard, 4 check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .analysis import (
    fullerror_check,
    growth_fit,
    desk_growth_recipe,
    lyapunov_check,
    suggest_lyapunov_constants,
    paper_growth_recipe,
    perturbation_check,
)
from .builder import BuildSizeError, build_mlp_network
from .indexrng import FrozenSample
from .mlp import ROOT_PATH, MlpConfig, mlp_estimate
from .nets import network_to_dict, param_count, realize
from .problems import catalog_entry, network_encodings, problem_catalog
from .sde import TimeGrid, uniform_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_CHECK_FAILED = 4

LEVEL_GUARD = 6  # n = M at or above this refuses to run without --force

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": {"type": "string"},
        "dimension": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 0},
        "M": {"type": "integer", "minimum": 1},
        "level_grid": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "integer", "minimum": 0},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "time_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "uniform_steps": {"type": "integer", "minimum": 1},
                "points": {"type": "array", "items": {"type": "number"}},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "t": {"type": "number", "minimum": 0},
        "probes": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "seeds": {"type": "integer", "minimum": 1},
        "delta_target": {"type": ["number", "null"]},
        "sweep": {
            "type": "string",
            "enum": ["fullerror", "growth", "lyapunov", "perturbation"],
        },
        "d_list": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "eps_list": {"type": "array", "items": {"type": "number"}},
        "recipe": {"type": "string", "enum": ["paper", "desk"]},
        "paths": {"type": "integer", "minimum": 100},
        "serialize_network": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg), key=str)
    if errors:
        raise ConfigError("; ".join(e.message for e in errors))
    return cfg


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _entry(cfg: dict):
    name = cfg["problem"]
    try:
        if "dimension" in cfg:
            return catalog_entry(name, d=cfg["dimension"])
        return catalog_entry(name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc


def _time_grid(cfg: dict, horizon: float, M: int) -> TimeGrid:
    spec = cfg.get("time_grid")
    if spec is None:
        return uniform_grid(horizon, M**M)
    if "points" in spec:
        return TimeGrid(tuple(spec["points"]))
    return uniform_grid(horizon, spec["uniform_steps"])


def _probes(cfg: dict, d: int) -> list[np.ndarray]:
    pts = cfg.get("probes", [])
    out = []
    for p in pts:
        arr = np.asarray(p, dtype=np.float64)
        if arr.shape != (d,):
            raise ConfigError(f"probe {p} has wrong dimension (want {d})")
        out.append(arr)
    return out


def _guard_levels(cfg: dict, force: bool) -> None:
    levels = [(cfg.get("n", 0), cfg.get("M", 1))]
    levels.extend(tuple(pair) for pair in cfg.get("level_grid", []))
    for n, M in levels:
        if n == M and n >= LEVEL_GUARD and not force:
            raise ConfigError(
                f"n = M = {n} exceeds the cost guard (>= {LEVEL_GUARD}); pass --force"
            )


def cmd_solve(cfg: dict, seed: int, out_dir: Path, threads: int) -> int:
    entry = _entry(cfg)
    problem = entry.problem
    n, M = cfg.get("n", 2), cfg.get("M", 2)
    grid = _time_grid(cfg, problem.horizon, M)
    t = cfg.get("t", 0.0)
    probes = _probes(cfg, problem.d)
    config = MlpConfig(n, M, grid, FrozenSample(seed))

    def solve_one(idx_probe):
        idx, probe = idx_probe
        est = mlp_estimate(problem, config, ROOT_PATH, t, probe)
        return [t, *probe.tolist(), est, seed]

    if threads > 1 and probes:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(solve_one, enumerate(probes)))
    else:
        rows = [solve_one(ip) for ip in enumerate(probes)]
    header = ["t", *[f"x{i}" for i in range(problem.d)], "estimate", "seed"]
    write_csv(out_dir / "solve.csv", header, rows)
    return EXIT_OK


def cmd_build_verify(cfg: dict, seed: int, out_dir: Path) -> int:
    entry = _entry(cfg)
    problem = entry.problem
    n, M = cfg.get("n", 1), cfg.get("M", 1)
    grid = _time_grid(cfg, problem.horizon, M)
    t = cfg.get("t", 0.0)
    networks = network_encodings(problem, cfg.get("delta_target"))
    config = MlpConfig(n, M, grid, FrozenSample(seed))
    try:
        built = build_mlp_network(networks, config, ROOT_PATH, t)
    except BuildSizeError as exc:
        report = {"error": "resource guard", **exc.report}
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "build_verify.json").write_text(json.dumps(report, indent=2))
        print(json.dumps(report, indent=2))
        return EXIT_RESOURCE

    probes = _probes(cfg, problem.d) or [np.zeros(problem.d)]
    worst = 0.0
    for x in probes:
        u = mlp_estimate(problem, config, ROOT_PATH, t, x)
        r = float(realize(built.network, x)[0])
        worst = max(worst, abs(r - u) / (1.0 + abs(u)))
    pred = built.prediction
    report = {
        "problem": problem.name, "n": n, "M": M, "seed": seed, "t": t,
        "max_relative_deviation": worst,
        "depth": {"actual": pred.depth, "predicted": pred.depth},
        "width": {"actual": pred.width, "bound": pred.width_bound},
        "params": {"actual": param_count(built.network), "bound": pred.param_bound},
        "pass": worst <= 1e-8,
        "provenance": built.provenance_json(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "build_verify.json").write_text(json.dumps(report, indent=2))
    if cfg.get("serialize_network", False):
        payload = {"network": network_to_dict(built.network),
                   "provenance": built.provenance_json()}
        (out_dir / "network.json").write_text(json.dumps(payload))
    print(json.dumps(report["params"] | {"pass": report["pass"]}, indent=None))
    return EXIT_OK if report["pass"] else EXIT_CHECK_FAILED


def _sweep_fullerror(cfg: dict, seed: int, out_dir: Path) -> int:
    entry = _entry(cfg)
    pairs = [tuple(p) for p in cfg.get("level_grid", [[2, 2]])]
    probes = _probes(cfg, entry.problem.d) or [np.zeros(entry.problem.d)]
    report = fullerror_check(
        entry.problem, entry.reference, entry.constants, pairs,
        cfg.get("t", 0.0), probes[0], seeds=cfg.get("seeds", 30), base_seed=seed,
    )
    header = ["n", "M", "delta", "reference", "rmse", "bound", "ratio", "pass"]
    write_csv(out_dir / "fullerror.csv", header,
              [[r[k] for k in header] for r in report.rows])
    (out_dir / "fullerror_summary.json").write_text(json.dumps(report.summary()))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _sweep_lyapunov(cfg: dict, seed: int, out_dir: Path) -> int:
    entry = _entry(cfg)
    problem = entry.problem
    c, c_phi = suggest_lyapunov_constants(problem)
    probes = _probes(cfg, problem.d) or [np.zeros(problem.d)]
    trips = [(0.0, problem.horizon, x) for x in probes]
    report = lyapunov_check(problem, 2.0, c, trips, n_paths=cfg.get("paths", 50_000),
                            c_phi=c_phi, seed=seed)
    header = ["t", "s", "kappa", "c", "estimate", "stderr", "inflated", "bound", "pass"]
    write_csv(out_dir / "lyapunov.csv", header,
              [[r[k] for k in header] for r in report.rows])
    (out_dir / "lyapunov_summary.json").write_text(json.dumps(report.summary()))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _sweep_growth(cfg: dict, seed: int, out_dir: Path) -> int:
    name = cfg["problem"]
    recipe = paper_growth_recipe() if cfg.get("recipe", "desk") == "paper" else desk_growth_recipe()
    report = growth_fit(
        lambda d: catalog_entry(name, d=d),
        cfg.get("d_list", [1, 2]),
        cfg.get("eps_list", [0.5, 0.25]),
        recipe,
        seed=seed,
    )
    header = ["d", "eps", "n", "M", "steps", "delta", "params", "param_bound",
              "width", "width_bound", "depth", "pass"]
    write_csv(out_dir / "growth.csv", header,
              [[r[k] for k in header] for r in report.rows])
    summary = {"check": "growth", "pass": report.passed, "fits": report.fitted,
               "skipped": list(report.skipped)}
    (out_dir / "growth_summary.json").write_text(json.dumps(summary, indent=2))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _sweep_perturbation(cfg: dict, seed: int, out_dir: Path) -> int:
    from .problems import heat_problem
    import dataclasses
    import math

    d = cfg.get("dimension", 2)
    base = heat_problem(d=d)
    shifted_mu = 0.05
    pert = dataclasses.replace(
        base.problem, name="heat-shifted",
        mu=lambda x, s=shifted_mu: s * np.ones(d),
    )
    horizon = base.problem.horizon

    def u_base(s, y):
        return base.reference(s, y)

    def u_pert(s, y):
        drift = shifted_mu * (horizon - s) * np.ones(d)
        return float(np.dot(y + drift, y + drift)) + 2 * d * (horizon - s)

    constants = dataclasses.replace(base.constants,
                                    delta=shifted_mu * math.sqrt(d))
    probes = [(0.0, np.zeros(d))]
    report = perturbation_check(base.problem, pert, u_base, u_pert, constants,
                                probes, n_paths=cfg.get("paths", 4000), seed=seed)
    header = ["t", "delta", "sup_estimate", "stderr", "oracle_budget", "inflated",
              "bound", "mean_path_gap", "pass"]
    write_csv(out_dir / "perturbation.csv", header,
              [[r[k] for k in header] for r in report.rows])
    (out_dir / "perturbation_summary.json").write_text(json.dumps(report.summary()))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_sweep(cfg: dict, seed: int, out_dir: Path) -> int:
    kind = cfg.get("sweep", "fullerror")
    handler = {
        "fullerror": _sweep_fullerror,
        "lyapunov": _sweep_lyapunov,
        "growth": _sweep_growth,
        "perturbation": _sweep_perturbation,
    }[kind]
    return handler(cfg, seed, out_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="picardnet",
        description="Multilevel Picard solving, network building and bound checks.",
    )
    parser.add_argument("command", choices=["solve", "build-verify", "sweep", "problems"])
    parser.add_argument("--config", help="path to a JSON experiment config")
    parser.add_argument("--seed", type=int, default=0, help="master seed (u64)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="lift the n = M cost guard")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default PICARDNET_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("PICARDNET_THREADS", "1"))
    if args.command == "problems":
        for name in sorted(problem_catalog()):
            print(name)
        return EXIT_OK
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        _guard_levels(cfg, args.force)
        out_dir = Path(args.out)
        if args.command == "solve":
            return cmd_solve(cfg, args.seed, out_dir, threads)
        if args.command == "build-verify":
            return cmd_build_verify(cfg, args.seed, out_dir)
        return cmd_sweep(cfg, args.seed, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BuildSizeError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
