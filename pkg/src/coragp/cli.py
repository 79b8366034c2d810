"""Batch command-line front end.

Subcommands: ``run``, ``montecarlo``, ``bench``, ``validate``. All randomness
flows from the manifest-recorded seed. Exit codes: 0 ok, 2 config error,
3 validation failure, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .aggregation import AggregationMode
from .config import ConfigError, SimConfig, load_config, parse_value
from .dynamics import NonFiniteStateError
from .sim import RunResult, bench_weights, monte_carlo, run
from .topology import TopologyValidationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4

_FLOAT_FMT = "%.17g"


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("CORAGP_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(config: SimConfig, seed: int, outputs: list[str], started, ended) -> dict:
    return {
        "config_hash": config.config_hash(),
        "seed": int(seed),
        "version": f"coragp-{__version__}",
        "started": started.isoformat(),
        "ended": ended.isoformat(),
        "outputs": outputs,
        "config": config.to_dict(),
    }


def _write_log_csv(path: Path, result: RunResult):
    log = result.log
    steps, n, m = log.q.shape
    header = ["t", "r"]
    for i in range(1, n + 1):
        header += [f"q{i}_{j}" for j in range(1, m + 1)]
        header += [f"qd{i}_{j}" for j in range(1, m + 1)]
        header += [f"u{i}_{j}" for j in range(1, m + 1)]
        header += [f"fhat{i}_{j}" for j in range(1, m + 1)]
        header += [f"f{i}_{j}" for j in range(1, m + 1)]
        header += [f"h{i}_{d}" for d in range(1, n + 1)]
        header += [f"eta_tilde{i}"]
    header += ["err_norm"]

    eta_tilde = np.full((steps, n), np.nan)
    if log.eta_steps.size:
        eta_tilde[log.eta_steps] = log.eta_tilde

    blocks = [log.t[:, None], log.topology[:, None].astype(float)]
    for i in range(n):
        blocks += [log.q[:, i], log.qdot[:, i], log.u[:, i],
                   log.f_hat[:, i], log.f_true[:, i], log.weights[:, i],
                   eta_tilde[:, i:i + 1]]
    blocks.append(log.err_norm[:, None])
    table = np.hstack(blocks)
    np.savetxt(path, table, delimiter=",", header=",".join(header),
               comments="", fmt=_FLOAT_FMT)


def _summary_dict(result: RunResult) -> dict:
    return {
        "config": result.config_name,
        "mode": result.mode.value,
        "seed": result.seed,
        "steady_state_error": result.steady_state_error,
        "final_error": float(result.log.err_norm[-1]),
        "coverage": None if np.isnan(result.coverage) else float(result.coverage),
        "bound_satisfied": result.bound_satisfied,
        "out_of_support_fraction": result.out_of_support_fraction,
        "variance_clamp_warnings": result.clamp_warnings,
        "bound_report": result.bound_report.to_dict(),
    }


def _load(args) -> SimConfig:
    overrides = {}
    for item in args.override or []:
        if "=" not in item:
            raise ConfigError(f"override must be KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = parse_value(value)
    if args.seed is not None:
        overrides["seed"] = int(args.seed)
    return load_config(args.config, overrides)


def cmd_run(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    started = datetime.datetime.now(datetime.timezone.utc)
    result = run(config)
    ended = datetime.datetime.now(datetime.timezone.utc)
    stem = f"{config.raw['name']}_{result.mode.value}_seed{config.seed}"
    log_path = out / f"{stem}_log.csv"
    summary_path = out / f"{stem}_summary.yaml"
    manifest_path = out / f"{stem}_manifest.json"
    _write_log_csv(log_path, result)
    summary_path.write_text(yaml.safe_dump(_summary_dict(result), sort_keys=True))
    manifest_path.write_text(json.dumps(
        _manifest(config, config.seed, [str(log_path), str(summary_path)], started, ended),
        indent=2, sort_keys=True))
    print(f"run ok: steady-state error {result.steady_state_error:.6g} "
          f"-> {log_path}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    started = datetime.datetime.now(datetime.timezone.utc)
    modes = ([AggregationMode.parse(m) for m in args.modes.split(",")]
             if args.modes else [config.mode])
    rows = []
    for mode in modes:
        summary = monte_carlo(config, trials=args.trials, mode=mode)
        lo, hi = summary.ci95()
        rows.append({
            "mode": mode.value, "trials": summary.trials,
            "mean_err": summary.mean, "median_err": summary.median,
            "ci95_lo": lo, "ci95_hi": hi,
            "mean_coverage": (float(np.nanmean(summary.coverage))
                              if np.any(np.isfinite(summary.coverage)) else None),
            "bound_satisfied_fraction": float(summary.bound_satisfied.mean()),
        })
    ended = datetime.datetime.now(datetime.timezone.utc)
    stem = f"{config.raw['name']}_mc_seed{config.seed}"
    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    manifest_path = out / f"{stem}_manifest.json"
    manifest_path.write_text(json.dumps(
        _manifest(config, config.seed, [str(csv_path)], started, ended),
        indent=2, sort_keys=True))
    for row in rows:
        print(f"{row['mode']}: mean {row['mean_err']:.6g} median {row['median_err']:.6g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    m_grid = [int(x) for x in args.m_grid.split(",")]
    rows = bench_weights(config, m_grid=m_grid, n_queries=args.queries,
                         repetitions=args.repetitions)
    csv_path = out / f"{config.raw['name']}_bench.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["mode", "M", "mean_ms", "median_ms"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("-" if v is None else v) for k, v in row.items()})
    for row in rows:
        mean = "-" if row["mean_ms"] is None else f"{row['mean_ms']:.6g}"
        print(f"{row['mode']:>10s}  M={row['M']:<5d} mean {mean} ms")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _load(args)
    from .sim import World  # fit models to evaluate the error-bound scale
    from .aggregation import error_bound as _eb

    world = World(config)
    # eta over a query grid covering the training box, worst graph
    box = config.training_box
    axes = [np.linspace(lo, hi, 15) for lo, hi in box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.shape[0])
    eta_max = 0.0
    for g_idx in range(len(config.ensemble)):
        for batch in np.array_split(grid, max(1, len(grid) // 64)):
            for p in batch:
                _, _, _, eta_tilde = world.predict(
                    np.tile(p, (config.n_agents, 1)), g_idx, want_eta=True)
                eta_max = max(eta_max, float(np.linalg.norm(eta_tilde)))
    from .control import theorem1_check
    report = theorem1_check(config.ensemble, config.gains, config.el_params,
                            eta_tilde=eta_max,
                            leader_velocity_bound=config.leader.velocity_bound,
                            workspace_grid=config.workspace_grid)
    print(yaml.safe_dump(report.to_dict(), sort_keys=True))
    if not report.is_pd:
        print("stability condition FAILED: Phi_1 is not positive definite",
              file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coragp",
        description="Cooperative correlation-aware GP learning for distributed "
                    "tracking control under switching topologies",
    )
    parser.add_argument("--version", action="version", version=f"coragp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="config file or preset name")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None,
                       help="output directory (or env CORAGP_OUT; default: cwd)")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dotted config override, repeatable")

    p_run = sub.add_parser("run", help="single closed-loop simulation")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_mc = sub.add_parser("montecarlo", help="independent-seed trial batch")
    common(p_mc)
    p_mc.add_argument("--trials", type=int, default=None)
    p_mc.add_argument("--modes", default=None,
                      help="comma-separated mode list (default: config mode)")
    p_mc.set_defaults(func=cmd_montecarlo)

    p_bench = sub.add_parser("bench", help="aggregation-weight timing table")
    common(p_bench)
    p_bench.add_argument("--m-grid", default="100,200,300",
                         help="comma-separated training-set sizes")
    p_bench.add_argument("--queries", type=int, default=1000)
    p_bench.add_argument("--repetitions", type=int, default=7)
    p_bench.set_defaults(func=cmd_bench)

    p_val = sub.add_parser("validate",
                           help="connectivity assumptions and stability report only")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TopologyValidationError as exc:
        print(f"validation error (connectivity assumption violated): {exc}",
              file=sys.stderr)
        return EXIT_VALIDATION
    except NonFiniteStateError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
