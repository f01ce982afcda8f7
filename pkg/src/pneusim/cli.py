"""Command-line experiment runner.

Subcommands
    bus-bench     polling-rate benchmark of the simulated bus
    step          closed-loop step-response trials with confidence bands
    fit           multi-start model fit on a dataset CSV
    compare       fit and evaluate all three models per chamber
    make-dataset  generate a synthetic benchmark dataset CSV

Every run takes an optional JSON config (flags override config values),
echoes the resolved configuration into the output directory, and writes
plot-ready CSV/JSON artifacts.  Outputs are byte-reproducible from
(config, seed); wall-clock measurements such as per-step evaluation
times are printed to stdout only, never written to files.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bus as bus_mod
from . import control, dynamics, sysid

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


@dataclass
class RunConfig:
    """Resolved invocation: subcommand, merged config, output dir, seed."""

    subcommand: str
    config: dict
    out_dir: Path
    seed: int


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise sysid.DatasetError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise sysid.DatasetError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise sysid.DatasetError(f"config {path} must hold a JSON object")
    return doc


def _resolve(args, defaults: dict, overrides: dict) -> RunConfig:
    """Merge defaults <- config file <- explicit CLI flags."""
    config = dict(defaults)
    config.update(_load_config(args.config))
    config.update({k: v for k, v in overrides.items() if v is not None})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = int(config.get("seed", 0))
    config["seed"] = seed
    return RunConfig(args.subcommand, config, out_dir, seed)


def _echo_config(run: RunConfig) -> None:
    doc = {"subcommand": run.subcommand, **run.config}
    _write_json(run.out_dir / "config_echo.json", doc)


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- bus-bench ---------------------------------------------------------------------


def cmd_bus_bench(args) -> int:
    defaults = {
        "devices": 3,
        "iterations": 2044,
        "per_transaction_overhead_s": None,
        "per_loop_overhead_s": None,
        "device_compute_delay_s": 0.0,
        "jitter_std_s": 0.0,
    }
    overrides = {
        "devices": args.devices,
        "iterations": args.iterations,
        "per_transaction_overhead_s": args.overhead,
        "per_loop_overhead_s": args.per_loop,
        "jitter_std_s": args.jitter,
        "seed": args.seed,
    }
    run = _resolve(args, defaults, overrides)
    cfg = run.config
    devices = int(cfg["devices"])
    iterations = int(cfg["iterations"])
    if not 1 <= devices <= 4:
        print(f"error: --devices must be in [1, 4], got {devices}", file=sys.stderr)
        return EXIT_USAGE
    if iterations < 1:
        print(f"error: --iterations must be >= 1, got {iterations}", file=sys.stderr)
        return EXIT_USAGE

    timing = bus_mod.DEFAULT_TIMING
    tx = cfg["per_transaction_overhead_s"]
    loop = cfg["per_loop_overhead_s"]
    if tx is not None or loop is not None:
        # An explicit overhead replaces the calibrated pair entirely.
        timing = bus_mod.BusTimingConfig(
            per_transaction_overhead_s=float(tx) if tx is not None else 0.0,
            per_loop_overhead_s=float(loop) if loop is not None else 0.0,
            device_compute_delay_s=float(cfg["device_compute_delay_s"]),
            jitter_std_s=float(cfg["jitter_std_s"]),
        )
    elif cfg["jitter_std_s"] or cfg["device_compute_delay_s"]:
        timing = bus_mod.BusTimingConfig(
            per_transaction_overhead_s=timing.per_transaction_overhead_s,
            per_loop_overhead_s=timing.per_loop_overhead_s,
            device_compute_delay_s=float(cfg["device_compute_delay_s"]),
            jitter_std_s=float(cfg["jitter_std_s"]),
        )
    cfg["timing_used"] = {
        "per_transaction_overhead_s": timing.per_transaction_overhead_s,
        "per_loop_overhead_s": timing.per_loop_overhead_s,
        "device_compute_delay_s": timing.device_compute_delay_s,
        "jitter_std_s": timing.jitter_std_s,
        "baud": timing.baud,
    }
    _echo_config(run)

    stats = [
        bus_mod.measure_loop_rate(n, iterations, config=timing, seed=run.seed)
        for n in range(1, devices + 1)
    ]
    print(f"{'devices':>8}{'mean Hz':>12}{'std Hz':>10}")
    for s in stats:
        print(f"{s.device_count:>8}{s.mean_hz:>12.1f}{s.std_hz:>10.1f}")

    _write_json(run.out_dir / "loop_rates.json", [s.to_dict() for s in stats])
    with open(run.out_dir / "loop_rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["devices", "iterations", "mean_hz", "std_hz"])
        for s in stats:
            writer.writerow([s.device_count, s.iterations,
                             f"{s.mean_hz:.6f}", f"{s.std_hz:.6f}"])
    return EXIT_OK


# -- step --------------------------------------------------------------------------


def cmd_step(args) -> int:
    defaults = {
        "p0_kpa": 50.0,
        "p_cmd_kpa": 300.0,
        "duration_s": 3.0,
        "trials": 10,
        "noise_kpa": 0.5,
        "model_kind": "nonlinear",
    }
    overrides = {"trials": args.trials, "noise_kpa": args.noise, "seed": args.seed}
    run = _resolve(args, defaults, overrides)
    cfg = run.config
    trials = int(cfg["trials"])
    if trials < 1:
        print(f"error: trials must be >= 1, got {trials}", file=sys.stderr)
        return EXIT_USAGE
    _echo_config(run)

    p0 = control.absolute_pa(float(cfg["p0_kpa"]))
    p_cmd = control.absolute_pa(float(cfg["p_cmd_kpa"]))
    runs = []
    all_metrics = []
    for trial in range(trials):
        device = control.make_bench_device(
            model_kind=cfg["model_kind"],
            sensor_noise_kpa=float(cfg["noise_kpa"]),
            seed=run.seed + trial,
        )
        log, metrics_list = control.step_response(
            device, float(p0), float(p_cmd), float(cfg["duration_s"])
        )
        runs.append(log.p)
        all_metrics.append(metrics_list)
    stack = np.stack(runs)                      # (trials, n, 4)
    mean = stack.mean(axis=0)
    sem = stack.std(axis=0, ddof=0) / np.sqrt(trials)
    ci_lo, ci_hi = mean - 1.96 * sem, mean + 1.96 * sem

    t = np.arange(mean.shape[0]) / 100.0
    with open(run.out_dir / "step_response.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t_s"]
        for i in range(4):
            header += [f"p{i}_mean_kpa", f"p{i}_ci_lo_kpa", f"p{i}_ci_hi_kpa"]
        writer.writerow(header)
        for k in range(mean.shape[0]):
            row = [f"{t[k]:.6f}"]
            for i in range(4):
                row += [
                    f"{control.gauge_kpa(mean[k, i]):.6f}",
                    f"{control.gauge_kpa(ci_lo[k, i]):.6f}",
                    f"{control.gauge_kpa(ci_hi[k, i]):.6f}",
                ]
            writer.writerow(row)

    metrics_doc = {
        "trials": trials,
        "per_chamber": [
            {
                "chamber": i,
                "rise_time_s": float(np.mean([m[i].rise_time for m in all_metrics])),
                "overshoot_frac": float(np.mean([m[i].overshoot for m in all_metrics])),
                "settling_time_s": float(np.mean([m[i].settling_time for m in all_metrics])),
                "steady_state_error_pa": float(
                    np.mean([m[i].steady_state_error for m in all_metrics])
                ),
                "ci_width_final_kpa": float(control.gauge_kpa(ci_hi[-1, i])
                                            - control.gauge_kpa(ci_lo[-1, i])),
            }
            for i in range(4)
        ],
    }
    _write_json(run.out_dir / "step_metrics.json", metrics_doc)
    for row in metrics_doc["per_chamber"]:
        print(
            f"chamber {row['chamber']}: rise {row['rise_time_s']:.3f}s, "
            f"overshoot {row['overshoot_frac'] * 100:.1f}%, "
            f"settle {row['settling_time_s']:.3f}s, "
            f"sse {row['steady_state_error_pa'] / 1e3:.2f} kPa"
        )
    return EXIT_OK


# -- fit / compare -------------------------------------------------------------------


def _load_split(cfg) -> tuple[sysid.Dataset, sysid.Dataset]:
    dataset_path = cfg.get("dataset")
    if not dataset_path:
        raise sysid.DatasetError("config needs a 'dataset' CSV path")
    ds = sysid.load_dataset(dataset_path)
    n_train = int(cfg.get("train_points", max(2, round(len(ds) * 10 / 11))))
    if n_train >= len(ds):
        raise sysid.DatasetError(
            f"train_points={n_train} leaves no validation data ({len(ds)} rows)"
        )
    return sysid.split_dataset(ds, n_train)


def cmd_fit(args) -> int:
    defaults = {
        "model_kind": "nonlinear",
        "chamber": 0,
        "restarts": 20,
        "train_points": None,
        "dataset": None,
    }
    overrides = {
        "dataset": args.dataset,
        "model_kind": args.model,
        "restarts": args.restarts,
        "chamber": args.chamber,
        "seed": args.seed,
    }
    run = _resolve(args, defaults, overrides)
    cfg = run.config
    if cfg["model_kind"] not in sysid.MODEL_KINDS:
        print(f"error: model must be one of {sysid.MODEL_KINDS}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.get("train_points") is None:
        cfg.pop("train_points", None)
    _echo_config(run)

    train, validation = _load_split(cfg)
    result = sysid.fit(
        cfg["model_kind"], train, chamber=int(cfg["chamber"]),
        n_restarts=int(cfg["restarts"]), seed=run.seed,
    )
    predicted = sysid.predict_open_loop(result.params, validation, int(cfg["chamber"]))
    r2_val, iae_val = sysid.metrics(
        predicted, validation.p[:, int(cfg["chamber"])], validation.dt)

    dynamics.save_params(result.params, run.out_dir / "fitted_params.json")
    _write_json(run.out_dir / "fit_summary.json", {
        "model_kind": result.model_kind,
        "chamber": int(cfg["chamber"]),
        "r2_train_pdot": result.r_squared,
        "r2_val_pressure": r2_val,
        "iae_val_pa_s": iae_val,
        "iae_train_pa_s": result.iae,
        "n_restarts": result.n_restarts,
        "n_converged": result.n_converged,
        "best_restart_seed": result.best_restart_seed,
    })
    print(
        f"{result.model_kind} chamber {cfg['chamber']}: "
        f"train r2 {result.r_squared:.4f}, val r2 {r2_val:.4f}, "
        f"{result.n_converged}/{result.n_restarts} restarts converged "
        f"({result.fit_wall_time:.1f}s)"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    defaults = {
        "restarts": 20,
        "train_points": None,
        "dataset": None,
        "model_kinds": list(sysid.MODEL_KINDS),
    }
    overrides = {
        "dataset": args.dataset,
        "restarts": args.restarts,
        "seed": args.seed,
    }
    run = _resolve(args, defaults, overrides)
    cfg = run.config
    if cfg.get("train_points") is None:
        cfg.pop("train_points", None)
    _echo_config(run)

    train, validation = _load_split(cfg)
    report = sysid.compare_models(
        train, validation, n_restarts=int(cfg["restarts"]), seed=run.seed,
        model_kinds=tuple(cfg["model_kinds"]),
    )
    # Timings are wall-clock measurements: stdout only, keeping the
    # written artifacts byte-reproducible.
    print(report.format_table())
    _write_json(run.out_dir / "comparison.json", report.to_dict(include_timings=False))
    report.to_csv(run.out_dir / "comparison.csv", include_timings=False)
    return EXIT_OK


# -- make-dataset ----------------------------------------------------------------------


def cmd_make_dataset(args) -> int:
    defaults = {
        "model_kind": "nonlinear",
        "duration_s": 220.0,
        "rate_hz": 100.0,
        "noise_kpa": 0.5,
        "joint_motion": True,
    }
    overrides = {"seed": args.seed, "noise_kpa": args.noise}
    run = _resolve(args, defaults, overrides)
    cfg = run.config
    _echo_config(run)

    ds = sysid.synthetic_dataset(
        model_kind=cfg["model_kind"],
        duration=float(cfg["duration_s"]),
        rate=float(cfg["rate_hz"]),
        seed=run.seed,
        noise_kpa=float(cfg["noise_kpa"]),
        with_joint_motion=bool(cfg["joint_motion"]),
    )
    log = control.TrackingLog(ds.t, ds.p_cmd, ds.p, ds.u, ds.q, ds.q_dot)
    out_path = run.out_dir / "dataset.csv"
    log.to_csv(out_path)
    print(f"wrote {len(ds)} samples to {out_path}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pneusim",
        description="Simulated pneumatic pressure-control experiments",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")

    p = sub.add_parser("bus-bench", parents=[common],
                       help="loop-rate benchmark for 1..N daisy-chained devices")
    p.add_argument("--devices", type=int, default=None,
                   help="benchmark 1..N devices (N in [1, 4])")
    p.add_argument("--iterations", type=int, default=None,
                   help="polling sweeps per row (default 2044)")
    p.add_argument("--overhead", type=float, default=None,
                   help="per-transaction overhead in seconds; overrides the "
                        "calibrated timing (per-loop overhead drops to 0 "
                        "unless --per-loop is also given)")
    p.add_argument("--per-loop", type=float, default=None,
                   help="per-sweep overhead in seconds")
    p.add_argument("--jitter", type=float, default=None,
                   help="std of per-transaction timing jitter in seconds")
    p.set_defaults(func=cmd_bus_bench)

    p = sub.add_parser("step", parents=[common],
                       help="closed-loop step response, mean of seeded trials "
                            "with a 95% confidence band")
    p.add_argument("--trials", type=int, default=None, help="number of trials")
    p.add_argument("--noise", type=float, default=None,
                   help="sensor noise std in kPa (0 gives a zero-width band)")
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("fit", parents=[common],
                       help="multi-start fit of one model on a dataset CSV")
    p.add_argument("--dataset", help="dataset CSV path")
    p.add_argument("--model", choices=sysid.MODEL_KINDS, default=None)
    p.add_argument("--chamber", type=int, default=None, help="chamber index 0..3")
    p.add_argument("--restarts", type=int, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", parents=[common],
                       help="fit and evaluate all models per chamber")
    p.add_argument("--dataset", help="dataset CSV path")
    p.add_argument("--restarts", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("make-dataset", parents=[common],
                       help="generate a synthetic benchmark dataset CSV")
    p.add_argument("--noise", type=float, default=None,
                   help="sensor noise std in kPa")
    p.set_defaults(func=cmd_make_dataset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except sysid.DatasetError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (sysid.FitFailureError, dynamics.DivergenceError,
            dynamics.InvalidParameterizationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
