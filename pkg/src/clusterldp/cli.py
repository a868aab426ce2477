"""Command-line front end.

    clusterldp simulate --config run.toml [--seed S] [--threads N] [--out DIR]
    clusterldp ratefn   --config run.toml ...
    clusterldp verify {scalar,path,spatial,void,oracle} --config run.toml ...

Every run writes its CSVs plus ``effective_config.toml`` into the output
directory. Exit codes: 0 success, 2 configuration error, 3 cluster-size cap hit.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import simulate as tsim
from . import spatial as ssim
from .config import Config, ConfigError, dump_config, load_config
from .distributions import BorelLaw, ClusterSizeCapError
from .ratefn import ScalarRate, hawkes_rate, legendre
from .verify import (
    SlopeExperiment,
    fmt,
    panjer_tail,
    run_finite_dim,
    run_scalar_slope,
    run_tilted_slope,
    run_void_experiment,
    write_estimates_csv,
    write_void_csv,
)
from ._streams import SINGLE, generator

EXIT_CONFIG = 2
EXIT_CAP = 3


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _require(exp: dict, *keys):
    missing = [k for k in keys if k not in exp]
    if missing:
        raise ConfigError(f"missing [experiment] keys: {missing}")


def cmd_simulate(cfg: Config, out: Path, threads: int = 1) -> None:
    exp = cfg.experiment_for("simulate")
    spec = cfg.spec
    rng = generator(cfg.seed, SINGLE)
    margin = exp.get("margin")
    if isinstance(spec, tsim.TemporalSpec):
        _require(exp, "horizon")
        t = float(exp["horizon"])
        real = tsim.simulate_truncated(spec, t, margin, rng, cap=cfg.size_cap)
        tsim.write_realization_csv(real, out / "realization.csv")
        window, volume = tsim.count_in_interval(real, 0.0, t), t
        n_imm = len(real.immigrant_times)
    else:
        _require(exp, "radius")
        r = float(exp["radius"])
        real = ssim.simulate_spatial(spec, r, margin, rng, cap=cfg.size_cap)
        ssim.write_realization_csv(real, out / "realization.csv")
        window, volume = ssim.count_in_ball(real, r), ssim.omega_d(spec.d, r)
        n_imm = len(real.immigrants)
    _write_rows(out / "summary.csv",
                ["n_immigrants", "n_events", "count_in_window", "window_volume", "mean_rate", "expected_rate"],
                [[n_imm, len(real), window, fmt(volume), fmt(window / volume), fmt(spec.intensity)]])


def cmd_ratefn(cfg: Config, out: Path, threads: int = 1) -> None:
    exp = cfg.experiment_for("ratefn")
    spec = cfg.spec
    rate = ScalarRate(spec.nu, spec.size_law)
    xs = np.linspace(float(exp.get("x_min", 0.0)), float(exp.get("x_max", 5.0 * rate.mean)),
                     int(exp.get("n_points", 101)))
    xs = np.unique(np.concatenate([xs, [rate.mean]]))
    borel = isinstance(spec.size_law, BorelLaw)
    rows = []
    for x in xs.tolist():
        theta = rate.tilt(x) if x > 0 else None
        closed = hawkes_rate(spec.nu, spec.size_law.mu, x) if borel else None
        rows.append([fmt(x), fmt(legendre(rate, x)), fmt(theta), fmt(closed)])
    _write_rows(out / "ratefn.csv", ["x", "rate", "theta", "rate_closed_form"], rows)
    n_theta = int(exp.get("n_theta", 0))
    if n_theta > 0:
        theta0, _ = spec.size_law.domain_sup()
        hi = float(exp.get("theta_max", theta0 if math.isfinite(theta0) else 1.0))
        ths = np.linspace(float(exp.get("theta_min", -5.0)), hi, n_theta)
        _write_rows(out / "cgf.csv", ["theta", "cgf"], [[fmt(th), fmt(rate.cgf(th))] for th in ths.tolist()])


def _verify_scalar(cfg: Config, out: Path, threads: int, command: str) -> None:
    exp = cfg.experiment_for(command)
    _require(exp, "threshold", "scales")
    spec = cfg.spec
    if command == "spatial" and not isinstance(spec, ssim.SpatialSpec):
        raise ConfigError("'verify spatial' needs model.kind = 'spatial'")
    if command == "scalar" and not isinstance(spec, tsim.TemporalSpec):
        raise ConfigError("'verify scalar' needs model.kind = 'temporal'")
    try:
        e = SlopeExperiment(spec, float(exp["threshold"]), tuple(exp["scales"]), int(exp.get("n_reps", 10_000)),
                            cfg.seed, exp.get("side", "upper"), exp.get("margin"), cfg.size_cap)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    write_estimates_csv(run_scalar_slope(e, threads), out / f"verify_{command}.csv")


def _verify_path(cfg: Config, out: Path, threads: int) -> None:
    exp = cfg.experiment_for("path")
    _require(exp, "times", "lower", "upper", "scales")
    spec = cfg.spec
    if not isinstance(spec, tsim.TemporalSpec):
        raise ConfigError("'verify path' needs model.kind = 'temporal'")
    try:
        est = run_finite_dim(spec, exp["times"], exp["lower"], exp["upper"], exp["scales"],
                             int(exp.get("n_reps", 10_000)), cfg.seed, exp.get("margin"), threads, cfg.size_cap)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    write_estimates_csv(est, out / "verify_path.csv")


def _verify_void(cfg: Config, out: Path, threads: int) -> None:
    exp = cfg.experiment_for("void")
    _require(exp, "radii")
    spec = cfg.spec
    if not isinstance(spec, ssim.SpatialSpec):
        raise ConfigError("'verify void' needs model.kind = 'spatial'")
    try:
        rows = run_void_experiment(spec, exp["radii"], exp.get("margin"), int(exp.get("n_reps", 10_000)),
                                   cfg.seed, threads, cfg.size_cap)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    write_void_csv(rows, out / "verify_void.csv")


def _verify_oracle(cfg: Config, out: Path, threads: int) -> None:
    exp = cfg.experiment_for("oracle")
    _require(exp, "threshold", "scales")
    spec = cfg.spec
    a = float(exp["threshold"])
    rate = ScalarRate(spec.nu, spec.size_law)
    if not a > rate.mean:
        raise ConfigError("oracle threshold must exceed the mean nu E[S]")
    scales = tuple(map(float, exp["scales"]))
    est = run_tilted_slope(spec.nu, spec.size_law, a, scales, int(exp.get("n_reps", 10_000)), cfg.seed, threads,
                           cfg.size_cap)
    write_estimates_csv(est, out / "verify_oracle.csv")
    target = legendre(rate, a)
    rows = []
    for t in scales:
        p = panjer_tail(spec.nu * t, spec.size_law, a * t)
        rows.append([fmt(t), fmt(p), fmt(-math.log(p) / t if p > 0 else None), fmt(target)])
    _write_rows(out / "verify_oracle_exact.csv", ["scale", "p_exact", "slope_exact", "target"], rows)


def cmd_verify(cfg: Config, out: Path, subcommand: str, threads: int = 1) -> None:
    if subcommand in ("scalar", "spatial"):
        _verify_scalar(cfg, out, threads, subcommand)
    elif subcommand == "path":
        _verify_path(cfg, out, threads)
    elif subcommand == "void":
        _verify_void(cfg, out, threads)
    elif subcommand == "oracle":
        _verify_oracle(cfg, out, threads)
    else:
        raise ConfigError(f"unknown verify subcommand {subcommand!r}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML configuration file")
    common.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, default=1, help="replication parallelism; results do not depend on it")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    p = argparse.ArgumentParser(prog="clusterldp", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one realization")
    sub.add_parser("ratefn", parents=[common], help="tabulate the rate function")
    v = sub.add_parser("verify", parents=[common], help="run a Monte Carlo verification experiment")
    v.add_argument("which", choices=["scalar", "path", "spatial", "void", "oracle"])
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out or cfg.output.get("dir", "out"))
        cfg = replace(cfg, output={**cfg.output, "dir": str(out)})
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, out, args.threads)
        elif args.command == "ratefn":
            cmd_ratefn(cfg, out, args.threads)
        else:
            cmd_verify(cfg, out, args.which, args.threads)
        (out / "effective_config.toml").write_text(dump_config(cfg), encoding="utf-8")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ClusterSizeCapError as err:
        print(f"runtime cap: {err}", file=sys.stderr)
        return EXIT_CAP
    return 0


if __name__ == "__main__":
    sys.exit(main())
