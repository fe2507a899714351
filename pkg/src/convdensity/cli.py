"""Command-line front end.

Four subcommands: ``estimate`` (run the pointwise rule on a sample file),
``simulate`` (draw observations from a configured model), ``benchmark`` (the
Monte Carlo risk study), and ``inspect-kernel`` (dump one deconvolution
kernel table with its constants).  Options may come from an INI-style config
file (flat key = value under section names matching the flag groups); any
command-line flag overrides the file value.

Outputs embed a hash of the resolved configuration and the seed, and contain
no timestamps, so reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys

import numpy as np

from .errors import ConvDensityError
from .grid import build_grid
from .kernels import KERNELS, build_deconv_kernel, get_kernel, kernel_constants
from .model import (NoiseModel, TargetSpec, certify_noise, load_sample,
                    sample_model, save_sample)
from .risk import run_risk_experiment
from .selection import result_to_csv, select, selection_inequality_gap
from .surface import build_surface


class CliError(ConvDensityError):
    kind = "cli-error"

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _parse_noise(spec_str, alpha, d, mu):
    """Noise spec strings: 'none', 'laplace:SCALE', 'gaussian:SIGMA'."""
    if spec_str in (None, "", "none"):
        return NoiseModel.none(d=d) if alpha == 0 else NoiseModel(
            alpha=alpha, kind="none", d=d)
    parts = spec_str.split(":")
    kind = parts[0]
    scale = float(parts[1]) if len(parts) > 1 else 1.0
    if kind == "laplace":
        m = NoiseModel.laplace(alpha, scale, d=d)
    elif kind == "gaussian":
        m = NoiseModel.gaussian(alpha, scale, d=d)
    else:
        raise CliError("unknown-noise", f"unknown noise kind {kind!r} "
                       f"(use none, laplace:b, gaussian:sigma)")
    if mu is not None:
        m.mu = np.full(d, float(mu))
    return m


def _parse_target(spec_str, d):
    """Target spec strings: 'gaussian[:MEAN:SD]', 'uniform[:LO:HI]',
    'laplace[:SCALE]', 'mixture:w,m,s;w,m,s;...'."""
    if spec_str in (None, "", "gaussian"):
        return TargetSpec.gaussian(d=d)
    parts = spec_str.split(":")
    kind = parts[0]
    if kind == "gaussian":
        mean = float(parts[1]) if len(parts) > 1 else 0.0
        sd = float(parts[2]) if len(parts) > 2 else 1.0
        return TargetSpec.gaussian(mean, sd, d=d)
    if kind == "uniform":
        lo = float(parts[1]) if len(parts) > 1 else 0.0
        hi = float(parts[2]) if len(parts) > 2 else 1.0
        return TargetSpec.uniform([[lo, hi]] * d)
    if kind == "laplace":
        scale = float(parts[1]) if len(parts) > 1 else 1.0
        return TargetSpec.laplace_product(scale, d=d)
    if kind == "mixture":
        trips = [tuple(float(v) for v in blk.split(",")) for blk in parts[1].split(";")]
        return TargetSpec.gaussian_mixture(
            [t[0] for t in trips], [t[1] for t in trips], [t[2] for t in trips], d=d)
    raise CliError("unknown-target", f"unknown target kind {kind!r}")


_FLAG_DEFAULTS = {
    "alpha": 0.0, "noise": "none", "kernel": "smooth", "grid_mode": "isotropic",
    "p": 2.0, "k_min": None, "k_max": None, "mu": None, "d": 1,
    "n": 1000, "replicates": 1, "seed": 1, "target": "gaussian",
    "n_list": None, "eval_grid": None, "eval_points": None,
    "h": 1.0, "resolution": None, "threads": 0,
    "clip_nonnegative": False, "describe_grid": False, "quad_nodes": 241,
}


def _load_config_file(path):
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise CliError("config-not-found", f"cannot read config file {path!r}")
    flat = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            flat[key.replace("-", "_")] = value
    return flat


def _coerce(key, value):
    if value is None:
        return None
    default = _FLAG_DEFAULTS.get(key)
    if isinstance(default, bool):
        return str(value).lower() in ("1", "true", "yes", "on")
    if key in ("n_list",):
        return [int(v) for v in str(value).split(",")]
    if isinstance(default, float):
        return float(value)
    if isinstance(default, int) or key in ("k_min", "k_max", "resolution"):
        return int(value)
    if key == "mu":
        return float(value)
    return value


def resolve_config(args):
    """Merge defaults, config file, and CLI flags (flags win)."""
    cfg = dict(_FLAG_DEFAULTS)
    if getattr(args, "config", None):
        for key, value in _load_config_file(args.config).items():
            if key not in _FLAG_DEFAULTS:
                raise CliError("unknown-config-key", f"unknown config key {key!r}")
            cfg[key] = _coerce(key, value)
    for key in _FLAG_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = _coerce(key, val)
    if cfg["p"] < 1.0:
        raise CliError("invalid-p", "risk index p must be >= 1")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _grid_cfg(cfg):
    out = {"mode": cfg["grid_mode"]}
    if cfg["k_min"] is not None:
        out["k_min"] = cfg["k_min"]
    if cfg["k_max"] is not None:
        out["k_max"] = cfg["k_max"]
    return out


def _eval_points(cfg, sample):
    if cfg["eval_points"]:
        pts = np.loadtxt(cfg["eval_points"], delimiter=",", ndmin=2)
        if pts.shape[1] != sample.d:
            raise CliError("bad-eval-points", "evaluation point dimension mismatch")
        return pts
    if cfg["eval_grid"]:
        lo, hi, count = cfg["eval_grid"].split(":")
        axis = np.linspace(float(lo), float(hi), int(count))
    else:
        lo = sample.points.min(axis=0)
        hi = sample.points.max(axis=0)
        axis = None
        if sample.d == 1:
            axis = np.linspace(lo[0], hi[0], 201)
    if sample.d != 1:
        raise CliError("bad-eval-points",
                       "d > 1 estimation needs an explicit eval-points file")
    return axis[:, None]


def _describe_grid_text(grid):
    info = grid.describe()
    lines = ["grid summary:"]
    for key in ("mode", "k_min", "k_max", "size"):
        lines.append(f"  {key:14s} {info[key]}")
    for key in ("rms_scale_min", "rms_scale_max", "sup_scale_min", "sup_scale_max"):
        lines.append(f"  {key:14s} {info[key]:.6g}")
    return "\n".join(lines)


def cmd_estimate(cfg, sample_path, out_prefix):
    try:
        sample = load_sample(sample_path)
    except (OSError, ValueError) as exc:
        raise CliError("empty-sample" if "empty" in str(exc).lower() else "parse-error",
                       f"cannot load sample: {exc}") from exc
    if cfg["kernel"] not in KERNELS:
        raise CliError("unknown-kernel",
                       f"unknown kernel {cfg['kernel']!r}; catalogue: {sorted(KERNELS)}")
    model = _parse_noise(cfg["noise"], cfg["alpha"], sample.d, cfg["mu"])
    certify_noise(model)
    consts = kernel_constants(cfg["kernel"], model, p=cfg["p"])
    grid = build_grid(sample.n, sample.d, model.gamma, **_grid_cfg(cfg))
    if grid.size ** 2 > 10 ** 6:
        print(f"warning: selection cost scales with |grid|^2 = {grid.size ** 2}; "
              f"consider --grid-mode isotropic", file=sys.stderr)
    if cfg["describe_grid"]:
        print(_describe_grid_text(grid))
    tables = [build_deconv_kernel(cfg["kernel"], model, h) for h in grid.members]
    pts = _eval_points(cfg, sample)
    surf = build_surface(sample, grid, tables, pts, consts, cfg["p"])
    result = select(surf)
    gap = selection_inequality_gap(surf, result)

    estimates = result.estimate
    clipped_mass = 0.0
    if cfg["clip_nonnegative"]:
        clipped = np.maximum(estimates, 0.0)
        if sample.d == 1 and pts.shape[0] > 1:
            clipped_mass = float(np.trapezoid(np.maximum(-estimates, 0.0), pts[:, 0]))
        result.estimate[:] = clipped

    csv_path = out_prefix + ".csv"
    with open(csv_path, "w") as fh:
        fh.write(result_to_csv(result))
    diag = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "n": sample.n,
        "d": sample.d,
        "sample_seed": sample.seed,
        "certified_margin": model.certified_margin,
        "grid": grid.describe(),
        "selection_gap": gap,
        "clipped_mass": clipped_mass,
        "boundary_hits": int(result.boundary_hit.sum()),
    }
    with open(out_prefix + ".json", "w") as fh:
        json.dump(diag, fh, sort_keys=True, indent=1, default=str)
        fh.write("\n")
    return 0


def cmd_simulate(cfg, out_prefix):
    target = _parse_target(cfg["target"], cfg["d"])
    model = _parse_noise(cfg["noise"], cfg["alpha"], cfg["d"], cfg["mu"])
    if model.alpha > 0:
        certify_noise(model)
    sample = sample_model(target, model, cfg["n"], cfg["seed"])
    save_sample(sample, out_prefix + ".csv",
                extra={"config_hash": config_hash(cfg)})
    return 0


def cmd_benchmark(cfg, out_prefix):
    if cfg["replicates"] < 1:
        raise CliError("invalid-replicates", "need at least one replicate")
    if cfg["kernel"] not in KERNELS:
        raise CliError("unknown-kernel",
                       f"unknown kernel {cfg['kernel']!r}; catalogue: {sorted(KERNELS)}")
    target = _parse_target(cfg["target"], cfg["d"])
    model = _parse_noise(cfg["noise"], cfg["alpha"], cfg["d"], cfg["mu"])
    n_list = cfg["n_list"] or [cfg["n"]]
    threads = cfg["threads"] or (os.cpu_count() or 1)
    report = run_risk_experiment(
        target, model, cfg["kernel"], _grid_cfg(cfg), cfg["p"], n_list,
        cfg["replicates"], cfg["seed"], quad_nodes=cfg["quad_nodes"],
        n_jobs=threads,
    )
    report.config["config_hash"] = config_hash(cfg)
    with open(out_prefix + ".csv", "w") as fh:
        fh.write(report.to_csv())
    with open(out_prefix + ".json", "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    return 0


def cmd_inspect_kernel(cfg, out_prefix):
    if cfg["kernel"] not in KERNELS:
        raise CliError("unknown-kernel",
                       f"unknown kernel {cfg['kernel']!r}; catalogue: {sorted(KERNELS)}")
    model = _parse_noise(cfg["noise"], cfg["alpha"], cfg["d"], cfg["mu"])
    certify_noise(model)
    consts = kernel_constants(cfg["kernel"], model, p=cfg["p"])
    h = np.full(cfg["d"], float(cfg["h"]))
    table = build_deconv_kernel(cfg["kernel"], model, h,
                                resolution=cfg["resolution"])
    table.dump(out_prefix + ".bin")
    payload = {
        "config_hash": config_hash(cfg),
        "kernel": cfg["kernel"],
        "alpha": model.alpha,
        "certified_margin": model.certified_margin,
        "gamma": list(consts.gamma),
        "weighted_l1": consts.weighted_l1,
        "weighted_l2": consts.weighted_l2,
        "fourier_l1": consts.fourier_l1,
        "fourier_l2": consts.fourier_l2,
        "sup_bound": consts.sup_bound,
        "l2_bound": consts.l2_bound,
        "h": [float(v) for v in h],
        "resolution": list(table.resolution),
        "window": table.window.tolist(),
        "fourier_residual": table.fourier_residual,
        "boundary_magnitude": table.boundary_magnitude,
        "sup_value": table.sup_value(),
        "l2_value": table.l2_value(),
    }
    with open(out_prefix + ".json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convdensity",
        description="Adaptive pointwise-bandwidth density estimation for "
                    "partially contaminated samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="INI config file (flags override it)")
        p.add_argument("--alpha", type=float, help="contamination probability")
        p.add_argument("--noise", help="none | laplace:SCALE | gaussian:SIGMA")
        p.add_argument("--mu", type=float,
                       help="ill-posedness exponent per axis (alpha = 1)")
        p.add_argument("--kernel", help=f"base kernel ({', '.join(sorted(KERNELS))})")
        p.add_argument("--grid-mode", dest="grid_mode", choices=["full", "isotropic"])
        p.add_argument("--p", type=float, help="risk index (>= 1)")
        p.add_argument("--k-min", dest="k_min", type=int)
        p.add_argument("--k-max", dest="k_max", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int,
                       help="worker cap for replicate parallelism (0 = cores)")
        p.add_argument("--out", required=True, help="output path prefix")

    pe = sub.add_parser("estimate", help="estimate a density from a sample CSV")
    add_common(pe)
    pe.add_argument("sample", help="CSV sample file (one row per observation)")
    pe.add_argument("--eval-points", dest="eval_points",
                    help="CSV file of evaluation points")
    pe.add_argument("--eval-grid", dest="eval_grid", help="LO:HI:COUNT grid spec")
    pe.add_argument("--describe-grid", dest="describe_grid", action="store_const",
                    const=True, help="print the bandwidth grid summary")
    pe.add_argument("--clip-nonnegative", dest="clip_nonnegative",
                    action="store_const", const=True,
                    help="clip negative estimates to zero (reports clipped mass)")

    ps = sub.add_parser("simulate", help="draw a sample from a configured model")
    add_common(ps)
    ps.add_argument("--target", help="gaussian[:M:S] | uniform[:LO:HI] | "
                                     "laplace[:B] | mixture:w,m,s;...")
    ps.add_argument("--n", type=int, help="sample size")
    ps.add_argument("--d", type=int, help="dimension")

    pb = sub.add_parser("benchmark", help="Monte Carlo risk experiment")
    add_common(pb)
    pb.add_argument("--target")
    pb.add_argument("--d", type=int)
    pb.add_argument("--n", type=int)
    pb.add_argument("--n-list", dest="n_list", help="comma-separated sample sizes")
    pb.add_argument("--replicates", type=int)
    pb.add_argument("--quad-nodes", dest="quad_nodes", type=int)

    pk = sub.add_parser("inspect-kernel", help="dump a deconvolution kernel table")
    add_common(pk)
    pk.add_argument("--d", type=int)
    pk.add_argument("--h", type=float, help="bandwidth (same on every axis)")
    pk.add_argument("--resolution", type=int)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        cfg["command"] = args.command
        if args.command == "estimate":
            return cmd_estimate(cfg, args.sample, args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "benchmark":
            return cmd_benchmark(cfg, args.out)
        return cmd_inspect_kernel(cfg, args.out)
    except ConvDensityError as exc:
        payload = {"error": exc.kind, "message": str(exc)}
        print(json.dumps(payload, sort_keys=True))
        return 2
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": "parse-error", "message": str(exc)},
                         sort_keys=True))
        return 2


if __name__ == "__main__":
    sys.exit(main())
