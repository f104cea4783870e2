"""nvr-sim command line.

Subcommands:
  run       - execute the scenario grid of a config file, write CSV reports
  model     - evaluate the analytic workload/time model from a spec file
  overhead  - print the prefetcher hardware storage table
  sweep     - NSB x L2 sensitivity grid around a config

Exit code 0 on success; 2 with a diagnostic on validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import analytic
from .harness import (ConfigError, emit_reports, parse_config,
                      run_experiment, sensitivity_sweep)
from .prefetch import format_overhead_table
from .workload import sample_bernoulli_mask


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    rows, _ = run_experiment(cfg)
    paths = emit_reports(rows, args.out, cfg)
    for p in paths:
        print("wrote %s" % p)
    return 0


def _cmd_overhead(args) -> int:
    print(format_overhead_table(args.n))
    return 0


_AXIS_ALIASES = {"nsb": "nsb_kib", "l2": "l2_kib", "l1": "l1_kib",
                 "mshr": "mshr_entries"}


def _parse_axis(text: str) -> tuple:
    name, _, values = text.partition("=")
    if not values:
        raise ConfigError("--axis expects name=v1,v2,... got %r" % text)
    name = _AXIS_ALIASES.get(name.strip(), name.strip())
    try:
        vals = [int(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--axis %s: values must be integers" % name)
    if not vals:
        raise ConfigError("--axis %s: empty value list" % name)
    return name, vals


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    axes = dict(_parse_axis(a) for a in args.axis)
    nsb_values = axes.pop("nsb_kib", [cfg.memory.nsb_kib])
    l2_values = axes.pop("l2_kib", [cfg.memory.l2_kib])
    if axes:
        raise ConfigError("sweep supports nsb and l2 axes, got %s" % sorted(axes))
    rows, best, analysis = sensitivity_sweep(cfg, nsb_values, l2_values)
    paths = emit_reports(rows, args.out, cfg)
    for p in paths:
        print("wrote %s" % p)
    print("best: %s perf_per_area=%.6e" % (best.scenario, best.perf_per_area))
    if analysis:
        print("matched-area marginal gain: nsb=%.6e l2=%.6e ratio=%.2f"
              % (analysis["gain_nsb"], analysis["gain_l2"], analysis["ratio"]))
    return 0


def _spec_get(parser, section, key, cast, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError("%s.%s is required" % (section, key))
        return default
    raw = parser.get(section, key).strip()
    try:
        if cast is bool:
            return raw.lower() in ("1", "true", "yes")
        return cast(raw)
    except ValueError:
        raise ConfigError("%s.%s: cannot parse %r" % (section, key, raw))


def _cmd_model(args) -> int:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not parser.read(args.spec):
        raise ConfigError("cannot read spec file %s" % args.spec)

    m = _spec_get(parser, "sparsity", "m", int, required=True)
    k = _spec_get(parser, "sparsity", "k", int, required=True)
    n = _spec_get(parser, "sparsity", "n", int, required=True)
    s_w = _spec_get(parser, "sparsity", "s_w", float, required=True)
    s_ia = _spec_get(parser, "sparsity", "s_ia", float, required=True)
    rho = _spec_get(parser, "sparsity", "rho", float, 0.0)
    try:
        spec = analytic.LayerSparsitySpec.uniform(m, k, n, s_w, s_ia, rho)
    except analytic.ModelError as exc:
        raise ConfigError("sparsity: %s" % exc)

    w_const = 0.0
    if parser.has_section("tiling"):
        tc = analytic.TilingConstraints(
            _spec_get(parser, "tiling", "tile_rows", int, 1),
            _spec_get(parser, "tiling", "tile_cols", int, 4))
        mask = sample_bernoulli_mask(m, k, s_w,
                                     _spec_get(parser, "tiling", "seed", int, 0))
        _, w_const, _ = analytic.optimize_tiling(mask, tc)

    est = analytic.estimate_workload(spec, w_const)

    machine = analytic.MachineModel(
        mac_rate=_spec_get(parser, "machine", "mac_rate", float, 16.0),
        bw=_spec_get(parser, "machine", "bw", float, 16.0),
        l1_enabled=_spec_get(parser, "machine", "l1_enabled", bool, True),
        l2_enabled=_spec_get(parser, "machine", "l2_enabled", bool, True),
        t_l1=_spec_get(parser, "machine", "t_l1", float, 10.0),
        t_l2=_spec_get(parser, "machine", "t_l2", float, 100.0),
        prefetch_enabled=_spec_get(parser, "machine", "prefetch_enabled", bool, False),
        miss_model=_spec_get(parser, "machine", "miss_model", str, "powerlaw"),
    )
    features = {}
    for key in ("accesses", "footprint_bytes", "l1_capacity", "l2_capacity",
                "alpha", "l1_misses", "l2_misses"):
        val = _spec_get(parser, "traffic", key, float)
        if val is not None:
            features[key] = val
    traffic = {
        "mvin_bytes": _spec_get(parser, "traffic", "mvin_bytes", float, 0.0),
        "mvout_bytes": _spec_get(parser, "traffic", "mvout_bytes", float, 0.0),
        "prefetch_bytes": _spec_get(parser, "traffic", "prefetch_bytes", float, 0.0),
        "features": features,
    }
    t = analytic.estimate_time(machine, est, traffic)
    verdict = analytic.bottleneck_analysis(t)

    print("w_ideal        %.6f" % est.w_ideal)
    print("w_align        %.6f" % est.w_align)
    print("w_const        %.6f" % est.w_const)
    print("w_total        %.6f" % est.w_total)
    print("t_comp         %.6f" % t.t_comp)
    print("t_io           %.6f" % t.t_io)
    print("w_mvin         %.1f" % t.w_mvin)
    print("w_mvout        %.1f" % t.w_mvout)
    print("w_prefetch     %.1f" % t.w_prefetch)
    print("bottleneck     %s" % t.bottleneck)
    print("io_bound       %s" % verdict["io_bound"])
    print("speedup_literal %.6f" % verdict["speedup_literal"])
    print("bound_latency  %.6f" % verdict["bound_latency"])
    print("intensity      %.6f" % t.roofline_point[0])
    print("attained       %.6f" % t.roofline_point[1])

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "roofline.csv")
        knee = machine.mac_rate / machine.bw
        xs = np.logspace(np.log10(knee) - 2, np.log10(knee) + 2, 33)
        with open(path, "w") as fh:
            fh.write("intensity,attained,bound\n")
            for x, attained, bound in analytic.roofline_curve(machine, xs):
                fh.write("%.6f,%.6f,%s\n" % (x, attained, bound))
        print("wrote %s" % path)
    return 0


def main(argv=None) -> int:
    top = argparse.ArgumentParser(prog="nvr-sim", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the scenario grid of a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_model = sub.add_parser("model", help="evaluate the analytic model")
    p_model.add_argument("--spec", required=True)
    p_model.add_argument("--out", default="")
    p_model.set_defaults(func=_cmd_model)

    p_over = sub.add_parser("overhead", help="print the hardware storage table")
    p_over.add_argument("--n", type=int, default=16)
    p_over.set_defaults(func=_cmd_overhead)

    p_sweep = sub.add_parser("sweep", help="NSB x L2 sensitivity grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--axis", action="append", default=[],
                         help="axis values, e.g. nsb=2,4,8,16")
    p_sweep.set_defaults(func=_cmd_sweep)

    args = top.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print("nvr-sim: error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
