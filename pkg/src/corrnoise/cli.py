"""Command line interface.

    corrnoise run <config|preset> [--out DIR] [--seed N] [--threads N]
    corrnoise detect <config|preset|run-dir> [--out DIR]
    corrnoise sweep-n <config|preset> --n 2,3,4,5 [--out DIR]
    corrnoise rates <config|preset> --t TIME

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, load_config, preset_names
from .dynamics import ConvergenceError
from .spectra import QuadratureError


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="corrnoise",
        description="Correlated-noise detection toolkit for qubit registers "
                    f"(presets: {', '.join(preset_names())})",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment and write traces")
    run_p.add_argument("config", help="config JSON path or preset name")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--seed", type=int, help="override the protocol seed")
    run_p.add_argument("--threads", type=int, default=1)

    det_p = sub.add_parser("detect", help="correlation-detection report")
    det_p.add_argument("target", help="config/preset, or directory with traces")
    det_p.add_argument("--out", help="directory to run into (config targets)")

    sw_p = sub.add_parser("sweep-n", help="superdecoherence scaling exponent")
    sw_p.add_argument("config", help="base config JSON path or preset name")
    sw_p.add_argument("--n", required=True, help="comma-separated sizes, e.g. 2,3,4,5")
    sw_p.add_argument("--out", help="output directory")
    sw_p.add_argument("--threads", type=int, default=1)

    rt_p = sub.add_parser("rates", help="dump dissipator coefficients at a time")
    rt_p.add_argument("config", help="config JSON path or preset name")
    rt_p.add_argument("--t", type=float, required=True)
    return p


def _cmd_run(args) -> int:
    from .runner import run

    config = load_config(args.config)
    result = run(config, out_dir=args.out, seed=args.seed, threads=args.threads)
    print(f"wrote {len(result.files)} files to {result.out_dir}")
    return 0


def _cmd_detect(args) -> int:
    from .runner import detect, run

    if os.path.isdir(args.target):
        report = detect(args.target)
    else:
        config = load_config(args.target)
        result = run(config, out_dir=args.out)
        report = result.report
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    from .runner import sweep_n

    config = load_config(args.config)
    try:
        n_list = [int(x) for x in args.n.split(",")]
    except ValueError:
        raise ConfigError(f"--n must be comma-separated integers, got {args.n!r}")
    result = sweep_n(config, n_list, threads=args.threads)
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        rows = ["n,rate"]
        rows += [f"{n},{r!r}" for n, r in zip(result["n_values"], result["rates"])]
        with open(os.path.join(args.out, "sweep.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")
        with open(os.path.join(args.out, "sweep.json"), "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
    return 0


def _cmd_rates(args) -> int:
    from .runner import build_context

    config = load_config(args.config)
    if not 0 <= args.t <= config.t_max:
        raise ConfigError(f"--t must lie in [0, {config.t_max:g}]")
    ctx = build_context(config)
    for ci, ch in enumerate(config.channels):
        print(f"# channel {ci}: {ch.coupling} / {ch.spectrum.kind}")
        cf = ctx.rate_table.coefficients(ci, args.t)
        for name in sorted(cf):
            mat = np.atleast_2d(cf[name])
            print(f"{name}:")
            for row in mat:
                print("  " + "  ".join(f"{v.real:+.6e}{v.imag:+.6e}j" for v in row))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "detect": _cmd_detect,
                "sweep-n": _cmd_sweep, "rates": _cmd_rates}
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (QuadratureError, ConvergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
