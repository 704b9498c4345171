"""Command line entry point.

Subcommands:

``solve``
    Solve the primal problem and store the displacement coefficients.
``recover``
    Solve, then write recovered through-thickness profiles (CSV) at the
    configured stations, without a reference comparison.
``compare``
    Full pipeline: solve, recover, compare against the cached layerwise
    reference, write ``report.json`` and ``table2.csv``.
``sweep``
    Repeat ``compare`` over a list of slenderness ratios, accumulating one
    summary table.

All subcommands take ``--config <path>`` (JSON, see RunConfig) and accept
``--out``, ``--method``, and ``--no-cache`` overrides.  Exit code 0 on
success; on failure a machine-readable JSON error object is printed to
stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .harness import RunConfig, run, run_sweep


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="igalam",
        description="Laminated-tube benchmark: solve, stress recovery, comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("solve", "solve the primal problem only"),
        ("recover", "solve and write recovered stress profiles"),
        ("compare", "solve, recover, and compare against the layerwise reference"),
        ("sweep", "run `compare` over several slenderness ratios"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--method", choices=["galerkin", "collocation", "layerwise"],
                       help="override the solution method")
        p.add_argument("--no-cache", action="store_true",
                       help="ignore and do not write the reference cache")
        if name == "sweep":
            p.add_argument("--s-values", default="20,30,40,50",
                           help="comma-separated slenderness ratios (default 20,30,40,50)")
    return parser


def _load_config(args):
    config = RunConfig.load(args.config)
    data = config.to_dict()
    if args.out:
        data["out_dir"] = args.out
    if args.method:
        data["method"] = args.method
    if args.no_cache:
        data["use_cache"] = False
    return RunConfig.from_dict(data)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "solve":
            data = config.to_dict()
            data["stations"] = []
            report = run(RunConfig.from_dict(data), compare=False)
            out = Path(config.out_dir)
            np.savez(out / "solution.npz", coeffs=report["_field"].coeffs)
            print(f"solved: ndof={report['ndof']} residual={report['residual']:.3e} "
                  f"({report['timings']['solve_seconds']:.1f}s)")
        elif args.command == "recover":
            report = run(config, compare=False)
            print(f"recovered {len(report['stations'])} station(s) "
                  f"in {config.out_dir}")
        elif args.command == "compare":
            report = run(config, compare=True)
            for st in report["stations"]:
                e = st["errors_after"]
                print(f"station ({st['fraction_axial']:.3g}, "
                      f"{st['fraction_theta']:.3g}): after "
                      f"e13={e['s13']:.3%} e23={e['s23']:.3%} e33={e['s33']:.3%}")
            print(f"report: {Path(config.out_dir) / 'report.json'}")
        else:
            try:
                s_values = [float(s) for s in args.s_values.split(",") if s.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --s-values: {args.s_values!r}") from exc
            if not s_values:
                raise ConfigError("--s-values is empty")
            reports = run_sweep(config, s_values)
            for rep in reports:
                e = rep["stations"][0]["errors_after"]
                print(f"S={rep['config']['s_ratio']:g}: after "
                      f"e13={e['s13']:.3%} e23={e['s23']:.3%} e33={e['s33']:.3%}")
            print(f"table: {Path(config.out_dir) / 'table2.csv'}")
        return 0
    except ConfigError as exc:
        _emit_error(exc)
        return 2
    except Exception as exc:
        _emit_error(exc)
        return 1


def _emit_error(exc):
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
