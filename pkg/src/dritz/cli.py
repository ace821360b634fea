"""Command line entry point ``dritz``."""

import argparse
import sys

from . import harness


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _gammas(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad penalty list {text!r}") from exc
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("penalties must be a nonempty list of values >= 0")
    return vals


def _levels(text):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from exc


def cmd_study(args):
    cfg = harness.load_config(args.config)
    if args.levels:
        cfg = harness.with_levels(cfg, args.levels)
    progress = None
    if args.verbose:
        def progress(row):
            print(f"1/h={row.inv_h} Lp={row.lp_error:.3e} W1p={row.w1p_error:.3e} "
                  f"iterations={row.iterations} {row.status}", file=sys.stderr)
    table = harness.run_study(cfg, progress=progress)
    out = args.out or cfg.output
    _write(harness.emit_table(table, args.format, extended=args.extended), out)
    if table.failure:
        print(f"study stopped early: {table.failure}", file=sys.stderr)
        return 1
    return 0


def cmd_table1(args):
    tables = harness.run_table1(args.gamma, args.levels or (2, 4, 8, 16, 32, 64))
    _write(harness.emit_table1(tables), args.out)
    return 0


def cmd_plot_data(args):
    cfg = harness.load_config(args.config)
    if args.levels:
        cfg = harness.with_levels(cfg, args.levels)
    rows = harness.plot_data(cfg, args.points)
    _write(harness.emit_plot_data(rows, cfg.dimension), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dritz", description="Discontinuous Ritz convergence studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("study", help="run a convergence study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV path (default: stdout or the config's output key)")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--levels", type=_levels, help="override mesh levels, e.g. 10,20,40")
    p.add_argument("--extended", action="store_true", help="add energy and status columns")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("table1", help="piecewise-gradient scheme errors for several penalties")
    p.add_argument("--gamma", type=_gammas, default=[10.0, 100.0, 1000.0])
    p.add_argument("--levels", type=_levels)
    p.add_argument("--out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("plot-data", help="sample u_h and u on every level")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--levels", type=_levels)
    p.add_argument("--points", type=int, default=5, help="samples per 1D element")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (harness.ConfigError, harness.StudyError, OSError) as exc:
        print(f"dritz: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
