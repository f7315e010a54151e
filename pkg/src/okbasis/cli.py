"""Command-line verbs: run, eval, compare and demo.

    python -m okbasis run experiment.toml [--out DIR]
    python -m okbasis eval results/okb_seed0.snapshot.json --grid 20
    python -m okbasis compare results/*.csv [--csv summary.csv]
    python -m okbasis demo counterexample

Exit codes: 0 success, 2 configuration error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .harness import (
    ConfigError,
    compare_report,
    counterexample_demo,
    eval_snapshot,
    load_config,
    run_experiment,
    summary_csv,
    summary_table,
    write_rows_to,
)
from .mdp import MDPError
from .planner import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="okbasis", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment config (TOML)")
    r.add_argument("config")
    r.add_argument("--out", help="override the config's output_dir")
    e = sub.add_parser("eval", help="zero-shot evaluation of a saved basis")
    e.add_argument("snapshot")
    e.add_argument("--grid", type=int, required=True, metavar="H", help="simplex lattice resolution")
    e.add_argument("--mode", choices=("ok", "gpi"))
    c = sub.add_parser("compare", help="mean normalised return with bootstrap CIs")
    c.add_argument("csv", nargs="+")
    c.add_argument("--csv-out", dest="csv_out", help="also write the summary as CSV")
    d = sub.add_parser("demo", help="built-in demonstrations")
    d.add_argument("name", choices=("counterexample",))
    return p


def _demo_counterexample() -> int:
    res = counterexample_demo()
    print(f"(a) chords swept: {res['n_chords']}; a4 strict argmax for {res['strict_a4_chords']}, "
          f"GPI choice for {res['gpi_a4_chords']}  -> {'PASS' if res['ok_a'] else 'FAIL'}")
    print(f"(b) v* = {res['v_star']:.6f}, keyboard value = {res['v_ok']:.6f}, gap = {res['gap']:.6f}"
          f"  -> {'PASS' if res['ok_b'] else 'FAIL'}")
    print(f"(c) witnesses = {res['witnesses']}, A(s0, a4) = {res['a4_advantage']:.6f}"
          f"  -> {'PASS' if res['ok_c'] else 'FAIL'}")
    return EXIT_OK if res["ok_a"] and res["ok_b"] and res["ok_c"] else EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            out = run_experiment(load_config(args.config), args.out)
            print(out)
        elif args.verb == "eval":
            rows = eval_snapshot(args.snapshot, args.grid, args.mode)
            write_rows_to(sys.stdout, rows, len(rows[0].w))
        elif args.verb == "compare":
            rows = compare_report(args.csv)
            sys.stdout.write(summary_table(rows))
            if args.csv_out:
                with open(args.csv_out, "w", newline="") as fh:
                    fh.write(summary_csv(rows))
        elif args.verb == "demo":
            return _demo_counterexample()
    except (ConfigError, MDPError, KeyError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
