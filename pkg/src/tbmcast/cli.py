"""Command-line front end: parse flags, merge the config file, run the cells."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiment, metrics
from .dataset import TARGET_KEYS
from .errors import ForecastError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tbmcast",
        description=(
            "Train and evaluate next-step forecasters for tunnel-boring-machine "
            "load parameters over windowed sensor series."
        ),
    )
    parser.add_argument("--config", metavar="PATH",
                        help="flat key=value config file; flags override it")
    parser.add_argument("--setting", choices=metrics.SETTINGS,
                        help="single/multi output, with/without feature selection")
    parser.add_argument("--model", choices=experiment.MODEL_CHOICES)
    parser.add_argument("--target", choices=TARGET_KEYS + ("all",))
    parser.add_argument("--tau", type=int, metavar="N", help="window width")
    parser.add_argument("--seed", type=int, metavar="N")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--paper-exact", dest="paper_exact",
                        action="store_const", const=True,
                        help="whole-series normalization, no biases, "
                             "sigmoid recurrent outputs")
    parser.add_argument("--no-plots", dest="plots",
                        action="store_const", const=False,
                        help="skip the SVG actual-vs-predicted plots")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        file_values = (
            experiment.parse_config_file(args.config) if args.config else None
        )
        config = experiment.build_config(
            file_values,
            setting=args.setting,
            model=args.model,
            target=args.target,
            tau=args.tau,
            seed=args.seed,
            out=args.out,
            paper_exact=args.paper_exact,
            plots=args.plots,
        )
        report, manifest = experiment.run_experiment(config)
    except (ForecastError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for row in report.rows:
        r = row.run
        print(
            f"{r.setting:5s} {r.model:4s} {r.target:12s} "
            f"rmse={r.rmse:.6g} mape={r.mape_pct:.6g}% "
            f"(eval {r.n_eval}, skipped {r.n_skipped})"
        )
    failed = [c["name"] for c in manifest["cells"] if c["status"] != "ok"]
    for name in failed:
        print(f"cell failed: {name}", file=sys.stderr)
    print(f"artifacts in {config.out}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
