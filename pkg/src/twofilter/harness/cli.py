"""Command line entry point ``smc``.

    smc run <config.json>                 replicate table + report
    smc verify <table.csv> <config.json>  statistics only, on an existing table
    smc oracle <config.json>              exact smoothing expectations

The exit status is 1 when any claim fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..smoothing import SMOOTHING_COLUMNS, write_smoothing_csv
from . import verify
from .config import load_config
from .registry import smoothing_truth
from .runner import ReplicateTable, run_replicates, write_outputs


def _run(args) -> int:
    config = load_config(args.config)
    out = Path(args.output or config.output)
    table = run_replicates(config)
    path = write_outputs(table, out)
    extra = verify.run_uniformity(config)
    for (cid, T), t in extra.items():
        write_outputs(t, out, verify.uniformity_table_name(cid, T))
    entries = verify.evaluate(config, table, extra)
    verify.write_report(entries, out / "report.json")
    if table.errors:
        logging.warning("%d runs failed; see NaN rows in %s", len(table.errors), path)
    return _summary(entries)


def _verify(args) -> int:
    config = load_config(args.config)
    table = ReplicateTable.from_csv(args.table)
    entries = verify.evaluate(config, table, verify.load_uniformity(config, args.table))
    report = Path(args.report) if args.report else Path(args.table).parent / "report.json"
    verify.write_report(entries, report)
    return _summary(entries)


def _oracle(args) -> int:
    config = load_config(args.config)
    model, gammas, _ = config.build()
    truth = smoothing_truth(model, gammas, config.functions)
    rows = [{"s": s, "method": "oracle", "N": "", "seed": "", "estimate_mean": v, "estimate_h_name": h}
            for (s, h), v in sorted(truth.items())]
    if args.output:
        write_smoothing_csv(rows, args.output)
    else:
        print(",".join(SMOOTHING_COLUMNS))
        for r in rows:
            print(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in SMOOTHING_COLUMNS))
    return 0


def _summary(entries) -> int:
    for e in entries:
        print(json.dumps({"claim": e.claim, "pass": bool(e.passed), "statistic": e.to_json()["statistic"],
                          "threshold": e.to_json()["threshold"]}))
    return 0 if all(e.passed for e in entries) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smc", description="Two-filter particle smoothing experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run replicates, write table.csv and report.json")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (default: config 'output')")
    r.set_defaults(func=_run)

    v = sub.add_parser("verify", help="recompute the report from an existing table")
    v.add_argument("table")
    v.add_argument("config")
    v.add_argument("--report", help="report path (default: report.json next to the table)")
    v.set_defaults(func=_verify)

    o = sub.add_parser("oracle", help="exact smoothing expectations as CSV")
    o.add_argument("config")
    o.add_argument("-o", "--output", help="CSV path (default: stdout)")
    o.set_defaults(func=_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"smc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
