"""Command line entry point: ``lgts run|plot|ged|validate-config|dump-dag``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import METHODS, ConfigError, load_config
from .experiment import llm_dag, report_ged, run_experiment
from .graph import GraphError, dump_dag
from .llm import LlmError
from .plot import EmptyMetrics, plot_curves


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgts", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run every seed of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed-offset", type=int, default=0)
    run.add_argument("--out")
    run.add_argument("--method", choices=METHODS)

    plot = sub.add_parser("plot", help="learning curves from metrics CSVs")
    plot.add_argument("metrics", nargs="+")
    plot.add_argument("--out", required=True)

    ged = sub.add_parser("ged", help="graph edit distance of DAG dumps to an oracle")
    ged.add_argument("dumps", nargs="+")
    ged.add_argument("--oracle", required=True)
    ged.add_argument("--out")

    val = sub.add_parser("validate-config", help="check a config file")
    val.add_argument("--config", required=True)
    val.add_argument("--method", choices=METHODS)

    dump = sub.add_parser("dump-dag", help="query the LLM and print the resulting DAG")
    dump.add_argument("--config", required=True)
    dump.add_argument("--out")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            cfg = load_config(args.config)
            if args.method:
                cfg = cfg.with_method(args.method)
            agg = run_experiment(cfg, args.out, args.seed_offset)
            print(json.dumps({k: agg[k] for k in ("method", "domain", "n_seeds",
                                                  "interactions", "success")}, indent=2))
            return 0 if not agg["failures"] else 1
        if args.verb == "plot":
            info = plot_curves(args.metrics, args.out)
            print(f"wrote {args.out}: {info['curves']} curves, {info['markers']} markers")
            return 0
        if args.verb == "ged":
            rep = report_ged(args.dumps, args.oracle)
            text = json.dumps(rep, indent=2)
            if args.out:
                Path(args.out).write_text(text + "\n")
            print(text)
            return 0
        if args.verb == "validate-config":
            cfg = load_config(args.config)
            if args.method:
                cfg = cfg.with_method(args.method)
            print(f"ok: {cfg.domain} / {cfg.method}, {len(cfg.seeds)} seeds")
            return 0
        if args.verb == "dump-dag":
            cfg = load_config(args.config)
            dag, session = llm_dag(cfg)
            text = dump_dag(dag)
            if args.out:
                Path(args.out).write_text(text)
                session.save(Path(args.out).with_suffix(".transcript.txt"))
            sys.stdout.write(text)
            return 0
    except (ConfigError, GraphError, LlmError, EmptyMetrics, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
