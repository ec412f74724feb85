"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import AuditError
from .pipeline import Pipeline

log = logging.getLogger("collapse_audit")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run config (defaults apply when omitted)")
    common.add_argument("--run-dir", help="run directory (overrides run_dir in the config)")
    common.add_argument("--seed", type=int, help="override the sampling seed")
    common.add_argument("--advisor", help="'http' or 'mock:<name>'; applies to --condition, or to every condition")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="collapse-audit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("plan", parents=[common], help="validate the config and pin it to the run directory")
    sub.add_parser("sample", parents=[common], help="draw client profiles")
    c = sub.add_parser("collect", parents=[common], help="collect recommendations for one condition")
    c.add_argument("--condition", required=True, choices=["baseline", "web_search", "web_search_required"])
    sub.add_parser("fit", parents=[common], help="fit surrogates and compute feature concentration")
    sub.add_parser("metrics", parents=[common], help="portfolio metrics and condition comparison")
    sub.add_parser("judge", parents=[common], help="pairwise rationale judging")
    sub.add_parser("report", parents=[common], help="write report.json and report.md")
    r = sub.add_parser("replay", parents=[common], help="recompute derived artifacts and compare with manifests")
    r.add_argument("--scratch", help="directory for regenerated artifacts (a temp dir by default)")
    sub.add_parser("run", parents=[common], help="every stage in order")
    return p


def _pipeline(args) -> Pipeline:
    config = load_config(args.config)
    condition = getattr(args, "condition", None)
    if args.seed is not None or args.advisor is not None:
        config = config.with_overrides(seed=args.seed, advisor=args.advisor, condition=condition)
    run_dir = args.run_dir or config.run_dir
    if run_dir is None:
        raise AuditError("no run directory: pass --run-dir or set run_dir in the config")
    if args.command == "replay" and args.config is None and (Path(run_dir) / "config.json").exists():
        return Pipeline.from_run_dir(run_dir)
    return Pipeline(config, run_dir)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        pipe = _pipeline(args)
        cmd = args.command
        if cmd == "collect":
            out = pipe.collect(args.condition)
        elif cmd == "replay":
            result = pipe.replay(args.scratch)
            out = {"ok": result.ok, "compared": len(result.compared), "mismatches": result.mismatches, "scratch": str(result.scratch)}
            print(json.dumps(out, indent=2))
            return 0 if result.ok else 1
        elif cmd == "run":
            report = pipe.run_all()
            out = {"report": str(pipe.store.path("report.json")), "config_hash": report["provenance"]["config_hash"]}
        else:
            out = getattr(pipe, cmd)()
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(out, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
