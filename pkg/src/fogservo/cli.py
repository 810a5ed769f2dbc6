"""Scenario runner and experiment harness.

    fogservo run --config scenario.json [--seed N] [--reps N] [--out DIR] [--live]
    fogservo sweep --config scenario.json --grid grid.json [--out DIR]
    fogservo serve --config scenario.json [--ws-port P] [--http-port P]
    fogservo validate <file.jsonl> --kind telemetry|delivery|phase

Headless runs are deterministic for a given (config, seed): rerunning
produces byte-identical JSON-Lines artifacts.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, Scenario, load_scenario, scenario_from_dict
from .nodes import run_topology
from .telemetry import dumps, validate_file

log = logging.getLogger("fogservo")


def _setup_logging() -> None:
    level = os.environ.get("FOGSERVO_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def run_scenario(scn: Scenario, out_dir: Path | None = None) -> dict:
    """All repetitions of one scenario; returns the aggregate record."""
    per_rep = []
    for rep in range(scn.repetitions):
        rep_dir = None
        if out_dir is not None:
            rep_dir = out_dir / f"rep{rep:03d}"
            rep_dir.mkdir(parents=True, exist_ok=True)
        result = run_topology(scn, rep=rep, out_dir=rep_dir)
        m = result.metrics()
        m["rep"] = rep
        per_rep.append(m)
        log.info("rep %d: success=%s duration=%.1fs phase=%s",
                 rep, m["success"], m["duration_s"], m["phase"])
        if rep_dir is not None:
            (rep_dir / "metrics.json").write_text(dumps(m) + "\n")
    successes = sum(1 for m in per_rep if m["success"])
    agg = {
        "scenario": scn.name,
        "seed": scn.seed,
        "repetitions": scn.repetitions,
        "successes": successes,
        "success_rate": successes / scn.repetitions,
        "falls": sum(1 for m in per_rep if m["fell"]),
        "runs": per_rep,
    }
    if out_dir is not None:
        (out_dir / "summary.json").write_text(dumps(agg) + "\n")
    return agg


def _apply_override(cfg: dict, dotted: str, value) -> None:
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def cmd_run(args) -> int:
    scn = load_scenario(args.config)
    if args.seed is not None or args.reps is not None:
        cfg = copy.deepcopy(scn.raw)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.reps is not None:
            cfg["repetitions"] = args.reps
        scn = scenario_from_dict(cfg)
    if args.live:
        from .udpproxy import run_live
        return run_live(scn)
    out = Path(args.out) if args.out else None
    agg = run_scenario(scn, out)
    print(dumps(agg))
    return 0 if agg["falls"] == 0 else 1


def cmd_sweep(args) -> int:
    scn = load_scenario(args.config)
    with open(args.grid) as f:
        grid = json.load(f)
    if not isinstance(grid, dict) or not grid:
        raise ConfigError(f"{args.grid}: grid must be a non-empty object of param -> values")
    keys = sorted(grid)
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cfg = copy.deepcopy(scn.raw)
        for k, v in zip(keys, combo):
            _apply_override(cfg, k, v)
        cell = scenario_from_dict(cfg)
        agg = run_scenario(cell)
        row = dict(zip(keys, combo))
        row.update(success_rate=agg["success_rate"], successes=agg["successes"],
                   repetitions=agg["repetitions"], falls=agg["falls"],
                   mean_duration_s=round(
                       sum(m["duration_s"] for m in agg["runs"]) / len(agg["runs"]), 3),
                   stop_latency_send_ms=agg["runs"][-1]["stop_latency_send_ms"])
        rows.append(row)
        log.info("cell %s -> %s/%s", dict(zip(keys, combo)),
                 agg["successes"], agg["repetitions"])
    out_path = Path(args.out) if args.out else Path("sweep.csv")
    fields = keys + ["success_rate", "successes", "repetitions", "falls",
                     "mean_duration_s", "stop_latency_send_ms"]
    with open(out_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {out_path} ({len(rows)} cells)")
    return 0


def cmd_serve(args) -> int:
    from .bridge import serve
    scn = load_scenario(args.config)
    return serve(scn, ws_port=args.ws_port, http_port=args.http_port,
                 static_dir=args.static)


def cmd_validate(args) -> int:
    errors = validate_file(args.file, args.kind)
    for e in errors:
        print(e, file=sys.stderr)
    print(f"{args.file}: {'OK' if not errors else f'{len(errors)} error(s)'}")
    return 0 if not errors else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fogservo", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run a scenario headless (or --live over UDP)")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--out", help="directory for JSON-Lines artifacts")
    p.add_argument("--live", action="store_true",
                   help="real UDP sockets on loopback instead of the virtual clock")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="cross-product parameter sweep to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True,
                   help='JSON object, e.g. {"links.cloud_rcu.latency_ms": [0, 100, 200]}')
    p.add_argument("--out", help="CSV path (default sweep.csv)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("serve", help="teleop UI bridge over websocket")
    p.add_argument("--config", required=True)
    p.add_argument("--ws-port", type=int, default=8765)
    p.add_argument("--http-port", type=int, default=8000)
    p.add_argument("--static", help="directory with the built UI (frontend/dist)")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("validate", help="check a JSON-Lines artifact against its schema")
    p.add_argument("file")
    p.add_argument("--kind", required=True, choices=["telemetry", "delivery", "phase"])
    p.set_defaults(fn=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
