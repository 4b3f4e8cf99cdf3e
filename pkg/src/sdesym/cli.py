"""Command-line front end.

    sdesym verify|find|reduce|pipeline <scenario.json | bundled-name> [options]

Exit codes: 0 pass, 1 assertion failure, 2 input error, 3 numerically
inconclusive.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .pipeline import COMMANDS, EXIT_INPUT, Settings
from .scenario import ScenarioError, bundled_names, load, load_bundled


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return conv


def _level(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdesym", description="Symmetry verification, reduction and Monte Carlo checks for SDE scenarios.")
    p.add_argument("command", choices=sorted(COMMANDS) + ["list"])
    p.add_argument("scenario", nargs="?", help="scenario JSON file or the name of a bundled scenario")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dt", type=_positive(float), default=None, help="time step (default: per-check scenario value, else 1e-3)")
    p.add_argument("--paths", type=_positive(int), default=None, help="paths per ensemble (default: per-check scenario value, else 10000)")
    p.add_argument("--out", type=Path, default=None, help="directory for the JSON report and CSV ensembles")
    p.add_argument("--level", type=_level, default=0.01, help="family-wise test level")
    p.add_argument("--workers", type=_positive(int), default=1)
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    return p


def _load(ref: str):
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        return load(path)
    return load_bundled(ref)


def _summary(rep: dict) -> str:
    lines = [f"{rep['scenario']}: {rep['command']}"]
    for s in rep["stages"]:
        lines.append(f"  {s['stage']:<14} {s['status']}")
    for w in rep["warnings"]:
        lines.append(f"  warning: {w}")
    if rep.get("failed_stage"):
        detail = rep["stages"][-1].get("detail")
        if detail is not None:
            lines.append(f"  detail: {json.dumps(detail)[:400]}")
    lines.append(f"  exit {rep['exit_code']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(bundled_names()))
        return 0
    if not args.scenario:
        print("sdesym: a scenario is required", file=sys.stderr)
        return EXIT_INPUT
    settings = Settings(seed=args.seed, dt=args.dt, n_paths=args.paths, level=args.level, out=args.out, n_workers=args.workers)
    try:
        sc = _load(args.scenario)
        code, rep = COMMANDS[args.command](sc, settings)
    except ScenarioError as exc:
        print(f"sdesym: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(json.dumps(rep, indent=2) if args.json else _summary(rep))
    return code


if __name__ == "__main__":
    sys.exit(main())
