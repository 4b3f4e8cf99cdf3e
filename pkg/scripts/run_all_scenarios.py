#!/usr/bin/env python3
"""Run the full pipeline on bundled scenarios and print a stage table.

    python3 scripts/run_all_scenarios.py [names...] [--seed 42] [--paths N] [--dt DT] [--out DIR]

Exits with the largest exit code seen.
"""

import argparse
import sys
import time

from sdesym.pipeline import Settings, run_pipeline
from sdesym.scenario import bundled_names, load_bundled


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="scenario names (default: all bundled)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--out", default=None)
    args = p.parse_args(argv)

    worst = 0
    for name in args.names or bundled_names():
        t0 = time.perf_counter()
        code, rep = run_pipeline(load_bundled(name), Settings(seed=args.seed, n_paths=args.paths, dt=args.dt, out=args.out))
        stages = " ".join(f"{s['stage']}:{s['status']}" for s in rep["stages"])
        print(f"{name:<26} exit {code}  {time.perf_counter() - t0:6.1f} s  {stages}", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
