#!/usr/bin/env python3
"""Pathwise reconstruction error against dt for a scenario with a
reconstruction plan.

Both the direct Euler-Maruyama paths and the quadratures are first order in
dt per step, so their pathwise gap should shrink like dt^(1/2).  Prints the
RMS gap per dt and the fitted log-log slope.

    python3 scripts/strong_order.py [--scenario kp2d] [--paths 1000] [--dts 4e-3 2e-3 1e-3 5e-4]
"""

import argparse

import numpy as np

from sdesym.mc import reconstruct, simulate, transform_paths
from sdesym.reduction import build_reconstruction_plan
from sdesym.sde import SdeModel
from sdesym.transform import apply_to_sde
from sdesym.scenario import load_bundled


def rms_gap(sc, dt: float, n_paths: int, seed: int) -> float:
    sde: SdeModel = sc.model()
    t = sc.transform()
    can, mc = sc.canonical, sc.mc
    assemble = dict(t.phi_inv) if can.get("assemble") == "phi_inv" else None
    plan = build_reconstruction_plan(apply_to_sde(t, sde), int(can["plan_r"]), can.get("coords"), assemble=assemble)
    t_end = float(mc["t_end"])
    e = simulate(sde, mc["x0"], t_end, dt, n_paths, seed)
    tp = transform_paths(t, e)
    start = {c: float(tp.states[0, 0, tp.vars.index(c)]) for c in plan.coords}
    rec = reconstruct(plan, tp, start)
    ref = e if mc["reconstruct"].get("compare", "original") == "original" else tp
    k = ref.index_of(t_end)
    alive = ref.alive_at(k) & rec.alive_at(k)
    gaps = [rec.column(v)[alive, k] - ref.column(v)[alive, k] for v in rec.vars]
    return max(float(np.sqrt(np.mean(g**2))) for g in gaps)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="kp2d")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dts", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3, 5e-4])
    args = p.parse_args(argv)

    sc = load_bundled(args.scenario)
    if not (sc.canonical and sc.mc and "reconstruct" in sc.mc):
        raise SystemExit(f"{args.scenario} has no reconstruction check")
    rows = [(dt, rms_gap(sc, dt, args.paths, args.seed)) for dt in args.dts]
    for dt, r in rows:
        print(f"dt {dt:9.2e}  rms {r:.4e}")
    slope = np.polyfit(np.log([d for d, _ in rows]), np.log([r for _, r in rows]), 1)[0]
    print(f"fitted order {slope:.2f} (expected about 0.5)")


if __name__ == "__main__":
    main()
