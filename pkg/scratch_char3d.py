"""3D check of the characteristic projection: cost, Sod overshoot, freestream."""
import json
import time

import numpy as np

from wcnsflow.cases import sod_case, uniform_case
from wcnsflow.fields import assemble_zone
from wcnsflow.residual import block_residual
from wcnsflow.riemann import RiemannState, solve_riemann
from wcnsflow.runner import run_case
from wcnsflow.state import GasModel, conserved_from_primitive

GAS = GasModel()
G = GAS.gamma
H = 5


def timing():
    n = 64
    rng = np.random.default_rng(7)
    w = np.empty((5, n + 2 * H, n + 2 * H, n + 2 * H))
    w[0] = 1.0 + 0.2 * rng.random(w.shape[1:])
    w[1:4] = rng.standard_normal((3,) + w.shape[1:]) * 0.3
    w[4] = 1.0 + 0.2 * rng.random(w.shape[1:])
    q = conserved_from_primitive(w, GAS)
    out = {}
    for proj in ("component", "characteristic"):
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            block_residual(q, GAS, (1 / n,) * 3, (2.0, 2.0, 2.0), projection=proj)
            best = min(best, time.perf_counter() - t0)
        out[proj] = best
    out["ratio"] = out["characteristic"] / out["component"]
    return out


def sod():
    case = sod_case()
    t0 = time.perf_counter()
    outcome = run_case(case)
    wall = time.perf_counter() - t0
    zone = assemble_zone(outcome.fields, outcome.plan)
    rho = zone[0, :, 0, 0]
    nx = rho.shape[0]
    hx = 1.0 / nx
    x = (np.arange(nx) + 0.5) * hx
    sol = solve_riemann(RiemannState(1.0, 0.0, 1.0), RiemannState(0.125, 0.0, 0.1), G)
    t_end = case.controls.t_end
    exact = sol.sample((x - 0.5) / t_end)[0]
    l1 = float(np.mean(np.abs(rho - exact)))
    mu2 = (G - 1.0) / (G + 1.0)
    pr = sol.p_star / 0.1
    rho2 = 0.125 * (pr + mu2) / (mu2 * pr + 1.0)
    ar = np.sqrt(G * 0.1 / 0.125)
    shock = ar * np.sqrt((G + 1.0) / (2.0 * G) * pr + (G - 1.0) / (2.0 * G))
    xc = 0.5 + sol.u_star * t_end
    xs = 0.5 + shock * t_end
    jump = rho2 - 0.125
    win = (x >= xc + 5 * hx) & (x <= xs + 5 * hx)
    over = float(np.max(rho[win]) - rho2)
    cross_var = float(np.max(np.abs(zone[0] - zone[0][:, :1, :1])))
    return {
        "iterations": outcome.iterations,
        "wall": wall,
        "l1": l1,
        "overshoot": over,
        "overshoot_frac": over / jump,
        "peak_cell": int(np.argmax(np.where(win, rho, -1.0))),
        "cross_variation": cross_var,
    }


def freestream():
    case = uniform_case(max_iters=50)
    outcome = run_case(case)
    zone = assemble_zone(outcome.fields, outcome.plan)
    ref = zone[:, :1, :1, :1] * 0 + zone[:, 0, 0, 0][:, None, None, None]
    q0 = conserved_from_primitive(
        np.array([1.0, 1.0, 1.0, 1.0, 1.0])[:, None, None, None] * np.ones_like(zone[:1]), GAS)
    drift = float(np.max(np.abs(zone - zone[:, 8:9, 8:9, 8:9])))
    return {"iterations": outcome.iterations, "uniformity": drift}


def main():
    out = {"timing": timing()}
    print("timing", json.dumps(out["timing"], indent=1))
    out["sod"] = sod()
    print("sod", json.dumps(out["sod"], indent=1))
    out["freestream"] = freestream()
    print("freestream", json.dumps(out["freestream"], indent=1))
    with open("/tmp/char3d.json", "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
