"""Follow-up oracles: temporal order on interiors only, and the Sod
overshoot structure (where the above-plateau cells sit)."""

import json
import math
import time

import numpy as np

from wcnsflow.cases import case_plan, sod_case, wave_case
from wcnsflow.fields import assemble_zone
from wcnsflow.riemann import SOD_LEFT, SOD_RIGHT, solve_riemann
from wcnsflow.runner import run_case

out = {}
T0 = time.perf_counter()

# temporal order, interior state only (ghosts lag a stage behind) ------------
n = 32
Tt = 0.008
dts = [2e-3, 1e-3, 5e-4]
ref = run_case(wave_case(n, t_end=Tt, fixed_dt=1.25e-4), model=False,
               warmup=False)
errs = []
for dt in dts:
    r = run_case(wave_case(n, t_end=Tt, fixed_dt=dt), model=False,
                 warmup=False)
    e = max(float(np.max(np.abs(r.fields[b].interior
                                - ref.fields[b].interior)))
            for b in r.fields)
    errs.append(e)
    print(f"dt={dt}: err {e:.6e}  t={r.sim_time!r} ref t={ref.sim_time!r}")
orders = [math.log(a / b) / math.log(2) for a, b in zip(errs, errs[1:])]
out["temporal"] = {"errs": errs, "orders": orders}
print("temporal orders (interiors):", orders,
      f"[{time.perf_counter() - T0:.0f}s]")

# Sod overshoot structure -----------------------------------------------------
case = sod_case(200)
r = run_case(case, model=False, warmup=False)
rho = assemble_zone(r.fields, r.plan)[0][:, 2, 2]
x = (np.arange(200) + 0.5) / 200
sol = solve_riemann(SOD_LEFT, SOD_RIGHT, gamma=1.4)
g = 1.4
t = 0.2
pr = sol.p_star / SOD_RIGHT.p
rho2 = SOD_RIGHT.rho * ((g + 1) * pr + (g - 1)) / ((g - 1) * pr + (g + 1))
rho_star_l = SOD_LEFT.rho * (sol.p_star / SOD_LEFT.p) ** (1 / g)
shock_speed = SOD_RIGHT.u + math.sqrt(g * SOD_RIGHT.p / SOD_RIGHT.rho) \
    * math.sqrt((g + 1) / (2 * g) * pr + (g - 1) / (2 * g))
xc = 0.5 + sol.u_star * t
xs = 0.5 + shock_speed * t
jump = rho2 - SOD_RIGHT.rho
print(f"contact x={xc:.4f} (cell {xc * 200:.1f}) shock x={xs:.4f} "
      f"(cell {xs * 200:.1f}) rho2={rho2:.6f} rho*L={rho_star_l:.6f}")
i0, i1 = int(xc * 200) - 8, int(xs * 200) + 6
for i in range(i0, min(i1, 200)):
    mark = " <-- above rho2" if rho[i] > rho2 else ""
    print(f"  cell {i:3d} x={x[i]:.4f} rho={rho[i]:.6f}{mark}")
above = [(int(i), float(rho[i] - rho2)) for i in np.nonzero(rho > rho2)[0]
         if x[i] > xc]
out["sod_above_rho2"] = above
out["sod_meta"] = {"xc": xc, "xs": xs, "rho2": rho2, "jump": jump,
                   "rho_star_l": rho_star_l}
# overshoot measured with varying contact-exclusion margins
h = 1 / 200
for k in (5, 8, 10, 12):
    sel = x > xc + k * h
    ov = float(np.max(rho[sel]) - rho2)
    print(f"margin {k:2d}h: overshoot {ov:.6f} = {ov / jump * 100:.2f}% of jump")
    out[f"overshoot_{k}h"] = ov
# new-extremum measure: max above the local exact envelope
rho_e, _, _ = sol.sample((x - 0.5) / t)
out["max_above_exact"] = float(np.max(rho - rho_e))
print("global max(rho_num - rho_exact):", float(np.max(rho - rho_e)),
      "global min:", float(np.min(rho - rho_e)))

with open("/tmp/oracles2.json", "w") as fh:
    json.dump(out, fh, indent=1, default=str)
print(f"done [{time.perf_counter() - T0:.0f}s]")
