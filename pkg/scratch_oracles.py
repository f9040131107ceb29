"""Oracle computations: independent reference values to freeze into tests,
plus wall-time measurements to size the acceptance runs."""

import json
import math
import time

import numpy as np

from wcnsflow.cases import (case_plan, exact_density, initial_fields,
                            sod_case, uniform_case, wave_case, corner_case)
from wcnsflow.devices import LinkModel
from wcnsflow.fields import assemble_zone, cell_centers
from wcnsflow.halo import build_halo_plan
from wcnsflow.metrics import mcups
from wcnsflow.partition import (NodeTopology, ZoneSpec, cross_node_edges,
                                imbalance_report, make_plan,
                                map_ranks_to_nodes, split_zone)
from wcnsflow.riemann import SOD_LEFT, SOD_RIGHT, solve_riemann
from wcnsflow.runner import (best_ratio, cpu_only_variant, model_schedule,
                             predict_balanced_ratio, run_case,
                             sweep_load_ratio, weak_scaling)
from wcnsflow.timestepping import block_dt_bound, rk3_scalar
from wcnsflow.wcns import (interpolate_edge, interpolate_line_edges,
                           smoothness_indicators)
from dataclasses import replace

out = {}
T0 = time.perf_counter()


def clock(label):
    print(f"[{time.perf_counter() - T0:7.1f}s] {label}")


# 1. smoothness indicators on the linear window -----------------------------
b = smoothness_indicators(0.0, 1.0, 2.0, 3.0, 4.0)
out["beta_linear"] = [float(x) for x in b]
print("beta(0,1,2,3,4) =", b)

bstep = smoothness_indicators(0.0, 0.0, 0.0, 1.0, 1.0)
out["beta_step"] = [float(x) for x in bstep]
print("beta(0,0,0,1,1) =", bstep)

# 2. rk3 scalar --------------------------------------------------------------
q1 = rk3_scalar(1.0, 0.1, lambda q: -q)
out["rk3_scalar"] = repr(q1)
print("rk3_scalar(1, 0.1, -q) =", repr(q1))

# 3. rest-state dt bound ------------------------------------------------------
w = np.empty((5, 2, 2, 2))
w[0], w[1], w[2], w[3], w[4] = 1.0, 0.0, 0.0, 0.0, 1.0
from wcnsflow.state import GasModel
dtb = block_dt_bound(w, GasModel(), (0.1, 0.1, 0.1))
out["dt_rest"] = repr(dtb)
print("dt bound rest h=0.1:", repr(dtb), "expected", repr(0.1 / (3 * math.sqrt(1.4))))

# 4. link transfer arithmetic -------------------------------------------------
tr = LinkModel(bandwidth=8e9, latency=1e-5).transfer_seconds(8_000_000)
out["link_8mb"] = repr(tr)
print("transfer 8 MB @8GB/s+10us =", repr(tr))

# 5. mcups identity -----------------------------------------------------------
print("mcups(1e6, 50, 10) =", mcups(1_000_000, 50, 10.0))

# 6. exchange pair/region counts on 2x2x2 ------------------------------------
case = wave_case(16, blocks=8)
plan = case_plan(case)
hp = build_halo_plan(plan)
npairs = len(hp.pairs)
nregions = sum(len(p.regions) for p in hp.pairs)
out["pairs_2x2x2"] = npairs
out["regions_2x2x2"] = nregions
print(f"2x2x2 halo plan: {npairs} pairs, {nregions} regions, "
      f"{len(hp.singular)} singular regions")

# single block periodic: pairs should be empty (wrap fills locally)
hp1 = build_halo_plan(case_plan(wave_case(16, blocks=1)))
print("1-block periodic plan: pairs =", len(hp1.pairs),
      "singular =", len(hp1.singular))

# two blocks abutting in x, non-periodic cross check of face region size
zone = ZoneSpec(id=0, shape=(32, 16, 16), spacing=(1 / 32, 1 / 16, 1 / 16),
                boundary=("outflow",) * 6)
p2 = make_plan([zone], 1, NodeTopology(1, 1, 0), target_blocks=2)
hp2 = build_halo_plan(p2)
for pr in hp2.pairs:
    cells = sum(r.cells for r in pr.regions)
    print("  abut pair", pr.src_block, "->", pr.dst_block, "cells", cells,
          "regions", len(pr.regions))

# 4 blocks meeting at an edge (2x2x1): singular structure
zone4 = ZoneSpec(id=0, shape=(16, 16, 8), spacing=(1 / 16, 1 / 16, 1 / 8),
                 boundary=("outflow",) * 6)
p4 = make_plan([zone4], 1, NodeTopology(1, 1, 0), target_blocks=4)
hp4 = build_halo_plan(p4)
print("2x2x1 singular regions:",
      [(s.owner, s.shape, len(s.readers)) for s in hp4.singular])

# 7. split/regroup/map examples ----------------------------------------------
blocks = split_zone(ZoneSpec(id=0, shape=(64, 64, 64),
                             spacing=(1.0,) * 3), 8)
print("64^3 -> 8 blocks:", sorted(b.shape for b in blocks)[0],
      len(blocks))
line = split_zone(ZoneSpec(id=0, shape=(100, 1, 1), spacing=(1.0,) * 3), 3)
print("100x1x1 -> 3:", [b.shape[0] for b in line])

print("map 8 ranks / 4 nodes:", map_ranks_to_nodes(8, 4))
chain = {(r, r + 1) for r in range(7)}
print("chain cross edges:", cross_node_edges(chain, map_ranks_to_nodes(8, 4)))

p5 = make_plan([ZoneSpec(id=0, shape=(50, 10, 10), spacing=(1.0,) * 3)],
               1, NodeTopology(1, 4, 0), target_blocks=5)
rep = imbalance_report(p5)
print("5 equal blocks on 4 cpus: loads", rep.group_cells,
      "imbalance", rep.imbalance)

# 8. Sod oracle ---------------------------------------------------------------
clock("sod run start")
case = sod_case(200)
t_run = time.perf_counter()
outc = run_case(case, model=False, warmup=False)
t_run = time.perf_counter() - t_run
plan = outc.plan
rho = assemble_zone(outc.fields, plan)[0][:, 2, 2]
x = (np.arange(200) + 0.5) / 200
sol = solve_riemann(SOD_LEFT, SOD_RIGHT, gamma=1.4)
print("star state:", repr(sol.p_star), repr(sol.u_star))
t = 0.2
xi = (x - 0.5) / t
from wcnsflow.riemann import _sample
rho_e, u_e, p_e = _sample(sol, xi)
l1 = float(np.mean(np.abs(rho - rho_e)))
# post-shock plateau density and overshoot past the contact
g = 1.4
pr = sol.p_star / SOD_RIGHT.p
rho2 = SOD_RIGHT.rho * ((g + 1) * pr + (g - 1)) / ((g - 1) * pr + (g + 1))
shock_speed = SOD_RIGHT.u + math.sqrt(g * SOD_RIGHT.p / SOD_RIGHT.rho) * math.sqrt(
    (g + 1) / (2 * g) * pr + (g - 1) / (2 * g))
xc = 0.5 + sol.u_star * t
h = 1 / 200
sel = x > xc + 5 * h
overshoot = float(np.max(rho[sel]) - rho2)
jump = rho2 - SOD_RIGHT.rho
out["sod"] = {"iters": outc.iterations, "l1": l1, "rho2": rho2,
              "shock_speed": shock_speed,
              "overshoot": overshoot, "jump": jump,
              "overshoot_frac": overshoot / jump, "wall": t_run}
print(f"sod-200: {outc.iterations} iters in {t_run:.1f}s  L1 {l1:.5f}  "
      f"rho2 {rho2:.5f}  shock speed {shock_speed:.5f}  "
      f"overshoot {overshoot:.5f} ({overshoot / jump * 100:.2f}% of jump)")

# 9. freestream + conservation -----------------------------------------------
clock("freestream 50 steps")
u50 = uniform_case((16, 16, 16))
u50 = replace(u50, controls=replace(u50.controls, max_iters=50,
                                    tolerance=None, t_end=None))
f0 = initial_fields(u50, case_plan(u50))
r = run_case(u50, model=False, warmup=False)
drift = max(float(np.max(np.abs(r.fields[b].interior - f0[b].interior)))
            for b in f0)
out["freestream_drift"] = drift
print("freestream drift after 50:", drift, "iters", r.iterations)

clock("conservation 50 steps")
wv = wave_case(16, t_end=None)
wv = replace(wv, controls=replace(wv.controls, max_iters=50, t_end=None,
                                  tolerance=None))
plan = case_plan(wv)
f0 = initial_fields(wv, plan)
tot0 = np.array([sum(float(f.interior[c].sum()) for f in f0.values())
                 for c in range(5)])
r = run_case(wv, model=False, warmup=False)
tot1 = np.array([sum(float(f.interior[c].sum()) for f in r.fields.values())
                 for c in range(5)])
rel = np.abs(tot1 - tot0) / np.maximum(np.abs(tot0), 1e-30)
out["conservation_drift"] = rel.tolist()
print("conservation rel drift:", rel, "iters", r.iterations)

# 10. spatial order ----------------------------------------------------------
clock("spatial order study")
T = 0.005
errs = {}
times = {}
for n in (16, 32, 64):
    h = 1.0 / n
    dt = h ** (5.0 / 3.0) / 8.0
    c = wave_case(n, t_end=T, fixed_dt=dt)
    t1 = time.perf_counter()
    r = run_case(c, model=False, warmup=False)
    times[n] = time.perf_counter() - t1
    pl = case_plan(c)
    exact = exact_density(c, pl, r.sim_time)
    num = {b: r.fields[b].interior[0] for b in r.fields}
    e2 = math.sqrt(sum(float(np.sum((num[b] - exact[b]) ** 2)) for b in num)
                   / (n ** 3))
    errs[n] = e2
    print(f"  n={n}: {r.iterations} steps, err {e2:.3e}, "
          f"wall {times[n]:.1f}s")
ns = sorted(errs)
slopes = [math.log(errs[a] / errs[b]) / math.log(2)
          for a, b in zip(ns, ns[1:])]
logh = [math.log(1.0 / n) for n in ns]
loge = [math.log(errs[n]) for n in ns]
A = np.vstack([logh, np.ones(3)]).T
lsq = float(np.linalg.lstsq(A, np.array(loge), rcond=None)[0][0])
out["spatial"] = {"errs": errs, "pair_orders": slopes, "lsq_order": lsq,
                  "times": times}
print("spatial pairwise orders:", slopes, "LSQ", lsq)

# 11. temporal order ----------------------------------------------------------
clock("temporal order study")
n = 32
Tt = 0.008
errs_t = []
dts = [2e-3, 1e-3, 5e-4]
ref_dt = 1.25e-4
ref = run_case(wave_case(n, t_end=Tt, fixed_dt=ref_dt), model=False,
               warmup=False)
for dt in dts:
    r = run_case(wave_case(n, t_end=Tt, fixed_dt=dt), model=False,
                 warmup=False)
    e = max(float(np.max(np.abs(r.fields[b].data - ref.fields[b].data)))
            for b in r.fields)
    errs_t.append(e)
    print(f"  dt={dt}: err {e:.3e}")
orders_t = [math.log(a / b) / math.log(2) for a, b in zip(errs_t, errs_t[1:])]
out["temporal"] = {"errs": errs_t, "orders": orders_t}
print("temporal orders:", orders_t)

# 12. transparency timing ------------------------------------------------------
clock("transparency 64^3")
t1 = time.perf_counter()
c1 = wave_case(64, t_end=None, blocks=1)
c1 = replace(c1, controls=replace(c1.controls, max_iters=3, t_end=None))
r1 = run_case(c1, model=False, warmup=False)
c8 = replace(c1, target_blocks=8, ranks=8,
             topology=NodeTopology(1, 8, 0), name="wave-64-8")
r8 = run_case(c8, model=False, warmup=False)
z1 = assemble_zone(r1.fields, r1.plan)
z8 = assemble_zone(r8.fields, r8.plan)
print("transparency bitwise:", np.array_equal(z1, z8),
      "wall", time.perf_counter() - t1)

# 13. corner-16 model ----------------------------------------------------------
clock("corner-16 model")
corner = corner_case(16)
tl = model_schedule(corner, steps=2)
cpu = cpu_only_variant(corner)
tl0 = model_schedule(cpu, steps=2)
speedup = tl0.makespan / tl.makespan
out["corner16_speedup"] = speedup
print("corner-16 hetero speedup:", speedup)
print("  makespan", tl.makespan, "serialized", tl.serialized_total,
      "hidden", tl.hidden_comm_fraction)

ratios = [round(0.2 + 0.1 * i, 1) for i in range(11)]
t1 = time.perf_counter()
pts = sweep_load_ratio(corner, ratios, steps=2)
best = best_ratio(pts)
pred = predict_balanced_ratio(corner)
out["sweep"] = {"ratios": ratios,
                "speedups": [p.speedup for p in pts],
                "best": best.ratio, "pred": pred,
                "wall": time.perf_counter() - t1}
print("sweep:", [(p.ratio, round(p.speedup, 3)) for p in pts])
print("best", best.ratio, "pred", pred, "wall", time.perf_counter() - t1)

# 14. weak scaling -------------------------------------------------------------
clock("weak scaling model")
mets = weak_scaling(lambda r: corner_case(r, columns=100, cross=20),
                    [1, 2, 4, 8], steps=2)
per = [m.model_seconds / m.iterations for m in mets]
var = (max(per) - min(per)) / per[0]
out["weak_var"] = var
print("weak per-iter:", per, "variation", var)

clock("weak scaling real-run feasibility")
t1 = time.perf_counter()
for rr in (1, 8):
    c = corner_case(rr, columns=40, cross=10, max_iters=2)
    r = run_case(c, max_workers=2, model=False, warmup=False)
    print(f"  real corner nodes={rr}: iters {r.iterations} "
          f"wall {r.wall_seconds:.2f}s total {time.perf_counter() - t1:.1f}s")

# 15. 64-block comm A/B --------------------------------------------------------
clock("comm A/B")
zone = ZoneSpec(id=0, shape=(40, 40, 240),
                spacing=(1 / 40, 1 / 40, 1 / 240))
abcase = replace(wave_case(16), name="comm-ab", zones=[zone],
                 target_blocks=64, ranks=8, topology=NodeTopology(1, 8, 0))
abplan = case_plan(abcase)
print("  blocks", len(abplan.blocks), "shape", abplan.blocks[0].shape)
tuned = model_schedule(abcase, abplan, steps=2, overlap=True, coalesce=True)
naive = model_schedule(abcase, abplan, steps=2, overlap=False, coalesce=False)
out["comm_ab"] = {"tuned_ratio": tuned.comp_stall_ratio(),
                  "naive_ratio": naive.comp_stall_ratio(),
                  "tuned_makespan": tuned.makespan,
                  "naive_makespan": naive.makespan}
print("  tuned comp/stall", tuned.comp_stall_ratio(),
      "naive", naive.comp_stall_ratio())
print("  makespans", tuned.makespan, naive.makespan)

# 16. workers/tile invariance timing -------------------------------------------
clock("worker/tile invariance")
t1 = time.perf_counter()
base = wave_case(16, t_end=None, blocks=8)
base = replace(base, controls=replace(base.controls, max_iters=2, t_end=None))
ref = run_case(base, model=False, warmup=False)
ok = True
for wk in (1, 2, 8):
    for tile in (4, None):
        r = run_case(base, max_workers=wk, tile=tile, model=False,
                     warmup=False)
        ok &= all(np.array_equal(ref.fields[b].data, r.fields[b].data)
                  for b in ref.fields)
print("  all bitwise:", ok, "wall", time.perf_counter() - t1)

# 17. polynomial edge reproduction oracle --------------------------------------
rng = np.random.default_rng(7)
worst = 0.0
for _ in range(20):
    coef = rng.normal(size=5)
    xs = np.arange(7.0)
    f = np.polyval(coef, xs)
    edges = interpolate_line_edges(f, side="left", weights="ideal")
    for j, e in enumerate(edges):
        xe = j + 2.5
        worst = max(worst, abs(e - np.polyval(coef, xe)))
print("degree-4 ideal-weight reproduction worst:", worst)

clock("done")
with open("/tmp/oracles.json", "w") as fh:
    json.dump(out, fh, indent=1, default=str)
print(json.dumps(out, indent=1, default=str))
