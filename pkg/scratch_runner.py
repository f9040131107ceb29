"""Runner smoke checks before freezing test values."""
import threading
import time

import numpy as np

from wcnsflow.cases import (corner_case, sod_case, uniform_case, wave_case,
                            case_plan, initial_fields)
from wcnsflow.errors import DivergenceError
from wcnsflow.halo import build_halo_plan, fill_block_ghosts
from wcnsflow.partition import NodeTopology
from wcnsflow.residual import block_residual, block_wavespeed_bound
from wcnsflow.runner import (RankWorker, best_ratio, build_simulation,
                             cpu_only_variant, model_schedule,
                             predict_balanced_ratio, run_case,
                             run_socket_rank, sweep_load_ratio, weak_scaling)
from wcnsflow.schedule import timeline_report
from wcnsflow.state import primitive_from_conserved
from wcnsflow.timestepping import clip_dt, stage_state
from wcnsflow.transport import free_port
from dataclasses import replace

ok = 0


def check(name, cond, detail=""):
    global ok
    print(f"{'PASS' if cond else 'FAIL'}: {name} {detail}")
    if not cond:
        raise SystemExit(f"failed: {name}")
    ok += 1


# --- 1. hand reference loop vs run_case (1 block, 1 rank) -----------------
case = wave_case(n=16, t_end=0.002, fixed_dt=5e-4)
plan = case_plan(case)
hp = build_halo_plan(plan)
gas = case.gas
spacing = plan.zones[0].spacing
fs = case.freestream_conserved()

fields = initial_fields(case, plan)
f = fields[0]
q0 = f.interior.copy()
t = 0.0
steps = 0
while steps < case.controls.max_iters and t < 0.002 * (1 - 1e-15):
    dt = None
    for stage in range(3):
        w_int = primitive_from_conserved(f.interior, gas)
        lams = tuple(block_wavespeed_bound(w_int, ax, gas) for ax in range(3))
        if stage == 0:
            dt = clip_dt(5e-4, t, 0.002)
        fill_block_ghosts(f.data, 0, hp, fs)
        r = block_residual(f.data, gas, spacing, lams)
        f.interior[...] = stage_state(stage, dt, q0, f.interior, r)
    q0[...] = f.interior
    t += dt
    steps += 1

out1 = run_case(case, warmup=False)
check("reference steps", out1.iterations == steps == 4,
      f"steps={out1.iterations} t={out1.sim_time}")
check("reference bitwise", np.array_equal(out1.fields[0].interior, f.interior))
check("norm history length", len(out1.norm_history) == 4)

# --- 2. transparency: 8 blocks / 2 ranks / naive / blocking ---------------
case8 = replace(wave_case(n=16, t_end=0.002, fixed_dt=5e-4, blocks=8),
                ranks=2, topology=NodeTopology(1, 2, 0))
out8 = run_case(case8, warmup=False)
check("8-block plan", len(out8.plan.blocks) == 8 and out8.plan.ranks == 2)


def merged(out, n=16):
    from wcnsflow.fields import assemble_zone
    return assemble_zone(out.fields, out.plan, 0)


check("2-rank bitwise vs serial", np.array_equal(merged(out1), merged(out8)))

out8n = run_case(case8, warmup=False, coalesce=False)
check("naive bitwise", np.array_equal(merged(out8), merged(out8n)))
out8b = run_case(case8, warmup=False, overlap=False)
check("blocking bitwise", np.array_equal(merged(out8), merged(out8b)))
out8w = run_case(case8, warmup=False, max_workers=1, tile=4)
check("workers/tile bitwise", np.array_equal(merged(out8), merged(out8w)))
check("messages counted", out8.totals.messages > 0 and out8.totals.bytes > 0)

# --- 3. divergence abort, multi-rank, no deadlock --------------------------
bad = replace(case8, controls=replace(case8.controls, fixed_dt=10.0,
                                      t_end=None, max_iters=30))
t0 = time.perf_counter()
try:
    run_case(bad, warmup=False)
    check("divergence raised", False)
except DivergenceError as e:
    check("divergence raised", True, f"({e}) in {time.perf_counter()-t0:.1f}s")

# --- 4. corner model ---------------------------------------------------------
corner = corner_case(nodes=16, max_iters=2)
planc = case_plan(corner)
tl = model_schedule(corner, planc, steps=2)
base = model_schedule(cpu_only_variant(corner), steps=2)
speedup = base.makespan / tl.makespan
print(timeline_report(tl))
check("corner speedup in band", 2.3 <= speedup <= 2.9, f"speedup={speedup:.3f}")
check("overlap bound", tl.makespan <= tl.serialized_total)
check("hidden comm", 0.0 < tl.hidden_comm_fraction <= 1.0,
      f"hidden={tl.hidden_comm_fraction:.3f}")

ratios = [0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 1.0, 1.2]
points = sweep_load_ratio(corner, ratios, steps=1)
bp = best_ratio(points)
for p in points:
    print(f"  ratio {p.ratio:4.2f}  het {p.hetero_seconds*1e3:7.3f} ms"
          f"  cpu {p.cpu_only_seconds*1e3:7.3f} ms  speedup {p.speedup:.3f}")
pred = predict_balanced_ratio(corner)
check("sweep best in band", 0.6 <= bp.ratio <= 0.8, f"best={bp.ratio}")
check("predicted ratio", abs(bp.ratio - pred) <= 0.2, f"pred={pred:.4f}")

# --- 5. weak scaling ---------------------------------------------------------
rows = weak_scaling(lambda r: corner_case(nodes=r, max_iters=2),
                    [1, 2, 4, 8], steps=2)
per_step = [m.model_seconds / m.iterations for m in rows]
var = (max(per_step) - min(per_step)) / per_step[0]
for r, s in zip([1, 2, 4, 8], per_step):
    print(f"  ranks {r}: {s*1e3:.3f} ms/step")
check("weak scaling within 10%", var <= 0.10, f"var={var*100:.2f}%")

# --- 6. naive vs tuned comp/comm on a 64-block case ------------------------
comm = replace(uniform_case(n=(40, 40, 240), blocks=64, max_iters=2),
               ranks=8, topology=NodeTopology(1, 8, 0))
planm = case_plan(comm)
shapes = {b.shape for b in planm.blocks}
print(f"  64-block shapes: {shapes}, pairs={len(build_halo_plan(planm).pairs)}"
      f" regions={build_halo_plan(planm).region_count}")
tuned = model_schedule(comm, planm, steps=2, overlap=True, coalesce=True)
naive = model_schedule(comm, planm, steps=2, overlap=False, coalesce=False)
rt, rn = tuned.comp_stall_ratio(), naive.comp_stall_ratio()
print(f"  tuned comp/comm {rt:.2f}  naive {rn:.2f}  makespans "
      f"{tuned.makespan*1e3:.3f}/{naive.makespan*1e3:.3f} ms")
check("64 blocks", len(planm.blocks) == 64)
check("comp/comm improvement", np.isfinite(rn) and rt / rn >= 2.0,
      f"improvement={rt/rn:.2f}x")
check("naive makespan worse", naive.makespan > tuned.makespan)

# --- 7. socket mode ---------------------------------------------------------
addresses = {0: ("127.0.0.1", free_port()), 1: ("127.0.0.1", free_port())}
results = {}


def run_rank(r):
    results[r] = run_socket_rank(case8, r, addresses, timeout=30.0)


threads = [threading.Thread(target=run_rank, args=(r,)) for r in (0, 1)]
for th in threads:
    th.start()
for th in threads:
    th.join()
outs = results[0]
check("socket outcome on rank 0", outs is not None and results[1] is None)
check("socket bitwise", np.array_equal(merged(outs), merged(out1)))

# --- 8. best_of / warmup path ------------------------------------------------
outb = run_case(case, warmup=True, best_of=2)
check("best_of bitwise", np.array_equal(merged(outb), merged(out1)))
check("metrics wall source", outb.metrics.timing_source == "wall"
      and outb.metrics.mcups > 0)

co = run_case(replace(corner_case(nodes=2, max_iters=2, columns=40),
                      ), warmup=False)
check("hetero metrics model source", co.metrics.timing_source == "model",
      f"model={co.metrics.model_seconds}")

print(f"\nall {ok} checks passed")
