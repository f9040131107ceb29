"""Scratch checks for halo plan + exchanger. Not part of the suite."""
import threading

import numpy as np

from wcnsflow.fields import allocate_fields, BlockField
from wcnsflow.halo import (
    H, HaloExchanger, build_halo_plan, fill_block_ghosts, pack_pair,
    unpack_pair, resolve_singular_points,
)
from wcnsflow.partition import Block, NodeTopology, ZoneSpec, make_plan
from wcnsflow.state import NCOMP
from wcnsflow.transport import InProcessTransport

TOPO = NodeTopology(nodes=1, cpu_per_node=2, coproc_per_node=0)
rng = np.random.default_rng(7)


def fill_interiors(fields, plan, zone):
    for b in plan.blocks:
        f = fields[b.id]
        for c in range(NCOMP):
            for idx in np.ndindex(*b.shape):
                g = tuple(b.lo[a] + idx[a] for a in range(3))
                f.interior[(c,) + idx] = value_at(c, g)


def value_at(c, g):
    return np.sin(0.3 * g[0] + 0.7 * g[1] - 0.2 * g[2] + c) + 0.01 * c


def reference_ext(zone, freestream):
    """Single-block extended array with ghosts filled the same way."""
    blocks = [Block(id=0, zone=0, lo=(0, 0, 0), hi=zone.shape)]
    plan = make_plan([zone], ranks=1, topology=NodeTopology(1, 1, 0),
                     explicit_blocks=blocks)
    hp = build_halo_plan(plan)
    fields = allocate_fields(plan)
    fill_interiors(fields, plan, zone)
    fill_block_ghosts(fields[0].data, 0, hp, freestream)
    assert not hp.pairs
    return fields[0].data


def compare(plan, fields, zone, ref):
    worst = 0.0
    n = zone.shape
    for b in plan.blocks:
        ext = fields[b.id].data
        for a in range(3):
            assert ext.shape[1 + a] == b.shape[a] + 2 * H
        for idx in np.ndindex(*ext.shape[1:]):
            g = []
            for a in range(3):
                ga = b.lo[a] + idx[a] - H
                if zone.periodic(a):
                    ga = ga % n[a]
                g.append(ga + H if not zone.periodic(a) else ga + H)
            # map to reference ext index: periodic wrapped into [0,n) then +H;
            # non-periodic ga in [-H, n+H) then +H
            sel = (slice(None),) + tuple(g)
            d = np.max(np.abs(ext[(slice(None),) + idx] - ref[sel]))
            worst = max(worst, d)
    return worst


def run_case(zone, splits, freestream=None, ranks=1, coalesce=True,
             mode="nonblocking"):
    plan = make_plan([zone], ranks=ranks, topology=TOPO,
                     target_blocks=splits)
    hp = build_halo_plan(plan)
    fields = allocate_fields(plan)
    fill_interiors(fields, plan, zone)
    if ranks == 1:
        ex = HaloExchanger(hp, plan, transport=None, freestream=freestream,
                           coalesce=coalesce)
        stats = ex.run(0, fields, epoch=0, mode=mode)
    else:
        transport = InProcessTransport(ranks)
        ex = HaloExchanger(hp, plan, transport=transport,
                           freestream=freestream, coalesce=coalesce)
        # each rank only sees its own blocks
        views = [{b.id: fields[b.id] for b in plan.blocks_of_rank(r)}
                 for r in range(ranks)]
        threads = [threading.Thread(target=ex.run, args=(r, views[r], 0),
                                    kwargs={"mode": mode})
                   for r in range(ranks)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        stats = None
    ref = reference_ext(zone, freestream)
    worst = compare(plan, fields, zone, ref)
    return plan, hp, fields, worst, stats


# 1. all-periodic, 8 blocks, serial
zone = ZoneSpec(id=0, shape=(16, 12, 10))
plan, hp, fields, worst, stats = run_case(zone, 8)
print(f"periodic 8-block vs 1-block: worst delta {worst}")
assert worst == 0.0
print(f"  pairs={len(hp.pairs)} regions={hp.region_count} "
      f"local_copies={stats.local_copies} sent={stats.messages_sent}")

# 2. mixed BCs: x inflow/outflow, y wall/outflow, z periodic; split all axes
zone2 = ZoneSpec(id=0, shape=(16, 12, 10),
                 boundary=("inflow", "outflow", "wall", "outflow",
                           "periodic", "periodic"))
fs = np.array([1.0, 0.3, -0.2, 0.1, 2.5])
plan2, hp2, fields2, worst2, _ = run_case(zone2, 8, freestream=fs)
print(f"mixed-BC 8-block vs 1-block: worst delta {worst2}")
assert worst2 == 0.0

# 3. same but 2 ranks over threads, naive mode, blocking
plan3, hp3, fields3, worst3, _ = run_case(zone2, 8, freestream=fs, ranks=2,
                                          coalesce=False, mode="blocking")
print(f"mixed-BC 2-rank naive blocking: worst delta {worst3}")
assert worst3 == 0.0

# 4. pack/unpack round-trip
p = hp.pairs[0]
payload = pack_pair(p, fields)
before = fields[p.dst_block].data.copy()
scr = {p.dst_block: BlockField(block=plan.blocks[p.dst_block],
                               data=np.zeros_like(before))}
unpack_pair(p, scr, payload)
for r in p.regions:
    assert np.array_equal(scr[p.dst_block].data[r.dst_slices],
                          fields[p.src_block].data[r.src_slices])
print("pack/unpack round-trip ok")

# 5. singular regions: 2x2x1 periodic split -> every interior corner shared
zone5 = ZoneSpec(id=0, shape=(16, 16, 6))
plan5 = make_plan([zone5], ranks=1, topology=TOPO, target_blocks=4)
hp5 = build_halo_plan(plan5)
fields5 = allocate_fields(plan5)
fill_interiors(fields5, plan5, zone5)
ex5 = HaloExchanger(hp5, plan5, transport=None)
ex5.run(0, fields5, epoch=0)
npts = sum(1 for _ in hp5.singular_points())
owners = {s.owner for s in hp5.singular}
multi = [s for s in hp5.singular if len(s.sharers) >= 4]
print(f"singular regions={len(hp5.singular)} points={npts} owners={sorted(owners)} "
      f"4-sharer regions={len(multi)}")
delta = resolve_singular_points(fields5, hp5, plan5)
print(f"singular resolve max delta: {delta}")
assert delta == 0.0
assert len(multi) >= 4

# spot-check one singular point's sharers make sense
sp = next(hp5.singular_points())
print(f"example point {sp.coord} owner={sp.owner} sharers={sp.sharers}")
print("all halo scratch checks passed")
