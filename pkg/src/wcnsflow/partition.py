"""Static decomposition: zones into blocks, blocks into per-device groups.

The decomposition is a pre-processing step.  A zone is an axis-aligned
structured box of cells; ``split_zone`` tiles it with a regular grid of
blocks sized as evenly as possible.  ``regroup_blocks`` then distributes
blocks to ranks (contiguous spatial chunks) and, within each rank, to one
group per device, with the coprocessor/CPU workload ratio as the single
balance knob.  ``map_ranks_to_nodes`` finally places ranks on machine nodes
so that neighboring ranks share a node where possible.

Blocks never split below the halo width along a split axis, which keeps
every exchange region inside a single neighbor block.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CaseFormatError, PartitionError
from .wcns import HALO_WIDTH

BOUNDARY_KINDS = ("periodic", "inflow", "outflow", "wall")


@dataclass(frozen=True)
class ZoneSpec:
    """A structured box of cells with per-face boundary tags.

    ``shape`` counts cells per axis; ``spacing`` is the uniform grid step.
    ``boundary`` lists six tags in face order x-lo, x-hi, y-lo, y-hi,
    z-lo, z-hi.  Periodic tags must pair up per axis.
    """

    id: int
    shape: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    boundary: tuple[str, str, str, str, str, str] = ("periodic",) * 6

    def __post_init__(self):
        if len(self.shape) != 3 or any(n < 1 for n in self.shape):
            raise PartitionError(f"bad zone shape {self.shape}")
        if len(self.boundary) != 6:
            raise PartitionError("zone needs six boundary tags")
        for tag in self.boundary:
            if tag not in BOUNDARY_KINDS:
                raise PartitionError(f"unknown boundary tag {tag!r}")
        for ax in range(3):
            lo, hi = self.boundary[2 * ax], self.boundary[2 * ax + 1]
            if ("periodic" in (lo, hi)) and lo != hi:
                raise PartitionError(f"axis {ax} mixes periodic with {lo!r}/{hi!r}")

    @property
    def cells(self) -> int:
        return int(np.prod(self.shape))

    def periodic(self, axis: int) -> bool:
        return self.boundary[2 * axis] == "periodic"


@dataclass(frozen=True)
class Block:
    """Half-open global cell box ``[lo, hi)`` owned by one zone."""

    id: int
    zone: int
    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def cells(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class NodeTopology:
    """Machine shape: identical nodes, each with CPU and coprocessor devices."""

    nodes: int = 1
    cpu_per_node: int = 2
    coproc_per_node: int = 3
    cpu_workers: int = 12
    coproc_workers: int = 57

    def __post_init__(self):
        if self.nodes < 1 or self.cpu_per_node < 1 or self.coproc_per_node < 0:
            raise PartitionError(f"bad topology {self}")


@dataclass
class Group:
    """Blocks bound to one device of one rank."""

    id: int
    rank: int
    device_class: str            # "cpu" or "coprocessor"
    device_index: int            # within the rank
    block_ids: list[int] = field(default_factory=list)


@dataclass
class PartitionPlan:
    zones: list[ZoneSpec]
    blocks: list[Block]
    ranks: int
    topology: NodeTopology
    load_ratio: float
    groups: list[Group]
    rank_of_block: list[int]
    node_of_rank: list[int]

    def zone_of(self, zone_id: int) -> ZoneSpec:
        return self.zones[zone_id]

    def blocks_of_rank(self, rank: int) -> list[Block]:
        return [b for b in self.blocks if self.rank_of_block[b.id] == rank]

    def groups_of_rank(self, rank: int) -> list[Group]:
        return [g for g in self.groups if g.rank == rank]

    @property
    def total_cells(self) -> int:
        return sum(b.cells for b in self.blocks)


def _axis_cuts(n: int, parts: int) -> list[int]:
    """Balanced widths: the first ``n % parts`` parts get one extra cell."""
    base, rem = divmod(n, parts)
    return [base + 1 if i < rem else base for i in range(parts)]


def _factor_triples(count: int):
    for px in range(1, count + 1):
        if count % px:
            continue
        rest = count // px
        for py in range(1, rest + 1):
            if rest % py:
                continue
            yield px, py, rest // py


def _triple_valid(shape, triple) -> bool:
    for n, p in zip(shape, triple):
        if p > n:
            return False
        if p > 1 and n // p < HALO_WIDTH:
            return False
    return True


def _blocks_from_counts(zone: ZoneSpec, counts, first_id: int = 0) -> list[Block]:
    cuts = [np.concatenate(([0], np.cumsum(_axis_cuts(n, p))))
            for n, p in zip(zone.shape, counts)]
    blocks = []
    bid = first_id
    for kx in range(counts[0]):
        for ky in range(counts[1]):
            for kz in range(counts[2]):
                lo = (int(cuts[0][kx]), int(cuts[1][ky]), int(cuts[2][kz]))
                hi = (int(cuts[0][kx + 1]), int(cuts[1][ky + 1]), int(cuts[2][kz + 1]))
                blocks.append(Block(id=bid, zone=zone.id, lo=lo, hi=hi))
                bid += 1
    return blocks


def split_zone(zone: ZoneSpec, target_blocks: int | None = None,
               max_block_cells: int | None = None,
               first_id: int = 0) -> list[Block]:
    """Tile a zone with a regular grid of near-equal blocks.

    Exactly one of ``target_blocks`` / ``max_block_cells`` must be given.
    The factorization minimizes the largest block first and internal face
    area (communication surface) second.
    """
    if (target_blocks is None) == (max_block_cells is None):
        raise PartitionError("give exactly one of target_blocks / max_block_cells")

    def best_triple(count):
        candidates = []
        for triple in _factor_triples(count):
            if not _triple_valid(zone.shape, triple):
                continue
            widths = [_axis_cuts(n, p) for n, p in zip(zone.shape, triple)]
            biggest = int(np.prod([max(w) for w in widths]))
            area = sum((p - 1) * zone.cells // n
                       for n, p in zip(zone.shape, triple))
            candidates.append((biggest, area, triple))
        if not candidates:
            return None
        return min(candidates)

    if target_blocks is not None:
        if target_blocks < 1 or target_blocks > zone.cells:
            raise PartitionError(
                f"cannot cut {zone.cells} cells into {target_blocks} blocks")
        pick = best_triple(target_blocks)
        if pick is None:
            raise PartitionError(
                f"no valid {target_blocks}-block tiling of shape {zone.shape} "
                f"with min block width {HALO_WIDTH}")
        return _blocks_from_counts(zone, pick[2], first_id)

    if max_block_cells < 1:
        raise PartitionError(f"max_block_cells must be positive, got {max_block_cells}")
    count = max(1, -(-zone.cells // max_block_cells))
    for b in range(count, 8 * count + 64):
        pick = best_triple(b)
        if pick is not None and pick[0] <= max_block_cells:
            return _blocks_from_counts(zone, pick[2], first_id)
    raise PartitionError(
        f"no tiling of shape {zone.shape} reaches max_block_cells={max_block_cells}")


def split_zone_cuts(zone: ZoneSpec, axis: int, widths: list[int],
                    first_id: int = 0) -> list[Block]:
    """Tile a zone with explicit widths along one axis (other axes unsplit)."""
    if sum(widths) != zone.shape[axis]:
        raise PartitionError(
            f"cut widths sum to {sum(widths)}, axis extent is {zone.shape[axis]}")
    if len(widths) > 1 and min(widths) < HALO_WIDTH:
        raise PartitionError(f"cut width below halo width: {widths}")
    counts = [1, 1, 1]
    counts[axis] = len(widths)
    blocks = []
    pos = 0
    for i, width in enumerate(widths):
        lo = [0, 0, 0]
        hi = list(zone.shape)
        lo[axis], hi[axis] = pos, pos + width
        blocks.append(Block(id=first_id + i, zone=zone.id,
                            lo=tuple(lo), hi=tuple(hi)))
        pos += width
    return blocks


# ---------------------------------------------------------------------------
# Adjacency

OFFSETS = [off for off in itertools.product((-1, 0, 1), repeat=3)
           if off != (0, 0, 0)]


def halo_source_box(block: Block, zone: ZoneSpec, offset, width: int = HALO_WIDTH):
    """Global cell box of the halo region of ``block`` in direction ``offset``.

    Returns ``None`` when the region falls outside a non-periodic zone face
    (those cells are boundary-condition ghosts, not exchange targets).
    Periodic coordinates are returned unwrapped; callers wrap modulo the
    zone extent.
    """
    lo, hi = [], []
    for ax in range(3):
        n = zone.shape[ax]
        if offset[ax] == 0:
            a, b = block.lo[ax], block.hi[ax]
        elif offset[ax] < 0:
            a, b = block.lo[ax] - width, block.lo[ax]
        else:
            a, b = block.hi[ax], block.hi[ax] + width
        if (a < 0 or b > n) and not zone.periodic(ax):
            return None
        lo.append(a)
        hi.append(b)
    return tuple(lo), tuple(hi)


def owner_of_cell(blocks_of_zone: list[Block], zone: ZoneSpec, cell) -> Block:
    wrapped = tuple(c % n for c, n in zip(cell, zone.shape))
    for b in blocks_of_zone:
        if all(l <= c < h for l, c, h in zip(b.lo, wrapped, b.hi)):
            return b
    raise PartitionError(f"no block owns cell {cell} in zone {zone.id}")


def block_neighbors(blocks: list[Block], zones: list[ZoneSpec]
                    ) -> dict[tuple[int, tuple], int]:
    """Map ``(block_id, offset) -> neighbor block id`` over all 26 offsets.

    Offsets whose halo region is a physical boundary are absent.  A block can
    neighbor itself across a periodic wrap.
    """
    by_zone: dict[int, list[Block]] = {}
    for b in blocks:
        by_zone.setdefault(b.zone, []).append(b)
    out = {}
    for b in blocks:
        zone = zones[b.zone]
        for off in OFFSETS:
            box = halo_source_box(b, zone, off)
            if box is None:
                continue
            owner = owner_of_cell(by_zone[b.zone], zone, box[0])
            out[(b.id, off)] = owner.id
    return out


# ---------------------------------------------------------------------------
# Regrouping

def _devices_of_rank(ranks: int, topology: NodeTopology) -> tuple[int, int]:
    """CPU and coprocessor devices available to each rank."""
    if ranks % topology.nodes:
        raise PartitionError(
            f"{ranks} ranks do not divide over {topology.nodes} nodes")
    per_node = ranks // topology.nodes
    if topology.cpu_per_node % per_node or topology.coproc_per_node % per_node:
        raise PartitionError(
            f"{per_node} ranks per node cannot share "
            f"{topology.cpu_per_node} CPU + {topology.coproc_per_node} coprocessor "
            "devices evenly")
    return (topology.cpu_per_node // per_node,
            topology.coproc_per_node // per_node)


def regroup_blocks(blocks: list[Block], zones: list[ZoneSpec], ranks: int,
                   topology: NodeTopology, load_ratio: float
                   ) -> tuple[list[Group], list[int]]:
    """Assign blocks to ranks and to one group per device.

    Ranks receive contiguous spatial chunks (block id order follows the
    tiling).  Within a rank, groups are filled largest-block-first toward
    cell targets proportional to device weight (CPU 1, coprocessor
    ``load_ratio``); blocks that touch another rank go to CPU groups first
    so inter-rank traffic stays on the host side.
    """
    if load_ratio <= 0:
        raise PartitionError(f"load ratio must be positive, got {load_ratio}")
    n_cpu, n_cop = _devices_of_rank(ranks, topology)
    dev_per_rank = n_cpu + n_cop
    if dev_per_rank * ranks > len(blocks):
        raise PartitionError(
            f"{dev_per_rank * ranks} groups cannot be filled from "
            f"{len(blocks)} blocks")

    total = sum(b.cells for b in blocks)
    rank_of_block = [-1] * len(blocks)

    # Contiguous chunks in id (spatial) order; cumulative targets avoid
    # rounding drift across ranks.
    ordered = sorted(blocks, key=lambda b: b.id)
    taken = 0
    cum = 0
    for r in range(ranks):
        reserve = (ranks - 1 - r) * dev_per_rank
        target = total * (r + 1) / ranks
        count = 0
        while taken < len(ordered) - reserve:
            b = ordered[taken]
            if (r < ranks - 1 and count >= dev_per_rank
                    and cum + 0.5 * b.cells > target):
                break
            rank_of_block[b.id] = r
            cum += b.cells
            count += 1
            taken += 1
    for b in ordered[taken:]:
        rank_of_block[b.id] = ranks - 1

    neighbors = block_neighbors(blocks, zones)
    nbrs_of: dict[int, list[int]] = {b.id: [] for b in blocks}
    for (bid, _off), nb in neighbors.items():
        nbrs_of[bid].append(nb)
    block_by_id = {b.id: b for b in blocks}

    groups: list[Group] = []
    for r in range(ranks):
        for i in range(n_cpu):
            groups.append(Group(id=len(groups), rank=r,
                                device_class="cpu", device_index=i))
        for i in range(n_cop):
            groups.append(Group(id=len(groups), rank=r,
                                device_class="coprocessor", device_index=n_cpu + i))

    for r in range(ranks):
        mine = [b for b in blocks if rank_of_block[b.id] == r]
        rgroups = [g for g in groups if g.rank == r]
        weights = [1.0 if g.device_class == "cpu" else load_ratio for g in rgroups]
        scale = sum(b.cells for b in mine) / sum(weights)
        deficit = [w * scale for w in weights]
        placed: dict[int, int] = {}

        def neighbor_groups(b):
            return {placed[nb] for nb in nbrs_of[b.id] if nb in placed}

        def place(b, gi):
            rgroups[gi].block_ids.append(b.id)
            deficit[gi] -= b.cells
            placed[b.id] = gi

        boundary = [b for b in mine
                    if any(rank_of_block[nb] != r for nb in nbrs_of[b.id])]
        interior = [b for b in mine if b not in boundary]
        order = sorted(boundary, key=lambda b: (-b.cells, b.id)) + \
            sorted(interior, key=lambda b: (-b.cells, b.id))

        cpu_idx = [i for i, g in enumerate(rgroups) if g.device_class == "cpu"]
        for b in order:
            if b in boundary:
                open_cpu = [i for i in cpu_idx if deficit[i] > 0]
                if open_cpu:
                    best = max(open_cpu, key=lambda i: deficit[i])
                    place(b, best)
                    continue
            # Largest remaining deficit wins; near-ties prefer a group that
            # already holds a spatial neighbor, then the lower group index.
            top = max(deficit)
            tol = max(b.cells * 0.25, 1e-9 * max(abs(top), 1.0))
            tied = [i for i, d in enumerate(deficit) if top - d <= tol]
            adj = [i for i in tied if i in neighbor_groups(b)]
            place(b, min(adj) if adj else min(tied))

        for g in rgroups:
            g.block_ids.sort()
        empty = [g for g in rgroups if not g.block_ids]
        if empty:
            # Steal the smallest block of the fullest group for each empty one.
            for g in empty:
                donor = max(rgroups, key=lambda gg: len(gg.block_ids))
                if len(donor.block_ids) <= 1:
                    raise PartitionError(
                        f"rank {r}: cannot fill group {g.id} ({len(mine)} blocks "
                        f"for {len(rgroups)} groups)")
                moved = min(donor.block_ids, key=lambda bid: block_by_id[bid].cells)
                donor.block_ids.remove(moved)
                g.block_ids.append(moved)

    return groups, rank_of_block


def rank_adjacency(blocks: list[Block], zones: list[ZoneSpec],
                   rank_of_block: list[int]) -> set[tuple[int, int]]:
    """Undirected rank pairs connected by at least one block neighbor edge."""
    edges = set()
    for (bid, _off), nb in block_neighbors(blocks, zones).items():
        ra, rb = rank_of_block[bid], rank_of_block[nb]
        if ra != rb:
            edges.add((min(ra, rb), max(ra, rb)))
    return edges


def map_ranks_to_nodes(ranks: int, nodes: int,
                       adjacency: set[tuple[int, int]] | None = None
                       ) -> list[int]:
    """Place ranks on nodes, keeping consecutive (spatially adjacent) ranks
    together.  Ranks are created from contiguous block chunks, so chunking
    consecutive ids is the greedy minimizer of cross-node edges."""
    if ranks % nodes:
        raise PartitionError(f"{ranks} ranks do not divide over {nodes} nodes")
    per = ranks // nodes
    return [r // per for r in range(ranks)]


def cross_node_edges(adjacency: set[tuple[int, int]],
                     node_of_rank: list[int]) -> int:
    return sum(1 for a, b in adjacency if node_of_rank[a] != node_of_rank[b])


@dataclass
class ImbalanceReport:
    group_cells: list[int]
    group_load: list[float]
    max_load: float
    mean_load: float

    @property
    def imbalance(self) -> float:
        return self.max_load / self.mean_load if self.mean_load else float("nan")


def imbalance_report(plan: PartitionPlan,
                     throughput: dict[str, float] | None = None) -> ImbalanceReport:
    """Per-group cell loads normalized by device throughput."""
    thr = {"cpu": 1.0, "coprocessor": 1.0}
    if throughput:
        thr.update(throughput)
    block_by_id = {b.id: b for b in plan.blocks}
    cells = [sum(block_by_id[i].cells for i in g.block_ids) for g in plan.groups]
    load = [c / thr[g.device_class] for c, g in zip(cells, plan.groups)]
    return ImbalanceReport(group_cells=cells, group_load=load,
                           max_load=max(load), mean_load=float(np.mean(load)))


def make_plan(zones: list[ZoneSpec], ranks: int, topology: NodeTopology,
              load_ratio: float = 1.0, target_blocks: int | None = None,
              max_block_cells: int | None = None,
              explicit_blocks: list[Block] | None = None) -> PartitionPlan:
    """Full pipeline: split (unless blocks are given), regroup, map to nodes."""
    if explicit_blocks is not None:
        blocks = list(explicit_blocks)
    else:
        blocks = []
        for zone in zones:
            per_zone_target = None
            if target_blocks is not None:
                per_zone_target = max(1, target_blocks // len(zones))
            blocks.extend(split_zone(zone, per_zone_target, max_block_cells,
                                     first_id=len(blocks)))
    groups, rank_of_block = regroup_blocks(blocks, zones, ranks, topology,
                                           load_ratio)
    node_of_rank = map_ranks_to_nodes(ranks, topology.nodes)
    return PartitionPlan(zones=zones, blocks=blocks, ranks=ranks,
                         topology=topology, load_ratio=load_ratio,
                         groups=groups, rank_of_block=rank_of_block,
                         node_of_rank=node_of_rank)


# ---------------------------------------------------------------------------
# Plan files: a line-oriented text format, one record per line.

PLAN_MAGIC = "wcnsflow-plan"
PLAN_VERSION = 1


def _fmt_tuple(t) -> str:
    return ",".join(repr(x) if isinstance(x, float) else str(x) for x in t)


def plan_to_text(plan: PartitionPlan) -> str:
    lines = [f"{PLAN_MAGIC} {PLAN_VERSION}",
             f"ranks {plan.ranks}",
             f"load-ratio {plan.load_ratio!r}",
             (f"topology nodes={plan.topology.nodes} "
              f"cpu={plan.topology.cpu_per_node} "
              f"coproc={plan.topology.coproc_per_node} "
              f"cpu-workers={plan.topology.cpu_workers} "
              f"coproc-workers={plan.topology.coproc_workers}")]
    for z in plan.zones:
        lines.append(f"zone {z.id} shape={_fmt_tuple(z.shape)} "
                     f"spacing={_fmt_tuple(z.spacing)} "
                     f"origin={_fmt_tuple(z.origin)} "
                     f"boundary={','.join(z.boundary)}")
    for b in plan.blocks:
        lines.append(f"block {b.id} zone={b.zone} lo={_fmt_tuple(b.lo)} "
                     f"hi={_fmt_tuple(b.hi)} rank={plan.rank_of_block[b.id]}")
    for g in plan.groups:
        lines.append(f"group {g.id} rank={g.rank} class={g.device_class} "
                     f"device={g.device_index} "
                     f"blocks={_fmt_tuple(g.block_ids) if g.block_ids else '-'}")
    lines.append("nodes " + _fmt_tuple(plan.node_of_rank))
    return "\n".join(lines) + "\n"


def _kv(parts: list[str]) -> dict[str, str]:
    out = {}
    for p in parts:
        if "=" not in p:
            raise CaseFormatError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k] = v
    return out


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(","))


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(","))


def plan_from_text(text: str) -> PartitionPlan:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise CaseFormatError("empty plan file")
    head = lines[0].split()
    if head[0] != PLAN_MAGIC:
        raise CaseFormatError(f"not a plan file (got {head[0]!r})")
    if int(head[1]) != PLAN_VERSION:
        raise CaseFormatError(f"unsupported plan version {head[1]}")
    ranks = None
    load_ratio = 1.0
    topology = None
    zones, blocks, groups = [], [], []
    rank_of_block: dict[int, int] = {}
    node_of_rank: list[int] = []
    for ln in lines[1:]:
        parts = ln.split()
        kind = parts[0]
        if kind == "ranks":
            ranks = int(parts[1])
        elif kind == "load-ratio":
            load_ratio = float(parts[1])
        elif kind == "topology":
            kv = _kv(parts[1:])
            topology = NodeTopology(nodes=int(kv["nodes"]),
                                    cpu_per_node=int(kv["cpu"]),
                                    coproc_per_node=int(kv["coproc"]),
                                    cpu_workers=int(kv["cpu-workers"]),
                                    coproc_workers=int(kv["coproc-workers"]))
        elif kind == "zone":
            kv = _kv(parts[2:])
            zones.append(ZoneSpec(id=int(parts[1]), shape=_ints(kv["shape"]),
                                  spacing=_floats(kv["spacing"]),
                                  origin=_floats(kv["origin"]),
                                  boundary=tuple(kv["boundary"].split(","))))
        elif kind == "block":
            kv = _kv(parts[2:])
            bid = int(parts[1])
            blocks.append(Block(id=bid, zone=int(kv["zone"]),
                                lo=_ints(kv["lo"]), hi=_ints(kv["hi"])))
            rank_of_block[bid] = int(kv["rank"])
        elif kind == "group":
            kv = _kv(parts[2:])
            ids = [] if kv["blocks"] == "-" else list(_ints(kv["blocks"]))
            groups.append(Group(id=int(parts[1]), rank=int(kv["rank"]),
                                device_class=kv["class"],
                                device_index=int(kv["device"]),
                                block_ids=ids))
        elif kind == "nodes":
            node_of_rank = list(_ints(parts[1]))
        else:
            raise CaseFormatError(f"unknown plan record {kind!r}")
    if ranks is None or topology is None:
        raise CaseFormatError("plan file missing ranks/topology records")
    zones.sort(key=lambda z: z.id)
    blocks.sort(key=lambda b: b.id)
    groups.sort(key=lambda g: g.id)
    return PartitionPlan(zones=zones, blocks=blocks, ranks=ranks,
                         topology=topology, load_ratio=load_ratio, groups=groups,
                         rank_of_block=[rank_of_block[b.id] for b in blocks],
                         node_of_rank=node_of_rank)
