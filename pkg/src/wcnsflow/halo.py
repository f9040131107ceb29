"""Halo exchange: plan construction, packing, execution, boundary fill.

Every block stores its state with a margin of ``HALO_WIDTH`` ghost cells.
One exchange epoch brings every ghost cell up to date in three phases:

1. region messages between blocks (all 26 offset directions, coalesced per
   block pair so each pair costs one message),
2. self-wrap copies along periodic axes a block spans entirely (these need
   index wrapping, not messages, and also cover thin axes shorter than the
   halo), and
3. physical boundary fill in fixed axis order x, y, z, each face spanning
   the full extended extents of the other axes.

Phases 2 and 3 read cells written by phase 1, and a later axis pass reads
cells written by an earlier one, which reproduces exactly the ghost values
a single unsplit block would compute.  That makes the exchanged field
independent of the partition, bitwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import HaloPlanError
from .fields import FieldSet
from .partition import (
    Block,
    OFFSETS,
    PartitionPlan,
    ZoneSpec,
    block_neighbors,
)
from .state import NCOMP
from .transport import DEFAULT_TIMEOUT, Message
from .wcns import HALO_WIDTH

H = HALO_WIDTH

# Tag layout: high bits carry the epoch, low bits the message index within
# the epoch.  Indexes at RESERVED_INDEX and above belong to the runner's
# reduction traffic, so plans may not define that many messages.
EPOCH_BITS = 11
INDEX_BITS = 21
RESERVED_INDEX = (1 << INDEX_BITS) - 16
REDUCE_INDEX = RESERVED_INDEX          # rank -> rank 0 partial reductions
BCAST_INDEX = RESERVED_INDEX + 8       # rank 0 -> ranks broadcast


def message_tag(epoch: int, index: int) -> int:
    """Epochs wrap modulo 2**EPOCH_BITS; every epoch drains all its messages
    before the next epoch starts, so reused tags never collide in flight."""
    if index >= (1 << INDEX_BITS):
        raise HaloPlanError(f"message index {index} exceeds the tag space")
    return ((epoch & ((1 << EPOCH_BITS) - 1)) << INDEX_BITS) | index


@dataclass(frozen=True)
class Region:
    """One halo box: ghost cells of ``dst_block`` fed by ``src_block``."""

    dst_block: int
    src_block: int
    offset: tuple[int, int, int]
    dst_start: tuple[int, int, int]   # extended-array coords of dst
    src_start: tuple[int, int, int]   # extended-array coords of src
    shape: tuple[int, int, int]
    src_global: tuple[int, int, int]  # wrapped zone coords of the source box

    @property
    def cells(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def dst_slices(self) -> tuple:
        return (slice(None),) + tuple(
            slice(s, s + n) for s, n in zip(self.dst_start, self.shape))

    @property
    def src_slices(self) -> tuple:
        return (slice(None),) + tuple(
            slice(s, s + n) for s, n in zip(self.src_start, self.shape))


@dataclass(frozen=True)
class ExchangePair:
    """All regions travelling from one block to another; one message when
    coalescing is on."""

    index: int
    src_block: int
    dst_block: int
    src_rank: int
    dst_rank: int
    regions: tuple[Region, ...]

    @property
    def cells(self) -> int:
        return sum(r.cells for r in self.regions)

    @property
    def nbytes(self) -> int:
        return self.cells * NCOMP * 8

    @property
    def local(self) -> bool:
        return self.src_rank == self.dst_rank


@dataclass(frozen=True)
class SingularRegion:
    """Cells one owner feeds to two or more other blocks (the multi-sharer
    corner/edge points of the block layout)."""

    owner: int
    lo: tuple[int, int, int]          # wrapped zone coords
    shape: tuple[int, int, int]
    readers: tuple[tuple[int, tuple[int, int, int]], ...]  # (block, ext start)

    @property
    def sharers(self) -> tuple[int, ...]:
        return (self.owner,) + tuple(b for b, _ in self.readers)

    @property
    def cells(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    def points(self) -> Iterator["SingularPoint"]:
        sharers = self.sharers
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                for k in range(self.shape[2]):
                    yield SingularPoint(
                        coord=(self.lo[0] + i, self.lo[1] + j, self.lo[2] + k),
                        sharers=sharers,
                        owner=self.owner,
                    )


@dataclass(frozen=True)
class SingularPoint:
    coord: tuple[int, int, int]
    sharers: tuple[int, ...]
    owner: int


@dataclass(frozen=True)
class BoundaryFace:
    axis: int
    side: int         # 0 = low face, 1 = high face
    kind: str         # wall | inflow | outflow


@dataclass
class HaloPlan:
    width: int
    pairs: list[ExchangePair]
    wrap_axes: dict[int, tuple[int, ...]]          # block -> periodic self axes
    bc_faces: dict[int, tuple[BoundaryFace, ...]]  # block -> physical faces
    singular: list[SingularRegion]

    @property
    def region_count(self) -> int:
        return sum(len(p.regions) for p in self.pairs)

    def sends_of(self, rank: int) -> list[ExchangePair]:
        return [p for p in self.pairs if p.src_rank == rank and not p.local]

    def recvs_of(self, rank: int) -> list[ExchangePair]:
        return [p for p in self.pairs if p.dst_rank == rank and not p.local]

    def local_of(self, rank: int) -> list[ExchangePair]:
        return [p for p in self.pairs if p.local and p.src_rank == rank]

    def singular_points(self) -> Iterator[SingularPoint]:
        for region in self.singular:
            yield from region.points()


def _spans_periodic(block: Block, zone: ZoneSpec, axis: int) -> bool:
    return (zone.periodic(axis)
            and block.lo[axis] == 0 and block.hi[axis] == zone.shape[axis])


def _dst_start(offset: int, n: int) -> tuple[int, int]:
    """Extended-array start and length of a halo band along one axis."""
    if offset < 0:
        return 0, H
    if offset == 0:
        return H, n
    return H + n, H


def build_halo_plan(plan: PartitionPlan) -> HaloPlan:
    """Region lists, self-wrap axes, boundary faces, and singular points for
    one partition plan."""
    zones = plan.zones
    by_id = {b.id: b for b in plan.blocks}
    neighbors = block_neighbors(plan.blocks, zones)

    # Blocks narrower than the stencil halo may not abut other blocks along
    # that axis: the exchange regions could not be expressed as single boxes.
    for (bid, off), nid in neighbors.items():
        if nid == bid:
            continue
        src = by_id[nid]
        for ax in range(3):
            if off[ax] and src.shape[ax] < H:
                raise HaloPlanError(
                    f"block {nid} is only {src.shape[ax]} cells wide on axis "
                    f"{ax}; neighbors across a split axis need at least {H}")

    regions_by_pair: dict[tuple[int, int], list[Region]] = {}
    wrap_axes: dict[int, tuple[int, ...]] = {}
    bc_faces: dict[int, tuple[BoundaryFace, ...]] = {}

    for b in plan.blocks:
        zone = zones[b.zone]
        self_axes = tuple(a for a in range(3) if _spans_periodic(b, zone, a))
        wrap_axes[b.id] = self_axes

        faces = []
        for a in range(3):
            for side in (0, 1):
                kind = zone.boundary[2 * a + side]
                if kind == "periodic":
                    continue
                edge = (b.lo[a] == 0) if side == 0 else (b.hi[a] == zone.shape[a])
                if edge:
                    faces.append(BoundaryFace(axis=a, side=side, kind=kind))
        bc_faces[b.id] = tuple(faces)

        for off in OFFSETS:
            if any(off[a] and a in self_axes for a in range(3)):
                continue  # covered by the self-wrap pass
            key = (b.id, off)
            if key not in neighbors:
                continue  # physical boundary; covered by the fill pass
            src = by_id[neighbors[key]]
            dst_start, shape, src_global, src_start = [], [], [], []
            for a in range(3):
                s, n = _dst_start(off[a], b.shape[a])
                dst_start.append(s)
                shape.append(n)
                if off[a] == 0:
                    g = b.lo[a]
                elif off[a] < 0:
                    g = (b.lo[a] - H) % zone.shape[a]
                else:
                    g = b.hi[a] % zone.shape[a]
                src_global.append(g)
                local = g - src.lo[a]
                if local < 0 or local + n > src.shape[a]:
                    raise HaloPlanError(
                        f"halo region of block {b.id} toward {off} is not "
                        f"contained in neighbor block {src.id}")
                src_start.append(local + H)
            regions_by_pair.setdefault((src.id, b.id), []).append(Region(
                dst_block=b.id,
                src_block=src.id,
                offset=off,
                dst_start=tuple(dst_start),
                src_start=tuple(src_start),
                shape=tuple(shape),
                src_global=tuple(src_global),
            ))

    pairs = []
    for index, (src_dst, regions) in enumerate(sorted(regions_by_pair.items())):
        src, dst = src_dst
        pairs.append(ExchangePair(
            index=index,
            src_block=src,
            dst_block=dst,
            src_rank=plan.rank_of_block[src],
            dst_rank=plan.rank_of_block[dst],
            regions=tuple(sorted(regions, key=lambda r: r.offset)),
        ))
    if sum(len(p.regions) for p in pairs) >= RESERVED_INDEX:
        raise HaloPlanError("plan defines too many regions for the tag space")

    singular = _singular_regions(pairs, by_id)
    return HaloPlan(width=H, pairs=pairs, wrap_axes=wrap_axes,
                    bc_faces=bc_faces, singular=singular)


def _singular_regions(pairs: list[ExchangePair], by_id: dict[int, Block]
                      ) -> list[SingularRegion]:
    by_owner: dict[int, list[Region]] = {}
    for p in pairs:
        for r in p.regions:
            if r.src_block != r.dst_block:
                by_owner.setdefault(r.src_block, []).append(r)

    out: dict[tuple, SingularRegion] = {}
    for owner, regions in sorted(by_owner.items()):
        for i in range(len(regions)):
            for j in range(i + 1, len(regions)):
                a, b = regions[i], regions[j]
                if a.dst_block == b.dst_block:
                    continue
                lo = tuple(max(a.src_global[k], b.src_global[k]) for k in range(3))
                hi = tuple(min(a.src_global[k] + a.shape[k],
                               b.src_global[k] + b.shape[k]) for k in range(3))
                if any(lo[k] >= hi[k] for k in range(3)):
                    continue
                shape = tuple(hi[k] - lo[k] for k in range(3))
                readers = []
                for r in regions:
                    inside = all(r.src_global[k] <= lo[k]
                                 and hi[k] <= r.src_global[k] + r.shape[k]
                                 for k in range(3))
                    if inside:
                        start = tuple(lo[k] - r.src_global[k] + r.dst_start[k]
                                      for k in range(3))
                        readers.append((r.dst_block, start))
                readers = tuple(sorted(set(readers)))
                if len(readers) < 2:
                    continue
                key = (owner, lo, shape)
                if key not in out or len(readers) > len(out[key].readers):
                    out[key] = SingularRegion(owner=owner, lo=lo, shape=shape,
                                              readers=readers)
    return [out[k] for k in sorted(out)]


# ---------------------------------------------------------------------------
# Packing

def pack_pair(pair: ExchangePair, fields: FieldSet) -> np.ndarray:
    src = fields[pair.src_block].data
    if len(pair.regions) == 1:
        return src[pair.regions[0].src_slices].ravel()
    return np.concatenate([src[r.src_slices].ravel() for r in pair.regions])


def unpack_pair(pair: ExchangePair, fields: FieldSet, payload: np.ndarray) -> None:
    dst = fields[pair.dst_block].data
    offset = 0
    for r in pair.regions:
        n = r.cells * NCOMP
        dst[r.dst_slices] = payload[offset:offset + n].reshape((NCOMP,) + r.shape)
        offset += n
    if offset != payload.size:
        raise HaloPlanError(
            f"payload for pair {pair.src_block}->{pair.dst_block} has "
            f"{payload.size} values, regions cover {offset}")


def pack_region(region: Region, fields: FieldSet) -> np.ndarray:
    return fields[region.src_block].data[region.src_slices].ravel()


def unpack_region(region: Region, fields: FieldSet, payload: np.ndarray) -> None:
    fields[region.dst_block].data[region.dst_slices] = payload.reshape(
        (NCOMP,) + region.shape)


# ---------------------------------------------------------------------------
# Physical ghost fill

def wrap_fill(data: np.ndarray, axis: int) -> None:
    """Periodic self-copy along one axis, spanning full extents of the rest."""
    n = data.shape[1 + axis] - 2 * H
    idx = (np.arange(-H, n + H) % n) + H
    data[...] = np.take(data, idx, axis=1 + axis)


def boundary_fill(data: np.ndarray, face: BoundaryFace, freestream: np.ndarray) -> None:
    """Fill one physical face band (width H) across full cross extents."""
    axis, side, kind = face.axis, face.side, face.kind
    n = data.shape[1 + axis] - 2 * H

    def band(i: int) -> tuple:
        # ghost plane i = 0..H-1 counted outward from the interior edge
        pos = (H - 1 - i) if side == 0 else (H + n + i)
        sl = [slice(None)] * 4
        sl[1 + axis] = pos
        return tuple(sl)

    def inner(i: int) -> tuple:
        pos = (H + i) if side == 0 else (H + n - 1 - i)
        sl = [slice(None)] * 4
        sl[1 + axis] = pos
        return tuple(sl)

    if kind == "inflow":
        # band(i) drops the face axis, leaving (NCOMP, cross, cross).
        view = freestream.reshape(NCOMP, 1, 1)
        for i in range(H):
            data[band(i)] = view
        return
    if kind == "outflow":
        src = inner(0)
        for i in range(H):
            data[band(i)] = data[src]
        return
    if kind == "wall":
        # Slip wall: mirror each plane and flip the normal momentum.
        for i in range(H):
            data[band(i)] = data[inner(i)]
            mom_sel = (1 + axis,) + band(i)[1:]
            data[mom_sel] = -data[mom_sel]
        return
    raise HaloPlanError(f"unknown boundary kind {kind!r}")


def fill_block_ghosts(data: np.ndarray, block_id: int, halo_plan: HaloPlan,
                      freestream: np.ndarray | None) -> None:
    """Self-wrap and boundary passes for one block, in fixed axis order."""
    for a in range(3):
        if a in halo_plan.wrap_axes.get(block_id, ()):
            wrap_fill(data, a)
        for face in halo_plan.bc_faces.get(block_id, ()):
            if face.axis != a:
                continue
            if face.kind == "inflow" and freestream is None:
                raise HaloPlanError(
                    f"block {block_id} has an inflow face but no freestream "
                    "state was provided")
            boundary_fill(data, face, freestream)


# ---------------------------------------------------------------------------
# Execution

@dataclass(frozen=True)
class EpochStats:
    messages_sent: int
    bytes_sent: int
    messages_received: int
    bytes_received: int
    local_copies: int
    wall_seconds: float


class HaloExchanger:
    """Runs exchange epochs for one rank against a transport.

    ``coalesce=True`` sends one message per block pair; ``coalesce=False``
    sends one message per region (the reference point for the messaging A/B
    comparison).  ``mode="nonblocking"`` calls ``overlap_hook`` between
    posting sends and draining receives so interior work can hide the
    traffic; ``mode="blocking"`` calls it only after every ghost cell is in
    place.  Both orders leave the fields bitwise identical.
    """

    def __init__(self, halo_plan: HaloPlan, plan: PartitionPlan,
                 transport=None, freestream: np.ndarray | None = None,
                 coalesce: bool = True):
        self.halo_plan = halo_plan
        self.plan = plan
        self.transport = transport
        self.freestream = None if freestream is None else np.asarray(
            freestream, dtype=np.float64)
        self.coalesce = coalesce
        # Global region numbering for per-region tags in naive mode.
        self._region_index: dict[tuple[int, int], int] = {}
        gidx = 0
        for p in halo_plan.pairs:
            for pos in range(len(p.regions)):
                self._region_index[(p.index, pos)] = gidx
                gidx += 1

    def run(self, rank: int, fields: FieldSet, epoch: int, *,
            mode: str = "nonblocking",
            overlap_hook: Callable[[], None] | None = None,
            timeout: float = DEFAULT_TIMEOUT) -> EpochStats:
        if mode not in ("nonblocking", "blocking"):
            raise ValueError(f"unknown exchange mode {mode!r}")
        t0 = time.perf_counter()
        hp = self.halo_plan
        sends = hp.sends_of(rank)
        recvs = hp.recvs_of(rank)
        local = hp.local_of(rank)
        if (sends or recvs) and self.transport is None:
            raise HaloPlanError("plan needs inter-rank messages but the "
                                "exchanger has no transport")

        messages_sent = bytes_sent = 0
        for p in sends:
            for tag, payload in self._outgoing(p, fields, epoch):
                self.transport.send(Message(tag=tag, source=rank,
                                            dest=p.dst_rank, payload=payload))
                messages_sent += 1
                bytes_sent += payload.nbytes

        local_copies = 0
        for p in local:
            src = fields[p.src_block].data
            dst = fields[p.dst_block].data
            for r in p.regions:
                dst[r.dst_slices] = src[r.src_slices]
                local_copies += 1

        if mode == "nonblocking" and overlap_hook is not None:
            overlap_hook()

        messages_received = bytes_received = 0
        for p in recvs:
            for tag, sink in self._incoming(p, fields, epoch):
                msg = self.transport.recv(tag=tag, source=p.src_rank,
                                          dest=rank, timeout=timeout)
                sink(msg.payload)
                messages_received += 1
                bytes_received += msg.nbytes

        for b in self.plan.blocks_of_rank(rank):
            fill_block_ghosts(fields[b.id].data, b.id, hp, self.freestream)

        if mode == "blocking" and overlap_hook is not None:
            overlap_hook()

        return EpochStats(
            messages_sent=messages_sent,
            bytes_sent=bytes_sent,
            messages_received=messages_received,
            bytes_received=bytes_received,
            local_copies=local_copies,
            wall_seconds=time.perf_counter() - t0,
        )

    def _outgoing(self, pair: ExchangePair, fields: FieldSet, epoch: int):
        if self.coalesce:
            yield message_tag(epoch, pair.index), pack_pair(pair, fields)
        else:
            for pos, r in enumerate(pair.regions):
                gidx = self._region_index[(pair.index, pos)]
                yield message_tag(epoch, gidx), pack_region(r, fields)

    def _incoming(self, pair: ExchangePair, fields: FieldSet, epoch: int):
        if self.coalesce:
            yield (message_tag(epoch, pair.index),
                   lambda payload, p=pair: unpack_pair(p, fields, payload))
        else:
            for pos, r in enumerate(pair.regions):
                gidx = self._region_index[(pair.index, pos)]
                yield (message_tag(epoch, gidx),
                       lambda payload, rr=r: unpack_region(rr, fields, payload))


def resolve_singular_points(fields: FieldSet, halo_plan: HaloPlan,
                            plan: PartitionPlan) -> float:
    """Overwrite every multi-sharer ghost value with the owner's value and
    report the largest disagreement found (0.0 when the exchange already
    left all sharers consistent, which region construction guarantees)."""
    by_id = {b.id: b for b in plan.blocks}
    worst = 0.0
    for region in halo_plan.singular:
        if region.owner not in fields:
            raise HaloPlanError(
                f"singular region owner block {region.owner} has no field")
        owner = by_id[region.owner]
        start = tuple(region.lo[a] - owner.lo[a] + H for a in range(3))
        sel = (slice(None),) + tuple(
            slice(s, s + n) for s, n in zip(start, region.shape))
        truth = fields[region.owner].data[sel]
        for reader, dst_start in region.readers:
            if reader not in fields:
                continue
            rsel = (slice(None),) + tuple(
                slice(s, s + n) for s, n in zip(dst_start, region.shape))
            view = fields[reader].data[rsel]
            delta = float(np.max(np.abs(view - truth))) if truth.size else 0.0
            worst = max(worst, delta)
            view[...] = truth
    return worst
