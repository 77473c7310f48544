"""Distribution network, multiplier network and merger-reduction network (MRN).

The distribution network is modeled as a non-blocking crossbar with an
injection cap: a multicast of one element to any number of multipliers costs
a single injection.  The MRN is a binary tree over the multipliers whose
nodes are configured as adders (inner-product reduction), comparators
(sorted merge with accumulation on coordinate match) or pass-through
forwarders at cluster boundaries.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

from .sparse import Element, StructuralError


class FabricError(RuntimeError):
    """A fabric component was driven in a way its configuration forbids."""


class MrnInvariantError(FabricError):
    """Adder inputs disagree on coordinate: the scheduler aligned them wrongly."""


class MrnNodeMode(Enum):
    ADDER = "adder"
    COMPARATOR = "comparator"
    FORWARD = "forward"


class MultiplierMode(Enum):
    MULTIPLY = "multiply"
    FORWARDER = "forwarder"


class TaggedPsum(NamedTuple):
    coord: int
    value: int | float
    end_of_fiber: bool = False


EOF = TaggedPsum(-1, 0, True)


# -- distribution network ---------------------------------------------------

@dataclass
class DistributionSchedule:
    cycles: int
    waves: list = field(default_factory=list)   # one list of (element, dests) per cycle


def distribute(deliveries: Sequence[tuple], bandwidth: int, n_leaves: int | None = None
               ) -> DistributionSchedule:
    """Schedule ``(element, destination-set)`` pairs at ``bandwidth`` injections/cycle."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    waves, wave = [], []
    for element, dests in deliveries:
        dests = tuple(dests)
        if n_leaves is not None and any(not 0 <= d < n_leaves for d in dests):
            raise ValueError(f"destination outside [0, {n_leaves})")
        wave.append((element, dests))
        if len(wave) == bandwidth:
            waves.append(wave)
            wave = []
    if wave:
        waves.append(wave)
    return DistributionSchedule(len(waves), waves)


# -- multiplier network -----------------------------------------------------

def multiplier_eval(mode: MultiplierMode, stationary: Element | None,
                    psum: TaggedPsum) -> TaggedPsum:
    if mode is MultiplierMode.FORWARDER:
        return psum
    if stationary is None:
        raise FabricError("multiplier in multiply mode has no stationary element loaded")
    return TaggedPsum(psum.coord, stationary.value * psum.value, psum.end_of_fiber)


# -- merger-reduction network -----------------------------------------------

def mrn_node_step(mode: MrnNodeMode, left: TaggedPsum | None, right: TaggedPsum | None,
                  forward_from: str = "left"):
    """One node decision.

    Returns ``(emitted, consume_left, consume_right)``.  ``None`` inputs mean
    nothing is waiting on that link; a comparator needs both heads (or an end
    marker) before it can decide.
    """
    if mode is MrnNodeMode.FORWARD:
        src = left if forward_from == "left" else right
        if src is None:
            return None, False, False
        return src, forward_from == "left", forward_from != "left"

    if left is None or right is None:
        return None, False, False

    if mode is MrnNodeMode.ADDER:
        if left.coord != right.coord:
            raise MrnInvariantError(
                f"adder inputs misaligned: {left.coord} vs {right.coord}")
        return TaggedPsum(left.coord, left.value + right.value), True, True

    # comparator
    if left.end_of_fiber and right.end_of_fiber:
        return EOF, True, True
    if left.end_of_fiber:
        return right, False, True
    if right.end_of_fiber:
        return left, True, False
    if left.coord == right.coord:
        return TaggedPsum(left.coord, left.value + right.value), True, True
    if left.coord < right.coord:
        return left, True, False
    return right, False, True


def _comparator_merge(left: list, right: list) -> list:
    """Drain two sorted fibers through one comparator node (see ``mrn_node_step``)."""
    out = []
    i = j = 0
    nl, nr = len(left), len(right)
    while i < nl and j < nr:
        lc, lv = left[i]
        rc, rv = right[j]
        if lc == rc:
            out.append((lc, lv + rv))
            i += 1
            j += 1
        elif lc < rc:
            out.append(left[i])
            i += 1
        else:
            out.append(right[j])
            j += 1
    if i < nl:
        out.extend(left[i:])
    if j < nr:
        out.extend(right[j:])
    return out


def tree_merge(fibers: list) -> list:
    """Merge sorted fibers through a binary comparator tree (one pass).

    Returns ``(coord, value)`` tuples; equal coordinates are accumulated in
    tree order, so real-valued sums are reproducible.
    """
    level = [f for f in fibers if f]
    if not level:
        return []
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(_comparator_merge(level[i], level[i + 1]))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return list(level[0])


def merge_passes(n_fibers: int, width: int) -> int:
    """Rounds of width-way merging needed to reduce ``n_fibers`` to one fiber."""
    if width < 2:
        raise ValueError("merge width must be at least 2")
    passes = 1
    n = n_fibers
    while n > width:
        n = math.ceil(n / width)
        passes += 1
    return passes


def mrn_merge_fibers(fibers: Sequence, width: int):
    """Merge-with-accumulate of sorted fibers on a ``width``-leaf tree.

    Returns ``(fiber, passes)``; more fibers than leaves are merged
    ``width`` at a time and the intermediate fibers merged again.
    """
    for f in fibers:
        try:
            prev = -1
            for c, _ in f:
                if c <= prev:
                    raise StructuralError
                prev = c
        except StructuralError:
            raise ValueError("input fiber is not strictly sorted by coordinate") from None
    passes = merge_passes(len(fibers), width)
    level = [list(f) for f in fibers]
    while len(level) > width:
        level = [tree_merge(level[i:i + width]) for i in range(0, len(level), width)]
    return tree_merge(level), passes


def adder_reduce(products: Sequence[TaggedPsum]) -> TaggedPsum:
    """Reduce one cluster's aligned products through a tree of adders."""
    level = list(products)
    if not level:
        raise FabricError("empty adder cluster")
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(mrn_node_step(MrnNodeMode.ADDER, level[i], level[i + 1])[0])
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


# -- cluster configuration --------------------------------------------------

@dataclass(frozen=True)
class MrnConfig:
    n_leaves: int
    node_modes: tuple        # heap order: node 1 is the root, children 2i and 2i+1
    clusters: tuple          # (first_leaf, size) per cluster

    def node_range(self, node: int) -> tuple[int, int]:
        level = node.bit_length() - 1
        span = self.n_leaves >> level
        lo = (node - (1 << level)) * span
        return lo, lo + span

    def validate(self) -> None:
        n = self.n_leaves
        if n < 2 or n & (n - 1):
            raise FabricError("n_leaves must be a power of two >= 2")
        if len(self.node_modes) != n:     # index 0 unused
            raise FabricError("one mode per internal node expected")
        cursor = 0
        for start, size in self.clusters:
            if start != cursor or size <= 0:
                raise FabricError("clusters must be contiguous and non-empty")
            cursor += size
        if cursor > n:
            raise FabricError("clusters exceed the number of leaves")
        owner = _leaf_owner(n, self.clusters)
        for node in range(1, n):
            lo, hi = self.node_range(node)
            owners = set(owner[lo:hi])
            mode = self.node_modes[node]
            if len(owners) == 1 and None not in owners:
                if mode is MrnNodeMode.FORWARD:
                    raise FabricError(f"node {node} lies inside one cluster but forwards")
            elif len(owners) > 1 and mode is not MrnNodeMode.FORWARD:
                raise FabricError(f"node {node} spans several clusters but is {mode.value}")


def _leaf_owner(n_leaves: int, clusters) -> list:
    owner = [None] * n_leaves
    for ci, (start, size) in enumerate(clusters):
        for leaf in range(start, start + size):
            owner[leaf] = ci
    return owner


def configure_mrn(n_leaves: int, cluster_sizes: Sequence[int],
                  inner_mode: MrnNodeMode) -> MrnConfig:
    """Lay clusters out left to right and set every node's mode."""
    clusters, cursor = [], 0
    for size in cluster_sizes:
        clusters.append((cursor, size))
        cursor += size
    if cursor > n_leaves:
        raise FabricError(f"{cursor} leaves requested, only {n_leaves} available")
    owner = _leaf_owner(n_leaves, clusters)
    modes = [MrnNodeMode.FORWARD] * n_leaves
    for node in range(1, n_leaves):
        level = node.bit_length() - 1
        span = n_leaves >> level
        lo = (node - (1 << level)) * span
        owners = set(owner[lo:lo + span])
        if len(owners) == 1 and None not in owners:
            modes[node] = inner_mode
    cfg = MrnConfig(n_leaves, tuple(modes), tuple(clusters))
    cfg.validate()
    return cfg


# -- cycle kernel -----------------------------------------------------------

class FabricPipeline:
    """Cycle-stepped MRN timing: one tree level per cycle, capped root egress.

    Tokens enter at the leaves, climb ``hops`` levels (the depth of their
    cluster's subtree) and then leave through the root egress port, at most
    ``egress_bandwidth`` per cycle.
    """

    def __init__(self, depth: int, egress_bandwidth: int):
        self.depth = depth
        self.egress_bandwidth = egress_bandwidth
        self.cycle = 0
        self.in_flight: list = []       # [remaining_hops, token]
        self.egress: deque = deque()
        self.emitted: list = []         # (cycle, token)

    @property
    def idle(self) -> bool:
        return not self.in_flight and not self.egress

    def inject(self, token, hops: int | None = None) -> None:
        self.in_flight.append([self.depth if hops is None else hops, token])

    def advance_cycle(self) -> "FabricPipeline":
        self.cycle += 1
        still = []
        for entry in self.in_flight:
            entry[0] -= 1
            if entry[0] <= 0:
                self.egress.append(entry[1])
            else:
                still.append(entry)
        self.in_flight = still
        for _ in range(min(self.egress_bandwidth, len(self.egress))):
            self.emitted.append((self.cycle, self.egress.popleft()))
        return self

    def run_until_idle(self, limit: int = 1_000_000) -> int:
        while not self.idle:
            if limit <= 0:
                raise FabricError("pipeline did not drain")
            self.advance_cycle()
            limit -= 1
        return self.cycle
