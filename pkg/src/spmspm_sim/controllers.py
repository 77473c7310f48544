"""The five unified memory controllers.

Each controller is one state machine parameterized by the dataflow family
rather than one module per (dataflow, structure) pair.  Fillers face DRAM,
readers face the distribution network, and the C writer routes results to
the write buffer (final elements) or the PSRAM (partial sums).
"""

from __future__ import annotations

import math
from collections import deque

from .dataflow import Family
from .memory import DramModel, PsramFullError, PsramState, StaFifo, StrCache, WriteBuffer


class TileFillerSta:
    """Streams the stationary matrix from DRAM into the FIFO, one tile ahead."""

    def __init__(self, dram: DramModel, word_bytes: int):
        self.dram = dram
        self.word_bytes = word_bytes
        self.requests = 0

    def fill(self, n_elements: int, issue: int) -> int:
        if n_elements == 0:
            return issue
        self.requests += 1
        return self.dram.request("read", n_elements * self.word_bytes, issue)


class TileReaderSta:
    """Pops a tile's stationary elements and hands them to the multipliers."""

    def __init__(self, fifo: StaFifo, dn_bandwidth: int):
        self.fifo = fifo
        self.dn_bandwidth = dn_bandwidth
        self.pops = 0

    def read_tile(self, n_elements: int) -> tuple[list, int]:
        out = [self.fifo.pop() for _ in range(n_elements)]
        self.pops += n_elements
        return out, math.ceil(n_elements / self.dn_bandwidth)


class TileFillerStr:
    """Issues STR line fills with at most ``mshrs`` misses outstanding.

    The filler learns a tile's coordinates as soon as its stationary
    elements arrive, so it may prefetch a tile's fibers before the previous
    tile finishes streaming.  Hits never wait; a miss waits for the miss
    ``mshrs`` places earlier to return.
    """

    def __init__(self, mshrs: int):
        self.mshrs = mshrs
        self._returns: deque = deque(maxlen=mshrs)

    def miss_issue_time(self, known_at: int) -> int:
        if len(self._returns) == self.mshrs:
            return max(known_at, self._returns[0])
        return known_at

    def miss_returned(self, ready: int) -> None:
        self._returns.append(ready)


class TileReaderStr:
    """Delivers streaming fibers from the STR cache through the distribution network.

    Requests are streaming-fiber indices in delivery order.  Elements leave
    at ``dn_bandwidth`` per cycle, in order; an element cannot leave before
    its cache line is ready.
    """

    def __init__(self, cache: StrCache, filler: TileFillerStr, ptr: list,
                 dn_bandwidth: int, elems_per_line: int):
        self.cache = cache
        self.filler = filler
        self.ptr = ptr
        self.bw = dn_bandwidth
        self.epl = elems_per_line
        self.fiber_requests = 0
        self.elements = 0
        self.starts: list = []      # reader start cycle of every line access so far

    def requests_for(self, family: Family, tile_leaves: list, n_stream_fibers: int) -> list:
        if family is Family.IP:
            # every streaming fiber, multicast to the clusters it intersects
            return list(range(n_stream_fibers))
        # leader-follower / outer product: one fiber per stationary element
        return [k for (_, k, _) in tile_leaves]

    @property
    def line_accesses(self) -> int:
        return len(self.starts)

    def deliver(self, requests: list, t0: int, known_at: int | None = None) -> tuple[list, int]:
        """Deliver ``requests`` from cycle ``t0``; fills may be issued from ``known_at``.

        Returns per-request ``(first_cycle, end_cycle)`` and the stream end cycle.
        """
        bw, epl, ptr = self.bw, self.epl, self.ptr
        cache, filler = self.cache, self.filler
        starts = self.starts
        known_at = t0 if known_at is None else known_at
        spans = []
        cursor = t0 * bw            # delivery slots, bw per cycle
        for j in requests:
            self.fiber_requests += 1
            lo, hi = ptr[j], ptr[j + 1]
            if lo == hi:
                c = -(-cursor // bw)
                spans.append((c, c))
                continue
            self.elements += hi - lo
            first = None
            pos = lo
            while pos < hi:
                line = pos // epl
                nxt = min(hi, (line + 1) * epl)
                if cache.contains(line):
                    _, ready = cache.access_line(line, known_at)
                else:
                    _, ready = cache.access_line(line, filler.miss_issue_time(known_at))
                    filler.miss_returned(ready)
                slot = max(cursor, ready * bw)
                start_cycle = slot // bw
                starts.append(start_cycle)
                if first is None:
                    first = start_cycle
                cursor = slot + (nxt - pos)
                pos = nxt
            spans.append((first, -(-cursor // bw)))
        return spans, -(-cursor // bw)


class TileWriterC:
    """Routes final output elements to the write buffer and psums to the PSRAM."""

    def __init__(self, wbuf: WriteBuffer, psram: PsramState, on_full):
        self.wbuf = wbuf
        self.psram = psram
        self.on_full = on_full      # callback(set_index) freeing at least one block
        self.final_writes = 0
        self.psum_writes = 0
        self.rows: dict = {}

    def final_fiber(self, row: int, elements: list) -> None:
        self.rows[row] = elements
        for e in elements:
            self.wbuf.write(row, e)
        self.final_writes += len(elements)

    def psum(self, row: int, tag, e) -> None:
        try:
            self.psram.partial_write(row, tag, e)
        except PsramFullError as full:
            self.on_full(full.set_index)
            self.psram.partial_write(row, tag, e)
        self.psum_writes += 1

    def psum_fiber(self, row: int, tag, elements: list) -> None:
        """Write a sorted run of psums to fiber (row, tag), stalling while the set is full."""
        pos = 0
        n = len(elements)
        while True:
            pos += self.psram.write_fiber(row, tag, elements[pos:] if pos else elements)
            if pos >= n:
                break
            self.on_full(self.psram.set_of(row))
        self.psum_writes += n
