"""L1 structures (stationary FIFO, streaming cache, PSRAM, write buffer) and DRAM."""

from __future__ import annotations

import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field

from .sparse import Element


class MemoryError_(RuntimeError):
    pass


class ControllerError(MemoryError_):
    """A controller drove a structure past what the protocol allows."""


class AddressError(MemoryError_):
    pass


class PsramFullError(MemoryError_):
    """No invalid block left in the target set."""

    def __init__(self, set_index: int):
        super().__init__(f"PSRAM set {set_index} has no free block")
        self.set_index = set_index


class PsramOrderError(MemoryError_):
    pass


class DramModel:
    """Single channel: fixed latency, requests serialize on bandwidth."""

    def __init__(self, latency_cycles: int, bytes_per_cycle: float):
        self.latency = int(latency_cycles)
        self.bytes_per_cycle = float(bytes_per_cycle)
        self.busy_until = 0
        self.read_bytes = 0
        self.write_bytes = 0
        self.requests = 0

    def request(self, kind: str, nbytes: int, issue: int) -> int:
        """Return the completion cycle of a transfer issued at ``issue``."""
        if nbytes <= 0:
            raise ValueError("DRAM request needs a positive byte count")
        if kind == "read":
            self.read_bytes += nbytes
        elif kind == "write":
            self.write_bytes += nbytes
        else:
            raise ValueError(f"unknown request kind {kind!r}")
        self.requests += 1
        start = max(issue, self.busy_until)
        self.busy_until = start + math.ceil(nbytes / self.bytes_per_cycle)
        return self.busy_until + self.latency


class StaFifo:
    """Read-once FIFO for the stationary matrix.

    The filler pushes elements implicitly from the matrix base address; every
    element leaves through ``pop`` exactly once.
    """

    def __init__(self, source, capacity_bytes: int, word_bytes: int = 4,
                 line_bytes: int = 64):
        self._source = list(source)
        self.capacity = max(1, capacity_bytes // word_bytes)
        self.word_bytes = word_bytes
        self.line_elems = max(1, min(self.capacity, line_bytes // word_bytes))
        self._buf: deque = deque()
        self._next = 0
        self.pops = 0
        self.read_bytes = 0
        self.fill_bytes = 0
        self.refill_requests = 0
        self._refill()

    @property
    def occupancy(self) -> int:
        return len(self._buf)

    @property
    def remaining(self) -> int:
        return len(self._buf) + len(self._source) - self._next

    def _refill(self) -> None:
        room = self.capacity - len(self._buf)
        take = min(room, len(self._source) - self._next)
        if take <= 0:
            return
        self._buf.extend(self._source[self._next:self._next + take])
        self._next += take
        self.fill_bytes += take * self.word_bytes
        self.refill_requests += 1

    def pop(self):
        if not self._buf:
            raise ControllerError("pop past the end of the stationary stream")
        e = self._buf.popleft()
        self.pops += 1
        self.read_bytes += self.word_bytes
        if len(self._buf) < self.line_elems:
            self._refill()
        return e


class StrCache:
    """Read-only set-associative LRU cache over the streaming matrix.

    Addresses are byte offsets from the start of the streaming matrix's
    element array.
    """

    def __init__(self, size_bytes: int, line_bytes: int, assoc: int, n_banks: int,
                 extent_bytes: int, dram: DramModel | None = None, hit_latency: int = 1,
                 record_trace: bool = False):
        self.line_bytes = line_bytes
        self.assoc = assoc
        self.n_banks = n_banks
        self.n_sets = size_bytes // (line_bytes * assoc)
        self.extent = extent_bytes
        self.dram = dram
        self.hit_latency = hit_latency
        self._sets = [OrderedDict() for _ in range(self.n_sets)]
        self._fill_ready: dict = {}
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self.offchip_bytes = 0
        self.trace = [] if record_trace else None

    @property
    def miss_rate(self) -> float:
        total = self.hits + self.misses
        return self.misses / total if total else 0.0

    def bank_of(self, line: int) -> int:
        return line % self.n_banks

    def contains(self, line: int) -> bool:
        """Tag check without touching the LRU state."""
        return line // self.n_sets in self._sets[line % self.n_sets]

    def access_line(self, line: int, now: int = 0) -> tuple[bool, int]:
        """Look up one line; return ``(hit, ready_cycle)``."""
        if line < 0 or line * self.line_bytes >= max(self.extent, 1):
            raise AddressError(f"line {line} outside the streaming matrix")
        lru = self._sets[line % self.n_sets]
        tag = line // self.n_sets
        if tag in lru:
            lru.move_to_end(tag)
            self.hits += 1
            hit = True
            ready = max(now + self.hit_latency, self._fill_ready.get(line, 0))
        else:
            self.misses += 1
            hit = False
            if len(lru) >= self.assoc:
                old_tag, _ = lru.popitem(last=False)
                self._fill_ready.pop(old_tag * self.n_sets + line % self.n_sets, None)
                self.evictions += 1
            lru[tag] = None
            self.offchip_bytes += self.line_bytes
            if self.dram is not None:
                ready = self.dram.request("read", self.line_bytes, now)
            else:
                ready = now + self.hit_latency
            self._fill_ready[line] = ready
        if self.trace is not None:
            self.trace.append(hit)
        return hit, ready

    def read(self, vaddr: int, nbytes: int, now: int = 0) -> list:
        """Byte-range read split into per-line accesses: ``[(line, hit, ready)]``."""
        if nbytes <= 0 or vaddr < 0 or vaddr + nbytes > self.extent:
            raise AddressError(f"read [{vaddr}, {vaddr + nbytes}) outside [0, {self.extent})")
        first = vaddr // self.line_bytes
        last = (vaddr + nbytes - 1) // self.line_bytes
        out = []
        for line in range(first, last + 1):
            hit, ready = self.access_line(line, now)
            out.append((line, hit, ready))
        return out


@dataclass
class PsramBlock:
    valid: bool = False
    row: int = -1
    k_tag: int = 0
    first: int = 0
    last: int = 0
    data: list = field(default_factory=list)


class PsramState:
    """Psum store: sets indexed by output row, blocks tagged with their k iteration.

    One (row, k) partial fiber may occupy several non-consecutive blocks of
    its set; they are chained in allocation order.  Blocks also carry the row
    because several rows can alias to one set.
    """

    def __init__(self, n_sets: int, blocks_per_set: int, block_bytes: int,
                 n_banks: int = 16, word_bytes: int = 4):
        self.n_sets = n_sets
        self.blocks_per_set = blocks_per_set
        self.block_capacity = block_bytes // word_bytes
        self.n_banks = n_banks
        self.word_bytes = word_bytes
        self.sets = [[PsramBlock() for _ in range(blocks_per_set)] for _ in range(n_sets)]
        self._chains: list[dict] = [dict() for _ in range(n_sets)]
        self._free = [blocks_per_set] * n_sets
        self._last_coord: dict = {}
        self.writes = 0
        self.consumes = 0

    def set_of(self, row: int) -> int:
        return row % self.n_sets

    def bank_of(self, block_index: int) -> int:
        return block_index % self.n_banks

    def free_blocks(self, s: int) -> int:
        return self._free[s]

    @property
    def resident(self) -> int:
        return self.writes - self.consumes

    def _allocate(self, s: int, row: int, k) -> int:
        blocks = self.sets[s]
        for i, blk in enumerate(blocks):
            if not blk.valid:
                blk.valid, blk.row, blk.k_tag = True, row, k
                blk.first = blk.last = 0
                blk.data = [None] * self.block_capacity
                self._free[s] -= 1
                return i
        raise PsramFullError(s)

    def partial_write(self, row: int, k, e) -> None:
        s = row % self.n_sets
        key = (row, k)
        prev = self._last_coord.get(key)
        if prev is not None and e[0] <= prev:
            raise PsramOrderError(f"psum coord {e[0]} after {prev} for row {row}, k {k}")
        chain = self._chains[s].get(key)
        if chain:
            blk = self.sets[s][chain[-1]]
            if blk.last < self.block_capacity:
                blk.data[blk.last] = e
                blk.last += 1
                self._last_coord[key] = e[0]
                self.writes += 1
                return
        i = self._allocate(s, row, k)
        if chain is None:
            chain = self._chains[s][key] = deque()
        chain.append(i)
        blk = self.sets[s][i]
        blk.data[0] = e
        blk.last = 1
        self._last_coord[key] = e[0]
        self.writes += 1

    def consume(self, row: int, k):
        """Read-and-erase the next element of fiber (row, k); None when exhausted."""
        s = row % self.n_sets
        key = (row, k)
        chain = self._chains[s].get(key)
        if not chain:
            return None
        blk = self.sets[s][chain[0]]
        e = blk.data[blk.first]
        blk.first += 1
        self.consumes += 1
        if blk.first == blk.last:
            blk.valid = False
            blk.data = []
            self._free[s] += 1
            chain.popleft()
            if not chain:
                del self._chains[s][key]
                self._last_coord.pop(key, None)
        return Element(*e)

    def consume_fiber(self, row: int, k) -> list:
        """Consume the whole fiber (row, k), block by block."""
        s = row % self.n_sets
        key = (row, k)
        chain = self._chains[s].pop(key, None)
        self._last_coord.pop(key, None)
        if not chain:
            return []
        out = []
        blocks = self.sets[s]
        for i in chain:
            blk = blocks[i]
            out.extend(blk.data[blk.first:blk.last])
            blk.valid = False
            blk.data = []
        self._free[s] += len(chain)
        self.consumes += len(out)
        return out

    def write_fiber(self, row: int, k, elements) -> int:
        """Append sorted elements to fiber (row, k); returns how many fit.

        Stops early, without raising, when the set runs out of blocks.
        """
        n = len(elements)
        if not n:
            return 0
        s = row % self.n_sets
        key = (row, k)
        prev = self._last_coord.get(key)
        if prev is not None and elements[0][0] <= prev:
            raise PsramOrderError(f"psum coord {elements[0][0]} after {prev} for row {row}, k {k}")
        cap = self.block_capacity
        chain = self._chains[s].get(key)
        pos = 0
        if chain:
            blk = self.sets[s][chain[-1]]
            take = min(cap - blk.last, n)
            if take > 0:
                blk.data[blk.last:blk.last + take] = elements[:take]
                blk.last += take
                pos = take
        while pos < n:
            try:
                i = self._allocate(s, row, k)
            except PsramFullError:
                break
            if chain is None:
                chain = self._chains[s][key] = deque()
            chain.append(i)
            blk = self.sets[s][i]
            take = min(cap, n - pos)
            blk.data[:take] = elements[pos:pos + take]
            blk.last = take
            pos += take
        if pos:
            self._last_coord[key] = elements[pos - 1][0]
            self.writes += pos
        return pos

    def fibers(self, row: int) -> list:
        """k tags of the resident fibers of ``row``, oldest first."""
        return [k for (r, k) in self._chains[row % self.n_sets] if r == row]

    def rows_in_set(self, s: int) -> list:
        return sorted({r for (r, _) in self._chains[s]})

    def fiber_blocks(self, row: int, k) -> list:
        return list(self._chains[row % self.n_sets].get((row, k), ()))

    def fiber_length(self, row: int, k) -> int:
        s = row % self.n_sets
        return sum(self.sets[s][i].last - self.sets[s][i].first
                   for i in self._chains[s].get((row, k), ()))

    def row_blocks(self, row: int) -> int:
        s = row % self.n_sets
        return sum(len(c) for (r, _), c in self._chains[s].items() if r == row)

    def resident_rows(self) -> list:
        rows = set()
        for chains in self._chains:
            rows.update(r for (r, _) in chains)
        return sorted(rows)


class WriteBuffer:
    """Output FIFO hiding the DRAM latency of final elements."""

    def __init__(self, dram: DramModel, word_bytes: int = 4):
        self.dram = dram
        self.word_bytes = word_bytes
        self.pending: list = []
        self.written = 0
        self.last_completion = 0

    def write(self, offset: int, e) -> None:
        self.pending.append((offset, e))

    def drain(self, now: int) -> int:
        if self.pending:
            nbytes = len(self.pending) * self.word_bytes
            self.written += len(self.pending)
            self.pending.clear()
            self.last_completion = max(self.last_completion,
                                       self.dram.request("write", nbytes, now))
        return self.last_completion
