"""Layer execution: tile planning, the three phases, cycle accounting and stats.

The engine works on an "M view" of every layer: a stationary matrix whose
major fibers are output rows and a streaming matrix.  M-variants use (A, B)
directly; N-variants use (Bᵀ, Aᵀ) through ``transposed_view``, so the same
code computes Cᵀ, whose CSR vectors are the CSC vectors of C.

Timing model, per tile:

* stationary phase: the tile's elements leave the STA FIFO at distribution
  bandwidth once the FIFO holds them; the next tile's DRAM fill is issued as
  soon as this phase ends.
* streaming phase: streaming fibers leave the STR cache in order at
  distribution bandwidth (``TileReaderStr.deliver``).  A tile ends when the
  last element was delivered, every cluster has emitted its outputs (one per
  cycle per cluster) and the MRN root has drained them at its egress
  bandwidth, plus the multiply stage and the tree depth.
* merging phase: waves of per-row merges over the PSRAM, reading at
  distribution bandwidth plus one cycle per PSRAM bank conflict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import AcceleratorConfig
from .controllers import TileFillerSta, TileFillerStr, TileReaderSta, TileReaderStr, TileWriterC
from .dataflow import Dataflow, Family, required_formats
from .fabric import tree_merge
from .memory import DramModel, PsramState, StaFifo, StrCache, WriteBuffer
from .sparse import CompressedMatrix, MajorAxis, StructuralError, convert

ROW, COL = MajorAxis.ROW, MajorAxis.COL


class SimulationError(RuntimeError):
    """The layer cannot be executed on the configured machine."""


@dataclass
class LayerSpec:
    a: CompressedMatrix
    b: CompressedMatrix
    label: str = ""

    def __post_init__(self):
        if self.a.n_cols != self.b.n_rows:
            raise StructuralError(
                f"dimension mismatch: A is {self.a.n_rows}x{self.a.n_cols}, "
                f"B is {self.b.n_rows}x{self.b.n_cols}")

    @property
    def M(self) -> int:
        return self.a.n_rows

    @property
    def K(self) -> int:
        return self.a.n_cols

    @property
    def N(self) -> int:
        return self.b.n_cols


@dataclass
class Cluster:
    row: int            # output row (view coordinates)
    first_leaf: int
    size: int
    chunk: int = 0      # chunk index when the row's fiber is split
    n_chunks: int = 1

    @property
    def last_chunk(self) -> bool:
        return self.chunk == self.n_chunks - 1


@dataclass
class Tile:
    leaves: list = field(default_factory=list)      # (row, k, value) per multiplier
    clusters: list = field(default_factory=list)

    @property
    def cluster_sizes(self) -> list:
        return [c.size for c in self.clusters]


@dataclass
class TilePlan:
    dataflow: Dataflow
    tiles: list

    @property
    def n_elements(self) -> int:
        return sum(len(t.leaves) for t in self.tiles)


# -- views ------------------------------------------------------------------

_VIEW_FORMATS = {Family.IP: (ROW, COL), Family.OP: (COL, ROW), Family.GUST: (ROW, ROW)}


def _conform(layer: LayerSpec, d: Dataflow):
    """Operands in the formats ``d`` needs, plus the ones that had to be converted."""
    fa, fb = required_formats(d)
    converted = []
    a, b = layer.a, layer.b
    if a.major is not fa:
        converted.append(a)
        a = convert(a, fa)
    if b.major is not fb:
        converted.append(b)
        b = convert(b, fb)
    return a, b, converted


def _view(a: CompressedMatrix, b: CompressedMatrix, d: Dataflow):
    if d.m_stationary:
        stat, stream = a, b
    else:
        stat, stream = b.transposed_view(), a.transposed_view()
    want = _VIEW_FORMATS[d.family]
    assert (stat.major, stream.major) == want, "operands not in the dataflow's formats"
    return stat, stream


# -- tiling -----------------------------------------------------------------

def _plan_view(stat: CompressedMatrix, family: Family, width: int) -> list:
    ptr = stat.ptr.tolist()
    idx = stat.idx.tolist()
    val = stat.val.tolist()
    tiles = []

    if family is Family.OP:
        # stationary is column-major: element (m, k) sits in fiber k
        elems = []
        for k in range(stat.major_dim):
            for p in range(ptr[k], ptr[k + 1]):
                elems.append((idx[p], k, val[p]))
        for i in range(0, len(elems), width):
            chunk = elems[i:i + width]
            tiles.append(Tile(chunk, [Cluster(r, j, 1) for j, (r, _, _) in enumerate(chunk)]))
        return tiles or [Tile()]

    cur = Tile()
    for row in range(stat.major_dim):
        lo, hi = ptr[row], ptr[row + 1]
        n = hi - lo
        if n == 0:
            continue
        fiber = [(row, idx[p], val[p]) for p in range(lo, hi)]
        if n <= width:
            if len(cur.leaves) + n > width:
                tiles.append(cur)
                cur = Tile()
            cur.clusters.append(Cluster(row, len(cur.leaves), n))
            cur.leaves.extend(fiber)
            continue
        # a fiber longer than the multiplier array is split into chunks
        if cur.leaves:
            tiles.append(cur)
            cur = Tile()
        n_chunks = math.ceil(n / width)
        for c in range(n_chunks):
            part = fiber[c * width:(c + 1) * width]
            t = Tile(list(part), [Cluster(row, 0, len(part), c, n_chunks)])
            if c < n_chunks - 1:
                tiles.append(t)
            else:
                cur = t         # the remainder may share its tile with the next rows
    if cur.leaves or not tiles:
        tiles.append(cur)
    return tiles


def plan_tiles(layer: LayerSpec, d: Dataflow, cfg: AcceleratorConfig | None = None) -> TilePlan:
    """Map the stationary operand onto the multipliers, tile by tile (view coordinates)."""
    cfg = cfg or AcceleratorConfig()
    a, b, _ = _conform(layer, d)
    stat, _ = _view(a, b, d)
    return TilePlan(d, _plan_view(stat, d.family, cfg.multipliers))


# -- results ----------------------------------------------------------------

PHASES = ("stationary", "streaming", "merging")
TRAFFIC_KEYS = ("sta_read", "str_read", "psram_write", "psram_read", "dram_read", "dram_write")


@dataclass
class SimResult:
    dataflow: Dataflow
    C: CompressedMatrix
    cycles_total: int
    cycles: dict
    ec_cycles: int
    drain_cycles: int
    traffic: dict
    str_hits: int
    str_misses: int
    psum_count: int
    products: int
    tiles: int
    ec_conversions: int
    merge_rounds: int
    controllers: dict
    label: str = ""

    @property
    def miss_rate(self) -> float:
        total = self.str_hits + self.str_misses
        return self.str_misses / total if total else 0.0

    @property
    def str_cache(self) -> dict:
        return {"hits": self.str_hits, "misses": self.str_misses, "miss_rate": self.miss_rate}

    def with_conversions(self, matrices, cfg: AcceleratorConfig) -> "SimResult":
        """This result preceded by explicit conversions of ``matrices``."""
        if not matrices:
            return self
        cycles, nbytes = conversion_cost(matrices, cfg)
        traffic = dict(self.traffic)
        traffic["dram_read"] += nbytes
        traffic["dram_write"] += nbytes
        return SimResult(self.dataflow, self.C, self.cycles_total + cycles, dict(self.cycles),
                         self.ec_cycles + cycles, self.drain_cycles, traffic, self.str_hits,
                         self.str_misses, self.psum_count, self.products, self.tiles,
                         self.ec_conversions + len(matrices), self.merge_rounds,
                         dict(self.controllers), self.label)

    def to_record(self) -> dict:
        return {
            "label": self.label,
            "dataflow": self.dataflow.cli_name,
            "shape": [self.C.n_rows, self.C.n_cols],
            "nnz_c": self.C.nnz,
            "c_format": self.C.major.format_name,
            "cycles_total": self.cycles_total,
            "cycles": {k: self.cycles[k] for k in PHASES},
            "ec_cycles": self.ec_cycles,
            "drain_cycles": self.drain_cycles,
            "traffic": {k: self.traffic[k] for k in TRAFFIC_KEYS},
            "str_cache": {"hits": self.str_hits, "misses": self.str_misses,
                          "miss_rate": round(self.miss_rate, 6)},
            "psum_count": self.psum_count,
            "products": self.products,
            "tiles": self.tiles,
            "ec_conversions": self.ec_conversions,
            "merge_rounds": self.merge_rounds,
            "controllers": dict(sorted(self.controllers.items())),
        }


def conversion_cost(matrices, cfg: AcceleratorConfig) -> tuple[int, int]:
    """Cycles and bytes (each way) of converting ``matrices`` through DRAM."""
    dram = DramModel(cfg.dram_latency_cycles, cfg.dram_bytes_per_cycle)
    t = 0
    nbytes = 0
    for m in matrices:
        size = m.compressed_size_bytes(cfg.word_bytes, cfg.pointer_bytes)
        nbytes += size
        t = dram.request("read", size, t)
        t = dram.request("write", size, t)
    return t, nbytes


# -- simulation -------------------------------------------------------------

class _LayerSimulation:
    def __init__(self, cfg: AcceleratorConfig, d: Dataflow,
                 stat: CompressedMatrix, stream: CompressedMatrix):
        self.cfg = cfg
        self.d = d
        self.family = d.family
        self.stat = stat
        self.stream = stream
        self.width = cfg.multipliers
        self.latency = 1 + cfg.tree_depth       # multiply stage + tree climb
        wb = cfg.word_bytes
        self.dram = DramModel(cfg.dram_latency_cycles, cfg.dram_bytes_per_cycle)
        self.cache = StrCache(cfg.str_cache_bytes, cfg.str_line_bytes, cfg.str_assoc,
                              cfg.str_banks, stream.nnz * wb, self.dram, cfg.l1_latency)
        self.psram = PsramState(cfg.psram_sets, cfg.psram_blocks_per_set,
                                cfg.psram_block_bytes, cfg.psram_banks, wb)
        self.wbuf = WriteBuffer(self.dram, wb)
        self.stream_fibers = stream.fiber_lists()
        self.filler_sta = TileFillerSta(self.dram, wb)
        self.filler_str = TileFillerStr(cfg.str_mshrs)
        self.reader_str = TileReaderStr(self.cache, self.filler_str, stream.ptr.tolist(),
                                        cfg.dn_bandwidth, cfg.str_line_bytes // wb)
        self.writer = TileWriterC(self.wbuf, self.psram, self._free_psram_set)
        self.clock = 0
        self.phase = dict.fromkeys(PHASES, 0)
        self.stall = 0
        self.products = 0
        self.merge_rounds = 0
        self.psram_bank_conflicts = 0
        self._ip_acc: dict = {}
        self._tag = 0
        self.spilled: dict = {}
        self.spills = 0

    # streaming ---------------------------------------------------------

    def _tile_end(self, t0, dn_end, cluster_bounds, total_out) -> int:
        if total_out == 0 and dn_end <= t0:
            return t0
        end = max(dn_end, t0 + math.ceil(total_out / self.cfg.mrn_bandwidth),
                  max(cluster_bounds, default=t0))
        return end + self.latency

    def _stream_ip(self, tile: Tile, t0: int) -> int:
        kmap: dict = {}
        for ci, cl in enumerate(tile.clusters):
            for (_, k, a) in tile.leaves[cl.first_leaf:cl.first_leaf + cl.size]:
                kmap.setdefault(k, []).append((ci, a))
        requests = self.reader_str.requests_for(Family.IP, tile.leaves, len(self.stream_fibers))
        spans, dn_end = self.reader_str.deliver(requests, t0, self.known_at)
        nc = len(tile.clusters)
        outputs = [[] for _ in range(nc)]
        first = [None] * nc
        for j, fiber in enumerate(self.stream_fibers):
            if not fiber:
                continue
            acc: dict = {}
            for k, b in fiber:
                hits = kmap.get(k)
                if hits:
                    for ci, a in hits:
                        acc[ci] = acc.get(ci, 0) + a * b
                        self.products += 1
            if acc:
                start = spans[j][0]
                for ci, v in acc.items():
                    outputs[ci].append((j, v))
                    if first[ci] is None:
                        first[ci] = start
        bounds = [first[ci] + len(outputs[ci]) for ci in range(nc) if first[ci] is not None]
        total_out = sum(len(o) for o in outputs)
        end = self._tile_end(t0, dn_end, bounds, total_out)
        for cl, out in zip(tile.clusters, outputs):
            if cl.n_chunks == 1:
                if out:
                    self.writer.final_fiber(cl.row, out)
                continue
            # output-stationary accumulation across the chunks of a long row
            acc = self._ip_acc.setdefault(cl.row, {})
            for j, v in out:
                acc[j] = acc.get(j, 0) + v
            if cl.last_chunk:
                del self._ip_acc[cl.row]
                if acc:
                    self.writer.final_fiber(cl.row, sorted(acc.items()))
        return end

    def _stream_gust(self, tile: Tile, t0: int) -> tuple[int, list]:
        requests = self.reader_str.requests_for(Family.GUST, tile.leaves, 0)
        spans, dn_end = self.reader_str.deliver(requests, t0, self.known_at)
        fibers = self.stream_fibers
        bounds = []
        total_out = 0
        to_merge = []
        for cl in tile.clusters:
            partials = []
            firsts = []
            last = t0
            for li in range(cl.first_leaf, cl.first_leaf + cl.size):
                _, k, a = tile.leaves[li]
                fb = fibers[k]
                if not fb:
                    continue
                partials.append([(n, a * b) for n, b in fb])
                self.products += len(fb)
                firsts.append(spans[li][0])
                last = max(last, spans[li][1])
            if not partials:
                merged = []
            else:
                merged = tree_merge(partials)
                bounds.append(max(last, min(firsts) + len(merged)))
            total_out += len(merged)
            if cl.n_chunks == 1:
                if merged:
                    self.writer.final_fiber(cl.row, merged)
            else:
                self.writer.psum_fiber(cl.row, cl.chunk, merged)
                if cl.last_chunk:
                    to_merge.append(cl.row)
        return self._tile_end(t0, dn_end, bounds, total_out), to_merge

    def _stream_op(self, tile: Tile, t0: int) -> int:
        requests = self.reader_str.requests_for(Family.OP, tile.leaves, 0)
        spans, dn_end = self.reader_str.deliver(requests, t0, self.known_at)
        fibers = self.stream_fibers
        bounds = []
        total_out = 0
        for li, (row, k, a) in enumerate(tile.leaves):
            fb = fibers[k]
            if not fb:
                continue
            self.writer.psum_fiber(row, k, [(n, a * b) for n, b in fb])
            self.products += len(fb)
            total_out += len(fb)
            bounds.append(max(spans[li][1], spans[li][0] + len(fb)))
        return self._tile_end(t0, dn_end, bounds, total_out)

    # merging -----------------------------------------------------------

    def _new_tag(self) -> int:
        self._tag -= 1
        return self._tag

    def _merge_wave(self, jobs: list, final: bool, start: int) -> int:
        """Run one wave of merge jobs ``(row, sources, last_round)``; return its cycles.

        A source is a PSRAM tag, or a spilled fiber that is read back from DRAM.
        """
        psram = self.psram
        cfg = self.cfg
        inputs = 0
        block_lists = []
        results = []
        ready = start
        for row, sources, last_round in jobs:
            fibers = []
            for src in sources:
                if isinstance(src, list):
                    ready = max(ready, self.dram.request(
                        "read", len(src) * cfg.word_bytes, start))
                    fibers.append(src)
                    continue
                blocks = psram.fiber_blocks(row, src)
                block_lists.append([psram.bank_of(b) for b in blocks])
                fibers.append(psram.consume_fiber(row, src))
            inputs += sum(len(f) for f in fibers)
            results.append((row, last_round, tree_merge(fibers)))
        # blocks read in the same round collide when they share a bank
        conflicts = 0
        for r in range(max((len(b) for b in block_lists), default=0)):
            banks = [b[r] for b in block_lists if len(b) > r]
            conflicts += len(banks) - len(set(banks))
        self.psram_bank_conflicts += conflicts
        total_out = sum(len(m) for _, _, m in results)
        longest = max((len(m) for _, _, m in results), default=0)
        cycles = 0
        if inputs:
            cycles = (ready - start) + max(
                math.ceil(inputs / cfg.dn_bandwidth) + conflicts, longest,
                math.ceil(total_out / cfg.mrn_bandwidth)) + self.latency
        for row, last_round, merged in results:
            if last_round and final:
                if merged:
                    self.writer.final_fiber(row, merged)
            elif merged:
                self.writer.psum_fiber(row, self._new_tag(), merged)
        return cycles

    def _merge_rows(self, rows, final: bool, start: int) -> int:
        """Merge every partial fiber of ``rows``; returns the cycles spent.

        ``final`` sends each row's result to the write buffer; otherwise the
        result goes back to the PSRAM as a single fiber.
        """
        width = self.width
        cycles = 0
        pending = sorted(set(rows))
        rounds = 0
        while pending:
            jobs = []
            nxt = []
            for row in pending:
                sources = self.psram.fibers(row)
                if final:
                    sources += self.spilled.pop(row, [])
                if not sources or (not final and len(sources) == 1):
                    continue
                if len(sources) <= width:
                    jobs.append((row, sources, True))
                else:
                    for i in range(0, len(sources), width):
                        jobs.append((row, sources[i:i + width], False))
                    nxt.append(row)
            if not jobs:
                break
            rounds += 1
            wave, used = [], 0
            for job in jobs:
                if wave and used + len(job[1]) > width:
                    cycles += self._merge_wave(wave, final, start + cycles)
                    wave, used = [], 0
                    if final:
                        self.wbuf.drain(start + cycles)
                wave.append(job)
                used += len(job[1])
            cycles += self._merge_wave(wave, final, start + cycles)
            if final:
                self.wbuf.drain(start + cycles)
            pending = nxt
        self.merge_rounds = max(self.merge_rounds, rounds)
        return cycles

    def _free_psram_set(self, s: int) -> None:
        """Stall the producers until a block of the full set ``s`` is free.

        Rows holding several partial fibers are compacted first; when that is
        not enough the largest resident fiber is spilled to DRAM and merged
        back in during the row's final merge.
        """
        psram = self.psram
        now = self.clock + self.stall
        rows = [r for r in psram.rows_in_set(s) if len(psram.fibers(r)) > 1]
        rows.sort(key=lambda r: (-psram.row_blocks(r), r))
        for row in rows:
            self.stall += self._merge_rows([row], final=False, start=now)
            now = self.clock + self.stall
            if psram.free_blocks(s) > 0:
                return
        victims = [(len(psram.fiber_blocks(r, k)), r, k)
                   for r in psram.rows_in_set(s) for k in psram.fibers(r)]
        _, row, k = max(victims, key=lambda v: (v[0], -v[1]))
        fiber = psram.consume_fiber(row, k)
        nbytes = len(fiber) * self.cfg.word_bytes
        self.dram.request("write", nbytes, now)
        self.stall += math.ceil(nbytes / self.cfg.dram_bytes_per_cycle)
        self.spilled.setdefault(row, []).append(fiber)
        self.spills += 1

    # driver ------------------------------------------------------------

    def run(self) -> tuple[dict, list]:
        cfg = self.cfg
        tiles = _plan_view(self.stat, self.family, self.width)
        fifo = StaFifo([e for t in tiles for e in t.leaves], cfg.sta_fifo_bytes, cfg.word_bytes)
        reader_sta = TileReaderSta(fifo, cfg.dn_bandwidth)
        sta_ready = self.filler_sta.fill(len(tiles[0].leaves), 0)
        for t, tile in enumerate(tiles):
            n = len(tile.leaves)
            if n == 0:
                continue
            start = max(self.clock, sta_ready)
            self.known_at = sta_ready
            _, cycles = reader_sta.read_tile(n)
            self.phase["stationary"] += start + cycles - self.clock
            self.clock = start + cycles
            if t + 1 < len(tiles):
                sta_ready = self.filler_sta.fill(len(tiles[t + 1].leaves), self.clock)
            t0 = self.clock
            self.stall = 0
            to_merge = []
            if self.family is Family.IP:
                end = self._stream_ip(tile, t0)
            elif self.family is Family.GUST:
                end, to_merge = self._stream_gust(tile, t0)
            else:
                end = self._stream_op(tile, t0)
            self.phase["streaming"] += end - t0
            self.phase["merging"] += self.stall
            self.clock = end + self.stall
            self.wbuf.drain(self.clock)
            if to_merge:
                cycles = self._merge_rows(to_merge, final=True, start=self.clock)
                self.phase["merging"] += cycles
                self.clock += cycles
        if self.family is Family.OP:
            rows = set(self.psram.resident_rows()) | set(self.spilled)
            cycles = self._merge_rows(rows, final=True, start=self.clock)
            self.phase["merging"] += cycles
            self.clock += cycles
        if self.psram.resident or self.spilled:
            raise SimulationError("partial sums left in the PSRAM after the last merge")
        self.wbuf.drain(self.clock)
        self.sta_pops = reader_sta.pops
        return self.writer.rows, tiles

    def build_output(self, rows: dict) -> CompressedMatrix:
        n_rows, n_cols = self.stat.n_rows, self.stream.n_cols
        ptr = np.zeros(n_rows + 1, dtype=np.int64)
        idx, val = [], []
        for r in range(n_rows):
            fiber = rows.get(r, ())
            ptr[r + 1] = ptr[r] + len(fiber)
            for c, v in fiber:
                idx.append(c)
                val.append(v)
        dtype = np.float64 if (self.stat.is_real or self.stream.is_real) else np.int64
        return CompressedMatrix(ROW, n_rows, n_cols, ptr,
                                np.array(idx, dtype=np.int64), np.array(val, dtype=dtype))


def run_layer(layer: LayerSpec, d: Dataflow, cfg: AcceleratorConfig | None = None) -> SimResult:
    """Simulate one SpMSpM layer under dataflow ``d``.

    Operands not already in ``d``'s formats are converted first; every
    conversion is charged as a DRAM round trip of the whole matrix.
    """
    cfg = cfg or AcceleratorConfig()
    a, b, converted = _conform(layer, d)
    stat, stream = _view(a, b, d)
    sim = _LayerSimulation(cfg, d, stat, stream)
    rows, tiles = sim.run()
    c_view = sim.build_output(rows)
    c = c_view if d.m_stationary else c_view.transposed_view()

    core_end = sim.clock
    total = max(core_end, sim.wbuf.last_completion)
    wb = cfg.word_bytes
    traffic = {
        "sta_read": sim.sta_pops * wb,
        "str_read": sim.reader_str.elements * wb,
        "psram_write": sim.psram.writes * wb,
        "psram_read": sim.psram.consumes * wb,
        "dram_read": sim.dram.read_bytes,
        "dram_write": sim.dram.write_bytes,
    }
    controllers = {
        "sta_fill_requests": sim.filler_sta.requests,
        "sta_pops": sim.sta_pops,
        "str_fiber_requests": sim.reader_str.fiber_requests,
        "str_line_accesses": sim.reader_str.line_accesses,
        "c_final_writes": sim.writer.final_writes,
        "c_psum_writes": sim.writer.psum_writes,
        "psram_bank_conflicts": sim.psram_bank_conflicts,
        "psram_spills": sim.spills,
    }
    result = SimResult(
        dataflow=d, C=c, cycles_total=total, cycles=dict(sim.phase), ec_cycles=0,
        drain_cycles=total - core_end, traffic=traffic, str_hits=sim.cache.hits,
        str_misses=sim.cache.misses, psum_count=sim.psram.writes, products=sim.products,
        tiles=sum(1 for t in tiles if t.leaves), ec_conversions=0,
        merge_rounds=sim.merge_rounds, controllers=controllers, label=layer.label)
    return result.with_conversions(converted, cfg)
