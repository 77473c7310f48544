"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""

import itertools
import random
import subprocess
import sys

import numpy as np
import pytest

import conftest
from oracles import (TABLE_ORDER, TABLE_PROPERTIES, TABLE_TRANSITIONS, QueuePsram,
                     ReferenceLRU, dense_matmul)
from spmspm_sim.config import desk_config
from spmspm_sim.dataflow import (DATAFLOW_ORDER, Dataflow, Family, properties,
                                 required_formats, transition_needs_conversion)
from spmspm_sim.engine import LayerSpec, plan_tiles, run_layer
from spmspm_sim.harness import standard_grid, sweep
from spmspm_sim.memory import PsramState, StrCache
from spmspm_sim.sparse import compress, gen_sparse

SPARSITIES = (0.0, 0.3, 0.7, 0.9)


def verdict(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def oracle_layers(count, seed):
    rng = random.Random(seed)
    out = []
    for i in range(count):
        m, n, k = rng.randint(1, 64), rng.randint(1, 64), rng.randint(1, 64)
        spa, spb = rng.choice(SPARSITIES), rng.choice(SPARSITIES)
        out.append((gen_sparse(m, k, spa, 2 * i + seed), gen_sparse(k, n, spb, 2 * i + seed + 1)))
    return out


def layer_for(a, b, d):
    fa, fb = required_formats(d)
    return LayerSpec(compress(a, fa), compress(b, fb))


@pytest.fixture(scope="module")
def corpus():
    """Criterion-1 corpus: 200 layers, each run under all six dataflows."""
    runs = []
    for a, b in oracle_layers(200, seed=2024):
        per = {d: run_layer(layer_for(a, b, d), d) for d in DATAFLOW_ORDER}
        runs.append((a, b, per))
    return runs


@pytest.fixture(scope="module")
def desk_sweep():
    return sweep(standard_grid(), desk_config())


def test_criterion_01_oracle_equivalence(corpus):
    bad = []
    for i, (a, b, per) in enumerate(corpus):
        want = dense_matmul(a, b)
        for d, r in per.items():
            if not (r.C.to_dense().astype(object) == want).all():
                bad.append((i, d.cli_name))
    verdict(1, not bad, f"{len(corpus)} layers x 6 dataflows exact; mismatches={bad[:5]}")


def test_criterion_02_transition_table():
    wrong = [(p, c) for p in TABLE_ORDER for j, c in enumerate(TABLE_ORDER)
             if (not transition_needs_conversion(Dataflow.from_name(p), Dataflow.from_name(c)))
             != TABLE_TRANSITIONS[p][j]]
    verdict(2, not wrong, f"36 transition entries; wrong={wrong}")


def test_criterion_03_property_table():
    wrong = []
    for name in TABLE_ORDER:
        p = properties(Dataflow.from_name(name))
        row = (p.stationary_tensor, p.stationary_fiber, p.streaming_tensor,
               p.a_format.format_name, p.b_format.format_name, p.c_format.format_name,
               p.intersection.value, p.merging.value)
        if row != TABLE_PROPERTIES[name]:
            wrong.append(name)
    verdict(3, not wrong, f"6 property rows; wrong={wrong}")


def test_criterion_04_ip_zero_psums(corpus):
    bad = [i for i, (_, _, per) in enumerate(corpus)
           for d in (Dataflow.IP_M, Dataflow.IP_N)
           if per[d].traffic["psram_write"] or per[d].traffic["psram_read"]
           or per[d].cycles["merging"]]
    verdict(4, not bad, f"{2 * len(corpus)} IP runs with zero psram traffic and merging; bad={bad[:5]}")


def test_criterion_05_read_once_stationary(corpus):
    bad = []
    for i, (a, b, per) in enumerate(corpus):
        for d, r in per.items():
            nnz = int(np.count_nonzero(a if d.m_stationary else b))
            plan = plan_tiles(layer_for(a, b, d), d)
            # one pass over the stationary operand: each element sits in exactly one tile
            passes = plan.n_elements // nnz if nnz else 1
            if r.traffic["sta_read"] != nnz * 4 * passes or plan.n_elements != nnz * passes:
                bad.append((i, d.cli_name))
    verdict(5, not bad, f"sta_read = nnz x 4 x passes on {6 * len(corpus)} runs; bad={bad[:5]}")


def test_criterion_06_cache_fidelity():
    rng = random.Random(6)
    mismatches = 0
    accounting = 0
    for t in range(1000):
        assoc = rng.choice([1, 2, 4, 8, 16])
        n_sets = rng.choice([1, 2, 4, 8, 16])
        size = n_sets * assoc * 128
        span = rng.choice([4, 16, 64, 256]) * 128
        trace = [4 * rng.randrange(span // 4) for _ in range(rng.randint(1, 300))]
        cache = StrCache(size, 128, assoc, 16, span)
        ref = ReferenceLRU(size, 128, assoc)
        got = [cache.read(addr, 4)[0][1] for addr in trace]
        if got != [ref.access(addr) for addr in trace]:
            mismatches += 1
        if cache.offchip_bytes != cache.misses * 128:
            accounting += 1
    verdict(6, mismatches == 0 and accounting == 0,
            f"1000 traces; sequence mismatches={mismatches}, byte-accounting errors={accounting}")


def _psram_check(ops, sets, blocks, block_bytes):
    """Replay ``ops`` on the PSRAM and the queue oracle; return the first discrepancy."""
    p, q = PsramState(sets, blocks, block_bytes), QueuePsram()
    nxt = {}
    for kind, row, k in ops:
        if kind == "w":
            c = nxt.get((row, k), 0)
            if c >= 4:
                continue
            nxt[(row, k)] = c + 1
            e = (c, 100 * row + 10 * k + c)
            p.partial_write(row, k, e)
            q.write(row, k, e)
        else:
            got = p.consume(row, k)
            want = q.consume(row, k)
            if (tuple(got) if got is not None else None) != want:
                return ops
        if p.resident != q.resident() or p.writes != p.consumes + p.resident:
            return ops
    for row, k in list(q.q):
        if [tuple(e) for e in p.consume_fiber(row, k)] != list(q.q.pop((row, k))):
            return ops
    return None if p.resident == 0 else ops


def interleavings(streams):
    """Every merge of ``streams`` that keeps each stream's own order."""
    live = [i for i, st in enumerate(streams) if st]
    if not live:
        yield []
        return
    for i in live:
        rest = list(streams)
        rest[i] = streams[i][1:]
        for tail in interleavings(rest):
            yield [streams[i][0]] + tail


def test_criterion_07_psram_exhaustive():
    keys = [(r, k) for r in range(3) for k in range(3)]
    alphabet = [(kind, r, k) for kind in "wc" for r, k in keys]
    failures = []
    checked = 0
    # every sequence of up to 4 operations over 3 rows x 3 tags
    for n in range(1, 5):
        for ops in itertools.product(alphabet, repeat=n):
            checked += 1
            if _psram_check(ops, 2, 16, 8) is not None:
                failures.append(ops)
    # every interleaving of three 4-write streams aliasing to one set (2-element
    # blocks force chaining), then of two streams mixing writes and consumes
    for streams in ([[("w", 0, 0)] * 4, [("w", 2, 1)] * 4, [("w", 0, 2)] * 4],
                    [[("w", 0, 0), ("w", 0, 0), ("c", 0, 0), ("w", 0, 0), ("w", 0, 0),
                      ("c", 0, 0), ("c", 0, 0), ("c", 0, 0)],
                     [("w", 2, 0), ("c", 2, 0), ("w", 2, 0), ("w", 2, 0), ("c", 2, 0),
                      ("w", 2, 0), ("c", 2, 0), ("c", 2, 0)]]):
        for ops in interleavings(streams):
            checked += 1
            if _psram_check(ops, 2, 16, 8) is not None:
                failures.append(ops)
    # per-key write/consume words of length <= 8 on every key
    for n in range(1, 9):
        for word in itertools.product("wc", repeat=n):
            for r, k in keys:
                checked += 1
                if _psram_check([(c, r, k) for c in word], 2, 4, 8) is not None:
                    failures.append(word)
    verdict(7, not failures,
            f"{checked} operation sequences over <=3 rows x <=3 tags x <=4 elements; "
            f"failures={len(failures)}")


def test_criterion_08_adaptive_dominance(desk_sweep):
    tot = desk_sweep.totals()
    gm = desk_sweep.geomean_speedups()
    ok = all(tot["adaptive"] <= tot[k] for k in ("ip", "op", "gust")) and \
        all(v >= 1.0 for v in gm.values())
    verdict(8, ok, f"{len(desk_sweep.points)} points; totals={tot}; "
                   f"geomean={ {k: round(v, 3) for k, v in gm.items()} }")


def test_criterion_09_crossovers(desk_sweep):
    fams = desk_sweep.family_winners()
    wm = {d.cli_name: n for d, n in desk_sweep.winner_map().items()}
    verdict(9, fams == {Family.IP, Family.OP, Family.GUST}, f"winner map {wm}")


def test_criterion_10_compare_determinism(tmp_path):
    model = tmp_path / "model.txt"
    model.write_text("synth M=96 N=64 K=80 spA=0.9 spB=0.8 seed=10\n"
                     "synth M=96 N=48 K=64 spB=0.85\n"
                     "synth M=96 N=32 K=48 spB=0.7\n")
    outs = []
    for i in range(2):
        out = tmp_path / f"report{i}.jsonl"
        subprocess.run([sys.executable, "-m", "spmspm_sim", "compare", "--model", str(model),
                        "--seed", "42", "--desk", "--out", str(out)],
                       check=True, capture_output=True)
        outs.append(out.read_bytes())
    verdict(10, outs[0] == outs[1] and len(outs[0]) > 0,
            f"two compare runs, {len(outs[0])} bytes each, byte-identical={outs[0] == outs[1]}")


def test_criterion_11_duality():
    bad = []
    for i, (a, b) in enumerate(oracle_layers(50, seed=11)):
        for fam in Family:
            dn, dm = Dataflow.for_family(fam, False), Dataflow.for_family(fam, True)
            rn = run_layer(layer_for(a, b, dn), dn)
            rm = run_layer(layer_for(b.T.copy(), a.T.copy(), dm), dm)
            if rn.cycles_total != rm.cycles_total or \
                    not np.array_equal(rn.C.to_dense(), rm.C.to_dense().T):
                bad.append((i, fam.name))
    verdict(11, not bad, f"50 layers x 3 families; mismatches={bad[:5]}")


def test_heuristic_within_twice_exhaustive(desk_sweep):
    ratios = [p.cycles[p.heuristic] / max(p.cycles[p.winner], 1) for p in desk_sweep.points]
    assert max(ratios) <= 2.0, max(ratios)
