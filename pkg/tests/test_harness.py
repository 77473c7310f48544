import numpy as np
import pytest

from oracles import dense_matmul
from spmspm_sim.config import AcceleratorConfig
from spmspm_sim.dataflow import DATAFLOW_ORDER, Dataflow, output_format, transition_needs_conversion
from spmspm_sim.engine import LayerSpec
from spmspm_sim.harness import (ChainEvaluation, HarnessInputError, LayerStats, Policy,
                                SelectionStrategy, UnsatisfiableChainError, argmin_dataflow,
                                build_operands, heuristic_choose, parse_grid, parse_model,
                                run_model, select_dataflow, standard_grid, sweep)
from spmspm_sim.mmio import write_matrix
from spmspm_sim.sparse import MajorAxis, compress, gen_sparse

KiB, MiB = 1024, 1024 * 1024
CFG = AcceleratorConfig()

CHAIN = """
synth M=24 N=20 K=16 spA=0.5 spB=0.6 seed=3
synth M=24 N=12 K=20 spB=0.5
synth M=24 N=8 K=12 spB=0.4
"""


def stats(da, db, sa, sb):
    return LayerStats(64, 64, 64, da, db, sa, sb)


class TestSelection:
    def test_all_zero_tie_goes_to_ip_m(self):
        z = compress(np.zeros((1, 1), dtype=np.int64))
        d, r = select_dataflow(LayerSpec(z, z), CFG, SelectionStrategy.exhaustive())
        assert d is Dataflow.IP_M and r.cycles_total == 0

    def test_argmin_tie_break_order(self):
        assert argmin_dataflow({d: 5 for d in DATAFLOW_ORDER}) is Dataflow.IP_M
        assert argmin_dataflow({Dataflow.GUST_N: 3, Dataflow.OP_N: 3, Dataflow.IP_M: 4}) \
            is Dataflow.OP_N

    def test_exhaustive_is_minimal(self):
        layer = LayerSpec(compress(gen_sparse(20, 30, 0.7, 1)), compress(gen_sparse(30, 20, 0.7, 2)))
        d, r = select_dataflow(layer, CFG, SelectionStrategy.exhaustive())
        for other in DATAFLOW_ORDER:
            _, o = select_dataflow(layer, CFG, SelectionStrategy.fixed(other))
            assert r.cycles_total <= o.cycles_total

    def test_strategy_parse(self):
        assert SelectionStrategy.parse("auto").kind.name == "EXHAUSTIVE"
        assert SelectionStrategy.parse("op-n").dataflow is Dataflow.OP_N
        with pytest.raises(ValueError):
            SelectionStrategy.parse("fastest")


class TestHeuristic:
    def test_small_b_goes_gust(self):
        assert heuristic_choose(stats(0.1, 0.1, 64 * KiB, 32 * KiB), CFG) is Dataflow.GUST_M

    def test_large_b_goes_op(self):
        assert heuristic_choose(stats(0.1, 0.05, 16 * MiB, 8 * MiB), CFG) is Dataflow.OP_M

    def test_dense_goes_ip(self):
        assert heuristic_choose(stats(1.0, 1.0, 16 * KiB, 16 * KiB), CFG) is Dataflow.IP_M

    def test_denser_operand_stays(self):
        assert heuristic_choose(stats(0.2, 0.9, 1 * KiB, 1 * KiB), CFG) is Dataflow.IP_N

    def test_incoming_format_pins_gust(self):
        s = stats(0.1, 0.1, 64 * KiB, 32 * KiB)
        assert heuristic_choose(s, CFG, MajorAxis.COL) is Dataflow.GUST_N

    def test_stats_of(self):
        a = compress(np.eye(4, dtype=np.int64))
        s = LayerStats.of(LayerSpec(a, a), CFG)
        assert s.density_a == 0.25 and s.size_a == 4 * 4 + 5 * 4


class TestModelParsing:
    def test_synth_chain(self):
        m = parse_model(CHAIN)
        assert len(m.layers) == 3 and m.policy is Policy.ALLOW_EC
        a0, weights, labels = build_operands(m)
        assert a0.shape == (24, 16)
        assert [w.shape for w in weights] == [(16, 20), (20, 12), (12, 8)]
        assert labels == ["L0", "L1", "L2"]

    def test_policy_line(self):
        assert parse_model("policy forbid-ec\n" + CHAIN).policy is Policy.FORBID_EC

    @pytest.mark.parametrize("text", [
        "", "conv M=1\n", "synth M=2 N=2 K=2\n", "synth M=2 N=2 K=2 spA=2 spB=0\n",
        "synth M=0 N=2 K=2 spA=0 spB=0\n", "policy maybe\n", "file a=x.mtx\n",
        "synth M=2 N=2 K=2 spA=0.5 spB=0.5 colour=3\n",
    ])
    def test_rejected(self, text):
        with pytest.raises(HarnessInputError):
            parse_model(text)

    def test_chain_must_compose(self):
        m = parse_model("synth M=4 N=5 K=3 spA=0 spB=0\nsynth M=4 N=2 K=6 spB=0\n")
        with pytest.raises(HarnessInputError):
            build_operands(m)

    def test_file_layers(self, tmp_path):
        write_matrix(tmp_path / "a.mtx", compress(gen_sparse(6, 5, 0.5, 1)))
        write_matrix(tmp_path / "b.mtx", compress(gen_sparse(5, 4, 0.5, 2)))
        m = parse_model("file a=a.mtx b=b.mtx\n", tmp_path)
        a0, weights, _ = build_operands(m)
        assert a0.shape == (6, 5) and weights[0].shape == (5, 4)


class TestChains:
    @pytest.fixture(scope="class")
    @classmethod
    def report(cls):
        return run_model(parse_model(CHAIN), CFG)

    def test_outputs_are_correct(self, report):
        ev = report.evaluation
        a = ev.activations[0].to_dense()
        for i, w in enumerate(ev.weights):
            a = dense_matmul(a, w.to_dense()).astype(np.int64)
            for d in DATAFLOW_ORDER:
                assert np.array_equal(ev.results[i][d].C.to_dense(), a)

    def test_dominance(self, report):
        for plan in report.baselines.values():
            assert report.adaptive.total_cycles <= plan.total_cycles
        assert all(v >= 1.0 for v in report.speedups.values())

    def test_speedup_definition(self, report):
        for k, plan in report.baselines.items():
            assert report.speedups[k] == plan.total_cycles / report.adaptive.total_cycles

    def test_baselines_stay_in_family(self, report):
        for key, plan in report.baselines.items():
            fam = {"ip": "IP", "op": "OP", "gust": "GUST"}[key]
            assert all(c.dataflow.family.name == fam for c in plan.choices)

    def test_conversion_charged_once(self, report):
        for plan in [report.adaptive, *report.baselines.values()]:
            for i, c in enumerate(plan.choices):
                expect = 0
                if i:
                    prev = plan.choices[i - 1].dataflow
                    expect = int(transition_needs_conversion(prev, c.dataflow))
                assert c.converted == bool(expect) and c.result.ec_conversions == expect

    def test_fixed_op_m_converts_second_layer(self):
        m = parse_model("synth M=16 N=12 K=10 spA=0.5 spB=0.5 seed=1\n"
                        "synth M=16 N=8 K=12 spB=0.5\n")
        r = run_model(m, CFG, SelectionStrategy.fixed(Dataflow.OP_M), baselines=())
        assert [c.converted for c in r.adaptive.choices] == [False, True]
        assert r.adaptive.conversions == 1
        assert r.adaptive.choices[1].result.ec_cycles > 0

    def test_forbid_ec_never_converts(self, monkeypatch):
        def no_conversion(*_):
            raise AssertionError("conversion priced under forbid-ec")
        monkeypatch.setattr(ChainEvaluation, "ec_cycles", no_conversion)
        m = parse_model("policy forbid-ec\n" + CHAIN)
        for strategy in (SelectionStrategy.exhaustive(), SelectionStrategy.heuristic()):
            r = run_model(m, CFG, strategy)
            for plan in [r.adaptive, *r.baselines.values()]:
                assert plan.conversions == 0
                ds = [c.dataflow for c in plan.choices]
                assert not any(transition_needs_conversion(p, q) for p, q in zip(ds, ds[1:]))

    def test_forbid_ec_fixed_unsatisfiable(self):
        m = parse_model("policy forbid-ec\n" + CHAIN)
        with pytest.raises(UnsatisfiableChainError):
            run_model(m, CFG, SelectionStrategy.fixed(Dataflow.OP_M), baselines=())

    def test_forbid_never_beats_allow(self):
        allow = run_model(parse_model(CHAIN), CFG, baselines=())
        forbid = run_model(parse_model("policy forbid-ec\n" + CHAIN), CFG, baselines=())
        assert allow.adaptive.total_cycles <= forbid.adaptive.total_cycles

    def test_single_layer_matches_select(self):
        m = parse_model("synth M=20 N=20 K=20 spA=0.6 spB=0.6 seed=9\n")
        r = run_model(m, CFG, baselines=())
        a0, (b,), _ = build_operands(m)
        d, res = select_dataflow(LayerSpec(a0, b), CFG, SelectionStrategy.exhaustive())
        assert r.adaptive.choices[0].dataflow is d
        assert r.adaptive.total_cycles == res.cycles_total

    def test_unknown_baseline(self):
        with pytest.raises(HarnessInputError):
            run_model(parse_model(CHAIN), CFG, baselines=("sigma",))

    def test_reproducible(self):
        one = run_model(parse_model(CHAIN), CFG, seed=4).to_jsonl()
        assert one == run_model(parse_model(CHAIN), CFG, seed=4).to_jsonl()


class TestGrid:
    def test_point_lines(self):
        g = parse_grid("point M=4 N=4 K=4 spA=0.5 spB=0.5\n")
        assert g == [{"M": 4, "N": 4, "K": 4, "spA": 0.5, "spB": 0.5, "seed": 0}]

    def test_cartesian(self):
        g = parse_grid("M=4,8\nN=4\nK=4\nspA=0.1,0.2,0.3\nspB=0.5\n")
        assert len(g) == 6

    @pytest.mark.parametrize("text", ["", "M=4\n", "point M=4 N=4\n", "Z=1\n"])
    def test_rejected(self, text):
        with pytest.raises(HarnessInputError):
            parse_grid(text)

    def test_standard_grid(self):
        g = standard_grid()
        assert len(g) == 27 and len({tuple(p.values()) for p in g}) == 27

    def test_one_point(self):
        r = sweep(parse_grid("point M=8 N=8 K=8 spA=0.5 spB=0.5\n"), CFG)
        assert len(r.points) == 1 and sum(r.winner_map().values()) == 1

    def test_empty_layers_tie_to_ip_m(self):
        r = sweep(parse_grid("M=8,16\nN=8\nK=8\nspA=1.0\nspB=1.0\n"), CFG)
        assert all(p.winner is Dataflow.IP_M for p in r.points)
        assert all(c == 0 for p in r.points for c in p.cycles.values())

    def test_crossover_instances(self):
        # a large streamed B favours outer product, a small cached B row-wise
        cfg = AcceleratorConfig(str_cache_bytes=16384)
        big_b = sweep(parse_grid("point M=1024 N=64 K=512 spA=0.995 spB=0.5\n"), cfg).points[0]
        assert big_b.cycles[Dataflow.OP_M] < big_b.cycles[Dataflow.GUST_M]
        small_b = sweep(parse_grid("point M=512 N=64 K=512 spA=0.95 spB=0.9\n"), cfg).points[0]
        assert small_b.winner.family.name == "GUST"
