import pytest

from spmspm_sim.config import AcceleratorConfig, ConfigError, desk_config, load_config, parse_config


class TestDefaults:
    def test_machine_parameters(self):
        c = AcceleratorConfig()
        assert (c.multipliers, c.adders, c.dn_bandwidth, c.mrn_bandwidth) == (64, 63, 16, 16)
        assert (c.str_cache_bytes, c.str_line_bytes, c.str_assoc, c.str_banks) == \
            (1048576, 128, 16, 16)
        assert c.psram_bytes == 262144

    def test_derived(self):
        c = AcceleratorConfig()
        assert c.tree_depth == 6
        assert c.dram_latency_cycles == 80
        assert c.dram_bytes_per_cycle == pytest.approx(320.0)
        assert c.str_sets == 512
        assert c.psram_block_elements == 16

    def test_desk_only_scales_cache(self):
        d = desk_config()
        assert d.str_cache_bytes == 16384 and d.multipliers == 64


class TestParsing:
    def test_roundtrip(self):
        c = AcceleratorConfig(multipliers=32, adders=31, psram_bytes=131072, psram_sets=32)
        assert parse_config(c.to_text()) == c

    def test_comments_and_derivations(self):
        c = parse_config("# small\nmultipliers = 16\npsram_bytes=65536\n")
        assert c.adders == 15 and c.psram_sets == 16

    @pytest.mark.parametrize("text", [
        "multipliers=48\n", "adders=10\n", "bogus=1\n", "multipliers\n",
        "dn_bandwidth=x\n", "str_cache_bytes=1000\n", "psram_sets=3\n",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_load(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("str_cache_bytes=16384\n")
        assert load_config(p).str_cache_bytes == 16384
        assert load_config(None) == AcceleratorConfig()
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.cfg")
