"""Accelerator configuration and its flat ``key=value`` file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AcceleratorConfig:
    multipliers: int = 64
    adders: int = 63
    dn_bandwidth: int = 16          # elements/cycle, distribution network
    mrn_bandwidth: int = 16         # elements/cycle, merger-reduction root egress
    word_bytes: int = 4             # one (coordinate, value) element
    pointer_bytes: int = 4
    l1_latency: int = 1             # cycles
    sta_fifo_bytes: int = 256
    str_cache_bytes: int = 1048576
    str_line_bytes: int = 128
    str_assoc: int = 16
    str_banks: int = 16
    str_mshrs: int = 1              # outstanding STR misses (1 = blocking)
    psram_bytes: int = 262144
    psram_sets: int = 64
    psram_blocks_per_set: int = 64
    psram_block_bytes: int = 64
    psram_banks: int = 16
    dram_latency_ns: float = 100.0
    dram_bw_gbps: float = 256.0
    clock_mhz: float = 800.0
    heuristic_cache_fit: float = 0.5
    heuristic_density_cut: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        m = self.multipliers
        if m < 1 or m & (m - 1):
            raise ConfigError(f"multipliers must be a power of two, got {m}")
        if self.adders != m - 1:
            raise ConfigError(f"adders must equal multipliers - 1 ({m - 1}), got {self.adders}")
        for name in ("dn_bandwidth", "mrn_bandwidth", "word_bytes", "pointer_bytes",
                     "sta_fifo_bytes", "str_cache_bytes", "str_line_bytes", "str_assoc",
                     "str_banks", "str_mshrs", "psram_sets", "psram_blocks_per_set",
                     "psram_block_bytes", "psram_banks", "clock_mhz", "dram_bw_gbps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.dram_latency_ns < 0 or self.l1_latency < 0:
            raise ConfigError("latencies must be non-negative")
        if self.str_cache_bytes % (self.str_line_bytes * self.str_assoc):
            raise ConfigError("str_cache_bytes must be a multiple of line size x associativity")
        if self.str_line_bytes % self.word_bytes or self.psram_block_bytes % self.word_bytes:
            raise ConfigError("line and block sizes must hold whole elements")
        if self.psram_sets * self.psram_blocks_per_set * self.psram_block_bytes != self.psram_bytes:
            raise ConfigError("psram_sets x psram_blocks_per_set x psram_block_bytes "
                              f"must equal psram_bytes ({self.psram_bytes})")
        if self.sta_fifo_bytes < self.word_bytes:
            raise ConfigError("sta_fifo_bytes must hold at least one element")
        if not (0 < self.heuristic_cache_fit and 0 <= self.heuristic_density_cut <= 1):
            raise ConfigError("heuristic thresholds out of range")

    @property
    def tree_depth(self) -> int:
        return int(math.log2(self.multipliers))

    @property
    def dram_latency_cycles(self) -> int:
        return int(round(self.dram_latency_ns * self.clock_mhz / 1000.0))

    @property
    def dram_bytes_per_cycle(self) -> float:
        # GB/s over MHz: (1e9 B/s) / (1e6 cycles/s)
        return self.dram_bw_gbps * 1000.0 / self.clock_mhz

    @property
    def str_sets(self) -> int:
        return self.str_cache_bytes // (self.str_line_bytes * self.str_assoc)

    @property
    def psram_block_elements(self) -> int:
        return self.psram_block_bytes // self.word_bytes

    def replace(self, **changes) -> "AcceleratorConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def parse_config(text: str, base: AcceleratorConfig | None = None) -> AcceleratorConfig:
    base = base or AcceleratorConfig()
    types = {f.name: f.type for f in fields(AcceleratorConfig)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            changes[key] = float(value) if types[key] in (float, "float") else int(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    if "psram_bytes" in changes and "psram_sets" not in changes:
        # derive the set count when only the total size is overridden
        per_set = base.psram_blocks_per_set * base.psram_block_bytes
        changes.setdefault("psram_sets", max(1, changes["psram_bytes"] // per_set))
    if "multipliers" in changes and "adders" not in changes:
        changes["adders"] = changes["multipliers"] - 1
    try:
        return base.replace(**changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> AcceleratorConfig:
    if path is None:
        return AcceleratorConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def desk_config() -> AcceleratorConfig:
    """Default machine with the STR cache scaled down 64x for desk-sized layers.

    The heuristic's cache-fit fraction is raised to 1.0 to match: at this
    scale, operands that fit the whole cache already stream without misses.
    """
    return AcceleratorConfig(str_cache_bytes=16384, heuristic_cache_fit=1.0)
