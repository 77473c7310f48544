"""Cycle-level simulator of a reconfigurable SpMSpM accelerator.

The machine runs any of six dataflows (inner product, outer product and
Gustavson's row-wise product, each M- or N-stationary) on one fabric by
reconfiguring its reduction tree and memory controllers per layer.
"""

from .config import AcceleratorConfig, ConfigError, desk_config, load_config, parse_config
from .dataflow import DATAFLOW_ORDER, Dataflow, Family, properties, transition_needs_conversion
from .engine import LayerSpec, SimResult, SimulationError, plan_tiles, run_layer
from .sparse import CompressedMatrix, MajorAxis, compress, convert, decompress, gen_sparse

__all__ = [
    "AcceleratorConfig", "ConfigError", "desk_config", "load_config", "parse_config",
    "DATAFLOW_ORDER", "Dataflow", "Family", "properties", "transition_needs_conversion",
    "LayerSpec", "SimResult", "SimulationError", "plan_tiles", "run_layer",
    "CompressedMatrix", "MajorAxis", "compress", "convert", "decompress", "gen_sparse",
]
