"""The six SpMSpM dataflow variants and their properties.

Each variant is a loop order over (M, N, K).  The property rows fix which
tensor stays in the multipliers, which one streams, the compression format of
every operand and the kind of intersection/merging hardware needed.  Whether
one layer's output can feed the next without an explicit CSR<->CSC conversion
follows from those formats alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .sparse import MajorAxis

ROW, COL = MajorAxis.ROW, MajorAxis.COL


class Family(Enum):
    IP = "ip"
    OP = "op"
    GUST = "gust"


class Dataflow(Enum):
    # value = (cli name, loop order outermost-to-innermost)
    IP_M = ("ip-m", "MNK")
    OP_M = ("op-m", "KMN")
    GUST_M = ("gust-m", "MKN")
    IP_N = ("ip-n", "NMK")
    OP_N = ("op-n", "KNM")
    GUST_N = ("gust-n", "NKM")

    @property
    def cli_name(self) -> str:
        return self.value[0]

    @property
    def loop_order(self) -> str:
        return self.value[1]

    @property
    def family(self) -> Family:
        return _FAMILY[self.name.split("_")[0]]

    @property
    def m_stationary(self) -> bool:
        return self.name.endswith("_M")

    @property
    def mirror(self) -> "Dataflow":
        """Same family, other stationary dimension."""
        return Dataflow[self.name[:-1] + ("N" if self.m_stationary else "M")]

    @property
    def m_variant(self) -> "Dataflow":
        return self if self.m_stationary else self.mirror

    @classmethod
    def from_name(cls, name: str) -> "Dataflow":
        key = name.strip().lower().replace("_", "-")
        for d in cls:
            if d.cli_name == key:
                return d
        raise ValueError(f"unknown dataflow {name!r}; expected one of "
                         + ", ".join(d.cli_name for d in cls))

    @classmethod
    def for_family(cls, family: Family, m_stationary: bool = True) -> "Dataflow":
        return cls[f"{family.name}_{'M' if m_stationary else 'N'}"]

    def __str__(self) -> str:
        return self.cli_name


_FAMILY = {"IP": Family.IP, "OP": Family.OP, "GUST": Family.GUST}

# Tie-break order used by every selection strategy.
DATAFLOW_ORDER = (Dataflow.IP_M, Dataflow.OP_M, Dataflow.GUST_M,
                  Dataflow.IP_N, Dataflow.OP_N, Dataflow.GUST_N)


class Intersection(Enum):
    SCALAR_SCALAR = "scalar-scalar"
    LEADER_FOLLOWER = "leader-follower"
    NONE = "none"


class Merging(Enum):
    NONE = "none"
    SCALAR = "scalar"
    FIBER = "fiber"


@dataclass(frozen=True)
class DataflowProperties:
    stationary_tensor: str
    stationary_fiber: str
    streaming_tensor: str
    a_format: MajorAxis
    b_format: MajorAxis
    c_format: MajorAxis
    intersection: Intersection
    merging: Merging


_PROPERTIES = {
    Dataflow.IP_M: DataflowProperties("C", "A", "B", ROW, COL, ROW,
                                      Intersection.SCALAR_SCALAR, Merging.NONE),
    Dataflow.OP_M: DataflowProperties("A", "B", "C", COL, ROW, ROW,
                                      Intersection.NONE, Merging.SCALAR),
    Dataflow.GUST_M: DataflowProperties("A", "C", "B", ROW, ROW, ROW,
                                        Intersection.LEADER_FOLLOWER, Merging.FIBER),
    Dataflow.IP_N: DataflowProperties("C", "B", "A", ROW, COL, COL,
                                      Intersection.SCALAR_SCALAR, Merging.NONE),
    Dataflow.OP_N: DataflowProperties("B", "A", "C", COL, ROW, COL,
                                      Intersection.NONE, Merging.SCALAR),
    Dataflow.GUST_N: DataflowProperties("B", "C", "A", COL, COL, COL,
                                        Intersection.LEADER_FOLLOWER, Merging.FIBER),
}


def properties(d: Dataflow) -> DataflowProperties:
    return _PROPERTIES[d]


def required_formats(d: Dataflow) -> tuple[MajorAxis, MajorAxis]:
    p = _PROPERTIES[d]
    return p.a_format, p.b_format


def output_format(d: Dataflow) -> MajorAxis:
    return _PROPERTIES[d].c_format


def needs_conversion_feeding_a(produced: MajorAxis, consumer: Dataflow) -> bool:
    return _PROPERTIES[consumer].a_format is not produced


def needs_conversion_feeding_b(produced: MajorAxis, consumer: Dataflow) -> bool:
    return _PROPERTIES[consumer].b_format is not produced


def transition_needs_conversion(producer: Dataflow, consumer: Dataflow) -> bool:
    """True when the producer's output cannot be the consumer's activation operand as-is.

    Activations flow layer to layer as operand A; weights are kept offline in
    both formats, so they never force a conversion.
    """
    return needs_conversion_feeding_a(output_format(producer), consumer)


def legal_consumers(producer: Dataflow | None) -> list[Dataflow]:
    if producer is None:
        return list(DATAFLOW_ORDER)
    return [d for d in DATAFLOW_ORDER if not transition_needs_conversion(producer, d)]
