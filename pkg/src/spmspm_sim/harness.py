"""Experiment driver: dataflow selection, baselines, layer chains and sweeps.

Weights (operand B) are kept offline in both formats, so only activations
(operand A of every layer after the first) can force an explicit
conversion.  The first layer's activation is also available in any format.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .config import AcceleratorConfig
from .dataflow import DATAFLOW_ORDER, Dataflow, Family, output_format, required_formats
from .engine import LayerSpec, SimResult, conversion_cost, run_layer
from .mmio import read_matrix
from .sparse import CompressedMatrix, MajorAxis, compress, convert, gen_sparse

ROW, COL = MajorAxis.ROW, MajorAxis.COL


class HarnessInputError(ValueError):
    """Malformed model or grid description."""


class UnsatisfiableChainError(HarnessInputError):
    """No dataflow can consume a layer's activation without a forbidden conversion."""


# -- selection --------------------------------------------------------------

class StrategyKind(Enum):
    EXHAUSTIVE = "auto"
    HEURISTIC = "heuristic"
    FIXED = "fixed"


@dataclass(frozen=True)
class SelectionStrategy:
    kind: StrategyKind
    dataflow: Dataflow | None = None

    @classmethod
    def exhaustive(cls) -> "SelectionStrategy":
        return cls(StrategyKind.EXHAUSTIVE)

    @classmethod
    def heuristic(cls) -> "SelectionStrategy":
        return cls(StrategyKind.HEURISTIC)

    @classmethod
    def fixed(cls, d: Dataflow) -> "SelectionStrategy":
        return cls(StrategyKind.FIXED, d)

    @classmethod
    def parse(cls, text: str) -> "SelectionStrategy":
        key = text.strip().lower()
        if key in ("auto", "exhaustive"):
            return cls.exhaustive()
        if key == "heuristic":
            return cls.heuristic()
        return cls.fixed(Dataflow.from_name(key))

    @property
    def name(self) -> str:
        return self.dataflow.cli_name if self.kind is StrategyKind.FIXED else self.kind.value


def prepare(layer: LayerSpec, d: Dataflow) -> LayerSpec:
    """The layer with both operands already in ``d``'s formats (no conversion charged)."""
    fa, fb = required_formats(d)
    return LayerSpec(convert(layer.a, fa), convert(layer.b, fb), layer.label)


def run_all(layer: LayerSpec, cfg: AcceleratorConfig, dataflows=DATAFLOW_ORDER) -> dict:
    return {d: run_layer(prepare(layer, d), d, cfg) for d in dataflows}


def argmin_dataflow(cycles: dict) -> Dataflow:
    """Fewest cycles; ties go to the earliest dataflow in ``DATAFLOW_ORDER``."""
    return min(cycles, key=lambda d: (cycles[d], DATAFLOW_ORDER.index(d)))


@dataclass(frozen=True)
class LayerStats:
    M: int
    N: int
    K: int
    density_a: float
    density_b: float
    size_a: int         # compressed bytes
    size_b: int

    @classmethod
    def of(cls, layer: LayerSpec, cfg: AcceleratorConfig) -> "LayerStats":
        a, b = layer.a, layer.b
        da = a.nnz / (a.n_rows * a.n_cols) if a.n_rows * a.n_cols else 0.0
        db = b.nnz / (b.n_rows * b.n_cols) if b.n_rows * b.n_cols else 0.0
        return cls(layer.M, layer.N, layer.K, da, db,
                   a.compressed_size_bytes(cfg.word_bytes, cfg.pointer_bytes),
                   b.compressed_size_bytes(cfg.word_bytes, cfg.pointer_bytes))


def heuristic_choose(stats: LayerStats, cfg: AcceleratorConfig,
                     incoming: MajorAxis | None = None) -> Dataflow:
    """Rule-based pick from layer statistics, without simulating.

    1. A stationary operand dense enough that most intersections are
       effectual -> IP, keeping the denser operand stationary.
    2. The streamed operand fits in the cache-fit fraction of the STR cache
       -> Gust.
    3. Otherwise -> OP, streaming the smaller operand.

    Gust is the only family whose M and N variants disagree on A's format; an
    incoming activation format pins it.
    """
    # M variants keep A stationary and stream B; N variants the other way round
    if max(stats.density_a, stats.density_b) >= cfg.heuristic_density_cut:
        return Dataflow.IP_M if stats.density_a >= stats.density_b else Dataflow.IP_N
    fit = cfg.heuristic_cache_fit * cfg.str_cache_bytes
    if incoming is None:
        gust = Dataflow.GUST_M if stats.size_b <= stats.size_a else Dataflow.GUST_N
    else:
        gust = Dataflow.GUST_M if incoming is ROW else Dataflow.GUST_N
    streamed = stats.size_b if gust.m_stationary else stats.size_a
    if streamed <= fit:
        return gust
    return Dataflow.OP_M if stats.size_b <= stats.size_a else Dataflow.OP_N


def select_dataflow(layer: LayerSpec, cfg: AcceleratorConfig,
                    strategy: SelectionStrategy) -> tuple[Dataflow, SimResult]:
    """Choose a dataflow for a stand-alone layer (operands free in any format)."""
    if strategy.kind is StrategyKind.FIXED:
        d = strategy.dataflow
    elif strategy.kind is StrategyKind.HEURISTIC:
        d = heuristic_choose(LayerStats.of(layer, cfg), cfg)
    else:
        results = run_all(layer, cfg)
        d = argmin_dataflow({k: r.cycles_total for k, r in results.items()})
        return d, results[d]
    return d, run_layer(prepare(layer, d), d, cfg)


# -- models -----------------------------------------------------------------

class Policy(Enum):
    FORBID_EC = "forbid-ec"
    ALLOW_EC = "allow-ec"


@dataclass
class LayerSource:
    kind: str                       # "file" or "synth"
    params: dict
    label: str = ""


@dataclass
class ModelSpec:
    layers: list
    policy: Policy = Policy.ALLOW_EC


def _parse_fields(tokens, lineno) -> dict:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise HarnessInputError(f"line {lineno}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_SYNTH_KEYS = {"M": int, "N": int, "K": int, "spA": float, "spB": float, "seed": int}


def _synth_params(fields: dict, lineno: int, required=("M", "N", "K", "spB")) -> dict:
    params = {}
    for k, v in fields.items():
        if k == "label":
            continue
        if k not in _SYNTH_KEYS:
            raise HarnessInputError(f"line {lineno}: unknown field {k!r}")
        try:
            params[k] = _SYNTH_KEYS[k](v)
        except ValueError as exc:
            raise HarnessInputError(f"line {lineno}: bad value for {k}: {v!r}") from exc
    missing = [k for k in required if k not in params]
    if missing:
        raise HarnessInputError(f"line {lineno}: missing {', '.join(missing)}")
    for k in ("spA", "spB"):
        if k in params and not 0.0 <= params[k] <= 1.0:
            raise HarnessInputError(f"line {lineno}: {k} must be in [0, 1]")
    for k in ("M", "N", "K"):
        if params[k] <= 0:
            raise HarnessInputError(f"line {lineno}: {k} must be positive")
    return params


def parse_model(text: str, base_dir: Path | str = ".") -> ModelSpec:
    """Parse a model file: ``file a=.. b=..`` / ``synth M= N= K= spA= spB= seed=`` lines."""
    base_dir = Path(base_dir)
    layers = []
    policy = Policy.ALLOW_EC
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "policy":
            if len(rest) != 1:
                raise HarnessInputError(f"line {lineno}: policy takes one value")
            try:
                policy = Policy(rest[0])
            except ValueError:
                raise HarnessInputError(f"line {lineno}: unknown policy {rest[0]!r}") from None
            continue
        fields = _parse_fields(rest, lineno)
        label = fields.get("label", "")
        if head == "file":
            unknown = set(fields) - {"a", "b", "label"}
            if unknown or "b" not in fields:
                raise HarnessInputError(f"line {lineno}: file layers take a=<path> b=<path>")
            params = {k: base_dir / v for k, v in fields.items() if k in ("a", "b")}
            layers.append(LayerSource("file", params, label))
        elif head == "synth":
            layers.append(LayerSource("synth", _synth_params(fields, lineno), label))
        else:
            raise HarnessInputError(f"line {lineno}: unknown directive {head!r}")
    if not layers:
        raise HarnessInputError("model has no layers")
    return ModelSpec(layers, policy)


def load_model(path) -> ModelSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise HarnessInputError(f"cannot read model {path}: {exc}") from exc
    return parse_model(text, Path(path).parent)


def _dense(n_rows, n_cols, sparsity, seed, real):
    return compress(gen_sparse(n_rows, n_cols, sparsity, seed, real=real))


def build_operands(model: ModelSpec, seed: int = 0, real: bool = False) -> list:
    """First activation plus every layer's weight matrix: ``(A0, [B_i], labels)``.

    A synthetic layer without a ``seed`` uses ``seed + index``.
    """
    a0 = None
    weights, labels = [], []
    rows = cols = None
    for i, src in enumerate(model.layers):
        label = src.label or f"L{i}"
        if src.kind == "file":
            if i == 0 and "a" not in src.params:
                raise HarnessInputError("the first layer needs an activation matrix a=")
            if i > 0 and "a" in src.params:
                raise HarnessInputError(f"layer {i}: only the first layer takes a=")
            a = read_matrix(src.params["a"]) if i == 0 else None
            b = read_matrix(src.params["b"])
        else:
            p = src.params
            s = p.get("seed", seed + i)
            if i == 0:
                if "spA" not in p:
                    raise HarnessInputError("the first synthetic layer needs spA=")
                a = _dense(p["M"], p["K"], p["spA"], s, real)
            else:
                a = None
                if p["M"] != rows or p["K"] != cols:
                    raise HarnessInputError(
                        f"layer {i}: M={p['M']} K={p['K']} does not chain onto the "
                        f"previous output ({rows}x{cols})")
            b = _dense(p["K"], p["N"], p["spB"], s + 1_000_003, real)
        if i == 0:
            a0 = a
            rows = a.n_rows
            cols = a.n_cols
        if b.n_rows != cols:
            raise HarnessInputError(
                f"layer {i}: weight has {b.n_rows} rows, activation has {cols} columns")
        cols = b.n_cols
        weights.append(b)
        labels.append(label)
    return a0, weights, labels


@dataclass
class LayerChoice:
    index: int
    label: str
    dataflow: Dataflow
    converted: bool
    result: SimResult       # includes the conversion charge when ``converted``


@dataclass
class PlanResult:
    name: str
    choices: list

    @property
    def total_cycles(self) -> int:
        return sum(c.result.cycles_total for c in self.choices)

    @property
    def conversions(self) -> int:
        return sum(c.result.ec_conversions for c in self.choices)


@dataclass
class ChainEvaluation:
    """Every layer of a chain simulated under all six dataflows."""

    labels: list
    activations: list           # A operand of each layer (as produced)
    weights: list               # B operand of each layer
    results: list               # per layer: {Dataflow: SimResult without conversion}
    cfg: AcceleratorConfig
    _ec: dict = field(default_factory=dict, repr=False)

    def ec_cycles(self, i: int, incoming: MajorAxis) -> int:
        """Cycles to convert layer ``i``'s activation out of ``incoming`` (computed lazily)."""
        key = (i, incoming)
        if key not in self._ec:
            self._ec[key] = conversion_cost([convert(self.activations[i], incoming)], self.cfg)[0]
        return self._ec[key]

    def layer_cost(self, i: int, incoming: MajorAxis | None, d: Dataflow,
                   policy: Policy) -> int | None:
        need = required_formats(d)[0]
        core = self.results[i][d].cycles_total
        if incoming is None or incoming is need:
            return core
        if policy is Policy.FORBID_EC:
            return None
        return core + self.ec_cycles(i, incoming)

    def choice(self, i: int, incoming: MajorAxis | None, d: Dataflow) -> LayerChoice:
        need = required_formats(d)[0]
        res = self.results[i][d]
        converted = incoming is not None and incoming is not need
        if converted:
            res = res.with_conversions([convert(self.activations[i], incoming)], self.cfg)
        return LayerChoice(i, self.labels[i], d, converted, res)


def evaluate_chain(a0: CompressedMatrix, weights: list, labels: list,
                   cfg: AcceleratorConfig) -> ChainEvaluation:
    results, activations = [], []
    a = a0
    for i, b in enumerate(weights):
        layer = LayerSpec(a, b, labels[i])
        per = run_all(layer, cfg)
        results.append(per)
        activations.append(a)
        # every dataflow computes the same values and pattern; carry one forward
        a = per[DATAFLOW_ORDER[0]].C
    return ChainEvaluation(labels, activations, list(weights), results, cfg)


def plan_chain(ev: ChainEvaluation, allowed, policy: Policy, name: str) -> PlanResult:
    """Cheapest per-layer assignment from ``allowed`` (dynamic program over formats).

    Ties break towards the earlier dataflow in ``DATAFLOW_ORDER``, layer by layer.
    """
    allowed = [d for d in DATAFLOW_ORDER if d in set(allowed)]
    n = len(ev.results)
    # best[i][fmt] = (cost of layers i.., choice) with layer i's activation arriving as fmt
    best: list = [dict() for _ in range(n + 1)]
    for fmt in (None, ROW, COL):
        best[n][fmt] = (0, None)
    for i in range(n - 1, -1, -1):
        incomings = (None,) if i == 0 else (ROW, COL)
        for fmt in incomings:
            top = None
            for d in allowed:
                cost = ev.layer_cost(i, fmt, d, policy)
                if cost is None:
                    continue
                tail = best[i + 1].get(output_format(d))
                if tail is None:
                    continue
                total = cost + tail[0]
                if top is None or total < top[0]:
                    top = (total, d)
            if top is not None:
                best[i][fmt] = top
    if None not in best[0]:
        raise UnsatisfiableChainError(
            f"{name}: no dataflow sequence avoids a forbidden conversion")
    choices = []
    fmt = None
    for i in range(n):
        d = best[i][fmt][1]
        choices.append(ev.choice(i, fmt, d))
        fmt = output_format(d)
    return PlanResult(name, choices)


def plan_greedy(ev: ChainEvaluation, pick, policy: Policy, name: str) -> PlanResult:
    """Layer-by-layer choice with ``pick(i, incoming) -> Dataflow``."""
    choices = []
    fmt = None
    for i in range(len(ev.results)):
        d = pick(i, fmt)
        if ev.layer_cost(i, fmt, d, policy) is None:
            raise UnsatisfiableChainError(
                f"{name}: layer {i} receives {fmt.format_name} but {d.cli_name} needs "
                f"{required_formats(d)[0].format_name} and conversions are forbidden")
        choices.append(ev.choice(i, fmt, d))
        fmt = output_format(d)
    return PlanResult(name, choices)


BASELINES = {
    "ip": ("inner-product", Family.IP),
    "op": ("outer-product", Family.OP),
    "gust": ("row-wise", Family.GUST),
}


def plan_strategy(ev: ChainEvaluation, strategy: SelectionStrategy, policy: Policy) -> PlanResult:
    if strategy.kind is StrategyKind.EXHAUSTIVE:
        return plan_chain(ev, DATAFLOW_ORDER, policy, "adaptive")
    if strategy.kind is StrategyKind.FIXED:
        d = strategy.dataflow
        return plan_greedy(ev, lambda i, fmt: d, policy, d.cli_name)
    cfg = ev.cfg

    def pick(i, fmt):
        stats = LayerStats.of(LayerSpec(ev.activations[i], ev.weights[i]), cfg)
        d = heuristic_choose(stats, cfg, fmt)
        if policy is Policy.FORBID_EC and ev.layer_cost(i, fmt, d, policy) is None:
            # Gust has a variant for either activation format
            d = Dataflow.GUST_M if fmt is ROW else Dataflow.GUST_N
        return d
    return plan_greedy(ev, pick, policy, "heuristic")


def plan_baseline(ev: ChainEvaluation, key: str, policy: Policy) -> PlanResult:
    _, family = BASELINES[key]
    allowed = [Dataflow.for_family(family, True), Dataflow.for_family(family, False)]
    return plan_chain(ev, allowed, policy, key)


@dataclass
class Report:
    model_policy: Policy
    evaluation: ChainEvaluation
    adaptive: PlanResult
    baselines: dict = field(default_factory=dict)

    @property
    def speedups(self) -> dict:
        return {k: p.total_cycles / self.adaptive.total_cycles if self.adaptive.total_cycles
                else 1.0 for k, p in self.baselines.items()}

    def records(self) -> list:
        ev = self.evaluation
        out = []
        for i, per in enumerate(ev.results):
            for d in DATAFLOW_ORDER:
                rec = {"kind": "layer_result", "layer": i}
                rec.update(per[d].to_record())
                out.append(rec)
        for plan in [self.adaptive, *self.baselines.values()]:
            for c in plan.choices:
                out.append({"kind": "choice", "plan": plan.name, "layer": c.index,
                            "label": c.label, "dataflow": c.dataflow.cli_name,
                            "converted": c.converted, "cycles_total": c.result.cycles_total,
                            "ec_cycles": c.result.ec_cycles})
        out.append({"kind": "summary", "policy": self.model_policy.value,
                    "adaptive_plan": self.adaptive.name,
                    "totals": {p.name: p.total_cycles
                               for p in [self.adaptive, *self.baselines.values()]},
                    "conversions": {p.name: p.conversions
                                    for p in [self.adaptive, *self.baselines.values()]},
                    "speedups": {k: round(v, 6) for k, v in self.speedups.items()}})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def summary_text(self) -> str:
        ev = self.evaluation
        plans = [self.adaptive, *self.baselines.values()]
        lines = [f"policy: {self.model_policy.value}"]
        head = f"{'layer':<10}" + "".join(f"{d.cli_name:>10}" for d in DATAFLOW_ORDER)
        head += "".join(f"{p.name:>14}" for p in plans)
        lines.append(head)
        for i, per in enumerate(ev.results):
            row = f"{ev.labels[i]:<10}" + "".join(f"{per[d].cycles_total:>10}"
                                                 for d in DATAFLOW_ORDER)
            for p in plans:
                c = p.choices[i]
                mark = "*" if c.converted else ""
                row += f"{c.dataflow.cli_name + mark:>14}"
            lines.append(row)
        lines.append("")
        lines.append(f"{'plan':<12}{'cycles':>14}{'EC':>6}{'speedup':>10}")
        sp = self.speedups
        for p in plans:
            s = "" if p is self.adaptive else f"{sp[p.name]:.3f}"
            lines.append(f"{p.name:<12}{p.total_cycles:>14}{p.conversions:>6}{s:>10}")
        lines.append("* = activation converted before the layer")
        return "\n".join(lines) + "\n"


def run_model(model: ModelSpec, cfg: AcceleratorConfig,
              strategy: SelectionStrategy | None = None, baselines=("ip", "op", "gust"),
              seed: int = 0, real: bool = False) -> Report:
    strategy = strategy or SelectionStrategy.exhaustive()
    a0, weights, labels = build_operands(model, seed, real)
    ev = evaluate_chain(a0, weights, labels, cfg)
    adaptive = plan_strategy(ev, strategy, model.policy)
    base = {}
    for key in baselines:
        if key not in BASELINES:
            raise HarnessInputError(f"unknown baseline {key!r}; expected ip, op or gust")
        base[key] = plan_baseline(ev, key, model.policy)
    return Report(model.policy, ev, adaptive, base)


# -- sweeps -----------------------------------------------------------------

GRID_KEYS = ("M", "N", "K", "spA", "spB", "seed")

# Desk-sized stand-ins for the evaluated DNN layers: (M, N, K, spA, spB).
STANDARD_SHAPES = (
    (256, 256, 1024, 0.98, 0.98),
    (2048, 64, 64, 0.98, 0.7),
    (512, 64, 512, 0.95, 0.9),
    (256, 256, 256, 0.95, 0.95),
    (512, 512, 128, 0.98, 0.98),
    (1024, 128, 256, 0.98, 0.95),
    (128, 1024, 256, 0.95, 0.98),
    (64, 2048, 64, 0.7, 0.98),
    (1024, 64, 512, 0.995, 0.5),
)
STANDARD_SEEDS = (0, 1, 2)


def standard_grid(base_seed: int = 0) -> list:
    return [dict(zip(GRID_KEYS, (*shape, base_seed + s)))
            for shape in STANDARD_SHAPES for s in STANDARD_SEEDS]


def parse_grid(text: str) -> list:
    """Grid file: ``point M= N= K= spA= spB= [seed=]`` lines and/or cartesian ``key=v1,v2`` lines."""
    points = []
    axes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("point"):
            fields = _parse_fields(line.split()[1:], lineno)
            p = _synth_params(fields, lineno, required=("M", "N", "K", "spA", "spB"))
            p.setdefault("seed", 0)
            points.append({k: p[k] for k in GRID_KEYS})
            continue
        fields = _parse_fields(line.split(), lineno)
        for k, v in fields.items():
            if k not in _SYNTH_KEYS:
                raise HarnessInputError(f"line {lineno}: unknown grid key {k!r}")
            try:
                axes[k] = [_SYNTH_KEYS[k](x) for x in v.split(",") if x.strip()]
            except ValueError as exc:
                raise HarnessInputError(f"line {lineno}: bad values for {k}: {v!r}") from exc
    if axes:
        axes.setdefault("seed", [0])
        missing = [k for k in GRID_KEYS if k not in axes]
        if missing:
            raise HarnessInputError(f"grid is missing {', '.join(missing)}")
        for combo in itertools.product(*(axes[k] for k in GRID_KEYS)):
            p = dict(zip(GRID_KEYS, combo))
            _synth_params({k: str(v) for k, v in p.items()}, 0,
                          required=("M", "N", "K", "spA", "spB"))
            points.append(p)
    if not points:
        raise HarnessInputError("grid is empty")
    return points


def load_grid(path) -> list:
    try:
        return parse_grid(Path(path).read_text())
    except OSError as exc:
        raise HarnessInputError(f"cannot read grid {path}: {exc}") from exc


def grid_layer(point: dict, real: bool = False) -> LayerSpec:
    a = _dense(point["M"], point["K"], point["spA"], point["seed"], real)
    b = _dense(point["K"], point["N"], point["spB"], point["seed"] + 1_000_003, real)
    return LayerSpec(a, b, "M{M}_N{N}_K{K}_a{spA}_b{spB}_s{seed}".format(**point))


@dataclass
class SweepPoint:
    point: dict
    results: dict           # Dataflow -> SimResult
    heuristic: Dataflow

    @property
    def cycles(self) -> dict:
        return {d: r.cycles_total for d, r in self.results.items()}

    @property
    def winner(self) -> Dataflow:
        return argmin_dataflow(self.cycles)


@dataclass
class SweepReport:
    points: list

    def winner_map(self) -> dict:
        out = {d: 0 for d in DATAFLOW_ORDER}
        for p in self.points:
            out[p.winner] += 1
        return out

    def family_winners(self) -> set:
        return {p.winner.family for p in self.points}

    def totals(self) -> dict:
        """Total cycles of the adaptive choice and of each fixed-family baseline."""
        out = {"adaptive": sum(p.cycles[p.winner] for p in self.points),
               "heuristic": sum(p.cycles[p.heuristic] for p in self.points)}
        for key, (_, fam) in BASELINES.items():
            ds = (Dataflow.for_family(fam, True), Dataflow.for_family(fam, False))
            out[key] = sum(min(p.cycles[d] for d in ds) for p in self.points)
        return out

    def geomean_speedups(self) -> dict:
        out = {}
        for key, (_, fam) in BASELINES.items():
            ds = (Dataflow.for_family(fam, True), Dataflow.for_family(fam, False))
            logs = [math.log(min(p.cycles[d] for d in ds) / max(p.cycles[p.winner], 1))
                    for p in self.points if p.cycles[p.winner] > 0]
            out[key] = math.exp(sum(logs) / len(logs)) if logs else 1.0
        return out

    def records(self) -> list:
        out = []
        for i, p in enumerate(self.points):
            out.append({"kind": "sweep_point", "index": i, "point": p.point,
                        "cycles": {d.cli_name: c for d, c in p.cycles.items()},
                        "winner": p.winner.cli_name, "heuristic": p.heuristic.cli_name})
        out.append({"kind": "sweep_summary",
                    "winners": {d.cli_name: n for d, n in self.winner_map().items()},
                    "totals": self.totals(),
                    "geomean_speedups": {k: round(v, 6)
                                         for k, v in self.geomean_speedups().items()}})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def summary_text(self) -> str:
        lines = [f"{'point':<36}" + "".join(f"{d.cli_name:>10}" for d in DATAFLOW_ORDER)
                 + f"{'winner':>10}{'heur':>10}"]
        for p in self.points:
            lbl = "M{M} N{N} K{K} a{spA} b{spB} s{seed}".format(**p.point)
            lines.append(f"{lbl:<36}" + "".join(f"{p.cycles[d]:>10}" for d in DATAFLOW_ORDER)
                         + f"{p.winner.cli_name:>10}{p.heuristic.cli_name:>10}")
        lines.append("")
        lines.append("winners: " + ", ".join(f"{d.cli_name}={n}"
                                              for d, n in self.winner_map().items()))
        gm = self.geomean_speedups()
        tot = self.totals()
        lines.append("total cycles: " + ", ".join(f"{k}={v}" for k, v in tot.items()))
        lines.append("geomean speedup of adaptive vs: "
                     + ", ".join(f"{k}={v:.3f}" for k, v in gm.items()))
        return "\n".join(lines) + "\n"


def sweep(grid: list, cfg: AcceleratorConfig, real: bool = False) -> SweepReport:
    if not grid:
        raise HarnessInputError("grid is empty")
    points = []
    for point in grid:
        layer = grid_layer(point, real)
        results = run_all(layer, cfg)
        h = heuristic_choose(LayerStats.of(layer, cfg), cfg)
        points.append(SweepPoint(dict(point), results, h))
    return SweepReport(points)
