"""Command-line entry point: ``run``, ``sweep`` and ``compare``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, desk_config, load_config
from .engine import LayerSpec, SimulationError
from .fabric import FabricError
from .harness import (HarnessInputError, SelectionStrategy, load_grid, load_model, run_model,
                      select_dataflow, standard_grid, sweep)
from .memory import MemoryError_
from .mmio import MatrixFormatError, read_matrix, write_matrix
from .sparse import StructuralError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_INVARIANT = 4


def _config(args):
    if args.config is None and getattr(args, "desk", False):
        return desk_config()
    return load_config(args.config)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _config(args)
    real = True if args.value_mode == "real" else None      # None: as stored
    a = read_matrix(args.a, real=real)
    b = read_matrix(args.b, real=real)
    layer = LayerSpec(a, b, Path(args.a).stem)
    d, result = select_dataflow(layer, cfg, SelectionStrategy.parse(args.dataflow))
    rec = result.to_record()
    _emit(json.dumps(rec, sort_keys=True) + "\n", args.out)
    if args.out:
        print(f"{d.cli_name}: {result.cycles_total} cycles "
              f"(stationary {result.cycles['stationary']}, streaming "
              f"{result.cycles['streaming']}, merging {result.cycles['merging']})")
    if args.c_out:
        write_matrix(args.c_out, result.C)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    grid = load_grid(args.grid) if args.grid else standard_grid(args.seed)
    report = sweep(grid, cfg, real=args.value_mode == "real")
    if args.out:
        Path(args.out).write_text(report.to_jsonl())
    sys.stdout.write(report.summary_text())
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    model = load_model(args.model)
    baselines = [b.strip() for b in args.baselines.split(",") if b.strip()]
    report = run_model(model, cfg, SelectionStrategy.parse(args.strategy), baselines,
                       seed=args.seed, real=args.value_mode == "real")
    if args.out:
        Path(args.out).write_text(report.to_jsonl())
    sys.stdout.write(report.summary_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value accelerator configuration file")
    common.add_argument("--desk", action="store_true",
                        help="use the desk-scaled machine when no --config is given")
    common.add_argument("--seed", type=int, default=0, help="base seed for synthetic operands")
    common.add_argument("--value-mode", choices=("int", "real"), default="int")
    common.add_argument("--out", help="write the JSON Lines report here")

    p = argparse.ArgumentParser(prog="spmspm-sim",
                                description="Cycle-level SpMSpM accelerator simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="simulate one layer")
    r.add_argument("--a", required=True, help="activation matrix (Matrix Market or dense text)")
    r.add_argument("--b", required=True, help="weight matrix")
    r.add_argument("--dataflow", default="auto",
                   help="ip-m, op-m, gust-m, ip-n, op-n, gust-n, auto or heuristic")
    r.add_argument("--c-out", help="write the output matrix (Matrix Market)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="all dataflows over a grid of layers")
    s.add_argument("--grid", help="grid file; the built-in 27-point grid when omitted")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", parents=[common],
                       help="adaptive dataflow choice against fixed baselines on a model")
    c.add_argument("--model", required=True)
    c.add_argument("--baselines", default="ip,op,gust")
    c.add_argument("--strategy", default="auto", help="auto, heuristic or a dataflow name")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HarnessInputError, MatrixFormatError, StructuralError, OSError,
            OverflowError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SimulationError, FabricError, MemoryError_, AssertionError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
