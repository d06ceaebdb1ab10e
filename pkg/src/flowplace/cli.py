"""Command line: flowplace <subcommand> [options].

Exit codes: 0 ok, 2 usage, 3 input validation, 4 numeric failure, 5 I/O.
Failures print one line to stderr:

    error stage=<stage> kind=<usage|validation|numeric|io> msg=<text>
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import pipeline as pipe
from .bookshelf import parse_bookshelf, read_placement, write_bookshelf, write_placement
from .cellflow import build_cellflow, mean_path_length, write_flow
from .codec import decode, encode, max_relative_error, write_encoding
from .config import PipelineConfig, load_config, stage_seed
from .finetune import finetune, random_placement
from .hier import dump_hierarchy
from .metrics import evaluate, summary_table, validate_report
from .netlist import NetlistError, Placement
from .tpgnn import centered, load_params, save_params

logger = logging.getLogger("flowplace")

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 2, 3, 4, 5
ROUNDTRIP_TOL = 1e-6


class CliError(Exception):
    def __init__(self, kind, msg, code):
        super().__init__(msg)
        self.kind, self.code = kind, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


_stage = ["cli"]


def _enter(stage: str):
    _stage[0] = stage
    logger.info("stage %s", stage)


# config plumbing: flags default to None and override the file when given

FLAG_MAP = {
    "cells": ("gen", "cells"), "terminals": ("gen", "terminals"),
    "max_part_cells": ("hier", "max_part_cells"), "epsilon": ("hier", "epsilon"),
    "epochs": ("train", "epochs"), "lr": ("train", "lr"),
    "train_circuits": ("train", "circuits"), "train_cells": ("train", "cells"),
    "iterations": ("finetune", "max_iterations"), "learning_rate": ("finetune", "learning_rate"),
    "lambda_d": ("finetune", "lambda_d_init"), "grid_m": ("finetune", "grid_m"),
    "teach_iterations": ("teach", "max_iterations"),
    "seed": ("run", "seed"), "ckpt": ("run", "checkpoint"),
    "bins": ("metrics", "m"), "rc": ("metrics", "rc"),
}


def _config(args) -> PipelineConfig:
    over = {}
    for flag, (sec, key) in FLAG_MAP.items():
        v = getattr(args, flag, None)
        if v is not None:
            over.setdefault(sec, {})[key] = v
    rigid = getattr(args, "rigid", None)
    if rigid is not None:
        over.setdefault("finetune", {})["rigid"] = tuple(rigid)
        over.setdefault("teach", {})["rigid"] = tuple(rigid)
    return load_config(getattr(args, "config", None), over)


def _out(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(args):
    _enter("load")
    netlist, pl = parse_bookshelf(args.aux)
    return netlist, pl


def _placement(netlist, path, fallback=None):
    if path is not None:
        return read_placement(netlist, path)
    if fallback is None:
        raise CliError("usage", "a placement file is required (--pl)", EXIT_USAGE)
    return fallback


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# subcommands


def cmd_gen(args):
    cfg = _config(args)
    _enter("gen")
    nl = pipe.generate(cfg.gen, stage_seed(cfg.run.seed, "gen"))
    aux = write_bookshelf(nl, _out(args), args.name)
    print(f"wrote {aux} cells={nl.n_cells} nets={nl.n_nets} pins={nl.n_pins}")


def cmd_partition(args):
    cfg = _config(args)
    nl, _ = _load(args)
    _enter("partition")
    hier = pipe.hierarchy(nl, cfg.hier, stage_seed(cfg.run.seed, "partition"))
    out = _out(args)
    part = np.zeros(nl.n_cells, dtype=np.int64)
    for b, cells in enumerate(hier.branch_origin):
        part[cells] = b + 1
    (out / "partition.txt").write_text(
        "".join(f"{n} {p}\n" for n, p in zip(nl.cell_names, part)))
    if args.dump_hier:
        dump_hierarchy(hier, out / "hier")
    print(f"parts={hier.n_branches} eta={hier.eta:.6f} root_cells={hier.root.n_cells}")


def cmd_flow(args):
    nl, _ = _load(args)
    _enter("flow")
    flow = build_cellflow(nl)
    if args.dump_flow:
        write_flow(flow, nl, _out(args) / "flow.txt")
    print(f"edges={flow.n_edges} pins={nl.n_pins} omega={mean_path_length(flow, nl):.6f}")


def cmd_roundtrip(args):
    cfg = _config(args)
    nl, pl = _load(args)
    if args.pl is not None or not (args.use_aux_pl and pl is not None):
        pl = _placement(nl, args.pl, random_placement(nl, stage_seed(cfg.run.seed, "roundtrip")))
    _enter("roundtrip")
    gc, c = centered(nl)
    flow = build_cellflow(gc)
    local = Placement(pl.xy - c)
    enc = encode(gc, flow, local)
    err = max_relative_error(local, decode(gc, flow, enc))
    if args.out:
        write_encoding(enc, _out(args) / "encoding.txt")
    print(f"max_error={err:.3e}")
    if not err < ROUNDTRIP_TOL:
        raise CliError("numeric", f"roundtrip error {err:.3e} exceeds {ROUNDTRIP_TOL}", EXIT_NUMERIC)


def cmd_teach(args):
    cfg = _config(args)
    nl, _ = _load(args)
    _enter("teach")
    out = _out(args)
    res = pipe.teach(nl, cfg.teach, stage_seed(cfg.run.seed, "teach"), out / "teach_history.jsonl")
    write_placement(nl, res.placement, out / "teacher.pl")
    h = res.history[-1]
    print(f"iterations={h['iteration']} hpwl={h['hpwl']:.4f} overflow={h['overflow']:.4f}")


def cmd_train(args):
    cfg = _config(args)
    out = _out(args)
    if args.pair:
        _enter("load")
        pairs = []
        for aux, pl in args.pair:
            nl, _ = parse_bookshelf(aux)
            pairs.append((nl, read_placement(nl, pl)))
        _enter("train")
        res = pipe.train_on(pairs, cfg.hier, pipe.train_config(cfg.train, stage_seed(cfg.run.seed, "train")),
                            stage_seed(cfg.run.seed, "train-partition"))
    else:
        _enter("train")
        res = pipe.synthetic_training(cfg)
    save_params(res.params, out / "model.ckpt")
    (out / "train_loss.txt").write_text("".join(f"{v!r}\n" for v in res.history))
    last = res.history[-1] if res.history else res.initial_loss
    print(f"initial_loss={res.initial_loss:.6f} final_loss={last:.6f}")


def _params(cfg):
    if cfg.run.checkpoint:
        _enter("load")
        return load_params(cfg.run.checkpoint)
    raise CliError("usage", "a checkpoint is required (--ckpt)", EXIT_USAGE)


def cmd_place(args):
    cfg = _config(args)
    nl, _ = _load(args)
    params = _params(cfg)
    _enter("place")
    res = pipe.place(nl, params, cfg.hier, stage_seed(cfg.run.seed, "partition"))
    write_placement(nl, res.placement, _out(args) / "inductive.pl")
    print(f"parts={res.hier.n_branches} seconds={sum(res.seconds.values()):.3f}")


def cmd_finetune(args):
    cfg = _config(args)
    nl, pl = _load(args)
    init = _placement(nl, args.pl)
    _enter("finetune")
    out = _out(args)
    ft = cfg.teach if args.from_random else cfg.finetune
    res = finetune(nl, init, ft, out / "finetune_history.jsonl")
    write_placement(nl, res.placement, out / "finetuned.pl")
    h = res.history[-1]
    print(f"iterations={h['iteration']} hpwl={h['hpwl']:.4f} overflow={h['overflow']:.4f}")


def cmd_eval(args):
    cfg = _config(args)
    nl, pl = _load(args)
    pl = _placement(nl, args.pl, pl)
    _enter("eval")
    report = evaluate(nl, pl, cfg.metrics, seed=cfg.run.seed)
    validate_report(report)
    if args.out:
        _write_json(_out(args) / "report.json", report)
    print(summary_table(report))


def cmd_pipeline(args):
    cfg = _config(args)
    out = _out(args)
    root = cfg.run.seed
    t = {}
    if args.aux:
        nl, _ = _load(args)
    else:
        _enter("gen")
        s = time.perf_counter()
        nl = pipe.generate(cfg.gen, stage_seed(root, "gen"))
        write_bookshelf(nl, out, args.name)
        t["gen"] = time.perf_counter() - s

    s = time.perf_counter()
    if cfg.run.checkpoint and Path(cfg.run.checkpoint).exists():
        _enter("load")
        params = load_params(cfg.run.checkpoint)
    else:
        _enter("train")
        params = pipe.synthetic_training(cfg).params
        save_params(params, out / "model.ckpt")
    t["train_or_load"] = time.perf_counter() - s

    _enter("place")
    placed = pipe.place(nl, params, cfg.hier, stage_seed(root, "partition"))
    t.update(placed.seconds)
    write_placement(nl, placed.placement, out / "inductive.pl")

    _enter("finetune")
    s = time.perf_counter()
    res = finetune(nl, placed.placement, cfg.finetune, out / "finetune_history.jsonl")
    t["finetune"] = time.perf_counter() - s
    write_placement(nl, res.placement, out / "finetuned.pl")

    _enter("eval")
    before = evaluate(nl, placed.placement, cfg.metrics, eta=placed.hier.eta, seed=root)
    report = evaluate(nl, res.placement, cfg.metrics, runtime=t, eta=placed.hier.eta, seed=root)
    report["inductive_hpwl"] = before["hpwl"]
    report["inductive_tof"] = before["tof"]
    report["finetune_iterations"] = res.history[-1]["iteration"]
    validate_report(report)
    _write_json(out / "report.json", report)
    print(summary_table(report))


# parser


def _common(p, aux=True, out=True, aux_required=True):
    if aux:
        p.add_argument("--aux", required=aux_required, help="Bookshelf .aux file of the design")
    if out:
        p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, help="root seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="flowplace", description="Cell-flow GNN global placement pipeline.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic Bookshelf design")
    _common(p, aux=False)
    p.add_argument("--cells", type=int, help="movable cells (default 500)")
    p.add_argument("--terminals", type=int, help="terminal pads (default 4*sqrt(cells))")
    p.add_argument("--name", default="design", help="file stem (default design)")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("partition", help="partition and build the hierarchical netlist")
    _common(p)
    p.add_argument("--max-part-cells", type=int, help="largest branch (default 2048)")
    p.add_argument("--epsilon", type=float, help="bisection imbalance (default 0.1)")
    p.add_argument("--dump-hier", action="store_true", help="write root and branch designs")
    p.set_defaults(fn=cmd_partition)

    p = sub.add_parser("flow", help="build the cell-flow and print its statistics")
    _common(p, out=False)
    p.add_argument("--out", help="output directory for --dump-flow")
    p.add_argument("--dump-flow", action="store_true", help="write flow.txt (src dst net income)")
    p.set_defaults(fn=cmd_flow)

    p = sub.add_parser("roundtrip", help="encode then decode a placement; print the max error")
    _common(p, out=False)
    p.add_argument("--out", help="write encoding.txt here")
    p.add_argument("--pl", help="placement to encode (default: seeded random placement)")
    p.add_argument("--use-aux-pl", action="store_true", help="encode the .pl named in the .aux")
    p.set_defaults(fn=cmd_roundtrip)

    p = sub.add_parser("teach", help="teacher placement by fine-tuning from random init")
    _common(p)
    p.add_argument("--teach-iterations", type=int, help="iteration cap (default 300)")
    p.add_argument("--rigid", type=float, nargs=3, metavar=("THETA", "DX", "DY"),
                   help="initial rotation (degrees) and shift; default: auto-fit")
    p.set_defaults(fn=cmd_teach)

    p = sub.add_parser("train", help="train the placement GNN")
    _common(p, aux=False)
    p.add_argument("--pair", nargs=2, action="append", metavar=("AUX", "PL"),
                   help="training design and teacher placement; repeatable. "
                        "Without pairs, synthetic circuits are generated and taught.")
    p.add_argument("--epochs", type=int, help="training epochs (default 100)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 3e-3)")
    p.add_argument("--train-circuits", type=int, help="synthetic training circuits (default 8)")
    p.add_argument("--train-cells", type=int, help="cells per training circuit (default 500)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("place", help="one-shot inductive placement with a trained model")
    _common(p)
    p.add_argument("--ckpt", help="model checkpoint")
    p.add_argument("--max-part-cells", type=int, help="largest branch (default 2048)")
    p.set_defaults(fn=cmd_place)

    p = sub.add_parser("finetune", help="fine-tune a placement")
    _common(p)
    p.add_argument("--pl", required=True, help="initial placement")
    p.add_argument("--iterations", type=int, help="iteration cap (default 1000)")
    p.add_argument("--learning-rate", type=float, help="step in bin widths (default 1.0)")
    p.add_argument("--lambda-d", type=float, help="initial density weight (relative)")
    p.add_argument("--grid-m", type=int, help="density grid side, power of two >= 16")
    p.add_argument("--rigid", type=float, nargs=3, metavar=("THETA", "DX", "DY"),
                   help="initial rotation (degrees) and shift; default: auto-fit")
    p.add_argument("--from-random", action="store_true",
                   help="use the [teach] settings meant for random starts")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a placement and print a report")
    _common(p, out=False)
    p.add_argument("--out", help="write report.json here")
    p.add_argument("--pl", help="placement (default: the .pl named in the .aux)")
    p.add_argument("--bins", type=int, help="congestion grid side (default 64)")
    p.add_argument("--rc", type=float, help="bin capacity (default: calibrated)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pipeline", help="train-or-load, place, fine-tune, evaluate")
    _common(p, aux_required=False)
    p.add_argument("--cells", type=int, help="generate a design of this size when --aux is absent")
    p.add_argument("--terminals", type=int, help="terminal pads (default 4*sqrt(cells))")
    p.add_argument("--name", default="design", help="file stem (default design)")
    p.add_argument("--ckpt", help="checkpoint to load; trained from scratch when missing")
    p.add_argument("--epochs", type=int, help="training epochs (default 100)")
    p.add_argument("--train-circuits", type=int, help="synthetic training circuits (default 8)")
    p.add_argument("--train-cells", type=int, help="cells per training circuit (default 500)")
    p.add_argument("--iterations", type=int, help="fine-tune iteration cap (default 1000)")
    p.add_argument("--max-part-cells", type=int, help="largest branch (default 2048)")
    p.set_defaults(fn=cmd_pipeline)
    return ap


def _classify(exc):
    if isinstance(exc, CliError):
        return exc.kind, exc.code
    if isinstance(exc, (FloatingPointError, ArithmeticError, np.linalg.LinAlgError)):
        return "numeric", EXIT_NUMERIC
    if isinstance(exc, (NetlistError, ValueError, KeyError, IndexError)):
        return "validation", EXIT_VALIDATION
    if isinstance(exc, OSError):
        return "io", EXIT_IO
    return None, None


def main(argv=None) -> int:
    _stage[0] = "cli"
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s %(levelname)s %(message)s")
        args.fn(args)
        return 0
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        kind, code = _classify(exc)
        if kind is None:
            raise
        msg = " ".join(str(exc).split())
        print(f"error stage={_stage[0]} kind={kind} msg={msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
