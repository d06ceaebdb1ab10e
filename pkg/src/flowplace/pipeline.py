"""Stage functions shared by the command line, scripts and tests.

Every stage takes its seed from the root seed via ``stage_seed`` so a full
pipeline run and the equivalent sequence of single stages agree exactly.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

from .config import GenConfig, HierConfig, PipelineConfig, TrainSection, stage_seed
from .finetune import FinetuneConfig, FinetuneResult, finetune, random_placement
from .hier import HierNetlist, build_hierarchy
from .netlist import Netlist, Placement
from .partition import partition, trivial_partition
from .synth import SynthSpec, generate_synthetic
from .tpgnn import TpgnnParams, TrainConfig, TrainResult, inductive_place, samples_from_hierarchy, train

logger = logging.getLogger(__name__)


def generate(gen: GenConfig, seed: int) -> Netlist:
    return generate_synthetic(SynthSpec(gen.cells, gen.n_terminals(), gen.avg_net_degree,
                                        seed=seed, utilization=gen.utilization))


def hierarchy(netlist: Netlist, hcfg: HierConfig, seed: int) -> HierNetlist:
    """Flat hierarchy for small circuits, partitioned once movable cells exceed the limit."""
    n_mov = len(netlist.movable_ids)
    if n_mov <= hcfg.max_part_cells:
        return build_hierarchy(netlist, trivial_partition(netlist))
    k = math.ceil(n_mov / hcfg.max_part_cells)
    part = partition(netlist, target_parts=k, max_part_cells=hcfg.max_part_cells,
                     epsilon=hcfg.epsilon, min_part_cells=hcfg.min_part_cells, seed=seed)
    return build_hierarchy(netlist, part)


def teach(netlist: Netlist, cfg: FinetuneConfig, seed: int, history_path=None) -> FinetuneResult:
    """Teacher placement: fine-tuning from a uniform random start."""
    return finetune(netlist, random_placement(netlist, seed), cfg, history_path)


def train_config(t: TrainSection, seed: int) -> TrainConfig:
    return TrainConfig(lr=t.lr, lr_decay=t.lr_decay, weight_decay=t.weight_decay,
                       epochs=t.epochs, lambda_theta=t.lambda_theta, seed=seed)


def train_on(pairs, hcfg: HierConfig, tcfg: TrainConfig, seed: int) -> TrainResult:
    """Train on (netlist, teacher placement) pairs."""
    samples = []
    for k, (nl, pl) in enumerate(pairs):
        samples += samples_from_hierarchy(hierarchy(nl, hcfg, seed + k), pl)
    return train(samples, tcfg)


def synthetic_training(cfg: PipelineConfig) -> TrainResult:
    """Generate training circuits, teach them, and train a model from scratch."""
    root = cfg.run.seed
    pairs = []
    for k in range(cfg.train.circuits):
        nl = generate(GenConfig(cfg.train.cells, None, cfg.gen.avg_net_degree,
                                cfg.gen.utilization), stage_seed(root, f"train-gen-{k}"))
        res = teach(nl, cfg.teach, stage_seed(root, f"train-teach-{k}"))
        pairs.append((nl, res.placement))
    return train_on(pairs, cfg.hier, train_config(cfg.train, stage_seed(root, "train")),
                    stage_seed(root, "train-partition"))


@dataclass
class PlaceResult:
    placement: Placement
    hier: HierNetlist
    seconds: dict


def place(netlist: Netlist, params: TpgnnParams, hcfg: HierConfig, seed: int) -> PlaceResult:
    t0 = time.perf_counter()
    hier = hierarchy(netlist, hcfg, seed)
    t1 = time.perf_counter()
    pl = inductive_place(hier, params)
    t2 = time.perf_counter()
    return PlaceResult(pl, hier, {"hierarchy": t1 - t0, "inductive": t2 - t1})
