"""Pipeline configuration: dataclass sections loaded from a key=value text file.

The file is INI-style; each section maps onto one dataclass below:

    [gen]       cells, terminals, avg_net_degree, utilization
    [hier]      max_part_cells, epsilon, min_part_cells
    [train]     lr, lr_decay, weight_decay, epochs, lambda_theta, circuits, cells
    [teach]     FinetuneConfig fields, used for teacher runs from random init
    [finetune]  FinetuneConfig fields, used after inductive placement
    [metrics]   m, rc, rc_seed, density_grid
    [run]       seed, checkpoint

Values are Python literals (numbers, None, tuples); anything else is a string.
"""

from __future__ import annotations

import ast
import configparser
import zlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .finetune import FinetuneConfig
from .metrics import MetricsConfig

# warm starts from an inductive placement are already wire-compact, so the
# density weight starts higher than for random starts (chosen on circuits
# disjoint from the acceptance set)
WARM_START_LAMBDA = 0.02
# teachers run to a fixed point rather than stopping on overflow
TEACH_ITERATIONS = 300


@dataclass
class GenConfig:
    cells: int = 500
    terminals: int | None = None     # None: about 4 * sqrt(cells)
    avg_net_degree: float = 3.5
    utilization: float = 0.5

    def n_terminals(self) -> int:
        if self.terminals is not None:
            return int(self.terminals)
        return max(4, int(round(4 * np.sqrt(self.cells))))


@dataclass
class HierConfig:
    max_part_cells: int = 2048
    epsilon: float = 0.1
    min_part_cells: int = 2

    def __post_init__(self):
        if self.max_part_cells < 2:
            raise ValueError("max_part_cells must be at least 2")
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must be in [0, 1)")


@dataclass
class TrainSection:
    lr: float = 3e-3
    lr_decay: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 100
    lambda_theta: float = 0.1
    circuits: int = 8            # synthetic training circuits when no checkpoint is given
    cells: int = 500

    def __post_init__(self):
        if not self.lr > 0 or self.epochs < 0 or self.circuits < 1 or self.cells < 2:
            raise ValueError("invalid [train] settings")


@dataclass
class RunConfig:
    seed: int = 0
    checkpoint: str | None = None


@dataclass
class PipelineConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    hier: HierConfig = field(default_factory=HierConfig)
    train: TrainSection = field(default_factory=TrainSection)
    teach: FinetuneConfig = field(
        default_factory=lambda: FinetuneConfig(max_iterations=TEACH_ITERATIONS, stop_overflow=0.0))
    finetune: FinetuneConfig = field(
        default_factory=lambda: FinetuneConfig(lambda_d_init=WARM_START_LAMBDA))
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    run: RunConfig = field(default_factory=RunConfig)


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _update(section, items: dict, where: str):
    known = {f.name for f in fields(section)}
    for key in items:
        if key not in known:
            raise ValueError(f"unknown key {key!r} in [{where}]")
    return replace(section, **{k: _value(v) if isinstance(v, str) else v for k, v in items.items()})


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a config file (optional) and apply {section: {key: value}} overrides."""
    cfg = PipelineConfig()
    sections = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        with open(path) as fh:
            parser.read_file(fh)
        for name in parser.sections():
            sections[name] = dict(parser.items(name))
    for name, items in (overrides or {}).items():
        sections.setdefault(name, {}).update(items)
    for name, items in sections.items():
        if not hasattr(cfg, name):
            raise ValueError(f"unknown config section [{name}]")
        setattr(cfg, name, _update(getattr(cfg, name), items, name))
    return cfg


def stage_seed(root: int, stage: str) -> int:
    """Independent per-stage seed derived from the root seed and the stage name."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0])
