"""Circuit-adaptive fine-tuning: WA wirelength plus electrostatic density.

Cell centers follow preconditioned Nesterov steps on L_W + lambda_D * L_D
with the multiplicative lambda_D schedule, optionally after a rigid
rotation and translation of the starting placement.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .density import auto_grid, check_grid, density_field, overflow_ratio
from .netlist import Netlist, Placement, clamp_to_core
from .wirelength import hpwl, wa_wirelength


# the schedule divisor suits circuits whose random-start HPWL is near HPWL_SCALE;
# other circuits get it rescaled in proportion
HPWL_DIVISOR = 350000.0
HPWL_SCALE = 1e7


@dataclass
class FinetuneConfig:
    learning_rate: float = 1.0          # step in bin widths per unit preconditioned gradient
    lambda_d_init: float = 1e-2         # |lambda_D grad L_D| / |grad L_W| at a random placement
    max_iterations: int = 1000
    upper_pcof: float = 1.05
    gamma: float | None = None          # None: 1 / (0.05 * core width)
    grid_m: int | None = None           # None: auto from cell count
    rigid: tuple[float, float, float] | None = None   # (theta deg, dx, dy); None: auto-fit
    stop_overflow: float = 0.1          # 0 disables the early stop
    min_iterations: int = 0             # no early stop before this many iterations
    momentum: float = 0.9
    target_density: float = 1.0
    raw_hpwl_divisor: bool = False      # use 350000 as is, not rescaled by random-placement HPWL
    lambda_d: float | None = None       # absolute starting weight, e.g. to resume a run

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.grid_m is not None:
            check_grid(self.grid_m)
        if self.max_iterations < 0 or self.min_iterations < 0:
            raise ValueError("iteration counts must be non-negative")
        if self.lambda_d is not None and not self.lambda_d > 0:
            raise ValueError("lambda_d must be positive")
        if not self.lambda_d_init > 0 or not self.upper_pcof > 0:
            raise ValueError("lambda_d_init and upper_pcof must be positive")
        if self.rigid is not None:
            self.rigid = tuple(float(v) for v in self.rigid)
            if len(self.rigid) != 3 or not all(map(math.isfinite, self.rigid)):
                raise ValueError("rigid must be three finite numbers")


@dataclass
class FinetuneResult:
    placement: Placement
    history: list[dict] = field(default_factory=list)
    rigid: tuple[float, float, float] = (0.0, 0.0, 0.0)
    stopped_early: bool = False

    def iterations_to(self, hpwl_target: float, overflow_target: float = math.inf):
        """First recorded iteration with HPWL and overflow at or below the targets."""
        for rec in self.history:
            if rec["hpwl"] <= hpwl_target and rec["overflow"] <= overflow_target:
                return rec["iteration"]
        return None


def lambda_update(lambda_d: float, delta_hpwl: float, epochs: int,
                  upper_pcof: float = 1.05, divisor: float = HPWL_DIVISOR) -> float:
    """Multiplicative density-weight schedule.

    mu = p * max(0.999^epochs, 0.98) while HPWL improves, else p * p^(-dHPWL / divisor).
    """
    if delta_hpwl < 0:
        mu = upper_pcof * max(0.999 ** epochs, 0.98)
    else:
        mu = upper_pcof * upper_pcof ** (-delta_hpwl / divisor)
    return lambda_d * mu


def core_center(netlist: Netlist) -> np.ndarray:
    x0, y0, x1, y1 = netlist.core
    return np.array([(x0 + x1) / 2, (y0 + y1) / 2])


def rigid_transform(netlist: Netlist, placement: Placement, theta_degrees: float,
                    dx: float, dy: float, center=None) -> Placement:
    """Rotate movable cells about the center, translate by (dx, dy), clamp to the core."""
    c = core_center(netlist) if center is None else np.asarray(center, dtype=float)
    t = math.radians(theta_degrees)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    xy = placement.xy.copy()
    mov = netlist.movable_ids
    xy[mov] = (xy[mov] - c) @ rot.T + c + np.array([dx, dy])
    xy = clamp_to_core(netlist, xy)
    xy[netlist.terminal_ids] = placement.xy[netlist.terminal_ids]
    return Placement(xy)


def fit_rigid(netlist: Netlist, placement: Placement, n_angles: int = 12):
    """HPWL-minimizing angle among n_angles, then an optional centering translation."""
    best = None
    for k in range(n_angles):
        theta = 360.0 * k / n_angles
        h = hpwl(netlist, rigid_transform(netlist, placement, theta, 0.0, 0.0))
        if best is None or h < best[0] - 1e-12:
            best = (h, theta)
    h0, theta = best
    rotated = rigid_transform(netlist, placement, theta, 0.0, 0.0)
    mov = netlist.movable_ids
    shift = core_center(netlist) - rotated.xy[mov].mean(axis=0) if len(mov) else np.zeros(2)
    if hpwl(netlist, rigid_transform(netlist, placement, theta, *shift)) < h0:
        return theta, float(shift[0]), float(shift[1])
    return theta, 0.0, 0.0


def random_placement(netlist: Netlist, seed: int = 0) -> Placement:
    """Movable cells uniform over the core; terminals at their fixed positions."""
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = netlist.core
    xy = netlist.fixed_xy.copy()
    mov = netlist.movable_ids
    xy[mov] = rng.uniform([x0, y0], [x1, y1], size=(len(mov), 2))
    return Placement(clamp_to_core(netlist, xy))


def resolve(netlist: Netlist, cfg: FinetuneConfig):
    x0, _, x1, _ = netlist.core
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / (0.05 * (x1 - x0))
    m = cfg.grid_m if cfg.grid_m is not None else auto_grid(len(netlist.movable_ids))
    return gamma, m


def finetune(netlist: Netlist, init: Placement, cfg: FinetuneConfig | None = None,
             history_path=None) -> FinetuneResult:
    cfg = cfg or FinetuneConfig()
    gamma, m = resolve(netlist, cfg)
    init.check(netlist)
    rigid = cfg.rigid if cfg.rigid is not None else fit_rigid(netlist, init)
    x = rigid_transform(netlist, init, *rigid).xy
    mov = netlist.movable_ids
    term = netlist.terminal_ids
    term_xy = init.xy[term].copy()
    bin_w = (netlist.core[2] - netlist.core[0]) / m
    pins = np.bincount(netlist.pin_cell, minlength=netlist.n_cells).astype(float)

    def objective(xy):
        p = Placement(xy)
        lw, gw = wa_wirelength(netlist, p, gamma)
        _, ld, gd = density_field(netlist, p, m, with_field=False)
        return lw, gw, ld, gd

    # lambda_D and the schedule scale come from a reference random placement,
    # so runs that differ only in their starting placement share them
    ref = random_placement(netlist, 0)
    _, gw, _, gd = objective(ref.xy)
    nw, nd = np.abs(gw[mov]).sum(), np.abs(gd[mov]).sum()
    lam = cfg.lambda_d_init * (nw / nd if nd > 0 and nw > 0 else 1.0)
    if cfg.lambda_d is not None:
        lam = cfg.lambda_d
    area = netlist.area
    stiff = nd / max(area[mov].sum(), 1e-300)   # per-area density stiffness
    divisor = HPWL_DIVISOR if cfg.raw_hpwl_divisor \
        else HPWL_DIVISOR * max(hpwl(netlist, ref), 1e-12) / HPWL_SCALE

    lw, _, ld, _ = objective(x)
    h_prev = hpwl(netlist, Placement(x))
    history = []
    sink = open(history_path, "w") if history_path is not None else None

    def log(it, lw, ld, of):
        rec = {"iteration": it, "hpwl": h_prev, "wl": lw, "density": ld,
               "lambda_d": lam, "overflow": of}
        history.append(rec)
        if sink is not None:
            sink.write(json.dumps(rec) + "\n")

    stopped = False
    try:
        of = overflow_ratio(netlist, Placement(x), m, cfg.target_density)
        log(0, lw, ld, of)
        x_prev = x.copy()
        for it in range(1, cfg.max_iterations + 1):
            if cfg.stop_overflow > 0 and of < cfg.stop_overflow and it > cfg.min_iterations:
                stopped = True
                break
            y = x + cfg.momentum * (x - x_prev)
            y[term] = term_xy
            lwy, gwy, ldy, gdy = objective(y)
            g = gwy + lam * gdy
            if not np.all(np.isfinite(g[mov])):
                bad = int(mov[np.flatnonzero(~np.isfinite(g[mov]).all(axis=1))[0]])
                raise FloatingPointError(f"non-finite gradient at iteration {it} "
                                         f"for cell {netlist.cell_names[bad]!r}")
            pre = np.maximum(pins + lam * stiff * area, 1.0)
            x_prev = x
            x = y.copy()
            x[mov] -= cfg.learning_rate * bin_w * g[mov] / pre[mov, None]
            x = clamp_to_core(netlist, x)
            x[term] = term_xy
            h = hpwl(netlist, Placement(x))
            lam = lambda_update(lam, h - h_prev, it, cfg.upper_pcof, divisor)
            h_prev = h
            of = overflow_ratio(netlist, Placement(x), m, cfg.target_density)
            log(it, lwy, ldy, of)
    finally:
        if sink is not None:
            sink.close()
    return FinetuneResult(Placement(x), history, tuple(rigid), stopped)


def write_history(history, path) -> None:
    Path(path).write_text("".join(json.dumps(r) + "\n" for r in history))


def config_dict(cfg: FinetuneConfig) -> dict:
    return asdict(cfg)
