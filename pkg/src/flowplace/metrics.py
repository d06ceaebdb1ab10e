"""Placement quality: HPWL, RUDY congestion with total overflow, density overflow, reports."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .cellflow import build_cellflow, mean_path_length
from .density import auto_grid, overflow_ratio
from .finetune import random_placement
from .netlist import Netlist, Placement
from .wirelength import hpwl, net_bboxes

SCHEMA_PATH = Path(__file__).resolve().parents[2] / "docs" / "report.schema.json"
RC_QUANTILE = 0.8


@dataclass(frozen=True, eq=False)
class CongestionGrid:
    demand: np.ndarray
    rc: float

    @property
    def overflow(self) -> np.ndarray:
        return np.maximum(self.demand - self.rc, 0.0)

    @property
    def tof(self) -> float:
        return float(self.overflow.sum())

    @property
    def over_fraction(self) -> float:
        return float((self.demand > self.rc).mean())


@dataclass
class MetricsConfig:
    m: int = 64
    rc: float | None = None        # None: calibrated per netlist with rc_mode
    rc_mode: str = "estimate"      # "estimate" or "random"
    rc_seed: int = 0
    density_grid: int | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.rc_mode not in ("estimate", "random"):
            raise ValueError(f"unknown rc_mode {self.rc_mode!r}")
        if self.rc is not None and self.rc < 0:
            raise ValueError("rc must be non-negative")


def _axis_weights(lo, hi, origin, size, m):
    """Sparse (n_nets, m) matrix of interval overlap with each bin, in layout units."""
    hb = size / m
    a = np.clip(np.floor((lo - origin) / hb).astype(np.int64), 0, m - 1)
    b = np.clip(np.floor((hi - origin) / hb).astype(np.int64), 0, m - 1)
    span = b - a + 1
    rows = np.repeat(np.arange(len(lo)), span)
    cols = np.repeat(a, span) + (np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span))
    left = origin + cols * hb
    ov = np.minimum(hi[rows], left + hb) - np.maximum(lo[rows], left)
    # the first and last bin absorb anything outside the core
    ov = np.where(cols == 0, np.minimum(hi[rows], left + hb) - lo[rows], ov)
    ov = np.where(cols == m - 1, hi[rows] - np.maximum(lo[rows], left), ov)
    ov = np.where(span[rows] == 1, (hi - lo)[rows], ov)
    return sparse.csr_matrix((np.maximum(ov, 0.0), (rows, cols)), shape=(len(lo), m))


def _bin_of(v, origin, size, m):
    return np.clip(np.floor((v - origin) / (size / m)).astype(np.int64), 0, m - 1)


def rudy_map(netlist: Netlist, placement: Placement, m: int = 64, rc: float = 0.0) -> CongestionGrid:
    """Rectangular uniform wire density per bin.

    Each net spreads demand (w + h) / (w * h) per unit area over its bounding
    box, so its total demand is w + h. Boxes with zero width or height put
    their whole demand into the bin holding their center.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if rc < 0:
        raise ValueError("rc must be non-negative")
    x0, y0, x1, y1 = netlist.core
    lo, hi = net_bboxes(netlist, placement)
    w, h = hi[:, 0] - lo[:, 0], hi[:, 1] - lo[:, 1]
    demand = np.zeros((m, m))
    flat = (w <= 0) | (h <= 0)
    full = ~flat
    if full.any():
        dens = (w + h)[full] / (w * h)[full]
        ax = _axis_weights(lo[full, 0], hi[full, 0], x0, x1 - x0, m)
        ay = _axis_weights(lo[full, 1], hi[full, 1], y0, y1 - y0, m)
        demand += (ax.multiply(dens[:, None]).T @ ay).toarray()
    if flat.any():
        c = (lo[flat] + hi[flat]) / 2
        np.add.at(demand, (_bin_of(c[:, 0], x0, x1 - x0, m), _bin_of(c[:, 1], y0, y1 - y0, m)),
                  (w + h)[flat])
    return CongestionGrid(demand, float(rc))


def calibrate_rc(netlist: Netlist, m: int = 64, mode: str = "estimate", seed: int = 0) -> float:
    """Uniform bin capacity for one netlist.

    "estimate" spreads an expected compact wirelength evenly over the grid:
    each net is charged sqrt(degree) cell pitches. "random" leaves about 20%
    of bins over capacity under a uniform random placement; total demand
    equals HPWL, so that capacity is rarely exceeded by a reasonable placement.
    """
    if mode == "random":
        grid = rudy_map(netlist, random_placement(netlist, seed), m)
        return float(np.quantile(grid.demand, RC_QUANTILE))
    x0, y0, x1, y1 = netlist.core
    pitch = np.sqrt((x1 - x0) * (y1 - y0) / max(netlist.n_cells, 1))
    return float(np.sqrt(netlist.net_degree).sum() * pitch / (m * m))


def evaluate(netlist: Netlist, placement: Placement, cfg: MetricsConfig | None = None,
             runtime: dict | None = None, eta: float = 1.0, seed: int | None = None) -> dict:
    """Metric report for one placement; see docs/report.schema.json."""
    cfg = cfg or MetricsConfig()
    t0 = time.perf_counter()
    rc = cfg.rc if cfg.rc is not None else calibrate_rc(netlist, cfg.m, cfg.rc_mode, cfg.rc_seed)
    grid = rudy_map(netlist, placement, cfg.m, rc)
    dm = cfg.density_grid or auto_grid(len(netlist.movable_ids))
    report = {
        "hpwl": hpwl(netlist, placement),
        "tof": grid.tof,
        "rc": rc,
        "grid_m": cfg.m,
        "density_overflow_ratio": overflow_ratio(netlist, placement, dm),
        "eta": float(eta),
        "n_cells": netlist.n_cells,
        "n_nets": netlist.n_nets,
        "n_pins": netlist.n_pins,
    }
    t1 = time.perf_counter()
    try:
        flow = build_cellflow(netlist)
        report["n_flow_edges"] = flow.n_edges
        report["omega"] = mean_path_length(flow, netlist)
    except ValueError:
        report["n_flow_edges"] = 0
        report["omega"] = 0.0
    t2 = time.perf_counter()
    rt = dict(runtime or {})
    rt["metrics"] = (t1 - t0) + rt.get("metrics", 0.0)
    rt["flow_stats"] = t2 - t1
    report["runtime_breakdown"] = rt
    report["seed"] = seed
    return report


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, load_schema())


def summary_table(report: dict) -> str:
    rows = [("hpwl", f"{report['hpwl']:.4f}"), ("tof", f"{report['tof']:.4f}"),
            ("density_overflow", f"{report['density_overflow_ratio']:.4f}"),
            ("eta", f"{report['eta']:.4f}"), ("omega", f"{report['omega']:.4f}"),
            ("flow_edges", str(report["n_flow_edges"])), ("pins", str(report["n_pins"]))]
    rows += [(f"time.{k}", f"{v:.3f}s") for k, v in report["runtime_breakdown"].items()]
    return "\n".join(f"{k:<20}{v:>16}" for k, v in rows)
