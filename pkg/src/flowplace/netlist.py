"""Netlist hypergraph, placements and per-element feature matrices.

Cells, nets and pins are stored as flat numpy arrays. Pin offsets are
relative to the cell center and every position handled by the package is a
cell-center coordinate in layout units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)


class NetlistError(ValueError):
    """Raised when a netlist violates a structural invariant."""


@dataclass(frozen=True, eq=False)
class Netlist:
    """Immutable cell/net/pin hypergraph.

    Attributes:
        cell_names: Names in declaration order; the index is the cell id.
        width, height: Cell dimensions, layout units.
        is_terminal: True for fixed cells.
        fixed_xy: (n_cells, 2) positions; rows of movable cells are NaN.
        net_names: Names in declaration order; the index is the net id.
        pin_cell, pin_net: Pin endpoints, one entry per pin.
        pin_dx, pin_dy: Pin offsets from the cell center.
        core: (x_lo, y_lo, x_hi, y_hi) placement region.
    """

    cell_names: tuple[str, ...]
    width: np.ndarray
    height: np.ndarray
    is_terminal: np.ndarray
    fixed_xy: np.ndarray
    net_names: tuple[str, ...]
    pin_cell: np.ndarray
    pin_net: np.ndarray
    pin_dx: np.ndarray
    pin_dy: np.ndarray
    core: tuple[float, float, float, float]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("width", "height", "fixed_xy", "pin_dx", "pin_dy"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("pin_cell", "pin_net"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        term = np.asarray(self.is_terminal, dtype=bool)
        term.setflags(write=False)
        object.__setattr__(self, "is_terminal", term)
        object.__setattr__(self, "core", tuple(float(c) for c in self.core))

    # sizes

    @property
    def n_cells(self) -> int:
        return len(self.cell_names)

    @property
    def n_nets(self) -> int:
        return len(self.net_names)

    @property
    def n_pins(self) -> int:
        return len(self.pin_cell)

    @cached_property
    def terminal_ids(self) -> np.ndarray:
        return np.flatnonzero(self.is_terminal)

    @cached_property
    def movable_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.is_terminal)

    @property
    def terminal_positions(self) -> dict[int, tuple[float, float]]:
        return {int(i): (float(self.fixed_xy[i, 0]), float(self.fixed_xy[i, 1]))
                for i in self.terminal_ids}

    @cached_property
    def cell_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.cell_names)}

    @cached_property
    def area(self) -> np.ndarray:
        return self.width * self.height

    @cached_property
    def cell_degree(self) -> np.ndarray:
        return np.bincount(self.pin_cell, minlength=self.n_cells)

    @cached_property
    def net_degree(self) -> np.ndarray:
        return np.bincount(self.pin_net, minlength=self.n_nets)

    # CSR adjacency; pins grouped by net / by cell, stable in pin order

    @cached_property
    def net_pin_order(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, pin ids) with pins of net u at pins[indptr[u]:indptr[u+1]]."""
        order = np.argsort(self.pin_net, kind="stable")
        indptr = np.zeros(self.n_nets + 1, dtype=np.int64)
        np.cumsum(self.net_degree, out=indptr[1:])
        return indptr, order

    @cached_property
    def cell_pin_order(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(self.pin_cell, kind="stable")
        indptr = np.zeros(self.n_cells + 1, dtype=np.int64)
        np.cumsum(self.cell_degree, out=indptr[1:])
        return indptr, order

    def components(self) -> np.ndarray:
        """Connected-component label per cell of the cell-net incidence graph."""
        parent = np.arange(self.n_cells)

        def find(a):
            root = a
            while parent[root] != root:
                root = parent[root]
            while parent[a] != root:
                parent[a], a = root, parent[a]
            return root

        indptr, order = self.net_pin_order
        cells = self.pin_cell[order]
        for u in range(self.n_nets):
            members = cells[indptr[u]:indptr[u + 1]]
            if len(members) < 2:
                continue
            r0 = find(members[0])
            for c in members[1:]:
                rc = find(c)
                if rc != r0:
                    parent[rc] = r0
        return np.array([find(i) for i in range(self.n_cells)], dtype=np.int64)

    def validate(self, min_net_degree: int = 2) -> None:
        """Check structural invariants, raising NetlistError on the first failure."""
        n = self.n_cells
        if not (len(self.width) == len(self.height) == len(self.is_terminal) == n):
            raise NetlistError("per-cell arrays have inconsistent lengths")
        if self.fixed_xy.shape != (n, 2):
            raise NetlistError("fixed_xy must have shape (n_cells, 2)")
        if not (len(self.pin_net) == len(self.pin_dx) == len(self.pin_dy) == self.n_pins):
            raise NetlistError("per-pin arrays have inconsistent lengths")
        if self.n_pins:
            if self.pin_cell.min() < 0 or self.pin_cell.max() >= n:
                raise NetlistError("pin references a missing cell")
            if self.pin_net.min() < 0 or self.pin_net.max() >= self.n_nets:
                raise NetlistError("pin references a missing net")
        key = self.pin_cell * max(self.n_nets, 1) + self.pin_net
        if len(np.unique(key)) != len(key):
            raise NetlistError("duplicate (cell, net) pin")
        low = np.flatnonzero(self.net_degree < min_net_degree)
        if len(low):
            raise NetlistError(f"net {self.net_names[low[0]]!r} has degree "
                               f"{self.net_degree[low[0]]} < {min_net_degree}")
        x_lo, y_lo, x_hi, y_hi = self.core
        if not (x_hi > x_lo and y_hi > y_lo):
            raise NetlistError(f"degenerate core region {self.core}")
        t = self.terminal_ids
        pos = self.fixed_xy[t]
        if not np.all(np.isfinite(pos)):
            raise NetlistError("terminal without a finite position")
        tol = 1e-9 * max(x_hi - x_lo, y_hi - y_lo)
        outside = ((pos[:, 0] < x_lo - tol) | (pos[:, 0] > x_hi + tol)
                   | (pos[:, 1] < y_lo - tol) | (pos[:, 1] > y_hi + tol))
        if np.any(outside):
            bad = t[np.flatnonzero(outside)[0]]
            raise NetlistError(f"terminal {self.cell_names[bad]!r} lies outside the core region")
        comp = self.components()
        has_term = np.zeros(n, dtype=bool)
        has_term[comp[t]] = True
        orphan = np.flatnonzero(~has_term[comp])
        if len(orphan):
            raise NetlistError(f"cell {self.cell_names[orphan[0]]!r} is in a connected "
                               "component without a terminal")

    def same_as(self, other: "Netlist", atol: float = 1e-6) -> bool:
        """Topology-exact, geometry-within-atol comparison."""
        if (self.cell_names != other.cell_names or self.net_names != other.net_names):
            return False
        if not (np.array_equal(self.is_terminal, other.is_terminal)
                and np.array_equal(self.pin_cell, other.pin_cell)
                and np.array_equal(self.pin_net, other.pin_net)):
            return False
        t = self.terminal_ids
        return (np.allclose(self.width, other.width, atol=atol)
                and np.allclose(self.height, other.height, atol=atol)
                and np.allclose(self.pin_dx, other.pin_dx, atol=atol)
                and np.allclose(self.pin_dy, other.pin_dy, atol=atol)
                and np.allclose(self.fixed_xy[t], other.fixed_xy[t], atol=atol)
                and np.allclose(self.core, other.core, atol=atol))


def make_netlist(cell_names, width, height, is_terminal, fixed_xy, net_names,
                 pin_cell, pin_net, pin_dx=None, pin_dy=None, core=None,
                 validate=True, min_net_degree=2) -> Netlist:
    """Build a Netlist from plain sequences, filling optional fields."""
    n = len(cell_names)
    is_terminal = np.asarray(is_terminal, dtype=bool)
    xy = np.full((n, 2), np.nan)
    fixed_xy = np.asarray(fixed_xy, dtype=np.float64).reshape(-1, 2) if fixed_xy is not None else xy
    if fixed_xy.shape[0] != n:
        raise NetlistError("fixed_xy must have one row per cell")
    xy[is_terminal] = fixed_xy[is_terminal]
    n_pins = len(pin_cell)
    pin_dx = np.zeros(n_pins) if pin_dx is None else pin_dx
    pin_dy = np.zeros(n_pins) if pin_dy is None else pin_dy
    if core is None:
        pts = xy[is_terminal]
        if len(pts) == 0:
            raise NetlistError("cannot infer a core region without terminals")
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = np.maximum(hi - lo, 1.0) * 0.05
        core = (lo[0] - pad[0], lo[1] - pad[1], hi[0] + pad[0], hi[1] + pad[1])
    nl = Netlist(tuple(cell_names), np.asarray(width, float), np.asarray(height, float),
                 is_terminal, xy, tuple(net_names), np.asarray(pin_cell), np.asarray(pin_net),
                 np.asarray(pin_dx, float), np.asarray(pin_dy, float), core)
    if validate:
        nl.validate(min_net_degree=min_net_degree)
    return nl


@dataclass(frozen=True, eq=False)
class Placement:
    """Absolute cell-center positions indexed by cell id."""

    xy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xy", np.asarray(self.xy, dtype=np.float64).reshape(-1, 2))

    @classmethod
    def from_movable(cls, netlist: Netlist, movable_xy: np.ndarray) -> "Placement":
        xy = netlist.fixed_xy.copy()
        xy[netlist.movable_ids] = movable_xy
        return cls(xy)

    def check(self, netlist: Netlist) -> None:
        if self.xy.shape != (netlist.n_cells, 2):
            raise NetlistError(f"placement shape {self.xy.shape} does not match "
                               f"{netlist.n_cells} cells")
        if not np.all(np.isfinite(self.xy)):
            raise NetlistError("placement has non-finite coordinates")
        t = netlist.terminal_ids
        if not np.array_equal(self.xy[t], netlist.fixed_xy[t]):
            raise NetlistError("terminal positions differ from the netlist")


def pin_positions(netlist: Netlist, placement: Placement) -> np.ndarray:
    xy = placement.xy[netlist.pin_cell].copy()
    xy[:, 0] += netlist.pin_dx
    xy[:, 1] += netlist.pin_dy
    return xy


def clamp_to_core(netlist: Netlist, xy: np.ndarray) -> np.ndarray:
    """Clamp movable centers so each cell stays inside the core when it fits."""
    x_lo, y_lo, x_hi, y_hi = netlist.core
    out = np.array(xy, dtype=np.float64, copy=True)
    m = netlist.movable_ids
    hw = np.minimum(netlist.width[m] / 2, (x_hi - x_lo) / 2)
    hh = np.minimum(netlist.height[m] / 2, (y_hi - y_lo) / 2)
    out[m, 0] = np.clip(out[m, 0], x_lo + hw, x_hi - hw)
    out[m, 1] = np.clip(out[m, 1], y_lo + hh, y_hi - hh)
    return out


@dataclass(frozen=True, eq=False)
class FeatureSet:
    cell: np.ndarray
    net: np.ndarray
    pin: np.ndarray

    def take(self, cells, nets, pins) -> "FeatureSet":
        return FeatureSet(self.cell[cells], self.net[nets], self.pin[pins])


PIN_FEATURES = 8


def cell_features(netlist: Netlist, cells=None) -> np.ndarray:
    """Cell rows of ``featurize``, optionally for a subset of cells only."""
    idx = slice(None) if cells is None else cells
    w, h = netlist.width[idx], netlist.height[idx]
    cdeg = netlist.cell_degree[idx].astype(np.float64)
    term = netlist.is_terminal[idx].astype(np.float64)
    return np.stack([np.log1p(w), np.log1p(h), np.log1p(w * h), np.log1p(cdeg), term], axis=1)


def pin_features(netlist: Netlist, pins=None) -> np.ndarray:
    """Pin rows of ``featurize``, optionally for a subset of pins only."""
    idx = slice(None) if pins is None else pins
    pc, pn = netlist.pin_cell[idx], netlist.pin_net[idx]
    w, h = netlist.width[pc], netlist.height[pc]
    x_pin = np.zeros((len(pc), PIN_FEATURES))
    x_pin[:, 0] = netlist.pin_dx[idx] / np.where(w > 0, w, 1.0)
    x_pin[:, 1] = netlist.pin_dy[idx] / np.where(h > 0, h, 1.0)
    x_pin[:, 2] = np.log1p(netlist.cell_degree[pc])
    x_pin[:, 3] = np.log1p(netlist.net_degree[pn])
    x_pin[:, 4] = netlist.is_terminal[pc]
    return x_pin


def featurize(netlist: Netlist) -> FeatureSet:
    """Log-compressed geometry and degree features for cells, nets and pins."""
    x_net = np.log1p(netlist.net_degree.astype(np.float64))[:, None]
    return FeatureSet(cell_features(netlist), x_net, pin_features(netlist))
