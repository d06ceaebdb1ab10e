"""Cell-flow: a DAG over cells grown by breadth-first search from terminals."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .netlist import Netlist, NetlistError


@dataclass(frozen=True, eq=False)
class CellFlow:
    """Directed flow edges with their income/net bookkeeping.

    ``income[v]`` is the index of the first edge reaching movable cell v
    (-1 for terminals), ``edge_net[e]`` the net that produced edge e and
    ``pop_order[v]`` the BFS pop rank of v. ``depth`` counts income edges
    back to a terminal and ``level`` is the longest flow-path length from any
    terminal; both drive the vectorized decoder.
    """

    src: np.ndarray
    dst: np.ndarray
    edge_net: np.ndarray
    income: np.ndarray
    pop_order: np.ndarray
    depth: np.ndarray
    level: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    @cached_property
    def is_income(self) -> np.ndarray:
        flag = np.zeros(self.n_edges, dtype=bool)
        flag[self.income[self.income >= 0]] = True
        return flag

    @cached_property
    def src_income(self) -> np.ndarray:
        """Income edge of each edge's source cell (-1 when the source is a terminal)."""
        return self.income[self.src]


def build_cellflow(netlist: Netlist) -> CellFlow:
    n = netlist.n_cells
    c_ptr, c_pins = netlist.cell_pin_order
    n_ptr, n_pins = netlist.net_pin_order
    pin_cell = netlist.pin_cell
    pin_net = netlist.pin_net
    movable = ~netlist.is_terminal

    # per-cell incident nets ascending, per-net movable cells ascending
    cell_nets = [sorted(set(pin_net[c_pins[c_ptr[v]:c_ptr[v + 1]]].tolist())) for v in range(n)]
    net_cells = []
    for u in range(netlist.n_nets):
        cells = pin_cell[n_pins[n_ptr[u]:n_ptr[u + 1]]]
        net_cells.append(sorted(set(cells[movable[cells]].tolist())))

    traveled = np.zeros(netlist.n_nets, dtype=bool)
    queued = np.zeros(n, dtype=bool)
    income = np.full(n, -1, dtype=np.int64)
    pop_order = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    level = np.zeros(n, dtype=np.int64)
    src, dst, enet = [], [], []

    queue = deque(netlist.terminal_ids.tolist())
    queued[netlist.terminal_ids] = True
    rank = 0
    while queue:
        v = queue.popleft()
        pop_order[v] = rank
        rank += 1
        lv = level[v] + 1
        dv = depth[v] + 1
        for u in cell_nets[v]:
            if traveled[u]:
                continue
            traveled[u] = True
            for w in net_cells[u]:
                if w == v:
                    continue
                if not queued[w]:
                    queued[w] = True
                    queue.append(w)
                if income[w] < 0:
                    income[w] = len(src)
                    depth[w] = dv
                if level[w] < lv:
                    level[w] = lv
                src.append(v)
                dst.append(w)
                enet.append(u)

    unreached = np.flatnonzero(pop_order < 0)
    if len(unreached):
        raise NetlistError(f"cell {netlist.cell_names[unreached[0]]!r} is unreachable from "
                           "every terminal")
    return CellFlow(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                    np.array(enet, dtype=np.int64), income, pop_order, depth, level)


def cell_paths(flow: CellFlow, targets) -> tuple[dict[int, tuple[int, ...]], float]:
    """Income-chain path from a terminal to each target, plus the mean length."""
    paths = {}
    for t in targets:
        t = int(t)
        chain = [t]
        v = t
        while flow.income[v] >= 0:
            v = int(flow.src[flow.income[v]])
            chain.append(v)
        paths[t] = tuple(reversed(chain))
    omega = float(np.mean([len(p) - 1 for p in paths.values()])) if paths else 0.0
    return paths, omega


def mean_path_length(flow: CellFlow, netlist: Netlist) -> float:
    """Average income-chain length over movable cells (omega)."""
    m = netlist.movable_ids
    return float(flow.depth[m].mean()) if len(m) else 0.0


def write_flow(flow: CellFlow, netlist: Netlist, path) -> None:
    names = netlist.cell_names
    with open(path, "w") as fh:
        for e in range(flow.n_edges):
            fh.write(f"{names[flow.src[e]]} {names[flow.dst[e]]} "
                     f"{netlist.net_names[flow.edge_net[e]]} {int(flow.is_income[e])}\n")
