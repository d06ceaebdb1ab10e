"""Synthetic mixed-size circuits with spatially local connectivity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .netlist import Netlist, NetlistError, make_netlist

MAX_NET_DEGREE = 64


@dataclass(frozen=True)
class SynthSpec:
    n_movable: int
    n_terminals: int
    avg_net_degree: float = 3.5
    seed: int = 0
    core_region: tuple[float, float, float, float] | None = None
    block_fraction: float = 0.02
    utilization: float = 0.5


def _union_find_labels(n, groups):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for g in groups:
        r = find(g[0])
        for c in g[1:]:
            rc = find(c)
            if rc != r:
                parent[rc] = r
    return np.array([find(i) for i in range(n)])


def generate_synthetic(spec: SynthSpec) -> Netlist:
    """Random netlist whose nets join cells that are close in a hidden layout.

    Movable cells are mostly 1-row standard cells with a few large blocks;
    terminals are unit pads on the core boundary. Every connected component
    is attached to at least one terminal.
    """
    nm, nt = spec.n_movable, spec.n_terminals
    if nm < 1 or nt < 1:
        raise NetlistError("need at least one movable cell and one terminal")
    if spec.avg_net_degree < 2:
        raise NetlistError("avg_net_degree must be >= 2")
    n = nm + nt
    if spec.avg_net_degree > n:
        raise NetlistError(f"avg_net_degree {spec.avg_net_degree} exceeds the cell count {n}")
    rng = np.random.default_rng(spec.seed)

    width = rng.integers(1, 5, size=nm).astype(np.float64)
    height = np.ones(nm)
    n_blocks = int(np.floor(spec.block_fraction * nm))
    if n_blocks:
        blocks = rng.choice(nm, size=n_blocks, replace=False)
        width[blocks] = rng.uniform(4.0, 10.0, size=n_blocks).round(2)
        height[blocks] = rng.uniform(4.0, 10.0, size=n_blocks).round(2)
    if spec.core_region is None:
        side = float(np.ceil(np.sqrt((width * height).sum() / spec.utilization))) + 2.0
        core = (0.0, 0.0, side, side)
    else:
        core = tuple(float(c) for c in spec.core_region)
    x_lo, y_lo, x_hi, y_hi = core
    cw, ch = x_hi - x_lo, y_hi - y_lo

    hidden = np.column_stack([rng.uniform(x_lo, x_hi, nm), rng.uniform(y_lo, y_hi, nm)])
    # pads spread along the perimeter
    s = np.sort(rng.uniform(0.0, 2 * (cw + ch), nt))
    pads = np.empty((nt, 2))
    for k, t in enumerate(s):
        if t < cw:
            pads[k] = (x_lo + t, y_lo)
        elif t < cw + ch:
            pads[k] = (x_hi, y_lo + t - cw)
        elif t < 2 * cw + ch:
            pads[k] = (x_hi - (t - cw - ch), y_hi)
        else:
            pads[k] = (x_lo, y_hi - (t - 2 * cw - ch))
    pads = pads.round(3)
    pos = np.vstack([hidden, pads])
    tree = cKDTree(pos)

    nets: list[list[int]] = []
    p = 1.0 / (spec.avg_net_degree - 1.0)
    for _ in range(nm):
        d = int(min(MAX_NET_DEGREE, n, rng.geometric(p) + 1))
        driver = int(rng.integers(nm))
        k = min(n, 2 * d)
        _, cand = tree.query(pos[driver], k=k)
        cand = np.atleast_1d(cand)
        cand = cand[cand != driver]
        others = rng.choice(cand, size=min(d - 1, len(cand)), replace=False)
        nets.append([driver] + sorted(int(c) for c in others))

    touched = np.zeros(n, dtype=bool)
    for net in nets:
        touched[net] = True
    mtree = cKDTree(hidden)
    for t in range(nm, n):
        if not touched[t]:
            k = min(nm, 2)
            _, near = mtree.query(pos[t], k=k)
            nets.append([int(t)] + sorted(int(c) for c in np.atleast_1d(near)))
            touched[nets[-1]] = True
    for c in np.flatnonzero(~touched[:nm]):
        _, near = tree.query(pos[c], k=2)
        nets.append(sorted({int(c), int(near[1])}))
        touched[nets[-1]] = True

    labels = _union_find_labels(n, nets)
    ptree = cKDTree(pads)
    term_roots = set(labels[nm:].tolist())
    for root in sorted(set(labels[:nm].tolist()) - term_roots):
        members = np.flatnonzero(labels == root)
        c = int(members[0])
        _, j = ptree.query(pos[c])
        nets.append([c, nm + int(j)])

    pin_cell, pin_net = [], []
    for u, net in enumerate(nets):
        for c in dict.fromkeys(net):
            pin_cell.append(c)
            pin_net.append(u)
    pin_cell = np.array(pin_cell, dtype=np.int64)
    pin_net = np.array(pin_net, dtype=np.int64)
    all_w = np.concatenate([width, np.ones(nt)])
    all_h = np.concatenate([height, np.ones(nt)])
    pin_dx = (rng.uniform(-0.4, 0.4, len(pin_cell)) * all_w[pin_cell]).round(3)
    pin_dy = (rng.uniform(-0.4, 0.4, len(pin_cell)) * all_h[pin_cell]).round(3)

    names = [f"o{i}" for i in range(nm)] + [f"p{j}" for j in range(nt)]
    is_term = np.zeros(n, dtype=bool)
    is_term[nm:] = True
    fixed = np.full((n, 2), np.nan)
    fixed[nm:] = pads
    nl = make_netlist(names, all_w, all_h, is_term, fixed, [f"n{u}" for u in range(len(nets))],
                      pin_cell, pin_net, pin_dx, pin_dy, core=core, validate=False)
    nl.meta["hidden_xy"] = pos
    nl.validate()
    return nl
