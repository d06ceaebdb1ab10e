"""Hierarchical netlist: branch sub-netlists plus a coarsened root graph.

Every part of a partition becomes a branch netlist whose largest cell is a
terminal pinned at (0, 0). In the root graph each part collapses into one
movable pseudo cell of side sqrt(5 * total part area), and a net survives
when it still joins at least two distinct root cells.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .netlist import (FeatureSet, Netlist, NetlistError, Placement, cell_features, featurize,
                      pin_features)
from .partition import PartitionResult

logger = logging.getLogger(__name__)

PSEUDO_AREA_FACTOR = 5.0


@dataclass(frozen=True, eq=False)
class HierNetlist:
    original: Netlist
    root: Netlist
    root_features: FeatureSet
    root_origin: np.ndarray              # root cell -> original cell, -1 for pseudo cells
    branches: list[Netlist]
    branch_features: list[FeatureSet]
    branch_origin: list[np.ndarray]      # branch-local cell -> original cell
    pseudo_cell_of_branch: np.ndarray    # branch index -> root cell id
    anchor_of_branch: np.ndarray         # branch index -> original id of its pinned cell
    eta: float

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def graphs(self):
        yield self.root, self.root_features
        yield from zip(self.branches, self.branch_features)


def _stable_argsort(key: np.ndarray) -> np.ndarray:
    """Stable argsort of non-negative integer keys; two 16-bit radix passes below 2^32."""
    if len(key) == 0 or key.max() >= 1 << 32:
        return np.argsort(key, kind="stable")
    order = np.argsort((key & 0xFFFF).astype(np.uint16), kind="stable")
    return order[np.argsort((key[order] >> 16).astype(np.uint16), kind="stable")]


def build_hierarchy(netlist: Netlist, part: PartitionResult,
                    features: FeatureSet | None = None) -> HierNetlist:
    n = netlist.n_cells
    belong = np.asarray(part.belong, dtype=np.int64)
    if belong.shape != (n,):
        raise NetlistError("partition does not match the netlist")
    n_parts = len(part.parts)
    if belong.min(initial=0) < 0 or belong.max(initial=0) > n_parts:
        raise NetlistError("partition references a part that does not exist")
    if np.any(belong[netlist.terminal_ids] != 0):
        raise NetlistError("terminals cannot belong to a part")
    # without precomputed features, rows are computed directly in the order
    # they are needed instead of gathered from a full feature table
    if features is None:
        cell_rows = lambda ids: cell_features(netlist, ids)
        pin_rows = lambda ids: pin_features(netlist, ids)
        net_table = np.log1p(netlist.net_degree.astype(np.float64))[:, None]
    else:
        cell_rows = lambda ids: features.cell[ids]
        pin_rows = lambda ids: features.pin[ids]
        net_table = features.net

    pc, pn = netlist.pin_cell, netlist.pin_net
    pin_part = belong[pc]

    # branch graphs; pins grouped by part in one pass
    # small integer keys take numpy's linear-time radix sort
    key_t = np.uint16 if n_parts < np.iinfo(np.uint16).max else np.int64
    porder = np.argsort(pin_part.astype(key_t), kind="stable")
    pcut = np.searchsorted(pin_part[porder], np.arange(n_parts + 2))
    corder = np.argsort(belong.astype(key_t), kind="stable")
    ccut = np.searchsorted(belong[corder], np.arange(n_parts + 2))
    branches, bfeat, borigin = [], [], []
    anchors = np.zeros(n_parts, dtype=np.int64)
    areas = np.zeros(n_parts)
    n_branch_nets = 0
    local = np.full(n, -1, dtype=np.int64)
    # gather once into part order so each branch reads contiguous slices
    s_pc, s_pn = pc[porder], pn[porder]
    s_dx, s_dy, s_pin = netlist.pin_dx[porder], netlist.pin_dy[porder], pin_rows(porder)
    s_w, s_h, s_cell = netlist.width[corder], netlist.height[corder], cell_rows(corder)
    # object arrays keep the name gathers in C
    s_names = np.array(netlist.cell_names, dtype=object)[corder]
    net_names = np.array(netlist.net_names, dtype=object)
    for i in range(1, n_parts + 1):
        a, b = ccut[i], ccut[i + 1]
        if a == b:
            raise NetlistError(f"part {i} is empty")
        cells = corder[a:b]
        p0, p1 = pcut[i], pcut[i + 1]
        nets, net_local = np.unique(s_pn[p0:p1], return_inverse=True)
        n_branch_nets += len(nets)
        local[cells] = np.arange(b - a)
        area = s_w[a:b] * s_h[a:b]
        star = int(np.argmax(area))
        anchors[i - 1] = cells[star]
        areas[i - 1] = area.sum()
        term = np.zeros(b - a, dtype=bool)
        term[star] = True
        fixed = np.full((b - a, 2), np.nan)
        fixed[star] = 0.0
        half = max(np.sqrt(PSEUDO_AREA_FACTOR * areas[i - 1]), 1.0) / 2
        br = Netlist(tuple(s_names[a:b].tolist()), s_w[a:b], s_h[a:b], term, fixed,
                     tuple(net_names[nets].tolist()), local[s_pc[p0:p1]],
                     net_local, s_dx[p0:p1], s_dy[p0:p1], (-half, -half, half, half))
        branches.append(br)
        bfeat.append(FeatureSet(s_cell[a:b], net_table[nets], s_pin[p0:p1]))
        borigin.append(cells)

    # root graph: root-resident cells keep their order, pseudo cells appended
    resident = corder[ccut[0]:ccut[1]]
    n_res = len(resident)
    rid = np.empty(n, dtype=np.int64)
    rid[resident] = np.arange(n_res)
    nonres = belong > 0
    rid[nonres] = n_res + belong[nonres] - 1
    n_root = n_res + n_parts
    rcell = rid[pc]
    # first pin of each distinct (root cell, net) pair, in pin order
    key = rcell * max(netlist.n_nets, 1) + pn
    order = _stable_argsort(key)
    sk = key[order]
    head = np.ones(len(sk), dtype=bool)
    head[1:] = sk[1:] != sk[:-1]
    is_first = np.zeros(len(sk), dtype=bool)
    is_first[order[head]] = True
    first = np.flatnonzero(is_first)
    deg = np.bincount(pn[first], minlength=netlist.n_nets)
    keep_net = deg >= 2
    kept = first[keep_net[pn[first]]]
    root_nets = np.flatnonzero(keep_net)
    net_remap = np.cumsum(keep_net) - 1
    r_pin_cell = rcell[kept]
    is_pseudo_pin = pin_part[kept] > 0
    r_dx = np.where(is_pseudo_pin, 0.0, netlist.pin_dx[kept])
    r_dy = np.where(is_pseudo_pin, 0.0, netlist.pin_dy[kept])
    side = np.sqrt(PSEUDO_AREA_FACTOR * areas)
    names = s_names[:n_res].tolist() + [f"~part{i}" for i in range(1, n_parts + 1)]
    fixed = np.vstack([netlist.fixed_xy[resident], np.full((n_parts, 2), np.nan)])
    root = Netlist(tuple(names), np.concatenate([netlist.width[resident], side]),
                   np.concatenate([netlist.height[resident], side]),
                   np.concatenate([netlist.is_terminal[resident], np.zeros(n_parts, bool)]),
                   fixed, tuple(net_names[root_nets].tolist()), r_pin_cell,
                   net_remap[pn[kept]], r_dx, r_dy, netlist.core)

    fresh = featurize(root) if n_parts else None
    x_cell = np.vstack([cell_rows(resident), fresh.cell[n_res:]]) if n_parts \
        else cell_rows(resident)
    x_pin = pin_rows(kept)
    if n_parts:
        x_pin[is_pseudo_pin] = fresh.pin[is_pseudo_pin]
    root_feat = FeatureSet(x_cell, net_table[root_nets], x_pin)
    origin = np.concatenate([resident, -np.ones(n_parts, dtype=np.int64)])
    eta = n_branch_nets / max(netlist.n_nets, 1)
    return HierNetlist(netlist, root, root_feat, origin, branches, bfeat, borigin,
                       np.arange(n_res, n_root, dtype=np.int64), anchors, float(eta))


def project(hier: HierNetlist, placement: Placement) -> tuple[Placement, list[Placement]]:
    """Split an original placement into root and branch-local placements.

    Each pseudo cell sits where its branch's pinned cell is, so uncoarsen
    reproduces the input exactly.
    """
    xy = placement.xy
    root_xy = np.empty((hier.root.n_cells, 2))
    res = hier.root_origin >= 0
    root_xy[res] = xy[hier.root_origin[res]]
    anchor_xy = xy[hier.anchor_of_branch]
    root_xy[hier.pseudo_cell_of_branch] = anchor_xy
    branch_pls = []
    for b, cells in enumerate(hier.branch_origin):
        local = xy[cells] - anchor_xy[b]
        local[hier.branches[b].terminal_ids] = 0.0
        branch_pls.append(Placement(local))
    return Placement(root_xy), branch_pls


def uncoarsen(hier: HierNetlist, root_placement: Placement,
              branch_placements: list[Placement]) -> Placement:
    if root_placement.xy.shape != (hier.root.n_cells, 2):
        raise NetlistError("root placement does not match the root graph")
    if len(branch_placements) != hier.n_branches:
        raise NetlistError(f"expected {hier.n_branches} branch placements, "
                           f"got {len(branch_placements)}")
    xy = hier.original.fixed_xy.copy()
    res = hier.root_origin >= 0
    xy[hier.root_origin[res]] = root_placement.xy[res]
    for b, (cells, pl) in enumerate(zip(hier.branch_origin, branch_placements)):
        if pl.xy.shape != (len(cells), 2):
            raise NetlistError(f"branch {b} placement has the wrong shape")
        xy[cells] = root_placement.xy[hier.pseudo_cell_of_branch[b]] + pl.xy
    t = hier.original.terminal_ids
    xy[t] = hier.original.fixed_xy[t]
    return Placement(xy)


def dump_hierarchy(hier: HierNetlist, directory) -> None:
    from .bookshelf import write_bookshelf

    d = Path(directory)
    write_bookshelf(hier.root, d / "root", "root")
    for b, br in enumerate(hier.branches):
        write_bookshelf(br, d / f"branch{b}", f"branch{b}")
    manifest = {
        "eta": hier.eta,
        "branches": [{"index": b, "pseudo_cell": hier.root.cell_names[int(c)],
                      "anchor_cell": hier.original.cell_names[int(a)],
                      "n_cells": int(len(o))}
                     for b, (c, a, o) in enumerate(zip(hier.pseudo_cell_of_branch,
                                                       hier.anchor_of_branch,
                                                       hier.branch_origin))],
    }
    (d / "hierarchy.json").write_text(json.dumps(manifest, indent=2))
