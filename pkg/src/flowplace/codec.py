"""Relative (distance, deflection) encoding of placements along cell-flow edges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cellflow import CellFlow
from .netlist import Netlist, NetlistError, Placement

EPS = 1e-9


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2 * np.pi)


@dataclass(frozen=True, eq=False)
class RelEncoding:
    rho: np.ndarray
    dtheta: np.ndarray

    def __len__(self):
        return len(self.rho)


def _groups(keys: np.ndarray):
    """Yield (key, indices) for each distinct key in ascending order."""
    if len(keys) == 0:
        return
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    cuts = np.flatnonzero(np.diff(sk)) + 1
    for chunk in np.split(order, cuts):
        yield int(keys[chunk[0]]), chunk


def edge_angles(netlist: Netlist, flow: CellFlow, placement: Placement) -> np.ndarray:
    """Absolute polar angle of every flow edge; coincident endpoints inherit their reference."""
    xy = placement.xy
    d = xy[flow.dst] - xy[flow.src]
    theta = np.arctan2(d[:, 1], d[:, 0])
    degenerate = np.flatnonzero(np.hypot(d[:, 0], d[:, 1]) <= EPS)
    for e in degenerate:
        inc = flow.src_income[e]
        s = flow.src[e]
        theta[e] = theta[inc] if inc >= 0 else np.arctan2(xy[s, 1], xy[s, 0])
    return theta


def encode(netlist: Netlist, flow: CellFlow, placement: Placement) -> RelEncoding:
    xy = placement.xy
    d = xy[flow.dst] - xy[flow.src]
    rho = np.maximum(np.hypot(d[:, 0], d[:, 1]), EPS)
    theta = edge_angles(netlist, flow, placement)
    inc = flow.src_income
    ref = np.where(inc >= 0, theta[np.maximum(inc, 0)],
                   np.arctan2(xy[flow.src, 1], xy[flow.src, 0]))
    return RelEncoding(rho, wrap_angle(theta - ref))


def decode(netlist: Netlist, flow: CellFlow, enc: RelEncoding) -> Placement:
    if len(enc.rho) != flow.n_edges or len(enc.dtheta) != flow.n_edges:
        raise NetlistError(f"encoding has {len(enc.rho)} entries for {flow.n_edges} flow edges")
    xy = netlist.fixed_xy.copy()
    src, dst = flow.src, flow.dst
    theta = np.zeros(flow.n_edges)
    inc = flow.src_income
    for k, idx in _groups(flow.depth[src]):
        if k == 0:
            s = src[idx]
            ref = np.arctan2(xy[s, 1], xy[s, 0])
        else:
            ref = theta[inc[idx]]
        theta[idx] = wrap_angle(ref + enc.dtheta[idx])
    step = np.column_stack([enc.rho * np.cos(theta), enc.rho * np.sin(theta)])
    for _, idx in _groups(flow.level[dst]):
        est = xy[src[idx]] + step[idx]
        cells, slot = np.unique(dst[idx], return_inverse=True)
        cnt = np.bincount(slot)
        xy[cells, 0] = np.bincount(slot, weights=est[:, 0]) / cnt
        xy[cells, 1] = np.bincount(slot, weights=est[:, 1]) / cnt
    return Placement(xy)


def max_relative_error(a: Placement, b: Placement) -> float:
    scale = max(1.0, float(np.max(np.abs(a.xy))))
    return float(np.max(np.abs(a.xy - b.xy))) / scale if a.xy.size else 0.0


def write_encoding(enc: RelEncoding, path) -> None:
    with open(path, "w") as fh:
        for e, (r, t) in enumerate(zip(enc.rho, enc.dtheta)):
            fh.write(f"{e} {r!r} {t!r}\n")
