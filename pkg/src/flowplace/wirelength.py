"""Half-perimeter and weighted-average wirelength with analytic gradients."""

from __future__ import annotations

import numpy as np

from .netlist import Netlist, Placement, pin_positions


def _net_sorted(netlist: Netlist):
    indptr, order = netlist.net_pin_order
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    return order, starts[nonempty], np.flatnonzero(nonempty)


def hpwl(netlist: Netlist, placement: Placement) -> float:
    """Sum over nets of pin bounding-box width plus height."""
    if netlist.n_pins == 0:
        return 0.0
    order, starts, _ = _net_sorted(netlist)
    pos = pin_positions(netlist, placement)[order]
    span = np.maximum.reduceat(pos, starts, axis=0) - np.minimum.reduceat(pos, starts, axis=0)
    return float(span.sum())


def net_bboxes(netlist: Netlist, placement: Placement):
    """(lo, hi) pin bounding-box corners per net, each shaped (n_nets, 2)."""
    order, starts, nets = _net_sorted(netlist)
    pos = pin_positions(netlist, placement)[order]
    lo = np.zeros((netlist.n_nets, 2))
    hi = np.zeros((netlist.n_nets, 2))
    lo[nets] = np.minimum.reduceat(pos, starts, axis=0)
    hi[nets] = np.maximum.reduceat(pos, starts, axis=0)
    return lo, hi


def _wa_axis(coord, pin_net, n_nets, gamma):
    """Value and per-pin gradient of the WA max-minus-min estimate along one axis."""
    xmax = np.full(n_nets, -np.inf)
    np.maximum.at(xmax, pin_net, coord)
    xmin = np.full(n_nets, np.inf)
    np.minimum.at(xmin, pin_net, coord)
    ep = np.exp(gamma * (coord - xmax[pin_net]))
    em = np.exp(-gamma * (coord - xmin[pin_net]))
    sp = np.bincount(pin_net, weights=ep, minlength=n_nets)
    sm = np.bincount(pin_net, weights=em, minlength=n_nets)
    xp = np.bincount(pin_net, weights=coord * ep, minlength=n_nets)
    xm = np.bincount(pin_net, weights=coord * em, minlength=n_nets)
    live = sp > 0
    fp = np.where(live, xp / np.where(live, sp, 1.0), 0.0)
    fm = np.where(live, xm / np.where(live, sm, 1.0), 0.0)
    spn = np.where(live, sp, 1.0)[pin_net]
    smn = np.where(live, sm, 1.0)[pin_net]
    g = ep / spn * (1.0 + gamma * (coord - fp[pin_net])) \
        - em / smn * (1.0 - gamma * (coord - fm[pin_net]))
    return float((fp - fm).sum()), g


def wa_wirelength(netlist: Netlist, placement: Placement, gamma: float):
    """Weighted-average wirelength and its gradient per cell (zero rows for terminals).

    ``gamma`` is the sharpness in 1/layout-units; larger values approach HPWL.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    pos = pin_positions(netlist, placement)
    grad = np.zeros((netlist.n_cells, 2))
    total = 0.0
    for axis in (0, 1):
        val, g = _wa_axis(pos[:, axis], netlist.pin_net, netlist.n_nets, gamma)
        total += val
        grad[:, axis] = np.bincount(netlist.pin_cell, weights=g, minlength=netlist.n_cells)
    grad[netlist.terminal_ids] = 0.0
    return total, grad
