"""Electrostatic density: charge splatting, Neumann Poisson solve, field and energy.

The core region is mapped onto the unit square and split into m x m bins.
Cell rectangles deposit their exact overlap area into bins; the mean charge
is removed and the potential solves the 5-point Neumann Laplacian exactly
through the type-II DCT, which diagonalizes it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft

from .netlist import Netlist, NetlistError, Placement


@dataclass(frozen=True, eq=False)
class DensityField:
    rho: np.ndarray        # mean-removed charge density, indexed [ix, iy]
    psi: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    charge: np.ndarray     # raw per-bin charge (normalized overlap area)
    core: tuple
    m: int

    @property
    def bin_size(self) -> float:
        return 1.0 / self.m


def check_grid(m: int) -> int:
    m = int(m)
    if m < 16 or m & (m - 1):
        raise ValueError(f"grid_m must be a power of two >= 16, got {m}")
    return m


def auto_grid(n_cells: int) -> int:
    """Power of two near sqrt(n_cells), between 16 and 512."""
    m = 16
    while m * m < n_cells and m < 512:
        m *= 2
    return m


def _normalizer(core):
    x0, y0, x1, y1 = core
    w, h = x1 - x0, y1 - y0
    if not (np.isfinite(w) and np.isfinite(h)) or w <= 0 or h <= 0:
        raise NetlistError(f"degenerate core region {core}")
    return np.array([x0, y0]), np.array([w, h])


def _axis_overlap(lo, hi, m, k):
    """Overlap of intervals [lo, hi] (unit-square coords) with k bins from floor(lo*m).

    Returns bin indices, overlap lengths and d(overlap)/d(center), each (n, k).
    """
    hb = 1.0 / m
    first = np.floor(lo * m).astype(np.int64)
    bins = first[:, None] + np.arange(k)[None, :]
    left = bins * hb
    right = left + hb
    a = np.maximum(lo[:, None], left)
    b = np.minimum(hi[:, None], right)
    ov = b - a
    live = (ov > 0) & (bins >= 0) & (bins < m)
    ov = np.where(live, ov, 0.0)
    d = np.where(live, (hi[:, None] < right).astype(float) - (lo[:, None] > left), 0.0)
    return np.clip(bins, 0, m - 1), ov, d


def _spans(netlist: Netlist, xy, core, m):
    origin, size = _normalizer(core)
    c = (xy - origin) / size
    half = np.column_stack([netlist.width / size[0], netlist.height / size[1]]) / 2
    lo, hi = c - half, c + half
    kx = np.ceil(2 * half[:, 0] * m).astype(np.int64) + 1
    ky = np.ceil(2 * half[:, 1] * m).astype(np.int64) + 1
    return lo, hi, kx, ky, size


def _splat(netlist, xy, core, m, cells, psi=None):
    """Charge grid from `cells`, plus (when psi is given) sum_b dQ_b/dc * psi_b per cell."""
    lo, hi, kx, ky, size = _spans(netlist, xy, core, m)
    q = np.zeros((m, m))
    g = np.zeros((netlist.n_cells, 2)) if psi is not None else None
    keys = kx[cells] * 100003 + ky[cells]
    for key in np.unique(keys):
        sel = cells[keys == key]
        a, b = int(kx[sel[0]]), int(ky[sel[0]])
        bx, ox, dx = _axis_overlap(lo[sel, 0], hi[sel, 0], m, a)
        by, oy, dy = _axis_overlap(lo[sel, 1], hi[sel, 1], m, b)
        ix = np.broadcast_to(bx[:, :, None], (len(sel), a, b))
        iy = np.broadcast_to(by[:, None, :], (len(sel), a, b))
        np.add.at(q, (ix, iy), ox[:, :, None] * oy[:, None, :])
        if psi is not None:
            p = psi[ix, iy]
            g[sel, 0] = np.einsum("na,nb,nab->n", dx, oy, p)
            g[sel, 1] = np.einsum("na,nb,nab->n", ox, dy, p)
    return q, g


def _eigen(m):
    k = np.arange(m)
    lam = (2.0 - 2.0 * np.cos(np.pi * k / m)) * m * m
    return lam[:, None] + lam[None, :]


def solve_poisson(rho: np.ndarray) -> np.ndarray:
    """psi with -L psi = rho - mean(rho) under Neumann boundaries, mean(psi) = 0.

    L is the 5-point Laplacian on the unit square with spacing 1/m.
    """
    m = rho.shape[0]
    coef = fft.dctn(rho - rho.mean(), type=2, norm="ortho")
    den = _eigen(m)
    den[0, 0] = 1.0
    coef = coef / den
    coef[0, 0] = 0.0
    return fft.idctn(coef, type=2, norm="ortho")


def laplacian(psi: np.ndarray) -> np.ndarray:
    """5-point Laplacian with reflecting (Neumann) ghost cells, spacing 1/m."""
    m = psi.shape[0]
    p = np.pad(psi, 1, mode="edge")
    return (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * psi) * m * m


def _field(psi):
    m = psi.shape[0]
    coef = fft.dctn(psi, type=2, norm="ortho")
    k = np.arange(m)
    x = (np.arange(m) + 0.5) / m
    scale = np.where(k == 0, np.sqrt(1.0 / m), np.sqrt(2.0 / m))
    cos = scale[None, :] * np.cos(np.pi * np.outer(x, k))
    dsin = -scale[None, :] * np.pi * k[None, :] * np.sin(np.pi * np.outer(x, k))
    ex = -(dsin @ coef @ cos.T)
    ey = -(cos @ coef @ dsin.T)
    return ex, ey


def density_field(netlist: Netlist, placement: Placement, grid_m: int,
                  core=None, with_field: bool = True):
    """Solve the density system; returns (DensityField, value, gradient per cell).

    The energy is sum over bins of charge * potential, which equals the
    footprint-averaged sum of q_i psi over cells. Its gradient is exact:
    twice the potential-weighted derivative of each cell's splatted charge,
    converted to layout units. Terminal rows of the gradient are zero.
    """
    m = check_grid(grid_m)
    core = netlist.core if core is None else core
    xy = placement.xy
    allc = np.arange(netlist.n_cells)
    q, _ = _splat(netlist, xy, core, m, allc)
    rho = q * m * m
    psi = solve_poisson(rho)
    rho = rho - rho.mean()
    value = float((q * psi).sum())
    mov = netlist.movable_ids
    _, g = _splat(netlist, xy, core, m, mov, psi=psi)
    _, size = _normalizer(core)
    grad = 2.0 * g / size
    grad[netlist.terminal_ids] = 0.0
    ex, ey = _field(psi) if with_field else (None, None)
    return DensityField(rho, psi, ex, ey, q, tuple(core), m), value, grad


def sample_field(field: DensityField, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of (E_x, E_y) at layout-unit points."""
    origin, size = _normalizer(field.core)
    u = np.clip((points - origin) / size * field.m - 0.5, 0, field.m - 1)
    i0 = np.minimum(np.floor(u).astype(np.int64), field.m - 2)
    t = u - i0
    out = np.empty_like(u)
    for c, grid in enumerate((field.ex, field.ey)):
        g00 = grid[i0[:, 0], i0[:, 1]]
        g10 = grid[i0[:, 0] + 1, i0[:, 1]]
        g01 = grid[i0[:, 0], i0[:, 1] + 1]
        g11 = grid[i0[:, 0] + 1, i0[:, 1] + 1]
        tx, ty = t[:, 0], t[:, 1]
        out[:, c] = (g00 * (1 - tx) * (1 - ty) + g10 * tx * (1 - ty)
                     + g01 * (1 - tx) * ty + g11 * tx * ty)
    return out


def overflow_ratio(netlist: Netlist, placement: Placement, grid_m: int,
                   target_density: float = 1.0, core=None) -> float:
    """Movable area above bin capacity, as a fraction of total movable area.

    Capacity is target_density times the bin area minus terminal area in the bin.
    """
    m = check_grid(grid_m)
    core = netlist.core if core is None else core
    mov = netlist.movable_ids
    if len(mov) == 0:
        return 0.0
    qm, _ = _splat(netlist, placement.xy, core, m, mov)
    qf, _ = _splat(netlist, placement.xy, core, m, netlist.terminal_ids)
    cap = np.maximum(target_density / (m * m) - qf, 0.0)
    total = qm.sum()
    return float(np.maximum(qm - cap, 0.0).sum() / total) if total > 0 else 0.0
