"""Reader/writer for a subset of the Bookshelf placement format.

Supported files: ``.aux`` (manifest), ``.nodes``, ``.nets``, ``.pl`` and an
optional ``.scl`` that carries the core region as its row bounding box.
Positions in ``.pl`` files are cell centers.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

import numpy as np

from .netlist import Netlist, NetlistError, Placement, make_netlist

logger = logging.getLogger(__name__)


class BookshelfError(NetlistError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{os.fspath(path)}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


def _records(path):
    """Yield (line number, tokens) for non-blank, non-comment lines."""
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("UCLA"):
                continue
            yield lineno, line.replace(":", " : ").split()


def _float(tok, path, lineno):
    try:
        return float(tok)
    except ValueError:
        raise BookshelfError(f"expected a number, got {tok!r}", path, lineno) from None


def read_aux(path) -> dict[str, Path]:
    path = Path(path)
    files = {}
    for lineno, toks in _records(path):
        if ":" not in toks:
            raise BookshelfError("expected 'Kind : file ...'", path, lineno)
        for name in toks[toks.index(":") + 1:]:
            ext = Path(name).suffix.lstrip(".").lower()
            files[ext] = path.parent / name
    for ext in ("nodes", "nets"):
        if ext not in files:
            raise BookshelfError(f"manifest lists no .{ext} file", path)
    return files


def read_nodes(path):
    names, widths, heights, term = [], [], [], []
    for lineno, toks in _records(path):
        if toks[0] in ("NumNodes", "NumTerminals"):
            continue
        if len(toks) not in (3, 4) or (len(toks) == 4 and toks[3] not in ("terminal", "terminal_NI")):
            raise BookshelfError("expected 'name width height [terminal]'", path, lineno)
        names.append(toks[0])
        widths.append(_float(toks[1], path, lineno))
        heights.append(_float(toks[2], path, lineno))
        term.append(len(toks) == 4)
    return names, np.array(widths), np.array(heights), np.array(term, dtype=bool)


def read_nets(path, cell_index):
    """Return net names and pin arrays; duplicate and degree-1 nets are cleaned."""
    net_names = []
    pin_cell, pin_net, pin_dx, pin_dy = [], [], [], []
    pending = 0
    for lineno, toks in _records(path):
        if toks[0] in ("NumNets", "NumPins"):
            continue
        if toks[0] == "NetDegree":
            if pending:
                raise BookshelfError(f"previous net is missing {pending} pin line(s)", path, lineno)
            if len(toks) < 3 or toks[1] != ":":
                raise BookshelfError("expected 'NetDegree : k [name]'", path, lineno)
            try:
                pending = int(toks[2])
            except ValueError:
                raise BookshelfError(f"bad net degree {toks[2]!r}", path, lineno) from None
            net_names.append(toks[3] if len(toks) > 3 else f"n{len(net_names)}")
            continue
        if not pending:
            raise BookshelfError("pin line outside a NetDegree block", path, lineno)
        cell = toks[0]
        if cell not in cell_index:
            raise BookshelfError(f"pin references undeclared cell {cell!r}", path, lineno)
        dx = dy = 0.0
        if ":" in toks:
            rest = toks[toks.index(":") + 1:]
            if len(rest) != 2:
                raise BookshelfError("expected 'name I/O : dx dy'", path, lineno)
            dx, dy = _float(rest[0], path, lineno), _float(rest[1], path, lineno)
        pin_cell.append(cell_index[cell])
        pin_net.append(len(net_names) - 1)
        pin_dx.append(dx)
        pin_dy.append(dy)
        pending -= 1
    if pending:
        raise BookshelfError(f"last net is missing {pending} pin line(s)", path)
    return net_names, np.array(pin_cell, dtype=np.int64), np.array(pin_net, dtype=np.int64), \
        np.array(pin_dx), np.array(pin_dy)


def read_pl(path, cell_index) -> tuple[np.ndarray, np.ndarray]:
    """Return (xy, fixed mask); cells missing from the file get NaN rows."""
    xy = np.full((len(cell_index), 2), np.nan)
    fixed = np.zeros(len(cell_index), dtype=bool)
    for lineno, toks in _records(path):
        if len(toks) < 3:
            raise BookshelfError("expected 'name x y : orient [/FIXED]'", path, lineno)
        name = toks[0]
        if name not in cell_index:
            raise BookshelfError(f"placement of undeclared cell {name!r}", path, lineno)
        i = cell_index[name]
        xy[i] = _float(toks[1], path, lineno), _float(toks[2], path, lineno)
        fixed[i] = any(t.startswith("/FIXED") for t in toks[3:])
    return xy, fixed


def read_scl(path):
    lo = np.array([np.inf, np.inf])
    hi = -lo
    row = {}
    for lineno, toks in _records(path):
        key = toks[0]
        if key == "CoreRow":
            row = {}
        elif key in ("Coordinate", "Height", "Sitewidth", "SubrowOrigin"):
            vals = [t for t in toks if t != ":"]
            row[key] = _float(vals[1], path, lineno)
            if key == "SubrowOrigin":
                if "NumSites" not in vals:
                    raise BookshelfError("SubrowOrigin line without NumSites", path, lineno)
                row["NumSites"] = _float(vals[vals.index("NumSites") + 1], path, lineno)
        elif key == "End":
            try:
                x0 = row["SubrowOrigin"]
                x1 = x0 + row["NumSites"] * row.get("Sitewidth", 1.0)
                y0 = row["Coordinate"]
                y1 = y0 + row["Height"]
            except KeyError as err:
                raise BookshelfError(f"row is missing {err.args[0]}", path, lineno) from None
            lo = np.minimum(lo, [x0, y0])
            hi = np.maximum(hi, [x1, y1])
    if not np.all(np.isfinite(lo)):
        return None
    return (lo[0], lo[1], hi[0], hi[1])


def parse_bookshelf(aux_path, pl_path=None) -> tuple[Netlist, Placement | None]:
    """Parse a file set into a validated Netlist plus the full .pl placement.

    The returned placement is None when the .pl lacks any movable cell.
    """
    files = read_aux(aux_path)
    for ext, p in files.items():
        if not p.exists():
            raise BookshelfError(f"missing .{ext} file", p)
    names, w, h, term = read_nodes(files["nodes"])
    if len(set(names)) != len(names):
        raise BookshelfError("duplicate node names", files["nodes"])
    index = {n: i for i, n in enumerate(names)}
    net_names, pc, pn, pdx, pdy = read_nets(files["nets"], index)

    # drop duplicate (cell, net) pins, then nets with fewer than two cells
    key = pc * max(len(net_names), 1) + pn
    _, first = np.unique(key, return_index=True)
    if len(first) != len(key):
        logger.warning("dropping %d duplicate (cell, net) pins", len(key) - len(first))
        keep = np.sort(first)
        pc, pn, pdx, pdy = pc[keep], pn[keep], pdx[keep], pdy[keep]
    deg = np.bincount(pn, minlength=len(net_names))
    small = deg < 2
    if np.any(small):
        logger.warning("dropping %d nets of degree < 2", int(small.sum()))
        remap = np.cumsum(~small) - 1
        keep = ~small[pn]
        pc, pn, pdx, pdy = pc[keep], remap[pn[keep]], pdx[keep], pdy[keep]
        net_names = [n for n, s in zip(net_names, small) if not s]

    pl_path = pl_path or files.get("pl")
    xy = np.full((len(names), 2), np.nan)
    if pl_path is not None:
        xy, fixed = read_pl(pl_path, index)
        term = term | fixed
    missing = np.flatnonzero(term & ~np.all(np.isfinite(xy), axis=1))
    if len(missing):
        raise BookshelfError(f"terminal {names[missing[0]]!r} has no position",
                             pl_path or files["nodes"])
    core = read_scl(files["scl"]) if "scl" in files else None
    netlist = make_netlist(names, w, h, term, xy, net_names, pc, pn, pdx, pdy, core=core,
                           validate=False)
    netlist.validate()
    placement = None
    if np.all(np.isfinite(xy)):
        placement = Placement(xy)
    return netlist, placement


def _fmt(v: float) -> str:
    return repr(float(v))


def write_placement(netlist: Netlist, placement: Placement, path) -> None:
    lines = ["UCLA pl 1.0", ""]
    for i, name in enumerate(netlist.cell_names):
        x, y = placement.xy[i]
        suffix = " /FIXED" if netlist.is_terminal[i] else ""
        lines.append(f"{name} {_fmt(x)} {_fmt(y)} : N{suffix}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_placement(netlist: Netlist, path) -> Placement:
    xy, _ = read_pl(path, netlist.cell_index)
    missing = np.flatnonzero(~np.all(np.isfinite(xy), axis=1))
    if len(missing):
        raise BookshelfError(f"no position for cell {netlist.cell_names[missing[0]]!r}", path)
    t = netlist.terminal_ids
    xy[t] = netlist.fixed_xy[t]
    return Placement(xy)


def write_bookshelf(netlist: Netlist, directory, name: str = "design",
                    placement: Placement | None = None) -> Path:
    """Write .aux/.nodes/.nets/.scl/.pl and return the .aux path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n_term = int(netlist.is_terminal.sum())
    nodes = ["UCLA nodes 1.0", "", f"NumNodes : {netlist.n_cells}", f"NumTerminals : {n_term}"]
    for i, cname in enumerate(netlist.cell_names):
        tag = " terminal" if netlist.is_terminal[i] else ""
        nodes.append(f"{cname} {_fmt(netlist.width[i])} {_fmt(netlist.height[i])}{tag}")
    (d / f"{name}.nodes").write_text("\n".join(nodes) + "\n")

    nets = ["UCLA nets 1.0", "", f"NumNets : {netlist.n_nets}", f"NumPins : {netlist.n_pins}"]
    indptr, order = netlist.net_pin_order
    for u, uname in enumerate(netlist.net_names):
        pins = order[indptr[u]:indptr[u + 1]]
        nets.append(f"NetDegree : {len(pins)} {uname}")
        for p in pins:
            nets.append(f"  {netlist.cell_names[netlist.pin_cell[p]]} B : "
                        f"{_fmt(netlist.pin_dx[p])} {_fmt(netlist.pin_dy[p])}")
    (d / f"{name}.nets").write_text("\n".join(nets) + "\n")

    x_lo, y_lo, x_hi, y_hi = netlist.core
    scl = ["UCLA scl 1.0", "", "NumRows : 1", "CoreRow Horizontal",
           f"  Coordinate : {_fmt(y_lo)}", f"  Height : {_fmt(y_hi - y_lo)}",
           f"  Sitewidth : {_fmt(x_hi - x_lo)}",
           f"  SubrowOrigin : {_fmt(x_lo)} NumSites : 1", "End"]
    (d / f"{name}.scl").write_text("\n".join(scl) + "\n")

    if placement is None:
        xy = netlist.fixed_xy.copy()
        cx, cy = (x_lo + x_hi) / 2, (y_lo + y_hi) / 2
        xy[netlist.movable_ids] = (cx, cy)
        placement = Placement(xy)
    write_placement(netlist, placement, d / f"{name}.pl")
    aux = d / f"{name}.aux"
    aux.write_text(f"RowBasedPlacement : {name}.nodes {name}.nets {name}.pl {name}.scl\n")
    return aux
