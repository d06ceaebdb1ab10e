"""Placement GNN: dual message passing over the netlist graph and its cell-flow.

Cells, nets and pins are embedded by one-hidden-layer tanh MLPs. Each layer
sends net->cell messages (pin-filtered, Hadamard product), cell->net messages
(pin-weighted by a scalar attention) and flow messages from every flow-edge
source to its destination; cell updates take the elementwise max of the
flow and net messages and are residual. Readouts produce a distance and a
deflection per flow edge.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cellflow import CellFlow, build_cellflow
from .codec import RelEncoding, decode, encode, wrap_angle
from .hier import HierNetlist, project, uncoarsen
from .netlist import FeatureSet, Netlist, Placement, clamp_to_core

logger = logging.getLogger(__name__)

D_CELL = 64
D_NET = 64
D_PIN = 8
HIDDEN = 64
N_LAYERS = 3
ALPHA = 15.0
BETA = -2.0
# keeps tanh strictly inside (-1, 1) in float64
Z_LIMIT = 18.0


class TpgnnParams(dict):
    """Name -> Tensor mapping with the fixed readout constants attached."""

    alpha = ALPHA
    beta = BETA

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self if k.startswith("layer") and k.endswith(".W_vv"))

    def copy(self) -> "TpgnnParams":
        return TpgnnParams({k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.items()})

    def zero_grad(self):
        for t in self.values():
            t.grad = None


def init_params(n_cell_feat=5, n_net_feat=1, n_pin_feat=8, n_layers=N_LAYERS, seed=0,
                zero_readout=False) -> TpgnnParams:
    rng = np.random.default_rng(seed)

    def lin(fan_in, fan_out, gain=1.0):
        return rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out))

    p = {}
    for name, fin, fout in (("cell", n_cell_feat, D_CELL), ("net", n_net_feat, D_NET),
                            ("pin", n_pin_feat, D_PIN)):
        p[f"emb_{name}.W1"] = lin(fin, HIDDEN)
        p[f"emb_{name}.b1"] = np.zeros((1, HIDDEN))
        p[f"emb_{name}.W2"] = lin(HIDDEN, fout)
        p[f"emb_{name}.b2"] = np.zeros((1, fout))
    for l in range(n_layers):
        p[f"layer{l}.W_pv"] = lin(D_PIN, D_CELL)
        p[f"layer{l}.W_uv"] = lin(D_NET, D_CELL, 0.5)
        p[f"layer{l}.W_vu"] = lin(D_CELL, D_NET, 0.5)
        p[f"layer{l}.a"] = lin(D_PIN, 1)
        p[f"layer{l}.W_vv"] = lin(D_CELL, D_CELL, 0.5)
    p["readout.a_rho"] = np.zeros((3 * D_CELL, 1)) if zero_readout else lin(3 * D_CELL, 1, 0.1)
    p["readout.a_theta"] = np.zeros((5 * D_CELL, 1)) if zero_readout else lin(5 * D_CELL, 1, 0.1)
    p["readout.b_rho"] = np.zeros((1, 1))
    p["readout.b_theta"] = np.zeros((1, 1))
    p["null_cell"] = rng.normal(0.0, 0.1, size=(1, D_CELL))
    p["null_net"] = rng.normal(0.0, 0.1, size=(1, D_NET))
    return TpgnnParams({k: Tensor(v, requires_grad=True) for k, v in p.items()})


@dataclass(frozen=True, eq=False)
class GraphInput:
    """Index arrays for one graph, precomputed once and reused every epoch."""

    n_cells: int
    n_nets: int
    features: FeatureSet
    pin_cell: np.ndarray
    pin_net: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    net_t: np.ndarray
    prev_cell: np.ndarray   # income source of each edge's source; n_cells = null
    prev_net: np.ndarray    # income net of each edge's source; n_nets = null

    @classmethod
    def build(cls, netlist: Netlist, features: FeatureSet, flow: CellFlow) -> "GraphInput":
        if features.cell.shape[0] != netlist.n_cells or features.net.shape[0] != netlist.n_nets \
                or features.pin.shape[0] != netlist.n_pins:
            raise ValueError("feature rows do not match the netlist")
        if flow.income.shape[0] != netlist.n_cells:
            raise ValueError("cell-flow was built for another netlist")
        inc = flow.src_income
        has = inc >= 0
        prev_cell = np.where(has, flow.src[np.maximum(inc, 0)], netlist.n_cells)
        prev_net = np.where(has, flow.edge_net[np.maximum(inc, 0)], netlist.n_nets)
        return cls(netlist.n_cells, netlist.n_nets, features, netlist.pin_cell, netlist.pin_net,
                   flow.src, flow.dst, flow.edge_net, prev_cell, prev_net)


def _mlp(x, params, name):
    h = ag.tanh(ag.matmul(x, params[f"{name}.W1"]) + params[f"{name}.b1"])
    return ag.matmul(h, params[f"{name}.W2"]) + params[f"{name}.b2"]


def _rows(t: Tensor, start: int, stop: int) -> Tensor:
    return ag.gather(t, np.arange(start, stop))


def forward_raw(g: GraphInput, params: TpgnnParams) -> tuple[Tensor, Tensor]:
    """Return (log distance, deflection) tensors, one entry per flow edge."""
    h_v = _mlp(g.features.cell, params, "emb_cell")
    h_u = _mlp(g.features.net, params, "emb_net")
    h_p = _mlp(g.features.pin, params, "emb_pin")
    for l in range(params.n_layers):
        pre = f"layer{l}"
        filt = ag.matmul(h_p, params[f"{pre}.W_pv"])
        m_uv = ag.segment_sum(filt * ag.gather(ag.matmul(h_u, params[f"{pre}.W_uv"]), g.pin_net),
                              g.pin_cell, g.n_cells)
        att = ag.matmul(h_p, params[f"{pre}.a"])
        m_vu = ag.segment_sum(att * ag.gather(ag.matmul(h_v, params[f"{pre}.W_vu"]), g.pin_cell),
                              g.pin_net, g.n_nets)
        m_vv = ag.segment_sum(ag.gather(ag.matmul(h_v, params[f"{pre}.W_vv"]), g.src),
                              g.dst, g.n_cells)
        h_v = h_v + ag.maximum(m_vv, m_uv)
        h_u = h_u + m_vu

    a_rho, a_th = params["readout.a_rho"], params["readout.a_theta"]
    z_rho = (ag.gather(ag.matmul(h_v, _rows(a_rho, 0, D_CELL)), g.src)
             + ag.gather(ag.matmul(h_u, _rows(a_rho, D_CELL, D_CELL + D_NET)), g.net_t)
             + ag.gather(ag.matmul(h_v, _rows(a_rho, D_CELL + D_NET, 2 * D_CELL + D_NET)), g.dst)
             + params["readout.b_rho"])
    h_vx = ag.concat([h_v, params["null_cell"]], axis=0)
    h_ux = ag.concat([h_u, params["null_net"]], axis=0)
    c, u = D_CELL, D_NET
    z_th = (ag.gather(ag.matmul(h_vx, _rows(a_th, 0, c)), g.prev_cell)
            + ag.gather(ag.matmul(h_ux, _rows(a_th, c, c + u)), g.prev_net)
            + ag.gather(ag.matmul(h_v, _rows(a_th, c + u, 2 * c + u)), g.src)
            + ag.gather(ag.matmul(h_u, _rows(a_th, 2 * c + u, 2 * c + 2 * u)), g.net_t)
            + ag.gather(ag.matmul(h_v, _rows(a_th, 2 * c + 2 * u, 3 * c + 2 * u)), g.dst)
            + params["readout.b_theta"])
    log_rho = ag.tanh(ag.clip(z_rho, -Z_LIMIT, Z_LIMIT)) * params.alpha + params.beta
    dtheta = ag.tanh(ag.clip(z_th, -Z_LIMIT, Z_LIMIT)) * np.pi
    return log_rho, dtheta


def forward(netlist: Netlist, features: FeatureSet, flow: CellFlow,
            params: TpgnnParams) -> RelEncoding:
    log_rho, dtheta = forward_raw(GraphInput.build(netlist, features, flow), params)
    return RelEncoding(np.exp(log_rho.data[:, 0]), dtheta.data[:, 0])


# training


@dataclass
class TrainConfig:
    lr: float = 5e-5
    lr_decay: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 500
    lambda_theta: float = 0.1
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Sample:
    graph: GraphInput
    log_rho: np.ndarray
    dtheta: np.ndarray


def make_sample(netlist, features, flow, teacher: RelEncoding) -> Sample:
    g = GraphInput.build(netlist, features, flow)
    return Sample(g, np.log(teacher.rho)[:, None], np.asarray(teacher.dtheta)[:, None])


def loss_on(sample: Sample, params: TpgnnParams, lambda_theta: float) -> Tensor:
    log_rho, dtheta = forward_raw(sample.graph, params)
    loss = ag.smooth_l1(log_rho, sample.log_rho)
    if lambda_theta:
        diff = dtheta.data - sample.dtheta
        shift = wrap_angle(diff) - diff
        loss = loss + lambda_theta * ag.smooth_l1(dtheta + shift, sample.dtheta)
    return loss


def evaluate_loss(samples, params, lambda_theta=0.1) -> float:
    return float(np.mean([loss_on(s, params, lambda_theta).data for s in samples]))


@dataclass
class TrainResult:
    params: TpgnnParams
    history: list[float] = field(default_factory=list)
    initial_loss: float = float("nan")


def train(samples: list[Sample], cfg: TrainConfig, params: TpgnnParams | None = None,
          log_every: int = 0) -> TrainResult:
    """Imitation training: one Adam step per graph per epoch, fixed graph order."""
    if not samples:
        raise ValueError("empty training set")
    if params is None:
        f = samples[0].graph.features
        params = init_params(f.cell.shape[1], f.net.shape[1], f.pin.shape[1], seed=cfg.seed)
    state = ag.AdamState(lr=cfg.lr, lr_decay=cfg.lr_decay, weight_decay=cfg.weight_decay)
    result = TrainResult(params, initial_loss=evaluate_loss(samples, params, cfg.lambda_theta))
    for epoch in range(cfg.epochs):
        total = 0.0
        for s in samples:
            params.zero_grad()
            with ag.Tape() as tape:
                loss = loss_on(s, params, cfg.lambda_theta)
                tape.backward(loss)
            total += float(loss.data)
            ag.adam_step(params, state)
        state.end_epoch()
        result.history.append(total / len(samples))
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d loss %.5f", epoch + 1, result.history[-1])
    return result


# placement frames: encode/decode run with the core center as origin


def centered(netlist: Netlist) -> tuple[Netlist, np.ndarray]:
    x_lo, y_lo, x_hi, y_hi = netlist.core
    c = np.array([(x_lo + x_hi) / 2, (y_lo + y_hi) / 2])
    if not np.any(c):
        return netlist, c
    moved = Netlist(netlist.cell_names, netlist.width, netlist.height, netlist.is_terminal,
                    netlist.fixed_xy - c, netlist.net_names, netlist.pin_cell, netlist.pin_net,
                    netlist.pin_dx, netlist.pin_dy, (x_lo - c[0], y_lo - c[1], x_hi - c[0], y_hi - c[1]))
    return moved, c


def samples_from_hierarchy(hier: HierNetlist, placement: Placement) -> list[Sample]:
    """Teacher samples for the root graph and every branch graph."""
    root_pl, branch_pls = project(hier, placement)
    out = []
    for (g, feat), pl in zip(hier.graphs(), [root_pl] + branch_pls):
        if g.movable_ids.size == 0:
            continue
        gc, c = centered(g)
        flow = build_cellflow(gc)
        if flow.n_edges == 0:
            continue
        out.append(make_sample(gc, feat, flow, encode(gc, flow, Placement(pl.xy - c))))
    return out


def place_graph(netlist: Netlist, features: FeatureSet, params: TpgnnParams) -> Placement:
    gc, c = centered(netlist)
    flow = build_cellflow(gc)
    if flow.n_edges == 0:
        return Placement(netlist.fixed_xy.copy())
    enc = forward(gc, features, flow, params)
    return Placement(decode(gc, flow, enc).xy + c)


def inductive_place(hier: HierNetlist, params: TpgnnParams, clamp: bool = True) -> Placement:
    """One-shot placement: predict and decode every graph, then reassemble."""
    placements = [place_graph(g, f, params) for g, f in hier.graphs()]
    full = uncoarsen(hier, placements[0], placements[1:])
    if clamp:
        return Placement(clamp_to_core(hier.original, full.xy))
    return full


# checkpoint file: magic, version, count, then (name, shape) table, then little-endian float64 data

MAGIC = b"TPGNNCKP"
VERSION = 1


def save_params(params: TpgnnParams, path) -> None:
    names = sorted(params)
    head = [MAGIC, struct.pack("<II", VERSION, len(names))]
    for name in names:
        raw = name.encode()
        shape = params[name].data.shape
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", len(shape))
                    + struct.pack(f"<{len(shape)}I", *shape))
    body = [params[n].data.astype("<f8").tobytes() for n in names]
    Path(path).write_bytes(b"".join(head + body))


def load_params(path) -> TpgnnParams:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    table = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + ln].decode()
        off += ln
        (nd,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{nd}I", buf, off)
        off += 4 * nd
        table.append((name, shape))
    params = TpgnnParams()
    for name, shape in table:
        n = int(np.prod(shape))
        data = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
        params[name] = Tensor(data.reshape(shape), requires_grad=True)
    if off != len(buf):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return params
