"""Multilevel recursive-bisection hypergraph partitioner with FM refinement.

Only movable cells are partitioned; a net takes part in partitioning through
its movable pins. Parts are post-processed into connected pieces.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .netlist import Netlist

COARSEST = 64
COARSEN_NET_LIMIT = 32


@dataclass(frozen=True, eq=False)
class PartitionResult:
    parts: list[np.ndarray]
    belong: np.ndarray  # 0 = stays in the root graph, i >= 1 = parts[i - 1]

    @property
    def n_parts(self) -> int:
        return len(self.parts)


class Hypergraph:
    """Vertex-weighted hypergraph with weighted nets, local ids 0..n-1."""

    def __init__(self, n, vweight, nets, nweight):
        self.n = n
        self.vw = np.asarray(vweight, dtype=np.int64)
        self.nets = nets
        self.nw = np.asarray(nweight, dtype=np.int64)
        vnets = [[] for _ in range(n)]
        for e, net in enumerate(nets):
            for v in net:
                vnets[v].append(e)
        self.vnets = vnets

    def cut(self, side) -> int:
        return int(sum(w for net, w in zip(self.nets, self.nw)
                       if len({side[v] for v in net}) > 1))


def _induced(netlist_nets, vertices):
    """Sub-hypergraph on `vertices` (global ids) from a list of global net member lists."""
    local = {v: i for i, v in enumerate(vertices)}
    nets = []
    for e in {e for v in vertices for e in netlist_nets.vnets[v]}:
        members = [local[v] for v in netlist_nets.nets[e] if v in local]
        if len(members) > 1:
            nets.append(members)
    nets.sort()
    return Hypergraph(len(vertices), netlist_nets.vw[vertices], nets, [1] * len(nets))


def _coarsen(h: Hypergraph, max_cluster, rng):
    cluster = np.full(h.n, -1, dtype=np.int64)
    nc = 0
    for v in rng.permutation(h.n):
        if cluster[v] >= 0:
            continue
        score = {}
        for e in h.vnets[v]:
            net = h.nets[e]
            if len(net) > COARSEN_NET_LIMIT:
                continue
            s = h.nw[e] / (len(net) - 1)
            for w in net:
                if w != v and cluster[w] < 0 and h.vw[v] + h.vw[w] <= max_cluster:
                    score[w] = score.get(w, 0.0) + s
        cluster[v] = nc
        if score:
            best = min(score, key=lambda w: (-score[w], w))
            cluster[best] = nc
        nc += 1
    vw = np.bincount(cluster, weights=h.vw, minlength=nc).astype(np.int64)
    merged = {}
    for net, w in zip(h.nets, h.nw):
        c = tuple(sorted({int(cluster[v]) for v in net}))
        if len(c) > 1:
            merged[c] = merged.get(c, 0) + int(w)
    keys = sorted(merged)
    return Hypergraph(nc, vw, [list(k) for k in keys], [merged[k] for k in keys]), cluster


def _fm_refine(h: Hypergraph, side: np.ndarray, maxw, passes=8):
    side = side.copy()
    for _ in range(passes):
        if _fm_pass(h, side, maxw) <= 0:
            break
    return side


def _fm_pass(h: Hypergraph, side, maxw) -> int:
    cnt = np.zeros((len(h.nets), 2), dtype=np.int64)
    for e, net in enumerate(h.nets):
        for v in net:
            cnt[e, side[v]] += 1
    gain = np.zeros(h.n, dtype=np.int64)
    for v in range(h.n):
        s = side[v]
        g = 0
        for e in h.vnets[v]:
            if cnt[e, s] == 1:
                g += h.nw[e]
            if cnt[e, 1 - s] == 0:
                g -= h.nw[e]
        gain[v] = g
    weight = [int(h.vw[side == 0].sum()), int(h.vw[side == 1].sum())]
    locked = np.zeros(h.n, dtype=bool)
    heap = [(-int(gain[v]), v) for v in range(h.n)]
    heapq.heapify(heap)
    moves, total, best, best_len = [], 0, 0, 0
    stall = max(50, h.n // 8)
    while heap:
        g, v = heapq.heappop(heap)
        g = -g
        if locked[v] or g != gain[v]:
            continue
        f, t = side[v], 1 - side[v]
        if weight[t] + h.vw[v] > maxw[t]:
            continue
        locked[v] = True
        touched = set()
        for e in h.vnets[v]:
            w = h.nw[e]
            net = h.nets[e]
            if cnt[e, t] == 0:
                for x in net:
                    if not locked[x]:
                        gain[x] += w
                        touched.add(x)
            elif cnt[e, t] == 1:
                for x in net:
                    if not locked[x] and side[x] == t:
                        gain[x] -= w
                        touched.add(x)
            cnt[e, f] -= 1
            cnt[e, t] += 1
            if cnt[e, f] == 0:
                for x in net:
                    if not locked[x]:
                        gain[x] -= w
                        touched.add(x)
            elif cnt[e, f] == 1:
                for x in net:
                    if not locked[x] and side[x] == f:
                        gain[x] += w
                        touched.add(x)
        side[v] = t
        weight[f] -= h.vw[v]
        weight[t] += h.vw[v]
        for x in touched:
            heapq.heappush(heap, (-int(gain[x]), x))
        moves.append(v)
        total += g
        if total > best:
            best, best_len = total, len(moves)
        elif len(moves) - best_len > stall:
            break
    for v in moves[best_len:]:
        side[v] = 1 - side[v]
    return best


def _grow(h: Hypergraph, target0, rng):
    """Breadth-first region growing from a random seed until side 0 holds target0 weight."""
    side = np.ones(h.n, dtype=np.int64)
    w0 = 0
    order = list(rng.permutation(h.n))
    frontier = []
    head = 0
    seen = np.zeros(h.n, dtype=bool)
    while w0 < target0:
        if head == len(frontier):
            while order and seen[order[-1]]:
                order.pop()
            if not order:
                break
            frontier.append(order.pop())
            seen[frontier[-1]] = True
        v = frontier[head]
        head += 1
        if w0 + h.vw[v] > target0 and w0 > 0:
            continue
        side[v] = 0
        w0 += h.vw[v]
        for e in h.vnets[v]:
            for x in h.nets[e]:
                if not seen[x]:
                    seen[x] = True
                    frontier.append(x)
    return side


def bisect(h: Hypergraph, ratio: float, epsilon: float, rng, tries: int = 6) -> np.ndarray:
    """Split into sides holding ratio / (1 - ratio) of the weight, within 1 + epsilon."""
    total = int(h.vw.sum())
    target = np.array([ratio * total, (1 - ratio) * total])
    maxw = [max(int(math.floor(t * (1 + epsilon))), int(math.ceil(t)), 1) for t in target]
    levels = [h]
    maps = []
    while levels[-1].n > COARSEST:
        cur = levels[-1]
        coarse, cl = _coarsen(cur, max(2, math.ceil(1.5 * total / COARSEST)), rng)
        if coarse.n > 0.9 * cur.n:
            break
        levels.append(coarse)
        maps.append(cl)
    top = levels[-1]
    best, best_cut = None, None
    for _ in range(tries):
        side = _fm_refine(top, _grow(top, target[0], rng), maxw)
        w0 = int(top.vw[side == 0].sum())
        if w0 > maxw[0] or total - w0 > maxw[1]:
            continue
        c = top.cut(side)
        if best_cut is None or c < best_cut:
            best, best_cut = side, c
    if best is None:
        best = _grow(top, target[0], rng)
    side = best
    for lvl in range(len(maps) - 1, -1, -1):
        side = side[maps[lvl]]
        side = _fm_refine(levels[lvl], side, maxw)
    return side


def _components(h: Hypergraph, vertices) -> list[list[int]]:
    """Connected pieces of the sub-hypergraph induced on local vertex list."""
    inside = set(vertices)
    seen = set()
    out = []
    for s in vertices:
        if s in seen:
            continue
        comp = [s]
        seen.add(s)
        stack = [s]
        while stack:
            v = stack.pop()
            for e in h.vnets[v]:
                net = h.nets[e]
                if sum(1 for x in net if x in inside) < 2:
                    continue
                for x in net:
                    if x in inside and x not in seen:
                        seen.add(x)
                        comp.append(x)
                        stack.append(x)
        out.append(sorted(comp))
    return out


def movable_hypergraph(netlist: Netlist) -> tuple[Hypergraph, np.ndarray]:
    """Hypergraph over movable cells; returns it with the local->cell id map."""
    mov = netlist.movable_ids
    local = np.full(netlist.n_cells, -1, dtype=np.int64)
    local[mov] = np.arange(len(mov))
    indptr, order = netlist.net_pin_order
    cells = local[netlist.pin_cell[order]]
    nets = []
    for u in range(netlist.n_nets):
        m = cells[indptr[u]:indptr[u + 1]]
        m = sorted(set(m[m >= 0].tolist()))
        if len(m) > 1:
            nets.append(m)
    return Hypergraph(len(mov), np.ones(len(mov), dtype=np.int64), nets, [1] * len(nets)), mov


def partition(netlist: Netlist, target_parts: int = 1, max_part_cells: int = 2048,
              epsilon: float = 0.1, min_part_cells: int = 2, seed: int = 0) -> PartitionResult:
    """Split movable cells into connected, size-bounded parts.

    Each connected component of the movable-cell hypergraph gets a share of
    ``target_parts`` proportional to its size (at least enough parts to
    respect ``max_part_cells``). Pieces smaller than ``min_part_cells`` stay
    in the root graph.
    """
    rng = np.random.default_rng(seed)
    h, mov = movable_hypergraph(netlist)
    total = max(h.n, 1)
    parts_local: list[list[int]] = []

    def split(vertices, k):
        k = max(k, math.ceil(len(vertices) / max_part_cells))
        if k <= 1 or len(vertices) < 2:
            parts_local.append(vertices)
            return
        sub = _induced(h, vertices)
        k0 = k // 2
        side = bisect(sub, k0 / k, epsilon, rng)
        left = [vertices[i] for i in np.flatnonzero(side == 0)]
        right = [vertices[i] for i in np.flatnonzero(side == 1)]
        if not left or not right:
            parts_local.append(vertices)
            return
        split(left, k0)
        split(right, k - k0)

    for comp in _components(h, list(range(h.n))):
        k = max(1, round(target_parts * len(comp) / total))
        split(comp, k)

    belong = np.zeros(netlist.n_cells, dtype=np.int64)
    parts = []
    for p in parts_local:
        for piece in _components(h, p):
            if len(piece) < min_part_cells:
                continue
            ids = np.sort(mov[piece])
            parts.append(ids)
            belong[ids] = len(parts)
    return PartitionResult(parts, belong)


def trivial_partition(netlist: Netlist) -> PartitionResult:
    return PartitionResult([], np.zeros(netlist.n_cells, dtype=np.int64))
