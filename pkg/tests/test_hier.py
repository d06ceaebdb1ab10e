import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowplace.finetune import random_placement
from flowplace.hier import (PSEUDO_AREA_FACTOR, _stable_argsort, build_hierarchy, project,
                           uncoarsen)
from flowplace.netlist import NetlistError, Placement
from flowplace.partition import movable_hypergraph, partition, trivial_partition
from flowplace.synth import SynthSpec, generate_synthetic

from conftest import toy


def _two_communities():
    left = [f"a{i}" for i in range(6)]
    right = [f"b{i}" for i in range(6)]
    nets = [list(p) for p in itertools.combinations(left, 2)]
    nets += [list(p) for p in itertools.combinations(right, 2)]
    nets += [["a0", "b0"], ["t", "a3"], ["s", "b3"]]
    return toy(left + right + ["t", "s"], nets, {"t": (-9.0, 0.0), "s": (9.0, 0.0)})


def _cut(nl, side):
    cut = 0
    for u in range(nl.n_nets):
        cells = nl.pin_cell[nl.pin_net == u]
        cells = cells[~nl.is_terminal[cells]]
        cut += len({side[c] for c in cells}) > 1
    return cut


def test_partition_separates_communities():
    nl = _two_communities()
    res = partition(nl, target_parts=2, max_part_cells=6, epsilon=0.0)
    side = {c: b for c, b in enumerate(res.belong)}
    mov = nl.movable_ids.tolist()
    best = min(_cut(nl, {c: int(c in combo) for c in mov})
               for combo in itertools.combinations(mov, 6))
    assert _cut(nl, side) == best == 1
    assert len({res.belong[i] for i in range(6)}) == 1
    assert len({res.belong[i] for i in range(6, 12)}) == 1
    assert res.belong[0] != res.belong[6]


def test_partition_small_netlist_single_part(small):
    res = partition(small, target_parts=1, max_part_cells=2048)
    assert sum(len(p) for p in res.parts) == len(small.movable_ids)
    assert len(res.parts) == len(np.unique(small.components()[small.movable_ids]))


def _connected(nl, cells):
    cells = set(int(c) for c in cells)
    h, mov = movable_hypergraph(nl)
    local = {int(c): i for i, c in enumerate(mov)}
    adj = {c: set() for c in cells}
    for net in h.nets:
        members = [int(mov[v]) for v in net if int(mov[v]) in cells]
        for a in members:
            adj[a].update(members)
    start = next(iter(cells))
    seen, queue = {start}, deque([start])
    while queue:
        for b in adj[queue.popleft()] - seen:
            seen.add(b)
            queue.append(b)
    return seen == cells and all(c in local for c in cells)


@settings(max_examples=8, deadline=None)
@given(st.integers(200, 800), st.integers(2, 6), st.integers(0, 1000))
def test_partition_invariants(n, k, seed):
    nl = generate_synthetic(SynthSpec(n, 20, seed=seed))
    cap = int(np.ceil(n / k * 1.1))
    res = partition(nl, target_parts=k, max_part_cells=cap, seed=seed)
    seen = set()
    for p, cells in enumerate(res.parts):
        assert len(cells) <= cap
        assert not seen & set(cells)
        seen |= set(cells)
        assert not nl.is_terminal[list(cells)].any()
        assert np.all(res.belong[list(cells)] == p + 1)
        assert _connected(nl, cells)


def test_trivial_hierarchy_is_identity(small):
    hier = build_hierarchy(small, trivial_partition(small))
    assert hier.n_branches == 0
    assert hier.root.same_as(small)


def test_pseudo_cell_side():
    nl = toy(["a", "b", "c", "t"], [["a", "b"], ["b", "c"], ["c", "t"]], {"t": (0.0, 0.0)},
             sizes=[(2, 3), (1, 4), (1, 1), (1, 1)])
    part = partition(nl, target_parts=1, max_part_cells=2)
    hier = build_hierarchy(nl, part)
    for b, cells in enumerate(hier.branch_origin):
        s = float((nl.width[cells] * nl.height[cells]).sum())
        c = hier.pseudo_cell_of_branch[b]
        assert np.isclose(hier.root.width[c], np.sqrt(PSEUDO_AREA_FACTOR * s))
        assert np.isclose(hier.root.height[c], np.sqrt(PSEUDO_AREA_FACTOR * s))


def _hier(n=5000, parts=8, seed=0):
    nl = generate_synthetic(SynthSpec(n, 60, seed=seed))
    part = partition(nl, target_parts=parts, max_part_cells=int(np.ceil(n / parts * 1.1)), seed=seed)
    return nl, build_hierarchy(nl, part)


def test_hierarchy_counts_5000():
    nl, hier = _hier()
    n_mov = (~hier.root.is_terminal).sum() - hier.n_branches
    # each branch anchor is an original movable cell pinned as the branch terminal
    n_mov += sum(len(o) for o in hier.branch_origin)
    assert n_mov == len(nl.movable_ids) == 5000
    assert hier.eta < 1.5


def test_branch_terminal_is_largest_cell_at_origin():
    nl, hier = _hier(1500, 4, seed=2)
    for br, origin in zip(hier.branches, hier.branch_origin):
        t = br.terminal_ids
        assert len(t) == 1
        assert np.array_equal(br.fixed_xy[t[0]], [0.0, 0.0])
        assert br.width[t[0]] * br.height[t[0]] == pytest.approx(
            (nl.width[origin] * nl.height[origin]).max())


def test_root_pseudo_pins():
    nl, hier = _hier(1200, 3, seed=5)
    root = hier.root
    for b, cells in enumerate(hier.branch_origin):
        c = hier.pseudo_cell_of_branch[b]
        got = {root.net_names[u] for u in root.pin_net[root.pin_cell == c]}
        inside = np.isin(nl.pin_cell, cells)
        want = {nl.net_names[u] for u in np.unique(nl.pin_net[inside])} & set(root.net_names)
        assert got == want


def test_uncoarsen_translation():
    nl, hier = _hier(1000, 2, seed=1)
    root_xy = hier.root.fixed_xy.copy()
    root_xy[hier.root.movable_ids] = (10.0, 10.0)
    branches = [Placement(np.zeros((b.n_cells, 2))) for b in hier.branches]
    out = uncoarsen(hier, Placement(root_xy), branches)
    for cells in hier.branch_origin:
        assert np.all(out.xy[cells] == 10.0)
    branches[0].xy[1] = (1.0, -2.0)
    out = uncoarsen(hier, Placement(root_xy), branches)
    assert out.xy[hier.branch_origin[0][1]].tolist() == [11.0, 8.0]


def test_uncoarsen_shape_errors():
    nl, hier = _hier(600, 2, seed=1)
    with pytest.raises(NetlistError):
        uncoarsen(hier, Placement(np.zeros((3, 2))), [])


def test_project_uncoarsen_roundtrip():
    nl, hier = _hier(2000, 4, seed=3)
    pl = random_placement(nl, 0)
    root, branches = project(hier, pl)
    assert np.max(np.abs(uncoarsen(hier, root, branches).xy - pl.xy)) < 1e-9


@given(st.lists(st.integers(0, 2**40), max_size=300), st.sampled_from([1, 2**12, 2**20, 2**33]))
def test_stable_argsort_matches_numpy(values, mod):
    key = np.array(values, dtype=np.int64) % mod
    assert np.array_equal(_stable_argsort(key), np.argsort(key, kind="stable"))
