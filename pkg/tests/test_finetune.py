import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowplace import finetune as ft
from flowplace.config import PipelineConfig
from flowplace.density import (auto_grid, check_grid, density_field, laplacian, overflow_ratio,
                               sample_field, solve_poisson)
from flowplace.finetune import (FinetuneConfig, finetune, fit_rigid, lambda_update,
                                random_placement, rigid_transform)
from flowplace.netlist import Placement, make_netlist
from flowplace.synth import SynthSpec, generate_synthetic
from flowplace.wirelength import hpwl, wa_wirelength

from conftest import toy


# wirelength


def test_wa_two_pin_limit():
    nl = toy(["t", "a"], [["t", "a"]], {"t": (0.0, 0.0)})
    pl = Placement([[0.0, 0.0], [1.0, 0.0]])
    vals = [wa_wirelength(nl, pl, g)[0] for g in (1.0, 10.0, 100.0)]
    assert vals[0] < vals[1] < vals[2] <= 1.0
    assert vals[2] == pytest.approx(1.0, abs=1e-6)


def test_wa_coincident_pins():
    nl = toy(["t", "a", "b"], [["t", "a", "b"]], {"t": (2.0, 2.0)})
    val, grad = wa_wirelength(nl, Placement([[2.0, 2.0]] * 3), 5.0)
    assert val == 0.0 and not np.any(grad)


def test_hpwl_examples():
    nl = toy(["t", "a"], [["t", "a"]], {"t": (0.0, 0.0)})
    assert hpwl(nl, Placement([[0.0, 0.0], [3.0, 4.0]])) == 7.0
    assert hpwl(nl, Placement([[0.0, 0.0], [0.0, 0.0]])) == 0.0


def _fd(fun, xy, cells, h):
    num = np.zeros((len(cells), 2))
    for k, c in enumerate(cells):
        for a in (0, 1):
            p, m = xy.copy(), xy.copy()
            p[c, a] += h
            m[c, a] -= h
            num[k, a] = (fun(p) - fun(m)) / (2 * h)
    return num


def test_wa_gradient_fd():
    nl = generate_synthetic(SynthSpec(50, 8, seed=0))
    xy = random_placement(nl, 1).xy
    g = 0.7
    _, grad = wa_wirelength(nl, Placement(xy), g)
    mov = nl.movable_ids
    num = _fd(lambda p: wa_wirelength(nl, Placement(p), g)[0], xy, mov, 1e-6)
    assert np.abs(num - grad[mov]).max() / np.abs(num).max() < 1e-5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 20.0))
def test_wa_below_hpwl(seed, gamma):
    nl = generate_synthetic(SynthSpec(40, 6, seed=seed))
    pl = random_placement(nl, seed)
    val, _ = wa_wirelength(nl, pl, gamma)
    assert 0.0 <= val <= hpwl(nl, pl) + 1e-9


# density


def test_grid_checks():
    assert check_grid(64) == 64
    for bad in (8, 48, 0):
        with pytest.raises(ValueError):
            check_grid(bad)
    assert auto_grid(10) == 16 and auto_grid(5000) == 128 and auto_grid(10**7) == 512


def test_uniform_density_is_equilibrium():
    m = 16
    ij = np.array([(i + 0.5, j + 0.5) for i in range(m) for j in range(m)])
    n = len(ij)
    names = [f"c{k}" for k in range(n)] + ["t"]
    nets = [[f"c{k}", f"c{k + 1}"] for k in range(n - 1)] + [["c0", "t"]]
    sizes = [(1.0, 1.0)] * n + [(0.0, 0.0)]
    nl = toy(names, nets, {"t": (0.0, 0.0)}, core=(0.0, 0.0, 16.0, 16.0), sizes=sizes)
    xy = np.vstack([ij, [[0.0, 0.0]]])
    field, value, grad = density_field(nl, Placement(xy), m)
    assert np.abs(field.rho).max() < 1e-9
    assert np.abs(field.psi).max() < 1e-12
    assert np.abs(grad).max() < 1e-9 and abs(value) < 1e-12
    assert np.abs(solve_poisson(np.full((32, 32), 3.0))).max() < 1e-12


def test_mirror_cells_repel():
    nl = toy(["a", "b", "t"], [["a", "b"], ["a", "t"]], {"t": (0.0, 0.0)},
             core=(0.0, 0.0, 10.0, 10.0), sizes=[(0.5, 0.5), (0.5, 0.5), (0.0, 0.0)])
    xy = np.array([[4.1, 5.0], [5.9, 5.0], [0.0, 0.0]])
    field, _, grad = density_field(nl, Placement(xy), 32)
    assert np.allclose(grad[0], -grad[1], atol=1e-9 * np.abs(grad).max())
    assert grad[0, 0] > 0 > grad[1, 0]       # descent moves them apart
    e = sample_field(field, xy[:2])
    assert e[0, 0] < 0 < e[1, 0] and e[0, 0] == pytest.approx(-e[1, 0])


def test_poisson_residual_and_means():
    rng = np.random.default_rng(0)
    rho = rng.uniform(size=(64, 64))
    psi = solve_poisson(rho)
    assert np.abs(laplacian(psi) + (rho - rho.mean())).max() < 1e-6
    assert abs(psi.mean()) < 1e-12


def test_density_gradient_fd():
    nl = generate_synthetic(SynthSpec(40, 6, seed=2))
    xy = random_placement(nl, 3).xy
    # pull cells off the core boundary, where the splatted charge has a kink
    mov = nl.movable_ids
    c = ft.core_center(nl)
    xy[mov] = c + 0.8 * (xy[mov] - c)
    _, _, grad = density_field(nl, Placement(xy), 16, with_field=False)
    num = _fd(lambda p: density_field(nl, Placement(p), 16, with_field=False)[1], xy, mov, 1e-6)
    assert np.abs(num - grad[mov]).max() / np.abs(num).max() < 1e-3


def test_overflow_ratio_bounds():
    nl = generate_synthetic(SynthSpec(300, 20, seed=0))
    stacked = Placement.from_movable(nl, np.tile(ft.core_center(nl), (300, 1)))
    assert overflow_ratio(nl, stacked, 32) > 0.9
    assert 0.0 <= overflow_ratio(nl, random_placement(nl, 0), 32) < 0.9


# density weight schedule


def test_lambda_update_examples():
    assert lambda_update(1.0, -1.0, 0, 1.05) == 1.05 * max(1.0, 0.98)
    assert lambda_update(1.0, 0.0, 10, 1.05) == 1.05 * 1.05 ** 0
    assert lambda_update(1.0, 350000.0, 10, 1.05) == 1.05 * 1.05 ** -1
    assert lambda_update(2.0, 350000.0, 10, 1.05) == pytest.approx(2.0)
    assert lambda_update(1.0, -5.0, 10_000, 1.05) == 1.05 * 0.98


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e3), st.floats(0, 1e6), st.floats(0, 1e6), st.integers(0, 5000))
def test_lambda_update_monotone(lam, d1, d2, epochs):
    lo, hi = sorted((d1, d2))
    a = lambda_update(lam, lo, epochs)
    b = lambda_update(lam, hi, epochs)
    assert a > 0 and b > 0 and b <= a


# rigid transform


def test_rigid_identity_and_half_turn():
    nl = toy(["a", "t"], [["a", "t"]], {"t": (0.0, -10.0)})
    pl = Placement([[1.0, 0.0], [0.0, -10.0]])
    assert np.array_equal(rigid_transform(nl, pl, 0, 0, 0).xy, pl.xy)
    out = rigid_transform(nl, pl, 180, 0, 0)
    assert np.allclose(out.xy[0], [-1.0, 0.0])
    assert np.array_equal(out.xy[1], pl.xy[1])


def test_fit_rigid_exhaustive():
    nl = toy(["a", "b", "c", "t", "s"], [["a", "t"], ["b", "t"], ["c", "s"], ["a", "b"]],
             {"t": (8.0, 1.0), "s": (-3.0, 9.0)})
    pl = Placement([[-6.0, -1.0], [-7.0, 2.0], [4.0, -8.0], [8.0, 1.0], [-3.0, 9.0]])
    scores = [hpwl(nl, rigid_transform(nl, pl, 30.0 * k, 0, 0)) for k in range(12)]
    theta, _, _ = fit_rigid(nl, pl)
    assert theta == 30.0 * int(np.argmin(scores))
    assert theta != 0.0


# fine-tuning


def test_config_validation():
    with pytest.raises(ValueError):
        FinetuneConfig(learning_rate=0)
    with pytest.raises(ValueError):
        FinetuneConfig(grid_m=20)
    with pytest.raises(ValueError):
        FinetuneConfig(gamma=-1)
    with pytest.raises(ValueError):
        FinetuneConfig(rigid=(0.0, math.inf, 0.0))


def test_convergence_200():
    nl = generate_synthetic(SynthSpec(200, 56, seed=0))
    res = finetune(nl, random_placement(nl, 1), FinetuneConfig(stop_overflow=0.0))
    h = [r["hpwl"] for r in res.history]
    of = np.array([r["overflow"] for r in res.history])
    assert len(h) == 1001
    assert h[-1] < 0.5 * h[0]
    windows = of[1:].reshape(-1, 100).mean(axis=1)
    assert np.all(np.diff(windows) <= 1e-12)
    assert np.array_equal(res.placement.xy[nl.terminal_ids], nl.fixed_xy[nl.terminal_ids])


def test_stationary_from_converged_teacher():
    nl = generate_synthetic(SynthSpec(200, 56, seed=1))
    teacher = finetune(nl, random_placement(nl, 1), PipelineConfig().teach)
    last = teacher.history[-1]
    again = finetune(nl, teacher.placement,
                     FinetuneConfig(lambda_d=last["lambda_d"], rigid=(0.0, 0.0, 0.0),
                                    max_iterations=50, stop_overflow=0.0))
    assert len(again.history) == 51
    assert abs(again.history[-1]["hpwl"] / last["hpwl"] - 1) < 0.01


def test_lambda_history_follows_schedule():
    nl = generate_synthetic(SynthSpec(150, 40, seed=4))
    res = finetune(nl, random_placement(nl, 0), FinetuneConfig(max_iterations=60, stop_overflow=0))
    hist = res.history
    checked = 0
    for prev, cur in zip(hist, hist[1:]):
        if cur["hpwl"] < prev["hpwl"]:
            t = cur["iteration"]
            assert cur["lambda_d"] / prev["lambda_d"] == pytest.approx(1.05 * max(0.999 ** t, 0.98))
            checked += 1
    assert checked > 10


def test_early_stop_and_history_file(tmp_path):
    nl = generate_synthetic(SynthSpec(300, 40, seed=5))
    res = finetune(nl, random_placement(nl, 0), FinetuneConfig(), tmp_path / "h.jsonl")
    assert res.stopped_early
    assert res.history[-1]["overflow"] < 0.1
    lines = (tmp_path / "h.jsonl").read_text().splitlines()
    assert len(lines) == len(res.history)
    assert set(res.history[0]) == {"iteration", "hpwl", "wl", "density", "lambda_d", "overflow"}
    assert res.iterations_to(math.inf, 0.1) == res.history[-1]["iteration"]


def test_non_finite_gradient_aborts(monkeypatch, small):
    def broken(netlist, placement, gamma):
        g = np.zeros((netlist.n_cells, 2))
        g[netlist.movable_ids[0]] = np.nan
        return 0.0, g

    monkeypatch.setattr(ft, "wa_wirelength", broken)
    with pytest.raises(FloatingPointError, match=small.cell_names[small.movable_ids[0]]):
        finetune(small, random_placement(small, 0), FinetuneConfig(max_iterations=3))


def test_finetune_deterministic(small):
    a = finetune(small, random_placement(small, 0), FinetuneConfig(max_iterations=30))
    b = finetune(small, random_placement(small, 0), FinetuneConfig(max_iterations=30))
    assert np.array_equal(a.placement.xy, b.placement.xy)


def test_make_netlist_zero_size_terminal_in_density():
    # zero-area terminals carry no charge
    nl = make_netlist(["a", "t"], [1.0, 0.0], [1.0, 0.0], [False, True], [[0, 0], [0, 0]],
                      ["n"], [0, 1], [0, 0], core=(0, 0, 4, 4))
    field, _, _ = density_field(nl, Placement([[2.0, 2.0], [0.0, 0.0]]), 16)
    assert field.charge.sum() == pytest.approx(1.0 / 16.0)
