import json

import numpy as np
import pytest

from oracles import strip_oracle
from tripoint.errors import Blowup, EnergyIncreased, MaxStepsExceeded, ResolutionTooCoarse
from tripoint.io import read_raw
from tripoint.potential import Potential
from tripoint.solver import (DiskGrid, Field2D, _NumpyKernel, _ProductKernel, apriori_bound_check,
                             blowup_radius, energy_Ieps, init_flow, l2_directional_check,
                             lyapunov, make_grid, residual_field, solve_steady, solve_strip,
                             stable_dt, step_flow)


def _constant(value):
    value = np.asarray(value, float)
    return lambda pts, eps: np.broadcast_to(value, pts.shape).copy()


def test_grid_symmetry():
    g = DiskGrid(128)
    assert np.array_equal(g.interior, np.rot90(g.interior))
    assert np.array_equal(g.x, -g.x[::-1])
    # interior nodes see only interior or band neighbours
    iy, ix = np.nonzero(g.interior)
    ok = g.interior | g.band
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert np.all(ok[iy + dy, ix + dx])


def test_make_grid_mid_sector_boundary(bmap, angles, product):
    g, f = make_grid(128, 0.1, bmap)
    lo = np.concatenate([[0.0], angles.theta[:2]])
    mids = 0.5 * (lo + angles.theta)
    th = np.mod(np.arctan2(g.Y, g.X), 2 * np.pi)
    for i, t in enumerate(mids):
        sel = g.band & (np.abs(np.angle(np.exp(1j * (th - t)))) < 0.3)
        vals = np.moveaxis(f.u, 0, -1)[sel]
        assert np.max(np.abs(vals - product.wells[i])) < 1e-12


def test_resolution_too_coarse(bmap):
    with pytest.raises(ResolutionTooCoarse):
        make_grid(64, 0.05, bmap)


def test_initial_energy_scale(bmap, product, table):
    _, f = make_grid(256, 0.1, bmap)
    E = energy_Ieps(f, product)
    I0 = 2 * table.sides.sum()
    assert np.isfinite(E)
    assert 0.5 * I0 < E < 2 * I0


def test_kernels_agree(product, rng):
    g = DiskGrid(64)
    u = rng.uniform(-1, 1, (2, g.n, g.n))
    f = Field2D(g, u, 0.2)
    a, b = _ProductKernel(product), _NumpyKernel(product)
    assert a.energy(u.reshape(2, -1), g, 0.2) == pytest.approx(b.energy(u.reshape(2, -1), g, 0.2), rel=1e-13)
    oa, ob = u.reshape(2, -1).copy(), u.reshape(2, -1).copy()
    ra = a.step(u.reshape(2, -1), oa, g, 0.2, 1e-5)
    rb = b.step(u.reshape(2, -1), ob, g, 0.2, 1e-5)
    assert np.allclose(oa, ob, rtol=0, atol=1e-13)
    assert ra[0] == pytest.approx(rb[0], rel=1e-12)
    assert ra[0] == pytest.approx(residual_field(f, product).max(), rel=1e-12)


def test_constant_fixed_point(product):
    _, f = make_grid(64, 0.2, _constant(product.wells[0]))
    st = init_flow(f, product)
    before = st.field.u.copy()
    step_flow(st)
    assert np.array_equal(st.field.u, before)
    assert lyapunov(f, product) == 0.0
    assert energy_Ieps(f, product) == 0.0


def test_constant_boundary_converges_immediately(product):
    _, f = make_grid(64, 0.2, _constant(product.wells[0]))
    rep, u, _ = solve_steady(f, product)
    assert rep.iterations <= 2
    assert rep.residual < 1e-10


def test_descent_and_fixed_ring(bmap, product):
    _, f = make_grid(96, 0.2, bmap)
    st = init_flow(f, product)
    ring = ~f.grid.interior
    before = f.u[:, ring].copy()
    for _ in range(300):
        step_flow(st)
    J = np.array(st.J)
    assert np.all(np.diff(J) <= 1e-12 * np.abs(J[:-1]))
    assert np.array_equal(st.field.u[:, ring], before)


def test_oversized_step_detected_then_recovered(bmap, product, rng):
    _, f = make_grid(64, 0.2, bmap)
    f.u[:, f.grid.interior] += 1e-3 * rng.standard_normal((2, f.grid.n_interior))
    st = init_flow(f, product)
    big = 4.0 * st.dt
    with pytest.raises(EnergyIncreased):
        for _ in range(200):
            step_flow(st, strict=True, dt=big)
    st = init_flow(f, product)
    st.dt = big
    for _ in range(200):
        step_flow(st)
    assert st.rejected > 0
    assert st.dt < big
    J = np.array(st.J)
    assert np.all(np.diff(J) <= 1e-12 * np.abs(J[:-1]))


def test_blowup_guard(product):
    # W = -|u|^2 pushes every value outward while lowering J
    repel = Potential.from_functions(product.wells, lambda u: -np.sum(np.asarray(u) ** 2, -1))
    _, f = make_grid(64, 0.2, _constant((1.0, 0.0)))
    st = init_flow(f, repel, backend="numpy")
    with pytest.raises(Blowup):
        for _ in range(5000):
            step_flow(st)
    assert st.sup_u <= 1.1 * blowup_radius(product)
    assert blowup_radius(product) == pytest.approx(1.5)


def test_max_steps(bmap, product):
    _, f = make_grid(64, 0.2, bmap)
    with pytest.raises(MaxStepsExceeded) as exc:
        solve_steady(f, product, max_steps=50, trace_every=10)
    assert exc.value.steps == 50
    assert len(exc.value.residual_trace) == 5


def test_stable_dt_bounds():
    dt = stable_dt(0.01, 0.1, 20.0)
    assert dt <= 0.9 * 0.01 ** 2 / 4
    assert dt <= 0.9 * 0.1 ** 2 / 20.0


def test_strip_matches_bvp_oracle(section):
    eps = 0.1
    res = solve_strip(section, (-1, 0), (1, 0), eps, n=256,
                      init=lambda x: np.stack([np.tanh(x / eps), 0 * x], -1))
    oracle = strip_oracle(eps, res.x)
    assert np.max(np.abs(res.u[:, 0] - oracle)) < 1e-2
    assert np.max(np.abs(res.u[:, 1])) < 1e-12
    assert res.y_spread < 1e-12


def test_strip_energy_near_twice_gamma(section):
    # per unit height; fixed n, so the small remaining error is discretisation
    for eps in (0.2, 0.1, 0.05):
        res = solve_strip(section, (-1, 0), (1, 0), eps, n=256,
                          init=lambda x, e=eps: np.stack([np.tanh(x / e), 0 * x], -1))
        assert res.energy_per_height == pytest.approx(8 / 3, rel=0.01)


def test_ladder_sup_bound_and_report(ladder):
    reports = json.loads((ladder["root"] / "solve.json").read_text())
    for rep in reports:
        assert rep["sup_u"] <= rep["bound"]
        assert rep["max_rise"] <= 1e-12
        assert rep["apriori_W_ok"]


def test_steady_residual_recomputed(ladder):
    u = ladder["fields"][0.1]
    pot = ladder["potential"]
    rep = json.loads((ladder["root"] / "solve.json").read_text())[1]
    k = _NumpyKernel(pot)
    buf = u.u.reshape(2, -1).copy()
    r, _ = k.step(u.u.reshape(2, -1), buf, u.grid, u.eps, 0.0)
    assert r == pytest.approx(rep["residual"], rel=1e-12)
    assert r <= 1e-6 / u.eps ** 2


def test_steady_is_critical_point(ladder):
    u = ladder["fields"][0.1]
    assert l2_directional_check(u, ladder["potential"]) <= 1e-6


def test_apriori_checks(ladder, product):
    u = ladder["fields"][0.1]
    bsup = float(np.max(np.linalg.norm(np.moveaxis(u.u, 0, -1)[u.grid.band], axis=-1)))
    ok, *_ = apriori_bound_check(u, product, bsup)
    assert ok
    _, init = make_grid(u.grid.n, 0.1, ladder["bmap"])
    assert apriori_bound_check(init, product, bsup)[0]
    spiked = u.copy()
    k = spiked.grid.interior_flat[1000]
    spiked.u.reshape(2, -1)[:, k] = (10.0, 0.0)
    ok, node, w, bound = apriori_bound_check(spiked, product, bsup)
    assert not ok and node == k and w > bound


def test_refinement_consistency(ladder, product):
    fine = energy_Ieps(ladder["fields"][0.1], product)
    _, f = make_grid(128, 0.1, ladder["bmap"])
    _, coarse, _ = solve_steady(f, product)
    assert abs(energy_Ieps(coarse, product) - fine) <= 0.02 * fine


def test_energy_along_flow_decreases(bmap, product):
    _, f = make_grid(96, 0.2, bmap)
    st = init_flow(f, product)
    snaps = []
    for _ in range(5):
        for _ in range(100):
            step_flow(st)
        snaps.append(energy_Ieps(st.field, product))
    assert all(b <= a for a, b in zip(snaps, snaps[1:]))


def test_field_dump(ladder, tmp_path):
    u = ladder["fields"][0.2]
    raw, side = u.dump(tmp_path / "u.raw", {"note": "x"})
    layers, meta = read_raw(raw)
    assert np.array_equal(layers, u.u)
    assert meta["eps"] == 0.2 and meta["n"] == u.grid.n and meta["note"] == "x"
