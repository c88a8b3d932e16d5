import json

import numpy as np
import pytest

from tripoint.ansatz import (build_boundary_map, build_partition, dump_raster, eval_phi,
                             eval_phi_eps, phi_residual_profile, radial_cutoff, smoothstep,
                             zeta_argument)
from tripoint.errors import DeltaTooLarge, StepTooCoarse
from tripoint.io import read_raw
from tripoint.junction import signed_halfline_distance, solve_angles

RESIDUAL_DELTA_FACTOR = 0.45     # wide bumps; see the eps trend test below


@pytest.fixture(scope="module")
def wide_bmap(product, angles, bmap):
    return build_boundary_map(product, angles, delta=RESIDUAL_DELTA_FACTOR * min(angles.alpha),
                              profiles=bmap.profiles)


def _mid_sector_angles(angles):
    lo = np.concatenate([[angles.theta0], angles.theta[:2]])
    return 0.5 * (lo + angles.theta)


def test_smoothstep_is_c2():
    t = np.linspace(-0.5, 1.5, 2001)
    s = smoothstep(t)
    assert s[0] == 0.0 and s[-1] == 1.0
    assert np.all(np.diff(s) >= 0)
    h = 1e-4
    for t0 in (0.0, 1.0):
        d1 = (smoothstep(t0 + h) - smoothstep(t0 - h)) / (2 * h)
        d2 = (smoothstep(t0 + h) - 2 * smoothstep(t0) + smoothstep(t0 - h)) / h ** 2
        assert abs(d1) < 1e-6 and abs(d2) < 1e-3


def test_partition_of_unity():
    ang = solve_angles([1, 1, 1])
    part = build_partition(ang, 0.2)
    th = np.linspace(-np.pi, 3 * np.pi, 10_000)
    w = part.weights(th)
    assert np.max(np.abs(w.sum(-1) - 1.0)) < 1e-10
    assert np.all(w >= 0)


def test_plateau_on_junction_direction(angles):
    part = build_partition(angles, 0.2)
    for i in (1, 2, 3):
        w = part.weights(np.array(angles.theta[i - 1]))
        want = np.zeros(6)
        want[2 * i - 1] = 1.0
        assert np.allclose(w, want, atol=0)


def test_intervals_layout(angles):
    part = build_partition(angles, 0.2)
    iv = part.intervals()
    assert len(iv) == 6
    assert iv[1] == pytest.approx((angles.theta[0] - 0.2, angles.theta[0] + 0.2))
    # neighbouring intervals overlap only on the ramp zones
    for (a0, a1), (b0, b1) in zip(iv, iv[1:]):
        assert b0 < a1


def test_delta_too_large(angles):
    with pytest.raises(DeltaTooLarge):
        build_partition(angles, np.pi / 3)
    with pytest.raises(DeltaTooLarge):
        build_partition(angles, 0.0)
    assert build_partition(angles).delta == pytest.approx(0.15 * min(angles.alpha))


def test_zero_inside_half_disk(bmap, rng):
    r = np.sqrt(rng.uniform(0, 0.25, 500))
    t = rng.uniform(0, 2 * np.pi, 500)
    x = np.stack([r * np.cos(t), r * np.sin(t)], -1)
    assert np.all(eval_phi(bmap, x) == 0.0)
    assert radial_cutoff(0.5) == 0.0 and radial_cutoff(1.0) == 1.0


def test_far_mid_sector_is_well(bmap, angles, product):
    for i, t in enumerate(_mid_sector_angles(angles)):
        x = 50.0 * np.array([np.cos(t), np.sin(t)])
        assert np.array_equal(eval_phi(bmap, x), product.wells[i])


def test_far_on_halfline_is_profile_centre(bmap, angles):
    for i, pair in enumerate(((1, 2), (2, 3), (3, 1)), start=1):
        t = angles.theta[i - 1]
        x = 40.0 * np.array([np.cos(t), np.sin(t)])
        assert np.allclose(eval_phi(bmap, x), bmap._evals[pair](0.0), atol=1e-12)


def test_profile_orientation(bmap, angles, product):
    # across half-line i the map runs from the well on its clockwise side to the next one
    for i in (1, 2, 3):
        t = angles.theta[i - 1]
        e = np.array([np.cos(t), np.sin(t)])
        n = np.array([-e[1], e[0]])
        before = eval_phi(bmap, 30 * e - 8 * n)
        after = eval_phi(bmap, 30 * e + 8 * n)
        assert np.linalg.norm(before - product.wells[i - 1]) < 1e-6
        assert np.linalg.norm(after - product.wells[i % 3]) < 1e-6


def test_eps_one_is_phi(bmap, rng):
    x = rng.uniform(-2, 2, (200, 2))
    assert np.array_equal(eval_phi_eps(bmap, x, 1.0), eval_phi(bmap, x))


def test_boundary_mid_sector_for_small_eps(bmap, angles, product):
    for i, t in enumerate(_mid_sector_angles(angles)):
        x = np.array([np.cos(t), np.sin(t)])
        for eps in (0.5, 0.2, 0.05, 0.01):
            assert np.array_equal(eval_phi_eps(bmap, x, eps), product.wells[i])


def test_zeta_argument_scaling(bmap, rng):
    x = rng.uniform(-1, 1, (100, 2))
    for eps in (0.3, 0.05):
        for i in (1, 2, 3):
            d = signed_halfline_distance(bmap.partition.theta[i - 1], x)
            assert np.allclose(zeta_argument(bmap, x, eps, i), d / eps, rtol=1e-12, atol=1e-12)


def test_phi_bounded(bmap, rng):
    x = rng.uniform(-30, 30, (100_000, 2))
    v = np.linalg.norm(eval_phi(bmap, x), axis=-1)
    assert v.max() <= bmap.bound() + 1e-9


def test_phi_continuous_on_rings(bmap):
    for R in (0.75, 3.0, 20.0):
        jumps = []
        for m in (20_000, 40_000):
            t = np.linspace(0, 2 * np.pi, m + 1)
            v = eval_phi(bmap, R * np.stack([np.cos(t), np.sin(t)], -1))
            jumps.append(np.max(np.linalg.norm(np.diff(v, axis=0), axis=1)))
        assert jumps[1] <= 0.6 * jumps[0]


def test_boundary_trace_converges(bmap, angles, product):
    """Away from the junction points the eps=0.05 trace is within 1e-3 of u0's trace."""
    for i in (1, 2, 3):
        lo, hi = angles.sector_bounds(i)
        t = np.linspace(lo + 0.3, hi - 0.3, 50)
        x = np.stack([np.cos(t), np.sin(t)], -1)
        err = np.linalg.norm(eval_phi_eps(bmap, x, 0.05) - product.wells[i - 1], axis=-1)
        assert err.max() < 1e-3


def test_residual_vanishes_mid_sector(bmap, angles):
    # mid-sector rays are covered by the constant plateau: only FD truncation remains
    r = phi_residual_profile(bmap, 0.1, 0.5, samples=2000)
    assert r.sup > 0      # the full profile sees the interface layers
    t = _mid_sector_angles(angles)
    x = np.stack([np.cos(t), np.sin(t)], -1)[:, None, :] * np.linspace(0.4, 1, 20)[:, None]
    x = x.reshape(-1, 2)
    h = 1e-4
    c = eval_phi_eps(bmap, x, 0.1)
    lap = sum(eval_phi_eps(bmap, x + e, 0.1) for e in np.eye(2) * h)
    lap = lap + sum(eval_phi_eps(bmap, x - e, 0.1) for e in np.eye(2) * h) - 4 * c
    res = -lap / h ** 2 + bmap.potential.grad(c) / (2 * 0.01)
    assert np.max(np.abs(res)) < 1e-8


def test_residual_decreases_with_eps(wide_bmap):
    sups = [phi_residual_profile(wide_bmap, e, 0.5).sup for e in (0.2, 0.1, 0.05, 0.025)]
    assert all(b < a for a, b in zip(sups, sups[1:])), sups


def test_step_too_coarse(bmap):
    with pytest.raises(StepTooCoarse):
        phi_residual_profile(bmap, 0.1, h=0.02)
    with pytest.raises(ValueError):
        phi_residual_profile(bmap, 0.1, alpha=1.0)


def test_raster_dump(bmap, tmp_path):
    files = dump_raster(bmap, tmp_path / "phi.raw", eps=0.5, n=33)
    meta = json.loads(files[1].read_text())
    assert meta["eps"] == 0.5
    layers, _ = read_raw(files[0])
    assert layers.shape == (2, 33, 33)
