"""The far-field map phi: wells in the sector interiors, one-dimensional
profiles across the junction half-lines, and zero inside the unit half-disk.

    phi(x) = (1 - eta(x)) * ( sum_j eta_{2j-1}(theta) c_j
                              + sum_i eta_{2i}(theta) zeta_{i,i+1}(d_i(x)) )

``eta_{2i}`` is the bump around the half-line at ``theta_i`` and
``eta_{2j-1}`` covers the interior of sector ``j``.  ``d_i`` is the distance
to the half-line, signed so that the sector carrying ``c_i`` sees negative
values (the profile starts at ``c_i``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DeltaTooLarge, StepTooCoarse
from .heteroclinic import HeteroclinicProfile, solve_connection
from .io import write_raw
from .junction import JunctionAngles, signed_halfline_distance
from .potential import Potential


def smoothstep(t):
    """C^2 quintic ramp, 0 for t <= 0 and 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _wrap(a):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


@dataclass(frozen=True)
class AngularPartition:
    delta: float
    theta: np.ndarray       # theta_1, theta_2, theta_3 (theta_3 = theta0 + 2 pi)
    theta0: float

    def intervals(self):
        """The six open intervals, index j-1 for ``A_j``."""
        th = np.concatenate([[self.theta0], self.theta])
        d = self.delta
        out = []
        for j in range(1, 7):
            if j % 2 == 0:
                c = th[j // 2]
                out.append((c - d, c + d))
            else:
                k = (j - 1) // 2
                out.append((th[k] + d / 2, th[k + 1] - d / 2))
        return out

    def interface_weight(self, i, theta):
        """``eta_{2i}``: 1 within delta/2 of ``theta_i``, ramps to 0 at delta."""
        s = np.abs(_wrap(np.asarray(theta, float) - self.theta[i - 1]))
        half = 0.5 * self.delta
        return 1.0 - smoothstep((s - half) / half)

    def weights(self, theta):
        """Array ``(..., 6)`` of ``eta_1 .. eta_6``."""
        theta = np.asarray(theta, dtype=float)
        rel = np.mod(theta - self.theta0, 2.0 * np.pi)
        bounds = self.theta - self.theta0
        sector = np.searchsorted(bounds, rel, side="left")   # 0, 1, 2
        sector = np.minimum(sector, 2)
        out = np.zeros(theta.shape + (6,))
        total = np.zeros(theta.shape)
        for i in (1, 2, 3):
            w = self.interface_weight(i, theta)
            out[..., 2 * i - 1] = w
            total += w
        rest = 1.0 - total
        for j in range(3):
            out[..., 2 * j] = np.where(sector == j, rest, 0.0)
        return out


def build_partition(angles: JunctionAngles, delta=None) -> AngularPartition:
    amin = float(np.min(angles.alpha))
    if delta is None:
        delta = 0.15 * amin
    if not 0.0 < delta < 0.5 * amin:
        raise DeltaTooLarge(delta, amin)
    return AngularPartition(float(delta), np.asarray(angles.theta, float), float(angles.theta0))


# which profile sits on which half-line, and which well fills which sector
PROFILE_PAIRS = ((1, 2), (2, 3), (3, 1))


def sector_wiring():
    """``(interface pairs, sector wells)``; half-line ``i`` carries ``zeta`` of
    ``PROFILE_PAIRS[i-1]`` and sector ``j`` carries ``c_j``."""
    return PROFILE_PAIRS, (1, 2, 3)


class _ProfileEval:
    def __init__(self, prof: HeteroclinicProfile):
        self.spline = prof.spline()
        self.L = prof.L
        self.left = prof.values[0].copy()
        self.right = prof.values[-1].copy()

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = self.spline(np.clip(s, -self.L, self.L))
        out = np.where((s < -self.L)[..., None], self.left, out)
        return np.where((s > self.L)[..., None], self.right, out)


@dataclass
class BoundaryMap:
    potential: Potential
    angles: JunctionAngles
    partition: AngularPartition
    profiles: dict          # (i, j) -> HeteroclinicProfile oriented c_i -> c_j
    _evals: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._evals = {k: _ProfileEval(p) for k, p in self.profiles.items()}

    @property
    def max_excursion(self):
        return max(float(np.max(np.linalg.norm(p.values, axis=1))) for p in self.profiles.values())

    def bound(self):
        return max(float(np.max(np.linalg.norm(self.potential.wells, axis=1))), self.max_excursion)


def build_boundary_map(potential: Potential, angles: JunctionAngles, delta=None,
                       profiles=None, L=10.0, n=2001, tol=1e-9) -> BoundaryMap:
    part = build_partition(angles, delta)
    pairs, _ = sector_wiring()
    if profiles is None:
        profiles = {}
    profiles = dict(profiles)
    for (i, j) in pairs:
        if (i, j) not in profiles:
            if (j, i) in profiles:
                profiles[(i, j)] = profiles[(j, i)].reflected()
            else:
                profiles[(i, j)] = solve_connection(potential, i, j, L=L, n=n, tol=tol)
    return BoundaryMap(potential, angles, part, {p: profiles[p] for p in pairs})


def radial_cutoff(r):
    """``1 - eta(x)``: 0 for ``|x| <= 1/2``, 1 for ``|x| >= 1``."""
    return smoothstep(2.0 * np.asarray(r, float) - 1.0)


def eval_phi(bmap: BoundaryMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(x[..., 1], x[..., 0])
    eta = bmap.partition.weights(theta)
    pairs, sectors = sector_wiring()
    wells = bmap.potential.wells
    out = np.zeros(x.shape)
    for j in sectors:
        out += eta[..., 2 * j - 2, None] * wells[j - 1]
    for i, pair in enumerate(pairs, start=1):
        w = eta[..., 2 * i - 1]
        on = w > 0
        if not np.any(on):
            continue
        d = signed_halfline_distance(bmap.partition.theta[i - 1], x[on])
        out[on] += w[on, None] * bmap._evals[pair](d)
    return radial_cutoff(r)[..., None] * out


def eval_phi_eps(bmap: BoundaryMap, x, eps: float) -> np.ndarray:
    return eval_phi(bmap, np.asarray(x, dtype=float) / eps)


def zeta_argument(bmap: BoundaryMap, x, eps: float, i: int) -> np.ndarray:
    """Argument fed to the profile on half-line ``i`` when evaluating ``phi_eps(x)``."""
    return signed_halfline_distance(bmap.partition.theta[i - 1], np.asarray(x, float) / eps)


@dataclass
class PhiResidual:
    eps: float
    alpha: float
    h: float
    sup: float
    argmax: tuple
    samples: int

    def to_dict(self):
        return {"eps": self.eps, "alpha": self.alpha, "h": self.h, "sup": self.sup,
                "argmax": list(self.argmax), "samples": self.samples}


def phi_residual_profile(bmap: BoundaryMap, eps: float, alpha: float = 0.5,
                         samples: int = 40000, h=None) -> PhiResidual:
    """Sup of ``|-Lap phi_eps + grad W(phi_eps) / (2 eps^2)|`` over ``eps^alpha <= |x| <= 1``.

    Sampled on a deterministic polar grid; the Laplacian uses the 5-point
    stencil with step ``h`` (default ``eps / 1000``).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    h = eps / 1000.0 if h is None else float(h)
    if h > eps / 10.0:
        raise StepTooCoarse(f"finite-difference step {h:g} exceeds eps/10 = {eps / 10:g}")
    nr = max(8, int(np.sqrt(samples / 8.0)))
    nt = max(16, samples // nr)
    r = np.linspace(eps ** alpha, 1.0, nr)
    t = np.linspace(0.0, 2.0 * np.pi, nt, endpoint=False)
    R, T = np.meshgrid(r, t, indexing="ij")
    X = np.stack([R * np.cos(T), R * np.sin(T)], -1).reshape(-1, 2)
    f = lambda p: eval_phi_eps(bmap, p, eps)
    c = f(X)
    lap = -4.0 * c
    for e in ((h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)):
        lap += f(X + np.array(e))
    lap /= h * h
    res = np.linalg.norm(-lap + bmap.potential.grad(c) / (2.0 * eps * eps), axis=1)
    k = int(np.argmax(res))
    return PhiResidual(float(eps), float(alpha), h, float(res[k]), tuple(X[k].tolist()), len(X))


def dump_raster(bmap: BoundaryMap, path, eps=1.0, n=257, extent=1.0):
    """Sample ``phi_eps`` on an ``n x n`` raster of ``[-extent, extent]^2``."""
    xs = np.linspace(-extent, extent, n)
    X, Y = np.meshgrid(xs, xs)
    v = eval_phi_eps(bmap, np.stack([X, Y], -1), eps)
    return write_raw(path, [v[..., 0], v[..., 1]],
                     {"kind": "phi", "eps": eps, "extent": extent, "layer_order": ["u1", "u2"],
                      "axis": "rows increase in y, columns in x"})
