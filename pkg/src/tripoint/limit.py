"""Sharp-interface diagnostics: the sector map u0, the limit energy, and the
convergence measurements comparing diffuse solutions against it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage import measure

from .ansatz import eval_phi, eval_phi_eps
from .errors import EmptyAnnulus, GridMismatch, NoTriplePoint, ScaleConditionViolated
from .io import write_pgm
from .junction import JunctionAngles
from .solver import DiskGrid, Field2D, energy_Ieps, make_grid

PAIRS = ((1, 2), (1, 3), (2, 3))


def sector_labels(points, angles: JunctionAngles):
    """Label of each point in ``1..3``; sector ``i`` is the half-open ``(theta_{i-1}, theta_i]``."""
    p = np.asarray(points, float)
    rel = np.mod(np.arctan2(p[..., 1], p[..., 0]) - angles.theta0, 2 * np.pi)
    rel = np.where(rel == 0.0, 2 * np.pi, rel)
    bounds = np.asarray(angles.theta) - angles.theta0
    return np.minimum(np.searchsorted(bounds, rel, side="left"), 2) + 1


@dataclass
class SharpPartition:
    grid: DiskGrid
    labels: np.ndarray      # (n, n) in {1, 2, 3} on interior nodes, 0 elsewhere
    source: str = ""

    def counts(self):
        return np.array([int(np.sum(self.labels == k)) for k in (1, 2, 3)])

    def areas(self):
        return self.counts() * self.grid.h ** 2

    def extended(self):
        """Labels on every node, copying the nearest interior node outside the disk."""
        _, (iy, ix) = ndimage.distance_transform_edt(~self.grid.interior, return_indices=True)
        return self.labels[iy, ix]

    def with_labels(self, labels, source=None):
        lab = np.where(self.grid.interior, labels, 0).astype(self.labels.dtype)
        return SharpPartition(self.grid, lab, source or self.source)

    def to_pgm(self, path):
        return write_pgm(path, self.labels)


def u0_field(grid: DiskGrid, angles: JunctionAngles, wells) -> Field2D:
    lab = sector_labels(grid.points, angles)
    u = np.asarray(wells, float)[lab - 1]
    return Field2D(grid, np.ascontiguousarray(np.moveaxis(u, -1, 0)), 0.0)


def u0_partition(grid: DiskGrid, angles: JunctionAngles) -> SharpPartition:
    lab = np.where(grid.interior, sector_labels(grid.points, angles), 0)
    return SharpPartition(grid, lab.astype(np.int8), "sectors")


def quantize_to_wells(field: Field2D, wells) -> SharpPartition:
    u = np.moveaxis(field.u, 0, -1)
    d = np.linalg.norm(u[..., None, :] - np.asarray(wells, float), axis=-1)
    lab = np.argmin(d, axis=-1) + 1             # argmin keeps the lowest index on ties
    lab = np.where(field.grid.interior, lab, 0)
    return SharpPartition(field.grid, lab.astype(np.int8), "nearest well")


# ---------------------------------------------------------------- limit energy

def _clipped_length(path):
    """Length of a polyline's part inside the closed unit disk."""
    p, q = path[:-1], path[1:]
    d = q - p
    # solve |p + t d| = 1 for the chord of each segment inside the disk
    a = np.sum(d * d, 1)
    b = 2 * np.sum(p * d, 1)
    c = np.sum(p * p, 1) - 1.0
    disc = b * b - 4 * a * c
    ok = (disc > 0) & (a > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = np.where(ok, (-b - sq) / (2 * a), 0.0)
        t1 = np.where(ok, (-b + sq) / (2 * a), 0.0)
    frac = np.clip(np.minimum(t1, 1.0) - np.maximum(t0, 0.0), 0.0, 1.0)
    return float(np.sum(np.sqrt(a) * np.where(ok, frac, 0.0)))


def phase_perimeters(part: SharpPartition, sigma=2.0):
    """Interior perimeter of each phase (marching squares on a smoothed indicator)."""
    ext = part.extended()
    g = part.grid
    out = np.zeros(3)
    for k in (1, 2, 3):
        ind = (ext == k).astype(float)
        if sigma > 0:
            ind = ndimage.gaussian_filter(ind, sigma, mode="nearest")
        total = 0.0
        for c in measure.find_contours(ind, 0.5):
            # contour coordinates are (row, col) = (iy, ix) in index units
            pts = np.stack([g.x[0] + c[:, 1] * g.h, g.x[0] + c[:, 0] * g.h], -1)
            total += _clipped_length(pts)
        out[k - 1] = total
    return out


def interface_lengths(part: SharpPartition, sigma=2.0):
    """Pairwise interface lengths from the perimeters, ``l_ij = (P_i + P_j - P_k) / 2``."""
    P = phase_perimeters(part, sigma)
    out = {}
    for (i, j) in PAIRS:
        k = 6 - i - j
        out[(i, j)] = max(0.0, 0.5 * (P[i - 1] + P[j - 1] - P[k - 1]))
    return out


def _trace_labels(trace, theta):
    if isinstance(trace, JunctionAngles):
        return sector_labels(np.stack([np.cos(theta), np.sin(theta)], -1), trace)
    return np.asarray(trace(theta))


def boundary_ring(grid: DiskGrid):
    """Outermost interior nodes (a band neighbour), their angles and arc weights."""
    ring = np.zeros_like(grid.interior)
    band = grid.band
    ring[1:, :] |= band[:-1, :]
    ring[:-1, :] |= band[1:, :]
    ring[:, 1:] |= band[:, :-1]
    ring[:, :-1] |= band[:, 1:]
    ring &= grid.interior
    iy, ix = np.nonzero(ring)
    theta = np.mod(np.arctan2(grid.Y[iy, ix], grid.X[iy, ix]), 2 * np.pi)
    order = np.argsort(theta, kind="stable")
    iy, ix, theta = iy[order], ix[order], theta[order]
    gap = np.diff(np.concatenate([theta, [theta[0] + 2 * np.pi]]))
    weight = 0.5 * (gap + np.roll(gap, 1))
    return iy, ix, theta, weight


def boundary_mismatch(part: SharpPartition, trace):
    """Arc length on the unit circle where the partition's boundary phase
    ``j`` differs from the prescribed trace phase ``i``, per unordered pair.

    The circle is sampled at the outermost interior nodes; the trace is read
    at each node's own polar angle.
    """
    iy, ix, theta, weight = boundary_ring(part.grid)
    inner = part.labels[iy, ix]
    want = _trace_labels(trace, theta)
    out = {p: 0.0 for p in PAIRS}
    for a, b, w in zip(inner, want, weight):
        if a != b:
            out[tuple(sorted((int(a), int(b))))] += float(w)
    return out


def pair_weight(table, i, j, ordered=True):
    """Weight of interface ``{i, j}``: the double sum over ordered pairs
    counts each interface twice (``2 Gamma``); ``ordered=False`` gives ``Gamma``."""
    G = np.asarray(table.gamma if hasattr(table, "gamma") else table, float)
    return (2.0 if ordered else 1.0) * float(G[i - 1, j - 1])


@dataclass
class I0Parts:
    interior: dict
    boundary: dict
    weights: dict

    @property
    def total(self):
        return sum(self.weights[p] * (self.interior[p] + self.boundary[p]) for p in PAIRS)

    def to_dict(self):
        k = lambda p: f"{p[0]}{p[1]}"
        return {"total": self.total,
                "interior": {k(p): v for p, v in self.interior.items()},
                "boundary": {k(p): v for p, v in self.boundary.items()},
                "weights": {k(p): v for p, v in self.weights.items()}}


def energy_I0(part: SharpPartition, table, trace, ordered=True, sigma=2.0) -> I0Parts:
    """Sharp energy: weighted interior interface length plus weighted boundary mismatch."""
    return I0Parts(interface_lengths(part, sigma), boundary_mismatch(part, trace),
                   {p: pair_weight(table, *p, ordered=ordered) for p in PAIRS})


def partition_functional(part: SharpPartition, table, trace, **kw) -> float:
    """Each interface weighted once by its distance, boundary mismatch included."""
    return energy_I0(part, table, trace, ordered=False, **kw).total


# ---------------------------------------------------------------- convergence

def l1_distance(a: Field2D, b: Field2D) -> float:
    if not a.grid.same_as(b.grid):
        raise GridMismatch(f"grids differ: n={a.grid.n} vs n={b.grid.n}")
    k = a.grid.interior_flat
    d = np.abs(a.u.reshape(2, -1)[:, k] - b.u.reshape(2, -1)[:, k])
    return float(a.grid.h ** 2 * np.sum(d))


def _annulus(grid, eps, alpha):
    r0 = eps ** alpha
    if r0 >= 1.0:
        raise EmptyAnnulus(f"eps^alpha = {r0:g} leaves no annulus")
    return grid.interior & (grid.R >= r0)


def annulus_sup_error(u: Field2D, bmap, eps, alpha) -> float:
    sel = _annulus(u.grid, eps, alpha)
    phi = eval_phi_eps(bmap, u.grid.points[sel], eps)
    return float(np.max(np.linalg.norm(np.moveaxis(u.u, 0, -1)[sel] - phi, axis=-1)))


def annulus_grad_error(u: Field2D, bmap, eps, alpha) -> float:
    """Sup of ``|D_h (u - phi_eps)|`` (central differences) over the annulus."""
    g = u.grid
    phi = np.moveaxis(eval_phi_eps(bmap, g.points, eps), -1, 0)
    d = u.u - phi
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    gx[:, :, 1:-1] = (d[:, :, 2:] - d[:, :, :-2]) / (2 * g.h)
    gy[:, 1:-1, :] = (d[:, 2:, :] - d[:, :-2, :]) / (2 * g.h)
    mag = np.sqrt(np.sum(gx * gx + gy * gy, axis=0))
    return float(np.max(mag[_annulus(g, eps, alpha)]))


def two_scale_core_error(u_eps: Field2D, u_sig: Field2D, alpha) -> float:
    """Sup over ``|x| <= eps^alpha / 2`` of ``|u_eps(x) - u_sigma(sigma x / eps)|``."""
    eps, sig = u_eps.eps, u_sig.eps
    if sig > eps ** (1 - alpha) * (1 + 1e-12):
        raise ScaleConditionViolated(sig, eps, alpha)
    g = u_eps.grid
    sel = g.interior & (g.R <= 0.5 * eps ** alpha)
    x = g.points[sel]
    other = u_sig.interpolator()(sig * x / eps)
    return float(np.max(np.linalg.norm(np.moveaxis(u_eps.u, 0, -1)[sel] - other, axis=-1)))


def probe_rings(eps_min, per_ring=256, kmin=-2):
    kmax = int(np.floor(np.log2(1.0 / eps_min)))
    t = np.linspace(0, 2 * np.pi, per_ring, endpoint=False)
    rings = [2.0 ** k * np.stack([np.cos(t), np.sin(t)], -1) for k in range(kmin, kmax + 1)]
    return np.concatenate([np.zeros((1, 2))] + rings)


def blowdown(u: Field2D, bmap, x):
    """``v(x) = u_eps(eps x)`` for ``|x| <= 1/eps`` and ``phi(x)`` beyond."""
    x = np.asarray(x, float)
    eps = u.eps
    inside = np.linalg.norm(x, axis=-1) <= 1.0 / eps
    out = eval_phi(bmap, x)
    if np.any(inside):
        out[inside] = u.interpolator()(eps * x[inside])
    return out


def blowdown_cauchy(u_list, bmap, probe_points=None):
    """Pairwise sup distances between the blow-downs of ``[(eps, field), ...]``."""
    if len(u_list) < 2:
        raise ValueError("need at least two solutions")
    eps = [e for e, _ in u_list]
    if probe_points is None:
        probe_points = probe_rings(min(eps))
    vals = [blowdown(f, bmap, probe_points) for _, f in u_list]
    m = len(vals)
    D = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            D[a, b] = D[b, a] = float(np.max(np.linalg.norm(vals[a] - vals[b], axis=-1)))
    return D


def relative_energy_G(u: Field2D, bmap, potential, eps=None) -> float:
    """``(I_eps(u) - I_eps(phi_eps)) / eps``, the blown-up energy relative to phi."""
    eps = u.eps if eps is None else eps
    _, init = make_grid(u.grid.n, eps, bmap)
    return (energy_Ieps(u, potential) - energy_Ieps(init, potential)) / eps


# ---------------------------------------------------------------- angles

@dataclass
class JunctionFit:
    alpha: np.ndarray
    junction: np.ndarray
    directions: dict        # pair -> ray angle
    fit_residual: dict      # pair -> rms distance of interface points to the ray

    @property
    def alpha_deg(self):
        return np.rad2deg(self.alpha)

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "alpha_deg": self.alpha_deg.tolist(),
                "junction": self.junction.tolist(),
                "directions": {f"{a}{b}": v for (a, b), v in self.directions.items()},
                "fit_residual": {f"{a}{b}": v for (a, b), v in self.fit_residual.items()}}


def _junction_point(part, radius):
    lab = part.labels
    present = [ndimage.maximum_filter((lab == k).astype(np.uint8), size=3) > 0 for k in (1, 2, 3)]
    hit = present[0] & present[1] & present[2] & part.grid.interior & (part.grid.R <= radius)
    if not np.any(hit):
        raise NoTriplePoint(f"no node within |x| <= {radius} sees all three phases")
    return np.array([part.grid.X[hit].mean(), part.grid.Y[hit].mean()])


def _interface_points(part, i, j, rmin, rmax):
    lab, g = part.labels, part.grid
    pts = []
    for a, b, sl_a, sl_b in (((i, j, np.s_[:, :-1], np.s_[:, 1:])), (i, j, np.s_[:-1, :], np.s_[1:, :])):
        la, lb = lab[sl_a], lab[sl_b]
        hit = ((la == a) & (lb == b)) | ((la == b) & (lb == a))
        mx = 0.5 * (g.X[sl_a] + g.X[sl_b])[hit]
        my = 0.5 * (g.Y[sl_a] + g.Y[sl_b])[hit]
        pts.append(np.stack([mx, my], -1))
    p = np.concatenate(pts)
    r = np.linalg.norm(p, axis=1)
    return p[(r >= rmin) & (r <= rmax)]


def measure_junction_angles(part: SharpPartition, rmin=0.2, rmax=0.6, core=0.3) -> JunctionFit:
    J = _junction_point(part, core)
    rays, resid = {}, {}
    for (i, j) in ((3, 1), (1, 2), (2, 3)):
        p = _interface_points(part, min(i, j), max(i, j), rmin, rmax)
        if len(p) < 3:
            raise NoTriplePoint(f"interface {i}-{j} is missing from the fitting annulus")
        q = p - J
        w, v = np.linalg.eigh(q.T @ q)
        d = v[:, -1]
        if np.sum(q @ d) < 0:
            d = -d
        rays[(i, j)] = float(np.arctan2(d[1], d[0]))
        resid[(i, j)] = float(np.sqrt(max(w[0], 0.0) / len(p)))
    order = [(3, 1), (1, 2), (2, 3), (3, 1)]
    alpha = np.array([np.mod(rays[order[k + 1]] - rays[order[k]], 2 * np.pi) for k in range(3)])
    return JunctionFit(alpha, J, rays, resid)


# ---------------------------------------------------------------- minimality probe

@dataclass
class ProbeResult:
    all_pass: bool
    base: float
    tolerance: float
    worst_delta: float
    worst_trial: int
    deltas: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"all_pass": self.all_pass, "base": self.base, "tolerance": self.tolerance,
                "worst_delta": self.worst_delta, "worst_trial": self.worst_trial,
                "trials": len(self.deltas), "deltas": [float(d) for d in self.deltas]}


def random_blobs(part: SharpPartition, rng, max_fraction=0.02, max_blobs=3):
    """Relabel up to ``max_blobs`` random disks, total area at most ``max_fraction`` of the disk."""
    g = part.grid
    lab = part.labels.copy()
    budget = max_fraction * np.pi
    k = int(rng.integers(1, max_blobs + 1))
    for a in rng.dirichlet(np.ones(k)) * budget * rng.uniform(0.05, 1.0):
        r = np.sqrt(a / np.pi)
        rho, th = np.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi)
        cx, cy = rho * np.cos(th), rho * np.sin(th)
        blob = g.interior & ((g.X - cx) ** 2 + (g.Y - cy) ** 2 <= r * r)
        lab[blob] = int(rng.integers(1, 4))
    return part.with_labels(lab, "perturbed")


def partition_perturbation_probe(base: SharpPartition, table, trace, trials=100, seed=0,
                                 tolerance=None) -> ProbeResult:
    """Check ``F(perturbed) >= F(base) - tolerance`` for seeded random blob flips."""
    rng = np.random.default_rng(seed)
    G = np.asarray(table.gamma if hasattr(table, "gamma") else table, float)
    if tolerance is None:
        tolerance = 3 * base.grid.h * (G[0, 1] + G[0, 2] + G[1, 2])
    F0 = partition_functional(base, table, trace)
    deltas = []
    for _ in range(trials):
        p = random_blobs(base, rng)
        deltas.append(partition_functional(p, table, trace) - F0)
    k = int(np.argmin(deltas))
    return ProbeResult(bool(min(deltas) >= -tolerance), F0, float(tolerance), float(deltas[k]),
                       k, deltas)


# ---------------------------------------------------------------- report

@dataclass
class LimitReport:
    eps: float
    I0: I0Parts
    I_eps: float
    l1: float
    angles: JunctionFit | None
    annulus: dict           # alpha -> sup error
    annulus_grad: dict
    G: float

    def to_dict(self):
        return {"eps": self.eps, "I0": self.I0.to_dict(), "I_eps": self.I_eps, "l1": self.l1,
                "angles": None if self.angles is None else self.angles.to_dict(),
                "annulus": {str(a): v for a, v in self.annulus.items()},
                "annulus_grad": {str(a): v for a, v in self.annulus_grad.items()},
                "G": self.G}

    def to_text(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
