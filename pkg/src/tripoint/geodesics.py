"""Degenerate geodesic distance ``Gamma(a, b) = inf  int sqrt(W(gamma)) |gamma'|``.

The infimum is approximated from above by optimising the interior nodes of a
polyline (string method: descent on node positions, equal-arclength
redistribution between descent blocks) and cross-checked against a lattice
shortest path, which converges from above as the lattice is refined.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import csgraph

from .errors import NoConvergence, NonFinite
from .potential import Potential

log = logging.getLogger(__name__)

# 3-point Gauss-Legendre on [0, 1]: interior samples only, so the zeros of W
# at the wells (path endpoints) are never evaluated.
_GL_S = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GL_W = np.array([5.0, 8.0, 5.0]) / 18.0

# half of a 32-neighbourhood; one undirected edge per offset
_LATTICE_OFFSETS = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2),
                    (3, 1), (1, 3), (3, -1), (1, -3), (3, 2), (2, 3), (3, -2), (2, -3)]


@dataclass
class UPath:
    """Polyline in the order-parameter plane, parameterised over [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(self.points) < 2:
            raise ValueError("a path needs at least two nodes")

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def reversed(self):
        return UPath(self.points[::-1].copy())

    def resample(self, n):
        """Return ``n`` nodes equally spaced in arclength along this polyline."""
        return UPath(_redistribute(self.points, n))

    @classmethod
    def straight(cls, a, b, n=101):
        t = np.linspace(0.0, 1.0, n)[:, None]
        return cls((1 - t) * np.asarray(a, float) + t * np.asarray(b, float))


def _redistribute(P, n):
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        return np.repeat(P[:1], n, axis=0)
    keep = np.concatenate([[True], seg > 0])
    s, P = s[keep], P[keep]
    t = np.linspace(0.0, s[-1], n)
    out = np.stack([np.interp(t, s, P[:, 0]), np.interp(t, s, P[:, 1])], -1)
    out[0], out[-1] = P[0], P[-1]
    return out


def _action_and_grad(potential, P, need_grad=True):
    d = np.diff(P, axis=0)
    ell = np.linalg.norm(d, axis=1)
    X = P[:-1, None, :] + _GL_S[None, :, None] * d[:, None, :]
    w = np.maximum(potential.W(X), 0.0)
    sq = np.sqrt(w)
    A = float(np.sum(_GL_W * sq, axis=1) @ ell)
    if not need_grad:
        return A, None
    gsq = potential.grad(X) / (2.0 * np.maximum(sq, 1e-300))[..., None]
    gsq[sq == 0.0] = 0.0
    unit = np.where(ell[:, None] > 0, d / np.maximum(ell, 1e-300)[:, None], 0.0)
    wsq = (_GL_W * sq).sum(1)
    dp = np.einsum("g,kgj->kj", _GL_W * (1 - _GL_S), gsq) * ell[:, None] - wsq[:, None] * unit
    dq = np.einsum("g,kgj->kj", _GL_W * _GL_S, gsq) * ell[:, None] + wsq[:, None] * unit
    G = np.zeros_like(P)
    G[:-1] += dp
    G[1:] += dq
    return A, G


def path_action(potential: Potential, path) -> float:
    """Quadrature of ``sqrt(W) |gamma'|`` along a polyline.

    Each segment is integrated with 3-point Gauss-Legendre, so the value only
    depends on the traversed point set up to the quadrature error.
    """
    P = path.points if isinstance(path, UPath) else np.asarray(path, float)
    A, _ = _action_and_grad(potential, P, need_grad=False)
    if not np.isfinite(A):
        raise NonFinite("path action is not finite")
    return A


@dataclass
class GeodesicResult:
    path: UPath
    action: float
    iterations: int = 0
    last_change: float = 0.0
    init: str = "straight"

    def to_dict(self):
        return {"action": self.action, "iterations": self.iterations,
                "last_change": self.last_change, "init": self.init,
                "path": self.path.points.tolist()}


@dataclass
class GeodesicOptions:
    nodes: int = 101
    max_iters: int = 400      # descent blocks
    block: int = 10           # descent steps between redistributions
    tol: float = 1e-10        # relative Cauchy tolerance on the action


def _initial_paths(potential, a, b, n):
    a, b = np.asarray(a, float), np.asarray(b, float)
    inits = [("straight", UPath.straight(a, b, n))]
    d = b - a
    nrm = np.array([-d[1], d[0]])
    mid = 0.5 * (a + b)
    t = np.linspace(0, 1, n)[:, None]
    for side in (+1, -1):
        # bulge far enough to pass around any well lying on this side
        bulge = 0.5
        for c in potential.wells:
            off = (c - mid) @ nrm / max(d @ d, 1e-300)
            if side * off > 0 and np.linalg.norm(c - a) > 1e-9 and np.linalg.norm(c - b) > 1e-9:
                bulge = max(bulge, 2.0 * abs(off) + 0.25)
        ctrl = mid + side * bulge * nrm
        pts = (1 - t) ** 2 * a + 2 * t * (1 - t) * ctrl + t ** 2 * b
        inits.append((f"detour{'+' if side > 0 else '-'}", UPath(pts).resample(n)))
    return inits


def _descend(potential, P0, opts):
    P = P0.copy()
    n = len(P)
    A_prev = _action_and_grad(potential, P, False)[0]
    it = 0
    change = np.inf
    for it in range(1, opts.max_iters + 1):
        x0 = P[1:-1].ravel()

        def fun(x):
            Q = P.copy()
            Q[1:-1] = x.reshape(-1, 2)
            A, G = _action_and_grad(potential, Q)
            return A, G[1:-1].ravel()

        res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                                options={"maxiter": opts.block, "gtol": 1e-14, "ftol": 0.0})
        P[1:-1] = res.x.reshape(-1, 2)
        P = _redistribute(P, n)
        A = _action_and_grad(potential, P, False)[0]
        change = abs(A_prev - A)
        if change <= opts.tol * max(A, 1e-300):
            return P, A, it, change, True
        A_prev = A
    return P, A_prev, it, change, False


def geodesic_distance(potential: Potential, a, b, opts: GeodesicOptions | None = None) -> GeodesicResult:
    """Least polyline action between ``a`` and ``b`` over several initial paths.

    Raises :class:`NoConvergence` if no initialisation met the Cauchy criterion.
    """
    opts = opts or GeodesicOptions()
    a, b = np.asarray(a, float), np.asarray(b, float)
    if np.linalg.norm(a - b) == 0.0:
        return GeodesicResult(UPath(np.array([a, b])), 0.0, 0, 0.0, "trivial")
    best = None
    stalled = []
    for name, init in _initial_paths(potential, a, b, opts.nodes):
        P, A, it, change, ok = _descend(potential, init.points, opts)
        if not ok:
            stalled.append((name, it, change))
            continue
        cand = GeodesicResult(UPath(P), A, it, change, name)
        if best is None or A < best.action - 1e-12 * A or (abs(A - best.action) <= 1e-12 * A and it < best.iterations):
            best = cand
    if best is None:
        name, it, change = stalled[0]
        raise NoConvergence(it, f"action still changing by {change:.3e}")
    # store the exact action of the returned nodes
    best.action = path_action(potential, best.path)
    return best


@dataclass
class DistanceTable:
    """Symmetric 3x3 table of ``Gamma(c_i, c_j)`` with the optimising paths."""

    gamma: np.ndarray
    paths: dict = field(default_factory=dict)   # (i, j) zero-based, i < j -> UPath
    source: str = "geodesic"

    @property
    def sides(self):
        """``(Gamma23, Gamma13, Gamma12)``: the side opposite each well."""
        g = self.gamma
        return np.array([g[1, 2], g[0, 2], g[0, 1]])

    @classmethod
    def from_sides(cls, g23, g13, g12, source="synthetic"):
        g = np.zeros((3, 3))
        g[1, 2] = g[2, 1] = g23
        g[0, 2] = g[2, 0] = g13
        g[0, 1] = g[1, 0] = g12
        return cls(g, {}, source)

    def to_dict(self):
        return {"gamma": self.gamma.tolist(), "source": self.source,
                "paths": {f"{i + 1}-{j + 1}": p.points.tolist() for (i, j), p in self.paths.items()}}

    @classmethod
    def from_dict(cls, d):
        paths = {}
        for key, pts in d.get("paths", {}).items():
            i, j = (int(s) - 1 for s in key.split("-"))
            paths[(i, j)] = UPath(np.array(pts))
        return cls(np.array(d["gamma"], float), paths, d.get("source", "geodesic"))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def distance_table(potential: Potential, opts: GeodesicOptions | None = None) -> DistanceTable:
    g = np.zeros((3, 3))
    paths = {}
    for i in range(3):
        for j in range(i + 1, 3):
            try:
                res = geodesic_distance(potential, potential.wells[i], potential.wells[j], opts)
            except NoConvergence as exc:
                raise NoConvergence(exc.iterations, str(exc), pair=(i + 1, j + 1)) from exc
            g[i, j] = g[j, i] = res.action
            paths[(i, j)] = res.path
    return DistanceTable(g, paths, "geodesic")


def well_distance(potential: Potential, i: int, p, opts: GeodesicOptions | None = None) -> float:
    """``g_i(p)``: geodesic distance from well ``i`` (1-based) to ``p``."""
    if i not in (1, 2, 3):
        raise ValueError("well index must be 1, 2 or 3")
    return geodesic_distance(potential, potential.wells[i - 1], p, opts).action


def connection_exists(potential: Potential, i: int, j: int, exclusion_radius: float,
                      opts: GeodesicOptions | None = None):
    """Whether the optimal path from well ``i`` to ``j`` avoids the third well.

    Returns ``(exists, witness_path)``.
    """
    if i == j:
        raise ValueError("need two distinct wells")
    res = geodesic_distance(potential, potential.wells[i - 1], potential.wells[j - 1], opts)
    k = 6 - i - j
    c = potential.wells[k - 1]
    P = res.path.points
    d = np.diff(P, axis=0)
    t = np.clip(np.einsum("kj,kj->k", c - P[:-1], d) / np.maximum(np.einsum("kj,kj->k", d, d), 1e-300), 0, 1)
    dist = np.linalg.norm(P[:-1] + t[:, None] * d - c, axis=1).min()
    return bool(dist >= exclusion_radius), res.path


# -- lattice oracle ----------------------------------------------------------


def lattice_box(potential, points=(), margin=1.5):
    pts = np.vstack([potential.wells] + [np.atleast_2d(p) for p in points])
    lo, hi = pts.min(0), pts.max(0)
    centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    half = np.maximum(half, 0.5 * np.max(hi - lo))
    return centre - margin * half, centre + margin * half


def lattice_distances(potential: Potential, sources, targets, n=600, box=None, return_paths=False):
    """Shortest-path distances on an ``n x n`` lattice with 32-neighbour moves.

    Edge ``(p, q)`` costs ``0.5 (sqrt W(p) + sqrt W(q)) |p - q|``.  Points are
    snapped to the nearest lattice node.  Returns a ``len(sources) x
    len(targets)`` array (and node paths when requested).
    """
    sources = np.atleast_2d(np.asarray(sources, float))
    targets = np.atleast_2d(np.asarray(targets, float))
    if box is None:
        box = lattice_box(potential, list(sources) + list(targets))
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    side = np.max(hi - lo)
    h = side / (n - 1)
    xs = lo[0] + h * np.arange(n)
    ys = lo[1] + h * np.arange(n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    sq = potential.sqrtW(np.stack([X, Y], -1))
    idx = np.arange(n * n, dtype=np.int32).reshape(n, n)
    rows, cols, vals = [], [], []
    for di, dj in _LATTICE_OFFSETS:
        i0, i1 = max(0, -di), n - max(0, di)
        j0, j1 = max(0, -dj), n - max(0, dj)
        a = idx[i0:i1, j0:j1].ravel()
        b = idx[i0 + di:i1 + di, j0 + dj:j1 + dj].ravel()
        wa = sq[i0:i1, j0:j1].ravel()
        wb = sq[i0 + di:i1 + di, j0 + dj:j1 + dj].ravel()
        rows.append(a)
        cols.append(b)
        vals.append(0.5 * (wa + wb) * h * np.hypot(di, dj))
    G = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n * n, n * n))

    def snap(p):
        i = int(np.clip(np.rint((p[0] - lo[0]) / h), 0, n - 1))
        j = int(np.clip(np.rint((p[1] - lo[1]) / h), 0, n - 1))
        return i * n + j

    s_idx = [snap(p) for p in sources]
    t_idx = [snap(p) for p in targets]
    dist, pred = csgraph.dijkstra(G, directed=False, indices=s_idx, return_predecessors=True)
    out = dist[:, t_idx]
    if not return_paths:
        return out
    paths = {}
    for a, s in enumerate(s_idx):
        for b, t in enumerate(t_idx):
            node, nodes = t, []
            while node != s and node >= 0:
                nodes.append(node)
                node = pred[a, node]
            nodes.append(s)
            nodes = np.array(nodes[::-1])
            paths[(a, b)] = np.stack([xs[nodes // n], ys[nodes % n]], -1)
    return out, paths


def lattice_table(potential: Potential, n=600) -> DistanceTable:
    """Distance table from the lattice oracle (two Dijkstra sweeps)."""
    D, paths = lattice_distances(potential, potential.wells[:2], potential.wells, n=n,
                                 return_paths=True)
    g = np.zeros((3, 3))
    g[0, 1] = g[1, 0] = D[0, 1]
    g[0, 2] = g[2, 0] = D[0, 2]
    g[1, 2] = g[2, 1] = D[1, 2]
    upaths = {(0, 1): UPath(paths[(0, 1)]), (0, 2): UPath(paths[(0, 2)]), (1, 2): UPath(paths[(1, 2)])}
    return DistanceTable(g, upaths, "lattice")
