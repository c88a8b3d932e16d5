"""Multi-well potentials on the plane and sampled checks of their hypotheses.

A :class:`Potential` bundles the energy density ``W``, its gradient and Hessian
(all vectorised over trailing axis of length 2) with the list of declared
wells.  The built-in sextic product family ``W(u) = prod_i |u - c_i|^2`` has
closed-form derivatives; custom potentials fall back to central differences.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import DuplicateWells, HypothesisViolated, NonFinite, ConfigError

FD_STEP = 1e-5
# zero-energy threshold for located minima and merge radius (relative to well span)
_ZERO_W = 1e-8
_MERGE = 1e-2


def _as_points(u):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != 2:
        raise ValueError(f"expected trailing axis of length 2, got shape {u.shape}")
    return u


@dataclass(frozen=True, eq=False)
class Potential:
    """Three-well energy density with gradient and Hessian evaluators.

    ``W``, ``grad`` and ``hess`` accept arrays of shape ``(..., 2)`` and return
    shapes ``(...)``, ``(..., 2)`` and ``(..., 2, 2)``.
    """

    wells: np.ndarray
    W: Callable
    grad: Callable
    hess: Callable
    family: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def n_wells(self):
        return len(self.wells)

    @property
    def scale(self):
        """Largest well modulus, the natural length unit of the configuration."""
        return float(np.max(np.linalg.norm(self.wells, axis=1)))

    def sqrtW(self, u):
        return np.sqrt(np.maximum(self.W(u), 0.0))

    def to_config(self):
        cfg = {"family": self.family, "wells": self.wells.tolist()}
        cfg.update({k: v for k, v in self.params.items() if k != "wells"})
        return cfg

    @classmethod
    def from_functions(cls, wells, W, grad=None, hess=None, family="custom", params=None):
        """Wrap user callables; missing derivatives use central differences."""
        wells = np.array(wells, dtype=float).reshape(-1, 2)
        if grad is None:
            grad = _fd_gradient(W)
        if hess is None:
            hess = _fd_hessian_from_grad(grad)
        return cls(wells=wells, W=W, grad=grad, hess=hess, family=family, params=dict(params or {}))


def _fd_gradient(W, h=FD_STEP):
    def grad(u):
        u = _as_points(u)
        e = np.eye(2) * h
        return np.stack([(W(u + e[k]) - W(u - e[k])) / (2 * h) for k in range(2)], axis=-1)

    return grad


def _fd_hessian_from_grad(grad, h=FD_STEP):
    def hess(u):
        u = _as_points(u)
        e = np.eye(2) * h
        cols = [(grad(u + e[k]) - grad(u - e[k])) / (2 * h) for k in range(2)]
        H = np.stack(cols, axis=-1)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    return hess


def build_product_potential(c1, c2, c3) -> Potential:
    """Sextic product potential ``W(u) = |u-c1|^2 |u-c2|^2 |u-c3|^2``."""
    wells = np.array([c1, c2, c3], dtype=float)
    if wells.shape != (3, 2):
        raise ValueError("wells must be three points in the plane")
    for i in range(3):
        for j in range(i + 1, 3):
            if np.linalg.norm(wells[i] - wells[j]) <= 1e-12:
                raise DuplicateWells(f"wells {i + 1} and {j + 1} coincide: {wells[i]}")

    def W(u):
        d = _as_points(u)[..., None, :] - wells
        q = np.einsum("...ij,...ij->...i", d, d)
        return q[..., 0] * q[..., 1] * q[..., 2]

    def grad(u):
        d = _as_points(u)[..., None, :] - wells
        q = np.einsum("...ij,...ij->...i", d, d)
        others = np.stack([q[..., 1] * q[..., 2], q[..., 0] * q[..., 2], q[..., 0] * q[..., 1]], -1)
        return 2.0 * np.einsum("...i,...ij->...j", others, d)

    def hess(u):
        d = _as_points(u)[..., None, :] - wells
        q = np.einsum("...ij,...ij->...i", d, d)
        others = np.stack([q[..., 1] * q[..., 2], q[..., 0] * q[..., 2], q[..., 0] * q[..., 1]], -1)
        H = 2.0 * others.sum(-1)[..., None, None] * np.eye(2)
        for i in range(3):
            for j in range(3):
                if i != j:
                    k = 3 - i - j
                    H = H + 4.0 * q[..., k][..., None, None] * (d[..., i, :, None] * d[..., j, None, :])
        return H

    return Potential(wells=wells, W=W, grad=grad, hess=hess, family="product",
                     params={"wells": wells.tolist()})


def equilateral_wells(radius=1.0, start_deg=90.0):
    """Wells on a circle at ``start_deg``, ``start_deg+120`` and ``start_deg+240`` degrees."""
    ang = np.deg2rad(start_deg + np.array([0.0, 120.0, 240.0]))
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def build_two_well_section(kappa=1.0) -> Potential:
    """Planar two-well ``W(u) = (1-u1^2)^2 + kappa u2^2`` with wells at ``(+-1, 0)``.

    Restricted to the line ``u2 = 0`` this is the scalar double well whose
    connection is ``tanh``.
    """
    kappa = float(kappa)

    def W(u):
        u = _as_points(u)
        return (1.0 - u[..., 0] ** 2) ** 2 + kappa * u[..., 1] ** 2

    def grad(u):
        u = _as_points(u)
        return np.stack([-4.0 * u[..., 0] * (1.0 - u[..., 0] ** 2), 2.0 * kappa * u[..., 1]], -1)

    def hess(u):
        u = _as_points(u)
        H = np.zeros(u.shape + (2,))
        H[..., 0, 0] = 12.0 * u[..., 0] ** 2 - 4.0
        H[..., 1, 1] = 2.0 * kappa
        return H

    return Potential(wells=np.array([[-1.0, 0.0], [1.0, 0.0]]), W=W, grad=grad, hess=hess,
                     family="two_well_section", params={"kappa": kappa})


def evaluate(potential: Potential, u):
    """Return ``(W, grad W, Hess W)`` at ``u``; raise :class:`NonFinite` on NaN/inf."""
    u = _as_points(u)
    if not np.all(np.isfinite(u)):
        raise NonFinite(f"non-finite evaluation point {u}")
    w = potential.W(u)
    g = potential.grad(u)
    H = potential.hess(u)
    for name, val in (("W", w), ("grad", g), ("hess", H)):
        if not np.all(np.isfinite(val)):
            raise NonFinite(f"{name} is not finite at {u}")
    return w, g, H


def potential_from_config(cfg: dict) -> Potential:
    """Build a potential from a config mapping ``{"family": ..., "wells": ...}``."""
    family = cfg.get("family", "product")
    if family == "product":
        wells = cfg.get("wells")
        if wells is None:
            wells = equilateral_wells(cfg.get("radius", 1.0), cfg.get("start_deg", 90.0))
        wells = np.asarray(wells, dtype=float)
        if wells.shape != (3, 2):
            raise ConfigError("product family needs exactly three wells")
        return build_product_potential(*wells)
    if family == "two_well_section":
        return build_two_well_section(cfg.get("kappa", 1.0))
    raise ConfigError(f"unknown potential family {family!r}")


# -- hypothesis checks -------------------------------------------------------


@dataclass
class HypothesisReport:
    """Numeric evidence for hypotheses (a)-(d); flags are derived, not stored."""

    K: float
    m: float
    sample_budget: int
    seed: int
    minima: list            # [{"point": [x, y], "W": w, "eigenvalues": [l1, l2]}]
    positive_minima: list   # located local minima with W > 0
    well_eigenvalues: list  # Hessian eigenvalues at each declared well
    psd_min_eigenvalue: float
    psd_fraction: float
    psd_witness: list
    growth_p: float
    growth_K1: float
    growth_K2: float
    growth_witness: list
    defaults_used: list = field(default_factory=list)

    @property
    def flags(self):
        return {
            "three_minima": len(self.minima) == 3 and not self.positive_minima,
            "non_degenerate": bool(self.well_eigenvalues)
            and min(min(ev) for ev in self.well_eigenvalues) > 1e-8,
            "psd_outside_K": self.psd_min_eigenvalue >= -1e-9,
            "growth": self.growth_p >= 2.0 and self.growth_K1 > 0.0,
        }

    @property
    def passed(self):
        return all(self.flags.values())

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["flags"] = self.flags
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def first_failure(self):
        """``(name, witness)`` of the first failing hypothesis, or ``None``."""
        f = self.flags
        if not f["three_minima"]:
            wit = self.positive_minima[0]["point"] if self.positive_minima else [m["point"] for m in self.minima]
            return "three minima", wit
        if not f["non_degenerate"]:
            k = int(np.argmin([min(ev) for ev in self.well_eigenvalues]))
            return "non-degenerate", {"well": k + 1, "eigenvalues": self.well_eigenvalues[k]}
        if not f["psd_outside_K"]:
            return "psd outside K", self.psd_witness
        if not f["growth"]:
            return "growth", self.growth_witness
        return None


def _locate_minima(potential, starts):
    span = max(potential.scale, 1e-3)
    found = []
    for x0 in starts:
        res = optimize.minimize(lambda x: float(potential.W(x)), x0,
                                jac=lambda x: potential.grad(x), method="L-BFGS-B",
                                options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 2000})
        x = res.x
        H = potential.hess(x)
        ev = np.linalg.eigvalsh(H)
        if ev[0] < -1e-8 * max(1.0, abs(ev[-1])):
            continue  # saddle or ridge, not a local minimum
        found.append((x, float(potential.W(x)), ev))
    clusters = []
    for x, w, ev in sorted(found, key=lambda t: t[1]):
        for c in clusters:
            if np.linalg.norm(c[0] - x) < _MERGE * span:
                break
        else:
            clusters.append((x, w, ev))
    return clusters


def validate_hypotheses(potential: Potential, K=None, m=None, sample_budget=2000, seed=0,
                        strict=True) -> HypothesisReport:
    """Check hypotheses (a)-(d) by sampling and record the evidence.

    With ``strict`` the first failing hypothesis raises
    :class:`HypothesisViolated` carrying the report; otherwise the report is
    returned with failing flags.
    """
    defaults = []
    if K is None:
        K = 3.0 * potential.scale
        defaults.append("K")
    if m is None:
        m = 3.0 * potential.scale
        defaults.append("m")
    if K <= 0 or m <= 0:
        raise ValueError("K and m must be positive")
    if sample_budget < 1000:
        raise ValueError("sample_budget must be at least 1000")
    rng = np.random.default_rng(seed)

    # (a) basins of descent from a grid of starts
    lo = potential.wells.min(0)
    hi = potential.wells.max(0)
    pad = max(np.max(hi - lo), 1.0)
    g = np.linspace(0.0, 1.0, 12)
    gx = lo[0] - pad + g * (hi[0] - lo[0] + 2 * pad)
    gy = lo[1] - pad + g * (hi[1] - lo[1] + 2 * pad)
    starts = np.array([[a, b] for a in gx for b in gy])
    clusters = _locate_minima(potential, starts)
    minima, positive = [], []
    for x, w, ev in clusters:
        rec = {"point": x.tolist(), "W": w, "eigenvalues": ev.tolist()}
        (minima if w < _ZERO_W else positive).append(rec)

    # (b) Hessian at the declared wells
    well_ev = [np.linalg.eigvalsh(potential.hess(c)).tolist() for c in potential.wells]

    # (c) Hessian PSD on K < |u| <= 4K, uniform by area
    r = np.sqrt(rng.uniform(K ** 2, (4 * K) ** 2, sample_budget))
    th = rng.uniform(0, 2 * np.pi, sample_budget)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], -1)
    lam = np.linalg.eigvalsh(potential.hess(pts))[:, 0]
    k = int(np.argmin(lam))

    # (d) power growth on m <= |u| <= 8m
    r = np.exp(rng.uniform(np.log(m), np.log(8 * m), sample_budget))
    th = rng.uniform(0, 2 * np.pi, sample_budget)
    pts_d = np.stack([r * np.cos(th), r * np.sin(th)], -1)
    w = potential.W(pts_d)
    if np.all(w > 0):
        p, _ = np.polyfit(np.log(r), np.log(w), 1)
        ratio = w / r ** p
        K1, K2 = float(ratio.min()), float(ratio.max())
        wit = pts_d[int(np.argmin(ratio))].tolist()
    else:
        p, K1, K2 = 0.0, 0.0, float("nan")
        wit = pts_d[int(np.argmin(w))].tolist()

    report = HypothesisReport(
        K=float(K), m=float(m), sample_budget=int(sample_budget), seed=int(seed),
        minima=minima, positive_minima=positive, well_eigenvalues=well_ev,
        psd_min_eigenvalue=float(lam[k]), psd_fraction=float(np.mean(lam >= -1e-9)),
        psd_witness=pts[k].tolist(), growth_p=float(p), growth_K1=K1, growth_K2=K2,
        growth_witness=wit, defaults_used=defaults,
    )
    if strict:
        failure = report.first_failure()
        if failure is not None:
            raise HypothesisViolated(failure[0], failure[1], report)
    return report
