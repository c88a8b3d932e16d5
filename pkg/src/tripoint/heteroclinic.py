"""One-dimensional connections ``zeta'' = grad W(zeta) / 2`` between two wells.

The profile on ``[-L, L]`` minimises the discrete action

    S = sum_k |zeta_{k+1} - zeta_k|^2 / dtau + sum_k W(zeta_k) dtau

with clamped end values.  Its stationarity condition is the central-difference
form of the ODE, so the residual check and the descent share one stencil.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from .errors import ResidualTooLarge, TailNotSettled, ValidationError
from .geodesics import geodesic_distance
from .potential import Potential

log = logging.getLogger(__name__)


class DegenerateProfileWarning(UserWarning):
    """The profile carries no energy (constant path at a well)."""


@dataclass
class HeteroclinicProfile:
    tau: np.ndarray
    values: np.ndarray
    wells: tuple            # 1-based (i, j); tau -> -inf at c_i
    potential: Potential
    residual: float = float("nan")
    iterations: int = 0

    @property
    def dtau(self):
        return float(self.tau[1] - self.tau[0])

    @property
    def L(self):
        return float(self.tau[-1])

    def energy_parts(self):
        """``(int W dtau, int |zeta'|^2 dtau)`` with the discrete-action stencil."""
        dz = np.diff(self.values, axis=0)
        kinetic = float(np.sum(dz * dz) / self.dtau)
        w = self.potential.W(self.values)
        potential = float(np.sum(w[1:-1]) * self.dtau + 0.5 * (w[0] + w[-1]) * self.dtau)
        return potential, kinetic

    @property
    def energy(self):
        return sum(self.energy_parts())

    def spline(self):
        return CubicSpline(self.tau, self.values, axis=0)

    def reflected(self):
        """The same connection read from ``c_j`` to ``c_i``."""
        return HeteroclinicProfile(-self.tau[::-1].copy(), self.values[::-1].copy(),
                                   (self.wells[1], self.wells[0]), self.potential,
                                   self.residual, self.iterations)

    def summary(self):
        out = {"wells": list(self.wells), "L": self.L, "n": len(self.tau),
               "energy": self.energy, "residual": self.residual}
        try:
            out["decay_rate"] = tail_decay_rate(self)
        except TailNotSettled:
            out["decay_rate"] = None
        return out

    def to_text(self):
        lines = ["# tau zeta1 zeta2"]
        lines += [f"{t:.17g} {z[0]:.17g} {z[1]:.17g}" for t, z in zip(self.tau, self.values)]
        return "\n".join(lines) + "\n"


def ode_residual(potential, values, dtau):
    """``zeta'' - grad W(zeta)/2`` on interior nodes (central differences)."""
    d2 = (values[2:] - 2 * values[1:-1] + values[:-2]) / dtau ** 2
    return d2 - 0.5 * potential.grad(values[1:-1])


def _equipartition_init(potential, path_pts, tau):
    """Place the geodesic on the tau grid with speed ``|zeta'| = sqrt W``."""
    P = path_pts
    # fine resampling keeps the 1/sqrt(W) quadrature stable
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    sf = np.linspace(0.0, s[-1], 20001)
    Pf = np.stack([np.interp(sf, s, P[:, 0]), np.interp(sf, s, P[:, 1])], -1)
    mid = 0.5 * (sf[1:] + sf[:-1])
    Pm = np.stack([np.interp(mid, s, P[:, 0]), np.interp(mid, s, P[:, 1])], -1)
    sq = potential.sqrtW(Pm)
    ds = np.diff(sf)
    # centre where half the geodesic action has been accumulated
    acc = np.concatenate([[0.0], np.cumsum(sq * ds)])
    inv = ds / np.maximum(sq, 1e-12)
    T = np.concatenate([[0.0], np.cumsum(inv)])
    T = T - np.interp(0.5 * acc[-1], acc, T)
    Z = np.stack([np.interp(tau, T, Pf[:, 0]), np.interp(tau, T, Pf[:, 1])], -1)
    Z[0], Z[-1] = P[0], P[-1]
    return Z


def _descend_action(potential, Z, dtau, tol, max_iter):
    """Barzilai-Borwein descent in the metric of ``2 dtau (-D2 + I)``."""
    m = len(Z) - 2
    ab = np.zeros((3, m))
    ab[0, 1:] = -1.0 / dtau ** 2
    ab[1, :] = 2.0 / dtau ** 2 + 1.0
    ab[2, :-1] = -1.0 / dtau ** 2
    ab *= 2.0 * dtau

    def metric(v):
        out = ab[1][:, None] * v
        out[1:] += ab[0, 1:][:, None] * v[:-1]
        out[:-1] += ab[2, :-1][:, None] * v[1:]
        return out

    def gradient(Zc):
        # dS/dzeta_k = -2 dtau (zeta'' - grad W / 2)
        return -2.0 * dtau * ode_residual(potential, Zc, dtau)

    g = gradient(Z)
    step = 1.0
    res = float(np.max(np.linalg.norm(g, axis=1))) / (2.0 * dtau)
    for it in range(1, max_iter + 1):
        s = -step * linalg.solve_banded((1, 1), ab, g)
        Z = Z.copy()
        Z[1:-1] += s
        gnew = gradient(Z)
        y = gnew - g
        g = gnew
        res = float(np.max(np.linalg.norm(g, axis=1))) / (2.0 * dtau)
        if res <= tol * (1.0 + float(np.max(np.abs(potential.grad(Z))))):
            return Z, res, it
        sy = float(np.sum(s * y))
        step = float(np.sum(s * metric(s))) / sy if sy > 0 else 0.5 * step
        step = min(max(step, 1e-6), 10.0)
    return Z, res, max_iter


def solve_connection(potential: Potential, i: int, j: int, L=10.0, n=2001, tol=1e-9,
                     max_iter=20000, path=None, geodesic_opts=None) -> HeteroclinicProfile:
    """Heteroclinic profile from well ``i`` (tau -> -L) to well ``j`` (tau -> +L).

    The pair is solved in increasing index order and reflected otherwise, so
    swapping ``(i, j)`` returns the mirrored profile exactly.
    """
    if i == j:
        raise ValidationError("need two distinct wells")
    if L < 8:
        raise ValidationError("L must be at least 8")
    if n < 401 or n % 2 == 0:
        raise ValidationError("n must be odd and at least 401")
    if i > j:
        return solve_connection(potential, j, i, L, n, tol, max_iter,
                                None if path is None else path[::-1], geodesic_opts).reflected()
    a, b = potential.wells[i - 1], potential.wells[j - 1]
    if path is None:
        path = geodesic_distance(potential, a, b, geodesic_opts).path.points
    tau = np.linspace(-L, L, n)
    dtau = tau[1] - tau[0]
    Z0 = _equipartition_init(potential, np.asarray(path, float), tau)
    Z, res, it = _descend_action(potential, Z0, dtau, tol, max_iter)
    bound = tol * (1.0 + float(np.max(np.abs(potential.grad(Z)))))
    if res > bound:
        raise ResidualTooLarge(res, bound)
    prof = HeteroclinicProfile(tau, Z, (i, j), potential, res, it)
    k = int(np.searchsorted(tau, -L + 1.0))
    tails = (np.linalg.norm(Z[k] - a), np.linalg.norm(Z[-1 - k] - b))
    if max(tails) > 1e-3:
        raise TailNotSettled(f"profile is {max(tails):.2e} from the wells one unit inside the "
                             f"interval; increase L")
    log.debug("connection %d-%d: %d iterations, residual %.2e", i, j, it, res)
    return prof


def equipartition_residual(profile: HeteroclinicProfile) -> float:
    """``|int W - int |zeta'|^2| / energy``; zero for degenerate profiles."""
    pot, kin = profile.energy_parts()
    total = pot + kin
    if total <= 0.0:
        warnings.warn("constant profile has zero energy", DegenerateProfileWarning, stacklevel=2)
        return 0.0
    return abs(pot - kin) / total


def tail_decay_rate(profile: HeteroclinicProfile, floor=1e-9, ceiling=1e-2) -> float:
    """Exponential rate at which the profile approaches its right-hand well.

    Least-squares slope of ``log |zeta - c_j|`` over the right-hand tail: nodes
    with ``tau >= 0`` that are at least one unit from the clamped end and
    whose distance to the well lies in ``[floor, ceiling]`` times the well
    separation.
    """
    cj = profile.potential.wells[profile.wells[1] - 1]
    ci = profile.potential.wells[profile.wells[0] - 1]
    sep = float(np.linalg.norm(cj - ci))
    dist = np.linalg.norm(profile.values - cj, axis=1)
    tau = profile.tau
    sel = (tau >= 0) & (tau <= tau[-1] - 1.0) & (dist >= floor * sep) & (dist <= ceiling * sep)
    if sel.sum() < 5:
        raise TailNotSettled("tail window is empty: profile has not settled on the interval")
    slope, icpt = np.polyfit(tau[sel], np.log(dist[sel]), 1)
    fit = np.max(np.abs(np.log(dist[sel]) - (slope * tau[sel] + icpt)))
    if fit > 0.5 or slope >= 0:
        raise TailNotSettled(f"tail is not exponential (log-fit residual {fit:.2f})")
    return float(-slope)


def connection_summary_json(profiles):
    return json.dumps([p.summary() for p in profiles], indent=2, sort_keys=True)
