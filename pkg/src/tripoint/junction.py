"""Sector openings from the sine law and the half-lines they bound.

The openings ``alpha_i`` satisfy ``sin(alpha_i) / Gamma(opposite pair) = const``
and ``sum(alpha) = 2 pi``.  They are the exterior angles of the triangle
whose sides are the three distances: ``alpha_i = pi - beta_i``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NoJunction


@dataclass
class JunctionAngles:
    alpha: np.ndarray       # sector openings, alpha[i] belongs to well i+1
    theta: np.ndarray       # cumulative directions theta_1..theta_3 (theta_3 = theta0 + 2 pi)
    sides: np.ndarray       # (Gamma23, Gamma13, Gamma12)
    theta0: float = 0.0

    @property
    def sine_ratio(self):
        return np.sin(self.alpha) / self.sides

    def sector_bounds(self, i):
        """``(theta_{i-1}, theta_i)`` for well ``i`` (1-based)."""
        lo = self.theta0 if i == 1 else self.theta[i - 2]
        return lo, self.theta[i - 1]

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "theta": self.theta.tolist(),
                "sides": self.sides.tolist(), "theta0": self.theta0,
                "alpha_deg": np.rad2deg(self.alpha).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["alpha"]), np.array(d["theta"]), np.array(d["sides"]), d["theta0"])

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _sides(table):
    if hasattr(table, "sides"):
        return np.asarray(table.sides, dtype=float)
    t = np.asarray(table, dtype=float)
    if t.shape == (3, 3):
        return np.array([t[1, 2], t[0, 2], t[0, 1]])
    if t.shape == (3,):
        return t
    raise ValueError("expected a DistanceTable, a 3x3 matrix or the three sides")


def _interior_angle(a, b, c):
    """Angle opposite side ``a`` in a triangle with sides a, b, c."""
    # half-angle tangent form; arccos loses digits near degenerate triangles
    return 2.0 * np.arctan(np.sqrt(((a - b + c) * (a + b - c)) / ((a + b + c) * (-a + b + c))))


def solve_angles(table, theta0: float = 0.0) -> JunctionAngles:
    """Solve the sine-law condition for the three sector openings.

    ``table`` is a :class:`~tripoint.geodesics.DistanceTable`, a 3x3 matrix of
    distances, or the triple ``(Gamma23, Gamma13, Gamma12)``.
    """
    a = _sides(table)
    for k in range(3):
        if not a[k] < a[(k + 1) % 3] + a[(k + 2) % 3] or a[k] <= 0:
            raise NoJunction(a, k)
    beta = np.array([_interior_angle(a[0], a[1], a[2]),
                     _interior_angle(a[1], a[2], a[0]),
                     _interior_angle(a[2], a[0], a[1])])
    alpha = np.pi - beta
    # absorb rounding so the openings close the circle
    alpha[2] = 2.0 * np.pi - alpha[0] - alpha[1]
    return JunctionAngles(alpha, directions_from_alpha(alpha, theta0), a, float(theta0))


def directions_from_alpha(alpha, theta0=0.0):
    return theta0 + np.cumsum(alpha)


def directions(angles: JunctionAngles, theta0: float = 0.0) -> np.ndarray:
    """Half-line directions ``theta_i = theta0 + sum_{k<=i} alpha_k``."""
    return directions_from_alpha(angles.alpha, theta0)


def halfline_distance(direction: float, x) -> np.ndarray:
    """Euclidean distance from ``x`` to the closed half-line from the origin."""
    x = np.asarray(x, dtype=float)
    e = np.array([np.cos(direction), np.sin(direction)])
    along = x @ e
    perp = np.abs(x[..., 1] * e[0] - x[..., 0] * e[1])
    return np.where(along >= 0, perp, np.linalg.norm(x, axis=-1))


def signed_halfline_distance(direction: float, x) -> np.ndarray:
    """Distance to the half-line, positive on its counter-clockwise side."""
    x = np.asarray(x, dtype=float)
    e = np.array([np.cos(direction), np.sin(direction)])
    cross = e[0] * x[..., 1] - e[1] * x[..., 0]
    return np.where(cross >= 0, 1.0, -1.0) * halfline_distance(direction, x)
