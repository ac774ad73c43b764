"""The conically constrained linear problem.

Minimize ``f(x) = x_1`` subject to ``x_1 >= 0`` and
``x_1**2 - xi * sum(x_k**2, k=2..N) >= 0``. The feasible set is a convex
second-order cone around the ``x_1`` axis whose boundary, in the reduced
``(x, r)`` plane, is the line ``r = x / sqrt(xi)``.

All functions here are pure and operate on fresh arrays.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DimensionError

#: Relative slack on the quadratic cone inequality, scaled by ``max(1, |p|^2)``.
FEAS_RTOL = 1e-12


@dataclass(frozen=True)
class ConeSpec:
    """Problem dimension ``n`` and cone opening parameter ``xi``."""

    n: int
    xi: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        if not (self.xi > 0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be a positive finite number, got {self.xi!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "xi", float(self.xi))

    @property
    def sqrt_xi(self):
        return math.sqrt(self.xi)


@dataclass(frozen=True)
class AxisCoords:
    """Position along the cone axis (``x``) and distance from it (``r``)."""

    x: float
    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"r must be non-negative, got {self.r!r}")


def _as_point(cone, point):
    p = np.asarray(point, dtype=float)
    if p.ndim != 1 or p.shape[0] != cone.n:
        raise DimensionError(f"expected a vector of length {cone.n}, got shape {p.shape}")
    return p


def feasible_rows(xi, points):
    """Row-wise feasibility test for an ``(m, N)`` array."""
    x1 = points[:, 0]
    r_sq = np.einsum("ij,ij->i", points[:, 1:], points[:, 1:])
    slack = FEAS_RTOL * np.maximum(1.0, x1 * x1 + r_sq)
    return (x1 >= 0) & (x1 * x1 - xi * r_sq >= -slack)


def project_rows(xi, points):
    """Project every row of an ``(m, N)`` array onto the cone.

    Feasible rows are copied unchanged. Infeasible rows go to the nearest
    boundary point, or to the apex when ``x_1 + |r|/sqrt(xi) <= 0``.
    """
    out = np.array(points, dtype=float, copy=True)
    bad = ~feasible_rows(xi, out)
    if not bad.any():
        return out
    sub = out[bad]
    sqrt_xi = math.sqrt(xi)
    r_norm = np.sqrt(np.einsum("ij,ij->i", sub[:, 1:], sub[:, 1:]))
    t = sub[:, 0] + r_norm / sqrt_xi
    on_face = math.sqrt(xi / (xi + 1.0)) * t > 0
    q = np.where(on_face, xi / (xi + 1.0) * t, 0.0)
    # on_face with r_norm == 0 would need x_1 > 0, which is feasible, so the
    # division below only ever sees r_norm > 0 where it matters
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(on_face, q / (sqrt_xi * r_norm), 0.0)
    sub[:, 0] = q
    sub[:, 1:] *= scale[:, None]
    out[bad] = sub
    return out


def is_feasible(cone, point):
    """Return True iff ``point`` lies in the cone (up to :data:`FEAS_RTOL`)."""
    p = _as_point(cone, point)
    return bool(feasible_rows(cone.xi, p[None, :])[0])


def project_onto_cone(cone, point):
    """Euclidean projection of ``point`` onto the feasible cone.

    A feasible input is returned unchanged (as a copy). A point with ``r = 0``
    and ``x_1 < 0`` lands on the apex through the ordinary "otherwise" branch.
    """
    p = _as_point(cone, point)
    return project_rows(cone.xi, p[None, :])[0]


def axis_coords(point):
    """Reduce a parameter vector to ``(x, r)``."""
    p = np.asarray(point, dtype=float)
    if p.ndim != 1 or p.shape[0] < 2:
        raise DimensionError(f"need a vector of length >= 2, got shape {p.shape}")
    return AxisCoords(x=float(p[0]), r=float(np.linalg.norm(p[1:])))


def boundary_r(cone, x):
    """Distance from the axis of the cone boundary at axis position ``x``."""
    if x < 0:
        raise ValueError(f"boundary is only defined for x >= 0, got {x!r}")
    return x / cone.sqrt_xi


def project_axis_coords(cone, x, r):
    """Nearest feasible point to ``(x, r)`` within the reduced half-plane.

    This is the two-dimensional instance of :func:`project_onto_cone`.
    """
    q, q_r = project_rows(cone.xi, np.array([[x, r]], dtype=float))[0]
    return float(q), abs(float(q_r))
