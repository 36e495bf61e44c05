"""Closed-form boundary maps g : dOmega -> R^N and their exact gradients.

All evaluators are vectorised: points are (m, 2) arrays, values come back as
(m, N), gradients as (m, N, 2).  Gradients are only defined on the datum's
differentiability set; `exact_gradient_norm` enforces that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import GradientDomainError


@dataclass(frozen=True)
class BoundaryDatum:
    """A named boundary map with optional analytic gradient.

    Attributes
    ----------
    name : str
    target_dim : int
        N, the dimension of the target space.
    evaluate : callable, (m, 2) -> (m, N)
    exact_gradient : callable or None, (m, 2) -> (m, N, 2)
    differentiable_at : callable, (m, 2) -> (m,) bool
        Mask of points where exact_gradient is trusted.
    eikonal : bool
        True when |Du| is constant on the differentiability set.
    smoothness : str
        Informal regularity tag used in reports.
    """

    name: str
    target_dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    exact_gradient: Optional[Callable[[np.ndarray], np.ndarray]]
    differentiable_at: Callable[[np.ndarray], np.ndarray]
    eikonal: bool = False
    smoothness: str = "smooth"


def _as_points(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 2:
        raise ValueError("points must have shape (m, 2)")
    return pts


def _everywhere(pts):
    return np.ones(pts.shape[0], dtype=bool)


def _aronsson() -> BoundaryDatum:
    def ev(points):
        pts = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        return (np.abs(x) ** (4.0 / 3.0) - np.abs(y) ** (4.0 / 3.0))[:, None]

    def grad(points):
        pts = _as_points(points)
        g = np.empty((pts.shape[0], 1, 2))
        # d/dx |x|^{4/3} = (4/3) sign(x) |x|^{1/3} = (4/3) cbrt(x)
        g[:, 0, 0] = (4.0 / 3.0) * np.cbrt(pts[:, 0])
        g[:, 0, 1] = -(4.0 / 3.0) * np.cbrt(pts[:, 1])
        return g

    def diff_at(points):
        pts = _as_points(points)
        # the formula is C^1 but the second derivatives blow up on the axes;
        # keep the oracle away from them
        return (pts[:, 0] != 0.0) & (pts[:, 1] != 0.0)

    return BoundaryDatum("aronsson", 1, ev, grad, diff_at, smoothness="C^{1,1/3}")


def _cone() -> BoundaryDatum:
    def ev(points):
        pts = _as_points(points)
        return np.hypot(pts[:, 0], pts[:, 1])[:, None]

    def grad(points):
        pts = _as_points(points)
        r = np.hypot(pts[:, 0], pts[:, 1])
        g = np.empty((pts.shape[0], 1, 2))
        g[:, 0, 0] = pts[:, 0] / r
        g[:, 0, 1] = pts[:, 1] / r
        return g

    def diff_at(points):
        pts = _as_points(points)
        return np.hypot(pts[:, 0], pts[:, 1]) > 0.0

    return BoundaryDatum("cone", 1, ev, grad, diff_at, eikonal=True,
                         smoothness="Lipschitz, smooth away from 0")


def _vec_eikonal() -> BoundaryDatum:
    # u(x, y) = e^{ix} - e^{iy} with e^{it} = (cos t, sin t); |Du| = sqrt(2)
    def ev(points):
        pts = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([np.cos(x) - np.cos(y), np.sin(x) - np.sin(y)])

    def grad(points):
        pts = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        g = np.empty((pts.shape[0], 2, 2))
        g[:, 0, 0] = -np.sin(x)
        g[:, 0, 1] = np.sin(y)
        g[:, 1, 0] = np.cos(x)
        g[:, 1, 1] = -np.cos(y)
        return g

    return BoundaryDatum("vec_eikonal", 2, ev, grad, _everywhere, eikonal=True)


def _mixed(lam: float) -> BoundaryDatum:
    # (x, y) on x <= 0, (lam*x, y) on x > 0; the branches agree at x = 0
    def ev(points):
        pts = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([np.where(x > 0.0, lam * x, x), y])

    def grad(points):
        pts = _as_points(points)
        x = pts[:, 0]
        g = np.zeros((pts.shape[0], 2, 2))
        g[:, 0, 0] = np.where(x > 0.0, lam, 1.0)
        g[:, 1, 1] = 1.0
        return g

    def diff_at(points):
        pts = _as_points(points)
        if lam == 1.0:
            return _everywhere(pts)
        return pts[:, 0] != 0.0

    return BoundaryDatum(f"mixed(lambda={lam:g})", 2, ev, grad, diff_at,
                         smoothness="piecewise affine")


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return c, s


def _diffeo() -> BoundaryDatum:
    # u(x) = exp(log|x| S) x with S the quarter-turn generator: the point x is
    # rotated by the angle log|x|.  Only defined away from the origin.
    def ev(points):
        pts = _as_points(points)
        r = np.hypot(pts[:, 0], pts[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            c, s = _rotation(np.log(r))
            return np.column_stack([c * pts[:, 0] - s * pts[:, 1],
                                    s * pts[:, 0] + c * pts[:, 1]])

    def grad(points):
        # Du = R(theta) + S R(theta) x x^T / r^2,  theta = log r
        pts = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        r2 = x * x + y * y
        c, s = _rotation(0.5 * np.log(r2))
        g = np.empty((pts.shape[0], 2, 2))
        g[:, 0, 0] = c - (s * x * x + c * x * y) / r2
        g[:, 0, 1] = -s - (s * x * y + c * y * y) / r2
        g[:, 1, 0] = s + (c * x * x - s * x * y) / r2
        g[:, 1, 1] = c + (c * x * y - s * y * y) / r2
        return g

    def diff_at(points):
        pts = _as_points(points)
        return np.hypot(pts[:, 0], pts[:, 1]) > 0.0

    return BoundaryDatum("diffeo", 2, ev, grad, diff_at, eikonal=True,
                         smoothness="smooth away from 0")


def affine(matrix, offset=None) -> BoundaryDatum:
    """u(x) = A x + b for an (N, 2) matrix A and optional offset b."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.shape[1] != 2:
        raise ValueError("affine matrix must have two columns")
    b = np.zeros(A.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    if b.shape != (A.shape[0],):
        raise ValueError("affine offset length must match the matrix rows")

    def ev(points):
        return _as_points(points) @ A.T + b

    def grad(points):
        pts = _as_points(points)
        return np.broadcast_to(A, (pts.shape[0],) + A.shape).copy()

    return BoundaryDatum("affine", A.shape[0], ev, grad, _everywhere, eikonal=True)


def _harmonic_saddle() -> BoundaryDatum:
    def ev(points):
        pts = _as_points(points)
        return (pts[:, 0] ** 2 - pts[:, 1] ** 2)[:, None]

    def grad(points):
        pts = _as_points(points)
        g = np.empty((pts.shape[0], 1, 2))
        g[:, 0, 0] = 2.0 * pts[:, 0]
        g[:, 0, 1] = -2.0 * pts[:, 1]
        return g

    return BoundaryDatum("harmonic_saddle", 1, ev, grad, _everywhere)


def catalog_lookup(name: str, lam: Optional[float] = None,
                   matrix=None, offset=None) -> BoundaryDatum:
    """Return a catalogued boundary datum by name.

    `mixed` requires `lam` (the experiments use +1/2 and -1/2; other values
    are accepted for testing, lam = 1 degenerates to the identity map).
    `affine` requires `matrix` and takes an optional `offset`.
    """
    if name == "aronsson":
        return _aronsson()
    if name == "cone":
        return _cone()
    if name == "vec_eikonal":
        return _vec_eikonal()
    if name == "mixed":
        if lam is None:
            raise ValueError("mixed boundary data requires lam")
        return _mixed(float(lam))
    if name == "diffeo":
        return _diffeo()
    if name == "affine":
        if matrix is None:
            raise ValueError("affine boundary data requires a matrix")
        return affine(matrix, offset)
    if name == "harmonic_saddle":
        return _harmonic_saddle()
    raise ValueError(f"unknown boundary datum {name!r}")


CATALOG_NAMES = ("aronsson", "cone", "vec_eikonal", "mixed", "diffeo",
                 "affine", "harmonic_saddle")


def exact_gradient_norm(datum: BoundaryDatum, point) -> float:
    """Frobenius norm of the exact gradient at one point."""
    if datum.exact_gradient is None:
        raise GradientDomainError(f"{datum.name} has no exact gradient")
    pts = _as_points(point)
    if pts.shape[0] != 1:
        raise ValueError("exact_gradient_norm takes a single point")
    if not datum.differentiable_at(pts)[0]:
        raise GradientDomainError(
            f"{datum.name} is not differentiable at {tuple(pts[0])}"
        )
    return float(np.linalg.norm(datum.exact_gradient(pts)[0]))
