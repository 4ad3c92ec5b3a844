"""Penalized B-spline building blocks.

Open-uniform (clamped) B-spline bases over a fixed domain plus difference
penalties, the two ingredients every smooth term in the estimation modules
shares. Basis evaluation delegates to scipy's de Boor implementation; the
knot layout and penalty algebra are defined here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy import sparse


class DomainError(ValueError):
    """Raised when evaluation points fall outside the basis domain."""


@dataclass(frozen=True)
class SplineBasisSpec:
    """Layout of a clamped B-spline basis on ``domain``.

    ``num_knot_spans`` is the number of equal-width spans the domain is cut
    into; the basis then has ``num_knot_spans + degree`` functions. Boundary
    knots are repeated ``degree + 1`` times so the basis is a partition of
    unity on the closed domain.
    """

    degree: int = 3
    num_knot_spans: int = 20
    domain: tuple[float, float] = (0.0, 1.0)
    penalty_order: int = 2

    def __post_init__(self) -> None:
        lo, hi = self.domain
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.num_knot_spans < 1:
            raise ValueError("num_knot_spans must be >= 1")
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError("domain must be a finite interval (lo, hi) with lo < hi")
        if not (1 <= self.penalty_order < self.size):
            raise ValueError("penalty_order must satisfy 1 <= order < basis size")

    @property
    def size(self) -> int:
        """Number of basis functions K."""
        return self.num_knot_spans + self.degree

    def with_domain(self, lo: float, hi: float) -> "SplineBasisSpec":
        return SplineBasisSpec(self.degree, self.num_knot_spans, (float(lo), float(hi)),
                               self.penalty_order)


def knot_vector(spec: SplineBasisSpec) -> np.ndarray:
    """Full clamped knot vector for ``spec`` (length K + degree + 1)."""
    lo, hi = spec.domain
    interior = np.linspace(lo, hi, spec.num_knot_spans + 1)
    return np.concatenate([np.full(spec.degree, lo), interior, np.full(spec.degree, hi)])


def basis_matrix(x: np.ndarray, spec: SplineBasisSpec, *, clamp: bool = False) -> np.ndarray:
    """Evaluate the basis at ``x``; rows sum to one, each row has at most
    ``degree + 1`` nonzero entries.

    With ``clamp=False`` points outside the domain raise :class:`DomainError`;
    with ``clamp=True`` they are evaluated at the nearest domain endpoint,
    which is how downstream code handles residuals drifting past the grid
    frozen at initialization.
    """
    return _design(x, spec, clamp=clamp).toarray()


def _design(x: np.ndarray, spec: SplineBasisSpec, *, clamp: bool = False) -> sparse.csr_matrix:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        x = np.ravel(x)
    lo, hi = spec.domain
    if clamp:
        x = np.clip(x, lo, hi)
    else:
        if x.size and (x.min() < lo or x.max() > hi):
            bad = x[(x < lo) | (x > hi)]
            raise DomainError(
                f"{bad.size} evaluation point(s) outside basis domain [{lo}, {hi}]"
            )
    t = knot_vector(spec)
    return BSpline.design_matrix(x, t, spec.degree, extrapolate=False).tocsr()


def difference_penalty(size: int, order: int) -> np.ndarray:
    """Penalty matrix D'D from order-``order`` coefficient differences.

    Symmetric positive semidefinite with rank ``size - order``; its null space
    is exactly the polynomial coefficient sequences of degree < order.
    """
    if not (1 <= order < size):
        raise ValueError("order must satisfy 1 <= order < size")
    d = np.diff(np.eye(size), n=order, axis=0)
    return d.T @ d


def evaluation_grid(lo: float, hi: float, points: int = 200) -> np.ndarray:
    """Equidistant curve-evaluation grid over an observed support."""
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError("grid needs a finite nonempty interval")
    return np.linspace(lo, hi, points)
