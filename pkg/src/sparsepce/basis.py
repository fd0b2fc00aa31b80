"""Total-order orthonormal polynomial bases (Legendre and Hermite).

Univariate polynomials are evaluated by three-term recurrence and
normalized so that ``E[psi_k^2] = 1`` under the input density: uniform on
``[-1, 1]`` for Legendre, standard normal for (probabilists') Hermite.
Multivariate polynomials are tensor products indexed by multi-indices of
total degree ``<= p``, ordered by grade and then lexicographically.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Family",
    "BasisSpec",
    "EvaluatedRow",
    "DomainError",
    "build_basis",
    "total_order_indices",
    "univariate",
    "eval_basis",
    "evaluate",
    "b_of_xi",
    "b_values",
    "assemble_matrix",
]

# largest integer exactly representable in a float64
MAX_SAFE_SIZE = 2**53 - 1


class DomainError(ValueError):
    """Input point outside the support of the orthogonality measure."""


class Family(str, enum.Enum):
    LEGENDRE = "legendre"
    HERMITE = "hermite"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, Family):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown polynomial family {value!r}") from None


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """A total-order tensor basis.

    ``multi_indices`` is a read-only ``(P, d)`` integer array; row ``k``
    holds the per-coordinate degrees of the ``k``-th basis polynomial.
    """

    family: Family
    d: int
    p: int
    multi_indices: np.ndarray

    @property
    def P(self) -> int:
        return self.multi_indices.shape[0]

    def __repr__(self) -> str:
        return f"BasisSpec(family={self.family.value}, d={self.d}, p={self.p}, P={self.P})"


@dataclass(frozen=True)
class EvaluatedRow:
    values: np.ndarray
    point: np.ndarray


def total_order_indices(d: int, p: int) -> np.ndarray:
    """All ``d``-tuples with coordinate sum ``<= p``, graded then lexicographic."""
    rows = []
    for grade in range(p + 1):
        # stars and bars: choose positions of d-1 bars among grade+d-1 slots
        grade_rows = []
        for bars in itertools.combinations(range(grade + d - 1), d - 1):
            edges = (-1,) + bars + (grade + d - 1,)
            grade_rows.append(tuple(edges[i + 1] - edges[i] - 1 for i in range(d)))
        grade_rows.sort()
        rows.extend(grade_rows)
    out = np.array(rows, dtype=np.int64).reshape(-1, d)
    out.setflags(write=False)
    return out


def build_basis(family: Family | str, d: int, p: int) -> BasisSpec:
    """Build the total-order basis of ``P = C(p + d, d)`` polynomials."""
    family = Family.parse(family)
    if int(d) != d or d < 1:
        raise ValueError(f"dimension d must be a positive integer, got {d!r}")
    if int(p) != p or p < 0:
        raise ValueError(f"order p must be a non-negative integer, got {p!r}")
    d, p = int(d), int(p)
    size = math.comb(p + d, d)
    if size > MAX_SAFE_SIZE:
        raise OverflowError(f"basis size C({p + d}, {d}) = {size} exceeds the safe integer range")
    indices = total_order_indices(d, p)
    assert indices.shape[0] == size
    return BasisSpec(family=family, d=d, p=p, multi_indices=indices)


def univariate(family: Family | str, order: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal univariate polynomials of degree ``0..order`` at ``x``.

    Returns an array of shape ``x.shape + (order + 1,)``.
    """
    family = Family.parse(family)
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (order + 1,))
    out[..., 0] = 1.0
    if order == 0:
        return out
    out[..., 1] = x
    if family is Family.LEGENDRE:
        for n in range(1, order):
            out[..., n + 1] = ((2 * n + 1) * x * out[..., n] - n * out[..., n - 1]) / (n + 1)
        out *= np.sqrt(2.0 * np.arange(order + 1) + 1.0)
    else:
        # normalized form of He_{n+1} = x He_n - n He_{n-1}; avoids n! overflow
        for n in range(1, order):
            out[..., n + 1] = (x * out[..., n] - math.sqrt(n) * out[..., n - 1]) / math.sqrt(n + 1)
    return out


def _check_points(spec: BasisSpec, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.ndim != 2 or points.shape[1] != spec.d:
        raise ValueError(f"expected points with {spec.d} coordinates, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DomainError("points must be finite")
    if spec.family is Family.LEGENDRE and np.any(np.abs(points) > 1.0):
        raise DomainError("Legendre inputs must lie in [-1, 1]^d")
    return points


def evaluate(spec: BasisSpec, points: np.ndarray) -> np.ndarray:
    """Unweighted measurement matrix ``Psi[i, k] = psi_k(points[i])``, shape ``(N, P)``."""
    points = _check_points(spec, points)
    table = univariate(spec.family, spec.p, points)  # (N, d, p+1)
    out = np.ones((points.shape[0], spec.P))
    for j in range(spec.d):
        out *= table[:, j, spec.multi_indices[:, j]]
    return out


def eval_basis(spec: BasisSpec, point: np.ndarray) -> EvaluatedRow:
    point = np.asarray(point, dtype=float).reshape(-1)
    return EvaluatedRow(values=evaluate(spec, point)[0], point=point)


def b_values(spec: BasisSpec, points: np.ndarray) -> np.ndarray:
    """``B(xi) = ||psi(xi)||_2`` for each row of ``points``."""
    return np.linalg.norm(evaluate(spec, points), axis=1)


def b_of_xi(spec: BasisSpec, point: np.ndarray) -> float:
    return float(b_values(spec, np.asarray(point, dtype=float).reshape(1, -1))[0])


def assemble_matrix(spec: BasisSpec, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted measurement matrix ``Phi = W Psi``."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != points.shape[0]:
        raise ValueError(f"{points.shape[0]} points but {weights.shape[0]} weights")
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")
    return weights[:, None] * evaluate(spec, points)
