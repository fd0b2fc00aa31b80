"""Greedy sparse recovery: subspace pursuit and its design-adaptive variant.

All "K largest in magnitude" selections break ties toward the lowest
column index, and supports are kept as sorted index arrays, so every
solver is deterministic for a given input (and RNG, where one is used).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .design import Design, augment, subset_select
from .sampling import RngStream, as_generator

CV_TIE_RTOL = 1e-10
# residual growth below this fraction of ||v|| is round-off, not an increase
RESID_RTOL = 1e-12

__all__ = [
    "SparseSolution",
    "OracleFn",
    "CandidateOracle",
    "lsa",
    "resid",
    "top_k",
    "subspace_pursuit",
    "cross_validate_k",
    "k_grid",
    "dsp",
    "dsp_cv",
]


@dataclass
class SparseSolution:
    coeffs: np.ndarray
    support: np.ndarray
    k_used: int
    residual_history: list[float] = field(default_factory=list)
    n_model_evals: int = 0
    design: Design | None = None
    n_iterations: int = 0


class OracleFn:
    """Counts evaluations of a scalar model ``u(xi)``."""

    def __init__(self, fn: Callable[[np.ndarray], float]):
        self.fn = fn
        self.n_evals = 0

    def __call__(self, point) -> float:
        self.n_evals += 1
        return float(self.fn(np.asarray(point, dtype=float)))


class CandidateOracle:
    """Weighted QoI values ``w_i u(xi_i)`` for rows of a candidate pool.

    Each row is evaluated at most once; repeated requests are served from
    a cache and counted in ``cache_hits``. Either pass a model ``fn`` over
    points, or precomputed unweighted ``values`` (used by manufactured
    problems, whose noise is tied to the candidate row).
    """

    def __init__(self, points, weights, fn: Callable | None = None, values=None):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if (fn is None) == (values is None):
            raise ValueError("pass exactly one of fn or values")
        self.oracle = OracleFn(fn) if fn is not None else None
        self.values = None if values is None else np.asarray(values, dtype=float)
        self._cache: dict[int, float] = {}
        self.n_evals = 0
        self.cache_hits = 0

    def __call__(self, index: int) -> float:
        index = int(index)
        if index in self._cache:
            self.cache_hits += 1
            return self._cache[index]
        if self.oracle is not None:
            u = self.oracle(self.points[index])
        else:
            u = float(self.values[index])
        self.n_evals += 1
        self._cache[index] = self.weights[index] * u
        return self._cache[index]

    def evaluate(self, indices) -> np.ndarray:
        return np.array([self(i) for i in indices], dtype=float)


def lsa(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution.

    Uses LAPACK's complete orthogonal factorization (``gelsy``), which
    returns the same minimum-norm solution as the SVD pseudoinverse at a
    fraction of the cost, with rank tolerance ``max(N, K) * eps``.
    """
    matrix = np.asarray(matrix, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if matrix.shape[1] == 0:
        return np.zeros(0)
    cond = max(matrix.shape) * np.finfo(float).eps
    coef, *_ = scipy.linalg.lstsq(matrix, rhs, cond=cond, lapack_driver="gelsy", check_finite=False)
    return coef


def resid(v: np.ndarray, phi_s: np.ndarray) -> np.ndarray:
    """Residual of ``v`` after projection onto the column space of ``phi_s``."""
    return v - phi_s @ lsa(phi_s, v)


def top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Positions of the ``k`` largest ``|values|``, lowest index first on ties."""
    return np.argsort(-np.abs(values), kind="stable")[:k]


def _check_k(K: int, n_rows: int, n_cols: int) -> int:
    if int(K) != K:
        raise ValueError(f"K must be an integer, got {K!r}")
    K = int(K)
    if K < 1 or 2 * K > n_rows or K > n_cols:
        raise ValueError(f"K={K} out of range for a {n_rows}x{n_cols} system (need 1 <= K <= floor(N/2))")
    return K


def _expand_and_prune(phi, v, v_r, support, K):
    """One SP support update: merge in K new atoms, fit, keep the K largest."""
    merged = np.union1d(support, top_k(phi.T @ v_r, K))
    coef = lsa(phi[:, merged], v)
    return np.sort(merged[top_k(coef, K)])


def _finish(phi, v, support, P):
    coeffs = np.zeros(P)
    coeffs[support] = lsa(phi[:, support], v)
    return coeffs


def subspace_pursuit(K: int, matrix: np.ndarray, rhs: np.ndarray) -> SparseSolution:
    """Subspace pursuit for ``v ≈ Phi c`` with at most ``K`` nonzeros.

    Iterates until ``P`` iterations, until the residual norm increases by
    more than round-off (the previous support is then restored), or until
    the support is a fixed point, after which further iterations would
    repeat exactly.
    """
    phi = np.asarray(matrix, dtype=float)
    v = np.asarray(rhs, dtype=float).reshape(-1)
    N, P = phi.shape
    if v.shape[0] != N:
        raise ValueError(f"rhs has length {v.shape[0]}, matrix has {N} rows")
    K = _check_k(K, N, P)

    support = np.sort(top_k(phi.T @ v, K))
    v_r = resid(v, phi[:, support])
    history = [float(np.linalg.norm(v_r))]
    v_norm = float(np.linalg.norm(v))
    ell = 0
    while True:
        ell += 1
        new_support = _expand_and_prune(phi, v, v_r, support, K)
        new_r = resid(v, phi[:, new_support])
        norm = float(np.linalg.norm(new_r))
        if norm > history[-1] + RESID_RTOL * v_norm:
            break
        converged = np.array_equal(new_support, support)
        support, v_r = new_support, new_r
        history.append(norm)
        if ell >= P or converged:
            break
    return SparseSolution(_finish(phi, v, support, P), support, K, history, 0, None, ell)


def k_grid(N: int, n_k: int = 10, n_retained: int | None = None) -> np.ndarray:
    """``n_k`` linearly spaced integers in ``[1, floor(N/2)]``, deduplicated.

    Values with ``2k > n_retained`` are dropped so every fit is overdetermined.
    """
    grid = np.unique(np.round(np.linspace(1, N // 2, n_k)).astype(int))
    if n_retained is not None:
        grid = grid[2 * grid <= n_retained]
    return grid


def cross_validate_k(
    matrix: np.ndarray,
    rhs: np.ndarray,
    n_r: int = 4,
    n_k: int = 10,
    rng: RngStream | np.random.Generator | int | None = None,
) -> int:
    """Choose ``K`` by repeated hold-out validation of subspace pursuit.

    Each of ``n_r`` random splits holds out ``N - floor(0.8 N)`` rows; the
    same splits are reused for every ``K`` on the grid. Returns the grid
    value with the smallest mean held-out residual. Errors that agree to
    within ``CV_TIE_RTOL`` of the held-out data norm are ties, and the
    lowest ``K`` wins.
    """
    phi = np.asarray(matrix, dtype=float)
    v = np.asarray(rhs, dtype=float).reshape(-1)
    N, P = phi.shape
    if N < 5:
        raise ValueError(f"cross-validation needs at least 5 rows, got {N}")
    n_val = N - math.floor(0.8 * N)
    n_ret = N - n_val
    if n_ret < 2 or n_val < 1:
        raise ValueError(f"degenerate split of {N} rows")
    grid = k_grid(N, n_k, n_ret)
    grid = grid[grid <= P]
    if grid.size == 0:
        raise ValueError(f"no admissible K for {N} rows")
    gen = as_generator(rng)
    splits = []
    for _ in range(n_r):
        held = np.sort(gen.choice(N, size=n_val, replace=False))
        kept = np.setdiff1d(np.arange(N), held)
        splits.append((kept, held))

    errors = np.empty(grid.size)
    for gi, k in enumerate(grid):
        e = 0.0
        for kept, held in splits:
            sol = subspace_pursuit(int(k), phi[kept], v[kept])
            e += float(np.linalg.norm(phi[held] @ sol.coeffs - v[held]))
        errors[gi] = e / n_r
    # errors within round-off of the best count as ties and go to the smallest k
    scale = np.mean([np.linalg.norm(v[held]) for _, held in splits])
    best = errors.min()
    return int(grid[np.flatnonzero(errors <= best + CV_TIE_RTOL * scale)[0]])


def _dsp_core(candidate, n_max, oracle, n0, choose_k, K0):
    candidate = np.asarray(candidate, dtype=float)
    M, P = candidate.shape
    design = subset_select(candidate, n0)
    v = oracle.evaluate(design.pi)

    def rows():
        return candidate[design.indices]

    phi = rows()
    K = choose_k(phi, v) if choose_k is not None else K0
    support = np.sort(top_k(phi.T @ v, K))
    v_r = resid(v, phi[:, support])
    history = [float(np.linalg.norm(v_r))]
    prev_len = None
    ell = 0
    while True:
        ell += 1
        N = v.shape[0]
        if choose_k is not None and ell > 1 and N != prev_len:
            K = choose_k(phi, v)
        prev_len = N
        new_support = _expand_and_prune(phi, v, v_r, support, K)
        grew = False
        if N < n_max:
            design = augment(design, candidate, new_support, 1)
            v = np.append(v, oracle(design.pi[-1]))
            phi = rows()
            grew = True
        new_r = resid(v, phi[:, new_support])
        norm = float(np.linalg.norm(new_r))
        if norm > history[-1] + RESID_RTOL * float(np.linalg.norm(v)) and ell >= n_max - n0 + 1:
            break
        converged = not grew and np.array_equal(new_support, support)
        support, v_r = new_support, new_r
        history.append(norm)
        if N == n_max and (ell >= P or converged):
            break
    coeffs = _finish(phi, v, support, P)
    # an exit that restores the previous support may predate the latest K estimate
    return SparseSolution(coeffs, support, int(support.size), history, oracle.n_evals, design, ell)


def _check_budget(candidate, n_max):
    M = np.asarray(candidate).shape[0]
    if int(n_max) != n_max or n_max < 1:
        raise ValueError(f"budget must be a positive integer, got {n_max!r}")
    if n_max > M:
        raise ValueError(f"budget N_max={n_max} exceeds the pool size M={M}")
    return int(n_max)


def dsp(K: int, candidate: np.ndarray, n_max: int, oracle: CandidateOracle) -> SparseSolution:
    """D-optimal subspace pursuit with a fixed sparsity bound ``K``.

    Starts from a subset-selected design of ``max(2K, floor(0.8 n_max))``
    rows and, while the budget allows, appends one D-optimal row per
    iteration for the current support estimate, evaluating the oracle once
    per new row. Residuals after an augmentation use the augmented system.
    """
    n_max = _check_budget(candidate, n_max)
    P = np.asarray(candidate).shape[1]
    if int(K) != K or K < 1 or K > P:
        raise ValueError(f"K={K} out of range")
    if 2 * K > n_max:
        raise ValueError(f"budget N_max={n_max} is below 2K={2 * K}")
    n0 = max(2 * int(K), math.floor(0.8 * n_max))
    return _dsp_core(candidate, n_max, oracle, n0, None, int(K))


def dsp_cv(
    candidate: np.ndarray,
    n_max: int,
    oracle: CandidateOracle,
    rng: RngStream | np.random.Generator | int | None = None,
    n_r: int = 4,
    n_k: int = 10,
) -> SparseSolution:
    """DSP with ``K`` re-estimated by cross-validation whenever the design grows."""
    n_max = _check_budget(candidate, n_max)
    n0 = math.floor(0.8 * n_max)
    if n0 < 5:
        raise ValueError(f"budget N_max={n_max} too small for cross-validation")
    gen = as_generator(rng)

    def choose_k(phi, v):
        return cross_validate_k(phi, v, n_r=n_r, n_k=n_k, rng=gen)

    return _dsp_core(candidate, n_max, oracle, n0, choose_k, None)
