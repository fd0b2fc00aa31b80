"""D-optimal experimental designs from a weighted candidate matrix.

Designs are chosen by column-pivoted QR of ``Phi_c^T`` (each column is a
candidate point), optionally preceded by an SVD (subset selection), and
grown one point at a time against a support-restricted submatrix.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Design",
    "InfoMatrix",
    "PivotedQR",
    "pivoted_qr",
    "information_matrix",
    "phi_d",
    "phi_d_normalized",
    "design_quality",
    "rrqr_select",
    "subset_select",
    "augment",
    "det_ratio_check",
]

log = logging.getLogger(__name__)

# relative gap below which two pivot norms are treated as tied
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Design:
    """Ordered, distinct, 0-based row indices into a candidate pool."""

    pi: tuple[int, ...]
    pool_ref: str | None = None

    def __post_init__(self):
        pi = tuple(int(i) for i in self.pi)
        if len(set(pi)) != len(pi):
            raise ValueError("design indices must be distinct")
        if any(i < 0 for i in pi):
            raise ValueError("design indices must be non-negative")
        object.__setattr__(self, "pi", pi)

    def __len__(self) -> int:
        return len(self.pi)

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.pi, dtype=int)


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    matrix: np.ndarray
    n_rows: int


def information_matrix(phi_n: np.ndarray) -> InfoMatrix:
    """``M = Phi^T Phi / N`` for an ``N x K`` design matrix."""
    phi_n = np.asarray(phi_n, dtype=float)
    n = phi_n.shape[0]
    if n == 0:
        raise ValueError("empty design")
    return InfoMatrix(phi_n.T @ phi_n / n, n)


def _as_matrix(info) -> np.ndarray:
    m = info.matrix if isinstance(info, InfoMatrix) else np.asarray(info, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"information matrix must be square, got shape {m.shape}")
    return m


def phi_d(info: InfoMatrix | np.ndarray) -> float:
    """``|det M|^(1/K)`` as the geometric mean of the singular values.

    Returns 0 when ``M`` is numerically singular.
    """
    m = _as_matrix(info)
    k = m.shape[0]
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    if s[-1] <= k * np.finfo(float).eps * s[0]:
        return 0.0
    return float(np.exp(np.mean(np.log(s))))


def phi_d_normalized(info: InfoMatrix | np.ndarray) -> float:
    """``phi_d(M / ||M||_F)``; scale invariant."""
    m = _as_matrix(info)
    fro = np.linalg.norm(m, "fro")
    if fro == 0.0:
        raise ValueError("normalized D-criterion undefined for the zero matrix")
    return phi_d(m / fro)


def design_quality(phi_n: np.ndarray) -> float:
    """Normalized D-criterion of a design matrix of any shape.

    For ``N >= K`` this is ``phi_d_normalized(Phi^T Phi / N)``. For ``N < K``
    the ``K x K`` information matrix is singular, so the ``N x N`` Gram
    ``Phi Phi^T / N`` is used instead; it carries the same nonzero spectrum.
    """
    phi_n = np.asarray(phi_n, dtype=float)
    n, k = phi_n.shape
    if n >= k:
        return phi_d_normalized(information_matrix(phi_n))
    return phi_d_normalized(phi_n @ phi_n.T / n)


@dataclass(frozen=True, eq=False)
class PivotedQR:
    perm: np.ndarray  # column order, length n
    r: np.ndarray  # (steps, n) upper-trapezoidal rows, columns in pivot order
    rank: int

    @property
    def diag(self) -> np.ndarray:
        return np.abs(np.diag(self.r[:, : self.r.shape[0]]))


def pivoted_qr(a: np.ndarray, n_steps: int | None = None, exclude=None,
               zero_tol: float | None = None) -> PivotedQR:
    """Householder QR with Businger-Golub column pivoting.

    Each step takes the remaining column with the largest residual norm;
    ties (within ``TIE_RTOL``) go to the lowest original column index.
    Residual norms are downdated and recomputed from scratch once they have
    lost more than a factor of 100. Factorization stops after ``n_steps``
    or when the residual is numerically zero; columns never pivoted keep
    ascending index order at the tail of ``perm``.

    ``exclude`` lists columns that must not be chosen as pivots; they are
    placed at the tail. ``zero_tol`` is the absolute column norm treated as
    zero; by default it is relative to the largest column of ``a``.
    """
    a = np.array(a, dtype=float, copy=True)
    m, n = a.shape
    steps = min(m, n) if n_steps is None else min(m, n, int(n_steps))
    perm = np.arange(n)
    norms = np.linalg.norm(a, axis=0)
    ref = norms.copy()
    if zero_tol is None:
        zero_tol = max(m, n) * np.finfo(float).eps * (norms.max() if n else 0.0)
    eligible = np.ones(n, dtype=bool)
    if exclude is not None:
        eligible[np.asarray(list(exclude), dtype=int)] = False
    steps = min(steps, int(eligible.sum()))

    rank = 0
    for k in range(steps):
        cand = np.where(eligible[k:], norms[k:], -1.0)
        best = cand.max()
        if best <= zero_tol:
            break
        ties = np.flatnonzero(cand >= best * (1.0 - TIE_RTOL))
        j = k + ties[np.argmin(perm[k + ties])]
        if j != k:
            a[:, [k, j]] = a[:, [j, k]]
            perm[[k, j]] = perm[[j, k]]
            norms[[k, j]] = norms[[j, k]]
            ref[[k, j]] = ref[[j, k]]
            eligible[[k, j]] = eligible[[j, k]]

        x = a[k:, k]
        alpha = -math.copysign(np.linalg.norm(x), x[0] if x[0] != 0 else 1.0)
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm > 0:
            v /= vnorm
            a[k:, k:] -= 2.0 * np.outer(v, v @ a[k:, k:])
        a[k + 1:, k] = 0.0
        rank += 1

        if k + 1 < n:
            rest = slice(k + 1, None)
            norms[rest] = np.sqrt(np.maximum(norms[rest] ** 2 - a[k, rest] ** 2, 0.0))
            stale = np.flatnonzero(norms[rest] < 0.01 * ref[rest]) + k + 1
            if stale.size:
                norms[stale] = np.linalg.norm(a[k + 1:, stale], axis=0)
                ref[stale] = norms[stale]

    # tail: eligible columns ascending, then excluded ones ascending
    tail = np.arange(rank, n)
    ok, ex = tail[eligible[rank:]], tail[~eligible[rank:]]
    order = np.concatenate([np.arange(rank), ok[np.argsort(perm[ok])], ex[np.argsort(perm[ex])]]).astype(int)
    return PivotedQR(perm=perm[order], r=np.triu(a[:rank])[:, order], rank=rank)


def _leverage_extend(candidate: np.ndarray, chosen: list[int], n_add: int) -> list[int]:
    """Append ``n_add`` rows greedily maximizing ``det(Phi^T Phi)``.

    Requires the chosen rows to span the column space. Adding row ``x``
    multiplies the determinant by ``1 + x^T G^{-1} x`` with ``G`` the
    current Gram matrix, so each step takes the unused row of largest
    leverage and applies a rank-one update.
    """
    chosen = list(chosen)
    g = candidate[chosen].T @ candidate[chosen]
    g_inv = np.linalg.pinv(g, hermitian=True)
    used = np.zeros(candidate.shape[0], dtype=bool)
    used[chosen] = True
    for _ in range(n_add):
        z = candidate @ g_inv
        lev = np.einsum("ij,ij->i", z, candidate)
        lev[used] = -np.inf
        best = lev.max()
        ties = np.flatnonzero(lev >= best - TIE_RTOL * max(abs(best), 1.0))
        i = int(ties[0])
        chosen.append(i)
        used[i] = True
        zi = z[i]
        g_inv -= np.outer(zi, zi) / (1.0 + lev[i])
    return chosen


def _numerical_rank(a: np.ndarray) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > max(a.shape) * np.finfo(float).eps * s[0]))


def _select(candidate: np.ndarray, pivot_matrix: np.ndarray, N: int) -> Design:
    M = candidate.shape[0]
    if int(N) != N or N < 1:
        raise ValueError(f"design size must be a positive integer, got {N!r}")
    if N > M:
        raise ValueError(f"cannot select N={N} rows from a pool of M={M}")
    qr = pivoted_qr(pivot_matrix, n_steps=N)
    chosen = [int(i) for i in qr.perm[: min(N, qr.rank)]]
    if len(chosen) < N:
        # the pivots already span the candidate rows; grow by determinant ratio
        chosen = _leverage_extend(candidate, chosen, N - len(chosen))
    return Design(tuple(chosen))


def rrqr_select(candidate: np.ndarray, N: int) -> Design:
    """``N``-point D-optimal design: the first ``N`` pivots of a pivoted QR of ``Phi_c^T``.

    Pivoted QR orders at most ``rank(Phi_c)`` columns meaningfully; when
    ``N`` exceeds the rank the remaining rows are added greedily by the
    determinant-ratio (leverage) rule.
    """
    candidate = np.asarray(candidate, dtype=float)
    return _select(candidate, candidate.T, N)


def subset_select(candidate: np.ndarray, N: int) -> Design:
    """Subset selection: pivoted QR on the leading right-singular vectors of ``Phi_c^T``."""
    candidate = np.asarray(candidate, dtype=float)
    if N > candidate.shape[0]:
        raise ValueError(f"cannot select N={N} rows from a pool of M={candidate.shape[0]}")
    if candidate.shape[0] == 0:
        raise ValueError("empty candidate matrix")
    # Phi_c^T = U S V^T  <=>  Phi_c = V S U^T, so V is the left factor of Phi_c
    v, s, _ = np.linalg.svd(candidate, full_matrices=False)
    r = int(np.sum(s > max(candidate.shape) * np.finfo(float).eps * s[0])) if s.size and s[0] > 0 else 0
    return _select(candidate, v[:, : max(r, 1)].T, N)


def augment(design: Design, candidate: np.ndarray, support, n_add: int = 1) -> Design:
    """Append ``n_add`` D-optimally chosen rows for the columns in ``support``.

    The support-restricted candidate columns are projected against the
    row space of the current design, ``R = Phi_c~^T - Phi_N~^T Pi`` with
    ``Pi = (Phi_N~^T)^+ Phi_c~^T``, and the pivot order of a pivoted QR of
    ``R`` ranks the candidates. When the design already has full rank on
    the support this residual vanishes identically; the rows are then
    chosen by the rank-one determinant update (largest leverage).
    Existing entries are never removed or reordered.
    """
    candidate = np.asarray(candidate, dtype=float)
    support = np.asarray(sorted(int(s) for s in support), dtype=int)
    if support.size == 0:
        raise ValueError("support must be non-empty")
    if len(design) == 0:
        raise ValueError("design must be non-empty")
    n_add = int(n_add)
    if n_add < 0:
        raise ValueError("n_add must be non-negative")
    M = candidate.shape[0]
    unused = M - len(design)
    if n_add > unused:
        raise ValueError(f"only {unused} unused candidates, cannot add {n_add}")
    if n_add == 0:
        return design

    idx = list(design.pi)
    phi_c = candidate[:, support]
    phi_n = phi_c[idx]
    K = support.size
    rank = _numerical_rank(phi_n)
    if rank >= K:
        new = _leverage_extend(phi_c, idx, n_add)[len(idx):]
        return Design(design.pi + tuple(new), design.pool_ref)

    log.info("support-restricted design has rank %d < K=%d; using residual pivoting", rank, K)
    pi_mat, *_ = np.linalg.lstsq(phi_n.T, phi_c.T, rcond=None)
    resid = phi_c.T - phi_n.T @ pi_mat
    # residual pivoting ranks at most K - rank new directions; top up by leverage
    # the residual is compared with the scale of the data, not its own maximum
    tol = max(phi_c.shape) * np.finfo(float).eps * float(np.linalg.norm(phi_c, axis=1).max())
    qr = pivoted_qr(resid, n_steps=n_add, exclude=idx, zero_tol=tol)
    new = [int(i) for i in qr.perm[: min(n_add, qr.rank)]]
    chosen = idx + new
    if len(new) < n_add:
        if _numerical_rank(phi_c[chosen]) >= K:
            chosen = _leverage_extend(phi_c, chosen, n_add - len(new))
        else:
            taken = set(chosen)
            fill = [i for i in range(M) if i not in taken][: n_add - len(new)]
            chosen = chosen + fill
    return Design(tuple(chosen), design.pool_ref)


def det_ratio_check(A: np.ndarray, B: np.ndarray, C: np.ndarray, i: int, j: int) -> float:
    """Determinant ratio after exchanging column ``i`` of ``A`` with column ``j`` of ``[B; C]``.

    For the partition ``R = [[A, B], [0, C]]`` of a triangular factor this
    returns ``sqrt((A^-1 B)_ij^2 + (||C[:, j]|| * ||A^-1[i, :]||)^2)``,
    which equals ``det(A_bar) / det(A)`` after the exchange and
    re-triangularization. Indices are 0-based.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if np.any(np.tril(A, -1) != 0):
        raise ValueError("A must be upper triangular")
    diag = np.diag(A)
    if np.any(diag <= 0):
        raise np.linalg.LinAlgError("A must have a positive diagonal")
    a_inv = np.linalg.inv(A)
    aib = a_inv @ B
    c_col = np.linalg.norm(C[:, j]) if C.size else 0.0
    return float(math.hypot(aib[i, j], c_col * np.linalg.norm(a_inv[i, :])))
