"""Benchmark quantities of interest.

Physical models take inputs on ``[-1, 1]^d`` (i.i.d. uniform) and map
them to their parameter ranges internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .basis import BasisSpec, DomainError
from .sampling import RngStream, as_generator

__all__ = [
    "ManufacturedProblem",
    "PhysicalModel",
    "MODELS",
    "get_model",
    "manufacture",
    "noisy_values",
    "noisy_rhs",
    "duffing_displacement",
    "duffing_qoi",
    "duffing_qoi_batch",
    "wing_weight",
    "WING_WEIGHT_RANGES",
    "ishigami",
]

DUFFING_T = 4.0
DUFFING_RTOL = 1e-10
DUFFING_ATOL = 1e-10

# (lower, upper) for S_w, W_fw, A, Lambda [deg], q, lambda, t_c, N_z, W_dg, W_p
WING_WEIGHT_RANGES = np.array([
    [150.0, 200.0],
    [220.0, 300.0],
    [6.0, 10.0],
    [-10.0, 10.0],
    [16.0, 45.0],
    [0.5, 1.0],
    [0.08, 0.18],
    [2.5, 6.0],
    [1700.0, 2500.0],
    [0.025, 0.08],
])

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.1


@dataclass(frozen=True, eq=False)
class ManufacturedProblem:
    truth: np.ndarray
    s: int
    alpha: float
    spec: BasisSpec
    seed: RngStream | None = None

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.truth)


def manufacture(spec: BasisSpec, s: int, alpha: float, rng) -> ManufacturedProblem:
    """Random ``s``-sparse coefficients: positions uniform without replacement, values N(0, 1)."""
    if int(s) != s or s < 0:
        raise ValueError(f"sparsity must be a non-negative integer, got {s!r}")
    if s > spec.P:
        raise ValueError(f"sparsity s={s} exceeds the basis size P={spec.P}")
    gen = as_generator(rng)
    truth = np.zeros(spec.P)
    where = gen.choice(spec.P, size=int(s), replace=False)
    truth[where] = gen.standard_normal(int(s))
    # a standard-normal draw of exactly zero would break the sparsity count
    truth[where] = np.where(truth[where] == 0.0, np.finfo(float).tiny, truth[where])
    return ManufacturedProblem(truth, int(s), float(alpha), spec,
                               rng if isinstance(rng, RngStream) else None)


def noisy_values(problem: ManufacturedProblem, psi_rows: np.ndarray, rng) -> np.ndarray:
    """Unweighted QoIs ``Psi c + alpha |Psi c| x`` with ``x ~ N(0, 1)`` per row."""
    gen = as_generator(rng)
    clean = np.asarray(psi_rows, dtype=float) @ problem.truth
    x = gen.standard_normal(clean.shape[0])
    return clean + problem.alpha * np.abs(clean) * x


def noisy_rhs(problem: ManufacturedProblem, psi_rows: np.ndarray, rng, weights=None) -> np.ndarray:
    """Weighted right-hand side ``W (Psi c + eps)``."""
    u = noisy_values(problem, psi_rows, rng)
    if weights is None:
        return u
    return np.asarray(weights, dtype=float) * u


def _check_cube(xi, d: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != d:
        raise ValueError(f"expected {d} inputs, got shape {xi.shape}")
    if not np.all(np.isfinite(xi)) or np.any(np.abs(xi) > 1.0):
        raise DomainError(f"inputs must lie in [-1, 1]^{d}")
    return xi


def _duffing_rhs(omega1, omega2, omega3):
    def rhs(t, y):
        u, du = y[0], y[1]
        return np.array([du, -2.0 * omega1 * omega2 * du - omega1**2 * (u + omega3 * u**3)])
    return rhs


def duffing_displacement(omega1: float, omega2: float, omega3: float, t: float = DUFFING_T) -> float:
    """``u(t)`` for ``u'' + 2 w1 w2 u' + w1^2 (u + w3 u^3) = 0``, ``u(0)=1``, ``u'(0)=0``."""
    if t == 0:
        return 1.0
    sol = solve_ivp(_duffing_rhs(omega1, omega2, omega3), (0.0, t), [1.0, 0.0],
                    method="DOP853", rtol=DUFFING_RTOL, atol=DUFFING_ATOL)
    if not sol.success:
        raise RuntimeError(f"Duffing integration failed: {sol.message}")
    return float(sol.y[0, -1])


def duffing_omegas(xi) -> tuple[float, float, float]:
    xi = _check_cube(xi, 3)
    return (2.0 * math.pi * (1.0 + 0.2 * xi[0]),
            0.05 * (1.0 + 0.05 * xi[1]),
            -0.5 * (1.0 + 0.5 * xi[2]))


def duffing_qoi(xi, t: float = DUFFING_T) -> float:
    return duffing_displacement(*duffing_omegas(xi), t=t)


def duffing_qoi_batch(xi: np.ndarray, t: float = DUFFING_T) -> np.ndarray:
    """Duffing QoI for many points, integrated as one stacked system.

    Step sizes are shared across the batch, so values agree with
    :func:`duffing_qoi` to integration tolerance rather than bitwise.
    """
    xi = _check_cube(np.atleast_2d(xi), 3)
    w1 = 2.0 * np.pi * (1.0 + 0.2 * xi[:, 0])
    w2 = 0.05 * (1.0 + 0.05 * xi[:, 1])
    w3 = -0.5 * (1.0 + 0.5 * xi[:, 2])
    n = xi.shape[0]

    def rhs(_, y):
        u, du = y[:n], y[n:]
        return np.concatenate([du, -2.0 * w1 * w2 * du - w1**2 * (u + w3 * u**3)])

    y0 = np.concatenate([np.ones(n), np.zeros(n)])
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=DUFFING_RTOL, atol=DUFFING_ATOL)
    if not sol.success:
        raise RuntimeError(f"Duffing integration failed: {sol.message}")
    return sol.y[:n, -1]


def wing_weight(xi) -> float | np.ndarray:
    """Light-aircraft wing weight; the sweep angle is given in degrees."""
    xi = _check_cube(xi, 10)
    lo, hi = WING_WEIGHT_RANGES[:, 0], WING_WEIGHT_RANGES[:, 1]
    x = lo + (xi + 1.0) * (hi - lo) / 2.0
    sw, wfw, a, lam_deg, q, taper, tc, nz, wdg, wp = np.moveaxis(x, -1, 0)
    cos_l = np.cos(np.deg2rad(lam_deg))
    out = (0.036 * sw**0.758 * wfw**0.0035 * (a / cos_l**2) ** 0.6 * q**0.006 * taper**0.04
           * (100.0 * tc / cos_l) ** -0.3 * (nz * wdg) ** 0.49 + sw * wp)
    return float(out) if np.ndim(out) == 0 else out


def ishigami(xi) -> float | np.ndarray:
    xi = _check_cube(xi, 3)
    x = np.pi * xi
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    out = np.sin(x1) + ISHIGAMI_A * np.sin(x2) ** 2 + ISHIGAMI_B * x3**4 * np.sin(x1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PhysicalModel:
    kind: str
    d: int
    fn: Callable
    batch: Callable

    def __call__(self, xi):
        return self.fn(xi)


MODELS = {
    "duffing": PhysicalModel("duffing", 3, duffing_qoi, duffing_qoi_batch),
    "wingweight": PhysicalModel("wingweight", 10, wing_weight, wing_weight),
    "ishigami": PhysicalModel("ishigami", 3, ishigami, ishigami),
}


def get_model(name: str) -> PhysicalModel:
    key = name.lower().replace("-", "").replace("_", "")
    try:
        return MODELS[key]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
