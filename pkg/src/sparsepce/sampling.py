"""Candidate pools: standard Monte Carlo and coherence-optimal MCMC sampling."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .basis import BasisSpec, Family, assemble_matrix, b_values, build_basis

__all__ = [
    "Strategy",
    "RngStream",
    "MCMCParams",
    "SamplePool",
    "as_generator",
    "sample_standard",
    "sample_coherence_optimal",
    "sample_pool",
    "coherence",
    "write_pool_csv",
    "read_pool_csv",
]


class Strategy(str, enum.Enum):
    STANDARD = "standard"
    COHERENCE = "coherence"

    @classmethod
    def parse(cls, value: "Strategy | str") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        aliases = {"mc": "standard", "standard-mc": "standard", "coh-opt": "coherence",
                   "coherence-optimal": "coherence"}
        key = str(value).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown sampling strategy {value!r}") from None


@dataclass(frozen=True)
class RngStream:
    """Seed record for a reproducible random stream.

    ``stream_id`` may be an int or a tuple of ints; equal ``(seed,
    stream_id)`` pairs give bitwise-equal draws.
    """

    seed: int
    stream_id: int | tuple[int, ...] = 0

    def generator(self) -> np.random.Generator:
        key = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "RngStream":
        key = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        return RngStream(self.seed, tuple(key) + tuple(int(k) for k in keys))


def as_generator(rng: RngStream | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class MCMCParams:
    """Independence-sampler settings. ``thin=None`` means ``max(1, ceil(d*p/10))``."""

    burn_in: int = 1000
    thin: int | None = None

    def thinning(self, spec: BasisSpec) -> int:
        if self.thin is not None:
            return max(1, int(self.thin))
        return max(1, math.ceil(spec.d * spec.p / 10))


@dataclass(frozen=True, eq=False)
class SamplePool:
    points: np.ndarray
    weights: np.ndarray
    strategy: Strategy
    spec: BasisSpec
    seed: RngStream | None = None
    acceptance_rate: float = field(default=float("nan"), compare=False)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @cached_property
    def matrix(self) -> np.ndarray:
        """Weighted candidate matrix ``Phi_c`` of shape ``(M, P)``."""
        return assemble_matrix(self.spec, self.points, self.weights)

    def subset(self, indices) -> "SamplePool":
        indices = np.asarray(indices, dtype=int)
        pool = SamplePool(self.points[indices], self.weights[indices], self.strategy,
                          self.spec, self.seed, self.acceptance_rate)
        if "matrix" in self.__dict__:
            object.__setattr__(pool, "matrix", self.matrix[indices])
        return pool


def _draw_from_f(spec: BasisSpec, n: int, gen: np.random.Generator) -> np.ndarray:
    if spec.family is Family.LEGENDRE:
        return gen.uniform(-1.0, 1.0, size=(n, spec.d))
    return gen.standard_normal(size=(n, spec.d))


def _log_f(spec: BasisSpec, x: np.ndarray) -> np.ndarray:
    if spec.family is Family.LEGENDRE:
        return np.full(x.shape[0], -spec.d * math.log(2.0))
    return -0.5 * np.sum(x * x, axis=1) - 0.5 * spec.d * math.log(2.0 * math.pi)


def hermite_ball_radius(p: int) -> float:
    return math.sqrt(2.0) * math.sqrt(2.0 * p + 1.0)


def sample_standard(spec: BasisSpec, M: int, rng: RngStream | np.random.Generator | int | None) -> SamplePool:
    """Draw ``M`` points from the orthogonality measure, all weights equal to one."""
    if int(M) != M or M < 1:
        raise ValueError(f"pool size M must be >= 1, got {M!r}")
    gen = as_generator(rng)
    points = _draw_from_f(spec, int(M), gen)
    return SamplePool(points, np.ones(int(M)), Strategy.STANDARD, spec,
                      rng if isinstance(rng, RngStream) else None)


def _proposal(spec: BasisSpec, n: int, gen: np.random.Generator):
    """Draw ``n`` independence proposals; return ``(points, log proposal density)``.

    Additive constants of the log density are dropped; only differences matter.
    """
    d = spec.d
    if spec.p <= d:
        x = _draw_from_f(spec, n, gen)
        return x, _log_f(spec, x)
    if spec.family is Family.LEGENDRE:
        # arcsine law on [-1, 1] per coordinate
        x = np.sin(0.5 * math.pi * gen.uniform(-1.0, 1.0, size=(n, d)))
        log_g = -0.5 * np.sum(np.log1p(-x * x), axis=1)
        return x, log_g
    direction = gen.standard_normal(size=(n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = hermite_ball_radius(spec.p) * gen.uniform(size=n) ** (1.0 / d)
    return direction * radius[:, None], np.zeros(n)


def sample_coherence_optimal(
    spec: BasisSpec,
    M: int,
    rng: RngStream | np.random.Generator | int | None,
    mcmc_params: MCMCParams | None = None,
) -> SamplePool:
    """Draw ``M`` points from ``f_Y ∝ f B^2`` by independence Metropolis-Hastings.

    Weights are ``sqrt(P) / B(xi)``, the normalization under which the
    weighted basis is orthonormal under ``f_Y`` and every weighted row has
    squared norm exactly ``P``.
    """
    if int(M) != M or M < 1:
        raise ValueError(f"pool size M must be >= 1, got {M!r}")
    M = int(M)
    params = mcmc_params or MCMCParams()
    gen = as_generator(rng)
    thin = params.thinning(spec)
    n_steps = params.burn_in + M * thin

    # proposals do not depend on the chain state, so draw and score them up front
    props, log_g = _proposal(spec, n_steps + 1, gen)
    b2 = b_values(spec, props) ** 2
    log_imp = _log_f(spec, props) + np.log(b2) - log_g
    log_u = np.log(gen.uniform(size=n_steps))

    if not np.isfinite(log_imp[0]):
        raise RuntimeError("initial MCMC state has zero proposal or target density")
    current = 0
    accepted = 0
    chosen = np.empty(M, dtype=np.int64)
    k = 0
    for step in range(n_steps):
        cand = step + 1
        if log_u[step] < log_imp[cand] - log_imp[current]:
            current = cand
            accepted += 1
        if step >= params.burn_in and (step - params.burn_in) % thin == thin - 1:
            chosen[k] = current
            k += 1
    assert k == M

    points = props[chosen]
    weights = math.sqrt(spec.P) / np.sqrt(b2[chosen])
    return SamplePool(points, weights, Strategy.COHERENCE, spec,
                      rng if isinstance(rng, RngStream) else None,
                      acceptance_rate=accepted / n_steps)


def sample_pool(spec: BasisSpec, M: int, strategy: Strategy | str, rng, mcmc_params: MCMCParams | None = None) -> SamplePool:
    if Strategy.parse(strategy) is Strategy.STANDARD:
        return sample_standard(spec, M, rng)
    return sample_coherence_optimal(spec, M, rng, mcmc_params)


def coherence(spec: BasisSpec, pool: SamplePool) -> float:
    """Empirical coherence: max over the pool of ``sum_k |w psi_k|^2``."""
    if pool.M == 0:
        raise ValueError("empty pool")
    phi = assemble_matrix(spec, pool.points, pool.weights)
    return float(np.max(np.sum(phi * phi, axis=1)))


def write_pool_csv(pool: SamplePool, path: str | Path) -> None:
    """One row per point: ``d`` coordinates then the weight, 17 significant digits.

    A leading ``#`` comment line records the basis so the pool can be
    reloaded on its own.
    """
    spec = pool.spec
    seed = ""
    if pool.seed is not None:
        sid = pool.seed.stream_id
        sid = ":".join(str(k) for k in sid) if isinstance(sid, tuple) else str(sid)
        seed = f" seed={pool.seed.seed} stream={sid}"
    lines = [f"# family={spec.family.value} d={spec.d} p={spec.p} strategy={pool.strategy.value}{seed}"]
    for x, w in zip(pool.points, pool.weights):
        lines.append(",".join(f"{v:.17g}" for v in (*x, w)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pool_csv(path: str | Path, spec: BasisSpec | None = None) -> SamplePool:
    text = Path(path).read_text().splitlines()
    header = {}
    if text and text[0].startswith("#"):
        for token in text[0][1:].split():
            key, _, value = token.partition("=")
            header[key] = value
    if spec is None:
        try:
            spec = build_basis(header["family"], int(header["d"]), int(header["p"]))
        except KeyError as exc:
            raise ValueError(f"{path}: missing basis header field {exc}") from None
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] != spec.d + 1:
        raise ValueError(f"{path}: expected {spec.d + 1} columns, found {data.shape[1]}")
    strategy = Strategy.parse(header.get("strategy", "standard"))
    return SamplePool(data[:, : spec.d], data[:, spec.d], strategy, spec)
