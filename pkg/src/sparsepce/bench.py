"""Experiment harness: sampling-strategy comparisons and design-quality CDFs.

A run builds one reconstruction pool of ``2M`` points per sampling
strategy, then for every repetition draws ``M`` candidate rows from it
without replacement and solves with each requested strategy at each
budget ``N``. Every repetition owns its random streams, so results do not
depend on execution order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .basis import BasisSpec, Family, build_basis, evaluate
from .design import design_quality, rrqr_select, subset_select
from .models import get_model, manufacture, noisy_values
from .sampling import MCMCParams, RngStream, SamplePool, Strategy, sample_pool, sample_standard
from .solvers import CandidateOracle, cross_validate_k, dsp_cv, lsa, subspace_pursuit

__all__ = [
    "STRATEGIES",
    "ExperimentConfig",
    "Experiment",
    "relative_validation_error",
    "run_strategy",
    "oracle_solution",
    "run_experiment",
    "aggregate",
    "report_csv",
    "write_outputs",
    "load_config",
    "CdfStudy",
    "cdf_study",
]

log = logging.getLogger(__name__)

# name -> (candidate sampling, design method)
STRATEGIES = {
    "coh-opt": (Strategy.COHERENCE, "random"),
    "d-coh-opt": (Strategy.COHERENCE, "dopt"),
    "seq-d-coh-opt": (Strategy.COHERENCE, "seq"),
    "mc": (Strategy.STANDARD, "random"),
    "d-mc": (Strategy.STANDARD, "dopt"),
    "seq-d-mc": (Strategy.STANDARD, "seq"),
}
_SAMPLING_ID = {Strategy.COHERENCE: 0, Strategy.STANDARD: 1}


def _fmt(x) -> str:
    if x is None:
        return "n/a"
    x = float(x)
    if math.isnan(x):
        return "n/a"
    return f"{x:.17g}"


@dataclass
class ExperimentConfig:
    model: str = "manufactured"
    family: str = "hermite"
    d: int = 2
    p: int = 10
    s: int = 12
    alpha: float = 0.03
    strategies: list[str] = field(default_factory=lambda: ["coh-opt", "d-coh-opt", "seq-d-coh-opt"])
    n_grid: list[int] = field(default_factory=lambda: [40, 60, 80])
    M: int | None = None
    R: int = 50
    n_val: int = 20000
    seed: int = 0
    share_pool: bool = True
    n_r: int = 4
    n_k: int = 10
    burn_in: int = 1000
    thin: int | None = None
    n_jobs: int = 1
    output_dir: str = "."

    def __post_init__(self):
        self.strategies = [s.lower() for s in self.strategies]
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}; choose from {sorted(STRATEGIES)}")
        self.n_grid = [int(n) for n in self.n_grid]
        if self.model != "manufactured":
            get_model(self.model)
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.M is not None and self.M < max(self.n_grid):
            raise ValueError(f"M={self.M} is smaller than the largest budget {max(self.n_grid)}")

    @property
    def manufactured(self) -> bool:
        return self.model == "manufactured"

    def basis(self) -> BasisSpec:
        return build_basis(self.family, self.d, self.p)

    def pool_size(self) -> int:
        M = self.M if self.M is not None else 10 * self.basis().P
        if M < max(self.n_grid):
            raise ValueError(f"M={M} is smaller than the largest budget {max(self.n_grid)}")
        return M


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML or JSON config whose keys are ExperimentConfig field names."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    known = {f.name for f in fields(ExperimentConfig)}
    extra = sorted(set(data) - known)
    if extra:
        raise ValueError(f"unknown config keys: {extra}")
    return ExperimentConfig(**data)


def relative_validation_error(coeffs, spec: BasisSpec | None, points, values, psi_val=None) -> float:
    """``||Psi_val c - u_val|| / ||u_val||`` on unweighted validation data."""
    values = np.asarray(values, dtype=float)
    denom = np.linalg.norm(values)
    if denom == 0.0:
        raise ValueError("validation data have zero norm")
    if psi_val is None:
        psi_val = evaluate(spec, points)
    return float(np.linalg.norm(psi_val @ np.asarray(coeffs, dtype=float) - values) / denom)


def oracle_solution(problem, candidate: np.ndarray, N: int, rhs: np.ndarray) -> np.ndarray:
    """Least squares on the exact support with an ``N``-point D-optimal design.

    ``candidate`` is the weighted candidate matrix and ``rhs`` its weighted
    QoI vector; the design is chosen on the support columns only.
    """
    support = problem.support
    if N < support.size:
        raise ValueError(f"N={N} is below the sparsity s={support.size}")
    sub = np.asarray(candidate)[:, support]
    design = rrqr_select(sub, N)
    coeffs = np.zeros(problem.truth.shape[0])
    coeffs[support] = lsa(sub[design.indices], np.asarray(rhs)[design.indices])
    return coeffs


class Experiment:
    """Shared state of one configured experiment (pools, validation data)."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.spec = config.basis()
        self.M = config.pool_size()
        self.model = None if config.manufactured else get_model(config.model)
        if self.model is not None and self.model.d != config.d:
            raise ValueError(f"model {config.model} has dimension {self.model.d}, config d={config.d}")
        mcmc = MCMCParams(burn_in=config.burn_in, thin=config.thin)
        kinds = sorted({STRATEGIES[s][0] for s in config.strategies}, key=_SAMPLING_ID.get)
        self.recon: dict[Strategy, SamplePool] = {}
        self.recon_u: dict[Strategy, np.ndarray] = {}
        for kind in kinds:
            stream = RngStream(config.seed, (0, _SAMPLING_ID[kind]))
            pool = sample_pool(self.spec, 2 * self.M, kind, stream, mcmc)
            self.recon[kind] = pool
            if self.model is not None:
                self.recon_u[kind] = np.asarray(self.model.batch(pool.points), dtype=float)
        self.psi_val = self.u_val = None
        if self.model is not None:
            val = sample_standard(self.spec, config.n_val, RngStream(config.seed, (1,)))
            self.psi_val = evaluate(self.spec, val.points)
            self.u_val = np.asarray(self.model.batch(val.points), dtype=float)

    def _rep_stream(self, rep: int) -> RngStream:
        return RngStream(self.config.seed, (2, int(rep)))

    def _candidates(self, rep: int, kind: Strategy, strategy: str):
        stream = self._rep_stream(rep)
        key = (1, _SAMPLING_ID[kind])
        if not self.config.share_pool:
            key += (list(STRATEGIES).index(strategy) + 1,)
        rows = np.sort(stream.child(*key).generator().choice(2 * self.M, size=self.M, replace=False))
        pool = self.recon[kind].subset(rows)
        return rows, pool

    def problem(self, rep: int):
        if not self.config.manufactured:
            return None
        c = self.config
        return manufacture(self.spec, c.s, c.alpha, self._rep_stream(rep).child(0))

    def _candidate_values(self, rep, kind, strategy, rows, pool, problem):
        if problem is None:
            return self.recon_u[kind][rows]
        key = (2, _SAMPLING_ID[kind])
        if not self.config.share_pool:
            key += (list(STRATEGIES).index(strategy) + 1,)
        psi = pool.matrix / pool.weights[:, None]
        return noisy_values(problem, psi, self._rep_stream(rep).child(*key))

    def run_strategy(self, strategy: str, N: int, rep: int, problem=None) -> dict:
        """Solve one (strategy, budget, repetition) cell and return its record."""
        strategy = strategy.lower()
        kind, method = STRATEGIES[strategy]
        if problem is None and self.config.manufactured:
            problem = self.problem(rep)
        rows, pool = self._candidates(rep, kind, strategy)
        u = self._candidate_values(rep, kind, strategy, rows, pool, problem)
        phi_c = pool.matrix
        oracle = CandidateOracle(pool.points, pool.weights, values=u)
        stream = self._rep_stream(rep).child(3, int(N), list(STRATEGIES).index(strategy))
        gen = stream.generator()
        c = self.config
        try:
            if method == "seq":
                sol = dsp_cv(phi_c, N, oracle, rng=gen, n_r=c.n_r, n_k=c.n_k)
                coeffs, k_used = sol.coeffs, sol.k_used
            else:
                if method == "random":
                    idx = np.sort(gen.choice(self.M, size=N, replace=False))
                else:
                    idx = rrqr_select(phi_c, N).indices
                v = oracle.evaluate(idx)
                k_used = cross_validate_k(phi_c[idx], v, n_r=c.n_r, n_k=c.n_k, rng=gen)
                coeffs = subspace_pursuit(k_used, phi_c[idx], v).coeffs
        except Exception as exc:
            raise RuntimeError(f"strategy {strategy}, N={N}, repetition {rep}: {exc}") from exc

        record = {"strategy": strategy, "N": int(N), "rep": int(rep), "k_used": int(k_used),
                  "n_model_evals": int(oracle.n_evals)}
        if problem is not None:
            truth = problem.truth
            record["rel_err"] = float(np.linalg.norm(coeffs - truth) / np.linalg.norm(truth))
            found = np.intersect1d(np.flatnonzero(coeffs), problem.support).size
            record["support_pct"] = 100.0 * found / max(problem.s, 1)
            orc = oracle_solution(problem, phi_c, N, pool.weights * u)
            record["oracle_err"] = float(np.linalg.norm(orc - truth) / np.linalg.norm(truth))
        else:
            record["rel_err"] = relative_validation_error(coeffs, None, None, self.u_val, psi_val=self.psi_val)
        return record

    def run_repetition(self, rep: int) -> list[dict]:
        problem = self.problem(rep)
        out = []
        for N in self.config.n_grid:
            for strategy in self.config.strategies:
                out.append(self.run_strategy(strategy, N, rep, problem))
        return out


def run_strategy(config: ExperimentConfig, strategy: str, N: int, rep_seed: int) -> dict:
    return Experiment(config).run_strategy(strategy, N, rep_seed)


_WORKER_EXPERIMENT: Experiment | None = None


def _worker_init(config_dict):
    global _WORKER_EXPERIMENT
    _WORKER_EXPERIMENT = Experiment(ExperimentConfig(**config_dict))


def _worker_rep(rep):
    return _WORKER_EXPERIMENT.run_repetition(rep)


def run_experiment(config: ExperimentConfig) -> list[dict]:
    """All records of an experiment, sorted by (rep, N, strategy order)."""
    if config.n_jobs > 1:
        with ProcessPoolExecutor(config.n_jobs, initializer=_worker_init,
                                 initargs=(asdict(config),)) as ex:
            chunks = list(ex.map(_worker_rep, range(config.R)))
    else:
        exp = Experiment(config)
        chunks = [exp.run_repetition(r) for r in range(config.R)]
    return [rec for chunk in chunks for rec in chunk]


def aggregate(records: list[dict], strategies=None, n_grid=None, R: int | None = None) -> list[dict]:
    """Per-(strategy, N) mean and sample standard deviation of the errors.

    With ``strategies``/``n_grid``/``R`` given, every expected cell must be
    present with exactly ``R`` records.
    """
    cells: dict[tuple[str, int], list[dict]] = {}
    for rec in records:
        cells.setdefault((rec["strategy"], int(rec["N"])), []).append(rec)
    if strategies is not None and n_grid is not None:
        keys = [(s, int(n)) for s in strategies for n in n_grid]
        missing = [k for k in keys if k not in cells]
        if missing:
            raise ValueError(f"missing cells: {missing}")
        if R is not None:
            short = [(k, len(cells[k])) for k in keys if len(cells[k]) != R]
            if short:
                raise ValueError(f"cells without exactly R={R} records: {short}")
    else:
        keys = sorted(cells, key=lambda k: (k[0], k[1]))

    rows = []
    for key in keys:
        recs = cells[key]
        err = np.array([r["rel_err"] for r in recs], dtype=float)
        row = {
            "strategy": key[0],
            "N": key[1],
            "mean_rel_err": float(err.mean()),
            "std_rel_err": float(err.std(ddof=1)) if err.size > 1 else float("nan"),
            "support_pct": float(np.mean([r["support_pct"] for r in recs])) if "support_pct" in recs[0] else float("nan"),
            "oracle_err": float(np.mean([r["oracle_err"] for r in recs])) if "oracle_err" in recs[0] else float("nan"),
        }
        rows.append(row)
    return rows


REPORT_COLUMNS = ["strategy", "N", "mean_rel_err", "std_rel_err", "support_pct", "oracle_err"]


def report_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([row["strategy"], row["N"], *(_fmt(row[c]) for c in REPORT_COLUMNS[2:])])
    return buf.getvalue()


def write_outputs(config: ExperimentConfig, records: list[dict], out_dir: str | Path | None = None) -> list[dict]:
    """Write ``report.csv``, ``records.jsonl`` and ``manifest.json``; return the report rows."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = aggregate(records, config.strategies, config.n_grid, config.R)
    (out / "report.csv").write_text(report_csv(rows))
    with open(out / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps({k: (_fmt(v) if isinstance(v, float) else v) for k, v in rec.items()}) + "\n")
    manifest = {
        "config": asdict(config),
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "P": config.basis().P,
        "M": config.pool_size(),
        "streams": {
            "reconstruction_pool": "(seed, (0, sampling_id))",
            "validation": "(seed, (1,))",
            "repetition": "(seed, (2, rep, ...))",
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return rows


@dataclass
class CdfStudy:
    samples: dict[str, np.ndarray]
    grid: np.ndarray
    cdfs: dict[str, np.ndarray]
    dominance_fraction: float
    dominates: bool


def _ecdf(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return np.searchsorted(np.sort(samples), grid, side="right") / samples.size


def cdf_study(family: Family | str, d: int, p: int, N: int, M: int, n_designs: int,
              seed: int = 0, n_grid: int = 50, mcmc_params: MCMCParams | None = None) -> CdfStudy:
    """Empirical CDFs of the normalized D-criterion of subset-selected designs.

    For each trial and each sampling strategy a fresh pool of ``M`` points
    is drawn, an ``N``-point design is subset-selected and its normalized
    D-criterion recorded. ``dominance_fraction`` is the share of an
    ``n_grid``-point grid where the coherence-optimal CDF is at or below
    the standard one; ``dominates`` is the strict first-order dominance
    verdict (at or below everywhere, strictly below somewhere).
    """
    if N > M:
        raise ValueError(f"N={N} exceeds M={M}")
    spec = build_basis(family, d, p)
    samples = {}
    for kind in (Strategy.COHERENCE, Strategy.STANDARD):
        vals = np.empty(n_designs)
        for t in range(n_designs):
            pool = sample_pool(spec, M, kind, RngStream(seed, (5, t, _SAMPLING_ID[kind])), mcmc_params)
            design = subset_select(pool.matrix, N)
            vals[t] = design_quality(pool.matrix[design.indices])
        samples[kind.value] = np.sort(vals)
    pooled = np.concatenate(list(samples.values()))
    grid = np.linspace(pooled.min(), pooled.max(), n_grid)
    cdfs = {k: _ecdf(v, grid) for k, v in samples.items()}
    below = cdfs["coherence"] <= cdfs["standard"]
    strict = np.any(cdfs["coherence"] < cdfs["standard"])
    return CdfStudy(samples, grid, cdfs, float(below.mean()), bool(below.all() and strict))


def write_cdf_outputs(study: CdfStudy, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, vals in study.samples.items():
        (out / f"cdf_{name}.csv").write_text(
            "phi_d_normalized,cdf\n"
            + "".join(f"{_fmt(v)},{_fmt((i + 1) / vals.size)}\n" for i, v in enumerate(vals)))
