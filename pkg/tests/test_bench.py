import json
import math

import numpy as np
import pytest

from sparsepce.basis import build_basis, evaluate
from sparsepce.bench import (
    STRATEGIES,
    Experiment,
    ExperimentConfig,
    aggregate,
    cdf_study,
    load_config,
    oracle_solution,
    relative_validation_error,
    report_csv,
    run_experiment,
    run_strategy,
    write_cdf_outputs,
    write_outputs,
)
from sparsepce.models import manufacture, noisy_values
from sparsepce.sampling import RngStream, sample_pool


def small_config(**kw):
    base = dict(family="hermite", d=2, p=3, s=3, alpha=0.03, n_grid=[10, 14], R=2, M=60, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


class TestRelativeError:
    def setup_method(self):
        self.spec = build_basis("legendre", 2, 3)
        self.pts = np.random.default_rng(0).uniform(-1, 1, (50, 2))
        self.c = np.random.default_rng(1).standard_normal(self.spec.P)
        self.u = evaluate(self.spec, self.pts) @ self.c

    def test_exact(self):
        assert relative_validation_error(self.c, self.spec, self.pts, self.u) < 1e-12

    def test_zero_coefficients(self):
        assert relative_validation_error(np.zeros(self.spec.P), self.spec, self.pts, self.u) == 1.0

    def test_zero_data(self):
        with pytest.raises(ValueError):
            relative_validation_error(self.c, self.spec, self.pts, np.zeros(50))

    def test_non_negative(self):
        assert relative_validation_error(-self.c, self.spec, self.pts, self.u) == pytest.approx(2.0)


class TestAggregate:
    def _recs(self, errs, strategy="coh-opt", N=10):
        return [{"strategy": strategy, "N": N, "rep": i, "rel_err": e} for i, e in enumerate(errs)]

    def test_hand_arithmetic(self):
        row = aggregate(self._recs([1.0, 2.0, 4.0]))[0]
        assert row["mean_rel_err"] == pytest.approx(7 / 3)
        assert row["std_rel_err"] == pytest.approx(math.sqrt(7 / 3))

    def test_constant(self):
        assert aggregate(self._recs([0.5, 0.5, 0.5]))[0]["std_rel_err"] == 0.0

    def test_single_record_std_is_na(self):
        rows = aggregate(self._recs([0.25]), ["coh-opt"], [10], 1)
        line = report_csv(rows).splitlines()[1]
        assert line == "coh-opt,10,0.25,n/a,n/a,n/a"

    def test_missing_cells(self):
        with pytest.raises(ValueError, match="mc"):
            aggregate(self._recs([0.1, 0.2]), ["coh-opt", "mc"], [10], 2)

    def test_wrong_count(self):
        with pytest.raises(ValueError):
            aggregate(self._recs([0.1, 0.2]), ["coh-opt"], [10], 3)

    def test_csv_header(self):
        assert report_csv([]).strip() == "strategy,N,mean_rel_err,std_rel_err,support_pct,oracle_err"


class TestOracleSolution:
    def _problem(self, alpha, seed):
        spec = build_basis("hermite", 2, 5)
        pool = sample_pool(spec, 210, "coherence", RngStream(seed, 0))
        prob = manufacture(spec, 5, alpha, RngStream(seed, 1))
        psi = pool.matrix / pool.weights[:, None]
        rhs = pool.weights * noisy_values(prob, psi, RngStream(seed, 2))
        return prob, pool.matrix, rhs

    def test_noise_free(self):
        prob, cand, rhs = self._problem(0.0, 0)
        c = oracle_solution(prob, cand, 12, rhs)
        assert np.linalg.norm(c - prob.truth) < 1e-10

    def test_too_few_rows(self):
        prob, cand, rhs = self._problem(0.0, 0)
        with pytest.raises(ValueError):
            oracle_solution(prob, cand, 4, rhs)

    def test_error_scales_with_noise(self):
        means = []
        for alpha in (0.003, 0.03, 0.3):
            errs = []
            for seed in range(20):
                prob, cand, rhs = self._problem(alpha, seed)
                c = oracle_solution(prob, cand, 20, rhs)
                errs.append(np.linalg.norm(c - prob.truth) / np.linalg.norm(prob.truth))
            means.append(np.mean(errs))
        ratios = np.array(means[1:]) / np.array(means[:-1])
        assert np.all((ratios > 10 / 3) & (ratios < 30))
        assert means[1] == pytest.approx(0.03, rel=2.0)


class TestExperiment:
    def test_same_seed_same_record(self):
        cfg = small_config()
        a = run_strategy(cfg, "d-coh-opt", 14, 1)
        b = run_strategy(cfg, "d-coh-opt", 14, 1)
        assert a == b

    @pytest.mark.parametrize("strategy", ["seq-d-coh-opt", "seq-d-mc", "coh-opt", "d-mc"])
    def test_budget(self, strategy):
        cfg = small_config(strategies=[strategy])
        exp = Experiment(cfg)
        for N in cfg.n_grid:
            assert exp.run_strategy(strategy, N, 0)["n_model_evals"] == N

    def test_strategies_share_candidates(self):
        exp = Experiment(small_config())
        rows_a, _ = exp._candidates(1, STRATEGIES["coh-opt"][0], "coh-opt")
        rows_b, _ = exp._candidates(1, STRATEGIES["d-coh-opt"][0], "d-coh-opt")
        np.testing.assert_array_equal(rows_a, rows_b)
        assert rows_a.size == 60 and np.unique(rows_a).size == 60

    def test_unshared_pools_differ(self):
        exp = Experiment(small_config(share_pool=False))
        kind = STRATEGIES["coh-opt"][0]
        assert not np.array_equal(exp._candidates(1, kind, "coh-opt")[0],
                                  exp._candidates(1, kind, "d-coh-opt")[0])

    def test_oracle_is_lower_envelope(self):
        cfg = ExperimentConfig(family="hermite", d=2, p=4, s=3, alpha=0.03, n_grid=[20, 30], R=50, seed=0)
        rows = aggregate(run_experiment(cfg), cfg.strategies, cfg.n_grid, cfg.R)
        for row in rows:
            assert row["oracle_err"] <= row["mean_rel_err"]

    def test_mc_unstable_at_high_order(self):
        cfg = ExperimentConfig(family="hermite", d=2, p=20, s=60, strategies=["coh-opt", "mc"],
                               n_grid=[150], R=3, seed=0)
        rows = {r["strategy"]: r for r in aggregate(run_experiment(cfg))}
        assert rows["mc"]["mean_rel_err"] > rows["coh-opt"]["mean_rel_err"]

    def test_physical_model(self):
        cfg = ExperimentConfig(model="ishigami", family="legendre", d=3, p=3, strategies=["coh-opt"],
                               n_grid=[30], R=2, n_val=500, seed=1)
        recs = run_experiment(cfg)
        assert len(recs) == 2
        assert all(0 <= r["rel_err"] < 1.0 for r in recs)
        assert "support_pct" not in recs[0]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            Experiment(ExperimentConfig(model="ishigami", family="legendre", d=2, p=3))

    def test_parallel_matches_serial(self):
        cfg = small_config(R=3)
        serial = run_experiment(cfg)
        cfg.n_jobs = 2
        assert run_experiment(cfg) == serial


class TestOutputs:
    def test_byte_identical_rerun(self, tmp_path):
        cfg = small_config()
        write_outputs(cfg, run_experiment(cfg), tmp_path / "a")
        write_outputs(cfg, run_experiment(cfg), tmp_path / "b")
        for name in ("report.csv", "records.jsonl", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        lines = (tmp_path / "a" / "records.jsonl").read_text().splitlines()
        assert len(lines) == 2 * 2 * 3
        assert json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]["seed"] == 3

    def test_load_config(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("family: legendre\nd: 3\np: 2\nn_grid: [10, 20]\nR: 4\n")
        cfg = load_config(path)
        assert (cfg.family, cfg.d, cfg.p, cfg.n_grid, cfg.R) == ("legendre", 3, 2, [10, 20], 4)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("famly: legendre\n")
        with pytest.raises(ValueError, match="famly"):
            load_config(path)

    def test_bad_strategy(self):
        with pytest.raises(ValueError):
            ExperimentConfig(strategies=["random"])

    def test_pool_too_small(self):
        with pytest.raises(ValueError):
            ExperimentConfig(M=30, n_grid=[40])


class TestCdfStudy:
    def test_degenerate_order_zero(self):
        study = cdf_study("legendre", 2, 0, 1, 5, 10)
        np.testing.assert_array_equal(study.samples["coherence"], study.samples["standard"])
        np.testing.assert_array_equal(study.cdfs["coherence"], study.cdfs["standard"])

    def test_sample_counts_and_outputs(self, tmp_path):
        study = cdf_study("hermite", 2, 3, 12, 40, 7, seed=2)
        assert all(v.size == 7 for v in study.samples.values())
        assert study.grid.size == 50
        write_cdf_outputs(study, tmp_path)
        lines = (tmp_path / "cdf_coherence.csv").read_text().splitlines()
        assert len(lines) == 8 and lines[-1].endswith(",1")

    def test_too_large_design(self):
        with pytest.raises(ValueError):
            cdf_study("hermite", 1, 2, 10, 5, 3)
