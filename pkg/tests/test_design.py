import itertools
import logging

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sparsepce.basis import build_basis
from sparsepce.design import (
    Design,
    augment,
    design_quality,
    det_ratio_check,
    information_matrix,
    phi_d,
    phi_d_normalized,
    pivoted_qr,
    rrqr_select,
    subset_select,
)
from sparsepce.sampling import RngStream, sample_pool


def _pool_matrix(family="legendre", d=2, p=4, M=150, strategy="coherence", seed=0):
    spec = build_basis(family, d, p)
    return sample_pool(spec, M, strategy, RngStream(seed, 0)).matrix


class TestDesignType:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Design((1, 2, 1))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Design((0, -1))

    def test_indices(self):
        np.testing.assert_array_equal(Design((3, 0, 2)).indices, [3, 0, 2])


class TestPhiD:
    @pytest.mark.parametrize("k", [1, 3, 7])
    def test_identity(self, k):
        assert phi_d(np.eye(k)) == pytest.approx(1.0, rel=1e-15)

    def test_twice_identity(self):
        assert phi_d(2 * np.eye(3)) == pytest.approx(2.0, rel=1e-14)

    def test_random_gram_vs_determinant(self):
        x = np.random.default_rng(0).standard_normal((9, 5))
        info = information_matrix(x)
        expected = abs(np.linalg.det(info.matrix)) ** (1 / 5)
        assert phi_d(info) == pytest.approx(expected, rel=1e-9)
        assert info.n_rows == 9
        np.testing.assert_allclose(info.matrix, info.matrix.T, atol=1e-10)

    def test_singular_is_zero(self):
        assert phi_d(np.diag([1.0, 0.0])) == 0.0
        assert phi_d(np.zeros((2, 2))) == 0.0

    def test_not_square(self):
        with pytest.raises(ValueError):
            phi_d(np.ones((2, 3)))

    @given(st.floats(1e-3, 1e3))
    def test_scale_law(self, c):
        m = information_matrix(np.random.default_rng(1).standard_normal((8, 4))).matrix
        assert phi_d(c * m) == pytest.approx(c * phi_d(m), rel=1e-12)
        assert phi_d_normalized(c * m) == pytest.approx(phi_d_normalized(m), rel=1e-12)

    @pytest.mark.parametrize("P", [1, 4, 10])
    @pytest.mark.parametrize("c", [0.5, 3.0])
    def test_normalized_scaled_identity(self, P, c):
        assert phi_d_normalized(c * np.eye(P)) == pytest.approx(P**-0.5, rel=1e-12)

    def test_normalized_vs_direct(self):
        m = information_matrix(np.random.default_rng(2).standard_normal((12, 6))).matrix
        mt = m / np.sqrt(np.sum(m * m))
        assert phi_d_normalized(m) == pytest.approx(abs(np.linalg.det(mt)) ** (1 / 6), rel=1e-9)

    def test_normalized_zero_matrix(self):
        with pytest.raises(ValueError):
            phi_d_normalized(np.zeros((3, 3)))

    def test_design_quality_wide_uses_dual_gram(self):
        x = np.random.default_rng(3).standard_normal((4, 9))
        assert design_quality(x) == pytest.approx(phi_d_normalized(x @ x.T / 4), rel=1e-12)
        y = np.random.default_rng(3).standard_normal((9, 4))
        assert design_quality(y) == pytest.approx(phi_d_normalized(y.T @ y / 9), rel=1e-12)


class TestPivotedQR:
    @pytest.mark.parametrize("shape", [(5, 12), (12, 5), (8, 8), (21, 210)])
    def test_matches_scipy_permutation(self, shape):
        a = np.random.default_rng(sum(shape)).standard_normal(shape)
        ours = pivoted_qr(a)
        _, r, piv = scipy.linalg.qr(a, pivoting=True, mode="economic")
        k = min(shape)
        np.testing.assert_array_equal(ours.perm[:k], piv[:k])
        np.testing.assert_allclose(ours.diag, np.abs(np.diag(r)), rtol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(2, 12)),
                      elements=st.floats(-10, 10, allow_subnormal=False)))
    def test_diagonal_non_increasing(self, a):
        qr = pivoted_qr(a)
        dg = qr.diag
        assert np.all(dg[1:] <= dg[:-1] * (1 + 1e-12) + 1e-12)
        assert sorted(qr.perm.tolist()) == list(range(a.shape[1]))

    def test_reconstructs_columns(self):
        a = np.random.default_rng(4).standard_normal((6, 9))
        qr = pivoted_qr(a)
        # R^T R equals the Gram matrix of the permuted columns
        ap = a[:, qr.perm]
        np.testing.assert_allclose(qr.r.T @ qr.r, ap.T @ ap, atol=1e-10)

    def test_exclude(self):
        a = np.diag([1.0, 5.0, 3.0, 4.0])
        qr = pivoted_qr(a, n_steps=2, exclude=[1])
        assert qr.perm.tolist() == [3, 2, 0, 1]


class TestRRQRSelect:
    def test_scaled_identity_rows_in_descending_scale(self):
        scales = np.array([2.0, 7.0, 1.0, 5.0, 3.0])
        design = rrqr_select(np.diag(scales), 5)
        assert design.pi == (1, 3, 4, 0, 2)

    def test_top_quartile_of_exhaustive(self):
        cand = np.random.default_rng(8).standard_normal((8, 3))
        chosen = phi_d(information_matrix(cand[rrqr_select(cand, 3).indices]))
        scores = sorted(phi_d(information_matrix(cand[list(c)]))
                        for c in itertools.combinations(range(8), 3))
        assert len(scores) == 56
        assert chosen >= scores[int(0.75 * 56) - 1]

    def test_duplicate_rows(self):
        rng = np.random.default_rng(0)
        base = rng.standard_normal((5, 4))
        cand = np.vstack([base, base, base])
        design = rrqr_select(cand, 12)
        assert len(set(design.pi)) == 12

    def test_deterministic(self):
        cand = _pool_matrix(seed=3)
        assert rrqr_select(cand, 30).pi == rrqr_select(cand.copy(), 30).pi

    def test_too_many_rows(self):
        with pytest.raises(ValueError):
            rrqr_select(np.eye(3), 4)

    def test_more_rows_than_columns_is_full_rank(self):
        cand = _pool_matrix()
        design = rrqr_select(cand, 40)
        assert len(design) == 40
        assert np.linalg.matrix_rank(cand[design.indices]) == cand.shape[1]


class TestSubsetSelect:
    def test_orthogonal_rows_tie_to_lowest_index(self):
        assert subset_select(np.eye(6), 3).pi == (0, 1, 2)

    def test_forced_selection_matches_rrqr(self):
        cand = np.random.default_rng(5).standard_normal((10, 6))
        assert set(subset_select(cand, 10).pi) == set(rrqr_select(cand, 10).pi) == set(range(10))

    def test_condition_number_vs_rrqr(self):
        wins = 0
        for t in range(100):
            cand = _pool_matrix("legendre", 2, 4, 150, "coherence", seed=100 + t)
            P = cand.shape[1]
            c_sub = np.linalg.cond(cand[subset_select(cand, P).indices])
            c_rr = np.linalg.cond(cand[rrqr_select(cand, P).indices])
            wins += c_sub <= c_rr
        assert wins >= 50

    def test_too_many_rows(self):
        with pytest.raises(ValueError):
            subset_select(np.eye(3), 4)


class TestAugment:
    def test_zero_residual_appends_lowest_unused(self, caplog):
        # every candidate row is a multiple of (1, 1) on the support: rank 1 < K = 2
        cand = np.zeros((6, 4))
        cand[:, 0] = cand[:, 2] = np.arange(1.0, 7.0)
        cand[:, 1] = np.arange(6.0)
        with caplog.at_level(logging.INFO, logger="sparsepce.design"):
            out = augment(Design((3,)), cand, [0, 2], 1)
        assert out.pi == (3, 0)
        assert "rank" in caplog.text

    def test_orthogonal_row_is_chosen(self):
        cand = np.zeros((7, 3))
        cand[:, 0] = np.arange(1.0, 8.0)
        cand[5, 1] = 0.2
        design = Design((0, 2))
        assert augment(design, cand, [0, 1], 1).pi == (0, 2, 5)

    def test_full_rank_design_maximizes_determinant(self):
        cand = _pool_matrix(seed=11)
        support = [0, 3, 5, 9]
        design = rrqr_select(cand[:, support], 8)
        out = augment(design, cand, support, 1)
        dets = []
        for i in range(cand.shape[0]):
            if i in design.pi:
                dets.append(-np.inf)
                continue
            rows = cand[np.r_[design.indices, i]][:, support]
            dets.append(np.linalg.slogdet(rows.T @ rows)[1])
        assert out.pi[-1] == int(np.argmax(dets))

    def test_append_only_and_no_duplicates(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            M, P = int(rng.integers(6, 20)), int(rng.integers(2, 8))
            cand = rng.standard_normal((M, P))
            n0 = int(rng.integers(1, M - 1))
            design = Design(tuple(rng.choice(M, n0, replace=False)))
            support = np.sort(rng.choice(P, int(rng.integers(1, P + 1)), replace=False))
            n_add = int(rng.integers(1, M - n0 + 1))
            out = augment(design, cand, support, n_add)
            assert out.pi[:n0] == design.pi
            assert len(out) == n0 + n_add
            assert len(set(out.pi)) == len(out)
            assert max(out.pi) < M

    def test_not_enough_candidates(self):
        with pytest.raises(ValueError):
            augment(Design((0, 1)), np.eye(3), [0], 2)

    def test_empty_support(self):
        with pytest.raises(ValueError):
            augment(Design((0,)), np.eye(3), [], 1)


def _exchange_ratio(A, B, C, i, j):
    """det ratio from the literal column exchange and re-factorization."""
    k = A.shape[0]
    r = np.block([[A, B], [np.zeros((C.shape[0], k)), C]])
    cols = list(range(r.shape[1]))
    cols[i], cols[k + j] = cols[k + j], cols[i]
    rbar = np.linalg.qr(r[:, cols], mode="r")
    return abs(np.prod(np.diag(rbar)[:k])) / np.prod(np.diag(A))


class TestDetRatio:
    def test_zero_blocks(self):
        assert det_ratio_check(np.eye(2), np.zeros((2, 2)), np.zeros((1, 2)), 0, 1) == 0.0

    @given(st.floats(0.1, 10), st.floats(-10, 10), st.floats(-10, 10))
    def test_scalar(self, a, b, c):
        got = det_ratio_check([[a]], [[b]], [[c]], 0, 0)
        assert got == pytest.approx(np.sqrt((b / a) ** 2 + (c / a) ** 2), rel=1e-12)

    def test_random_partitions_match_exchange(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            A = np.triu(rng.standard_normal((4, 4)))
            A[np.diag_indices(4)] = np.abs(A[np.diag_indices(4)]) + 0.5
            B = rng.standard_normal((4, 3))
            C = np.triu(rng.standard_normal((3, 3)))
            i, j = int(rng.integers(4)), int(rng.integers(3))
            got = det_ratio_check(A, B, C, i, j)
            assert got == pytest.approx(_exchange_ratio(A, B, C, i, j), rel=1e-10)

    def test_rejects_singular(self):
        with pytest.raises(np.linalg.LinAlgError):
            det_ratio_check(np.diag([1.0, 0.0]), np.ones((2, 1)), np.ones((1, 1)), 0, 0)

    def test_rejects_lower_triangular(self):
        with pytest.raises(ValueError):
            det_ratio_check(np.array([[1.0, 0.0], [1.0, 1.0]]), np.ones((2, 1)), np.ones((1, 1)), 0, 0)
