import math

import numpy as np
import pytest

from partisel import (
    Partition,
    Subset,
    aoptimal_build,
    coverage_build,
    dpp_build,
    ekf_aoptimal_eval,
    ekf_aoptimal_handle,
    facility_location_eval,
    facility_location_handle,
    libsvm_parse,
    normalize_empty,
    spd_cholesky_det,
    spd_inverse_trace,
)
from partisel.core import check_monotone_samples
from partisel.objectives import median_bandwidth


def cofactor_det(m):
    """Independent determinant oracle by cofactor expansion."""
    m = np.asarray(m, dtype=float)
    if m.shape == (1, 1):
        return m[0, 0]
    total = 0.0
    for j in range(m.shape[1]):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += ((-1) ** j) * m[0, j] * cofactor_det(minor)
    return total


def gauss_jordan_inverse(m):
    """Independent inverse oracle by row reduction."""
    m = np.asarray(m, dtype=float)
    d = m.shape[0]
    aug = np.hstack([m.copy(), np.eye(d)])
    for col in range(d):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(d):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, d:]


class TestDenseKernels:
    def test_identity(self):
        eye = np.eye(3)
        assert spd_cholesky_det(eye) == pytest.approx(1.0)
        assert spd_inverse_trace(eye) == pytest.approx(3.0)

    def test_diagonal(self):
        m = np.diag([2.0, 4.0])
        assert spd_cholesky_det(m) == pytest.approx(8.0)
        assert spd_inverse_trace(m) == pytest.approx(0.75)

    def test_against_naive_oracles(self):
        rng = np.random.default_rng(0)
        for d in (2, 3, 4, 5):
            a = rng.standard_normal((d, d))
            m = a @ a.T + d * np.eye(d)
            assert spd_cholesky_det(m) == pytest.approx(cofactor_det(m), rel=1e-9)
            assert spd_inverse_trace(m) == pytest.approx(
                float(np.trace(gauss_jordan_inverse(m))), rel=1e-9
            )

    def test_non_pd_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            spd_cholesky_det(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestCoverage:
    @pytest.mark.parametrize("n,k", [(20, 5), (30, 6), (40, 8), (50, 10)])
    def test_family_values_exact(self, n, k):
        h, p = coverage_build(n, k, 0.01)
        all_b = Subset.from_iterable(range(n, 2 * n))
        all_a = Subset.from_iterable(range(n))
        assert h.evaluate(all_b) == pytest.approx(2 * n - 1 - k, abs=1e-9)
        assert h.evaluate(all_a) == pytest.approx((n - 1) * 1.01, abs=1e-9)
        assert h.evaluate(Subset(())) == 0.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            coverage_build(1, 1)
        with pytest.raises(ValueError):
            coverage_build(5, 6)
        with pytest.raises(ValueError):
            coverage_build(5, 2, epsilon=0.0)

    def test_monotone_samples(self):
        h, _ = coverage_build(12, 4, 0.01)
        assert check_monotone_samples(h, 1000, np.random.default_rng(0))


class TestDpp:
    def test_singleton_value(self):
        h = dpp_build(np.array([[0.0, 0.0], [3.0, 4.0]]), bandwidth=1.0)
        assert h.evaluate(Subset((0,))) == pytest.approx(2.0)

    def test_far_points_near_independent(self):
        h = dpp_build(np.array([[0.0, 0.0], [100.0, 0.0]]), bandwidth=1.0)
        assert h.evaluate(Subset((0, 1))) == pytest.approx(4.0, abs=1e-6)

    def test_identical_rows_closed_form(self):
        h = dpp_build(np.array([[1.0, 2.0], [1.0, 2.0]]), bandwidth=1.0)
        # kernel 1 between duplicates: det [[2, 1], [1, 2]] = 3
        assert h.evaluate(Subset((0, 1))) == pytest.approx(3.0)

    def test_empty_is_one_and_normalizable(self):
        rng = np.random.default_rng(1)
        h = dpp_build(rng.standard_normal((5, 3)))
        assert h.evaluate(Subset(())) == pytest.approx(1.0)
        g = normalize_empty(h)
        assert g.evaluate(Subset(())) == pytest.approx(0.0)

    def test_monotone_many_pairs(self):
        rng = np.random.default_rng(2)
        h = dpp_build(rng.standard_normal((9, 4)))
        n = h.n
        for _ in range(1000):
            b = rng.random(n) < 0.5
            a = b & (rng.random(n) < 0.6)
            va, vb = h.evaluate_masks(np.stack([a, b]))
            assert va <= vb + 1e-10

    def test_median_bandwidth_positive(self):
        rng = np.random.default_rng(3)
        assert median_bandwidth(rng.standard_normal((6, 2))) > 0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            dpp_build(np.array([[np.nan, 0.0]]))


class TestAOptimal:
    def test_empty_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        h = aoptimal_build(rng.standard_normal((12, 4)), seed=1)
        assert h.evaluate(Subset(())) == 0.0

    def test_scalar_closed_form(self):
        # one feature, prior 1, noise 1, measurement 1: gain = 1 - 1/(1+1)
        h = aoptimal_build(
            np.array([[1.0], [1.0]]), seed=0, noise_std=1.0,
            prior_cov=np.array([[1.0]]), standardize=False,
        )
        assert h.evaluate(Subset((0,))) == pytest.approx(0.5, abs=1e-12)

    def test_monotone_psd_ordering(self):
        rng = np.random.default_rng(1)
        h = aoptimal_build(rng.standard_normal((15, 5)), seed=2)
        for _ in range(100):
            b = rng.random(h.n) < 0.4
            a = b & (rng.random(h.n) < 0.6)
            va, vb = h.evaluate_masks(np.stack([a, b]))
            assert va <= vb + 1e-10

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((10, 3))
        h = aoptimal_build(data, seed=3)
        # re-derive with plain numpy inverses
        mean, std = data.mean(axis=0), data.std(axis=0)
        design = ((data - mean) / std).T
        d = 3
        prior_rng = np.random.default_rng(3)
        factor = prior_rng.standard_normal((d, d))
        prior = factor @ np.diag(((np.arange(1, d + 1) / d) ** 2)) @ factor.T
        sigma2 = 1.0 / d
        ids = [1, 4, 7]
        xs = design[:, ids]
        m = np.linalg.inv(prior) + xs @ xs.T / sigma2
        expect = np.trace(prior) - np.trace(np.linalg.inv(m))
        assert h.evaluate(Subset(tuple(ids))) == pytest.approx(expect, rel=1e-8)


class TestLibsvm:
    def test_basic_line(self, tmp_path):
        f = tmp_path / "data.txt"
        f.write_text("1 1:0.5 3:2.0\n")
        labels, dense = libsvm_parse(f)
        assert labels.tolist() == [1.0]
        assert dense.tolist() == [[0.5, 0.0, 2.0]]

    def test_empty_feature_list(self, tmp_path):
        f = tmp_path / "data.txt"
        f.write_text("2 1:1.0\n-1\n")
        labels, dense = libsvm_parse(f)
        assert labels.tolist() == [2.0, -1.0]
        assert dense[1].tolist() == [0.0]

    def test_malformed_reports_line(self, tmp_path):
        f = tmp_path / "data.txt"
        f.write_text("x 1:a\n")
        with pytest.raises(ValueError, match="line 1"):
            libsvm_parse(f)


class TestFacilityLocation:
    def test_single_action_distance_five(self):
        val = facility_location_eval(
            Subset((0,)), targets=np.array([[5.0, 0.0]]), action_positions=np.array([[0.0, 0.0]])
        )
        assert val == pytest.approx(0.2)

    def test_takes_the_max(self):
        val = facility_location_eval(
            Subset((0, 1)),
            targets=np.array([[0.0, 0.0]]),
            action_positions=np.array([[5.0, 0.0], [0.0, 2.0]]),
        )
        assert val == pytest.approx(0.5)

    def test_empty_zero(self):
        assert facility_location_eval(Subset(()), np.zeros((3, 2)), np.ones((4, 2))) == 0.0

    def test_distance_floor(self):
        h = facility_location_handle(np.zeros((1, 2)), np.zeros((1, 2)))
        assert h.evaluate(Subset((0,))) == pytest.approx(1e6)


class TestEkf:
    def test_empty_zero(self):
        rng = np.random.default_rng(0)
        h = ekf_aoptimal_handle(rng.normal(size=(6, 2)), rng.normal(size=(3, 2)))
        assert h.evaluate(Subset(())) == 0.0

    def test_single_measurement_closed_form(self):
        # direct 2x2 trace computation as the oracle
        step_std, noise_var = 0.02, 0.01
        p_var = step_std**2
        z = np.array([1.0, 0.0])
        info = np.diag([1.0 / p_var, 1.0 / p_var]) + (
            np.diag([p_var, p_var]) + np.outer(z, z)
        ) / noise_var
        expected = 2.0 * p_var - np.trace(np.linalg.inv(info))
        assert expected == pytest.approx(1.54e-5, rel=5e-3)
        val = ekf_aoptimal_eval(
            Subset((0,)),
            action_positions=np.array([[1.0, 0.0]]),
            prev_target_positions=np.array([[0.0, 0.0]]),
        )
        assert val == pytest.approx(expected, rel=1e-10)

    def test_adding_actions_never_decreases(self):
        rng = np.random.default_rng(1)
        h = ekf_aoptimal_handle(rng.normal(scale=5, size=(10, 2)), rng.normal(size=(4, 2)))
        for _ in range(100):
            b = rng.random(10) < 0.5
            a = b & (rng.random(10) < 0.6)
            va, vb = h.evaluate_masks(np.stack([a, b]))
            assert va <= vb + 1e-15
