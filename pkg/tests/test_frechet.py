"""Region statistics, Newton-Schulz square roots, and the Fréchet distance."""
from __future__ import annotations

import numpy as np
import pytest

from camoscore import features, frechet
from camoscore.errors import (
    ConvergenceError,
    DegenerateRegionError,
    ParameterError,
    ShapeError,
)
from conftest import checkerboard, noise_image


def random_spd(rng, dim=None, max_cond=1e4):
    """Random SPD matrix with controlled condition number and scale."""
    d = dim if dim is not None else int(rng.integers(2, 33))
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    cond = 10 ** rng.uniform(0, np.log10(max_cond))
    lo = 10 ** rng.uniform(-3, 3)
    vals = lo * np.exp(np.linspace(0, np.log(cond), d))
    a = (q * vals) @ q.T
    return 0.5 * (a + a.T)


def random_stats(rng, dim=10, n=60):
    return frechet.stats_from_vectors(rng.normal(size=(n, dim)))


class TestRegionStats:
    def test_two_sample_covariance_with_ridge(self):
        # Samples (0,0) and (2,2): unbiased covariance [[2,2],[2,2]],
        # ridge 1e-6 * trace / D = 2e-6 on the diagonal.
        s = frechet.stats_from_vectors(np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert np.allclose(s.mu, [1.0, 1.0])
        expected = np.array([[2.0, 2.0], [2.0, 2.0]]) + 2e-6 * np.eye(2)
        assert np.allclose(s.sigma, expected, atol=1e-15)
        assert s.n == 2

    def test_identical_samples_yield_ridge_only(self):
        s = frechet.stats_from_vectors(np.tile([0.3, 0.7, 0.1], (5, 1)))
        # zero trace floors the ridge at a tiny positive value: sigma
        # stays positive definite
        assert np.allclose(s.sigma, s.sigma[0, 0] * np.eye(3))
        assert np.linalg.eigvalsh(s.sigma).min() > 0.0

    def test_sigma_symmetric_positive_definite(self, rng):
        for _ in range(20):
            s = random_stats(rng, dim=int(rng.integers(2, 12)))
            assert np.array_equal(s.sigma, s.sigma.T)
            assert np.linalg.eigvalsh(s.sigma).min() > 0.0

    def test_single_sample_rejected(self):
        with pytest.raises(DegenerateRegionError):
            frechet.stats_from_vectors(np.ones((1, 4)))

    def test_few_sample_warning(self, rng):
        small = frechet.stats_from_vectors(rng.normal(size=(5, 10)))
        big = frechet.stats_from_vectors(rng.normal(size=(50, 10)))
        assert frechet.few_sample_warning(small, "fg") is not None
        assert frechet.few_sample_warning(big, "fg") is None

    def test_region_stats_pools_majority_cells(self):
        img = noise_image(20, 20, seed=40)
        fm = features.extract_features(img)
        mask = np.zeros((20, 20), dtype=bool)
        mask[0:10, :] = True
        s = frechet.region_stats(fm, mask)
        sel, _ = features.region_cells(fm, mask)
        assert s.n == int(sel.sum())
        assert s.dim == 17

    def test_region_too_small_rejected(self):
        img = noise_image(20, 20, seed=41)
        fm = features.extract_features(img)
        mask = np.zeros((20, 20), dtype=bool)
        mask[0:2, 0:2] = True  # one grid cell
        with pytest.raises(DegenerateRegionError):
            frechet.region_stats(fm, mask)


class TestMatrixSqrt:
    def test_identity_1x1_zero_iterations(self):
        sq, iters, res = frechet.matrix_sqrt(np.eye(1))
        assert np.array_equal(sq, np.eye(1))
        assert iters == 0 and res == 0.0

    def test_identity_recovered_exactly(self):
        sq, iters, res = frechet.matrix_sqrt(np.eye(8))
        assert np.abs(sq - np.eye(8)).max() < 1e-12
        assert res < 1e-10

    def test_known_diagonal_root(self):
        sq, _, _ = frechet.matrix_sqrt(np.diag([4.0, 9.0, 25.0]))
        assert np.allclose(sq, np.diag([2.0, 3.0, 5.0]), atol=1e-10)

    def test_matches_eigendecomposition_oracle(self, rng):
        # Dual route: the iterative root must agree with the dense
        # eigendecomposition V sqrt(L) V^T on well-conditioned input.
        for _ in range(100):
            a = random_spd(rng)
            ns, _, _ = frechet.matrix_sqrt(a)
            eig = frechet.matrix_sqrt_eig(a)
            rel = np.linalg.norm(ns - eig) / np.linalg.norm(eig)
            assert rel < 1e-6

    def test_square_of_root_recovers_input(self, rng):
        for _ in range(20):
            a = random_spd(rng, dim=12)
            sq, _, _ = frechet.matrix_sqrt(a)
            assert np.linalg.norm(sq @ sq - a) / np.linalg.norm(a) < 1e-8

    def test_residual_reported_below_tolerance(self, rng):
        a = random_spd(rng, dim=16)
        _, iters, res = frechet.matrix_sqrt(a)
        assert 0 < iters <= 100
        assert res < 1e-10

    def test_non_symmetric_rejected(self):
        a = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ParameterError):
            frechet.matrix_sqrt(a)

    def test_indefinite_input_diverges(self):
        with pytest.raises(ConvergenceError):
            frechet.matrix_sqrt(np.diag([1.0, -1.0]))

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            frechet.matrix_sqrt(np.ones((2, 3)))


class TestFrechetDistance:
    def test_one_dimensional_closed_form(self):
        # N(0, 1) vs N(3, 4): d2 = (0-3)^2 + (1-2)^2 = 10.
        a = frechet.RegionStats(np.array([0.0]), np.array([[1.0]]), n=10)
        b = frechet.RegionStats(np.array([3.0]), np.array([[4.0]]), n=10)
        r = frechet.frechet_distance(a, b)
        assert r.d2 == pytest.approx(10.0, abs=1e-8)
        assert r.mean_term == pytest.approx(9.0, abs=1e-12)
        assert r.cov_term == pytest.approx(1.0, abs=1e-8)

    def test_one_dimensional_random_closed_form(self, rng):
        for _ in range(30):
            m1, m2 = rng.normal(size=2)
            v1, v2 = rng.uniform(0.1, 5.0, size=2)
            a = frechet.RegionStats(np.array([m1]), np.array([[v1]]), n=10)
            b = frechet.RegionStats(np.array([m2]), np.array([[v2]]), n=10)
            expected = (m1 - m2) ** 2 + (np.sqrt(v1) - np.sqrt(v2)) ** 2
            assert frechet.frechet_distance(a, b).d2 == pytest.approx(expected, abs=1e-8)

    def test_self_distance_is_zero(self, rng):
        for _ in range(25):
            s = random_stats(rng, dim=int(rng.integers(2, 20)))
            assert frechet.frechet_distance(s, s).d2 <= 1e-8

    def test_symmetry(self, rng):
        for _ in range(10):
            s1 = random_stats(rng)
            s2 = frechet.stats_from_vectors(rng.normal(loc=0.4, size=(60, 10)))
            d12 = frechet.frechet_distance(s1, s2).d2
            d21 = frechet.frechet_distance(s2, s1).d2
            assert d12 == pytest.approx(d21, rel=1e-8, abs=1e-10)

    def test_terms_sum_to_distance(self, rng):
        s1, s2 = random_stats(rng), random_stats(rng)
        r = frechet.frechet_distance(s1, s2)
        assert r.d2 == pytest.approx(r.mean_term + r.cov_term, rel=1e-9, abs=1e-12)

    def test_non_negative(self, rng):
        for _ in range(20):
            r = frechet.frechet_distance(random_stats(rng), random_stats(rng))
            assert r.d2 >= 0.0

    def test_dimension_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            frechet.frechet_distance(random_stats(rng, dim=4), random_stats(rng, dim=5))

    def test_separates_identical_from_distinct_textures(self):
        # fg identical to bg -> tiny d2; fg a different texture -> large.
        same = checkerboard(40, 40, period=4)
        mask = np.zeros((40, 40), dtype=bool)
        mask[12:28, 12:28] = True
        fm_same = features.extract_features(same)
        d_same = frechet.frechet_distance(
            frechet.region_stats(fm_same, mask),
            frechet.region_stats(fm_same, ~mask),
        ).d2

        distinct = checkerboard(40, 40, period=4)
        distinct[mask] = [0.95, 0.05, 0.05]
        fm_diff = features.extract_features(distinct)
        d_diff = frechet.frechet_distance(
            frechet.region_stats(fm_diff, mask),
            frechet.region_stats(fm_diff, ~mask),
        ).d2
        assert d_diff > 10 * max(d_same, 1e-6)

    def test_central_difference_slope_stable(self):
        # d2 responds smoothly to a single-pixel perturbation: the
        # central-difference slope agrees across step sizes to 1%.
        rng = np.random.default_rng(7)
        img = rng.uniform(0.2, 0.8, size=(32, 32, 3))
        for _ in range(2):
            img = (
                img
                + np.roll(img, 1, 0) + np.roll(img, -1, 0)
                + np.roll(img, 1, 1) + np.roll(img, -1, 1)
            ) / 5
        mask = np.zeros((32, 32), dtype=bool)
        mask[10:22, 10:22] = True

        def d2_of(image):
            fm = features.extract_features(image)
            return frechet.frechet_distance(
                frechet.region_stats(fm, mask),
                frechet.region_stats(fm, ~mask),
            ).d2

        base = img[15, 16, 0]
        slopes = []
        for h in (1e-3, 1e-4):
            up = img.copy()
            up[15, 16, 0] = base + h
            dn = img.copy()
            dn[15, 16, 0] = base - h
            slopes.append((d2_of(up) - d2_of(dn)) / (2 * h))
        assert slopes[0] == pytest.approx(slopes[1], rel=0.01)
