from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarsemom.datagen import BETA_5C, CUTS_5C, generate_5c
from coarsemom.model import Dataset, EquationSpec, ModelSpec, ParamSet, demean_regressors
from coarsemom.post import exact_data_se, mckelvey_zavoina_r2, pearson_coded, polychoric_matrix


def fake_fit(beta, cutpoints, K):
    return SimpleNamespace(params=ParamSet(np.asarray(beta, float), [np.asarray(c, float) for c in cutpoints], np.eye(K)))


def one_column_data(x, y=None):
    y = np.ones((len(x), 1), np.int64) if y is None else y
    return Dataset(np.asarray(x, float)[:, None], ("x",), y, ("y",))


def unit_variance_column(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    x -= x.mean()
    return x / np.sqrt(np.mean(x**2))


class TestPolychoric:
    def test_components_add_up_and_unit_diagonal(self, fit_5c_small):
        spec, data, res = fit_5c_small
        latent = np.array(SIGMA_LIKE)
        rep = polychoric_matrix(spec, data, res, latent)
        np.testing.assert_array_equal(rep.sigma_yy, rep.structural + rep.error)
        np.testing.assert_array_equal(np.diag(rep.corr_yy), 1.0)
        assert np.linalg.eigvalsh(rep.sigma_yy).min() > 0

    def test_zero_coefficients_give_latent_correlation(self, fit_5c_small):
        spec, data, res = fit_5c_small
        zero = fake_fit(np.zeros_like(res.params.beta), res.params.cutpoints, 4)
        rep = polychoric_matrix(spec, data, zero, np.array(SIGMA_LIKE))
        np.testing.assert_allclose(rep.corr_yy, SIGMA_LIKE, atol=1e-15)

    def test_identical_equations_uncorrelated_errors(self):
        x = unit_variance_column(5000, 1)
        z = np.random.default_rng(2).normal(size=5000)
        X = np.column_stack([x, z])
        data = Dataset(X, ("x", "z"), np.ones((5000, 2), np.int64), ("y1", "y2"))
        spec = ModelSpec((EquationSpec("y1", ("x", "z"), 2), EquationSpec("y2", ("x", "z"), 2)))
        b = np.array([0.7, -0.4])
        data, _ = demean_regressors(data)
        res = fake_fit(np.concatenate([b, b]), [[0.0], [0.0]], 2)
        rep = polychoric_matrix(spec, data, res, np.eye(2))
        Xd = data.regressors
        s = b @ (Xd.T @ Xd / len(Xd)) @ b
        assert rep.corr_yy[0, 1] == pytest.approx(s / (s + 1), rel=1e-12)

    def test_psd_when_components_psd(self, fit_5c_small):
        spec, data, res = fit_5c_small
        rng = np.random.default_rng(0)
        for _ in range(20):
            A = rng.normal(size=(4, 4))
            C = A @ A.T
            d = np.sqrt(np.diag(C))
            rep = polychoric_matrix(spec, data, res, C / np.outer(d, d))
            assert np.linalg.eigvalsh(rep.sigma_yy).min() >= -1e-12
            assert np.all(np.isfinite(rep.corr_yy))


SIGMA_LIKE = [
    [1.0, 0.45, -0.4, 0.2],
    [0.45, 1.0, 0.3, 0.55],
    [-0.4, 0.3, 1.0, -0.1],
    [0.2, 0.55, -0.1, 1.0],
]


class TestR2:
    def test_zero_coefficient(self, fit_5c_small):
        spec, data, res = fit_5c_small
        zero = fake_fit(np.zeros_like(res.params.beta), res.params.cutpoints, 4)
        for k in range(4):
            assert mckelvey_zavoina_r2(spec, data, zero, k) == 0.0

    def test_unit_signal_gives_half(self):
        data = one_column_data(unit_variance_column(1000, 3))
        spec = ModelSpec((EquationSpec("y", ("x",), 2),))
        assert mckelvey_zavoina_r2(spec, data, fake_fit([1.0], [[0.0]], 1), 0) == pytest.approx(0.5, abs=1e-14)

    def test_5c_second_equation_at_truth(self):
        # s from the simulated structural index, compared with the estimator-side formula
        _, big = generate_5c(1_000_000, 7)
        s_sim = float(np.var(big.index[:, 1]))
        data, _ = generate_5c(200_000, 8)
        spec = ModelSpec(tuple(EquationSpec(f"y{k + 1}", ("x1", "x2", "x3", "x4"), len(CUTS_5C[k]) + 1) for k in range(4)))
        res = fake_fit(BETA_5C.ravel(), CUTS_5C, 4)
        r2 = mckelvey_zavoina_r2(spec, data, res, 1)
        # s is about 62; its sampling s.d. at 200k rows is well under 0.5
        assert r2 == pytest.approx(s_sim / (s_sim + 1), abs=2e-4)
        assert 0 <= r2 < 1

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 100.0), st.integers(0, 1))
    def test_rescaling_invariance(self, scale, col):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(300, 2))
        data = Dataset(X, ("a", "b"), np.ones((300, 1), np.int64), ("y",))
        spec = ModelSpec((EquationSpec("y", ("a", "b"), 2),))
        beta = np.array([0.6, -1.1])
        base = mckelvey_zavoina_r2(spec, data, fake_fit(beta, [[0.0]], 1), 0)
        X2 = X.copy()
        X2[:, col] *= scale
        b2 = beta.copy()
        b2[col] /= scale
        moved = mckelvey_zavoina_r2(spec, Dataset(X2, ("a", "b"), data.responses, ("y",)), fake_fit(b2, [[0.0]], 1), 0)
        assert moved == pytest.approx(base, rel=1e-10)


class TestPearson:
    def test_concordant_binary(self):
        y = np.tile([1, 2], 50)
        data = Dataset(np.zeros((100, 1)), ("x",), np.column_stack([y, y]), ("a", "b"))
        assert pearson_coded(data)[0, 1] == pytest.approx(1.0)

    def test_independent_items(self):
        rng = np.random.default_rng(5)
        Y = rng.integers(1, 5, size=(100_000, 2))
        data = Dataset(np.zeros((100_000, 1)), ("x",), Y, ("a", "b"))
        assert abs(pearson_coded(data)[0, 1]) < 4 / np.sqrt(100_000)

    def test_monotone_recoding_changes_matrix(self, data_5c_small):
        data, _ = data_5c_small
        plain = pearson_coded(data, [np.arange(J) for J in (2, 3, 3, 4)])
        stretched = pearson_coded(data, [np.r_[0, np.arange(2, J + 1)] for J in (2, 3, 3, 4)])
        assert np.max(np.abs(plain - stretched)) > 1e-3

    def test_zero_variance_raises(self):
        data = Dataset(np.zeros((10, 1)), ("x",), np.column_stack([np.ones(10, int), np.tile([1, 2], 5)]), ("a", "b"))
        with pytest.raises(ValueError, match="zero variance"):
            pearson_coded(data, [[0.0, 1.0], [0.0, 1.0]])

    def test_too_few_codes(self, data_5c_small):
        data, _ = data_5c_small
        with pytest.raises(ValueError, match="codes"):
            pearson_coded(data, [[0, 1]] * 4)


class TestExactDataSe:
    def test_closed_form_single_regressor(self):
        for n in (100, 2500):
            data = one_column_data(unit_variance_column(n, n))
            spec = ModelSpec((EquationSpec("y", ("x",), 2),))
            assert exact_data_se(spec, data, np.eye(1))[0] == pytest.approx(1 / np.sqrt(n), rel=1e-12)

    def test_doubling_n(self):
        x = unit_variance_column(400, 9)
        spec = ModelSpec((EquationSpec("y", ("x",), 2),))
        a = exact_data_se(spec, one_column_data(x), np.eye(1))
        b = exact_data_se(spec, one_column_data(np.concatenate([x, x])), np.eye(1))
        assert b[0] / a[0] == pytest.approx(1 / np.sqrt(2), rel=1e-12)

    def test_below_coarsened_sandwich(self, fit_5c_small):
        spec, data, res = fit_5c_small
        se = exact_data_se(spec, data, np.array(SIGMA_LIKE))
        P = res.params.beta.size
        assert np.all(se <= res.se[:P])

    def test_singular_latent_raises(self, fit_5c_small):
        spec, data, _ = fit_5c_small
        with pytest.raises(np.linalg.LinAlgError):
            exact_data_se(spec, data, np.ones((4, 4)))
