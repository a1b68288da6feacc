import math

import numpy as np
import pytest

from coarsemom import gauss, oracle
from coarsemom.datagen import Column, DgpConfig, EquationDgp, generate, generate_5c
from coarsemom.engine import fit
from coarsemom.gauss import DegenerateProbabilityError
from coarsemom.latent import full_correlation_matrix
from coarsemom.model import Dataset, Design, ParamSet
from coarsemom.residuals import mean_moments

CUTS = {2: (0.2,), 3: (-0.6, 0.7), 4: (-1.0, 0.1, 0.9)}


def op_config(J, coefs=(0.7, -0.5)):
    cols = (Column("a"), Column("b", "discrete", values=(0.0, 1.0)))
    return DgpConfig(cols, (EquationDgp("y", ("a", "b"), coefs, CUTS[J]),))


def pair_config(rho, cuts=((-0.4, 0.5), (0.1,))):
    cols = (Column("a"), Column("b", sd=1.2, terms=(("a", 0.3),)))
    eqs = (EquationDgp("y1", ("a", "b"), (0.6, -0.3), cuts[0]), EquationDgp("y2", ("a", "b"), (-0.4, 0.5), cuts[1]))
    return DgpConfig(cols, eqs, np.array([[1.0, rho], [rho, 1.0]]))


def central_grad(f, x, h=1e-5):
    g = np.empty(x.size)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


class TestOpLoglik:
    def test_saturated_marginal(self):
        data, _ = generate(op_config(4), 3000, 1)
        y = data.responses[:, 0]
        p = np.bincount(y, minlength=5)[1:] / len(y)
        cuts = gauss.std_quantile(np.cumsum(p)[:-1])
        ll = oracle.op_loglik(data, np.zeros(2), cuts, 0)
        assert ll == pytest.approx(len(y) * np.sum(p * np.log(p)), rel=1e-12)

    def test_single_observation_half(self):
        data = Dataset(np.array([[0.0, 0.0]]), ("a", "b"), np.array([[1]]), ("y",))
        assert oracle.op_loglik(data, np.array([0.3, -2.0]), [0.0], 0) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_degenerate_cell_raises(self):
        data = Dataset(np.array([[50.0, 0.0]]), ("a", "b"), np.array([[1]]), ("y",))
        with pytest.raises(DegenerateProbabilityError):
            oracle.op_loglik(data, np.array([1.0, 0.0]), [0.0], 0)

    def test_perturbing_cutpoints_lowers_loglik(self):
        data, _ = generate(op_config(3), 2000, 2)
        ml = oracle.op_ml_fit(data, 0)
        best = oracle.op_loglik(data, ml.estimates[:2], ml.estimates[2:], 0)
        for j in range(2):
            for d in (-0.05, 0.05):
                cuts = ml.estimates[2:].copy()
                cuts[j] += d
                assert oracle.op_loglik(data, ml.estimates[:2], cuts, 0) < best


class TestOpFit:
    @pytest.mark.parametrize("J", [2, 3, 4])
    def test_converged_with_small_gradient(self, J):
        data, _ = generate(op_config(J), 2000, J)
        ml = oracle.op_ml_fit(data, 0)
        assert ml.converged and ml.grad_norm <= 1e-6
        assert np.all(ml.se > 0)
        assert len(ml.labels) == ml.estimates.size == 2 + J - 1

    def test_null_coefficients_within_four_se(self):
        data, _ = generate(op_config(3, coefs=(0.0, 0.0)), 2000, 8)
        ml = oracle.op_ml_fit(data, 0)
        assert np.all(np.abs(ml.estimates[:2]) <= 4 * ml.se[:2])

    def test_constrained_cuts_are_share_quantiles(self):
        data, _ = generate(op_config(4), 2000, 9)
        y = data.responses[:, 0]
        shares = np.cumsum(np.bincount(y, minlength=5)[1:])[:-1] / len(y)
        np.testing.assert_allclose(oracle.constrained_cut_fit(data, 0), gauss.std_quantile(shares), atol=1e-6)

    def test_to_dict(self):
        data, _ = generate(op_config(2), 500, 1)
        d = oracle.op_ml_fit(data, 0).to_dict()
        assert set(d) >= {"labels", "estimates", "se", "loglik", "converged", "grad_norm"}


class TestScoreEquivalence:
    """Finite-difference gradient of the ordered-probit log-likelihood versus
    the moment vector with identity weight, at random parameter points."""

    def _points(self, J, n_points=5):
        data, _ = generate(op_config(J), 1000, 20 + J)
        spec = op_config(J).model_spec()
        design = Design.build(spec, data)
        rng = np.random.default_rng(J)
        for _ in range(n_points):
            beta = rng.normal(0, 0.5, 2)
            cuts = np.sort(rng.uniform(-1, 1, J - 1)) + np.arange(J - 1) * 0.2
            mom = mean_moments(design, ParamSet(beta, [cuts], np.eye(1)))
            grad = central_grad(lambda t: oracle.op_loglik(data, t[:2], t[2:], 0) / data.n_obs, np.concatenate([beta, cuts]))
            yield mom, grad

    @pytest.mark.parametrize("J", [2, 3, 4])
    def test_coefficient_block(self, J):
        for mom, grad in self._points(J):
            np.testing.assert_allclose(mom[:2], grad[:2], atol=1e-6, rtol=0)

    @pytest.mark.parametrize("J", [2, 3])
    def test_cutpoint_block(self, J):
        # the log-likelihood derivative in a cut-point is minus the binarized residual moment
        for mom, grad in self._points(J):
            np.testing.assert_allclose(-mom[2:], grad[2:], atol=1e-6, rtol=0)


class TestBiprobit:
    def test_independence_factorizes(self):
        data, _ = generate(pair_config(0.3), 800, 3)
        params = {"beta1": [0.5, -0.2], "beta2": [-0.3, 0.4], "cuts1": [-0.4, 0.5], "cuts2": [0.1]}
        joint = oracle.biprobit_loglik(data, params, 0, 1, 0.0)
        sep = oracle.op_loglik(data, params["beta1"], params["cuts1"], 0) + oracle.op_loglik(data, params["beta2"], params["cuts2"], 1)
        assert joint == pytest.approx(sep, rel=1e-12)

    @pytest.mark.parametrize("rho", [-0.7, 0.0, 0.4, 0.95])
    def test_cells_sum_to_one(self, rho):
        data, _ = generate(pair_config(0.3), 300, 4)
        X = data.regressors
        s1, s2 = X @ [0.5, -0.2], X @ [-0.3, 0.4]
        e1 = np.array([-np.inf, -0.4, 0.5, np.inf])
        e2 = np.array([-np.inf, 0.1, np.inf])
        total = np.zeros(data.n_obs)
        for j1 in range(3):
            for j2 in range(2):
                total += gauss.bvn_rect_prob(e1[j1] - s1, e1[j1 + 1] - s1, e2[j2] - s2, e2[j2 + 1] - s2, rho)
        np.testing.assert_allclose(total, 1.0, atol=1e-8)

    def test_recovers_rho_and_agrees_with_matching(self):
        cfg = pair_config(0.5)
        data, _ = generate(cfg, 2000, 12)
        ml = oracle.biprobit_ml_fit(data, 0, 1)
        assert ml.converged
        rho_ml = ml.estimates[-1]
        assert abs(rho_ml - 0.5) <= 0.06
        spec = cfg.model_spec()
        latent = full_correlation_matrix(spec, data, fit(spec, data))
        assert abs(latent.matrix[0, 1] - rho_ml) <= 0.05

    @pytest.mark.slow
    def test_5c_first_pair(self):
        data, _ = generate_5c(10_000, 314)
        ml = oracle.biprobit_ml_fit(data, 0, 1)
        assert ml.converged
        assert abs(ml.estimates[-1] - 0.5) <= 3 * ml.se[-1]
