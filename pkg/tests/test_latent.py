import math

import numpy as np
import pytest

from coarsemom.datagen import Column, DgpConfig, EquationDgp, generate
from coarsemom.engine import fit
from coarsemom.latent import (
    BetweenCovFunction,
    MatchOptions,
    PairGrids,
    full_correlation_matrix,
    match_rho,
    simulate_between_cov,
)

MEDIAN = PairGrids.common([0.0], [0.0])
TABLE_A1_GRIDS = [([-0.5, 0.0, 0.75], [-0.75, -0.5, 0.5]), ([0.0], [0.0]), ([-1.0, 2.0], [-2.0, 1.0])]
RHOS = np.arange(1, 10) / 10


def arcsin_law(r):
    return 4 / math.pi**2 * math.asin(r)


class TestBetweenCovFunction:
    @pytest.mark.parametrize("r", [-0.9, -0.3, 0.1, 0.5, 0.95])
    def test_median_split_closed_form(self, r):
        assert simulate_between_cov(MEDIAN, r, mode="exact") == pytest.approx(arcsin_law(r), abs=1e-12)

    def test_median_split_value(self):
        assert simulate_between_cov(MEDIAN, 0.5, mode="exact") == pytest.approx(0.2122, abs=1e-4)

    def test_mc_median_split(self):
        v = simulate_between_cov(MEDIAN, 0.5, n_draws_per_obs=10_000, seed=0, mode="mc")
        # products take values +-2/pi: MC s.e. is at most (2/pi)/sqrt(n)
        assert abs(v - arcsin_law(0.5)) <= 4 * (2 / math.pi) / 100
        assert abs(v - 0.224) <= 0.02

    def test_zero_rho(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            g = PairGrids(np.sort(rng.normal(size=3)), np.sort(rng.normal(size=2)), rng.normal(size=50), rng.normal(size=50))
            assert abs(BetweenCovFunction(g, "exact")(0.0)) <= 1e-14
            f = BetweenCovFunction(g, "mc", 200, 3)
            prod = f.val_a * np.take_along_axis(f.mb, (f.eta[:, :, None] > f.eb[:, None, 1:-1]).sum(axis=2), axis=1)
            assert abs(f(0.0)) <= 4 * prod.std() / math.sqrt(prod.size)

    def test_domain(self):
        with pytest.raises(ValueError):
            simulate_between_cov(MEDIAN, 1.0)

    @staticmethod
    def _random_grids(n_obs=20):
        rng = np.random.default_rng(2024)
        for t in range(50):
            na, nb = rng.integers(1, 5, size=2)
            ca = np.sort(rng.uniform(-2, 2, na)) + np.arange(na) * 1e-3
            cb = np.sort(rng.uniform(-2, 2, nb)) + np.arange(nb) * 1e-3
            yield t, PairGrids(ca, cb, rng.normal(0, 0.7, n_obs), rng.normal(0, 0.7, n_obs))

    def test_monotone_on_random_grids_exact(self):
        for t, g in self._random_grids():
            f = BetweenCovFunction(g, "exact")
            assert np.all(np.diff([f(r) for r in RHOS]) > 0), t
            assert np.all(np.diff([f(r) for r in np.linspace(-0.9, 0.9, 9)]) > 0), t

    def test_monotone_on_random_grids_common_random_numbers(self):
        # 10,000 draws per grid (500 per observation), the size used for grid tables
        reversed_grids = []
        for t, g in self._random_grids():
            f = BetweenCovFunction(g, "mc", 500, t)
            if np.any(np.diff([f(r) for r in RHOS]) < 0):
                reversed_grids.append(t)
        assert not reversed_grids, f"simulated f decreases somewhere on grids {reversed_grids}"

    def test_odd_for_symmetric_grids(self):
        g = PairGrids.common([-1.0, 0.0, 1.0], [-0.4, 0.4])
        f = BetweenCovFunction(g, "exact")
        for r in (0.2, 0.6, 0.9):
            assert f(-r) == pytest.approx(-f(r), abs=1e-14)

    def test_information_loss(self):
        for a, b in TABLE_A1_GRIDS:
            f = BetweenCovFunction(PairGrids.common(a, b), "exact")
            for r in RHOS:
                assert abs(f(r)) <= abs(r)


class TestMatch:
    def test_inverts_closed_form_exact(self):
        m = match_rho(MEDIAN, arcsin_law(0.5))
        assert m.rho_hat == pytest.approx(0.5, abs=1e-6)
        assert m.attained

    def test_inverts_closed_form_mc(self):
        m = match_rho(MEDIAN, 0.2122, MatchOptions(mode="mc", n_draws_per_obs=10_000))
        assert m.rho_hat == pytest.approx(0.5, abs=0.01)
        assert abs(m.achieved_between - m.target_between) <= 5e-4 or m.bracket_iterations >= 19

    def test_zero_target(self):
        assert match_rho(MEDIAN, 0.0).rho_hat == pytest.approx(0.0, abs=1e-6)
        m = match_rho(MEDIAN, 0.0, MatchOptions(mode="mc", n_draws_per_obs=10_000))
        # MC s.e. of f is (2/pi)/100 at rho = 0, where df/drho = 4/pi^2
        tol = 4 * (2 / math.pi) / 100 / (4 / math.pi**2) + 1e-6
        assert abs(m.rho_hat) <= tol

    def test_left_panel(self):
        m = match_rho(PairGrids.common(*TABLE_A1_GRIDS[0]), 0.342)
        assert m.rho_hat == pytest.approx(0.5, abs=0.05)

    def test_unattainable(self):
        m = match_rho(MEDIAN, 0.9)
        assert not m.attained
        assert m.rho_hat == pytest.approx(1 - 1e-4)

    def test_achieved_within_tolerance(self):
        m = match_rho(PairGrids.common(*TABLE_A1_GRIDS[2]), 0.1)
        assert abs(m.achieved_between - 0.1) <= 1e-10


class TestFullMatrix:
    def test_two_equation_recovery(self):
        cols = (Column("a"), Column("b", sd=1.2))
        eqs = (EquationDgp("y1", ("a", "b"), (0.7, -0.4), (-0.6, 0.3, 1.0)), EquationDgp("y2", ("a", "b"), (0.2, 0.9), (-0.2, 0.8)))
        cfg = DgpConfig(cols, eqs, np.array([[1.0, 0.5], [0.5, 1.0]]))
        data, _ = generate(cfg, 10_000, 31)
        spec = cfg.model_spec()
        res = fit(spec, data)
        L = full_correlation_matrix(spec, data, res)
        assert L.matrix[0, 1] == pytest.approx(0.5, abs=0.08)
        np.testing.assert_array_equal(np.diag(L.matrix), 1.0)
        np.testing.assert_array_equal(L.matrix, L.matrix.T)
        assert L.is_psd and not L.failures

    def test_5c_structure(self, fit_5c_small):
        spec, data, res = fit_5c_small
        L = full_correlation_matrix(spec, data, res)
        assert np.all(np.abs(L.matrix[np.triu_indices(4, 1)]) < 1)
        np.testing.assert_array_equal(np.diag(L.matrix), 1.0)
