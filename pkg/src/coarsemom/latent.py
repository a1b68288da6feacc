"""Latent error correlations recovered from in-between covariances.

For a pair of equations (k, k') and a candidate latent correlation rho, the
in-between covariance that rho would produce on the fitted individual grids
is

    f(rho) = (1/N) sum_i E_rho[ e_{i,k} * e_{i,k'} ],

where each generalized residual is the marginal truncated mean of the cell
its coordinate falls in. f is increasing in rho, so the latent correlation is
the root of f(rho) = observed in-between covariance.

Two evaluation modes:

* ``exact``: the expectation is a finite sum over the J_k x J_k' cells of
  each observation, with cell probabilities from the bivariate normal CDF.
* ``mc``: pairs (e, rho * e + sqrt(1 - rho^2) * eta) are drawn from seeded
  uniform streams; the same draws are reused for every rho (common random
  numbers), which keeps the simulated f monotone along the search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import brentq

from . import gauss
from .datagen import uniform_stream
from .model import Dataset, Design, ModelSpec


@dataclass(frozen=True)
class PairGrids:
    """Individual grids of N observations for two equations.

    Observation i sees the edges ``cuts_a - shift_a[i]`` in the first
    equation and ``cuts_b - shift_b[i]`` in the second.
    """

    cuts_a: np.ndarray
    cuts_b: np.ndarray
    shift_a: np.ndarray
    shift_b: np.ndarray

    def __post_init__(self):
        for name in ("cuts_a", "cuts_b", "shift_a", "shift_b"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.shift_a.shape != self.shift_b.shape:
            raise ValueError("both equations need one shift per observation")
        for c in (self.cuts_a, self.cuts_b):
            if c.size == 0 or np.any(np.diff(c) <= 0):
                raise ValueError("grid cut-points must be non-empty and strictly ascending")

    @classmethod
    def common(cls, cuts_a, cuts_b) -> "PairGrids":
        """A single observation with an unshifted grid (as in a grid table)."""
        return cls(np.asarray(cuts_a, float), np.asarray(cuts_b, float), np.zeros(1), np.zeros(1))

    @property
    def n_obs(self) -> int:
        return self.shift_a.size

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_obs
        inf = np.full((n, 1), np.inf)
        ea = np.hstack([-inf, self.cuts_a[None, :] - self.shift_a[:, None], inf])
        eb = np.hstack([-inf, self.cuts_b[None, :] - self.shift_b[:, None], inf])
        return ea, eb


def _cell_means(edges: np.ndarray) -> np.ndarray:
    # unobserved cells may carry no mass at all; they enter f with weight 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        _, means = gauss._interval_mass_and_mean(edges[:, :-1], edges[:, 1:])
    return np.where(np.isfinite(means), means, 0.0)


class BetweenCovFunction:
    """f(rho) for one pair of grids, with the rho-free pieces precomputed."""

    def __init__(self, grids: PairGrids, mode: str = "exact", n_draws_per_obs: int = 10, seed: int = 0):
        if mode not in ("exact", "mc"):
            raise ValueError(f"unknown mode {mode!r}")
        self.grids = grids
        self.mode = mode
        self.ea, self.eb = grids.edges()
        self.ma = _cell_means(self.ea)
        self.mb = _cell_means(self.eb)
        self.n_evals = 0
        if mode == "mc":
            if n_draws_per_obs < 1:
                raise ValueError("need at least one draw per observation")
            shape = (grids.n_obs, int(n_draws_per_obs))
            size = shape[0] * shape[1]
            self.eps = gauss.special.ndtri(uniform_stream(seed, 0, size)).reshape(shape)
            self.eta = gauss.special.ndtri(uniform_stream(seed, 1, size)).reshape(shape)
            # first coordinate does not depend on rho: locate its cells once
            self.cell_a = (self.eps[:, :, None] > self.ea[:, None, 1:-1]).sum(axis=2)
            self.val_a = np.take_along_axis(self.ma, self.cell_a, axis=1)

    def __call__(self, rho: float) -> float:
        if not abs(rho) < 1.0:
            raise ValueError("correlation must satisfy |rho| < 1")
        self.n_evals += 1
        if self.mode == "exact":
            return self._exact(rho)
        return self._mc(rho)

    def _exact(self, rho: float) -> float:
        ea, eb = self.ea, self.eb
        F = gauss.bvn_cdf(ea[:, :, None], eb[:, None, :], rho)
        P = F[:, 1:, 1:] - F[:, :-1, 1:] - F[:, 1:, :-1] + F[:, :-1, :-1]
        per_obs = np.einsum("ia,iab,ib->i", self.ma, P, self.mb)
        return float(per_obs.mean())

    def _mc(self, rho: float) -> float:
        second = rho * self.eps + math.sqrt(1.0 - rho * rho) * self.eta
        cell_b = (second[:, :, None] > self.eb[:, None, 1:-1]).sum(axis=2)
        val_b = np.take_along_axis(self.mb, cell_b, axis=1)
        return float((self.val_a * val_b).mean())


def simulate_between_cov(grids: PairGrids, rho: float, n_draws_per_obs: int = 10, seed: int = 0, mode: str = "exact") -> float:
    return BetweenCovFunction(grids, mode, n_draws_per_obs, seed)(rho)


@dataclass(frozen=True)
class MatchOptions:
    mode: str = "exact"
    n_draws_per_obs: int = 10
    seed: int = 0
    f_tol: float | None = None
    rho_tol: float = 1e-6
    boundary: float = 1e-4

    @property
    def value_tol(self) -> float:
        if self.f_tol is not None:
            return self.f_tol
        return 5e-4 if self.mode == "mc" else 1e-12


@dataclass
class MatchResult:
    rho_hat: float
    target_between: float
    achieved_between: float
    n_draws: int
    bracket_iterations: int
    attained: bool = True
    message: str = ""


def match_rho(grids: PairGrids, target_between: float, opts: MatchOptions | None = None) -> MatchResult:
    """Latent correlation whose implied in-between covariance equals the target."""
    opts = opts or MatchOptions()
    f = BetweenCovFunction(grids, opts.mode, opts.n_draws_per_obs, opts.seed)
    n_draws = grids.n_obs * (opts.n_draws_per_obs if opts.mode == "mc" else 0)
    lo, hi = -1.0 + opts.boundary, 1.0 - opts.boundary
    f_lo, f_hi = f(lo) - target_between, f(hi) - target_between
    if f_lo > 0.0 or f_hi < 0.0:
        rho = lo if f_lo > 0.0 else hi
        return MatchResult(
            rho, target_between, f(rho), n_draws, 0, attained=False,
            message="target outside the attainable range; boundary value reported",
        )

    if opts.mode == "exact":
        rho, info = brentq(
            lambda r: f(r) - target_between, lo, hi, xtol=min(opts.rho_tol, 1e-12), full_output=True
        )
        value = f(rho)
        return MatchResult(float(rho), target_between, value, n_draws, info.iterations)

    it = 0
    mid, value = 0.0, f(0.0)
    while hi - lo > opts.rho_tol:
        it += 1
        mid = 0.5 * (lo + hi)
        value = f(mid)
        gap = value - target_between
        if abs(gap) <= opts.value_tol:
            break
        if gap < 0.0:
            lo = mid
        else:
            hi = mid
    return MatchResult(float(mid), target_between, value, n_draws, it)


@dataclass
class LatentCov:
    """Matched latent correlation matrix with per-pair diagnostics."""

    matrix: np.ndarray
    matches: dict[tuple[int, int], MatchResult] = field(default_factory=dict)
    failures: list[tuple[int, int]] = field(default_factory=list)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -1e-12


def pair_grids(design: Design, beta, cutpoints, k: int, kk: int) -> PairGrids:
    xb = design.index(beta)
    return PairGrids(cutpoints[k], cutpoints[kk], xb[:, k], xb[:, kk])


def full_correlation_matrix(spec: ModelSpec, data: Dataset, fit, opts: MatchOptions | None = None) -> LatentCov:
    """Match every off-diagonal in-between covariance of a fit to a latent correlation."""
    opts = opts or MatchOptions()
    design = Design.build(spec, data)
    params = fit.params
    K = spec.n_equations
    out = np.eye(K)
    result = LatentCov(out)
    for k in range(K):
        for kk in range(k + 1, K):
            grids = pair_grids(design, params.beta, params.cutpoints, k, kk)
            try:
                m = match_rho(grids, float(params.between_cov[k, kk]), opts)
            except (ArithmeticError, ValueError) as exc:
                m = MatchResult(np.nan, float(params.between_cov[k, kk]), np.nan, 0, 0, False, str(exc))
            if not m.attained:
                result.failures.append((k, kk))
            out[k, kk] = out[kk, k] = m.rho_hat
            result.matches[(k, kk)] = m
    return result


def table_a1(cuts_a, cuts_b, rhos, n: int = 10_000, seed: int = 0, mode: str = "exact") -> list[tuple[float, float]]:
    """(rho, in-between covariance) rows for one fixed pair of grids."""
    grids = PairGrids.common(cuts_a, cuts_b)
    f = BetweenCovFunction(grids, mode, n, seed)
    return [(float(r), f(float(r))) for r in rhos]
