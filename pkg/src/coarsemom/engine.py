"""Iterative method-of-moments estimator for coarsened multivariate linear models.

Stage one holds the in-between covariance at the identity, which makes the
equations separable (equation-by-equation ordered probit). Stage two
re-estimates the in-between covariance from the generalized residuals,
re-solves the weighted coefficient system together with the cut-points, and
repeats until the parameters stop moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .cutpoints import share_quantiles, solve_cutpoints_design
from .model import Dataset, Design, ModelSpec, ParamSet
from .residuals import (
    MomentLayout,
    between_cov,
    mean_moments,
    moment_jacobian,
    moment_matrix,
    numeric_jacobian,
    residual_matrix,
)

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitOptions:
    max_outer_iterations: int = 100
    param_tolerance: float = 1e-8
    moment_tolerance: float = 1e-10
    jacobian_step: float = 1e-6
    weight_mode: str = "identity_first_then_estimated"

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")
        if min(self.param_tolerance, self.moment_tolerance, self.jacobian_step) <= 0:
            raise ValueError("tolerances and the Jacobian step must be positive")
        if self.weight_mode != "identity_first_then_estimated":
            raise ValueError(f"unsupported weight mode {self.weight_mode!r}")


@dataclass
class StageResult:
    params: ParamSet
    n_iterations: int
    converged: bool
    moment_norm: float


@dataclass
class FitResult:
    params: ParamSet
    labels: tuple[str, ...]
    se: np.ndarray
    z: np.ndarray
    sandwich_cov: np.ndarray
    n_iterations: int
    converged: bool
    moment_norm_final: float
    first_stage: ParamSet | None = None
    first_stage_se: np.ndarray | None = None
    timing: dict = field(default_factory=dict)
    message: str = ""

    @property
    def between_cov(self) -> np.ndarray:
        return self.params.between_cov

    @property
    def estimates(self) -> np.ndarray:
        return self.params.theta


def _norm(g: np.ndarray) -> float:
    return float(np.sqrt(np.dot(g, g)))


def _beta_moments(design: Design, beta, cutpoints, weight) -> np.ndarray:
    e = residual_matrix(design, beta, cutpoints)
    return design.scatter(e @ weight).mean(axis=0)


def _beta_jacobian(design: Design, beta, cutpoints, between) -> np.ndarray:
    params = ParamSet.__new__(ParamSet)
    params.beta, params.cutpoints, params.between_cov = beta, cutpoints, between
    P = design.n_coef
    # only the coefficient block is needed; build it from the full analytic form
    return moment_jacobian(design, params)[:P, :P]


def solve_beta_design(design: Design, cutpoints, between, beta0=None, tol: float = 1e-10, max_iter: int = 100):
    """Damped Newton on the weighted coefficient moments at fixed cut-points."""
    weight = np.linalg.inv(between)
    beta = np.zeros(design.n_coef) if beta0 is None else np.array(beta0, dtype=float)
    g = _beta_moments(design, beta, cutpoints, weight)
    norm = _norm(g)
    for _ in range(max_iter):
        if norm <= tol:
            return beta, True
        jac = _beta_jacobian(design, beta, cutpoints, between)
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(jac, g, rcond=None)[0]
        t = 1.0
        while t > 1e-8:
            cand = beta + t * step
            try:
                g_new = _beta_moments(design, cand, cutpoints, weight)
                new_norm = _norm(g_new)
            except ArithmeticError:
                new_norm = np.inf
            if new_norm < norm or (new_norm <= tol):
                break
            t /= 2.0
        else:
            log.warning("coefficient Newton step stalled at moment norm %.3g", norm)
            return beta, norm <= tol
        beta, g, norm = cand, g_new, new_norm
    return beta, norm <= tol


def solve_beta(spec: ModelSpec, data: Dataset, cutpoints, between_cov, beta0=None) -> np.ndarray:
    beta, ok = solve_beta_design(Design.build(spec, data), cutpoints, np.asarray(between_cov, float), beta0)
    if not ok:
        raise ConvergenceError("coefficient system did not converge")
    return beta


def _joint_newton(design: Design, params: ParamSet, tol: float, max_iter: int = 50) -> tuple[ParamSet, bool]:
    """Newton on the full stacked system; polishes an alternation iterate."""
    g = mean_moments(design, params)
    norm = _norm(g)
    for _ in range(max_iter):
        if norm <= tol:
            return params, True
        step = np.linalg.solve(moment_jacobian(design, params), -g)
        t = 1.0
        while t > 1e-8:
            try:
                cand = params.with_theta(params.theta + t * step)
                g_new = mean_moments(design, cand)
                new_norm = _norm(g_new)
            except (ArithmeticError, ValueError):
                new_norm = np.inf
            if new_norm < norm:
                break
            t /= 2.0
        else:
            return params, norm <= tol
        params, g, norm = cand, g_new, new_norm
    return params, norm <= tol


def solve_system(design: Design, params: ParamSet, options: FitOptions) -> StageResult:
    """Alternate cut-point and coefficient solves at fixed in-between covariance.

    Each round solves every cut-point equation at the current coefficients,
    then the weighted coefficient system at those cut-points. Rounds stop when
    the largest parameter change is below ``max(param_tolerance, 1e-6)``:
    alternation converges linearly, so it only has to hand a close iterate to
    the joint Newton pass, which drives the averaged moments below
    ``moment_tolerance``. The outer loop in ``fit`` applies ``param_tolerance``
    itself.
    """
    params = params.copy()
    converged = False
    it = 0
    for it in range(1, options.max_outer_iterations + 1):
        old = params.theta
        cuts = solve_cutpoints_design(design, params.beta)
        beta, _ = solve_beta_design(design, cuts, params.between_cov, params.beta, tol=options.moment_tolerance)
        params = ParamSet(beta, cuts, params.between_cov)
        change = float(np.max(np.abs(params.theta - old)))
        if change <= max(options.param_tolerance, 1e-6):
            converged = True
            break
    if converged:
        params, converged = _joint_newton(design, params, options.moment_tolerance)
    norm = _norm(mean_moments(design, params))
    return StageResult(params, it, converged and norm <= options.moment_tolerance, norm)


def sandwich_cov_design(design: Design, params: ParamSet, step: float = 1e-6) -> np.ndarray:
    """Exactly identified GMM variance  G^{-1} S G^{-T} / N."""
    n = design.n_obs
    G = numeric_jacobian(design, params, step)
    M = moment_matrix(design, params)
    S = M.T @ M / n
    try:
        G_inv = np.linalg.inv(G)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("moment Jacobian is singular; sandwich undefined") from None
    V = G_inv @ S @ G_inv.T / n
    return (V + V.T) / 2.0


def sandwich_cov(spec: ModelSpec, data: Dataset, params: ParamSet, layout: MomentLayout | None = None, step: float = 1e-6) -> np.ndarray:
    return sandwich_cov_design(Design.build(spec, data), params, step)


def estimate_between_cov(spec: ModelSpec, data: Dataset, params: ParamSet) -> np.ndarray:
    return between_cov(Design.build(spec, data), params.beta, params.cutpoints)


def _se(V: np.ndarray) -> np.ndarray:
    return np.sqrt(np.clip(np.diag(V), 0.0, None))


def fit(spec: ModelSpec, data: Dataset, options: FitOptions | None = None) -> FitResult:
    options = options or FitOptions()
    design = Design.build(spec, data)
    layout = MomentLayout.build(spec)
    K = spec.n_equations
    timing = {}

    t0 = time.perf_counter()
    params = ParamSet(np.zeros(design.n_coef), share_quantiles(design), np.eye(K))
    first = solve_system(design, params, options)
    first_se = _se(sandwich_cov_design(design, first.params, options.jacobian_step))
    timing["first_stage"] = time.perf_counter() - t0
    log.info("first stage: %d rounds, moment norm %.2e", first.n_iterations, first.moment_norm)

    t0 = time.perf_counter()
    params = first.params
    stage = first
    converged = False
    n_iter = first.n_iterations
    best = first
    for outer in range(1, options.max_outer_iterations + 1):
        cov = between_cov(design, params.beta, params.cutpoints)
        stage = solve_system(design, ParamSet(params.beta, params.cutpoints, cov), options)
        n_iter += stage.n_iterations
        change = float(np.max(np.abs(stage.params.theta - params.theta)))
        params = stage.params
        if stage.converged or stage.moment_norm < best.moment_norm:
            best = stage
        log.info("outer %d: change %.2e, moment norm %.2e", outer, change, stage.moment_norm)
        if outer > 1 and change <= options.param_tolerance and stage.converged:
            converged = True
            break
    if not converged:
        params = best.params
    timing["second_stage"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    V = sandwich_cov_design(design, params, options.jacobian_step)
    timing["sandwich"] = time.perf_counter() - t0
    se = _se(V)
    theta = params.theta
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, theta / se, np.nan)
    norm = _norm(mean_moments(design, params))
    message = "converged" if converged else "iteration limit reached before convergence"
    return FitResult(
        params=params,
        labels=layout.labels,
        se=se,
        z=z,
        sandwich_cov=V,
        n_iterations=n_iter,
        converged=converged,
        moment_norm_final=norm,
        first_stage=first.params,
        first_stage_se=first_se,
        timing=timing,
        message=message,
    )


def first_stage(spec: ModelSpec, data: Dataset, options: FitOptions | None = None) -> StageResult:
    """Stage one only: identity weight, i.e. independent ordered-probit moments."""
    options = options or FitOptions()
    design = Design.build(spec, data)
    params = ParamSet(np.zeros(design.n_coef), share_quantiles(design), np.eye(spec.n_equations))
    return solve_system(design, params, options)
