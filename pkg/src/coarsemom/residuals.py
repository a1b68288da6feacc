"""Generalized residuals, binarized residuals and stacked moment vectors.

The stacked moment vector of observation i has two blocks:

* coefficient block (length P): for free coefficient g, the sum over the
  (equation, regressor) slots tied to g of ``x_{i,k,m} * w_{i,k}``, where
  ``w_i = inv(between_cov) @ e_i`` and ``e_i`` are the generalized residuals;
* cut-point block (length Q = sum_k (J_k - 1)): for cut-point (k, j) the
  lower Mills residual at ``nu_{k,j} - x'b`` when the response is at most j,
  else the upper one. This block is never weighted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gauss
from .gauss import DegenerateProbabilityError
from .model import Dataset, Design, ModelSpec, ParamSet, individual_grid


@dataclass(frozen=True)
class MomentLayout:
    n_beta: int
    n_cut: int
    labels: tuple[str, ...]
    beta_slots: tuple[tuple[int, ...], ...]
    cut_offsets: tuple[int, ...]

    @classmethod
    def build(cls, spec: ModelSpec) -> "MomentLayout":
        slots, coef_labels = spec.coefficient_groups()
        p = len(coef_labels)
        offsets, labels, pos = [], list(coef_labels), p
        for eq in spec.equations:
            offsets.append(pos)
            for j in range(1, eq.n_categories):
                labels.append(f"{eq.response}: cut {j}")
            pos += eq.n_categories - 1
        return cls(p, pos - p, tuple(labels), tuple(tuple(s) for s in slots), tuple(offsets))

    @property
    def size(self) -> int:
        return self.n_beta + self.n_cut

    def beta_position(self, k: int, m: int) -> int:
        return self.beta_slots[k][m]

    def cut_position(self, k: int, j: int) -> int:
        """Stacked position of cut-point j (1-based) of equation k."""
        return self.cut_offsets[k] + j - 1


def lower_residual(cut, index):
    """E[e | e <= cut - index] for e ~ N(0, 1)."""
    return gauss.lower_mills(np.asarray(cut, float) - index)


def upper_residual(cut, index):
    """E[e | e > cut - index] for e ~ N(0, 1)."""
    return gauss.upper_mills(np.asarray(cut, float) - index)


def _locate_degenerate(lo, hi):
    """First (i, k) whose interval mass is below 1e-300."""
    with np.errstate(divide="ignore"):
        log_mass, _ = gauss._interval_mass_and_mean(lo, hi)
    bad = np.argwhere(~(log_mass >= np.log(1e-300)))
    return tuple(int(v) for v in bad[0]) if len(bad) else None


def residual_matrix(design: Design, beta, cutpoints) -> np.ndarray:
    """Generalized residuals of every observation and equation (N x K)."""
    lo, hi = design.grid_bounds(beta, cutpoints)
    try:
        return gauss.trunc_mean(lo, hi)
    except DegenerateProbabilityError:
        i, k = _locate_degenerate(lo, hi)
        raise DegenerateProbabilityError(
            "generalized residual undefined: interval probability below 1e-300",
            {"obs": i, "equation": k, "category": int(design.responses[i, k])},
        ) from None


def generalized_residual(spec: ModelSpec, data: Dataset, params: ParamSet, i: int, k: int) -> float:
    iv = individual_grid(spec, data, params, i, k)
    try:
        return gauss.trunc_mean(iv.lower, iv.upper)
    except DegenerateProbabilityError:
        raise DegenerateProbabilityError(
            "generalized residual undefined: interval probability below 1e-300",
            {"obs": i, "equation": k},
        ) from None


def _cut_block(design: Design, xb: np.ndarray, cutpoints) -> np.ndarray:
    cols = []
    for k, cuts in enumerate(cutpoints):
        y = design.responses[:, k]
        for j, nu in enumerate(cuts, start=1):
            c = nu - xb[:, k]
            below = y <= j
            col = np.empty(len(c))
            try:
                col[below] = gauss.lower_mills(c[below])
                col[~below] = gauss.upper_mills(c[~below])
            except DegenerateProbabilityError:
                raise DegenerateProbabilityError(
                    "binarized residual undefined", {"equation": k, "cut": j}
                ) from None
            cols.append(col)
    if not cols:
        return np.zeros((design.n_obs, 0))
    return np.column_stack(cols)


def _weight(between_cov: np.ndarray) -> np.ndarray:
    try:
        np.linalg.cholesky(between_cov)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("in-between covariance is not positive definite") from None
    return np.linalg.inv(between_cov)


def moment_matrix(design: Design, params: ParamSet) -> np.ndarray:
    """Per-observation stacked moments, N x (P + Q)."""
    weight = _weight(params.between_cov)
    e = residual_matrix(design, params.beta, params.cutpoints)
    xb = design.index(params.beta)
    beta_block = design.scatter(e @ weight)
    return np.hstack([beta_block, _cut_block(design, xb, params.cutpoints)])


def mean_moments(design: Design, params: ParamSet) -> np.ndarray:
    return moment_matrix(design, params).mean(axis=0)


def moment_vector(spec: ModelSpec, data: Dataset, params: ParamSet, layout: MomentLayout, i: int) -> np.ndarray:
    design = Design.build(spec, data.subset(slice(i, i + 1)))
    vec = moment_matrix(design, params)[0]
    assert vec.size == layout.size
    return vec


def between_cov(design: Design, beta, cutpoints) -> np.ndarray:
    e = residual_matrix(design, beta, cutpoints)
    out = e.T @ e / design.n_obs
    return (out + out.T) / 2.0


def moment_jacobian(design: Design, params: ParamSet) -> np.ndarray:
    """Analytic derivative of the averaged moments w.r.t. theta, (P+Q) x (P+Q).

    Used by the Newton solvers. The weight matrix is held fixed.
    """
    n, K, P = design.n_obs, design.n_equations, design.n_coef
    weight = _weight(params.between_cov)
    lo, hi = design.grid_bounds(params.beta, params.cutpoints)
    _, d_lo, d_hi = gauss.interval_partials(lo, hi)
    slope = -(d_lo + d_hi)
    xb = design.index(params.beta)

    Q = sum(len(c) for c in params.cutpoints)
    offsets = np.cumsum([0] + [len(c) for c in params.cutpoints])
    jac = np.zeros((P + Q, P + Q))

    # d(beta block)/d(beta)
    for k in range(K):
        Xk, sk = design.blocks[k], design.slots[k]
        for kk in range(K):
            if weight[k, kk] == 0.0:
                continue
            Xkk, skk = design.blocks[kk], design.slots[kk]
            block = (Xk * (weight[k, kk] * slope[:, kk])[:, None]).T @ Xkk / n
            np.add.at(jac, (sk[:, None], skk[None, :]), block)

    # d(beta block)/d(cut-points): residual of equation kk moves with its two edges
    for kk in range(K):
        y = design.responses[:, kk]
        for j in range(1, len(params.cutpoints[kk]) + 1):
            # cut j is the upper edge for category j and the lower edge for j + 1
            de = np.where(y == j, d_hi[:, kk], 0.0) + np.where(y == j + 1, d_lo[:, kk], 0.0)
            col = P + offsets[kk] + j - 1
            for k in range(K):
                if weight[k, kk] == 0.0:
                    continue
                contrib = design.blocks[k].T @ (weight[k, kk] * de) / n
                np.add.at(jac[:, col], design.slots[k], contrib)

    # cut-point block
    for k, cuts in enumerate(params.cutpoints):
        y = design.responses[:, k]
        for j, nu in enumerate(cuts, start=1):
            c = nu - xb[:, k]
            below = y <= j
            d = np.empty(n)
            d[below] = gauss.lower_mills_slope(c[below])
            d[~below] = gauss.upper_mills_slope(c[~below])
            row = P + offsets[k] + j - 1
            jac[row, row] = d.mean()
            np.add.at(jac[row], design.slots[k], -(design.blocks[k].T @ d) / n)
    return jac


def numeric_jacobian(design: Design, params: ParamSet, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of the averaged moment vector.

    Step for parameter t is ``step * max(1, |theta_t|)``.
    """
    theta = params.theta
    cols = []
    for t in range(theta.size):
        h = step * max(1.0, abs(theta[t]))
        up, dn = theta.copy(), theta.copy()
        up[t] += h
        dn[t] -= h
        g_up = mean_moments(design, _unchecked(params, up))
        g_dn = mean_moments(design, _unchecked(params, dn))
        cols.append((g_up - g_dn) / (2.0 * h))
    return np.column_stack(cols)


def _unchecked(params: ParamSet, theta: np.ndarray) -> ParamSet:
    """ParamSet from theta without the ascending-order check.

    Finite-difference probes may momentarily tie two nearly equal cut-points.
    """
    out = ParamSet.__new__(ParamSet)
    p = params.beta.size
    out.beta = theta[:p].copy()
    cuts, pos = [], p
    for c in params.cutpoints:
        cuts.append(theta[pos : pos + c.size].copy())
        pos += c.size
    out.cutpoints = cuts
    out.between_cov = params.between_cov
    return out
