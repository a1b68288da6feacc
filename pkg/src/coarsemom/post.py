"""Statistics computed from a finished fit.

Polychoric correlations, McKelvey-Zavoina R^2, Pearson correlations of
coded responses, and the standard errors GLS would have on exact data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Dataset, Design, ModelSpec


@dataclass
class PolychoricReport:
    sigma_yy: np.ndarray
    corr_yy: np.ndarray
    structural: np.ndarray
    error: np.ndarray


def _centered_index(design: Design, beta) -> np.ndarray:
    xb = design.index(beta)
    return xb - xb.mean(axis=0)


def polychoric_matrix(spec: ModelSpec, data: Dataset, fit, latent_cov) -> PolychoricReport:
    """Latent-response covariance B' S_xx B + Sigma_ee and its correlations.

    The structural part is the sample cross-moment of the equations' fitted
    indices, so equations with different regressor sets are handled directly.
    """
    design = Design.build(spec, data)
    s = _centered_index(design, fit.params.beta)
    structural = s.T @ s / design.n_obs
    error = np.asarray(getattr(latent_cov, "matrix", latent_cov), dtype=float)
    sigma = structural + error
    sd = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return PolychoricReport(sigma, corr, structural, error)


def mckelvey_zavoina_r2(spec: ModelSpec, data: Dataset, fit, k: int) -> float:
    """s / (s + 1) with s the mean squared (centered) fitted index of equation k."""
    design = Design.build(spec, data)
    s = float(np.mean(_centered_index(design, fit.params.beta)[:, k] ** 2))
    return s / (s + 1.0)


def pearson_coded(data: Dataset, codes: Sequence[Sequence[float]] | None = None, responses: Sequence[str] | None = None) -> np.ndarray:
    """Pearson correlations after mapping category j of item k to ``codes[k][j-1]``.

    Without codes the categories are scored 0, 1, ..., J_k - 1 from the
    observed maximum.
    """
    names = list(responses or data.response_names)
    Y = np.column_stack([data.response(n) for n in names]).astype(np.int64)
    if codes is None:
        codes = [np.arange(Y[:, k].max()) for k in range(Y.shape[1])]
    scored = np.empty(Y.shape, dtype=float)
    for k, c in enumerate(codes):
        c = np.asarray(c, dtype=float)
        if Y[:, k].max() > c.size:
            raise ValueError(f"item {names[k]!r}: {c.size} codes for {Y[:, k].max()} categories")
        scored[:, k] = c[Y[:, k] - 1]
    if np.any(scored.std(axis=0) == 0.0):
        raise ValueError("a coded item has zero variance")
    return np.corrcoef(scored, rowvar=False)


def exact_data_se(spec: ModelSpec, data: Dataset, latent_cov) -> np.ndarray:
    """Coefficient standard errors GLS would give on uncoarsened responses.

    Square roots of the diagonal of (1/N) [ (1/N) sum_i X_i' inv(Sigma) X_i ]^{-1},
    with X_i the K x P design of observation i.
    """
    design = Design.build(spec, data)
    sigma = np.asarray(getattr(latent_cov, "matrix", latent_cov), dtype=float)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("latent covariance is not positive definite") from None
    W = np.linalg.inv(sigma)
    n, P = design.n_obs, design.n_coef
    info = np.zeros((P, P))
    for k in range(design.n_equations):
        for kk in range(design.n_equations):
            block = W[k, kk] * design.blocks[k].T @ design.blocks[kk] / n
            np.add.at(info, (design.slots[k][:, None], design.slots[kk][None, :]), block)
    return np.sqrt(np.diag(np.linalg.inv(info)) / n)
