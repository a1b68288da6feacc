"""Cut-point estimation from the binarized (at most j / above j) moment equations."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from . import gauss
from .gauss import DegenerateProbabilityError
from .model import Dataset, Design, ModelSpec


class BracketError(RuntimeError):
    pass


class CutpointOrderError(RuntimeError):
    pass


def _cut_moment(index: np.ndarray, below: np.ndarray, nu: float) -> float:
    c = nu - index
    return (gauss.lower_mills(c[below]).sum() + gauss.upper_mills(c[~below]).sum()) / len(c)


def cut_moment(spec: ModelSpec, data: Dataset, beta, k: int, j: int, nu: float) -> float:
    """Average binarized residual for the split "category <= j" in equation k."""
    design = Design.build(spec, data)
    return _cut_moment(design.index(beta)[:, k], design.responses[:, k] <= j, nu)


def _solve_one(index: np.ndarray, below: np.ndarray, tol: float, where: dict) -> float:
    if below.all() or not below.any():
        raise BracketError(f"no sign change possible: split is one-sided {where}")

    def f(nu):
        return _cut_moment(index, below, nu)

    lo, hi, width = -10.0, 10.0, 10.0
    for _ in range(60):
        try:
            f_lo, f_hi = f(lo), f(hi)
        except DegenerateProbabilityError:
            break
        if f_lo < 0.0 < f_hi:
            return brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
        if f_lo == 0.0:
            return lo
        if f_hi == 0.0:
            return hi
        width *= 2.0
        if f_lo >= 0.0:
            lo -= width
        if f_hi <= 0.0:
            hi += width
    raise BracketError(f"could not bracket the cut-point root {where}")


def solve_cutpoints_design(design: Design, beta, tol: float = 1e-12) -> list[np.ndarray]:
    xb = design.index(beta)
    out = []
    for k, J in enumerate(design.n_categories):
        y = design.responses[:, k]
        roots = np.array(
            [_solve_one(xb[:, k], y <= j, tol, {"equation": k, "cut": j}) for j in range(1, J)]
        )
        if np.any(np.diff(roots) <= 0.0):
            raise CutpointOrderError(f"equation {k}: solved cut-points not ascending: {roots}")
        out.append(roots)
    return out


def solve_cutpoints(spec: ModelSpec, data: Dataset, beta, tol: float = 1e-12) -> list[np.ndarray]:
    """Root of every cut-point equation at fixed coefficients."""
    return solve_cutpoints_design(Design.build(spec, data), beta, tol)


def share_quantiles(design: Design) -> list[np.ndarray]:
    """Closed-form cut-points at beta = 0: normal quantiles of cumulative shares."""
    out = []
    for k, J in enumerate(design.n_categories):
        counts = np.bincount(design.responses[:, k], minlength=J + 1)[1:]
        cum = np.cumsum(counts)[:-1] / design.n_obs
        out.append(np.asarray(gauss.std_quantile(cum), dtype=float).reshape(-1))
    return out
