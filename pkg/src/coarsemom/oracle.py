"""Reference maximum-likelihood fits: ordered probit (one equation) and
bivariate ordered probit (two equations).

These exist to check the moment estimator and share nothing with it beyond
the Gaussian kernels. Gradients and Hessians are finite differences on
purpose; the code favours being obviously right over being fast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import gauss
from .gauss import DegenerateProbabilityError
from .model import Dataset


@dataclass
class OracleFit:
    estimates: np.ndarray
    labels: list[str]
    se: np.ndarray
    loglik: float
    converged: bool
    grad_norm: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "estimates": [float(v) for v in self.estimates],
            "se": [float(v) for v in self.se],
            "loglik": float(self.loglik),
            "converged": bool(self.converged),
            "grad_norm": float(self.grad_norm),
            **{k: v for k, v in self.extra.items()},
        }


def _cell_prob(lo, hi):
    """Phi(hi) - Phi(lo), taking the difference in whichever tail is smaller."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    right = lo > 0
    return np.where(right, gauss.std_sf(lo) - gauss.std_sf(hi), gauss.std_cdf(hi) - gauss.std_cdf(lo))


def _design(data: Dataset, regressors: Sequence[str] | None) -> np.ndarray:
    names = list(regressors) if regressors is not None else list(data.regressor_names)
    return data.regressors[:, [data.regressor_names.index(n) for n in names]]


def _edges(cutpoints) -> np.ndarray:
    return np.concatenate([[-np.inf], np.asarray(cutpoints, float), [np.inf]])


def _op_loglik(X, y, beta, cutpoints) -> float:
    if np.any(np.diff(cutpoints) <= 0):
        return -np.inf
    xb = X @ beta
    e = _edges(cutpoints)
    p = _cell_prob(e[y - 1] - xb, e[y] - xb)
    if np.any(~(p >= 1e-300)):
        raise DegenerateProbabilityError("ordered probit cell probability below 1e-300")
    return float(np.log(p).sum())


def op_loglik(data: Dataset, beta, cutpoints, k: int, regressors: Sequence[str] | None = None) -> float:
    """Ordered-probit log-likelihood of response column k."""
    X = _design(data, regressors)
    y = np.asarray(data.responses[:, k], dtype=np.int64)
    return _op_loglik(X, y, np.asarray(beta, float), np.asarray(cutpoints, float))


# -- generic finite-difference machinery ------------------------------------


def _fd_grad(f, x, h=1e-5):
    g = np.empty(x.size)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (f(up) - f(dn)) / (2.0 * step)
    return g


def _fd_hess(f, x, h=1e-4):
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        step = h * max(1.0, abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += step
        dn[i] -= step
        H[:, i] = (_fd_grad(f, up) - _fd_grad(f, dn)) / (2.0 * step)
    return (H + H.T) / 2.0


def _safe(f):
    def wrapped(x):
        try:
            v = f(x)
        except DegenerateProbabilityError:
            return -np.inf
        return v if np.isfinite(v) else -np.inf

    return wrapped


def _maximize(loglik, x0, tol=1e-6, newton_steps=20):
    """BFGS on the mean log-likelihood, then Newton polishing on the total."""
    f = _safe(loglik)
    n_obs_scale = max(1.0, abs(f(x0)))
    res = minimize(lambda x: -f(x) / n_obs_scale, x0, method="BFGS", options={"gtol": 1e-9, "maxiter": 2000})
    x = res.x
    g = _fd_grad(f, x)
    for _ in range(newton_steps):
        if np.linalg.norm(g) <= tol:
            break
        H = _fd_hess(f, x)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        base = f(x)
        t = 1.0
        while t > 1e-6 and not f(x + t * step) >= base - 1e-12:
            t /= 2.0
        x = x + t * step
        g = _fd_grad(f, x)
    return x, f(x), g


# -- ordered probit -----------------------------------------------------------


def _to_cuts(raw):
    """First cut-point free, the rest as log increments."""
    return np.cumsum(np.concatenate([raw[:1], np.exp(raw[1:])]))


def _from_cuts(cuts):
    cuts = np.asarray(cuts, float)
    return np.concatenate([cuts[:1], np.log(np.diff(cuts))])


def _share_cuts(y, J):
    cum = np.cumsum(np.bincount(y, minlength=J + 1)[1:])[:-1] / len(y)
    return gauss.std_quantile(np.clip(cum, 1e-12, 1 - 1e-12))


def op_ml_fit(data: Dataset, k: int, regressors: Sequence[str] | None = None, n_categories: int | None = None) -> OracleFit:
    """Maximum-likelihood ordered probit for response column k."""
    X = _design(data, regressors)
    y = np.asarray(data.responses[:, k], dtype=np.int64)
    J = int(n_categories or y.max())
    M = X.shape[1]

    def ll_raw(z):
        return _op_loglik(X, y, z[:M], _to_cuts(z[M:]))

    z0 = np.concatenate([np.zeros(M), _from_cuts(np.atleast_1d(_share_cuts(y, J)))])
    z, _, _ = _maximize(ll_raw, z0)
    theta = np.concatenate([z[:M], _to_cuts(z[M:])])

    def ll(theta):
        return _op_loglik(X, y, theta[:M], theta[M:])

    return _finish(ll, theta, _op_labels(data, k, regressors, J))


def _op_labels(data, k, regressors, J):
    names = list(regressors) if regressors is not None else list(data.regressor_names)
    resp = data.response_names[k]
    return [f"{resp}: {n}" for n in names] + [f"{resp}: cut {j}" for j in range(1, J)]


def _finish(ll, theta, labels, tol=1e-6, extra=None):
    f = _safe(ll)
    # polish in the natural parameterization so the reported gradient is the real one
    theta, value, g = _maximize(f, theta, tol=tol, newton_steps=10) if np.linalg.norm(_fd_grad(f, theta)) > tol else (theta, f(theta), _fd_grad(f, theta))
    H = _fd_hess(f, theta)
    try:
        cov = np.linalg.inv(-H)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(theta.size, np.nan)
    gn = float(np.linalg.norm(g))
    return OracleFit(theta, labels, se, float(value), bool(gn <= tol and np.isfinite(value)), gn, extra or {})


def constrained_cut_fit(data: Dataset, k: int, n_categories: int | None = None) -> np.ndarray:
    """ML cut-points with all coefficients held at zero."""
    y = np.asarray(data.responses[:, k], dtype=np.int64)
    J = int(n_categories or y.max())
    X = np.zeros((len(y), 0))

    def ll_raw(z):
        return _op_loglik(X, y, np.zeros(0), _to_cuts(z))

    z, _, _ = _maximize(ll_raw, _from_cuts(np.atleast_1d(_share_cuts(y, J))) + 0.1)
    return _to_cuts(z)


# -- bivariate ordered probit -------------------------------------------------


def _biprobit_loglik(X1, X2, y1, y2, b1, b2, c1, c2, rho) -> float:
    if np.any(np.diff(c1) <= 0) or np.any(np.diff(c2) <= 0) or not abs(rho) < 1:
        return -np.inf
    e1, e2 = _edges(c1), _edges(c2)
    s1, s2 = X1 @ b1, X2 @ b2
    p = gauss.bvn_rect_prob(e1[y1 - 1] - s1, e1[y1] - s1, e2[y2 - 1] - s2, e2[y2] - s2, rho)
    if np.any(~(p >= 1e-300)):
        raise DegenerateProbabilityError("bivariate cell probability below 1e-300")
    return float(np.log(p).sum())


def biprobit_loglik(data: Dataset, params: dict, k1: int, k2: int, rho: float, regressors=None) -> float:
    """Bivariate ordered-probit log-likelihood of response columns k1 and k2.

    ``params`` holds ``beta1, beta2, cuts1, cuts2``; ``regressors`` optionally
    gives the two regressor-name lists.
    """
    r1, r2 = regressors if regressors is not None else (None, None)
    X1, X2 = _design(data, r1), _design(data, r2)
    y1 = np.asarray(data.responses[:, k1], np.int64)
    y2 = np.asarray(data.responses[:, k2], np.int64)
    return _biprobit_loglik(
        X1, X2, y1, y2,
        np.asarray(params["beta1"], float), np.asarray(params["beta2"], float),
        np.asarray(params["cuts1"], float), np.asarray(params["cuts2"], float), float(rho),
    )


def biprobit_ml_fit(data: Dataset, k1: int, k2: int, regressors=None) -> OracleFit:
    """Joint ML over both equations' coefficients and cut-points and rho.

    rho is optimized as atanh(rho); the reported estimate and its standard
    error are on the rho scale. The last entry of ``estimates`` is rho.
    """
    r1, r2 = regressors if regressors is not None else (None, None)
    X1, X2 = _design(data, r1), _design(data, r2)
    y1 = np.asarray(data.responses[:, k1], np.int64)
    y2 = np.asarray(data.responses[:, k2], np.int64)
    m1, m2 = X1.shape[1], X2.shape[1]
    J1, J2 = int(y1.max()), int(y2.max())
    q1, q2 = J1 - 1, J2 - 1

    def unpack(theta):
        b1 = theta[:m1]
        b2 = theta[m1 : m1 + m2]
        c1 = theta[m1 + m2 : m1 + m2 + q1]
        c2 = theta[m1 + m2 + q1 : m1 + m2 + q1 + q2]
        return b1, b2, c1, c2, theta[-1]

    def ll(theta):
        b1, b2, c1, c2, rho = unpack(theta)
        return _biprobit_loglik(X1, X2, y1, y2, b1, b2, c1, c2, rho)

    def ll_raw(z):
        b1, b2, c1, c2, a = unpack(z)
        return _biprobit_loglik(X1, X2, y1, y2, b1, b2, _to_cuts(c1), _to_cuts(c2), math.tanh(a))

    f1 = op_ml_fit(data, k1, r1, J1)
    f2 = op_ml_fit(data, k2, r2, J2)
    z0 = np.concatenate([f1.estimates[:m1], f2.estimates[:m2], _from_cuts(f1.estimates[m1:]), _from_cuts(f2.estimates[m2:]), [0.0]])
    z, _, _ = _maximize(ll_raw, z0)
    b1, b2, c1, c2, a = unpack(z)
    theta = np.concatenate([b1, b2, _to_cuts(c1), _to_cuts(c2), [math.tanh(a)]])
    labels = _op_labels(data, k1, r1, J1)
    labels = labels[:m1] + _op_labels(data, k2, r2, J2)[:m2] + labels[m1:] + _op_labels(data, k2, r2, J2)[m2:] + ["rho"]
    return _finish(ll, theta, labels)
