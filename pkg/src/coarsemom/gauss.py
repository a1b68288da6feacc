"""Scalar Gaussian kernels: density, distribution, quantile, truncated means
and bivariate rectangle probabilities.

Every function accepts scalars or numpy arrays and broadcasts. Infinite
interval endpoints are first-class: ``pdf(+-inf) == 0``, ``cdf(-inf) == 0``
and ``cdf(+inf) == 1`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_TINY_PROB = 1e-300
_LOG_TINY_PROB = math.log(_TINY_PROB)

# 20-point Gauss-Legendre rule on [-1, 1]; gives ~1e-15 accuracy in bvn_cdf
# for every correlation, so the smaller rules are never worth the branching.
_GL_X, _GL_W = leggauss(20)


class DegenerateProbabilityError(ArithmeticError):
    """An interval carries (numerically) zero probability mass.

    ``where`` optionally identifies the offending cell, e.g.
    ``{"obs": 17, "equation": 2, "category": 1}``.
    """

    def __init__(self, message: str, where: dict | None = None):
        self.where = dict(where or {})
        if self.where:
            ctx = ", ".join(f"{k}={v}" for k, v in self.where.items())
            message = f"{message} ({ctx})"
        super().__init__(message)


@dataclass(frozen=True)
class Interval:
    """Half-open interval ``(lower, upper]``; either end may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval endpoints must not be NaN")
        if not self.lower < self.upper:
            raise ValueError(f"empty interval ({self.lower}, {self.upper}]")

    def shifted(self, shift: float) -> "Interval":
        return Interval(self.lower - shift, self.upper - shift)


def std_pdf(z):
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z - _LOG_SQRT_2PI)
    return out if out.ndim else float(out)


def log_pdf(z):
    z = np.asarray(z, dtype=float)
    return -0.5 * z * z - _LOG_SQRT_2PI


def std_cdf(z):
    out = special.ndtr(np.asarray(z, dtype=float))
    return out if np.ndim(out) else float(out)


def std_sf(z):
    """Upper tail ``1 - cdf(z)`` without cancellation."""
    out = special.ndtr(-np.asarray(z, dtype=float))
    return out if np.ndim(out) else float(out)


def log_cdf(z):
    return special.log_ndtr(np.asarray(z, dtype=float))


def std_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("std_quantile is defined on the open interval (0, 1)")
    out = special.ndtri(p)
    return out if out.ndim else float(out)


def _interval_mass_and_mean(a, b):
    """Mass and mean of N(0,1) on (a, b], elementwise; requires a < b.

    Returns ``(log_mass, mean)``. The one-sided tail pieces go through
    log-space Mills ratios so that intervals far out in either tail keep
    full relative accuracy.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    a = a.astype(float, copy=True)
    b = b.astype(float, copy=True)

    # reflect left-tail intervals into the right tail: mean(a, b) = -mean(-b, -a)
    flip = b <= 0.0
    a[flip], b[flip] = -b[flip], -a[flip]

    log_mass = np.empty(a.shape)
    mean = np.empty(a.shape)

    right = a >= 0.0
    if np.any(right):
        ar, br = a[right], b[right]
        log_qa = special.log_ndtr(-ar)
        log_qb = special.log_ndtr(-br)
        with np.errstate(divide="ignore", invalid="ignore"):
            # fraction of the tail mass beyond a that lies in (a, b]
            frac = -np.expm1(log_qb - log_qa)
            dens = -np.expm1(-0.5 * (br - ar) * (br + ar))
            log_mass[right] = log_qa + np.log(frac)
            mean[right] = np.exp(log_pdf(ar) - log_qa) * dens / frac

    mid = ~right
    if np.any(mid):
        am, bm = a[mid], b[mid]
        mass = 0.5 * (special.erf(bm / math.sqrt(2.0)) - special.erf(am / math.sqrt(2.0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_mass[mid] = np.log(mass)
            # phi(a) - phi(b) without cancellation on narrow intervals
            gap = np.where(
                np.isfinite(am), std_pdf(am) * -np.expm1(-0.5 * (bm - am) * (bm + am)), -std_pdf(bm)
            )
            mean[mid] = gap / mass

    mean[flip] = -mean[flip]
    return log_mass, mean


def trunc_mean(lower, upper=None, shift=0.0):
    """E[e | e in (lower - shift, upper - shift]] for e ~ N(0, 1).

    Accepts an :class:`Interval` as the first argument in place of
    ``lower, upper``. Raises :class:`DegenerateProbabilityError` if the
    shifted interval has mass below 1e-300.
    """
    if isinstance(lower, Interval):
        lower, upper, shift = lower.lower, lower.upper, upper if upper is not None else shift
    a = np.asarray(lower, dtype=float) - shift
    b = np.asarray(upper, dtype=float) - shift
    log_mass, mean = _interval_mass_and_mean(a, b)
    bad = ~(log_mass >= _LOG_TINY_PROB)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else ()
        raise DegenerateProbabilityError(
            "interval probability below 1e-300", {"index": idx} if idx else None
        )
    return mean if mean.ndim else float(mean)


def interval_partials(a, b):
    """Truncated mean on (a, b] and its partial derivatives in a and b.

    ``d mean / d a = pdf(a) (mean - a) / mass`` and
    ``d mean / d b = pdf(b) (b - mean) / mass``; both vanish at infinite ends.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    log_mass, mean = _interval_mass_and_mean(a, b)
    if np.any(~(log_mass >= _LOG_TINY_PROB)):
        raise DegenerateProbabilityError("interval probability below 1e-300")
    with np.errstate(invalid="ignore", over="ignore"):
        da = np.where(np.isfinite(a), np.exp(log_pdf(a) - log_mass) * (mean - a), 0.0)
        db = np.where(np.isfinite(b), np.exp(log_pdf(b) - log_mass) * (b - mean), 0.0)
    return mean, da, db


def interval_mean_and_slope(a, b):
    """Truncated mean on (a, b] and its derivative w.r.t. a common shift.

    Moving both ends to ``(a - s, b - s]`` changes the mean at rate
    ``var - 1 < 0``, with ``var`` the truncated variance.
    """
    mean, da, db = interval_partials(a, b)
    return mean, np.minimum(-(da + db), 0.0)


def lower_mills(c):
    """E[e | e <= c] = -pdf(c)/cdf(c); always negative."""
    c = np.asarray(c, dtype=float)
    lc = special.log_ndtr(c)
    if np.any(~(lc >= _LOG_TINY_PROB)):
        raise DegenerateProbabilityError("lower tail probability below 1e-300")
    out = -np.exp(log_pdf(c) - lc)
    return out if out.ndim else float(out)


def lower_mills_slope(c):
    """Derivative of :func:`lower_mills` in c: lam (c + lam) with lam = pdf/cdf."""
    lam = -np.asarray(lower_mills(c))
    return lam * (np.asarray(c, float) + lam)


def upper_mills_slope(c):
    """Derivative of :func:`upper_mills` in c: u (u - c)."""
    u = np.asarray(upper_mills(c))
    return u * (u - np.asarray(c, float))


def upper_mills(c):
    """E[e | e > c] = pdf(c)/(1 - cdf(c)); always positive."""
    c = np.asarray(c, dtype=float)
    lc = special.log_ndtr(-c)
    if np.any(~(lc >= _LOG_TINY_PROB)):
        raise DegenerateProbabilityError("upper tail probability below 1e-300")
    out = np.exp(log_pdf(c) - lc)
    return out if out.ndim else float(out)


# -- bivariate normal -------------------------------------------------------


def _bvnu(h, k, r):
    """P(X > h, Y > k) for finite h, k and |r| < 1 (Drezner-Wesolowsky/Genz)."""
    h, k, r = np.broadcast_arrays(
        np.asarray(h, float), np.asarray(k, float), np.asarray(r, float)
    )
    out = np.empty(h.shape)
    small = np.abs(r) < 0.925

    if np.any(small):
        hs_, ks_, rs_ = h[small], k[small], r[small]
        hk = (hs_ * ks_)[:, None]
        hs = ((hs_ * hs_ + ks_ * ks_) / 2.0)[:, None]
        asr = np.arcsin(rs_)
        sn = np.sin(asr[:, None] * (1.0 + _GL_X[None, :]) / 2.0)
        terms = np.exp((sn * hk - hs) / (1.0 - sn * sn))
        val = (terms @ _GL_W) * asr / (4.0 * math.pi)
        out[small] = val + special.ndtr(-hs_) * special.ndtr(-ks_)

    big = ~small
    if np.any(big):
        hb, kb, rb = h[big], k[big].copy(), r[big]
        neg = rb < 0
        kb[neg] = -kb[neg]
        hk = hb * kb
        as_ = (1.0 - rb) * (1.0 + rb)
        a = np.sqrt(as_)
        bs = (hb - kb) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -(bs / as_ + hk) / 2.0
        bvn = np.where(
            asr > -100.0,
            a * np.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0),
            0.0,
        )
        b = np.sqrt(bs)
        sp = math.sqrt(2.0 * math.pi) * special.ndtr(-b / a)
        with np.errstate(over="ignore", invalid="ignore"):
            corr = np.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        bvn = bvn - np.where(hk > -100.0, corr, 0.0)
        a2 = a / 2.0
        xs = (a2[:, None] * (1.0 + _GL_X[None, :])) ** 2
        rs = np.sqrt(1.0 - xs)
        asr2 = -(bs[:, None] / xs + hk[:, None]) / 2.0
        sp2 = 1.0 + c[:, None] * xs * (1.0 + d[:, None] * xs)
        ep = np.exp(-hk[:, None] * xs / (2.0 * (1.0 + rs) ** 2)) / rs
        with np.errstate(under="ignore"):
            inner = np.where(asr2 > -100.0, np.exp(asr2) * (ep - sp2), 0.0)
        bvn = bvn + a2 * (inner @ _GL_W)
        bvn = -bvn / (2.0 * math.pi)

        res = np.empty(hb.shape)
        pos = ~neg
        res[pos] = bvn[pos] + special.ndtr(-np.maximum(hb[pos], kb[pos]))
        hn, kn, bn = hb[neg], kb[neg], bvn[neg]
        span = np.where(
            hn < 0, special.ndtr(kn) - special.ndtr(hn), special.ndtr(-hn) - special.ndtr(-kn)
        )
        res[neg] = np.where(hn >= kn, -bn, span - bn)
        out[big] = res

    return np.clip(out, 0.0, 1.0)


def bvn_cdf(x, y, rho):
    """P(X <= x, Y <= y) for a standard bivariate normal with correlation rho."""
    x, y, rho = np.broadcast_arrays(
        np.asarray(x, float), np.asarray(y, float), np.asarray(rho, float)
    )
    if np.any(~(np.abs(rho) < 1.0)):
        raise ValueError("bivariate normal requires |rho| < 1")
    out = np.zeros(x.shape)
    x_hi = np.isposinf(x)
    y_hi = np.isposinf(y)
    zero = np.isneginf(x) | np.isneginf(y)
    only_y = x_hi & ~y_hi & ~zero
    only_x = y_hi & ~x_hi & ~zero
    both = x_hi & y_hi
    out[only_y] = special.ndtr(y[only_y])
    out[only_x] = special.ndtr(x[only_x])
    out[both] = 1.0
    fin = ~(zero | x_hi | y_hi)
    if np.any(fin):
        out[fin] = _bvnu(-x[fin], -y[fin], rho[fin])
    return out if out.ndim else float(out)


def bvn_rect_prob(x_lower, x_upper, y_lower, y_upper=None, rho=None):
    """P(X in (x_lower, x_upper], Y in (y_lower, y_upper]).

    The two intervals may also be passed as :class:`Interval` objects:
    ``bvn_rect_prob(x_iv, y_iv, rho)``.
    """
    if isinstance(x_lower, Interval):
        x_iv, y_iv, rho = x_lower, x_upper, y_lower
        x_lower, x_upper, y_lower, y_upper = x_iv.lower, x_iv.upper, y_iv.lower, y_iv.upper
    p = (
        bvn_cdf(x_upper, y_upper, rho)
        - bvn_cdf(x_lower, y_upper, rho)
        - bvn_cdf(x_upper, y_lower, rho)
        + bvn_cdf(x_lower, y_lower, rho)
    )
    p = np.clip(p, 0.0, 1.0)
    return p if np.ndim(p) else float(p)
