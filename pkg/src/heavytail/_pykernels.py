"""Pure-Python twin of the compiled stable kernels.

Same integral representation and breakpoints as ``_kernels.pyx``; the
integration itself is delegated to QUADPACK through :func:`scipy.integrate.quad`.
Roughly two orders of magnitude slower, used when the extension is not built.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

ALPHA_ONE_TOL = 1e-6
BETA_ZERO_TOL = 1e-9
NEAR_ZETA = 1e-11
# quadrature loses accuracy as x approaches zeta; interpolate inside this band
ZETA_BAND = 1e-6
_LEVELS = (-48.0, -24.0, -12.0, -6.0, 0.0, 2.0, 4.0)
_TINY = 1e-300


class _Angle:
    """log g at the complementary angle pi/2 - theta, after reflection to x > zeta (or beta > 0).

    Working in pi/2 - theta keeps the peak resolved when it sits within a few ulps of pi/2.
    """

    def __init__(self, alpha, beta, theta0, log_scale, lo, hi, alpha_one):
        self.alpha = alpha
        self.beta = beta
        self.theta0 = theta0
        self.log_scale = log_scale
        self.lo = lo
        self.hi = hi
        self.alpha_one = alpha_one

    def log_g(self, th):
        a = self.alpha
        if self.alpha_one:
            # th is the complementary angle pi/2 - theta, exact near the peak
            bt = math.pi / 2 + self.beta * (math.pi / 2 - th)
            if th <= 0.0:
                return math.inf
            if bt <= 0.0:
                return -math.inf
            st = math.sin(th)
            return (self.log_scale + math.log(2 / math.pi) + math.log(bt / st)
                    + bt * math.cos(th) / (st * self.beta))
        num = max(math.sin(th), _TINY)
        den = max(math.sin(a * (self.hi - th)), _TINY)
        c3 = max(math.cos(a * self.theta0 + (a - 1) * (math.pi / 2 - th)), _TINY)
        return (self.log_scale + math.log(math.cos(a * self.theta0)) / (a - 1)
                + a / (a - 1) * math.log(num / den) + math.log(c3 / num))

    def pdf_integrand(self, th):
        lg = self.log_g(th)
        if lg > 700:
            return 0.0
        return math.exp(lg - math.exp(lg))

    def cdf_integrand(self, th):
        lg = self.log_g(th)
        if lg > 700:
            return 0.0
        return math.exp(-math.exp(lg))

    def level(self, level):
        # probe just inside both ends, where 0/0 forms can make log g spurious
        span = self.hi - self.lo
        lo = self.lo + 1e-12 * span
        hi = self.hi - 1e-12 * span
        flo = self.log_g(lo) - level
        fhi = self.log_g(hi) - level
        if math.isnan(flo) or math.isnan(fhi) or (flo > 0) == (fhi > 0):
            return None
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = self.log_g(mid) - level
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
            if hi - lo < 1e-15 * abs(mid) or hi - lo < 1e-300:
                break
        return 0.5 * (lo + hi)

    def breakpoints(self):
        pts = {self.lo, self.hi}
        for lev in _LEVELS:
            t = self.level(lev)
            if t is not None and self.lo < t < self.hi:
                pts.add(t)
        return sorted(pts)

    def integrate(self, fn, rtol):
        pts = self.breakpoints()
        total = 0.0
        err = 0.0
        failed = False
        for a, b in zip(pts[:-1], pts[1:]):
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    v, e = integrate.quad(fn, a, b, epsabs=0.0, epsrel=rtol, limit=200)
                except integrate.IntegrationWarning:
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    v, e = integrate.quad(fn, a, b, epsabs=0.0, epsrel=rtol, limit=200)
                    failed = failed or e > 1e-8 * abs(v) + 1e-14
            total += v
            err += e
        return total, err, failed


def _quiet_quad(fn):
    # exp(-s) < 5e-18 beyond s = 40
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(fn, 0, 40, limit=2000, epsabs=1e-15, epsrel=1e-13)


def _cauchy_like(x, beta, kind):
    """Symmetric alpha=1 corner via inverse Fourier quadrature or tail series."""
    c = 2 / math.pi * beta
    if abs(x) > 50:
        if kind == "pdf":
            return 1 / (math.pi * x * x) * sum((-1 / (x * x)) ** k for k in range(40)), 0.0
        ix = 1 / abs(x)
        p = sum((-1) ** k * ix ** (2 * k + 1) / (2 * k + 1) for k in range(40)) / math.pi
        return (1 - p if x > 0 else p), 0.0
    if kind == "pdf":
        def fn(s):
            return math.exp(-s) * math.cos(x * s + c * s * math.log(s)) if s > 0 else 0.0
        v, e = _quiet_quad(fn)
        return v / math.pi, e / math.pi

    def fn(s):
        return math.exp(-s) * math.sin(x * s + c * s * math.log(s)) / s if s > 0 else 0.0
    v, e = _quiet_quad(fn)
    return 0.5 + v / math.pi, e / math.pi


def _pdf_one(x, alpha, beta, rtol):
    """Density, with a quadratic through zeta - h, zeta, zeta + h close to zeta."""
    if abs(alpha - 1) < ALPHA_ONE_TOL:
        return _pdf_core(x, alpha, beta, rtol)
    zeta = -beta * math.tan(math.pi * alpha / 2)
    h = max(ZETA_BAND, NEAR_ZETA * (1 + abs(zeta)))
    t = x - zeta
    if abs(t) >= h:
        return _pdf_core(x, alpha, beta, rtol)
    f0 = _pdf_core(zeta, alpha, beta, rtol)[0]
    fm, em, bm = _pdf_core(zeta - h, alpha, beta, rtol)
    fp, ep, bp = _pdf_core(zeta + h, alpha, beta, rtol)
    v = f0 + t * (fp - fm) / (2 * h) + t * t * (fp - 2 * f0 + fm) / (2 * h * h)
    return v, em + ep, bm or bp


def _pdf_core(x, alpha, beta, rtol):
    if abs(alpha - 1) < ALPHA_ONE_TOL:
        if abs(beta) < BETA_ZERO_TOL:
            v, e = _cauchy_like(x, beta, "pdf")
            return v, e, False
        if beta < 0:
            x, beta = -x, -beta
        ang = _Angle(1.0, beta, math.pi / 2, -math.pi * x / (2 * beta),
                     0.0, math.pi, True)
        v, e, failed = ang.integrate(ang.pdf_integrand, rtol)
        return v / (2 * beta), e / (2 * beta), failed
    tpa = math.tan(math.pi * alpha / 2)
    zeta = -beta * tpa
    if x < zeta:
        x, beta, zeta = -x, -beta, -zeta
    theta0 = math.atan(beta * tpa) / alpha
    xz = x - zeta
    if xz < NEAR_ZETA * (1 + abs(zeta)):
        v = (math.gamma(1 + 1 / alpha) * math.cos(theta0)
             / (math.pi * (1 + zeta * zeta) ** (0.5 / alpha)))
        return v, 0.0, False
    if math.pi / 2 + theta0 <= 1e-14:
        return 0.0, 0.0, False
    ang = _Angle(alpha, beta, theta0, alpha / (alpha - 1) * math.log(xz),
                 0.0, math.pi / 2 + theta0, False)
    v, e, failed = ang.integrate(ang.pdf_integrand, rtol)
    c2 = alpha / (math.pi * abs(alpha - 1) * xz)
    return v * c2, e * c2, failed


def _cdf_one(x, alpha, beta, rtol):
    flip = False
    if abs(alpha - 1) < ALPHA_ONE_TOL:
        if abs(beta) < BETA_ZERO_TOL:
            v, e = _cauchy_like(x, beta, "cdf")
            return v, e, False
        if beta < 0:
            x, beta, flip = -x, -beta, True
        ang = _Angle(1.0, beta, math.pi / 2, -math.pi * x / (2 * beta),
                     0.0, math.pi, True)
        v, e, failed = ang.integrate(ang.cdf_integrand, rtol)
        v /= math.pi
        return (1 - v if flip else v), e / math.pi, failed
    tpa = math.tan(math.pi * alpha / 2)
    zeta = -beta * tpa
    if x < zeta:
        x, beta, zeta, flip = -x, -beta, -zeta, True
    theta0 = math.atan(beta * tpa) / alpha
    xz = x - zeta
    if xz < NEAR_ZETA * (1 + abs(zeta)):
        v = (math.pi / 2 - theta0) / math.pi
        return (1 - v if flip else v), 0.0, False
    c1 = (math.pi / 2 - theta0) / math.pi if alpha < 1 else 1.0
    if math.pi / 2 + theta0 <= 1e-14:
        return (1 - c1 if flip else c1), 0.0, False
    ang = _Angle(alpha, beta, theta0, alpha / (alpha - 1) * math.log(xz),
                 0.0, math.pi / 2 + theta0, False)
    v, e, failed = ang.integrate(ang.cdf_integrand, rtol)
    v /= math.pi
    v = c1 + v if alpha < 1 else c1 - v
    return (1 - v if flip else v), e / math.pi, failed


def _vectorize(one, x, alpha, beta, rtol):
    xs = np.asarray(x, dtype=np.float64)
    flat = xs.ravel()
    out = np.empty(flat.shape)
    errs = np.empty(flat.shape)
    flags = np.zeros(flat.shape, dtype=bool)
    for i, xi in enumerate(flat):
        out[i], errs[i], flags[i] = one(float(xi), alpha, beta, rtol)
    return out.reshape(xs.shape), errs.reshape(xs.shape), flags.reshape(xs.shape)


def pdf_std(x, alpha, beta, rtol=1e-10):
    return _vectorize(_pdf_one, x, float(alpha), float(beta), rtol)


def cdf_std(x, alpha, beta, rtol=1e-12):
    return _vectorize(_cdf_one, x, float(alpha), float(beta), rtol)
