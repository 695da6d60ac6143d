"""Levy alpha-stable distribution in Nolan's S0 parametrization.

Densities and distribution functions are evaluated in standardized
coordinates ``z = (x - delta) / gamma`` by the kernels in ``_kernels`` (compiled)
or ``_pykernels`` (fallback). Those kernels integrate the Zolotarev form of the
inverse Fourier transform of :func:`char_fn`; :func:`pdf_fourier` inverts the
characteristic function directly and serves as an independent route.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from . import _backend
from .errors import DomainError, IntegrationError, PreconditionError, RootBracketError
from .rng import SeedLike, generator

ALPHA_ONE_TOL = 1e-6
PDF_RTOL = 1e-10
CDF_RTOL = 1e-12
# quadrature asks for the tolerances above but only fails past these
PDF_ACCEPT = 1e-8
CDF_ACCEPT = 1e-10
QUANTILE_PTOL = 1e-10
PDF_ATOL = 1e-13
CDF_ATOL = 1e-12

# standardized grid: z = sinh(u), u uniform on [-GRID_U, GRID_U]
GRID_ZMAX = 1e8
GRID_U = math.asinh(GRID_ZMAX)
GRID_POINTS = 2001
LOG_FLOOR = -745.0


@dataclass(frozen=True)
class StableParams:
    """S0 parameters: tail index, skew, scale, location."""

    alpha: float
    beta: float
    gamma: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise PreconditionError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if not 0.0 < self.alpha <= 2.0:
            raise PreconditionError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not -1.0 <= self.beta <= 1.0:
            raise PreconditionError(f"beta must lie in [-1, 1], got {self.beta}")
        if not self.gamma > 0.0:
            raise PreconditionError(f"gamma must be positive, got {self.gamma}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.gamma, self.delta)

    def standardize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.delta) / self.gamma


def _near_one(alpha: float) -> bool:
    return abs(alpha - 1.0) < ALPHA_ONE_TOL


def char_fn(p: StableParams, s):
    """Characteristic function E[exp(i s X)].

    The alpha != 1 branch is coded as
    ``-(g|s|)^a - i b tan(pi a/2) sgn(s) [(g|s|) - (g|s|)^a] + i d s``,
    the expanded form of ``-(g|s|)^a [1 + i b tan(pi a/2) sgn(s) ((g|s|)^(1-a) - 1)]``;
    it stays finite at s = 0 for alpha > 1.
    """
    s = np.asarray(s, dtype=np.float64)
    gs = p.gamma * np.abs(s)
    sg = np.sign(s)
    if _near_one(p.alpha):
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(gs > 0, np.log(np.where(gs > 0, gs, 1.0)), 0.0)
        expo = -gs * (1 + 1j * p.beta * (2 / np.pi) * sg * lg)
    else:
        ga = gs ** p.alpha
        expo = -ga - 1j * p.beta * math.tan(math.pi * p.alpha / 2) * sg * (gs - ga)
    return np.exp(expo + 1j * p.delta * s)


def _kernel_alpha(p: StableParams) -> float:
    return 1.0 if _near_one(p.alpha) else p.alpha


def _checked(values, errs, flags, what, rtol, atol):
    # values far below atol (deep light tails) are accepted at whatever precision was reached
    bad = flags & (errs > rtol * np.abs(values) + atol)
    if np.any(bad):
        raise IntegrationError(f"{what}: adaptive quadrature missed rtol={rtol:g} at "
                               f"{int(np.count_nonzero(bad))} point(s); worst error estimate "
                               f"{float(np.max(errs[bad])):.3g}")
    return values


def pdf_std(z, alpha: float, beta: float, *, backend: str | None = None, rtol: float = PDF_RTOL):
    kern = _backend.get(backend)
    v, e, f = kern.pdf_std(np.asarray(z, dtype=np.float64), alpha, beta, rtol)
    # cancellation in the light tail can leave values like -1e-272
    return np.maximum(_checked(v, e, f, "pdf", max(rtol, PDF_ACCEPT), PDF_ATOL), 0.0)


def cdf_std(z, alpha: float, beta: float, *, backend: str | None = None, rtol: float = CDF_RTOL):
    kern = _backend.get(backend)
    v, e, f = kern.cdf_std(np.asarray(z, dtype=np.float64), alpha, beta, rtol)
    return _checked(v, e, f, "cdf", max(rtol, CDF_ACCEPT), CDF_ATOL)


def pdf(p: StableParams, x, *, backend: str | None = None):
    """Density at ``x``; raises :class:`IntegrationError` when quadrature fails."""
    z = p.standardize(x)
    out = np.zeros_like(z)
    ok = np.isfinite(z)
    if np.any(ok):
        out[ok] = pdf_std(z[ok], _kernel_alpha(p), p.beta, backend=backend)
    out = np.maximum(out, 0.0) / p.gamma
    return out if out.ndim else float(out)


def cdf(p: StableParams, x, *, backend: str | None = None):
    z = p.standardize(x)
    out = np.where(z > 0, 1.0, 0.0)
    ok = np.isfinite(z)
    if np.any(ok):
        out[ok] = cdf_std(z[ok], _kernel_alpha(p), p.beta, backend=backend)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def tail_constant(alpha: float, beta: float) -> tuple[float, float]:
    """(left, right) constants C with f(z) ~ C |z|^-(alpha+1) for the standardized law."""
    if alpha >= 2.0:
        raise DomainError("alpha = 2 (Gaussian) has no power-law tail")
    c = math.sin(math.pi * alpha / 2) * math.gamma(alpha) / math.pi
    return alpha * c * (1 - beta), alpha * c * (1 + beta)


def tail_density(p: StableParams, x):
    """Power-law asymptote C |x - delta|^-(alpha+1) of the density.

    Only meaningful far from the centre (``|x - delta| >> gamma``); the caller asserts that regime.
    """
    left, right = tail_constant(p.alpha, p.beta)
    d = np.asarray(x, dtype=np.float64) - p.delta
    c = np.where(d >= 0, right, left) * p.gamma ** p.alpha
    with np.errstate(divide="ignore"):
        out = c * np.abs(d) ** (-(p.alpha + 1))
    return out if out.ndim else float(out)


def pdf_fourier(p: StableParams, x) -> float | np.ndarray:
    """Density by direct numerical inversion of :func:`char_fn` (QUADPACK Fourier integrals).

    Independent of the angle-integral kernels; slower, and used to cross-check them.
    The linear phase is folded into the oscillatory weight so the remaining
    integrands are damped by ``exp(-(gamma s)^alpha)``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    a, b, g = p.alpha, p.beta, p.gamma
    if _near_one(a):
        shift = p.delta

        def phase(s):
            return -(2 / math.pi) * b * g * s * math.log(g * s) if s > 0 else 0.0
    elif abs(a - 1) < 0.1:
        # keep the S0 arrangement so the large tan(pi alpha/2) terms cancel analytically
        t = math.tan(math.pi * a / 2)
        shift = p.delta

        def phase(s):
            return b * t * g * s * math.expm1((a - 1) * math.log(g * s)) if s > 0 else 0.0
    else:
        t = math.tan(math.pi * a / 2)
        shift = p.delta - b * g * t

        def phase(s):
            return b * t * (g * s) ** a

    def damp(s):
        return math.exp(-((g * s) ** a))

    out = np.empty(xs.shape)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for i, xi in enumerate(xs):
            w = xi - shift
            if abs(w) < 1.0:
                # slow oscillation: the damping alone makes plain quadrature converge
                val = integrate.quad(lambda s: damp(s) * math.cos(w * s - phase(s)), 0, np.inf,
                                     limit=500, epsabs=1e-13)[0]
            else:
                val = (integrate.quad(lambda s: damp(s) * math.cos(phase(s)), 0, np.inf,
                                      weight="cos", wvar=w, limlst=200)[0]
                       + integrate.quad(lambda s: damp(s) * math.sin(phase(s)), 0, np.inf,
                                        weight="sin", wvar=w, limlst=200)[0])
            out[i] = val / math.pi
    return out if np.ndim(x) else float(out[0])


@functools.lru_cache(maxsize=128)
def _standard_table(alpha: float, beta: float, backend: str) -> tuple[np.ndarray, ...]:
    u = np.linspace(-GRID_U, GRID_U, GRID_POINTS)
    z = np.sinh(u)
    f = pdf_std(z, alpha, beta, backend=backend)
    F = np.clip(cdf_std(z, alpha, beta, backend=backend), 0.0, 1.0)
    for arr in (u, z, f, F):
        arr.setflags(write=False)
    return u, z, f, F


def standard_table(alpha: float, beta: float, backend: str | None = None):
    """Cached (u, z, pdf, cdf) on the sinh-spaced standardized grid."""
    return _standard_table(float(alpha), float(beta), backend or _backend.name)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Density tabulated on an ordered grid, with analytic power-law tails beyond it."""

    x: np.ndarray
    density: np.ndarray
    params: StableParams
    _u: np.ndarray = field(repr=False)
    _logf: CubicSpline = field(repr=False)

    def tail_mass(self) -> tuple[float, float]:
        """Mass beyond the first and last grid points from the power-law asymptote."""
        p = self.params
        if p.alpha >= 2.0:
            return 0.0, 0.0
        left, right = tail_constant(p.alpha, p.beta)
        zl = (p.delta - self.x[0]) / p.gamma
        zr = (self.x[-1] - p.delta) / p.gamma
        return left * zl ** -p.alpha / p.alpha, right * zr ** -p.alpha / p.alpha

    def total_mass(self) -> float:
        """Trapezoid rule on the grid's own (sinh) coordinate plus the tail masses."""
        jac = self.params.gamma * np.cosh(self._u)
        return float(np.trapezoid(self.density * jac, self._u) + sum(self.tail_mass()))

    def logpdf(self, x):
        """Interpolated log density; power-law asymptote outside the grid."""
        p = self.params
        z = p.standardize(x)
        u = np.arcsinh(z)
        out = np.full(u.shape, LOG_FLOOR)
        inside = np.abs(u) <= GRID_U
        out[inside] = self._logf(u[inside])
        outside = ~inside & np.isfinite(z)
        if np.any(outside) and p.alpha < 2.0:
            left, right = tail_constant(p.alpha, p.beta)
            c = np.where(z[outside] > 0, right, left)
            with np.errstate(divide="ignore"):
                out[outside] = np.log(c) - (p.alpha + 1) * np.log(np.abs(z[outside]))
        out = np.maximum(out, LOG_FLOOR) - math.log(p.gamma)
        return out if out.ndim else float(out)


def density_grid(p: StableParams, *, backend: str | None = None) -> DensityGrid:
    u, z, f, _ = standard_table(_kernel_alpha(p), p.beta, backend)
    with np.errstate(divide="ignore"):
        logf = np.maximum(np.log(f), LOG_FLOOR)
    return DensityGrid(x=p.gamma * z + p.delta, density=f / p.gamma, params=p,
                       _u=u, _logf=CubicSpline(u, logf, extrapolate=False))


def logpdf(p: StableParams, x, *, exact: bool = False, backend: str | None = None):
    """Log density; ``exact=False`` interpolates the cached grid (fast, ~1e-8 relative)."""
    if exact:
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(pdf(p, x, backend=backend)), LOG_FLOOR - math.log(p.gamma))
    return density_grid(p, backend=backend).logpdf(x)


def _expand(F, q: float, start: float, direction: float) -> float:
    """Double ``start`` outward until F crosses ``q``; the returned point brackets the root."""
    t = start if start * direction > 0 else direction
    while (F(t) - q) * direction < 0:
        t *= 2.0
        if abs(t) > 1e300:
            raise RootBracketError(f"quantile {q:g} lies beyond the representable range")
    return t


def quantile(p: StableParams, q, *, backend: str | None = None):
    """Inverse CDF; ``cdf(quantile(q))`` matches ``q`` to ~1e-10.

    A grid inverse provides brackets; safeguarded Newton polishes all
    requested probabilities together, with Brent's method for stragglers.
    """
    qa = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if np.any(~(qa > 0) | ~(qa < 1)):
        raise PreconditionError("quantile probabilities must lie strictly inside (0, 1)")
    a, b = _kernel_alpha(p), p.beta
    u, z, f, F = standard_table(a, b, backend)
    idx = np.searchsorted(F, qa, side="left")
    lo = np.where(idx > 0, z[np.clip(idx - 1, 0, len(z) - 1)], -np.inf)
    hi = np.where(idx < len(z), z[np.clip(idx, 0, len(z) - 1)], np.inf)
    Flo = np.where(idx > 0, F[np.clip(idx - 1, 0, len(z) - 1)], 0.0)
    Fhi = np.where(idx < len(z), F[np.clip(idx, 0, len(z) - 1)], 1.0)
    inside = np.isfinite(lo) & np.isfinite(hi)
    zq = np.zeros_like(qa)
    width = np.where(Fhi > Flo, Fhi - Flo, 1.0)
    zq[inside] = lo[inside] + (qa[inside] - Flo[inside]) / width[inside] * (hi[inside] - lo[inside])
    done = ~inside
    for _ in range(40):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        Fz = cdf_std(zq[act], a, b, backend=backend)
        resid = Fz - qa[act]
        conv = np.abs(resid) <= 0.1 * QUANTILE_PTOL
        below = resid < 0
        lo[act] = np.where(below, zq[act], lo[act])
        hi[act] = np.where(below, hi[act], zq[act])
        fz = pdf_std(zq[act], a, b, backend=backend)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = zq[act] - resid / fz
        ok = np.isfinite(step) & (step > lo[act]) & (step < hi[act])
        nxt = np.where(ok, step, 0.5 * (lo[act] + hi[act]))
        stalled = (hi[act] - lo[act]) <= 4e-16 * np.maximum(1.0, np.abs(zq[act]))
        done[act] = conv | stalled
        zq[act] = np.where(done[act], zq[act], nxt)

    def F1(t):
        return float(cdf_std(np.array([t]), a, b, backend=backend)[0])

    for i in np.flatnonzero(~inside | ~done):
        qi = float(qa[i])
        l0 = lo[i] if np.isfinite(lo[i]) else _expand(F1, qi, z[0], -1.0)
        h0 = hi[i] if np.isfinite(hi[i]) else _expand(F1, qi, z[-1], 1.0)
        zq[i] = optimize.brentq(lambda t: F1(t) - qi, l0, h0, xtol=1e-300,
                                rtol=4 * np.finfo(float).eps, maxiter=500)
    out = p.gamma * zq + p.delta
    return out if np.ndim(q) else float(out[0])


def sample(p: StableParams, n: int, seed: SeedLike) -> np.ndarray:
    """Chambers-Mallows-Stuck draws, shifted from S1 to S0 by subtracting beta tan(pi alpha / 2)."""
    if int(n) != n or n < 1:
        raise PreconditionError(f"sample size must be a positive integer, got {n}")
    rng = generator(seed)
    n = int(n)
    v = rng.uniform(-np.pi / 2, np.pi / 2, n)
    w = rng.standard_exponential(n)
    a, b = p.alpha, p.beta
    if _near_one(a):
        bv = np.pi / 2 + b * v
        z = (2 / np.pi) * (bv * np.tan(v) - b * np.log((np.pi / 2) * w * np.cos(v) / bv))
    else:
        t = b * math.tan(math.pi * a / 2)
        b0 = math.atan(t) / a
        s0 = (1 + t * t) ** (1 / (2 * a))
        av = a * (v + b0)
        z = (s0 * np.sin(av) / np.cos(v) ** (1 / a)
             * (np.cos(v - av) / w) ** ((1 - a) / a))
        z = z - t
    return p.gamma * z + p.delta
