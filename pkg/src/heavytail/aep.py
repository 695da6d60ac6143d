"""Four-parameter asymmetric exponential power (AEP) distribution.

Density ``kappa h / (sigma (1 + kappa^2) Gamma(1/h)) exp(-(kappa^s |x - xi| / sigma)^h)``
with ``s = sign(x - xi)``: the right side decays on scale ``sigma / kappa``, the
left side on ``kappa sigma``, and the mass left of ``xi`` is ``kappa^2 / (1 + kappa^2)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import PreconditionError, SolverFailure, TooFewObservations
from .lmoments import pwm_to_lmoments, sample_lmoments
from .rng import SeedLike, generator

MIN_FIT_N = 100
FIT_TOL = 1e-8
_LOG_KAPPA = (-4.0, 4.0)
_LOG_H = (math.log(0.1), math.log(10.0))


@dataclass(frozen=True)
class AepParams:
    kappa: float
    h: float
    sigma: float
    xi: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "h", "sigma", "xi"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise PreconditionError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        for name in ("kappa", "h", "sigma"):
            if not getattr(self, name) > 0:
                raise PreconditionError(f"{name} must be positive, got {getattr(self, name)}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.kappa, self.h, self.sigma, self.xi)

    @property
    def left_mass(self) -> float:
        return self.kappa ** 2 / (1 + self.kappa ** 2)


def _log_norm(p: AepParams) -> float:
    return (math.log(p.kappa * p.h) - math.log(p.sigma) - math.log1p(p.kappa ** 2)
            - special.gammaln(1 / p.h))


def aep_logpdf(p: AepParams, x):
    d = np.asarray(x, dtype=np.float64) - p.xi
    scale = np.where(d >= 0, p.sigma / p.kappa, p.kappa * p.sigma)
    out = _log_norm(p) - (np.abs(d) / scale) ** p.h
    return out if out.ndim else float(out)


def aep_pdf(p: AepParams, x):
    out = np.exp(aep_logpdf(p, x))
    return out if np.ndim(out) else float(out)


def aep_cdf(p: AepParams, x):
    """Regularized upper incomplete gamma on each side of the mode."""
    d = np.asarray(x, dtype=np.float64) - p.xi
    a = 1 / p.h
    pl = p.left_mass
    left = pl * special.gammaincc(a, (np.abs(d) / (p.kappa * p.sigma)) ** p.h)
    right = 1 - (1 - pl) * special.gammaincc(a, (np.abs(d) * p.kappa / p.sigma) ** p.h)
    out = np.where(d < 0, left, right)
    return out if out.ndim else float(out)


def aep_quantile(p: AepParams, u):
    uu = np.asarray(u, dtype=np.float64)
    if np.any(~(uu > 0) | ~(uu < 1)):
        raise PreconditionError("quantile probabilities must lie strictly inside (0, 1)")
    a = 1 / p.h
    pl = p.left_mass
    with np.errstate(divide="ignore", invalid="ignore"):
        tl = special.gammainccinv(a, np.minimum(uu / pl, 1.0))
        tr = special.gammainccinv(a, np.minimum((1 - uu) / (1 - pl), 1.0))
    out = np.where(uu < pl, p.xi - p.kappa * p.sigma * tl ** (1 / p.h),
                   p.xi + p.sigma / p.kappa * tr ** (1 / p.h))
    return out if out.ndim else float(out)


def aep_sample(p: AepParams, n: int, seed: SeedLike) -> np.ndarray:
    """Exact draws: pick a side, then |x - xi| = scale * T^(1/h) with T ~ Gamma(1/h)."""
    if int(n) != n or n < 1:
        raise PreconditionError(f"sample size must be a positive integer, got {n}")
    rng = generator(seed)
    n = int(n)
    left = rng.uniform(size=n) < p.left_mass
    t = rng.gamma(1 / p.h, size=n)
    mag = t ** (1 / p.h)
    return p.xi + np.where(left, -p.kappa * p.sigma * mag, p.sigma / p.kappa * mag)


# ---- theoretical L-moments -------------------------------------------------
#
# For xi = 0, sigma = 1 write X = side * scale * T^a with T ~ Gamma(a), a = 1/h.
# On the right F(X) = 1 - pR Q(a, T), on the left F(X) = pL Q(a, T), with Q = 1 - P the
# regularized upper incomplete gamma. Expanding the powers of F leaves the four
# integrals I_j = E[T^a P(a, T)^j], j = 0..3. Writing P = t^a R(t) with R smooth and
# bounded, I_j = Gamma(a)^-1 * int t^((2+j)a - 1) e^-t R(t)^j dt, which generalized
# Gauss-Laguerre quadrature handles to near machine precision.


@functools.lru_cache(maxsize=256)
def _laguerre(alpha: float, nodes: int):
    return special.roots_genlaguerre(nodes, alpha)


def _node_count(a: float) -> int:
    # Gamma(a) mass sits near t = a, so small h needs more nodes
    return min(48 + 8 * math.ceil(a), 240)


def _pwm_integrals(a: float) -> np.ndarray:
    out = np.empty(4)
    lga = special.gammaln(a)
    out[0] = math.exp(special.gammaln(2 * a) - lga)
    for j in range(1, 4):
        x, w = _laguerre((2 + j) * a - 1, _node_count(a))
        with np.errstate(divide="ignore", under="ignore"):
            logr = np.log(special.gammainc(a, x)) - a * np.log(x)
        out[j] = float(np.dot(w, np.exp(j * logr))) / math.exp(lga)
    return out


def standard_pwm(kappa: float, h: float) -> np.ndarray:
    """beta_0 .. beta_3 of the AEP with xi = 0, sigma = 1."""
    a = 1 / h
    ii = _pwm_integrals(a)
    pl = kappa ** 2 / (1 + kappa ** 2)
    pr = 1 - pl
    b = np.empty(4)
    for r in range(4):
        right = sum(math.comb(r, j) * pl ** (r - j) * pr ** j * ii[j] for j in range(r + 1))
        left = sum(math.comb(r, j) * (-1) ** j * ii[j] for j in range(r + 1))
        b[r] = pr / kappa * right - kappa * pl ** (r + 1) * left
    return b


def standard_lmoments(kappa: float, h: float) -> np.ndarray:
    """lambda_1 .. lambda_4 of the AEP with xi = 0, sigma = 1."""
    return pwm_to_lmoments(standard_pwm(kappa, h))


def aep_lmoments(p: AepParams) -> np.ndarray:
    lam = standard_lmoments(p.kappa, p.h)
    return np.array([p.xi + p.sigma * lam[0], p.sigma * lam[1],
                     p.sigma * lam[2], p.sigma * lam[3]])


# solver iterates are clipped to a box a little wider than the start grid
_CLIP = ((_LOG_KAPPA[0] - 2, _LOG_KAPPA[1] + 2), (_LOG_H[0] - 1, _LOG_H[1] + 1))


def _ratios(v) -> np.ndarray:
    lk = min(max(float(v[0]), _CLIP[0][0]), _CLIP[0][1])
    lh = min(max(float(v[1]), _CLIP[1][0]), _CLIP[1][1])
    try:
        lam = standard_lmoments(math.exp(lk), math.exp(lh))
        return np.array([lam[2] / lam[1], lam[3] / lam[1]])
    except (OverflowError, ZeroDivisionError, FloatingPointError):
        return np.array([np.nan, np.nan])


@functools.lru_cache(maxsize=1)
def _ratio_grid():
    lk = np.linspace(*_LOG_KAPPA, 17)
    lh = np.linspace(*_LOG_H, 17)
    g = np.array([[_ratios((a, b)) for b in lh] for a in lk])
    return lk, lh, g


def _solve_shape(t3: float, t4: float) -> tuple[float, float, float]:
    target = np.array([t3, t4])
    lk, lh, g = _ratio_grid()
    d = np.sum((g - target) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    x0 = np.array([lk[i], lh[j]])

    def resid(v):
        return _ratios(v) - target

    best = None
    sol = optimize.root(resid, x0, method="hybr", options={"xtol": 1e-13})
    cand = [sol.x]
    if not np.all(np.abs(resid(sol.x)) < FIT_TOL):
        def loss(v):
            r = float(np.sum(resid(v) ** 2))
            return r if math.isfinite(r) else math.inf

        nm = optimize.minimize(loss, x0, method="Nelder-Mead",
                               options={"xatol": 1e-12, "fatol": 1e-24, "maxiter": 4000})
        polish = optimize.root(resid, nm.x, method="hybr", options={"xtol": 1e-13})
        cand += [nm.x, polish.x]
    for v in cand:
        if not np.all(np.isfinite(v)):
            continue
        r = float(np.max(np.abs(resid(v))))
        if math.isfinite(r) and (best is None or r < best[2]):
            best = (float(v[0]), float(v[1]), r)
    return best if best is not None else (math.nan, math.nan, math.inf)


def aep_fit_lmoments(sample) -> AepParams:
    """Match the first four L-moments: shape from (tau3, tau4), then scale and location."""
    x = np.asarray(sample, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size < MIN_FIT_N:
        raise TooFewObservations(x.size, MIN_FIT_N)
    l1, l2, t3, t4 = sample_lmoments(x)
    if not l2 > 0 or np.ptp(x) == 0:
        raise SolverFailure(f"second L-moment is {l2:g}; L-moment ratios undefined")
    lk, lh, r = _solve_shape(t3, t4)
    if not r < FIT_TOL:
        raise SolverFailure(f"L-moment ratios tau3={t3:.6g}, tau4={t4:.6g} lie outside the "
                            f"attainable AEP region (best residual {r:.3g})")
    kappa, h = math.exp(lk), math.exp(lh)
    lam = standard_lmoments(kappa, h)
    sigma = l2 / lam[1]
    return AepParams(kappa, h, sigma, l1 - sigma * lam[0])
