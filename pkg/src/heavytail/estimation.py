"""McCulloch quantile estimation of stable parameters and gated subsample fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

from . import _mcculloch as tab
from .aep import AepParams, aep_fit_lmoments
from .errors import DegenerateSpread, TooFewObservations
from .gof import binned_pair, log_likelihood, aic, soofi_id_score
from .stable import StableParams, cdf_std, pdf_std

MIN_QUANTILE_N = 5
MIN_MCCULLOCH_N = 1000
N_PARAMS = 4

# subsample class -> minimum size
PROBS = np.array([0.05, 0.25, 0.5, 0.75, 0.95])
GATES = {"national-year": 10000, "region-year": 5000, "region-pooled": 1000}

Model = Literal["levy", "aep"]


@dataclass(frozen=True)
class QuantileSummary:
    q05: float
    q25: float
    q50: float
    q75: float
    q95: float
    n: int

    @property
    def nu_alpha(self) -> float:
        return (self.q95 - self.q05) / (self.q75 - self.q25)

    @property
    def nu_beta(self) -> float:
        return (self.q95 + self.q05 - 2 * self.q50) / (self.q95 - self.q05)


def _finite(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=np.float64).ravel()
    return x[np.isfinite(x)]


def empirical_quantiles(sample) -> QuantileSummary:
    """Type-7 (linear interpolation) sample quantiles at 5, 25, 50, 75, 95 percent."""
    x = _finite(sample)
    if x.size < MIN_QUANTILE_N:
        raise TooFewObservations(x.size, MIN_QUANTILE_N)
    q = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95], method="linear")
    return QuantileSummary(*(float(v) for v in q), n=int(x.size))


def _interp(rows, cols, table):
    return RegularGridInterpolator((rows, cols), table, method="linear")


_PSI_ALPHA = _interp(tab.NU_ALPHA, tab.NU_BETA, tab.ALPHA_TABLE)
_PSI_BETA = _interp(tab.NU_ALPHA, tab.NU_BETA, tab.BETA_TABLE)
_PHI_C = _interp(tab.ALPHA, tab.BETA, tab.NU_C_TABLE)
_PHI_ZETA = _interp(tab.ALPHA, tab.BETA, tab.NU_ZETA_TABLE)


@dataclass(frozen=True)
class McCullochEstimate:
    """Point estimate plus the flags raised on the way through the tables."""

    params: StableParams
    summary: QuantileSummary
    flags: tuple[str, ...] = ()

    @property
    def beta_censored(self) -> bool:
        return "beta_clamped" in self.flags


def mcculloch_estimate(sample, *, refine: bool = False) -> McCullochEstimate:
    """McCulloch (1986) estimator; the returned location is already in S0.

    With ``refine`` the table estimate seeds an exact inversion of the same
    quantile statistics (see :func:`_refine`), which removes the grid's
    interpolation bias near |beta| = 1.

    The location table gives (zeta - q50)/c for the standardized law, and in
    S0 the standardized law is a plain location-scale family for every alpha,
    so zeta is the S0 location with no alpha = 1 adjustment.
    """
    x = _finite(sample)
    if x.size < MIN_MCCULLOCH_N:
        raise TooFewObservations(x.size, MIN_MCCULLOCH_N)
    qs = empirical_quantiles(x)
    if not qs.q75 > qs.q25:
        raise DegenerateSpread(f"interquartile range is zero (q25 = q75 = {qs.q25:g})")
    flags: list[str] = []
    nu_a, nu_b = qs.nu_alpha, qs.nu_beta
    sgn = 1.0 if nu_b >= 0 else -1.0
    nb = abs(nu_b)
    if nu_a < tab.NU_ALPHA[0]:
        alpha, beta = 2.0, 0.0
        flags.append("nu_alpha_below_grid")
    else:
        if nu_a > tab.NU_ALPHA[-1]:
            flags.append("nu_alpha_above_grid")
            nu_a = tab.NU_ALPHA[-1]
        pt = np.array([[nu_a, min(nb, tab.NU_BETA[-1])]])
        alpha = float(_PSI_ALPHA(pt)[0])
        beta = sgn * float(_PSI_BETA(pt)[0])
    if not 0.5 <= alpha <= 2.0:
        flags.append("alpha_clamped")
        alpha = min(max(alpha, 0.5), 2.0)
    if abs(beta) > 1.0:
        flags.append("beta_clamped")
        beta = math.copysign(1.0, beta)
    pt = np.array([[alpha, abs(beta)]])
    c = (qs.q75 - qs.q25) / float(_PHI_C(pt)[0])
    zeta = qs.q50 + c * math.copysign(1.0, beta) * float(_PHI_ZETA(pt)[0])
    est = McCullochEstimate(StableParams(alpha, beta, c, zeta), qs, tuple(flags))
    return _refine(est) if refine else est


def _std_quantiles(alpha: float, beta: float, z0: np.ndarray) -> np.ndarray:
    """Standardized S0 quantiles at PROBS by safeguarded Newton from ``z0``."""
    a = 1.0 if abs(alpha - 1.0) < 1e-6 else alpha
    z = np.array(z0, dtype=np.float64)
    lo = np.full(5, -np.inf)
    hi = np.full(5, np.inf)
    for _ in range(80):
        r = cdf_std(z, a, beta) - PROBS
        todo = np.abs(r) >= 1e-12
        if not np.any(todo):
            break
        lo = np.where(r < 0, z, lo)
        hi = np.where(r > 0, z, hi)
        if np.all(hi[todo] - lo[todo] < 1e-14 * (1 + np.abs(z[todo]))):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            step = z - r / pdf_std(z, a, beta)
        ok = np.isfinite(step) & (step > lo) & (step < hi)
        both = np.isfinite(lo) & np.isfinite(hi)
        with np.errstate(invalid="ignore"):
            fallback = np.where(both, 0.5 * (lo + hi),
                                np.where(np.isfinite(lo), z + 2 * (1 + np.abs(z)),
                                         z - 2 * (1 + np.abs(z))))
        z = np.where(todo, np.where(ok, step, fallback), z)
    return z


def _refine(est: McCullochEstimate) -> McCullochEstimate:
    """Invert the two index statistics against exact quantiles instead of the grid.

    Starts from the table estimate; gamma and delta then come from the exact
    interquartile range and median of the standardized law.
    """
    qs = est.summary
    p0 = est.params
    target = np.array([qs.nu_alpha, qs.nu_beta])
    emp = np.array([qs.q05, qs.q25, qs.q50, qs.q75, qs.q95])
    cache = {"z": (emp - p0.delta) / p0.gamma}

    def resid(v):
        z = _std_quantiles(v[0], v[1], cache["z"])
        if np.all(np.isfinite(z)):
            cache["z"] = z
        nu_a = (z[4] - z[0]) / (z[3] - z[1])
        nu_b = (z[4] + z[0] - 2 * z[2]) / (z[4] - z[0])
        return np.array([nu_a, nu_b]) - target

    x0 = np.array([min(max(p0.alpha, 0.5), 1.999), min(max(p0.beta, -0.999), 0.999)])
    sol = optimize.least_squares(resid, x0, bounds=([0.5, -1.0], [2.0, 1.0]),
                                 x_scale=[0.1, 0.1], xtol=1e-10, ftol=1e-12)
    alpha, beta = float(sol.x[0]), float(sol.x[1])
    flags = [f for f in est.flags if f not in ("alpha_clamped", "beta_clamped")]
    flags.append("refined")
    if abs(beta) >= 1.0 - 1e-9 and abs(sol.fun[1]) > 1e-6:
        flags.append("beta_clamped")
    if alpha >= 2.0 - 1e-9 and abs(sol.fun[0]) > 1e-6:
        flags.append("alpha_clamped")
    z = _std_quantiles(alpha, beta, cache["z"])
    c = (qs.q75 - qs.q25) / (z[3] - z[1])
    return McCullochEstimate(StableParams(alpha, beta, c, qs.q50 - c * z[2]), qs, tuple(flags))


def mcculloch_fit(sample, *, refine: bool = False) -> StableParams:
    """Stable parameters (S0) from five sample quantiles."""
    return mcculloch_estimate(sample, refine=refine).params


@dataclass(frozen=True, order=True)
class SubsampleKey:
    """(variable, year, region); ``year=None`` pools years, ``region="all"`` is national."""

    variable: str
    year: int | None = None
    region: str = "all"

    @property
    def gate_class(self) -> str:
        if self.region == "all":
            return "national-year"
        return "region-year" if self.year is not None else "region-pooled"

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.variable, "pooled" if self.year is None else str(self.year), self.region)


@dataclass(frozen=True)
class FitResult:
    params: StableParams | AepParams | None
    n: int
    sids: float
    aic: float
    loglik: float
    subsample_key: SubsampleKey
    model: str = "levy"
    status: str = "ok"
    flags: tuple[str, ...] = ()
    outside_clip: float = 0.0
    detail: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def gate_for(key: SubsampleKey, overrides: dict[str, int] | None = None) -> int:
    gates = {**GATES, **(overrides or {})}
    return int(gates[key.gate_class])


def skipped(key: SubsampleKey, n: int, model: str, reason: str) -> FitResult:
    nan = float("nan")
    return FitResult(None, n, nan, nan, nan, key, model=model, status="skipped", flags=(reason,))


def fit_subsample(values, key: SubsampleKey, model: Model = "levy", *,
                  gates: dict[str, int] | None = None, refine: bool = True) -> FitResult:
    """Fit one subsample and score it; below the size gate a skipped record is returned."""
    x = _finite(values)
    need = gate_for(key, gates)
    if x.size < need:
        return skipped(key, int(x.size), model, f"gate:{key.gate_class}<{need}")
    flags: tuple[str, ...] = ()
    if model == "levy":
        est = mcculloch_estimate(x, refine=refine)
        params, flags = est.params, est.flags
    elif model == "aep":
        params = aep_fit_lmoments(x)
    else:
        raise ValueError(f"unknown model {model!r}")
    pair = binned_pair(params, x)
    ll = log_likelihood(params, x)
    return FitResult(params, int(x.size), soofi_id_score(pair), aic(ll, N_PARAMS), ll, key,
                     model=model, flags=flags, outside_clip=pair.outside_mass)
