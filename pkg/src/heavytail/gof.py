"""Goodness of fit: binned KL divergence, Soofi ID score, log-likelihood, AIC, model comparison."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .aep import AepParams, aep_logpdf, aep_quantile
from .errors import EmptySupport, PreconditionError
from .stable import StableParams, logpdf as stable_logpdf, quantile as stable_quantile

N_BINS = 200
CLIP = (0.001, 0.999)
SIDS_PASS = 95.0


class EmptySampleWarning(UserWarning):
    """Log-likelihood of an empty sample was requested; 0 is returned by convention."""


@dataclass(frozen=True, eq=False)
class BinnedDensityPair:
    """Empirical (p) and model (q) bin probabilities over shared edges.

    ``outside_mass`` is the empirical fraction that fell outside the edges and was
    dropped before ``p`` was normalized.
    """

    edges: np.ndarray
    p: np.ndarray
    q: np.ndarray
    outside_mass: float = 0.0
    n: int = 0

    def __post_init__(self):
        if self.p.shape != self.q.shape or self.edges.shape[0] != self.p.shape[0] + 1:
            raise PreconditionError("edges, p and q have inconsistent lengths")


def pair_from_probs(p, q) -> BinnedDensityPair:
    """Pair from raw bin weights; both sides are normalized to sum to 1."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.sum() <= 0:
        raise EmptySupport("no bin carries empirical mass")
    edges = np.arange(p.size + 1, dtype=np.float64)
    return BinnedDensityPair(edges, p / p.sum(), q / q.sum())


def model_quantile(model: StableParams | AepParams, u):
    if isinstance(model, StableParams):
        return stable_quantile(model, u)
    return aep_quantile(model, u)


def binned_pair(model: StableParams | AepParams, sample, n_bins: int = N_BINS,
                clip: tuple[float, float] = CLIP) -> BinnedDensityPair:
    """Equal-probability bins under ``model`` between its ``clip`` quantiles."""
    x = np.asarray(sample, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    edges = np.asarray(model_quantile(model, np.linspace(clip[0], clip[1], n_bins + 1)))
    if not np.all(np.diff(edges) > 0):
        raise PreconditionError("model quantiles do not give strictly increasing bin edges")
    counts, _ = np.histogram(x, bins=edges)
    inside = int(counts.sum())
    if inside == 0:
        raise EmptySupport("no observation falls inside the model's central quantile range")
    p = counts / inside
    q = np.full(n_bins, 1.0 / n_bins)
    return BinnedDensityPair(edges, p, q, outside_mass=1.0 - inside / x.size, n=int(x.size))


def kl_divergence(pair: BinnedDensityPair) -> float:
    """sum p log(p / q) in nats, with 0 log 0 = 0."""
    p, q = pair.p, pair.q
    pos = p > 0
    if not np.any(pos):
        raise EmptySupport("no bin carries empirical mass")
    if np.any(q[pos] <= 0):
        raise EmptySupport("empirical mass in bins where the model has none")
    return max(float(np.sum(p[pos] * np.log(p[pos] / q[pos]))), 0.0)


def soofi_id_score(pair: BinnedDensityPair) -> float:
    """100 exp(-KL): 100 for a bin-wise perfect match, decreasing in the divergence."""
    return 100.0 * math.exp(-kl_divergence(pair))


def log_likelihood(model: StableParams | AepParams, sample, *, exact: bool = False) -> float:
    """Sum of log densities; stable densities come from the cached grid unless ``exact``."""
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size == 0:
        warnings.warn("empty sample: log-likelihood taken as 0", EmptySampleWarning, stacklevel=2)
        return 0.0
    if isinstance(model, StableParams):
        lp = stable_logpdf(model, x, exact=exact)
    else:
        lp = aep_logpdf(model, x)
    return float(np.sum(lp))


def aic(loglik: float, k: int) -> float:
    if k < 1:
        raise PreconditionError(f"parameter count must be at least 1, got {k}")
    return 2.0 * k - 2.0 * loglik


@dataclass(frozen=True)
class Comparison:
    levy_sids: float
    levy_aic: float
    aep_sids: float
    aep_aic: float
    delta_sids: float
    delta_aic: float
    preferred: str


def preferred_model(levy_sids: float, levy_aic: float, aep_sids: float, aep_aic: float,
                    threshold: float = SIDS_PASS) -> str:
    """'levy', 'aep', 'even' or '-'.

    A model is preferred when it is better in SIDS or in AIC, provided its
    SIDS exceeds the threshold; when the two criteria pick different models
    that both pass, the result is 'even'.
    """
    ok = {"levy": levy_sids > threshold, "aep": aep_sids > threshold}
    by_sids = "levy" if levy_sids > aep_sids else "aep" if aep_sids > levy_sids else None
    by_aic = "levy" if levy_aic < aep_aic else "aep" if aep_aic < levy_aic else None
    winners = {w for w in (by_sids, by_aic) if w is not None and ok[w]}
    if len(winners) == 1:
        return winners.pop()
    if len(winners) == 2 or (not winners and ok["levy"] and ok["aep"]):
        return "even"
    return "-"


def compare_scores(levy_sids: float, levy_aic: float, aep_sids: float, aep_aic: float) -> Comparison:
    return Comparison(levy_sids, levy_aic, aep_sids, aep_aic, levy_sids - aep_sids,
                      levy_aic - aep_aic, preferred_model(levy_sids, levy_aic, aep_sids, aep_aic))


def compare_models(sample, levy_fit, aep_fit) -> Comparison:
    """Score two fits on the same sample; fits may be parameter objects or scored results."""
    scores = []
    for fit in (levy_fit, aep_fit):
        if isinstance(fit, (StableParams, AepParams)):
            ll = log_likelihood(fit, sample)
            scores.append((soofi_id_score(binned_pair(fit, sample)), aic(ll, 4)))
        else:
            scores.append((fit.sids, fit.aic))
    return compare_scores(scores[0][0], scores[0][1], scores[1][0], scores[1][1])
