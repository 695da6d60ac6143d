"""Sample L-moments from unbiased probability-weighted moments."""
from __future__ import annotations

import numpy as np

from .errors import TooFewObservations


def sample_pwm(sample, nmom: int = 4) -> np.ndarray:
    """Unbiased b_0 .. b_{nmom-1}, with b_r = E[X F(X)^r] estimated from order statistics."""
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = x.size
    if n < nmom:
        raise TooFewObservations(n, nmom)
    i = np.arange(n, dtype=np.float64)  # i = rank - 1
    w = np.ones(n)
    b = np.empty(nmom)
    b[0] = x.mean()
    for r in range(1, nmom):
        w = w * (i - (r - 1)) / (n - r)
        b[r] = np.dot(w, x) / n
    return b


def pwm_to_lmoments(b) -> np.ndarray:
    """lambda_1 .. lambda_4 from beta_0 .. beta_3 (shifted Legendre weights)."""
    b0, b1, b2, b3 = b[:4]
    return np.array([
        b0,
        2 * b1 - b0,
        6 * b2 - 6 * b1 + b0,
        20 * b3 - 30 * b2 + 12 * b1 - b0,
    ])


def sample_lmoments(sample) -> tuple[float, float, float, float]:
    """(l1, l2, t3, t4); the ratios are nan when l2 = 0."""
    lam = pwm_to_lmoments(sample_pwm(sample, 4))
    with np.errstate(divide="ignore", invalid="ignore"):
        t3 = lam[2] / lam[1]
        t4 = lam[3] / lam[1]
    return float(lam[0]), float(lam[1]), float(t3), float(t4)
