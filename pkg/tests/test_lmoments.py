import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from heavytail.errors import TooFewObservations
from heavytail.lmoments import pwm_to_lmoments, sample_lmoments, sample_pwm


def lmoments_by_subsets(x):
    """Hosking's definition: average over all size-r subsamples of the r-th L-statistic."""
    out = []
    for r in (1, 2, 3, 4):
        acc = []
        for sub in itertools.combinations(sorted(x), r):
            acc.append(sum((-1) ** k * math.comb(r - 1, k) * sub[r - 1 - k] for k in range(r)) / r)
        out.append(np.mean(acc))
    return np.array(out)


def test_matches_subset_definition():
    x = np.array([3.1, -0.4, 2.2, 7.5, 0.0, 1.3, 5.9, -2.8, 4.4])
    lam = pwm_to_lmoments(sample_pwm(x))
    assert np.allclose(lam, lmoments_by_subsets(x), atol=1e-12)


@given(arrays(np.float64, st.integers(4, 9), elements=st.floats(-100, 100)))
def test_subset_definition_property(x):
    lam = pwm_to_lmoments(sample_pwm(x))
    assert np.allclose(lam, lmoments_by_subsets(x), atol=1e-9)


def test_uniform_population_values():
    x = np.random.default_rng(0).uniform(size=400_000)
    l1, l2, t3, t4 = sample_lmoments(x)
    assert l1 == pytest.approx(0.5, abs=2e-3)
    assert l2 == pytest.approx(1 / 6, abs=1e-3)
    assert abs(t3) < 5e-3 and abs(t4) < 5e-3


def test_exponential_population_values():
    x = np.random.default_rng(1).exponential(size=400_000)
    l1, l2, t3, t4 = sample_lmoments(x)
    assert l2 == pytest.approx(0.5, abs=5e-3)
    assert t3 == pytest.approx(1 / 3, abs=5e-3)
    assert t4 == pytest.approx(1 / 6, abs=5e-3)


@given(arrays(np.float64, st.integers(5, 50), elements=st.floats(-1e3, 1e3)),
       st.floats(0.1, 10), st.floats(-100, 100))
def test_affine_equivariance(x, a, b):
    l1, l2, t3, t4 = sample_lmoments(x)
    m1, m2, s3, s4 = sample_lmoments(a * x + b)
    assert m1 == pytest.approx(a * l1 + b, abs=1e-6 * (1 + abs(b) + a * np.abs(x).max()))
    assert m2 == pytest.approx(a * l2, abs=1e-9 * (1 + a * np.abs(x).max()))
    if l2 > 1e-6 * (1 + np.abs(x).max()):
        assert s3 == pytest.approx(t3, abs=1e-6) and s4 == pytest.approx(t4, abs=1e-6)


def test_constant_sample_has_undefined_ratios():
    l1, l2, t3, t4 = sample_lmoments(np.full(10, 2.0))
    assert l1 == 2.0 and l2 == 0.0 and math.isnan(t3) and math.isnan(t4)


def test_too_few():
    with pytest.raises(TooFewObservations):
        sample_pwm([1.0, 2.0, 3.0])
