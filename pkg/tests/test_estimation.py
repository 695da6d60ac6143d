import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats._levy_stable import _fitstart_S0

from heavytail.errors import DegenerateSpread, TooFewObservations
from heavytail.estimation import (FitResult, SubsampleKey, empirical_quantiles, fit_subsample,
                                  gate_for, mcculloch_estimate, mcculloch_fit)
from heavytail.rng import derive
from heavytail.stable import StableParams, sample


def test_quantiles_of_one_to_five():
    assert empirical_quantiles([1, 2, 3, 4, 5]).q50 == 3


def test_quantiles_type7_interpolation():
    q = empirical_quantiles([0, 0, 0, 0, 100])
    # h = (n - 1) p = 3.8, so q95 = x[3] + 0.8 (x[4] - x[3])
    assert q.q50 == 0 and q.q95 == pytest.approx(80.0)


def test_quantiles_empty():
    with pytest.raises(TooFewObservations):
        empirical_quantiles([])


@given(arrays(np.float64, st.integers(5, 200), elements=st.floats(-1e6, 1e6)),
       st.randoms(use_true_random=False))
def test_quantiles_permutation_invariant_and_ordered(x, rnd):
    y = x.copy()
    rnd.shuffle(y)
    a, b = empirical_quantiles(x), empirical_quantiles(y)
    assert a == b
    assert a.q05 <= a.q25 <= a.q50 <= a.q75 <= a.q95


@pytest.mark.parametrize("p", [StableParams(1.0, 0.95, 0.11, 0.11), StableParams(1.5, 0.3, 1, 0),
                               StableParams(0.8, -0.5, 2, 1), StableParams(1.7, 0, 1, 0),
                               StableParams(1.2, 0.99, 0.5, -3)])
def test_table_estimate_matches_reference_implementation(p):
    x = sample(p, 50_000, seed=1)
    a, b, d, g = _fitstart_S0(x)  # location before scale in the reference
    est = mcculloch_fit(x)
    assert np.allclose(est.as_tuple(), (a, b, g, d), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("refine", [False, True])
def test_round_trip_first_table_row(refine):
    truth = StableParams(1.00, 0.95, 0.11, 0.11)
    est = mcculloch_fit(sample(truth, 100_000, seed=2), refine=refine)
    assert est.alpha == pytest.approx(1.00, abs=0.05)
    assert est.beta == pytest.approx(0.95, abs=0.10)
    assert est.gamma == pytest.approx(0.11, rel=0.05)
    assert est.delta == pytest.approx(0.11, abs=0.02)


def test_gaussian_boundary():
    x = np.random.default_rng(3).normal(0, np.sqrt(2), 100_000)
    est = mcculloch_estimate(x)
    assert est.params.alpha >= 1.95
    assert abs(est.params.beta) < 0.1
    assert est.params.gamma == pytest.approx(1.0, rel=0.03)
    assert est.params.delta == pytest.approx(0.0, abs=0.02)


def test_gate_below_minimum():
    with pytest.raises(TooFewObservations):
        mcculloch_fit(np.arange(999.0))


def test_degenerate_spread():
    x = np.r_[np.zeros(900), np.linspace(-5, 5, 100)]
    with pytest.raises(DegenerateSpread):
        mcculloch_fit(x)


def test_beta_clamp_is_flagged():
    # one-sided data pushes nu_beta past the table
    x = np.random.default_rng(4).pareto(0.7, 20_000)
    est = mcculloch_estimate(x)
    assert abs(est.params.beta) <= 1.0
    assert est.beta_censored == ("beta_clamped" in est.flags)


@pytest.mark.parametrize("scale,shift", [(3.0, -2.0), (-0.5, 1.0)])
def test_affine_equivariance(scale, shift):
    x = sample(StableParams(1.3, 0.5, 1.0, 0.0), 100_000, seed=5)
    a = mcculloch_fit(x, refine=True)
    b = mcculloch_fit(scale * x + shift, refine=True)
    assert b.alpha == pytest.approx(a.alpha, abs=1e-8)
    assert b.beta == pytest.approx(np.sign(scale) * a.beta, abs=1e-8)
    assert b.gamma == pytest.approx(abs(scale) * a.gamma, rel=1e-8)
    assert b.delta == pytest.approx(scale * a.delta + shift, abs=1e-7)


def test_permutation_invariance():
    x = sample(StableParams(1.1, 0.2), 5000, seed=6)
    y = np.random.default_rng(0).permutation(x)
    assert mcculloch_fit(x) == mcculloch_fit(y)


@pytest.mark.slow
@pytest.mark.parametrize("a", [0.8, 1.0, 1.3, 1.7])
@pytest.mark.parametrize("b", [0.0, 0.5, 0.95])
def test_consistency_error_shrinks_with_n(a, b):
    p = StableParams(a, b, 1.0, 0.0)
    medians = []
    for n in (1_000, 10_000, 100_000):
        errs = []
        for r in range(50):
            est = mcculloch_fit(sample(p, n, derive(7, (a, b, n, r))))
            errs.append(abs(est.alpha - a) + abs(est.beta - b))
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_refine_reproduces_exact_quantile_statistics():
    p = StableParams(1.25, 0.6, 1.0, 0.0)
    from heavytail.stable import quantile
    q = quantile(p, [0.05, 0.25, 0.5, 0.75, 0.95])
    # a sample whose type-7 quantiles are exactly the population quantiles
    x = np.interp(np.linspace(0, 1, 10_001), [0, 0.05, 0.25, 0.5, 0.75, 0.95, 1],
                  [q[0] - 5, *q, q[4] + 5])
    est = mcculloch_fit(x, refine=True)
    assert np.allclose(est.as_tuple(), p.as_tuple(), atol=1e-6)


# ---- gated subsample fits -------------------------------------------------------------

def test_gates_by_class():
    assert gate_for(SubsampleKey("LP", 1998, "all")) == 10_000
    assert gate_for(SubsampleKey("LP", 1998, "R11")) == 5_000
    assert gate_for(SubsampleKey("LP", None, "R11")) == 1_000
    assert gate_for(SubsampleKey("LP", 1998, "all"), {"national-year": 10}) == 10


def test_fit_subsample_table_row():
    truth = StableParams(1.00, 0.95, 0.11, 0.11)
    x = sample(truth, 140_372, seed=9)
    key = SubsampleKey("LP", 1998)
    lev = fit_subsample(x, key, "levy")
    assert lev.ok and lev.n == 140_372
    assert lev.sids > 95
    p = lev.params
    assert p.alpha == pytest.approx(1.0, abs=0.05) and p.beta == pytest.approx(0.95, abs=0.10)
    assert p.gamma == pytest.approx(0.11, rel=0.05) and p.delta == pytest.approx(0.11, abs=0.02)
    aep = fit_subsample(x, key, "aep")
    assert aep.aic > lev.aic
    assert lev.aic == pytest.approx(8 - 2 * lev.loglik)


def test_fit_subsample_below_gate_is_skipped():
    res = fit_subsample(np.arange(500.0), SubsampleKey("LP", 2000, "R31"))
    assert isinstance(res, FitResult)
    assert res.status == "skipped" and res.params is None and not res.ok
    assert res.flags == ("gate:region-year<5000",)


def test_fit_subsample_unknown_model():
    with pytest.raises(ValueError):
        fit_subsample(np.arange(20_000.0), SubsampleKey("LP"), "gauss")


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_fit_subsample_sids_in_range(seed):
    x = sample(StableParams(1.4, 0.2), 12_000, seed)
    res = fit_subsample(x, SubsampleKey("LP", 2001), "levy")
    assert 0 <= res.sids <= 100
