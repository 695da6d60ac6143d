import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from heavytail import experiments as ex
from heavytail import firmpanel as fp
from heavytail.aep import AepParams
from heavytail.errors import DomainError, PreconditionError
from heavytail.stable import StableParams, cdf as stable_cdf

SMALL = {"R11": ("11", 0.5), "R31": ("31", 0.5)}


def small_spec(n=400, years=range(2000, 2004), **kw):
    return ex.SynthSpec({(y, r): ex.CellSpec(StableParams(1.2, 0.5, 0.2, 0.3), n)
                         for y in years for r in SMALL}, {r: p for r, (p, _) in SMALL.items()}, **kw)


def derived_from(spec, seed, tmp_path):
    paths = ex.write_synth(spec, seed, tmp_path)
    return fp.build_panel(paths["panel"], fp.load_deflators(paths["deflators"]),
                          fp.load_zipmap(paths["zipmap"]))


# ---- config and spec validation ------------------------------------------------


def test_config_validation():
    with pytest.raises(PreconditionError):
        ex.ExperimentConfig(groupings=())
    with pytest.raises(PreconditionError):
        ex.ExperimentConfig(groupings=("decade",))
    with pytest.raises(PreconditionError):
        ex.ExperimentConfig(models=("gauss",))
    with pytest.raises(PreconditionError):
        ex.ExperimentConfig(seed=None)


def test_synth_spec_validation():
    with pytest.raises(PreconditionError):
        ex.SynthSpec({}, {})
    with pytest.raises(PreconditionError):
        ex.SynthSpec({(2000, "X"): ex.CellSpec(StableParams(1.5, 0), 1)}, {})
    with pytest.raises(PreconditionError):
        small_spec(link_density=1.5)


def test_published_lp_spec_counts():
    spec = ex.published_lp_spec()
    for year, (a, b, g, d, n) in ex.PUBLISHED_LP.items():
        cells = [c for (y, _), c in spec.cells.items() if y == year]
        assert sum(c.count for c in cells) == n
        assert all(c.params == StableParams(a, b, g, d) for c in cells)


def test_published_rows_match_published_values():
    assert ex.PUBLISHED_LP[1998] == (1.00, 0.95, 0.11, 0.11, 140372)
    assert ex.PUBLISHED_LP[2007] == (0.99, 0.95, 0.36, 0.43, 321390)
    assert len(ex.PUBLISHED_LP) == 10


# ---- synthetic population --------------------------------------------------------


def test_single_firm_one_row_per_year():
    spec = ex.SynthSpec({(y, "R"): ex.CellSpec(StableParams(1.0, 0.95, 0.11, 0.11), 1)
                         for y in range(1998, 2003)}, {"R": "31"}, link_density=1.0, relink_share=0)
    panel = ex.synth_population(spec, 3).panel
    assert panel["year"].tolist() == list(range(1998, 2003))
    assert panel["firm_id"].nunique() == 1
    assert list(panel.columns) == list(fp.SCHEMA)


def test_synth_is_byte_identical(tmp_path):
    a = ex.write_synth(small_spec(), 11, tmp_path / "a")
    b = ex.write_synth(small_spec(), 11, tmp_path / "b")
    for k in a:
        assert open(a[k], "rb").read() == open(b[k], "rb").read()
    c = ex.write_synth(small_spec(), 12, tmp_path / "c")
    assert open(a["panel"], "rb").read() != open(c["panel"], "rb").read()


def test_derived_lp_is_exactly_the_drawn_sample(tmp_path):
    spec = small_spec(duplicate_share=0.02)
    truth = ex.synth_population(spec, 5).truth
    run = derived_from(spec, 5, tmp_path)
    assert len(run.deduped.duplicates) == round(0.02 * len(truth))
    p = run.derived.panel
    np.testing.assert_array_equal(p["firm_id"].to_numpy(), truth["firm_id"].to_numpy())
    np.testing.assert_array_equal(p["LP"].to_numpy(), truth["LP"].to_numpy())
    assert (p["region"] == truth["region"]).all()


def test_synth_chains_are_linked(tmp_path):
    spec = small_spec(link_density=0.8, relink_share=0.1)
    run = derived_from(spec, 6, tmp_path)
    links = run.linkage.links
    per_year = links.groupby("year").size()
    assert (per_year == 2 * round(0.8 * 400)).all()
    assert (links["method"] == "phone_zip").sum() > 0
    assert len(run.linkage.ambiguous) == 0


def test_cell_sample_follows_its_law():
    spec = ex.SynthSpec({(2000, "R"): ex.CellSpec(StableParams(1.5, 0.0, 1.0, 0.0), 20_000)},
                        {"R": "31"})
    lp = ex.synth_population(spec, 8).truth["LP"].to_numpy()
    ks = stats.kstest(lp, lambda x: stable_cdf(StableParams(1.5, 0.0), x))
    assert ks.pvalue > 1e-3


# ---- fit tables -----------------------------------------------------------------------


def _national_panel(tmp_path, n=2000):
    spec = ex.published_lp_spec(scale=1.0, regions={"R": ("31", 1.0)})
    spec = ex.SynthSpec({k: ex.CellSpec(c.params, n) for k, c in spec.cells.items()},
                        spec.zip_prefix)
    return derived_from(spec, 9, tmp_path).derived.panel


def test_fit_table_shape_and_gate(tmp_path):
    panel = _national_panel(tmp_path)
    cfg = ex.ExperimentConfig(groupings=("year", "year-region"), seed=1,
                              gates={"national-year": 1000, "region-year": 5000})
    t = ex.fit_table(panel, cfg)
    assert list(t.columns) == ex.FIT_COLUMNS
    nat = t[t["region"] == "all"]
    assert len(nat) == 20
    assert (nat["model"].value_counts() == 10).all()
    assert (nat["status"] == "ok").all()
    assert nat["preferred"].isin(["levy", "aep", "even", "-"]).all()
    assert nat[["delta_sids", "delta_aic"]].notna().all().all()
    reg = t[t["region"] != "all"]
    assert len(reg) == 20 and reg["status"].str.startswith("skipped").all()
    assert reg["preferred"].eq("").all()
    assert t["year"].tolist()[:2] == ["1998", "1998"]
    rep = ex.fit_report(t)
    assert rep.count("skipped") == 20 and "[LP]" in rep


def test_fit_table_independent_of_thread_count(tmp_path):
    panel = _national_panel(tmp_path, n=1500)
    kw = dict(seed=1, gates={"national-year": 1000})
    a = ex.fit_table(panel, ex.ExperimentConfig(threads=1, **kw))
    b = ex.fit_table(panel, ex.ExperimentConfig(threads=6, **kw))
    pd.testing.assert_frame_equal(a, b)
    assert ex.fit_report(a) == ex.fit_report(b)


def test_unknown_region_excluded_from_regional_fits():
    panel = pd.DataFrame({"year": [2000] * 4, "region": ["A", "unknown", "A", "unknown"],
                          "LP": [1.0, 2.0, 3.0, 4.0]})
    keys = ex.subsample_keys(panel, ex.ExperimentConfig(groupings=("year", "region")))
    assert [k.region for k in keys] == ["all", "A"]
    assert ex._values(panel, keys[0]).size == 4


def test_published_round_trip_recovers_alpha(published_panel):
    _, table = published_panel
    levy = table[(table["model"] == "levy") & (table["region"] == "all")].set_index("year")
    for year, (a, *_rest) in ex.PUBLISHED_LP.items():
        assert abs(levy.loc[str(year), "alpha/kappa"] - a) <= 0.05, year


def test_published_fits_prefer_levy(published_panel):
    _, table = published_panel
    levy = table[(table["model"] == "levy") & (table["region"] == "all")]
    assert (levy["delta_aic"] < 0).all()
    assert (levy["sids"] > 95).all()


# ---- density export ----------------------------------------------------------------------


def test_density_gaussian_closed_form():
    grid = ex.GridSpec(-8, 8, 400)
    p = StableParams(2.0, 0.0, 1.0, 0.0)
    d = ex.density_export([ex.DensitySeries("g", p)], grid)
    g = stats.norm(scale=math.sqrt(2))
    mass = g.cdf(8) - g.cdf(-8)
    # bin averages of the closed form, and the point values they approximate
    want = np.diff(g.cdf(grid.edges)) / np.diff(grid.edges)
    np.testing.assert_allclose(d["fitted"] * mass, want, atol=1e-9)
    np.testing.assert_allclose(d["fitted"], g.pdf(d["x"]), atol=1e-4)
    assert d["empirical"].isna().all()


def test_density_integrates_to_one():
    from heavytail.stable import sample
    p = StableParams(1.0, 0.95, 0.11, 0.11)
    x = sample(p, 50_000, seed=3)
    grid = ex.GridSpec(-2, 5, 700)
    d = ex.density_export([ex.DensitySeries("lp", p, x),
                           ex.DensitySeries("aep", AepParams(0.5, 0.6, 0.05, 0.1))], grid)
    w = 7 / 700
    for sid, sub in d.groupby("series_id"):
        assert sub["fitted"].sum() * w == pytest.approx(1.0, abs=1e-3), sid
    emp = d[d["series_id"] == "lp"]["empirical"]
    assert emp.sum() * w == pytest.approx(1.0, abs=1e-12)


def test_density_mode_moves_right():
    grid = ex.GridSpec(-1, 3, 2000)
    a = ex.PUBLISHED_LP[1998][:4]
    b = ex.PUBLISHED_LP[2007][:4]
    d = ex.density_export([ex.DensitySeries("1998", StableParams(*a)),
                           ex.DensitySeries("2007", StableParams(*b))], grid)
    mode = {s: sub["x"].to_numpy()[np.argmax(sub["fitted"].to_numpy())]
            for s, sub in d.groupby("series_id")}
    assert mode["2007"] > mode["1998"]


def test_density_semilog_shapes():
    grid = ex.GridSpec(5, 60, 56)
    d = ex.density_export([ex.DensitySeries("s", StableParams(1.5, 0.0)),
                           ex.DensitySeries("a", AepParams(1.0, 1.0, 1.0, 0.0))], grid)
    s = np.log(d[d["series_id"] == "s"]["fitted"].to_numpy())
    a = np.log(d[d["series_id"] == "a"]["fitted"].to_numpy())
    assert (np.diff(s, 2) > 0).all()
    np.testing.assert_allclose(np.diff(a, 2), 0.0, atol=1e-9)


def test_density_empty_grid_or_series():
    with pytest.raises(PreconditionError):
        ex.GridSpec(0, 1, 0)
    with pytest.raises(PreconditionError):
        ex.GridSpec(1, 1, 10)
    with pytest.raises(PreconditionError):
        ex.density_export([], ex.GridSpec(0, 1, 10))


# ---- GCLT ------------------------------------------------------------------------------


def test_gclt_uniform_gaussian_limit():
    t = ex.gclt_experiment(ex.Component("uniform"), [1000], 20_000, 1)
    assert t["alpha_hat"].iloc[0] >= 1.95


def test_gclt_pareto_limit():
    t = ex.gclt_experiment(ex.Component("pareto", tail=1.5), [1000], 20_000, 2)
    assert t["alpha_hat"].iloc[0] == pytest.approx(1.5, abs=0.1)


def test_gclt_stable_components_stay_stable():
    comp = ex.Component("stable", params=StableParams(1.1, 0.0))
    t = ex.gclt_experiment(comp, [1, 10, 100], 20_000, 3)
    assert np.all(np.abs(t["alpha_hat"] - 1.1) <= 0.05)


def test_gclt_deterministic_and_thread_free():
    comp = ex.Component("aep", params=AepParams(1.0, 1.0, 1.0))
    a = ex.gclt_experiment(comp, [10], 5000, 4, threads=1)
    b = ex.gclt_experiment(comp, [10], 5000, 4, threads=4)
    pd.testing.assert_frame_equal(a, b)


def test_gclt_bad_inputs():
    with pytest.raises(PreconditionError):
        ex.Component("cauchy")
    with pytest.raises(PreconditionError):
        ex.Component("stable")
    with pytest.raises(PreconditionError):
        ex.gclt_experiment(ex.Component("uniform"), [10], 10, 0)


def test_normalize_sums():
    z = ex.normalize_sums(np.arange(101.0))
    assert np.median(z) == 0.0
    q25, q75 = np.quantile(z, [0.25, 0.75])
    assert q75 - q25 == pytest.approx(1.0)


# ---- variance divergence -------------------------------------------------------------------


def test_variance_alpha_two_rejected():
    with pytest.raises(DomainError):
        ex.variance_divergence(StableParams(2.0, 0.0), [100, 1000], 5, 0)


def test_variance_slope_positive_alpha_15():
    rep = ex.variance_divergence(StableParams(1.5, 0.0), [1000, 10_000, 100_000], 40, 1)
    assert rep.slope > 0
    assert np.all(np.diff(rep.table["median_variance"]) > 0)
    assert rep.slope_stated == pytest.approx(1 / 6) and rep.slope_common == pytest.approx(1 / 3)
    text = rep.text()
    assert "(2 - alpha) / (2 alpha): 0.1667" in text and "2 / alpha - 1: 0.3333" in text
