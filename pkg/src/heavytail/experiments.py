"""Experiment drivers: synthetic panels, fit tables, density exports, GCLT and variance studies.

All randomness flows from one integer seed through :func:`heavytail.rng.derive`,
keyed by the task (year, region, replicate, ...), so results do not depend on
how tasks are scheduled across threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from . import firmpanel as fp
from .aep import AepParams, aep_cdf, aep_pdf, aep_sample
from .errors import DomainError, HeavyTailError, PreconditionError
from .estimation import FitResult, SubsampleKey, fit_subsample, mcculloch_fit
from .gof import compare_scores
from .rng import derive, generator
from .stable import StableParams, cdf as stable_cdf, pdf as stable_pdf, sample as stable_sample

# Published LP rows used as synthetic ground truth: year -> (alpha, beta, gamma, delta, n)
PUBLISHED_LP = {
    1998: (1.00, 0.95, 0.11, 0.11, 140372),
    1999: (1.06, 0.95, 0.12, 0.13, 147492),
    2000: (0.97, 0.95, 0.14, 0.14, 145724),
    2001: (1.08, 0.95, 0.15, 0.18, 157083),
    2002: (1.08, 0.95, 0.17, 0.20, 167723),
    2003: (1.04, 0.95, 0.21, 0.28, 11288),
    2004: (1.06, 0.95, 0.20, 0.25, 265218),
    2005: (1.03, 0.95, 0.25, 0.30, 260200),
    2006: (1.00, 0.95, 0.30, 0.36, 287854),
    2007: (0.99, 0.95, 0.36, 0.43, 321390),
}

GROUPINGS = ("year", "year-region", "region")
MODELS = ("levy", "aep")
FIT_COLUMNS = ["variable", "year", "region", "model", "alpha/kappa", "beta/h", "gamma/sigma",
               "delta/xi", "n", "loglik", "aic", "sids", "delta_sids", "delta_aic", "preferred",
               "status"]


@dataclass(frozen=True)
class ExperimentConfig:
    variables: tuple[str, ...] = ("LP",)
    groupings: tuple[str, ...] = ("year",)
    models: tuple[str, ...] = MODELS
    seed: int = 0
    output_dir: str = "out"
    gates: Mapping[str, int] = field(default_factory=dict)
    threads: int = 4
    refine: bool = True

    def __post_init__(self):
        if not self.groupings:
            raise PreconditionError("at least one grouping is required")
        bad = [g for g in self.groupings if g not in GROUPINGS]
        if bad:
            raise PreconditionError(f"unknown groupings {bad}; choose from {GROUPINGS}")
        bad = [m for m in self.models if m not in MODELS]
        if bad:
            raise PreconditionError(f"unknown models {bad}; choose from {MODELS}")
        if self.seed is None or int(self.seed) != self.seed:
            raise PreconditionError("an explicit integer seed is required")
        if self.threads < 1:
            raise PreconditionError("threads must be at least 1")


def _pool_map(fn: Callable, tasks: Sequence, threads: int) -> list:
    """Results in task order regardless of completion order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


# ---- synthetic population --------------------------------------------------------


@dataclass(frozen=True)
class CellSpec:
    params: StableParams
    count: int


@dataclass(frozen=True)
class SynthSpec:
    """LP law and firm count per (year, region), plus chain structure.

    ``link_density`` is the share of a cell's firms continuing from the same
    region's previous year; ``relink_share`` of those change id and are only
    recoverable through (phone, zip). ``zip_prefix`` maps regions to the ZIP
    prefix used for their firms.
    """

    cells: Mapping[tuple[int, str], CellSpec]
    zip_prefix: Mapping[str, str]
    link_density: float = 0.8
    relink_share: float = 0.05
    duplicate_share: float = 0.0

    def __post_init__(self):
        if not self.cells:
            raise PreconditionError("a synthetic spec needs at least one cell")
        for (year, region), cell in self.cells.items():
            if cell.count < 1:
                raise PreconditionError(f"cell {(year, region)} has count {cell.count}")
            if region not in self.zip_prefix:
                raise PreconditionError(f"region {region!r} has no ZIP prefix")
        for name in ("link_density", "relink_share", "duplicate_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise PreconditionError(f"{name} must lie in [0, 1], got {v}")

    @property
    def years(self) -> list[int]:
        return sorted({y for y, _ in self.cells})

    @property
    def regions(self) -> list[str]:
        return sorted({r for _, r in self.cells})


DEFAULT_REGIONS = {"R11": ("11", 0.45), "R31": ("31", 0.35), "R44": ("44", 0.20)}


def published_lp_spec(scale: float = 1.0, regions: Mapping[str, tuple[str, float]] | None = None,
                years: Iterable[int] | None = None, **kw) -> SynthSpec:
    """Spec seeded by the published LP rows; counts split across regions by share."""
    regions = DEFAULT_REGIONS if regions is None else regions
    cells = {}
    for year in (years or PUBLISHED_LP):
        a, b, g, d, n = PUBLISHED_LP[year]
        total = max(1, int(round(n * scale)))
        shares = np.array([s for _, s in regions.values()], dtype=np.float64)
        counts = np.floor(total * shares / shares.sum()).astype(int)
        counts[0] += total - counts.sum()
        for (name, _), c in zip(regions.items(), counts):
            if c > 0:
                cells[(year, name)] = CellSpec(StableParams(a, b, g, d), int(c))
    return SynthSpec(cells, {k: v[0] for k, v in regions.items()}, **kw)


MANTISSA_BITS = 40


def _round_bits(x: np.ndarray, bits: int = MANTISSA_BITS) -> np.ndarray:
    m, e = np.frexp(x)
    return np.ldexp(np.round(np.ldexp(m, bits)), e - bits)


def _split_output(va: np.ndarray, share: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(Q, II) with Q - II == va exactly.

    ``va`` carries at most MANTISSA_BITS significant bits, so II rounded to the
    same grid keeps Q = va + II within 53 bits and both operations exact.
    """
    _, e = np.frexp(va)
    grid = np.ldexp(1.0, e - MANTISSA_BITS)
    ii = np.round(np.abs(va) * (1.0 + share) / grid) * grid
    ii = np.where(va == 0, 1.0, ii)
    return va + ii, ii


class SynthPanel(NamedTuple):
    panel: pd.DataFrame
    deflators: fp.DeflatorTable
    truth: pd.DataFrame  # firm_id, year, region, LP as drawn


def synth_population(spec: SynthSpec, seed: int) -> SynthPanel:
    """Firm-year panel (input schema) whose derived LP per cell is the cell's stable sample.

    Employment is a power of two and the LP draw is rounded to a 40-bit
    mantissa, so VA = LP * L, Q - II and VA / L are all exact. Deflator
    indices are powers of two for the same reason; monetary fields are written
    in nominal terms (real value times index).
    """
    rng_ids = generator(derive(seed, "firm-ids"))
    sectors = np.array(["13", "17", "26", "34", "39"])
    deflators = {(s, y): float(2.0 ** rng_ids.integers(-1, 2)) for s in sectors
                 for y in spec.years}
    next_id = [0]

    def new_ids(k):
        ids = np.arange(next_id[0], next_id[0] + k)
        next_id[0] += k
        return ids

    frames = []
    alive: dict[str, pd.DataFrame] = {}
    for year in spec.years:
        for region in spec.regions:
            cell = spec.cells.get((year, region))
            if cell is None:
                alive.pop(region, None)
                continue
            rng = generator(derive(seed, ("cell", year, region)))
            n = cell.count
            prev = alive.get(region)
            n_cont = 0 if prev is None else min(int(round(spec.link_density * n)), len(prev))
            cont = (prev.iloc[np.sort(rng.choice(len(prev), n_cont, replace=False))]
                    if n_cont else None)
            n_new = n - n_cont
            serial = new_ids(n_new)
            prefix = spec.zip_prefix[region]
            base = pd.DataFrame({
                "uid": serial,
                "phone": [f"{800000000 + s:010d}" for s in serial],
                "zip": [prefix + f"{int(z):0{max(6 - len(prefix), 0)}d}"
                        for z in rng.integers(0, 10 ** max(6 - len(prefix), 0), n_new)],
                "founding_year": year - rng.integers(0, 30, n_new),
                "sector": sectors[rng.integers(0, len(sectors), n_new)],
                "ownership": np.array(fp.OWNERSHIP)[rng.integers(0, len(fp.OWNERSHIP), n_new)],
                "firm_id": [f"F{s:09d}" for s in serial],
                "capital": np.ldexp(1.0, rng.integers(2, 14, n_new)),
            })
            if cont is not None:
                cont = cont.copy()
                relink = rng.uniform(size=n_cont) < spec.relink_share
                fresh = new_ids(int(relink.sum()))
                ids = cont["firm_id"].to_numpy(dtype=object)
                ids[relink] = [f"F{s:09d}" for s in fresh]
                cont["firm_id"] = ids
                # capital grows by a power-of-two ratio so investment rates stay exact
                cont["capital"] = cont["capital"].to_numpy() * np.ldexp(
                    1.0, rng.integers(-1, 2, n_cont))
                base = pd.concat([cont[base.columns], base], ignore_index=True)
            lp = _round_bits(stable_sample(cell.params, n, rng))
            lab = np.ldexp(1.0, np.minimum(rng.geometric(0.3, n) - 1, 12))
            va = lp * lab
            q, ii = _split_output(va, rng.uniform(0.5, 2.5, n))
            wages = np.ldexp(np.round(rng.uniform(1, 8, n) * 64), -6) * lab
            cap = base["capital"].to_numpy()
            profits = np.round(cap * rng.normal(0.08, 0.2, n) * 256) / 256
            frame = base.assign(year=year, output=q, intermediate_input=ii, wages=wages,
                                profits=profits, employment=lab, region=region, lp_true=lp)
            alive[region] = frame
            frames.append(frame)
    panel = pd.concat(frames, ignore_index=True)
    idx = np.array([deflators[(s, y)] for s, y in zip(panel["sector"], panel["year"])])
    for c in fp.MONETARY:
        panel[c] = panel[c].to_numpy() * idx
    truth = panel[["firm_id", "year", "region", "lp_true"]].rename(columns={"lp_true": "LP"})
    truth = truth.sort_values(["year", "firm_id"], kind="mergesort").reset_index(drop=True)
    if spec.duplicate_share > 0:
        rng = generator(derive(seed, "duplicates"))
        k = int(round(spec.duplicate_share * len(panel)))
        dup = panel.iloc[np.sort(rng.choice(len(panel), k, replace=False))].copy()
        dup["output"] = dup["output"] * 2
        panel = pd.concat([panel, dup], ignore_index=True)
    panel = panel.sort_values(["year", "firm_id"], kind="mergesort").reset_index(drop=True)
    return SynthPanel(panel[list(fp.SCHEMA)], fp.DeflatorTable(deflators), truth)


def write_synth(spec: SynthSpec, seed: int, out_dir) -> dict[str, str]:
    """Panel, deflator and ZIP-map CSVs for :func:`synth_population`."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel, table, _ = synth_population(spec, seed)
    paths = {"panel": out / "panel.csv", "deflators": out / "deflators.csv",
             "zipmap": out / "zipmap.csv"}
    fp.write_frame(panel, paths["panel"])
    defl = pd.DataFrame([(s, y, v) for (s, y), v in sorted(table.factors.items())],
                        columns=["sector", "year", "deflator"])
    fp.write_frame(defl, paths["deflators"])
    zm = pd.DataFrame(sorted((p, r) for r, p in spec.zip_prefix.items()),
                      columns=["prefix", "province"])
    fp.write_frame(zm, paths["zipmap"])
    return {k: str(v) for k, v in paths.items()}


# ---- fit tables ---------------------------------------------------------------------


def subsample_keys(panel: pd.DataFrame, config: ExperimentConfig) -> list[SubsampleKey]:
    years = sorted(int(y) for y in panel["year"].unique())
    regions = sorted(r for r in panel["region"].unique() if r != fp.UNKNOWN_REGION)
    keys = []
    for var in config.variables:
        if "year" in config.groupings:
            keys += [SubsampleKey(var, y) for y in years]
        if "year-region" in config.groupings:
            keys += [SubsampleKey(var, y, r) for y in years for r in regions]
        if "region" in config.groupings:
            keys += [SubsampleKey(var, None, r) for r in regions]
    return keys


def _values(panel: pd.DataFrame, key: SubsampleKey) -> np.ndarray:
    sel = panel[key.variable].notna()
    if key.year is not None:
        sel &= panel["year"] == key.year
    if key.region != "all":
        sel &= panel["region"] == key.region
    return panel.loc[sel, key.variable].to_numpy(dtype=np.float64)


def _fit_task(panel, config):
    def run(task):
        key, model = task
        x = _values(panel, key)
        try:
            return fit_subsample(x, key, model, gates=dict(config.gates), refine=config.refine)
        except HeavyTailError as exc:
            nan = float("nan")
            return FitResult(None, int(x.size), nan, nan, nan, key, model=model,
                             status="failed", flags=(type(exc).__name__, str(exc)))
    return run


def fit_results(panel: pd.DataFrame, config: ExperimentConfig) -> list[FitResult]:
    tasks = [(k, m) for k in subsample_keys(panel, config) for m in config.models]
    return _pool_map(_fit_task(panel, config), tasks, config.threads)


def fit_table(panel: pd.DataFrame, config: ExperimentConfig) -> pd.DataFrame:
    """One row per subsample and model, with comparison columns when both models were fitted."""
    results = fit_results(panel, config)
    rows = []
    by_key: dict[SubsampleKey, dict[str, FitResult]] = {}
    for r in results:
        by_key.setdefault(r.subsample_key, {})[r.model] = r
    for r in results:
        key = r.subsample_key
        p = r.params.as_tuple() if r.params is not None else (math.nan,) * 4
        row = dict(zip(FIT_COLUMNS, [key.variable, key.as_tuple()[1], key.region, r.model,
                                     *p, r.n, r.loglik, r.aic, r.sids]))
        pair = by_key[key]
        if r.ok and all(m in pair and pair[m].ok for m in MODELS):
            c = compare_scores(pair["levy"].sids, pair["levy"].aic, pair["aep"].sids, pair["aep"].aic)
            row.update(delta_sids=c.delta_sids, delta_aic=c.delta_aic, preferred=c.preferred)
        else:
            row.update(delta_sids=math.nan, delta_aic=math.nan, preferred="")
        row["status"] = r.status if r.ok else f"{r.status}:{r.flags[0]}"
        rows.append(row)
    return pd.DataFrame(rows, columns=FIT_COLUMNS)


def fit_report(table: pd.DataFrame) -> str:
    """Plain-text digest of a fit table."""
    lines = []
    pcols = FIT_COLUMNS[4:8]
    for var, sub in table.groupby("variable", sort=False):
        lines.append(f"[{var}]")
        for r in sub.to_dict("records"):
            head = f"{r['year']:>6} {r['region']:>6} {r['model']:>4}  n={int(r['n']):<7d}"
            if r["status"] != "ok":
                lines.append(f"{head} {r['status']}")
                continue
            p = " ".join(f"{r[c]:10.4g}" for c in pcols)
            pref = f"  pref={r['preferred']}" if r["preferred"] else ""
            lines.append(f"{head} {p}  SIDS={r['sids']:7.3f} AIC={r['aic']:14.2f}{pref}")
    return "\n".join(lines) + "\n"


# ---- density export -------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Fixed-width bins; densities are reported at bin centres."""

    xmin: float
    xmax: float
    n_bins: int

    def __post_init__(self):
        if not (math.isfinite(self.xmin) and math.isfinite(self.xmax)) or not self.xmax > self.xmin:
            raise PreconditionError(f"grid needs finite xmin < xmax, got [{self.xmin}, {self.xmax}]")
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise PreconditionError(f"grid needs at least one bin, got {self.n_bins}")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, int(self.n_bins) + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


@dataclass(frozen=True)
class DensitySeries:
    series_id: str
    model: StableParams | AepParams | None = None
    values: np.ndarray | None = None


def _model_pdf(m, x):
    return stable_pdf(m, x) if isinstance(m, StableParams) else aep_pdf(m, x)


def _model_cdf(m, x):
    return stable_cdf(m, x) if isinstance(m, StableParams) else aep_cdf(m, x)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _bin_average(m, edges: np.ndarray) -> np.ndarray:
    """Mean model density over each bin, by Gauss-Legendre; an AEP cusp is split out."""
    lo, hi = edges[:-1], edges[1:]
    if isinstance(m, AepParams):
        cut = np.clip(m.xi, lo, hi)
        parts = [(lo, cut), (cut, hi)]
    else:
        parts = [(lo, hi)]
    total = np.zeros(lo.size)
    for a, b in parts:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        f = np.asarray(_model_pdf(m, x.ravel()), dtype=np.float64).reshape(x.shape)
        total += half * (f @ _GL_WEIGHTS)
    return total / (hi - lo)


def density_export(series: Sequence[DensitySeries], grid: GridSpec) -> pd.DataFrame:
    """Empirical histogram and fitted density per series, both conditional on the grid window.

    Both columns are bin averages reported at bin centres: the empirical one
    is a histogram of the values inside [xmin, xmax], the fitted one is the
    model density averaged over each bin and divided by the model mass inside
    the window. Either column is NaN when its source is absent.
    """
    if not series:
        raise PreconditionError("no series to export")
    x = grid.centers
    width = (grid.xmax - grid.xmin) / grid.n_bins
    parts = []
    for s in series:
        emp = np.full(x.size, np.nan)
        fit = np.full(x.size, np.nan)
        if s.values is not None:
            v = np.asarray(s.values, dtype=np.float64)
            counts, _ = np.histogram(v[np.isfinite(v)], bins=grid.edges)
            if counts.sum() > 0:
                emp = counts / (counts.sum() * width)
        if s.model is not None:
            mass = float(_model_cdf(s.model, grid.xmax) - _model_cdf(s.model, grid.xmin))
            if not mass > 0:
                raise PreconditionError(f"series {s.series_id}: no model mass on the grid")
            fit = _bin_average(s.model, grid.edges) / mass
        parts.append(pd.DataFrame({"series_id": s.series_id, "x": x, "empirical": emp,
                                   "fitted": fit}))
    return pd.concat(parts, ignore_index=True)


# ---- GCLT convergence -------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    """Summand law: ``uniform`` on [-1, 1], symmetric ``pareto`` with tail index
    ``tail``, ``stable`` or ``aep`` with ``params``."""

    kind: str
    tail: float = 1.5
    params: StableParams | AepParams | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "pareto", "stable", "aep"):
            raise PreconditionError(f"unknown component kind {self.kind!r}")
        if self.kind == "pareto" and not self.tail > 0:
            raise PreconditionError("Pareto tail index must be positive")
        if self.kind == "stable" and not isinstance(self.params, StableParams):
            raise PreconditionError("stable component needs StableParams")
        if self.kind == "aep" and not isinstance(self.params, AepParams):
            raise PreconditionError("aep component needs AepParams")

    def draw(self, rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
        n = shape[0] * shape[1]
        if self.kind == "uniform":
            out = rng.uniform(-1.0, 1.0, n)
        elif self.kind == "pareto":
            sign = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
            out = sign * (1.0 - rng.uniform(size=n)) ** (-1.0 / self.tail)
        elif self.kind == "stable":
            out = stable_sample(self.params, n, rng)
        else:
            out = aep_sample(self.params, n, rng)
        return out.reshape(shape)


CHUNK_DRAWS = 4_000_000


def _sums(component: Component, n_terms: int, n_sums: int, seed: int, threads: int) -> np.ndarray:
    rows = max(1, CHUNK_DRAWS // n_terms)
    chunks = [(i, min(rows, n_sums - i)) for i in range(0, n_sums, rows)]

    def run(chunk):
        start, k = chunk
        rng = generator(derive(seed, ("gclt", n_terms, start)))
        return component.draw(rng, (k, n_terms)).sum(axis=1)

    return np.concatenate(_pool_map(run, chunks, threads))


def normalize_sums(s: np.ndarray) -> np.ndarray:
    """Centre by the median and scale by the interquartile range."""
    q25, q50, q75 = np.quantile(s, [0.25, 0.5, 0.75])
    return (s - q50) / (q75 - q25)


def gclt_experiment(component: Component, n_terms: Sequence[int], n_sums: int, seed: int,
                    *, threads: int = 4, refine: bool = True) -> pd.DataFrame:
    """Fitted stable parameters of normalized sums for each number of summands."""
    if not n_terms or min(n_terms) < 1 or n_sums < 1000:
        raise PreconditionError("need n_terms >= 1 and n_sums >= 1000")
    rows = []
    for k in n_terms:
        z = normalize_sums(_sums(component, int(k), int(n_sums), seed, threads))
        p = mcculloch_fit(z, refine=refine)
        rows.append({"component": component.kind, "n_terms": int(k), "n_sums": int(n_sums),
                     "alpha_hat": p.alpha, "beta_hat": p.beta, "gamma_hat": p.gamma,
                     "delta_hat": p.delta})
    return pd.DataFrame(rows)


# ---- variance divergence -------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceReport:
    table: pd.DataFrame
    slope: float
    slope_stated: float
    slope_common: float

    def text(self) -> str:
        lines = ["size  median_variance"]
        lines += [f"{int(r.size):>10d}  {r.median_variance:.6g}"
                  for r in self.table.itertuples(index=False)]
        lines.append(f"measured log-log slope: {self.slope:.4f}")
        lines.append(f"predicted (2 - alpha) / (2 alpha): {self.slope_stated:.4f}")
        lines.append(f"predicted 2 / alpha - 1: {self.slope_common:.4f}")
        return "\n".join(lines) + "\n"


def variance_divergence(params: StableParams, sizes: Sequence[int], reps: int, seed: int,
                        *, threads: int = 4) -> VarianceReport:
    """Median sample variance across replicates for each sample size, with the log-log slope."""
    if params.alpha >= 2.0:
        raise DomainError("sample variance converges for alpha = 2; nothing diverges")
    if len(sizes) < 2 or reps < 1:
        raise PreconditionError("need at least two sizes and one replicate")
    tasks = [(int(n), r) for n in sizes for r in range(reps)]

    def run(task):
        n, r = task
        return float(np.var(stable_sample(params, n, derive(seed, ("vardiv", n, r))), ddof=1))

    var = np.array(_pool_map(run, tasks, threads)).reshape(len(sizes), reps)
    med = np.median(var, axis=1)
    slope = float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(med), 1)[0])
    a = params.alpha
    table = pd.DataFrame({"size": [int(n) for n in sizes], "median_variance": med})
    return VarianceReport(table, slope, (2 - a) / (2 * a), 2 / a - 1)
