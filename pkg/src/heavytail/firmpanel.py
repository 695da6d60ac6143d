"""Firm-year panel: ingestion, cleaning, deflation, linkage, regions and derived variables.

Operations work column-wise on pandas frames (one row per firm-year, columns named
as in :data:`SCHEMA`); :class:`FirmRecord` is the row type for callers that prefer
objects, and every operation also accepts a sequence of records.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import PreconditionError, SchemaMismatch, UnreadableInput

log = logging.getLogger(__name__)

SCHEMA = ("firm_id", "year", "phone", "zip", "founding_year", "sector", "ownership",
          "output", "intermediate_input", "wages", "profits", "employment", "capital")
MONETARY = ("output", "intermediate_input", "wages", "profits", "capital")
NUMERIC = ("year", "founding_year") + MONETARY[:4] + ("employment", "capital")
INTEGRAL = ("year", "founding_year")
OWNERSHIP = ("SOE", "collective", "shareholding", "private", "HMT", "foreign", "other")
# short codes used in reason strings
CODE = {"year": "year", "founding_year": "founding_year", "output": "Q",
        "intermediate_input": "II", "wages": "W", "profits": "PI", "employment": "L",
        "capital": "K", "ownership": "ownership", "firm_id": "firm_id"}
YEARS = (1990, 2030)
EPS_GROWTH = 1e-6
VARIABLES = ("VA", "VA_imputed", "LP", "LP_imputed", "dLP", "LP_growth", "ROC", "IR", "CI")
UNKNOWN_REGION = "unknown"


@dataclass(frozen=True)
class FirmRecord:
    firm_id: str
    year: int
    phone: str | None = None
    zip: str = ""
    founding_year: int | None = None
    sector: str = ""
    ownership: str | None = None
    output: float = math.nan
    intermediate_input: float = math.nan
    wages: float = math.nan
    profits: float = math.nan
    employment: float = math.nan
    capital: float = math.nan
    region: str | None = None


def records_to_frame(records: Iterable[FirmRecord]) -> pd.DataFrame:
    rows = [asdict(r) for r in records]
    cols = [f.name for f in fields(FirmRecord)]
    df = pd.DataFrame(rows, columns=cols)
    return _normalize(df)


def frame_to_records(df: pd.DataFrame) -> list[FirmRecord]:
    names = [f.name for f in fields(FirmRecord)]
    out = []
    for row in df.to_dict("records"):
        kw = {k: row.get(k) for k in names if k in row}
        for k in ("phone", "ownership", "region"):
            if k in kw and (kw[k] is None or kw[k] is pd.NA or kw[k] == ""):
                kw[k] = None
        if kw.get("founding_year") is not None and pd.isna(kw["founding_year"]):
            kw["founding_year"] = None
        elif kw.get("founding_year") is not None:
            kw["founding_year"] = int(kw["founding_year"])
        kw["year"] = int(kw["year"])
        out.append(FirmRecord(**kw))
    return out


def _normalize(df: pd.DataFrame) -> pd.DataFrame:
    df = df.copy()
    for c in ("firm_id", "phone", "zip", "sector", "ownership"):
        df[c] = df[c].fillna("").astype(str)
    df["year"] = df["year"].astype(np.int64)
    df["founding_year"] = pd.array(df["founding_year"], dtype="Int64")
    for c in MONETARY + ("employment",):
        df[c] = df[c].astype(np.float64)
    return df


def _as_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    return records_to_frame(records)


# ---- ingestion --------------------------------------------------------------


class IngestResult(NamedTuple):
    records: pd.DataFrame
    rejects: pd.DataFrame
    report: pd.DataFrame


def _read_text(path) -> str:
    try:
        with open(path, "rb") as fh:
            return fh.read().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableInput(f"cannot read {path}: {exc}") from exc


def _check_header(header: list[str], schema: Sequence[str]) -> list[str]:
    header = [h.strip() for h in header]
    dup = sorted({h for h in header if header.count(h) > 1})
    if dup:
        raise SchemaMismatch(f"duplicate header columns: {', '.join(dup)}")
    missing = [c for c in schema if c not in header]
    extra = [c for c in header if c not in schema]
    if missing or extra:
        raise SchemaMismatch(f"header mismatch; missing {missing}, unexpected {extra}")
    return header


def _parse_numeric(raw: pd.Series, integral: bool) -> tuple[np.ndarray, np.ndarray]:
    """(values, bad): values are NaN where empty or bad; bad marks unparsable text."""
    if pd.api.types.is_numeric_dtype(raw.dtype):
        num = raw.to_numpy(dtype=np.float64)
        bad = np.zeros(num.size, dtype=bool)
    else:
        num = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
        fail = ~np.isfinite(num)
        text = raw.to_numpy(dtype=object)[fail]
        empty = np.array([str(v).strip() == "" for v in text], dtype=bool)
        bad = np.zeros(num.size, dtype=bool)
        bad[np.flatnonzero(fail)[~empty]] = True
        num[fail] = np.nan
    if integral:
        with np.errstate(invalid="ignore"):
            bad |= np.isfinite(num) & (num != np.round(num))
        num[bad] = np.nan
    return num, bad


def _split_lines(text: str, header: list[str], width: int, path):
    """(good_line_numbers, bad [(line, fields)]) and the text of good lines for the C parser.

    Only valid for text without quote characters, where a field count is a
    comma count.
    """
    lines = text.split("\n")
    keep, good, bad = [lines[0]], [], []
    for i in range(1, len(lines)):
        ln = lines[i].rstrip("\r")
        if not ln.strip():
            continue
        n = ln.count(",") + 1
        if n == width:
            if ln.startswith(header[0]) and [c.strip() for c in ln.split(",")] == header:
                raise SchemaMismatch(f"{path}: header repeated at line {i + 1}")
            keep.append(ln)
            good.append(i + 1)
        else:
            bad.append((i + 1, ln.split(",")))
    return good, bad, "\n".join(keep) + "\n"


def _raw_frame(path, schema: Sequence[str]):
    """(raw frame with a 'line' column, rows with a wrong field count, line -> fields lookup)."""
    text = _read_text(path)
    if not text.strip():
        raise SchemaMismatch(f"{path} is empty; expected a header row")
    header = _check_header(next(csv.reader(io.StringIO(text.split("\n", 1)[0]))), schema)
    width = len(header)
    if '"' not in text:
        good, bad, kept = _split_lines(text, header, width, path)
        strings = {c: str for c in header if c not in NUMERIC}
        raw = pd.read_csv(io.StringIO(kept), dtype=strings, keep_default_na=False,
                          na_values={c: [""] for c in header if c in NUMERIC},
                          float_precision="round_trip")
        raw.columns = header
        all_lines = text.split("\n")

        def fields_at(line):
            return all_lines[line - 1].rstrip("\r").split(",")
    else:
        rows = list(csv.reader(io.StringIO(text)))
        good, bad, body = [], [], []
        for i, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if [c.strip() for c in row] == header:
                raise SchemaMismatch(f"{path}: header repeated at line {i}")
            if len(row) == width:
                good.append(i)
                body.append(row)
            else:
                bad.append((i, row))
        cols = list(zip(*body)) if body else [()] * width
        raw = pd.DataFrame({h: np.array(c, dtype=object) for h, c in zip(header, cols)})
        by_line = dict(zip(good, body))

        def fields_at(line):
            return by_line[line]
    raw = raw[list(schema)]
    raw.insert(0, "line", np.array(good, dtype=np.int64))
    return raw, bad, fields_at


def _pad(fields: list[str], width: int) -> list[str]:
    """Fit a raw row to the schema width; surplus fields are folded into the last column."""
    if len(fields) <= width:
        return list(fields) + [""] * (width - len(fields))
    return list(fields[:width - 1]) + [",".join(fields[width - 1:])]


def ingest(path, schema: Sequence[str] = SCHEMA, *, years: tuple[int, int] = YEARS,
           reject_path=None) -> IngestResult:
    """Parse a firm-year CSV; malformed rows go to ``rejects`` with a reason code.

    Reason codes: ``parse:fields`` (wrong field count), ``parse:<code>`` for an
    unparsable value (codes Q, II, W, PI, L, K, year, founding_year, ownership),
    ``missing:firm_id``, ``missing:year``, ``range:year`` and ``range:L``.
    The first failing check in schema order names the reason.
    """
    raw, bad_width, fields_at = _raw_frame(path, schema)
    reason = np.full(len(raw), "", dtype=object)
    flagged = np.zeros(len(raw), dtype=bool)

    def mark(mask, why):
        hit = np.asarray(mask, dtype=bool) & ~flagged
        reason[hit] = why
        flagged[hit] = True

    parsed = {}
    for c in schema:
        if c in NUMERIC:
            vals, bad = _parse_numeric(raw[c], c in INTEGRAL)
            parsed[c] = vals
            mark(bad, f"parse:{CODE[c]}")
            continue
        parsed[c] = raw[c].astype(str).str.strip().to_numpy(dtype=object)
        if c == "ownership":
            own = parsed[c]
            mark((own != "") & ~np.isin(own, OWNERSHIP), "parse:ownership")
        if c == "firm_id":
            mark(parsed[c] == "", "missing:firm_id")
    year = parsed["year"]
    mark(np.isnan(year), "missing:year")
    with np.errstate(invalid="ignore"):
        mark((year < years[0]) | (year > years[1]), "range:year")
        mark(parsed["employment"] < 0, "range:L")

    ok = ~flagged
    rec = pd.DataFrame({c: parsed[c][ok] for c in schema})
    rec.insert(0, "line", raw["line"].to_numpy()[ok])
    rec = _normalize(rec)

    rej_lines = [(int(i), fields_at(int(i)), r)
                 for i, r in zip(raw["line"].to_numpy()[~ok], reason[~ok])]
    rej_lines += [(i, f, "parse:fields") for i, f in bad_width]
    rej_lines.sort(key=lambda t: t[0])
    rej = pd.DataFrame([[i] + _pad(f, len(schema)) + [r] for i, f, r in rej_lines],
                       columns=["line", *schema, "reason"])
    if reject_path is not None:
        write_frame(rej, reject_path)

    report = _ingest_report(rec, rej)
    log.info("ingested %s: %d accepted, %d rejected", path, len(rec), len(rej))
    return IngestResult(rec, rej, report)


def _year_key(series: pd.Series) -> pd.Series:
    y = pd.to_numeric(series, errors="coerce")
    return y.map(lambda v: str(int(v)) if np.isfinite(v) and v == int(v) else "unknown")


def _ingest_report(rec: pd.DataFrame, rej: pd.DataFrame) -> pd.DataFrame:
    acc = rec["year"].astype(str).value_counts()
    bad = _year_key(rej["year"]).value_counts() if len(rej) else pd.Series(dtype=np.int64)
    years = sorted(set(acc.index) | set(bad.index))
    out = pd.DataFrame({"year": years})
    out["accepted"] = [int(acc.get(y, 0)) for y in years]
    out["rejected"] = [int(bad.get(y, 0)) for y in years]
    out["read"] = out["accepted"] + out["rejected"]
    return out[["year", "read", "accepted", "rejected"]]


# ---- cleaning ---------------------------------------------------------------


class Deduped(NamedTuple):
    records: pd.DataFrame
    duplicates: pd.DataFrame


def dedupe(records) -> Deduped:
    """Keep the first row for each (firm_id, year); the rest are returned and logged."""
    df = _as_frame(records)
    dup = df.duplicated(["firm_id", "year"], keep="first")
    dropped = df[dup]
    for fid, yr in zip(dropped["firm_id"].head(20), dropped["year"].head(20)):
        log.info("duplicate firm-year dropped: %s %s", fid, yr)
    if len(dropped) > 20:
        log.info("... %d more duplicate firm-years dropped", len(dropped) - 20)
    return Deduped(df[~dup].reset_index(drop=True), dropped.reset_index(drop=True))


# ---- deflation --------------------------------------------------------------


@dataclass(frozen=True)
class DeflatorTable:
    """(sector, year) -> price index with base year 1."""

    factors: Mapping[tuple[str, int], float]

    def __post_init__(self):
        for key, v in self.factors.items():
            if not (math.isfinite(v) and v > 0):
                raise PreconditionError(f"deflator for {key} must be positive, got {v}")


def load_deflators(path) -> DeflatorTable:
    try:
        df = pd.read_csv(path, dtype={"sector": str}, keep_default_na=False,
                         float_precision="round_trip")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableInput(f"cannot read {path}: {exc}") from exc
    if list(df.columns) != ["sector", "year", "deflator"]:
        raise SchemaMismatch(f"deflator file columns {list(df.columns)} != [sector, year, deflator]")
    return DeflatorTable({(str(s), int(y)): float(d)
                          for s, y, d in zip(df["sector"], df["year"], df["deflator"])})


class Deflated(NamedTuple):
    records: pd.DataFrame
    missing: int
    missing_keys: tuple[tuple[str, int], ...]


def deflate(records, table: DeflatorTable) -> Deflated:
    """Divide monetary fields by the (sector, year) index; a missing index counts as 1.0."""
    df = _as_frame(records).copy()
    keys = list(zip(df["sector"], df["year"].astype(int)))
    f = np.array([table.factors.get(k, np.nan) for k in keys], dtype=np.float64)
    miss = np.isnan(f)
    missing_keys = tuple(sorted({k for k, m in zip(keys, miss) if m}))
    if miss.any():
        log.warning("no deflator for %d rows (%d sector-years); factor 1.0 used",
                    int(miss.sum()), len(missing_keys))
    f[miss] = 1.0
    for c in MONETARY:
        df[c] = df[c].to_numpy() / f
    return Deflated(df, int(miss.sum()), missing_keys)


# ---- regions ----------------------------------------------------------------


def load_zipmap(path) -> dict[str, str]:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableInput(f"cannot read {path}: {exc}") from exc
    if list(df.columns) != ["prefix", "province"]:
        raise SchemaMismatch(f"zip map columns {list(df.columns)} != [prefix, province]")
    return dict(zip(df["prefix"].str.strip(), df["province"].str.strip()))


def assign_region(records, zipmap: Mapping[str, str]) -> pd.DataFrame:
    """Province of the longest matching ZIP prefix, else ``"unknown"``."""
    df = _as_frame(records).copy()
    z = df["zip"].fillna("").astype(str).str.strip()
    region = pd.Series(UNKNOWN_REGION, index=df.index, dtype=object)
    done = pd.Series(False, index=df.index)
    for k in sorted({len(p) for p in zipmap if p}, reverse=True):
        sub = {p: v for p, v in zipmap.items() if len(p) == k}
        hit = z.str[:k].map(sub)
        take = ~done & hit.notna() & (z.str.len() >= k)
        region[take] = hit[take]
        done |= take
    df["region"] = region
    return df


# ---- linkage ----------------------------------------------------------------


class Linkage(NamedTuple):
    """``links``: one row per (year, firm_id) linked to ``prev_id`` in year - 1."""

    links: pd.DataFrame
    ambiguous: pd.DataFrame


def _firm_keys(df: pd.DataFrame) -> tuple[np.ndarray, pd.Index]:
    """Integer (firm, year) keys: firm code * 10000 + year."""
    codes, uniq = pd.factorize(df["firm_id"], sort=False)
    return codes.astype(np.int64) * 10000 + df["year"].to_numpy(dtype=np.int64), pd.Index(uniq)


def link_firms(records) -> Linkage:
    """Link firm-years across adjacent years: same id first, then a unique (phone, zip) pair."""
    df = _as_frame(records)
    if df.duplicated(["firm_id", "year"]).any():
        raise PreconditionError("link_firms needs deduplicated records")
    key, _ = _firm_keys(df)
    year = df["year"].to_numpy(dtype=np.int64)
    fid = df["firm_id"].to_numpy(dtype=object)
    cur_id = np.isin(key - 1, key)       # same id exists a year earlier
    prev_id = np.isin(key + 1, key)      # same id exists a year later
    by_id = pd.DataFrame({"year": year[cur_id], "firm_id": fid[cur_id],
                          "prev_id": fid[cur_id], "method": "id"})

    phone = df["phone"].fillna("").astype(str).str.strip()
    zips = df["zip"].fillna("").astype(str).str.strip()
    keyed = ((phone != "") & (zips != "")).to_numpy()
    pc, pu = pd.factorize(phone)
    zc, zu = pd.factorize(zips)
    pz = pc.astype(np.int64) * (len(zu) + 1) + zc
    ci = np.flatnonzero(~cur_id & keyed)
    oi = np.flatnonzero(~prev_id & keyed)
    ck = pz[ci] * 10000 + year[ci]
    ok = pz[oi] * 10000 + year[oi] + 1
    n_cur = pd.Series(ck).value_counts()
    n_old = pd.Series(ok).value_counts()
    both = n_cur.index.intersection(n_old.index)
    nc, no = n_cur[both].to_numpy(), n_old[both].to_numpy()
    unique = both[(nc == 1) & (no == 1)]
    amb = both[(nc > 1) | (no > 1)]
    pos_c = ci[np.isin(ck, unique)]
    ck_sel = pz[pos_c] * 10000 + year[pos_c]
    old_pos = pd.Series(oi, index=ok)
    pos_o = old_pos[ck_sel].to_numpy()
    by_key = pd.DataFrame({"year": year[pos_c], "firm_id": fid[pos_c],
                           "prev_id": fid[pos_o], "method": "phone_zip"})

    rep = pd.Series(ci, index=ck)
    ai = rep[~rep.index.duplicated()][amb].to_numpy(dtype=np.int64)
    ambiguous = pd.DataFrame({"year": year[ai], "phone": phone.to_numpy()[ai],
                              "zip": zips.to_numpy()[ai], "n_cur": n_cur[amb].to_numpy(),
                              "n_prev": n_old[amb].to_numpy()})
    ambiguous = ambiguous.sort_values(["year", "phone", "zip"], kind="mergesort")
    ambiguous = ambiguous.reset_index(drop=True)
    for row in ambiguous.head(20).itertuples(index=False):
        log.info("ambiguous phone/zip link left open: year %s phone %s zip %s (%d new, %d old)",
                 row.year, row.phone, row.zip, row.n_cur, row.n_prev)
    links = pd.concat([by_id, by_key], ignore_index=True)
    links = links.sort_values(["year", "firm_id"], kind="mergesort").reset_index(drop=True)
    links["year"] = links["year"].astype(np.int64)
    return Linkage(links, ambiguous)


# ---- derived variables --------------------------------------------------------


class Derived(NamedTuple):
    """``panel``: one row per firm-year with derived columns (NaN where excluded).

    ``reasons``: one row per (firm_id, year, variable) exclusion with its code.
    """

    panel: pd.DataFrame
    reasons: pd.DataFrame


class _Reasons:
    """First-match reason codes per variable, stored as small integers."""

    def __init__(self, n: int):
        self.n = n
        self.codes: list[str] = [""]
        self.by_var: dict[str, np.ndarray] = {}

    def _code(self, name: str) -> int:
        if name not in self.codes:
            self.codes.append(name)
        return self.codes.index(name)

    def set(self, var: str, checks: list[tuple[np.ndarray, str]]) -> np.ndarray:
        out = np.zeros(self.n, dtype=np.int16)
        for mask, why in checks:
            hit = np.asarray(mask, dtype=bool) & (out == 0)
            out[hit] = self._code(why)
        self.by_var[var] = out
        return out == 0

    def frame(self, firm_id: np.ndarray, year: np.ndarray) -> pd.DataFrame:
        parts = []
        for var in VARIABLES:
            r = self.by_var[var]
            sel = r != 0
            parts.append(pd.DataFrame({
                "firm_id": firm_id[sel], "year": year[sel],
                "variable": pd.Categorical.from_codes(np.full(sel.sum(), VARIABLES.index(var)),
                                                      categories=list(VARIABLES)),
                "reason": pd.Categorical.from_codes(r[sel] - 1, categories=self.codes[1:]),
            }))
        return pd.concat(parts, ignore_index=True)


def derive(records, links: Linkage | pd.DataFrame, eps: float = EPS_GROWTH) -> Derived:
    """Value added, labour productivity and its change, returns, investment and capital intensity.

    Monetary inputs are expected to be deflated already. Rows are returned
    sorted by (year, firm_id), so the result does not depend on input order.
    """
    df = _as_frame(records)
    if df.duplicated(["firm_id", "year"]).any():
        raise PreconditionError("derive needs deduplicated records")
    lk = links.links if isinstance(links, Linkage) else links
    df = df.sort_values(["year", "firm_id"], kind="mergesort").reset_index(drop=True)
    n = len(df)
    q, ii = df["output"].to_numpy(), df["intermediate_input"].to_numpy()
    w, pi = df["wages"].to_numpy(), df["profits"].to_numpy()
    lab, k = df["employment"].to_numpy(), df["capital"].to_numpy()
    nan = np.isnan
    rs = _Reasons(n)

    ok = rs.set("VA", [(nan(q), "missing:Q"), (nan(ii), "missing:II")])
    va = np.where(ok, q - ii, np.nan)
    ok = rs.set("VA_imputed", [(nan(w), "missing:W"), (nan(pi), "missing:PI")])
    vai = np.where(ok, w + pi, np.nan)
    lab_bad = [(nan(lab), "missing:L"), (lab == 0, "zero:L")]
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = rs.set("LP", [(nan(va), "missing:VA")] + lab_bad)
        lp = np.where(ok, va / lab, np.nan)
        ok = rs.set("LP_imputed", [(nan(vai), "missing:VA_imputed")] + lab_bad)
        lpi = np.where(ok, vai / lab, np.nan)
        ok = rs.set("ROC", [(nan(pi), "missing:PI"), (nan(k), "missing:K"),
                            (k <= 0, "nonpositive:K")])
        roc = np.where(ok, pi / k, np.nan)
        ok = rs.set("CI", [(nan(k), "missing:K")] + lab_bad)
        ci = np.where(ok, k / lab, np.nan)

    # previous-year row of each linked firm-year, by position
    key, uniq = _firm_keys(df)
    pos = pd.Index(key)
    lcode = uniq.get_indexer(lk["firm_id"]).astype(np.int64)
    pcode = uniq.get_indexer(lk["prev_id"]).astype(np.int64)
    lyear = lk["year"].to_numpy(dtype=np.int64)
    valid = (lcode >= 0) & (pcode >= 0)
    at = pos.get_indexer(lcode[valid] * 10000 + lyear[valid])
    src = pos.get_indexer(pcode[valid] * 10000 + lyear[valid] - 1)
    keep = (at >= 0) & (src >= 0)
    prev_row = np.full(n, -1, dtype=np.int64)
    prev_row[at[keep]] = src[keep]
    linked = prev_row >= 0
    lp_prev = np.where(linked, lp[prev_row], np.nan)
    k_prev = np.where(linked, k[prev_row], np.nan)

    ok = rs.set("dLP", [(nan(lp), "missing:LP"), (~linked, "unlinked"),
                        (nan(lp_prev), "missing:LP_prev")])
    dlp = np.where(ok, lp - lp_prev, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = rs.set("LP_growth", [(nan(lp), "missing:LP"), (~linked, "unlinked"),
                                  (nan(lp_prev), "missing:LP_prev"),
                                  (np.abs(lp_prev) < eps, "singular:LP_prev")])
        growth = np.where(ok, (lp - lp_prev) / lp_prev, np.nan)
        ok = rs.set("IR", [(nan(k), "missing:K"), (~linked, "unlinked"),
                           (nan(k_prev), "missing:K_prev"), (k_prev <= 0, "nonpositive:K_prev")])
        ir = np.where(ok, (k - k_prev) / k_prev, np.nan)

    fid = df["firm_id"].to_numpy(dtype=object)
    out = pd.DataFrame({"firm_id": fid, "year": df["year"].to_numpy(dtype=np.int64)})
    out["region"] = df["region"].to_numpy() if "region" in df else UNKNOWN_REGION
    out["sector"] = df["sector"].to_numpy()
    for name, v in (("VA", va), ("VA_imputed", vai), ("LP", lp), ("LP_imputed", lpi),
                    ("dLP", dlp), ("LP_growth", growth), ("ROC", roc), ("IR", ir), ("CI", ci)):
        out[name] = v
    out["prev_id"] = np.where(linked, fid[prev_row], None)
    return Derived(out, rs.frame(fid, out["year"].to_numpy()))


# ---- accounting ---------------------------------------------------------------


def accounting(ingested: IngestResult, duplicates: pd.DataFrame, derived: Derived,
               variables: Sequence[str] = VARIABLES) -> pd.DataFrame:
    """Per (variable, year): input = derived + rejected + duplicates + dropped.

    ``dropped`` is split by reason code into ``drop:<code>`` columns; rejected
    rows whose year could not be read are counted under year ``unknown``.
    """
    rep = ingested.report.set_index("year")
    years = list(rep.index)
    dup = duplicates["year"].astype(np.int64).value_counts()
    panel = derived.panel
    got = panel[list(variables)].notna().groupby(panel["year"]).sum()
    rs = derived.reasons
    drops = rs.groupby(["variable", "year", "reason"], observed=True).size()
    codes = sorted(str(c) for c in rs["reason"].cat.categories) if len(rs) else []
    drops = {(str(v), str(y), str(r)): int(c) for (v, y, r), c in drops.items() if c}
    rows = []
    for var in variables:
        for y in years:
            yi = int(y) if y != "unknown" else None
            row = {"variable": var, "year": y, "input": int(rep.at[y, "read"]),
                   "rejected": int(rep.at[y, "rejected"]),
                   "duplicates": int(dup.get(yi, 0)) if yi is not None else 0,
                   "derived": int(got.at[yi, var]) if yi in got.index else 0}
            tot = 0
            for c in codes:
                v = drops.get((var, y, c), 0)
                row[f"drop:{c}"] = v
                tot += v
            row["dropped"] = tot
            rows.append(row)
    out = pd.DataFrame(rows)
    lead = ["variable", "year", "input", "derived", "rejected", "duplicates", "dropped"]
    return out[lead + [c for c in out.columns if c not in lead]]


def observation_table(acc: pd.DataFrame) -> pd.DataFrame:
    """Derived counts with years as rows and variables as columns."""
    t = acc.pivot(index="year", columns="variable", values="derived")
    return t[[v for v in acc["variable"].unique()]]


# ---- whole pipeline -------------------------------------------------------------


class PanelRun(NamedTuple):
    ingested: IngestResult
    deduped: Deduped
    deflated: Deflated
    linkage: Linkage
    derived: Derived
    accounting: pd.DataFrame


def build_panel(path, deflators: DeflatorTable | None = None,
                zipmap: Mapping[str, str] | None = None, *, years: tuple[int, int] = YEARS,
                reject_path=None, eps: float = EPS_GROWTH) -> PanelRun:
    """ingest, dedupe, deflate, assign regions, link, derive, account."""
    ing = ingest(path, years=years, reject_path=reject_path)
    dd = dedupe(ing.records)
    dfl = deflate(dd.records, deflators or DeflatorTable({}))
    recs = assign_region(dfl.records, zipmap or {})
    lk = link_firms(recs)
    der = derive(recs, lk, eps=eps)
    return PanelRun(ing, dd, dfl, lk, der, accounting(ing, dd.duplicates, der))


def _column_text(s: pd.Series) -> list[str]:
    if pd.api.types.is_float_dtype(s.dtype):
        return ["" if v != v else repr(v) for v in s.to_numpy(dtype=np.float64).tolist()]
    if pd.api.types.is_integer_dtype(s.dtype):
        return ["" if v is pd.NA else str(int(v)) for v in s.tolist()]
    return ["" if v is None or v is pd.NA or (isinstance(v, float) and v != v) else str(v)
            for v in s.tolist()]


def write_frame(df: pd.DataFrame, path) -> None:
    """CSV with shortest round-trip floats and empty fields for missing values.

    Output depends only on the frame's contents, so reruns are byte-identical.
    """
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cols = [_column_text(df[c]) for c in df.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([str(c) for c in df.columns])
        w.writerows(zip(*cols))
