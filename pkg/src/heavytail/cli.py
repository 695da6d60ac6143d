"""Command-line entry point: ``heavytail VERB [--config FILE] [--set SECTION.KEY=VALUE ...]``.

Every run writes ``manifest-<verb>.json`` next to its outputs with the resolved
configuration, seed, library versions, kernel backend and output checksums.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__, _backend
from . import experiments as ex
from . import firmpanel as fp
from .aep import AepParams
from .errors import HeavyTailError
from .estimation import GATES, SubsampleKey
from .gof import binned_pair, compare_scores, log_likelihood, aic, soofi_id_score
from .stable import StableParams

VERBS = ("synth", "derive", "fit", "gof", "gclt", "vardiv", "export-density")

DEFAULTS = {
    "run": {"seed": "0", "threads": "4", "outdir": "out"},
    "synth": {"scale": "1.0", "link_density": "0.8", "relink_share": "0.05",
              "duplicate_share": "0.0", "years": ""},
    "derive": {"panel": "{outdir}/panel.csv", "deflators": "{outdir}/deflators.csv",
               "zipmap": "{outdir}/zipmap.csv", "year_min": str(fp.YEARS[0]),
               "year_max": str(fp.YEARS[1]), "eps": str(fp.EPS_GROWTH)},
    "fit": {"derived": "{outdir}/derived.csv", "variables": "LP", "groupings": "year",
            "models": "levy,aep", "refine": "true",
            **{f"gate.{k}": str(v) for k, v in GATES.items()}},
    "gof": {"derived": "{outdir}/derived.csv", "variable": "LP", "year": "", "region": "all",
            "levy": "", "aep": ""},
    "gclt": {"component": "pareto", "tail": "1.5", "params": "", "n_terms": "10,100,1000",
             "n_sums": "100000"},
    "vardiv": {"params": "1.1,0,1,0", "sizes": "1000,10000,100000,1000000", "reps": "100"},
    "export-density": {"fit_table": "{outdir}/fit_table.csv",
                       "derived": "{outdir}/derived.csv", "variable": "LP", "region": "all",
                       "xmin": "-2", "xmax": "5", "bins": "350"},
}


def load_config(path: str | None, overrides: list[str]) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read_dict(DEFAULTS)
    if path:
        if not Path(path).is_file():
            raise SystemExit(f"config file not found: {path}")
        cfg.read(path, encoding="utf-8")
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise SystemExit(f"override must look like section.key=value, got {item!r}")
        if not cfg.has_section(section):
            cfg.add_section(section)
        cfg.set(section, name, value)
    return cfg


def _get(cfg, section: str, key: str) -> str:
    return cfg.get(section, key).replace("{outdir}", cfg.get("run", "outdir"))


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(float(v)) for v in text.split(",") if v.strip()]


def _words(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _years(text: str) -> list[int] | None:
    text = text.strip()
    if not text:
        return None
    if "-" in text and "," not in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return _ints(text)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(verb: str, cfg, outputs: dict[str, Path]) -> Path:
    out = Path(cfg.get("run", "outdir"))
    doc = {
        "verb": verb,
        "seed": cfg.getint("run", "seed"),
        "config": {s: {k: _get(cfg, s, k) for k in cfg.options(s)} for s in cfg.sections()},
        "versions": {"heavytail": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "pandas": pd.__version__,
                     "python": platform.python_version()},
        "backend": _backend.name,
        "outputs": {k: {"path": str(p), "sha256": _sha(p)} for k, p in sorted(outputs.items())},
    }
    path = out / f"manifest-{verb}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_derived(path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"firm_id": str, "region": str, "sector": str,
                                    "prev_id": str},
                       keep_default_na=False, na_values=[""], float_precision="round_trip")


def _text(path: Path, body: str) -> Path:
    path.write_text(body, encoding="utf-8")
    return path


# ---- verbs ---------------------------------------------------------------------------


def cmd_synth(cfg) -> dict[str, Path]:
    s = "synth"
    spec = ex.published_lp_spec(scale=cfg.getfloat(s, "scale"),
                                years=_years(cfg.get(s, "years")),
                                link_density=cfg.getfloat(s, "link_density"),
                                relink_share=cfg.getfloat(s, "relink_share"),
                                duplicate_share=cfg.getfloat(s, "duplicate_share"))
    paths = ex.write_synth(spec, cfg.getint("run", "seed"), cfg.get("run", "outdir"))
    return {k: Path(v) for k, v in paths.items()}


def cmd_derive(cfg) -> dict[str, Path]:
    s = "derive"
    out = Path(cfg.get("run", "outdir"))
    defl = _get(cfg, s, "deflators")
    zmap = _get(cfg, s, "zipmap")
    table = fp.load_deflators(defl) if defl and Path(defl).is_file() else None
    zipmap = fp.load_zipmap(zmap) if zmap and Path(zmap).is_file() else None
    run = fp.build_panel(_get(cfg, s, "panel"), table, zipmap,
                         years=(cfg.getint(s, "year_min"), cfg.getint(s, "year_max")),
                         reject_path=out / "rejects.csv", eps=cfg.getfloat(s, "eps"))
    outputs = {"derived": out / "derived.csv", "reasons": out / "reasons.csv",
               "links": out / "links.csv", "accounting": out / "accounting.csv",
               "observations": out / "observations.csv", "rejects": out / "rejects.csv"}
    fp.write_frame(run.derived.panel, outputs["derived"])
    fp.write_frame(run.derived.reasons, outputs["reasons"])
    fp.write_frame(run.linkage.links, outputs["links"])
    fp.write_frame(run.accounting, outputs["accounting"])
    fp.write_frame(fp.observation_table(run.accounting).reset_index(), outputs["observations"])
    lines = [f"rows read: {int(run.ingested.report['read'].sum())}",
             f"rejected: {len(run.ingested.rejects)}",
             f"duplicates dropped: {len(run.deduped.duplicates)}",
             f"rows without deflator: {run.deflated.missing}",
             f"links: {len(run.linkage.links)} "
             f"({int((run.linkage.links['method'] == 'phone_zip').sum())} by phone and zip)",
             f"ambiguous phone/zip keys: {len(run.linkage.ambiguous)}"]
    outputs["summary"] = _text(out / "derive_summary.txt", "\n".join(lines) + "\n")
    return outputs


def experiment_config(cfg) -> ex.ExperimentConfig:
    s = "fit"
    gates = {k[len("gate."):]: cfg.getint(s, k) for k in cfg.options(s) if k.startswith("gate.")}
    return ex.ExperimentConfig(variables=_words(cfg.get(s, "variables")),
                               groupings=_words(cfg.get(s, "groupings")),
                               models=_words(cfg.get(s, "models")),
                               seed=cfg.getint("run", "seed"),
                               output_dir=cfg.get("run", "outdir"), gates=gates,
                               threads=cfg.getint("run", "threads"),
                               refine=cfg.getboolean(s, "refine"))


def cmd_fit(cfg) -> dict[str, Path]:
    out = Path(cfg.get("run", "outdir"))
    panel = read_derived(_get(cfg, "fit", "derived"))
    table = ex.fit_table(panel, experiment_config(cfg))
    outputs = {"fit_table": out / "fit_table.csv", "fit_report": out / "fit_report.txt"}
    fp.write_frame(table, outputs["fit_table"])
    _text(outputs["fit_report"], ex.fit_report(table))
    return outputs


def _model_from(text: str, kind: str):
    v = _floats(text)
    if len(v) != 4:
        raise SystemExit(f"{kind} parameters need four comma-separated values, got {text!r}")
    return StableParams(*v) if kind == "levy" else AepParams(*v)


def cmd_gof(cfg) -> dict[str, Path]:
    s = "gof"
    out = Path(cfg.get("run", "outdir"))
    panel = read_derived(_get(cfg, s, "derived"))
    year = cfg.get(s, "year").strip()
    key = SubsampleKey(cfg.get(s, "variable"), int(year) if year else None, cfg.get(s, "region"))
    x = ex._values(panel, key)
    rows, scores = [], {}
    for kind in ("levy", "aep"):
        text = cfg.get(s, kind).strip()
        if not text:
            continue
        m = _model_from(text, kind)
        ll = log_likelihood(m, x)
        pair = binned_pair(m, x)
        scores[kind] = (soofi_id_score(pair), aic(ll, 4))
        rows.append({"model": kind, "n": int(x.size), "loglik": ll, "aic": scores[kind][1],
                     "sids": scores[kind][0], "outside_clip": pair.outside_mass})
    if not rows:
        raise SystemExit("gof needs gof.levy and/or gof.aep parameters")
    table = pd.DataFrame(rows)
    lines = [f"{r['model']}: n={r['n']} SIDS={r['sids']:.3f} AIC={r['aic']:.2f}" for r in rows]
    if len(scores) == 2:
        c = compare_scores(*scores["levy"], *scores["aep"])
        lines.append(f"delta SIDS={c.delta_sids:.3f} delta AIC={c.delta_aic:.2f} "
                     f"preferred={c.preferred}")
    outputs = {"gof": out / "gof.csv", "gof_report": out / "gof.txt"}
    fp.write_frame(table, outputs["gof"])
    _text(outputs["gof_report"], "\n".join(lines) + "\n")
    return outputs


def cmd_gclt(cfg) -> dict[str, Path]:
    s = "gclt"
    out = Path(cfg.get("run", "outdir"))
    kind = cfg.get(s, "component")
    params = None
    if kind in ("stable", "aep"):
        params = _model_from(cfg.get(s, "params"), "levy" if kind == "stable" else "aep")
    comp = ex.Component(kind, tail=cfg.getfloat(s, "tail"), params=params)
    table = ex.gclt_experiment(comp, _ints(cfg.get(s, "n_terms")), cfg.getint(s, "n_sums"),
                               cfg.getint("run", "seed"), threads=cfg.getint("run", "threads"))
    outputs = {"gclt": out / "gclt.csv", "gclt_report": out / "gclt.txt"}
    fp.write_frame(table, outputs["gclt"])
    lines = [f"n_terms={r['n_terms']:>6d}  alpha_hat={r['alpha_hat']:.4f}  "
             f"beta_hat={r['beta_hat']:+.4f}" for r in table.to_dict("records")]
    _text(outputs["gclt_report"], f"component: {kind}\n" + "\n".join(lines) + "\n")
    return outputs


def cmd_vardiv(cfg) -> dict[str, Path]:
    s = "vardiv"
    out = Path(cfg.get("run", "outdir"))
    rep = ex.variance_divergence(_model_from(cfg.get(s, "params"), "levy"),
                                 _ints(cfg.get(s, "sizes")), cfg.getint(s, "reps"),
                                 cfg.getint("run", "seed"), threads=cfg.getint("run", "threads"))
    outputs = {"vardiv": out / "vardiv.csv", "vardiv_report": out / "vardiv.txt"}
    fp.write_frame(rep.table, outputs["vardiv"])
    _text(outputs["vardiv_report"], rep.text())
    return outputs


def cmd_export_density(cfg) -> dict[str, Path]:
    s = "export-density"
    out = Path(cfg.get("run", "outdir"))
    table = pd.read_csv(_get(cfg, s, "fit_table"), dtype={"year": str, "region": str},
                        keep_default_na=False, na_values=[""], float_precision="round_trip")
    panel = read_derived(_get(cfg, s, "derived"))
    var, region = cfg.get(s, "variable"), cfg.get(s, "region")
    grid = ex.GridSpec(cfg.getfloat(s, "xmin"), cfg.getfloat(s, "xmax"), cfg.getint(s, "bins"))
    sel = table[(table["variable"] == var) & (table["region"] == region)
                & (table["status"] == "ok")]
    series = []
    for r in sel.to_dict("records"):
        p = (r["alpha/kappa"], r["beta/h"], r["gamma/sigma"], r["delta/xi"])
        model = StableParams(*p) if r["model"] == "levy" else AepParams(*p)
        year = None if r["year"] == "pooled" else int(r["year"])
        values = ex._values(panel, SubsampleKey(var, year, region))
        series.append(ex.DensitySeries(f"{var}:{r['year']}:{region}:{r['model']}", model, values))
    if not series:
        raise SystemExit(f"no fitted rows for {var} / {region} in the fit table")
    outputs = {"density": out / "density.csv"}
    fp.write_frame(ex.density_export(series, grid), outputs["density"])
    return outputs


COMMANDS = {"synth": cmd_synth, "derive": cmd_derive, "fit": cmd_fit, "gof": cmd_gof,
            "gclt": cmd_gclt, "vardiv": cmd_vardiv, "export-density": cmd_export_density}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heavytail", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=VERBS)
    ap.add_argument("--config", help="INI file; sections run, synth, derive, fit, gof, "
                                     "gclt, vardiv, export-density")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="SECTION.KEY=VALUE", help="override one config value")
    ap.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
    ap.add_argument("--outdir", help="shorthand for --set run.outdir=DIR")
    ap.add_argument("--threads", type=int, help="shorthand for --set run.threads=N")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    extra = list(args.overrides)
    for name in ("seed", "outdir", "threads"):
        if getattr(args, name) is not None:
            extra.append(f"run.{name}={getattr(args, name)}")
    cfg = load_config(args.config, extra)
    Path(cfg.get("run", "outdir")).mkdir(parents=True, exist_ok=True)
    try:
        outputs = COMMANDS[args.verb](cfg)
    except HeavyTailError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    manifest = write_manifest(args.verb, cfg, outputs)
    for k, p in sorted(outputs.items()):
        print(f"{k}: {p}")
    print(f"manifest: {manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
