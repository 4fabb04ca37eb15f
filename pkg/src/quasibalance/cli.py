"""Command-line pipeline: ingest, bin, fit, balance, relation checks and reports."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from . import __version__
from .balance import estimate_theta_a, gamma_relation, symmetry_statistic
from .fit import fit_alpha, fit_lognormal_mid, fit_pareto, fit_tent
from .histogram import LogBinGrid, conditional_growth_density, default_r_edges, empirical_density
from .panel import ColumnMap, PairedPanel, PanelError, load_panel, pair_periods, write_observations
from .synth import GeneratorSpec, gen_panel, write_truth
from .theory import cdf_static, pdf_static, relation_checks

log = logging.getLogger("quasibalance")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    inputs: list[str] = field(default_factory=list)
    columns: dict = field(default_factory=lambda: asdict(ColumnMap()))
    period_pairs: list[list[int]] | None = None
    large_window: list[float] = field(default_factory=lambda: [2e5, 1e7])
    middle_window: list[float] = field(default_factory=lambda: [5e3, 3.17e5])
    pareto_range: list[float | None] = field(default_factory=lambda: [2e5, None])
    lognormal_range: list[float] | None = None
    x0: float = 2.5e5
    x_min: float = 5e3
    grid: dict | None = None
    grid_width_decades: float = 0.2
    density_width_decades: float = 0.1
    r_width: float = 0.1
    r_max: float = 1.0
    min_bin_pairs: int = 100
    growth_rate: str = "plain"
    theta_filter: str = "both"
    symmetry_width_decades: float = 0.2
    symmetry_transform: str = "middle"
    tol_mu: float = 0.05
    tol_sigma: float = 0.05
    theta_unit_tol: float = 0.03
    seed: int = 0
    n_jobs: int = 1
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        def window(name, w, open_top=False):
            if not isinstance(w, (list, tuple)) or len(w) != 2:
                raise ConfigError(f"{name} must be a two-element list")
            lo, hi = w
            if lo is None or not lo > 0:
                raise ConfigError(f"{name} lower bound must be positive")
            if hi is None and open_top:
                return
            if hi is None or not hi > lo:
                raise ConfigError(f"{name} must be ordered: {lo} < {hi}")

        window("large_window", self.large_window)
        window("middle_window", self.middle_window)
        window("pareto_range", self.pareto_range, open_top=True)
        window("lognormal_range", self.lognormal_range or self.middle_window)
        if not 0 < self.x_min < self.x0:
            raise ConfigError("need 0 < x_min < x0")
        for name in ("grid_width_decades", "density_width_decades", "r_width", "r_max",
                     "symmetry_width_decades", "tol_mu", "tol_sigma", "theta_unit_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.growth_rate not in ("plain", "modified"):
            raise ConfigError("growth_rate must be 'plain' or 'modified'")
        if self.theta_filter not in ("both", "x1"):
            raise ConfigError("theta_filter must be 'both' or 'x1'")
        if self.symmetry_transform not in ("large", "middle"):
            raise ConfigError("symmetry_transform must be 'large' or 'middle'")
        if self.n_jobs < 1 or self.min_bin_pairs < 1:
            raise ConfigError("n_jobs and min_bin_pairs must be positive")
        if self.period_pairs is not None:
            for pr in self.period_pairs:
                if len(pr) != 2 or not pr[0] < pr[1]:
                    raise ConfigError(f"period pair {pr} must be [p1, p2] with p1 < p2")
        try:
            self.bin_grid()
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def bin_grid(self) -> LogBinGrid:
        """Conditioning grid; by default 0.2-decade bins from ``x_min`` to the top of the large window."""
        if self.grid is not None:
            return LogBinGrid(**self.grid)
        w = self.grid_width_decades
        n = max(1, math.ceil(math.log10(self.large_window[1] / self.x_min) / w - 1e-9))
        return LogBinGrid(self.x_min, 0.0, w, n)

    def density_edges(self) -> np.ndarray:
        return LogBinGrid.spanning(self.x_min, self.large_window[1], self.density_width_decades).edges

    def symmetry_edges(self) -> np.ndarray:
        w = self.symmetry_width_decades
        lo = math.log10(self.x_min)
        n = max(1, math.ceil(math.log10(self.large_window[1] / self.x_min) / w - 1e-9))
        return lo + w * np.arange(n + 1)


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, tuples as lists, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def write_tsv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


# --------------------------------------------------------------------------
# per-pair analysis
# --------------------------------------------------------------------------

class _Stages:
    """Runs named stages, recording failures instead of aborting."""

    def __init__(self, tag: str):
        self.tag = tag
        self.errors: list[dict] = []

    def run(self, name, fn, *args, **kw):
        try:
            out = fn(*args, **kw)
            log.info("[%s] %s ok", self.tag, name)
            return out
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("[%s] %s failed: %s", self.tag, name, exc)
            self.errors.append({"stage": name, "error": f"{type(exc).__name__}: {exc}"})
            return None


def _pareto_range(cfg: RunConfig):
    lo, hi = cfg.pareto_range
    return (lo, math.inf if hi is None else hi)


def _distribution(values, cfg: RunConfig, edges):
    dens = empirical_density(values, edges)
    out = {"n": int(np.size(values)), "underflow": dens.underflow, "overflow": dens.overflow}
    return out, dens


def _ks_static(values, mu, alpha, cfg: RunConfig):
    if alpha is None or mu is None or not alpha >= 0 or not mu > 0:
        raise ValueError("overlay needs mu > 0 and alpha >= 0")
    sel = np.asarray(values)[np.asarray(values) >= cfg.x_min]
    cdf = lambda x: cdf_static(x, mu, alpha, cfg.x0, cfg.x_min)  # noqa: E731
    return float(stats.kstest(sel, cdf).statistic)


def _gamma_entry(fit, tol) -> dict:
    # a fitted intercept is never exactly 0, so theta near 1 alone marks Gamma as indeterminate
    if abs(1.0 - fit.theta) <= tol:
        return {"status": "indeterminate", "value": None}
    return {"status": "ok", "value": gamma_relation(fit.theta, fit.log10_a)}


def analyze_pair(panel: PairedPanel, cfg: RunConfig, stages_wanted=("fit", "balance", "relations"),
                 plot_dir: str | None = None) -> dict:
    """Run the selected stages on one period pair; failures are recorded per stage."""
    tag = f"{panel.period_1}-{panel.period_2}"
    st = _Stages(tag)
    res: dict = {"period_1": panel.period_1, "period_2": panel.period_2, "n_pairs": panel.count}
    edges = cfg.density_edges()
    ln_range = cfg.lognormal_range or cfg.middle_window
    fits = {}

    if "fit" in stages_wanted:
        dist = {}
        for key, values in (("period_1", panel.x1), ("period_2", panel.x2)):
            d, dens = _distribution(values, cfg, edges)
            pf = st.run(f"pareto[{key}]", fit_pareto, values, _pareto_range(cfg))
            lf = st.run(f"lognormal[{key}]", fit_lognormal_mid, dens, ln_range)
            d["pareto"] = pf.to_dict() if pf else None
            d["lognormal"] = lf.to_dict() if lf else None
            dist[key] = d
            fits[key] = (pf, lf, dens)
        res["distribution"] = dist

    bal = {}
    if "balance" in stages_wanted or cfg.growth_rate == "modified":
        for kind, window in (("large", cfg.large_window), ("middle", cfg.middle_window)):
            qb = st.run(f"theta[{kind}]", estimate_theta_a, panel, window, kind, cfg.theta_filter)
            bal[kind] = qb

    if "fit" in stages_wanted:
        theta, log10_a = 1.0, 0.0
        if cfg.growth_rate == "modified" and bal.get("middle") is not None:
            theta, log10_a = bal["middle"].theta, bal["middle"].log10_a
        grid = cfg.bin_grid()
        r_edges = default_r_edges(cfg.r_max, cfg.r_width)
        cg = st.run("growth", conditional_growth_density, panel, grid, r_edges, theta, log10_a)
        tents = []
        tent_rows = []
        if cg is not None:
            for g in cg.bins:
                entry = {"bin_index": g.condition_bin, "x1_lower": g.x1_lower, "count": g.count}
                if g.count < cfg.min_bin_pairs:
                    entry["skipped"] = f"fewer than {cfg.min_bin_pairs} pairs"
                else:
                    try:
                        tf = fit_tent(g, cfg.r_max)
                    except ValueError as exc:
                        entry["error"] = str(exc)
                    else:
                        tents.append(tf)
                        entry.update(tf.to_dict())
                tent_rows.append(entry)
        res["growth"] = {"transform": [theta, log10_a], "r_width": cfg.r_width, "r_max": cfg.r_max,
                         "x1_underflow": cg.x1_underflow if cg else None,
                         "x1_overflow": cg.x1_overflow if cg else None, "tents": tent_rows}
        ng = st.run("alpha", fit_alpha, tents, cfg.x0, (cfg.x_min, cfg.x0)) if tents else None
        if not tents:
            st.errors.append({"stage": "alpha", "error": "no tent fits available"})
        res["non_gibrat"] = ng.to_dict() if ng else None
        fits["alpha"] = ng
        overlay = {}
        for key, values in (("period_1", panel.x1), ("period_2", panel.x2)):
            pf = fits[key][0]
            ks = st.run(f"overlay[{key}]", _ks_static, values, pf.mu if pf else None,
                        ng.alpha if ng else None, cfg) if (pf and ng) else None
            overlay[key] = {"ks": ks, "mu": pf.mu if pf else None, "alpha": ng.alpha if ng else None}
        res["overlay"] = overlay

    if "balance" in stages_wanted:
        out = {}
        for kind in ("large", "middle"):
            qb = bal.get(kind)
            out[kind] = qb.to_dict() if qb else None
            out[f"gamma_{kind}"] = _gamma_entry(qb, cfg.theta_unit_tol) if qb else None
        sym = {}
        sym["detailed"] = st.run("symmetry[detailed]", symmetry_statistic, panel, 1.0, 0.0, cfg.symmetry_edges())
        qb = bal.get(cfg.symmetry_transform)
        if qb is not None and qb.theta > 0:
            sym["quasi"] = st.run("symmetry[quasi]", symmetry_statistic, panel, qb.theta, qb.log10_a,
                                  cfg.symmetry_edges())
        out["symmetry"] = {k: (v.to_dict() if v else None) for k, v in sym.items()}
        res["balance"] = out

    if "relations" in stages_wanted and "fit" in stages_wanted and "balance" in stages_wanted:
        p1, l1, _ = fits["period_1"]
        p2, l2, _ = fits["period_2"]
        qh, qm = bal.get("large"), bal.get("middle")
        if all(v is not None for v in (p1, p2, l1, l2, qh, qm)):
            rel = st.run("relations", relation_checks, p1.mu, p2.mu, l1.sigma, l2.sigma, qh.theta, qm.theta,
                         cfg.tol_mu, cfg.tol_sigma)
            res["relations"] = rel.to_dict() if rel else None
        else:
            st.errors.append({"stage": "relations", "error": "missing upstream fits"})
            res["relations"] = None

    if plot_dir is not None:
        st.run("plot_data", _write_plot_data, plot_dir, panel, cfg, fits, res)
    res["errors"] = st.errors
    return res


def _write_plot_data(plot_dir, panel: PairedPanel, cfg: RunConfig, fits: dict, res: dict) -> None:
    os.makedirs(plot_dir, exist_ok=True)
    tag = f"{panel.period_1}_{panel.period_2}"
    ng = fits.get("alpha")
    for key in ("period_1", "period_2"):
        if key not in fits:
            continue
        pf, _, dens = fits[key]
        theory = np.full(dens.counts.size, np.nan)
        centers = np.sqrt(dens.edges[:-1] * dens.edges[1:])
        if pf is not None and ng is not None and pf.mu > 0 and ng.alpha >= 0:
            # scaled to the in-range mass above x_min
            n_above = np.sum((np.asarray(panel.x1 if key == "period_1" else panel.x2) >= cfg.x_min))
            scale = n_above / max(dens.total, 1)
            theory = np.where(centers >= cfg.x_min,
                              scale * pdf_static(centers, None, pf.mu, ng.alpha, cfg.x0, x_min=cfg.x_min), np.nan)
        rows = [(lo, hi, c, d, t) for (lo, hi, c, d), t in zip(dens.to_rows(), theory.tolist())]
        write_tsv(os.path.join(plot_dir, f"density_{tag}_{key}.tsv"),
                  ("x_lo", "x_hi", "count", "density", "theory"), rows)
    if "growth" in res:
        rows = [(t["bin_index"], t["x1_lower"], t["count"], t.get("t_plus", math.nan), t.get("t_minus", math.nan),
                 t.get("c", math.nan)) for t in res["growth"]["tents"]]
        if ng is not None:
            fp, fm = ng.slopes(np.array([r[1] for r in rows])) if rows else ([], [])
            rows = [r + (a, b) for r, a, b in zip(rows, np.atleast_1d(fp).tolist(), np.atleast_1d(fm).tolist())]
        else:
            rows = [r + (math.nan, math.nan) for r in rows]
        write_tsv(os.path.join(plot_dir, f"tents_{tag}.tsv"),
                  ("bin", "x1_lower", "count", "t_plus", "t_minus", "c", "t_plus_line", "t_minus_line"), rows)
        theta, log10_a = res["growth"]["transform"]
        cg = conditional_growth_density(panel, cfg.bin_grid(), default_r_edges(cfg.r_max, cfg.r_width),
                                        theta, log10_a)
        grows = [(g.condition_bin, g.x1_lower, r, c, q) for g in cg.bins
                 for r, c, q in zip(g.r_centers.tolist(), g.counts.tolist(), g.density_q.tolist())]
        write_tsv(os.path.join(plot_dir, f"growth_{tag}.tsv"), ("bin", "x1_lower", "r", "count", "q"), grows)
    write_tsv(os.path.join(plot_dir, f"scatter_{tag}.tsv"), ("log10_x1", "log10_x2"),
              zip(np.log10(panel.x1).tolist(), np.log10(panel.x2).tolist()))


# --------------------------------------------------------------------------
# top-level operations
# --------------------------------------------------------------------------

def _load_all(cfg: RunConfig):
    if not cfg.inputs:
        raise ConfigError("no input files given")
    cols = ColumnMap(**cfg.columns)
    obs, rejected, per_file = [], 0, []
    for path in cfg.inputs:
        lr = load_panel(path, cols)
        obs.extend(lr.observations)
        rejected += len(lr.rejected)
        per_file.append({"path": os.path.basename(path), "rows": len(lr), "rejected": len(lr.rejected)})
    keys = set()
    for ob in obs:
        k = (ob.entity_id, ob.period)
        if k in keys:
            raise PanelError(f"duplicate (entity, period) key across inputs: {k!r}")
        keys.add(k)
    return obs, per_file


def _period_pairs(cfg: RunConfig, obs) -> list[tuple[int, int]]:
    if cfg.period_pairs:
        return [tuple(p) for p in cfg.period_pairs]
    periods = sorted({ob.period for ob in obs})
    if len(periods) < 2:
        raise PanelError(f"need at least two periods, found {periods}")
    return list(zip(periods[:-1], periods[1:]))


def run_pipeline(cfg: RunConfig, stages_wanted=("fit", "balance", "relations"), write: bool = True) -> dict:
    """Full analysis of every period pair; returns the report and optionally writes it with plot data."""
    cfg.validate()
    obs, per_file = _load_all(cfg)
    pairs = _period_pairs(cfg, obs)
    out_dir = cfg.output_dir
    plot_dir = os.path.join(out_dir, "plots") if write else None

    def one(pr):
        try:
            panel = pair_periods(obs, *pr)
        except (PanelError, ValueError) as exc:
            return {"period_1": pr[0], "period_2": pr[1], "errors": [{"stage": "pair", "error": str(exc)}]}
        return analyze_pair(panel, cfg, stages_wanted, plot_dir)

    if cfg.n_jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(pr) for pr in pairs]
    report = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "stages": list(stages_wanted),
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("inputs", "output_dir", "n_jobs")},
        "inputs": per_file,
        "pairs": results,
    }
    report["summary"] = _summary(report)
    if write:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps_report(report))
        if "balance" in stages_wanted:
            rows = []
            for r in results:
                b = r.get("balance") or {}
                rel = r.get("relations") or {}
                th = (b.get("large") or {}).get("theta", math.nan)
                tm = (b.get("middle") or {}).get("theta", math.nan)
                rows.append((r["period_1"], r["period_2"], th, tm, rel.get("mu_ratio", math.nan),
                             rel.get("sigma_ratio", math.nan)))
            os.makedirs(plot_dir, exist_ok=True)
            write_tsv(os.path.join(plot_dir, "series.tsv"),
                      ("period_1", "period_2", "theta_h", "theta_m", "mu_ratio", "sigma_ratio"), rows)
    return report


def _summary(report: dict) -> dict:
    n_err = sum(len(p.get("errors", [])) for p in report["pairs"])
    rels = [p.get("relations") for p in report["pairs"]]
    passed = bool(rels) and all(r is not None and r.get("passed") for r in rels)
    return {"n_pairs": len(report["pairs"]), "n_stage_errors": n_err, "relations_passed": passed}


def check_report(report: dict, tol_mu: float | None = None, tol_sigma: float | None = None) -> tuple[bool, list[str]]:
    """Recompute every relation check from the raw fitted values stored in the report."""
    cfg = report.get("config", {})
    tol_mu = cfg.get("tol_mu", 0.05) if tol_mu is None else tol_mu
    tol_sigma = cfg.get("tol_sigma", 0.05) if tol_sigma is None else tol_sigma
    msgs, ok = [], True
    pairs = report.get("pairs") or []
    if not pairs:
        return False, ["report has no period pairs"]
    for p in pairs:
        tag = f"{p.get('period_1')}-{p.get('period_2')}"
        try:
            d = p["distribution"]
            b = p["balance"]
            rel = relation_checks(d["period_1"]["pareto"]["mu"], d["period_2"]["pareto"]["mu"],
                                  d["period_1"]["lognormal"]["sigma"], d["period_2"]["lognormal"]["sigma"],
                                  b["large"]["theta"], b["middle"]["theta"], tol_mu, tol_sigma)
        except (KeyError, TypeError, ValueError) as exc:
            ok = False
            msgs.append(f"{tag}: relation inputs missing or invalid ({exc})")
            continue
        stored = p.get("relations") or {}
        if stored and (stored.get("passed") != rel.passed):
            msgs.append(f"{tag}: stored verdict disagrees with recomputation")
        msgs.append(f"{tag}: mu_ratio-theta_h={rel.dev_mu:+.4f} ({'ok' if rel.pass_mu else 'FAIL'}), "
                    f"sigma_ratio-theta_m={rel.dev_sigma:+.4f} ({'ok' if rel.pass_sigma else 'FAIL'})")
        ok &= rel.passed
    return ok, msgs


def run_check(report_path: str) -> int:
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)
    if report.get("schema_version") != SCHEMA_VERSION:
        print(f"unsupported schema_version {report.get('schema_version')!r}", file=sys.stderr)
        return EXIT_DATA
    ok, msgs = check_report(report)
    for m in msgs:
        print(m)
    return EXIT_OK if ok else EXIT_CHECK


def run_synth(spec: GeneratorSpec, out_dir: str, n_jobs: int = 1) -> dict:
    """Write ``panel.csv`` and ``truth.json`` for ``spec`` into ``out_dir``."""
    panel, truth = gen_panel(spec, n_jobs=n_jobs)
    os.makedirs(out_dir, exist_ok=True)
    write_observations(os.path.join(out_dir, "panel.csv"), panel)
    write_truth(os.path.join(out_dir, "truth.json"), _clean(truth))
    return truth


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _window(s: str) -> list[float]:
    parts = s.replace(",", ":").split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {s!r}")
    return [float(parts[0]), float(parts[1])]


def _pair(s: str) -> list[int]:
    parts = s.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected P1:P2, got {s!r}")
    return [int(parts[0]), int(parts[1])]


_OVERRIDES = {
    "input": "inputs", "pairs": "period_pairs", "large": "large_window", "middle": "middle_window",
    "x0": "x0", "x_min": "x_min", "r_max": "r_max", "r_width": "r_width", "seed": "seed",
    "n_jobs": "n_jobs", "out": "output_dir", "growth_rate": "growth_rate", "theta_filter": "theta_filter",
    "min_bin_pairs": "min_bin_pairs",
}


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--input", action="append", help="panel file (repeatable)")
    p.add_argument("--pairs", type=_pair, action="append", help="period pair P1:P2 (repeatable)")
    p.add_argument("--large", type=_window, help="large-scale window LO:HI")
    p.add_argument("--middle", type=_window, help="middle-scale window LO:HI")
    p.add_argument("--x0", type=float)
    p.add_argument("--x-min", dest="x_min", type=float)
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--r-width", dest="r_width", type=float)
    p.add_argument("--min-bin-pairs", dest="min_bin_pairs", type=int)
    p.add_argument("--growth-rate", dest="growth_rate", choices=("plain", "modified"))
    p.add_argument("--theta-filter", dest="theta_filter", choices=("both", "x1"))
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.add_argument("--out", help="output directory")


def build_config(args) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            d = json.load(fh)
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
    for arg, key in _OVERRIDES.items():
        v = getattr(args, arg, None)
        if v is not None:
            d[key] = v
    return RunConfig.from_dict(d)


def _spec_from_args(args) -> GeneratorSpec:
    d = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            d = json.load(fh)
    for key in ("mode", "theta", "log10_a", "alpha", "mu1", "x0", "x_min", "seed", "t_sum", "alpha_high"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if args.n is not None:
        d["n_entities"] = args.n
    return GeneratorSpec.from_dict(d)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quasibalance", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate panel files and summarise periods")
    _config_args(p)

    p = sub.add_parser("growth", help="conditional growth-rate densities as TSV")
    _config_args(p)

    for name, helptext in (("fit", "distribution, tent and Non-Gibrat fits"),
                           ("balance", "quasi-balance axis, Gamma and symmetry tests"),
                           ("pipeline", "full analysis with relation checks and plot data")):
        p = sub.add_parser(name, help=helptext)
        _config_args(p)

    p = sub.add_parser("synth", help="generate a synthetic panel with its ground truth")
    p.add_argument("--spec", help="JSON generator spec")
    p.add_argument("--mode", choices=("gibrat", "static_nongibrat", "quasistatic"))
    p.add_argument("--n", type=int, help="number of entities")
    for key in ("theta", "log10_a", "alpha", "mu1", "x0", "t_sum", "alpha_high"):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float)
    p.add_argument("--x-min", dest="x_min", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", dest="n_jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("check", help="recompute relation checks of a report")
    p.add_argument("report")
    return ap


def _ingest(cfg: RunConfig) -> dict:
    cols = ColumnMap(**cfg.columns)
    files = []
    for path in cfg.inputs:
        lr = load_panel(path, cols)
        files.append({"path": os.path.basename(path), "rows": len(lr), "periods": lr.periods(),
                      "rejected": [{"line": r.line, "reason": r.reason} for r in lr.rejected]})
    if not files:
        raise ConfigError("no input files given")
    return {"schema_version": SCHEMA_VERSION, "files": files}


def _growth(cfg: RunConfig) -> None:
    obs, _ = _load_all(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    for pr in _period_pairs(cfg, obs):
        panel = pair_periods(obs, *pr)
        cg = conditional_growth_density(panel, cfg.bin_grid(), default_r_edges(cfg.r_max, cfg.r_width))
        rows = [(g.condition_bin, g.x1_lower, r, c, q) for g in cg.bins
                for r, c, q in zip(g.r_centers.tolist(), g.counts.tolist(), g.density_q.tolist())]
        write_tsv(os.path.join(cfg.output_dir, f"growth_{pr[0]}_{pr[1]}.tsv"),
                  ("bin", "x1_lower", "r", "count", "q"), rows)


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "check":
            return run_check(args.report)
        if args.command == "synth":
            spec = _spec_from_args(args)
            run_synth(spec, args.out, args.n_jobs)
            return EXIT_OK
        cfg = build_config(args)
        if args.command == "ingest":
            sys.stdout.write(dumps_report(_ingest(cfg)))
            return EXIT_OK
        if args.command == "growth":
            _growth(cfg)
            return EXIT_OK
        stages = {"fit": ("fit",), "balance": ("balance",), "pipeline": ("fit", "balance", "relations")}
        report = run_pipeline(cfg, stages[args.command], write=True)
        return EXIT_DATA if report["summary"]["n_stage_errors"] else EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PanelError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
