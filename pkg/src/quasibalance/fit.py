"""Regressions: Pareto index, log-normal body, tent slopes and the Non-Gibrat slope."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .histogram import BinnedDensity, EmpiricalCcdf, GrowthRateDensity


class FitError(ValueError):
    """Input does not support the requested fit."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class _Serializable:
    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _check_range(x_range) -> tuple[float, float]:
    lo, hi = float(x_range[0]), float(x_range[1])
    if not (lo > 0 and hi > lo):
        raise FitError(f"range must satisfy 0 < x_lo < x_hi, got ({lo}, {hi})")
    return lo, hi


def _wls(design: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted least squares; returns coefficients, residuals and the scaled covariance."""
    sw = np.sqrt(w)
    A = design * sw[:, None]
    b = y * sw
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = y - design @ coef
    dof = len(y) - design.shape[1]
    if dof > 0:
        s2 = float(np.sum(w * resid ** 2) / dof)
        cov = s2 * np.linalg.pinv(A.T @ A)
    else:
        cov = np.full((design.shape[1],) * 2, np.nan)
    return coef, resid, cov


# --------------------------------------------------------------------------
# ordinary least squares
# --------------------------------------------------------------------------

class OlsResult(NamedTuple):
    slope: float
    intercept: float
    r2: float
    stderr_slope: float
    stderr_intercept: float
    n: int


def ols_line(u, v=None) -> OlsResult:
    """Ordinary least squares of ``v`` on ``u``.

    Accepts either a sequence of ``(u, v)`` points or two arrays.
    """
    if v is None:
        pts = np.asarray(u, dtype=float).reshape(-1, 2)
        u, v = pts[:, 0], pts[:, 1]
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise FitError("u and v must be 1-D arrays of equal length")
    if u.size < 2 or np.all(u == u[0]):
        raise FitError("ols_line needs at least two distinct u values")
    res = stats.linregress(u, v)
    r2 = float(res.rvalue ** 2) if np.isfinite(res.rvalue) else 1.0
    return OlsResult(float(res.slope), float(res.intercept), r2,
                     float(res.stderr), float(res.intercept_stderr), int(u.size))


# --------------------------------------------------------------------------
# Pareto index
# --------------------------------------------------------------------------

@dataclass
class ParetoFit(_Serializable):
    mu: float
    c_const: float
    range: tuple[float, float]
    n_points: int
    residual_rms: float
    stderr_mu: float
    method: str
    mu_hill: float | None = None
    n_tail: int | None = None
    suspicious: bool = field(init=False)

    def __post_init__(self):
        self.suspicious = bool(not self.mu > 0)

    def pdf(self, x):
        """``C x^(-mu-1)``."""
        return self.c_const * np.asarray(x, dtype=float) ** (-self.mu - 1.0)

    def ccdf(self, x):
        """Tail ``(C/mu) x^(-mu)`` implied by the fitted density."""
        return self.c_const / self.mu * np.asarray(x, dtype=float) ** (-self.mu)


def hill_estimate(values, x_lo: float) -> tuple[float, int]:
    """Hill estimator of the tail index above ``x_lo``."""
    values = np.asarray(values, dtype=float)
    tail = values[values >= x_lo]
    if tail.size < 2:
        raise FitError("Hill estimator needs at least two tail values")
    s = float(np.sum(np.log(tail / x_lo)))
    if s <= 0:
        raise FitError("Hill estimator undefined: all tail values equal x_lo")
    return tail.size / s, int(tail.size)


def fit_pareto(data, x_range) -> ParetoFit:
    """Pareto index from the log-log slope of a CCDF or a binned density.

    ``data`` may be raw samples (1-D array), an :class:`EmpiricalCcdf`, a pair
    ``(x, p)`` of CCDF points, or a :class:`BinnedDensity`. Only points with
    ``x_lo <= x <= x_hi`` and positive ordinate enter the regression. For raw
    samples the Hill estimate above ``x_lo`` is attached as a cross-check.
    """
    lo, hi = _check_range(x_range)
    mu_hill = n_tail = None
    if isinstance(data, BinnedDensity):
        centers = np.sqrt(data.edges[:-1] * data.edges[1:])
        inside = (data.edges[:-1] >= lo) & (data.edges[1:] <= hi) & (data.counts > 0)
        x, y = centers[inside], data.density[inside]
        method = "density"
    else:
        if isinstance(data, EmpiricalCcdf):
            x, y = data.x, data.p
        elif isinstance(data, tuple) and len(data) == 2:
            x, y = np.asarray(data[0], dtype=float), np.asarray(data[1], dtype=float)
        else:
            samples = np.asarray(data, dtype=float)
            ccdf = EmpiricalCcdf(samples)
            x, y = ccdf.x, ccdf.p
            try:
                mu_hill, n_tail = hill_estimate(samples[samples <= hi], lo)
            except FitError:
                pass
        inside = (x >= lo) & (x <= hi) & (y > 0)
        x, y = x[inside], y[inside]
        method = "ccdf"
    if x.size < 3:
        raise FitError(f"fit_pareto needs at least 3 points in range, got {x.size}")
    fit = ols_line(np.log10(x), np.log10(y))
    if method == "ccdf":
        mu = -fit.slope
        c_const = mu * 10.0 ** fit.intercept
    else:
        mu = -fit.slope - 1.0
        c_const = 10.0 ** fit.intercept
    resid = np.log10(y) - (fit.intercept + fit.slope * np.log10(x))
    return ParetoFit(mu=float(mu), c_const=float(c_const), range=(lo, hi), n_points=int(x.size),
                     residual_rms=float(np.sqrt(np.mean(resid ** 2))), stderr_mu=fit.stderr_slope,
                     method=method, mu_hill=mu_hill, n_tail=n_tail)


# --------------------------------------------------------------------------
# log-normal body
# --------------------------------------------------------------------------

@dataclass
class LogNormalFit(_Serializable):
    sigma: float
    xbar: float
    range: tuple[float, float]
    residual_rms: float
    n_bins: int
    quad_coef: float
    stderr_quad: float


def fit_lognormal_mid(density: BinnedDensity, x_range, reject_sigmas: float = 2.0) -> LogNormalFit:
    """Log-normal ``(sigma, xbar)`` from a quadratic fit of ``ln p_Y`` against ``y = ln x``.

    Uses populated bins lying inside ``x_range``, weighted by their counts.
    ``p_Y`` is the bin mass divided by its width in ``y``. The fit is rejected
    unless the quadratic coefficient is negative by more than
    ``reject_sigmas`` standard errors.
    """
    lo, hi = _check_range(x_range)
    e = np.asarray(density.edges, dtype=float)
    inside = (e[:-1] >= lo * (1 - 1e-12)) & (e[1:] <= hi * (1 + 1e-12)) & (density.counts > 0)
    if int(inside.sum()) < 4:
        raise FitError(f"fit_lognormal_mid needs at least 4 populated bins in range, got {int(inside.sum())}")
    e_lo, e_hi = e[:-1][inside], e[1:][inside]
    p_y = density.density[inside] * (e_hi - e_lo) / np.log(e_hi / e_lo)
    y = 0.5 * (np.log(e_lo) + np.log(e_hi))
    w = density.counts[inside].astype(float)
    yc = y - np.average(y, weights=w)
    design = np.column_stack([np.ones_like(yc), yc, yc ** 2])
    (c0, c1, c2), resid, cov = _wls(design, np.log(p_y), w)
    se2 = float(math.sqrt(cov[2, 2])) if np.isfinite(cov[2, 2]) else 0.0
    threshold = max(reject_sigmas * se2, 1e-10 * max(abs(c1), 1.0))
    if not c2 < -threshold:
        raise FitError(f"non-concave log-density in window (quadratic coefficient {c2:.3g}, stderr {se2:.3g})")
    sigma = math.sqrt(-1.0 / (2.0 * c2))
    vertex = -c1 / (2.0 * c2) + np.average(y, weights=w)
    return LogNormalFit(sigma=sigma, xbar=float(math.exp(vertex)), range=(lo, hi),
                        residual_rms=float(np.sqrt(np.mean(resid ** 2))), n_bins=int(inside.sum()),
                        quad_coef=float(c2), stderr_quad=se2)


# --------------------------------------------------------------------------
# tent kernel
# --------------------------------------------------------------------------

@dataclass
class TentFit(_Serializable):
    bin_index: int
    x1_lower: float
    c: float
    t_plus: float
    t_minus: float
    n_pos: int
    n_neg: int
    pairs_pos: int
    pairs_neg: int
    stderr_t_plus: float
    stderr_t_minus: float
    residual_rms: float
    r_max: float

    @property
    def proper(self) -> bool:
        return self.t_plus > 0 and self.t_minus > 0


def fit_tent_points(r, log10_q, weights=None, r_max: float = math.inf):
    """Shared-intercept fit of ``log10 q = c - t+ r`` (r > 0) and ``c + t- r`` (r < 0).

    Returns ``(c, t_plus, t_minus, stderr_plus, stderr_minus, residual_rms, n_pos, n_neg)``.
    """
    r = np.asarray(r, dtype=float)
    lq = np.asarray(log10_q, dtype=float)
    w = np.ones_like(r) if weights is None else np.asarray(weights, dtype=float)
    keep = (np.abs(r) <= r_max + 1e-12) & np.isfinite(lq) & (w > 0)
    r, lq, w = r[keep], lq[keep], w[keep]
    pos, neg = r > 0, r < 0
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos < 2 or n_neg < 2:
        raise FitError(f"tent fit needs at least 2 populated r-bins per side, got {n_pos} and {n_neg}")
    design = np.column_stack([np.ones_like(r), -np.where(pos, r, 0.0), np.where(neg, r, 0.0)])
    coef, resid, cov = _wls(design, lq, w)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return (float(coef[0]), float(coef[1]), float(coef[2]), float(se[1]), float(se[2]),
            float(np.sqrt(np.mean(resid ** 2))), n_pos, n_neg)


def fit_tent(grd: GrowthRateDensity, r_max: float = 1.0) -> TentFit:
    """Fit the tent shape to one conditional growth-rate density.

    Each populated r-bin with ``|r| <= r_max`` enters with its log density at
    the bin center, weighted by its count.
    """
    if grd.in_range == 0 or grd.n_zero == grd.count:
        raise FitError(f"degenerate growth-rate data in bin {grd.condition_bin}")
    r = grd.r_centers
    populated = grd.counts > 0
    inside = populated & (np.abs(r) <= r_max + 1e-12)
    with np.errstate(divide="ignore"):
        lq = np.log10(grd.density_q)
    try:
        c, tp, tm, sp, sm, rms, n_pos, n_neg = fit_tent_points(r[inside], lq[inside], grd.counts[inside])
    except FitError as exc:
        raise FitError(f"bin {grd.condition_bin}: {exc}") from None
    pairs_pos = int(grd.counts[inside & (r > 0)].sum())
    pairs_neg = int(grd.counts[inside & (r < 0)].sum())
    return TentFit(bin_index=grd.condition_bin, x1_lower=float(grd.x1_lower), c=c, t_plus=tp, t_minus=tm,
                   n_pos=n_pos, n_neg=n_neg, pairs_pos=pairs_pos, pairs_neg=pairs_neg,
                   stderr_t_plus=sp, stderr_t_minus=sm, residual_rms=rms, r_max=float(r_max))


# --------------------------------------------------------------------------
# Non-Gibrat slope
# --------------------------------------------------------------------------

@dataclass
class NonGibratFit(_Serializable):
    alpha: float
    t_plus_x0: float
    t_minus_x0: float
    x0: float
    region: tuple[float, float]
    mu_from_t: float
    stderr_alpha: float
    residual_rms: float
    n_bins: int
    bins_used: list[int]

    def slopes(self, x1):
        """Fitted ``(t+, t-)`` at ``x1``."""
        L = np.log(np.asarray(x1, dtype=float) / self.x0)
        return self.t_plus_x0 + self.alpha * L, self.t_minus_x0 - self.alpha * L


def fit_alpha(tents: Sequence[TentFit], x0: float, region, weighted: bool = True,
              rel_tol: float = 1e-9) -> NonGibratFit:
    """Joint fit of ``t+ = t+(x0) + alpha L`` and ``t- = t-(x0) - alpha L``, ``L = ln(x1/x0)``.

    Uses tents whose lower bin edge lies in ``[x_min, x0)``; each branch point
    is weighted by its number of pairs when ``weighted``.
    """
    x_min, x_hi = _check_range(region)
    if x0 <= 0:
        raise FitError("x0 must be positive")
    sel = [t for t in tents if x_min * (1 - rel_tol) <= t.x1_lower < x_hi * (1 - rel_tol)]
    if not sel:
        raise FitError(f"no tents with x1_lower in region [{x_min:g}, {x_hi:g})")
    if len(sel) < 3:
        raise FitError(f"fit_alpha needs at least 3 tents in region, got {len(sel)}")
    sel.sort(key=lambda t: t.bin_index)
    L = np.log(np.array([t.x1_lower for t in sel]) / x0)
    tp = np.array([t.t_plus for t in sel])
    tm = np.array([t.t_minus for t in sel])
    if weighted:
        w = np.concatenate([[t.pairs_pos for t in sel], [t.pairs_neg for t in sel]]).astype(float)
    else:
        w = np.ones(2 * len(sel))
    one, zero = np.ones_like(L), np.zeros_like(L)
    design = np.vstack([np.column_stack([one, zero, L]), np.column_stack([zero, one, -L])])
    coef, resid, cov = _wls(design, np.concatenate([tp, tm]), w)
    tp0, tm0, alpha = (float(c) for c in coef)
    return NonGibratFit(alpha=alpha, t_plus_x0=tp0, t_minus_x0=tm0, x0=float(x0), region=(x_min, x_hi),
                        mu_from_t=tp0 - tm0, stderr_alpha=float(math.sqrt(max(cov[2, 2], 0.0))),
                        residual_rms=float(np.sqrt(np.mean(resid ** 2))), n_bins=len(sel),
                        bins_used=[t.bin_index for t in sel])
