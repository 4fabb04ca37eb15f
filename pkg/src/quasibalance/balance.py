"""Detailed (quasi-)balance: symmetry axis, modified growth rates and a symmetry test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .fit import FitError, _Serializable, ols_line
from .histogram import PROFITS_GRID, joint_hist2d, symmetrizing_transform
from .panel import PairedPanel

REGION_KINDS = ("large", "middle")
FILTERS = ("both", "x1")


class GammaIndeterminate(ValueError):
    """``theta = 1`` and ``a = 1``: every Gamma satisfies the relation."""


class InconsistentGamma(ValueError):
    """``theta = 1`` with ``a != 1``: no finite Gamma satisfies the relation."""


@dataclass
class QuasiBalanceFit(_Serializable):
    theta: float
    log10_a: float
    region: tuple[float, float]
    region_kind: str
    n_pairs: int
    stderr_theta: float
    stderr_log10_a: float
    r2: float
    filter: str
    theta_orthogonal: float

    @property
    def a(self) -> float:
        return 10.0 ** self.log10_a


def _orthogonal_slope(u, v) -> float:
    """Slope of the principal axis of the centered ``(u, v)`` cloud."""
    cov = np.cov(u, v)
    w, vecs = np.linalg.eigh(cov)
    du, dv = vecs[:, np.argmax(w)]
    return float(dv / du) if du != 0 else math.inf


def estimate_theta_a(panel: PairedPanel, region, region_kind: str = "large",
                     filter: str = "both", min_pairs: int = 10) -> QuasiBalanceFit:
    """OLS of ``log10 x2`` on ``log10 x1`` over the pairs inside ``region``.

    ``filter="both"`` keeps pairs with both values in ``[x_lo, x_hi]``;
    ``filter="x1"`` conditions on ``x1`` alone.
    """
    lo, hi = float(region[0]), float(region[1])
    if not 0 < lo < hi:
        raise ValueError(f"region must satisfy 0 < x_lo < x_hi, got ({lo}, {hi})")
    if region_kind not in REGION_KINDS:
        raise ValueError(f"region_kind must be one of {REGION_KINDS}")
    if filter not in FILTERS:
        raise ValueError(f"filter must be one of {FILTERS}")
    x1, x2 = panel.x1, panel.x2
    mask = (x1 >= lo) & (x1 <= hi)
    if filter == "both":
        mask &= (x2 >= lo) & (x2 <= hi)
    n = int(mask.sum())
    if n < min_pairs:
        raise FitError(f"{region_kind} region [{lo:g}, {hi:g}] holds {n} pairs, need {min_pairs}")
    u, v = np.log10(x1[mask]), np.log10(x2[mask])
    res = ols_line(u, v)
    return QuasiBalanceFit(theta=res.slope, log10_a=res.intercept, region=(lo, hi), region_kind=region_kind,
                           n_pairs=n, stderr_theta=res.stderr_slope, stderr_log10_a=res.stderr_intercept,
                           r2=res.r2, filter=filter, theta_orthogonal=_orthogonal_slope(u, v))


def modified_growth_rate(x1, x2, theta: float, log10_a: float):
    """``R = x2 / (a x1^theta)``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(~(x1 > 0)) or np.any(~(x2 > 0)):
        raise ValueError("x1 and x2 must be positive")
    if theta == 1.0 and log10_a == 0.0:
        out = x2 / x1
    else:
        out = np.exp(np.log(x2) - log10_a * math.log(10.0) - theta * np.log(x1))
    return out if out.ndim else float(out)


def gamma_relation(theta: float, log10_a: float, atol: float = 0.0) -> float:
    """``Gamma = 2 log10 a / (1 - theta)``.

    ``atol`` treats ``|1 - theta|`` and ``|log10 a|`` at or below it as zero.
    """
    if not (math.isfinite(theta) and math.isfinite(log10_a)):
        raise ValueError("theta and log10_a must be finite")
    if abs(1.0 - theta) <= atol:
        if abs(log10_a) <= atol:
            raise GammaIndeterminate("theta = 1 and a = 1: Gamma is indeterminate")
        raise InconsistentGamma(f"theta = 1 with log10 a = {log10_a:g}: no Gamma satisfies the relation")
    return 2.0 * log10_a / (1.0 - theta)


def theta_from_gamma(gamma: float, log10_a: float) -> float:
    """Inverse of :func:`gamma_relation`: ``theta = 1 - 2 log10 a / Gamma``."""
    if gamma == 0 or not math.isfinite(gamma):
        raise ValueError("Gamma must be finite and non-zero")
    return 1.0 - 2.0 * log10_a / gamma


@dataclass
class SymmetryReport(_Serializable):
    statistic: float
    dof: int
    p_value: float
    transform_used: tuple[float, float]
    n_pairs: int


def default_symmetry_edges(width_decades: float = 0.2) -> np.ndarray:
    """``log10`` edges from the lower edge of grid bin 9 to the grid's top."""
    g = PROFITS_GRID
    lo = math.log10(g.lower(9))
    hi = math.log10(g.upper(g.n_bins))
    k = int(round((hi - lo) / width_decades))
    return lo + width_decades * np.arange(k + 1)


def bowker(counts) -> tuple[float, int, float]:
    """Bowker symmetry statistic, degrees of freedom and chi-square p-value of a square table."""
    n = np.asarray(counts, dtype=float)
    if n.ndim != 2 or n.shape[0] != n.shape[1]:
        raise ValueError("symmetry test needs a square table")
    iu = np.triu_indices(n.shape[0], k=1)
    a, b = n[iu], n.T[iu]
    s = a + b
    used = s > 0
    stat = float(np.sum((a[used] - b[used]) ** 2 / s[used]))
    dof = int(used.sum())
    p = float(stats.chi2.sf(stat, dof)) if dof else 1.0
    return stat, dof, p


def symmetry_statistic(panel: PairedPanel, theta: float = 1.0, log10_a: float = 0.0,
                       edges=None) -> SymmetryReport:
    """Symmetry test of the 2-D histogram in ``(log10 x1, (log10 x2 - log10 a) / theta)``.

    ``edges`` are shared ``log10`` bin edges for both axes.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    edges = default_symmetry_edges() if edges is None else np.asarray(edges, dtype=float)
    counts = joint_hist2d(panel, edges, edges, symmetrizing_transform(theta, log10_a))
    total = int(counts.sum())
    if total == 0:
        raise FitError("symmetry grid is empty")
    stat, dof, p = bowker(counts)
    return SymmetryReport(statistic=stat, dof=dof, p_value=p, transform_used=(float(theta), float(log10_a)),
                          n_pairs=total)
