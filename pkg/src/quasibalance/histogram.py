"""Logarithmic binning, empirical densities and CCDFs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .panel import PairedPanel

LOG10_LN10 = math.log10(math.log(10.0))


@dataclass(frozen=True)
class LogBinGrid:
    """Bins ``scale * [10^(offset + width (n-1)), 10^(offset + width n))``, ``n = 1..n_bins``."""

    scale: float = 4.0
    offset_decades: float = 1.0
    width_decades: float = 0.2
    n_bins: int = 20

    def __post_init__(self):
        if self.scale <= 0 or self.width_decades <= 0 or self.n_bins < 1:
            raise ValueError("scale, width_decades and n_bins must be positive")

    @property
    def edges(self) -> np.ndarray:
        k = np.arange(self.n_bins + 1)
        return self.scale * 10.0 ** (self.offset_decades + self.width_decades * k)

    def lower(self, n: int) -> float:
        """Lower edge of 1-based bin ``n``."""
        return self.scale * 10.0 ** (self.offset_decades + self.width_decades * (n - 1))

    def upper(self, n: int) -> float:
        return self.lower(n + 1)

    def index(self, x) -> np.ndarray:
        """1-based bin index of each ``x``; 0 below the grid, ``n_bins + 1`` above."""
        return np.searchsorted(self.edges, np.asarray(x, dtype=float), side="right")

    @classmethod
    def spanning(cls, lo: float, hi: float, width_decades: float = 0.1) -> "LogBinGrid":
        """Grid of ``width_decades`` bins anchored at decade boundaries and covering ``[lo, hi]``."""
        start = math.floor(math.log10(lo) / width_decades) * width_decades
        stop = math.ceil(math.log10(hi) / width_decades) * width_decades
        n = max(1, int(round((stop - start) / width_decades)))
        if 10 ** (start + n * width_decades) <= hi:
            n += 1
        return cls(1.0, start, width_decades, n)


PROFITS_GRID = LogBinGrid(4.0, 1.0, 0.2, 20)


@dataclass
class BinnedDensity:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    total: int
    underflow: int = 0
    overflow: int = 0

    @property
    def widths(self):
        return np.diff(self.edges)

    def to_rows(self):
        return [(float(self.edges[i]), float(self.edges[i + 1]), int(self.counts[i]), float(self.density[i]))
                for i in range(len(self.counts))]


def empirical_density(values, edges) -> BinnedDensity:
    """Histogram density ``counts / (total * width)`` over in-range values.

    Values outside ``[edges[0], edges[-1])`` are reported as under/overflow
    and excluded from ``total``.
    """
    values = np.asarray(values, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if values.size == 0:
        raise ValueError("empirical_density needs at least one value")
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing with at least two entries")
    under = int(np.sum(values < edges[0]))
    over = int(np.sum(values >= edges[-1]))
    idx = np.searchsorted(edges, values, side="right") - 1
    inside = (idx >= 0) & (idx < edges.size - 1)
    counts = np.bincount(idx[inside], minlength=edges.size - 1)
    total = int(counts.sum())
    density = counts / (total * np.diff(edges)) if total else np.zeros(counts.size)
    return BinnedDensity(edges, counts, density, total, under, over)


class EmpiricalCcdf:
    """Right-continuous step function ``P(X > x)``.

    Evaluated at the sorted distinct sample values ``x_k``, ``p_k`` is the
    fraction of the sample strictly above ``x_k``; so the smallest value maps
    to ``1 - 1/N`` (without ties) and the largest to 0.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ValueError("empirical_ccdf needs at least one value")
        xs, counts = np.unique(values, return_counts=True)
        n = values.size
        self.n = n
        self.x = xs
        self.p = (n - np.cumsum(counts)) / n

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        k = np.searchsorted(self.x, q, side="right")
        out = np.where(k == 0, 1.0, self.p[np.maximum(k - 1, 0)])
        return out if out.ndim else float(out)

    def __iter__(self):
        return iter(zip(self.x.tolist(), self.p.tolist()))

    def __len__(self):
        return self.x.size


def empirical_ccdf(values) -> EmpiricalCcdf:
    return EmpiricalCcdf(values)


@dataclass
class GrowthRateDensity:
    condition_bin: int
    x1_lower: float
    x1_upper: float
    r_edges: np.ndarray
    counts: np.ndarray
    density_q: np.ndarray
    count: int
    in_range: int
    r_underflow: int
    r_overflow: int
    n_zero: int

    @property
    def r_centers(self):
        return 0.5 * (self.r_edges[:-1] + self.r_edges[1:])


@dataclass
class ConditionalGrowth:
    bins: list[GrowthRateDensity]
    x1_underflow: int
    x1_overflow: int
    total: int

    def counts(self) -> dict[int, int]:
        return {g.condition_bin: g.count for g in self.bins}


def default_r_edges(r_max: float = 1.0, width: float = 0.1) -> np.ndarray:
    """Symmetric edges ``[-r_max, r_max]`` with 0 as an edge."""
    k = int(round(r_max / width))
    return width * np.arange(-k, k + 1)


def conditional_growth_density(panel: PairedPanel, grid: LogBinGrid, r_edges=None,
                               theta: float = 1.0, log10_a: float = 0.0) -> ConditionalGrowth:
    """Conditional densities ``q(r | x1)`` of ``r = log10 R`` per ``x1`` bin.

    ``R`` is the modified growth rate ``x2 / (a x1^theta)`` (the plain one by
    default). Each density is normalised over the pairs of its bin whose ``r``
    falls inside ``r_edges``; empty ``x1`` bins are omitted.
    """
    r_edges = default_r_edges() if r_edges is None else np.asarray(r_edges, dtype=float)
    x1 = panel.x1
    r = np.log10(panel.x2) - log10_a - theta * np.log10(x1)
    idx = grid.index(x1)
    under = int(np.sum(idx == 0))
    over = int(np.sum(idx == grid.n_bins + 1))
    out = []
    widths = np.diff(r_edges)
    for n in range(1, grid.n_bins + 1):
        sel = r[idx == n]
        if sel.size == 0:
            continue
        counts, _ = np.histogram(sel, bins=r_edges)
        in_range = int(counts.sum())
        dens = counts / (in_range * widths) if in_range else np.zeros(counts.size)
        out.append(GrowthRateDensity(
            condition_bin=n, x1_lower=grid.lower(n), x1_upper=grid.upper(n), r_edges=r_edges,
            counts=counts, density_q=dens, count=int(sel.size), in_range=in_range,
            r_underflow=int(np.sum(sel < r_edges[0])), r_overflow=int(np.sum(sel > r_edges[-1])),
            n_zero=int(np.sum(sel == 0.0)),
        ))
    if not out:
        raise ValueError("no pairs fall inside the x1 grid")
    return ConditionalGrowth(out, under, over, panel.count)


def q_to_Q_log(log10_q, r):
    """``log10 Q(R|x1)`` from ``log10 q(r|x1)`` at ``R = 10^r``."""
    return np.asarray(log10_q) - np.asarray(r) - LOG10_LN10


def Q_to_q_log(log10_Q, r):
    return np.asarray(log10_Q) + np.asarray(r) + LOG10_LN10


def joint_hist2d(panel: PairedPanel, edges_u, edges_v, transform=None) -> np.ndarray:
    """Counts of transformed pairs on a 2-D grid.

    ``transform(x1, x2) -> (u, v)`` defaults to ``(log10 x1, log10 x2)``.
    """
    if transform is None:
        u, v = np.log10(panel.x1), np.log10(panel.x2)
    else:
        u, v = transform(panel.x1, panel.x2)
    counts, _, _ = np.histogram2d(u, v, bins=[np.asarray(edges_u), np.asarray(edges_v)])
    return counts.astype(np.int64)


def symmetrizing_transform(theta: float, log10_a: float):
    """``(x1, x2) -> (log10 x1, (log10 x2 - log10 a) / theta)``."""
    def transform(x1, x2):
        return np.log10(x1), (np.log10(x2) - log10_a) / theta
    return transform
