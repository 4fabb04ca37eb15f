"""Synthetic panels with known ground truth.

Initial values are drawn from the bent power law (Gaussian in ``ln x`` below
``x0``, Pareto above) by composition with exact segment weights, growth rates
from the tent kernel by inverse CDF, and ``x2 = a * x1**theta * R``.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import special, stats

from .panel import PairedPanel
from .theory import NotNormalizable, TentKernelParams, TheoryParams

MODES = ("gibrat", "static_nongibrat", "quasistatic")

# entities are generated in fixed-size blocks, each with its own child stream
BLOCK_SIZE = 8192

# reference-scale thresholds: profits (thousand yen) and land prices (yen/m^2)
PROFITS_X0 = 4.0 * 10 ** (1 + 0.2 * 16)
PROFITS_X_MIN = 4.0 * 10 ** (1 + 0.2 * 8)
LAND_X0 = 2.5e5
LAND_X_MIN = 5.0e3


def _log_diff_ndtr(a, b):
    """``ln(Phi(b) - Phi(a))`` for ``a <= b``, stable in both tails."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    flip = a > 0
    lo, hi = np.where(flip, -b, a), np.where(flip, -a, b)
    lb, la = special.log_ndtr(hi), special.log_ndtr(lo)
    with np.errstate(divide="ignore"):
        out = lb + np.log1p(-np.exp(la - lb))
    return out if out.ndim else float(out)


class _Segment:
    """Density ``exp(-mu*u - beta*u^2)`` on ``[lo, hi]`` in ``u = ln(x/x0)``."""

    def __init__(self, lo: float, hi: float, mu: float, beta: float):
        self.lo, self.hi, self.mu, self.beta = lo, hi, mu, beta
        self.gaussian = beta > 1e-12
        if self.gaussian:
            self.mean = -mu / (2.0 * beta)
            self.sd = 1.0 / math.sqrt(2.0 * beta)
            za, zb = (lo - self.mean) / self.sd, (hi - self.mean) / self.sd
            self.za, self.zb = za, zb
            self.log_mass = _log_diff_ndtr(za, zb)
            self.log_weight = mu * mu / (4.0 * beta) + 0.5 * math.log(math.pi / beta) + self.log_mass
        else:
            if math.isinf(hi) and mu <= 0:
                raise NotNormalizable(f"Pareto tail with mu={mu} is not normalisable")
            if mu == 0:
                self.log_weight = math.log(hi - lo)
            elif math.isinf(hi):
                self.log_weight = -mu * lo - math.log(mu)
            else:
                # (e^{-mu lo} - e^{-mu hi}) / mu, kept in log space
                span = hi - lo
                self.log_weight = -mu * lo + math.log(-math.expm1(-mu * span) / mu)

    def cdf(self, u):
        u = np.clip(u, self.lo, self.hi)
        if self.gaussian:
            z = (u - self.mean) / self.sd
            return np.exp(_log_diff_ndtr(np.full_like(z, self.za), z) - self.log_mass)
        if self.mu == 0:
            return (u - self.lo) / (self.hi - self.lo)
        if math.isinf(self.hi):
            return -np.expm1(-self.mu * (u - self.lo))
        return np.expm1(-self.mu * (u - self.lo)) / np.expm1(-self.mu * (self.hi - self.lo))

    def sample(self, n: int, rng: np.random.Generator):
        if self.gaussian:
            return stats.truncnorm.rvs(self.za, self.zb, loc=self.mean, scale=self.sd, size=n, random_state=rng)
        v = rng.random(n)
        if self.mu == 0:
            return self.lo + v * (self.hi - self.lo)
        if math.isinf(self.hi):
            return self.lo - np.log1p(-v) / self.mu
        return self.lo - np.log1p(v * np.expm1(-self.mu * (self.hi - self.lo))) / self.mu


class BentPowerLaw:
    """``x^-(mu+1) exp(-beta ln^2(x/x0))`` on ``[x_min, inf)`` (``beta_high`` above ``x0``)."""

    def __init__(self, mu: float, beta: float, x0: float, x_min: float, beta_high: float = 0.0):
        if not 0 < x_min:
            raise ValueError("x_min must be positive")
        self.mu, self.beta, self.x0, self.x_min, self.beta_high = mu, beta, x0, x_min, beta_high
        u_min = math.log(x_min / x0)
        if u_min < 0:
            self.segments = [_Segment(u_min, 0.0, mu, beta), _Segment(0.0, math.inf, mu, beta_high)]
        else:
            self.segments = [_Segment(u_min, math.inf, mu, beta_high)]
        lw = np.array([s.log_weight for s in self.segments])
        w = np.exp(lw - lw.max())
        self.weights = w / w.sum()

    def cdf(self, x):
        u = np.log(np.asarray(x, dtype=float) / self.x0)
        out = np.zeros_like(u, dtype=float)
        acc = 0.0
        for seg, w in zip(self.segments, self.weights):
            inside = (u >= seg.lo) & (u < seg.hi)
            if inside.any():
                out[inside] = acc + w * seg.cdf(u[inside])
            out[u >= seg.hi] = acc + w
            acc += w
        return out

    def sample(self, n: int, rng: np.random.Generator):
        which = rng.choice(len(self.segments), size=n, p=self.weights)
        u = np.empty(n)
        for k, seg in enumerate(self.segments):
            idx = np.flatnonzero(which == k)
            if idx.size:
                u[idx] = seg.sample(idx.size, rng)
        return self.x0 * np.exp(u)


def sample_initial(params: TheoryParams, n: int, rng: np.random.Generator):
    """Draw ``n`` initial values from the first-period density of ``params``."""
    dist = BentPowerLaw(params.mu1, params.theta * params.alpha, params.x0, params.x_min,
                        params.theta * params.alpha_high)
    return dist.sample(n, rng)


def sample_kernel(x1, kernel: TentKernelParams, rng: np.random.Generator):
    """Draw one growth rate per element of ``x1`` from the tent kernel at that ``x1``.

    ``R > 1`` with probability ``t-/(t+ + t-)``, then ``R = V^(-1/t+)``;
    otherwise ``R = V^(1/t-)``, with ``V`` uniform on ``(0, 1]``.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    tp, tm = kernel.slopes(x1)
    if np.any(tp <= 0) or np.any(tm <= 0):
        bad = x1[(tp <= 0) | (tm <= 0)][0]
        raise NotNormalizable(f"kernel not normalisable at x1={bad:g}")
    up = rng.random(x1.size) < tm / (tp + tm)
    v = 1.0 - rng.random(x1.size)
    return np.where(up, v ** (-1.0 / tp), v ** (1.0 / tm))


# --------------------------------------------------------------------------
# pure multiplicative process
# --------------------------------------------------------------------------

@dataclass
class MultiplicativePaths:
    growth: np.ndarray  # (n_paths, n_steps)
    x: np.ndarray  # (n_paths, n_steps + 1), running product
    log_x: np.ndarray  # (n_paths, n_steps + 1), running sum of logs


def _draw_growth(r_dist: dict, shape, rng):
    kind = r_dist.get("kind")
    if kind == "constant":
        return np.full(shape, float(r_dist["value"]))
    if kind == "loguniform":
        return np.exp(rng.uniform(r_dist["low"], r_dist["high"], size=shape))
    if kind == "lognormal":
        return np.exp(rng.normal(r_dist.get("mean", 0.0), r_dist["sigma"], size=shape))
    if kind == "tent":
        kern = TentKernelParams(r_dist["t_plus"], r_dist["t_minus"], 0.0, 1.0)
        return sample_kernel(np.ones(int(np.prod(shape))), kern, rng).reshape(shape)
    raise ValueError(f"unknown growth distribution {kind!r}")


def sim_multiplicative(x_init: float, n_steps: int, r_dist: dict, seed: int, n_paths: int = 1) -> MultiplicativePaths:
    """Iterate ``x(t+1) = R(t) x(t)`` with i.i.d. ``R``.

    ``r_dist`` is a dict with ``kind`` in ``constant`` (``value``),
    ``loguniform`` (``low``, ``high`` bounds on ``ln R``), ``lognormal``
    (``mean``, ``sigma``) or ``tent`` (``t_plus``, ``t_minus``).
    """
    if x_init <= 0 or n_steps < 1:
        raise ValueError("need x_init > 0 and n_steps >= 1")
    rng = np.random.default_rng(seed)
    growth = _draw_growth(r_dist, (n_paths, n_steps), rng)
    x = np.empty((n_paths, n_steps + 1))
    x[:, 0] = x_init
    np.cumprod(growth, axis=1, out=x[:, 1:])
    x[:, 1:] *= x_init
    log_x = np.empty_like(x)
    log_x[:, 0] = math.log(x_init)
    np.cumsum(np.log(growth), axis=1, out=log_x[:, 1:])
    log_x[:, 1:] += math.log(x_init)
    return MultiplicativePaths(growth, x, log_x)


# --------------------------------------------------------------------------
# panel generator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    n_entities: int = 100_000
    mode: str = "static_nongibrat"
    theta: float = 1.0
    log10_a: float = 0.0
    alpha: float = 0.14
    mu1: float = 1.0
    x0: float = PROFITS_X0
    x_min: float = PROFITS_X_MIN
    seed: int = 0
    t_sum: float = 3.0
    alpha_high: float = 0.0
    period_1: int = 1
    period_2: int = 2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_entities < 1:
            raise ValueError("n_entities must be positive")
        if not 0 < self.x_min < self.x0:
            raise ValueError("need 0 < x_min < x0")
        if not self.period_1 < self.period_2:
            raise ValueError("period_1 must precede period_2")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def effective(self) -> "GeneratorSpec":
        """Spec with the mode's constraints applied."""
        if self.mode == "gibrat":
            return replace(self, alpha=0.0, alpha_high=0.0)
        if self.mode == "static_nongibrat":
            return replace(self, theta=1.0, log10_a=0.0)
        return self

    def theory(self) -> TheoryParams:
        s = self.effective()
        return TheoryParams(mu1=s.mu1, theta=s.theta, log10_a=s.log10_a, alpha=s.alpha,
                            x0=s.x0, x_min=s.x_min, alpha_high=s.alpha_high)

    def kernel(self) -> TentKernelParams:
        return self.theory().kernel(self.t_sum)

    def validate(self) -> None:
        self.kernel().check_domain(self.x_min)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**d)


def ground_truth(spec: GeneratorSpec) -> dict:
    s = spec.effective()
    p = spec.theory()
    k = spec.kernel()
    truth = {"spec": asdict(spec), "effective": asdict(s)}
    truth["theta"] = p.theta
    truth["log10_a"] = p.log10_a
    truth["alpha"] = p.alpha
    truth["mu1"] = p.mu1
    truth["mu2_ratio_relation"] = p.mu2
    truth["mu2_pushforward"] = p.mu1 / p.theta
    truth["t_plus_x0"] = k.t_plus_x0
    truth["t_minus_x0"] = k.t_minus_x0
    truth["x0"] = p.x0
    truth["x_min"] = p.x_min
    if p.alpha > 0:
        truth["sigma1"] = p.sigma1
        truth["sigma2"] = p.sigma2
    if p.theta != 1.0:
        truth["gamma"] = 2.0 * p.log10_a / (1.0 - p.theta)
    return truth


def _block(spec: GeneratorSpec, params: TheoryParams, kernel: TentKernelParams, index: int, size: int):
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(index,)))
    x1 = sample_initial(params, size, rng)
    R = sample_kernel(x1, kernel, rng)
    x2 = params.a * x1 ** params.theta * R
    return x1, x2


def gen_panel(spec: GeneratorSpec, n_jobs: int = 1) -> tuple[PairedPanel, dict]:
    """Generate a paired panel and its ground-truth record.

    Output depends only on ``spec`` (seed included), not on ``n_jobs``: each
    block of :data:`BLOCK_SIZE` entities has its own stream spawned from the seed.
    """
    spec.validate()
    params = spec.theory()
    kernel = spec.kernel()
    n = spec.n_entities
    sizes = [min(BLOCK_SIZE, n - i) for i in range(0, n, BLOCK_SIZE)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda ib: _block(spec, params, kernel, *ib), enumerate(sizes)))
    else:
        parts = [_block(spec, params, kernel, i, sz) for i, sz in enumerate(sizes)]
    x1 = np.concatenate([p[0] for p in parts])
    x2 = np.concatenate([p[1] for p in parts])
    width = max(6, len(str(n - 1)))
    ids = tuple(f"e{i:0{width}d}" for i in range(n))
    panel = PairedPanel(spec.period_1, spec.period_2, ids, x1, x2)
    return panel, ground_truth(spec)


def write_truth(path, truth: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2)
        fh.write("\n")
