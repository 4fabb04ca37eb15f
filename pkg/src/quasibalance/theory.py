"""Closed-form densities and the analytic relations tying them together.

Densities here are the power-law / log-normal hybrids produced by a tent-shaped
growth kernel whose slopes drift linearly in ``ln x`` below a threshold ``x0``.
Normalisation constants are computed numerically over ``[x_min, inf)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

LN10 = math.log(10.0)

# upper integration limit in u = ln(x/x0) is chosen so the power-law tail beyond it
# carries less than exp(-_TAIL_EFOLDS) of the mass
_TAIL_EFOLDS = 60.0


class NotNormalizable(ValueError):
    """Raised when kernel slopes or density exponents leave a density without finite mass."""


@dataclass(frozen=True)
class TentKernelParams:
    """Tent-shaped growth-rate kernel with slopes drifting in ``ln x``.

    ``t_plus(x) = t_plus_x0 + alpha * ln(x/x0)`` and
    ``t_minus(x) = t_minus_x0 - alpha * ln(x/x0)`` below ``x0``; above ``x0`` the
    drift coefficient is ``alpha_high`` (zero in the Gibrat region). Slopes are
    frozen beyond ``x_cap`` (default ``1e3 * x0``).
    """

    t_plus_x0: float
    t_minus_x0: float
    alpha: float
    x0: float
    alpha_high: float = 0.0
    x_cap: float | None = None

    def __post_init__(self):
        if self.x0 <= 0:
            raise ValueError("x0 must be positive")

    @property
    def cap(self) -> float:
        return self.x_cap if self.x_cap is not None else self.x0 * 1e3

    def slopes(self, x):
        """Return ``(t_plus, t_minus)`` evaluated at ``x`` (scalar or array)."""
        x = np.minimum(np.asarray(x, dtype=float), self.cap)
        log_ratio = np.log(x / self.x0)
        drift = np.where(log_ratio < 0.0, self.alpha, self.alpha_high) * log_ratio
        return self.t_plus_x0 + drift, self.t_minus_x0 - drift

    def check_domain(self, x_lo: float, x_hi: float | None = None) -> None:
        """Raise :class:`NotNormalizable` unless both slopes stay positive on ``[x_lo, x_hi]``."""
        x_hi = self.cap if x_hi is None else min(x_hi, self.cap)
        # slopes are piecewise linear in ln x: extremes sit at the ends or at x0
        probes = [x_lo, x_hi] + ([self.x0] if x_lo < self.x0 < x_hi else [])
        tp, tm = self.slopes(np.array(probes, dtype=float))
        if np.any(tp <= 0) or np.any(tm <= 0):
            raise NotNormalizable(
                f"kernel slopes not positive on [{x_lo:g}, {x_hi:g}]: "
                f"t+ in [{tp.min():.4g}, {tp.max():.4g}], t- in [{tm.min():.4g}, {tm.max():.4g}]"
            )

    def normalization(self, x):
        tp, tm = self.slopes(x)
        return tent_normalization(tp, tm)


@dataclass(frozen=True)
class TheoryParams:
    """Parameter set of the quasistatic system.

    The primary parameters are ``mu1, theta, log10_a, alpha, x0, x_min``;
    ``mu2``, ``sigma1``, ``sigma2`` and ``xbar1`` are derived through the
    closed-form identifications, so the ratio relations hold identically.
    """

    mu1: float = 1.0
    theta: float = 1.0
    log10_a: float = 0.0
    alpha: float = 0.14
    x0: float = 4.0 * 10 ** 4.2
    x_min: float = 4.0 * 10 ** 2.6
    alpha_high: float = 0.0

    def __post_init__(self):
        if not self.x_min < self.x0:
            raise ValueError(f"x_min ({self.x_min}) must be below x0 ({self.x0})")
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    @property
    def a(self) -> float:
        return 10.0 ** self.log10_a

    @property
    def mu2(self) -> float:
        return (self.mu1 + 1.0) / self.theta - 1.0

    @property
    def sigma1(self) -> float:
        return param_map_quasistatic(self.theta, self.alpha)[0]

    @property
    def sigma2(self) -> float:
        return param_map_quasistatic(self.theta, self.alpha)[1]

    @property
    def xbar1(self) -> float:
        return self.x0 * math.exp(-self.mu1 * self.sigma1 ** 2)

    def kernel(self, t_sum: float) -> TentKernelParams:
        """Kernel consistent with these densities.

        The slope difference at ``x0`` is fixed by the differential equation
        (``t+(x0) - t-(x0) = mu2``); ``t_sum`` sets the kernel width and is
        conserved in ``x``.
        """
        diff = self.mu2
        return TentKernelParams(
            t_plus_x0=0.5 * (t_sum + diff),
            t_minus_x0=0.5 * (t_sum - diff),
            alpha=self.alpha,
            x0=self.x0,
            alpha_high=self.alpha_high,
        )

    def relations(self) -> dict:
        return {
            "mu_ratio": (self.mu1 + 1.0) / (self.mu2 + 1.0),
            "sigma_ratio": self.sigma2 / self.sigma1,
            "theta": self.theta,
        }


# --------------------------------------------------------------------------
# densities
# --------------------------------------------------------------------------

def pdf_lognormal(x, sigma: float, xbar: float):
    """Log-normal density with median ``xbar`` and log-scale ``sigma``."""
    if sigma <= 0 or xbar <= 0:
        raise ValueError("sigma and xbar must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    return np.exp(-np.log(x / xbar) ** 2 / (2.0 * sigma ** 2)) / (x * math.sqrt(2.0 * math.pi * sigma ** 2))


def log_bent_power_law(x, mu: float, beta: float, x0: float, beta_high: float = 0.0):
    """``ln`` of ``x^-(mu+1) * exp(-beta(x) ln^2(x/x0))`` with ``beta`` switching at ``x0``."""
    x = np.asarray(x, dtype=float)
    u = np.log(x / x0)
    b = np.where(u < 0.0, beta, beta_high)
    return -(mu + 1.0) * np.log(x) - b * u * u


def _log_norm_const(mu, beta, x0, x_min, beta_high=0.0):
    """``ln`` of the integral of ``exp(log_bent_power_law)`` over ``[x_min, inf)`` by quadrature.

    Integrates in ``u = ln(x/x0)`` where the integrand is ``exp(-mu*u - beta*u^2)``
    times the constant ``x0^-mu``.
    """
    u_min = math.log(x_min / x0)
    if beta_high <= 0 and mu <= 0:
        raise NotNormalizable(f"power-law tail with mu={mu} has infinite mass")

    # shift by the maximum of the exponent to keep quad well conditioned
    def expo(u):
        b = beta if u < 0 else beta_high
        return -mu * u - b * u * u

    vertex = -mu / (2 * beta) if beta > 0 else None
    cands = [u_min, max(u_min, 0.0)] + ([vertex] if vertex is not None and u_min < vertex < 0 else [])
    shift = max(expo(u) for u in cands)

    pieces = []
    if u_min < 0:
        inner = [vertex] if vertex is not None and u_min < vertex < 0 else None
        val, _ = integrate.quad(lambda u: math.exp(expo(u) - shift), u_min, 0.0,
                                points=inner, epsabs=0, epsrel=1e-12, limit=200)
        pieces.append(val)
    start = max(u_min, 0.0)
    if beta_high > 0:
        hi = start + math.sqrt(2 * _TAIL_EFOLDS / beta_high) + max(0.0, -mu / beta_high)
    else:
        hi = start + _TAIL_EFOLDS / mu
    val, _ = integrate.quad(lambda u: math.exp(expo(u) - shift), start, hi,
                            epsabs=0, epsrel=1e-12, limit=200)
    pieces.append(val)
    return math.log(sum(pieces)) + shift - mu * math.log(x0)


def static_normalization(mu: float, alpha: float, x0: float, x_min: float, alpha_high: float = 0.0) -> float:
    """Constant ``C`` making the static density integrate to one over ``[x_min, inf)``."""
    return math.exp(-_log_norm_const(mu, alpha, x0, x_min, alpha_high))


def pdf_static(x, C, mu: float, alpha: float, x0: float, alpha_high: float = 0.0, x_min: float | None = None):
    """Static density ``C x^-(mu+1) exp(-alpha ln^2(x/x0))``.

    With ``alpha = 0`` this is the pure Pareto law. ``alpha`` applies below ``x0``
    and ``alpha_high`` above it. Pass ``C=None`` together with ``x_min`` to have the
    constant computed numerically; the density is then zero below ``x_min``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    if C is None:
        if x_min is None:
            raise ValueError("x_min is required when C is not given")
        C = static_normalization(mu, alpha, x0, x_min, alpha_high)
    out = C * np.exp(log_bent_power_law(x, mu, alpha, x0, alpha_high))
    if x_min is not None:
        out = np.where(x >= x_min, out, 0.0)
    return out


def pdf_quasistatic_1(x, params: TheoryParams, normalize: bool = True):
    """Initial-period density: power ``mu1``, Gaussian coefficient ``theta*alpha``, support ``[x_min, inf)``."""
    p = params
    x = np.asarray(x, dtype=float)
    logp = log_bent_power_law(x, p.mu1, p.theta * p.alpha, p.x0, p.theta * p.alpha_high)
    if normalize:
        logp = logp - _log_norm_const(p.mu1, p.theta * p.alpha, p.x0, p.x_min, p.theta * p.alpha_high)
        return np.where(x >= p.x_min, np.exp(logp), 0.0)
    return np.exp(logp)


def _log_p2_unnormalized(x, p: TheoryParams):
    y = (x / p.a) ** (1.0 / p.theta)
    u = np.log(y / p.x0)
    b = np.where(u < 0.0, p.theta * p.alpha, p.theta * p.alpha_high)
    return -(p.mu2 + 1.0) * np.log(x) - b * u * u


def pdf_quasistatic_2(x, params: TheoryParams, normalize: bool = True):
    """Second-period density as written for the quasistatic system.

    ``C2 x^-(mu2+1) exp(-theta*alpha ln^2((x/a)^(1/theta)/x0))`` with
    ``(mu1+1)/(mu2+1) = theta``, normalised over the mapped support
    ``(a x_min^theta, inf)``.
    """
    p = params
    x = np.asarray(x, dtype=float)
    logp = _log_p2_unnormalized(x, p)
    if not normalize:
        return np.exp(logp)
    # in y = (x/a)^(1/theta) the density is the same family with power mu1 + 1 - theta:
    # dx = theta a y^(theta-1) dy and x^-(mu2+1) = a^-(mu2+1) y^-(mu1+1)
    mu_y = p.mu1 + 1.0 - p.theta
    log_c = _log_norm_const(mu_y, p.theta * p.alpha, p.x0, p.x_min, p.theta * p.alpha_high)
    log_z = math.log(p.theta) - p.mu2 * math.log(p.a) + log_c
    x_lo = p.a * p.x_min ** p.theta
    return np.where(x >= x_lo, np.exp(logp - log_z), 0.0)


def tent_normalization(t_plus, t_minus):
    """Kernel constant ``d = t+ t- / (t+ + t-)`` making ``Q(R|x)`` integrate to one."""
    t_plus = np.asarray(t_plus, dtype=float)
    t_minus = np.asarray(t_minus, dtype=float)
    if np.any(t_plus <= 0) or np.any(t_minus <= 0):
        raise NotNormalizable("tent kernel needs t_plus > 0 and t_minus > 0")
    d = t_plus * t_minus / (t_plus + t_minus)
    return d if d.ndim else float(d)


def tent_kernel_pdf(R, t_plus: float, t_minus: float):
    """``Q(R) = d R^(-t+ - 1)`` for ``R > 1`` and ``d R^(t- - 1)`` for ``R < 1``."""
    d = tent_normalization(t_plus, t_minus)
    R = np.asarray(R, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.where(R >= 1.0, d * R ** (-t_plus - 1.0), d * R ** (t_minus - 1.0))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# parameter maps
# --------------------------------------------------------------------------

def param_map_static(sigma: float, xbar: float, x0: float) -> tuple[float, float]:
    """Log-normal ``(sigma, xbar)`` to static ``(alpha, mu)`` given threshold ``x0``."""
    if sigma <= 0 or xbar <= 0 or x0 <= 0:
        raise ValueError("sigma, xbar and x0 must be positive")
    return 1.0 / (2.0 * sigma ** 2), math.log(x0 / xbar) / sigma ** 2


def param_map_static_inverse(alpha: float, mu: float, x0: float) -> tuple[float, float]:
    """Inverse of :func:`param_map_static`: returns ``(sigma, xbar)``."""
    if alpha <= 0 or x0 <= 0:
        raise ValueError("alpha and x0 must be positive")
    sigma2 = 1.0 / (2.0 * alpha)
    return math.sqrt(sigma2), x0 * math.exp(-mu * sigma2)


def param_map_quasistatic(theta: float, alpha: float, x0: float | None = None,
                          xbar1: float | None = None, log10_a: float = 0.0,
                          xbar2: float | None = None, mu2_reading: str = "ratio"):
    """Quasistatic identifications.

    Returns ``(sigma1, sigma2, mu1, mu2)``; the last two are ``None`` unless
    ``x0`` and ``xbar1`` are given.

    ``mu2_reading`` selects how ``mu2`` is obtained:

    ``"ratio"``
        from ``(mu1+1)/(mu2+1) = theta``.
    ``"as_written"``
        ``ln(a x0^theta / xbar1) / sigma2^2``, i.e. with the first-period median.
    ``"xbar2"``
        ``ln(a x0^theta / xbar2) / sigma2^2``; requires ``xbar2``.
    """
    if theta <= 0 or alpha <= 0:
        raise ValueError("theta*alpha must be positive")
    sigma1 = 1.0 / math.sqrt(2.0 * theta * alpha)
    sigma2 = 1.0 / math.sqrt(2.0 * alpha / theta)
    if x0 is None or xbar1 is None:
        return sigma1, sigma2, None, None
    mu1 = math.log(x0 / xbar1) / sigma1 ** 2
    log_center2 = log10_a * LN10 + theta * math.log(x0)
    if mu2_reading == "ratio":
        mu2 = (mu1 + 1.0) / theta - 1.0
    elif mu2_reading == "as_written":
        mu2 = (log_center2 - math.log(xbar1)) / sigma2 ** 2
    elif mu2_reading == "xbar2":
        if xbar2 is None:
            raise ValueError("xbar2 reading needs xbar2")
        mu2 = (log_center2 - math.log(xbar2)) / sigma2 ** 2
    else:
        raise ValueError(f"unknown mu2_reading {mu2_reading!r}")
    return sigma1, sigma2, mu1, mu2


def mu2_from_ratio(mu1: float, theta: float) -> float:
    return (mu1 + 1.0) / theta - 1.0


# --------------------------------------------------------------------------
# differential-equation check
# --------------------------------------------------------------------------

@dataclass
class DeResidual:
    max_relative: float
    argmax_x: float
    max_relative_half_step: float
    step_ratio: float
    slope_sum_derivative: float
    slope_second_order: float
    step: float
    n_points: int

    def to_dict(self):
        return dict(self.__dict__)


class StepTooCoarse(ValueError):
    pass


def default_de_grid(params: TheoryParams, n: int = 1000, decades_above: float = 3.0, step: float = 1e-4):
    lo = math.log(params.x_min)
    hi = math.log(params.x0) + decades_above * LN10
    u = np.linspace(lo, hi, n + 1)[1:]
    x = np.exp(u)
    # keep central differences off the kink in the Gaussian coefficient
    keep = np.abs(np.log(x / params.x0)) > 4 * step
    return x[keep]


def _de_relative(params: TheoryParams, x, h: float, exponent_scale: float):
    p = params
    mu1 = (p.mu1 + 1.0) * exponent_scale - 1.0

    def P(z):
        return np.exp(log_bent_power_law(z, mu1, p.theta * p.alpha, p.x0, p.theta * p.alpha_high))

    # only t+ - t- enters; the conserved sum is irrelevant
    log_ratio = np.log(x / p.x0)
    slope_diff = p.mu2 + 2.0 * np.where(log_ratio < 0, p.alpha, p.alpha_high) * log_ratio
    coeff = p.theta * (slope_diff + 1.0)
    xdp = (P(x * math.exp(h)) - P(x * math.exp(-h))) / (2.0 * h)
    px = P(x)
    return np.abs(coeff * px + xdp) / np.abs(coeff * px)


def de_residual(params: TheoryParams, x_grid=None, step: float = 1e-4, tol: float = 1e-5,
                exponent_scale: float = 1.0) -> DeResidual:
    """Residual of ``theta[t+(x) - t-(x) + 1] P(x) + x P'(x) = 0``.

    ``P`` is the initial-period density (its normalisation cancels), ``t+-``
    the drifting kernel slopes. ``x P'`` is a central difference in ``ln x``
    with step ``step``; the residual is divided by ``|theta (t+ - t- + 1) P|``.
    The step is halved once: when the residual exceeds ``tol`` *and* shrinks
    like ``h^2`` the grid is too coarse and :class:`StepTooCoarse` is raised.
    ``exponent_scale`` multiplies the power exponent ``mu1 + 1`` (tamper hook).
    """
    x = default_de_grid(params, step=step) if x_grid is None else np.asarray(x_grid, dtype=float)
    r1 = _de_relative(params, x, step, exponent_scale)
    r2 = _de_relative(params, x, step / 2.0, exponent_scale)
    m1, m2 = float(r1.max()), float(r2.max())
    ratio = m1 / m2 if m2 > 0 else float("inf")
    if m1 > tol and 3.0 < ratio < 5.0:
        raise StepTooCoarse(f"residual {m1:.3g} is discretisation error (halving ratio {ratio:.2f})")

    # analytic derivatives of the slope solution: t+' = a/x, t+'' = -a/x^2
    alpha_x = np.where(x < params.x0, params.alpha, params.alpha_high)
    d_plus, d_minus = alpha_x / x, -alpha_x / x
    dd_plus = -alpha_x / x ** 2
    return DeResidual(
        max_relative=m1,
        argmax_x=float(x[int(np.argmax(r1))]),
        max_relative_half_step=m2,
        step_ratio=ratio,
        slope_sum_derivative=float(np.max(np.abs(d_plus + d_minus))),
        slope_second_order=float(np.max(np.abs(d_plus + x * dd_plus))),
        step=step,
        n_points=int(x.size),
    )


# --------------------------------------------------------------------------
# relation checks
# --------------------------------------------------------------------------

@dataclass
class RelationReport:
    mu_ratio: float
    sigma_ratio: float
    theta_h: float
    theta_m: float
    dev_mu: float
    dev_sigma: float
    tol_mu: float
    tol_sigma: float
    pass_mu: bool = field(init=False)
    pass_sigma: bool = field(init=False)

    def __post_init__(self):
        self.pass_mu = bool(abs(self.dev_mu) <= self.tol_mu)
        self.pass_sigma = bool(abs(self.dev_sigma) <= self.tol_sigma)

    @property
    def passed(self) -> bool:
        return self.pass_mu and self.pass_sigma

    def to_dict(self):
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def relation_checks(mu1: float, mu2: float, sigma1: float, sigma2: float,
                    theta_h: float, theta_m: float,
                    tol_mu: float = 0.05, tol_sigma: float = 0.05) -> RelationReport:
    """Compare ``(mu1+1)/(mu2+1)`` with ``theta_h`` and ``sigma2/sigma1`` with ``theta_m``."""
    vals = [mu1, mu2, sigma1, sigma2, theta_h, theta_m]
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("relation inputs must be finite")
    if mu2 == -1.0 or sigma1 <= 0:
        raise ValueError("degenerate ratio: mu2 = -1 or sigma1 <= 0")
    mu_ratio = (mu1 + 1.0) / (mu2 + 1.0)
    sigma_ratio = sigma2 / sigma1
    return RelationReport(mu_ratio, sigma_ratio, theta_h, theta_m,
                          mu_ratio - theta_h, sigma_ratio - theta_m, tol_mu, tol_sigma)


# --------------------------------------------------------------------------
# numeric CDFs for goodness-of-fit overlays
# --------------------------------------------------------------------------

def numeric_cdf(log_pdf_u, u_lo: float, u_hi: float, n: int = 200001):
    """Tabulate the CDF of a density given as ``ln`` density in ``u`` on ``[u_lo, u_hi]``.

    Returns a callable of ``u``; cumulative Simpson on a uniform grid.
    """
    u = np.linspace(u_lo, u_hi, n)
    lp = log_pdf_u(u)
    f = np.exp(lp - lp.max())
    cum = integrate.cumulative_simpson(f, x=u, initial=0.0)
    cum /= cum[-1]
    return lambda q: np.interp(q, u, cum, left=0.0, right=1.0)


def _family_cdf(mu, beta, beta_high, x0, x_min):
    """CDF in ``u = ln(x/x0)`` of the bent power law restricted to ``[x_min, inf)``."""
    u_lo = math.log(x_min / x0)
    if beta_high > 0:
        u_hi = max(u_lo, 0.0) + math.sqrt(2 * _TAIL_EFOLDS / beta_high)
    else:
        u_hi = max(u_lo, 0.0) + 40.0 / mu

    def log_pdf_u(u):
        b = np.where(u < 0.0, beta, beta_high)
        return -mu * u - b * u * u

    return numeric_cdf(log_pdf_u, u_lo, u_hi)


def cdf_static(x, mu: float, alpha: float, x0: float, x_min: float, alpha_high: float = 0.0):
    cdf_u = _family_cdf(mu, alpha, alpha_high, x0, x_min)
    return cdf_u(np.log(np.asarray(x, dtype=float) / x0))


def cdf_quasistatic_1(x, params: TheoryParams):
    p = params
    return cdf_static(x, p.mu1, p.theta * p.alpha, p.x0, p.x_min, p.theta * p.alpha_high)


def cdf_quasistatic_2(x, params: TheoryParams):
    p = params
    y = (np.asarray(x, dtype=float) / p.a) ** (1.0 / p.theta)
    return cdf_static(y, p.mu1 + 1.0 - p.theta, p.theta * p.alpha, p.x0, p.x_min, p.theta * p.alpha_high)


def cdf_quasistatic_2_pushforward(x, params: TheoryParams):
    """CDF of ``a x1^theta`` for ``x1`` drawn from the initial-period density.

    Differs from :func:`cdf_quasistatic_2` by the Jacobian ``y^(1-theta)``;
    it is the marginal a narrow-kernel forward panel actually produces.
    """
    p = params
    y = (np.asarray(x, dtype=float) / p.a) ** (1.0 / p.theta)
    return cdf_quasistatic_1(y, p)


def theory_curve(x, params: TheoryParams, which: int = 1):
    """Normalised density on ``x`` for TSV overlays (``which`` = 1 or 2)."""
    if which == 1:
        return pdf_quasistatic_1(x, params)
    if which == 2:
        return pdf_quasistatic_2(x, params)
    raise ValueError("which must be 1 or 2")
