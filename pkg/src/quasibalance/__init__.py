"""Pareto tails, tent-shaped growth kernels and detailed quasi-balance in paired panels."""
from .panel import Observation, PairedPanel, PanelError, load_panel, pair_periods
from .histogram import LogBinGrid, empirical_ccdf, empirical_density, conditional_growth_density
from .fit import fit_alpha, fit_lognormal_mid, fit_pareto, fit_tent, ols_line
from .balance import estimate_theta_a, gamma_relation, modified_growth_rate, symmetry_statistic, theta_from_gamma
from .synth import GeneratorSpec, gen_panel, sim_multiplicative
from .theory import TentKernelParams, TheoryParams

__version__ = "0.1.0"
__all__ = [
    "Observation", "PairedPanel", "PanelError", "load_panel", "pair_periods",
    "LogBinGrid", "empirical_ccdf", "empirical_density", "conditional_growth_density",
    "fit_alpha", "fit_lognormal_mid", "fit_pareto", "fit_tent", "ols_line",
    "estimate_theta_a", "gamma_relation", "modified_growth_rate", "symmetry_statistic", "theta_from_gamma",
    "GeneratorSpec", "gen_panel", "sim_multiplicative", "TentKernelParams", "TheoryParams",
]
