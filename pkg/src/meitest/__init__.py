"""Pleiotropy testing for two-sample Mendelian randomization.

Rerandomized instrument selection with Rao-Blackwellized effects, the RIVW
causal estimator, modified Egger-intercept (MEI) tests under two allele
codings and their combination, the conventional Egger-intercept test, and a
simulation harness.
"""
__version__ = "0.1.0"

from .egger import EggerResult, conventional_select, egger_fit
from .errors import (ConfigError, DegenerateDenominator, DegenerateVariance, InputError,
                     InsufficientInstruments, MeiError, StatisticalError)
from .gwas_io import CodingScheme, HarmonizedPair, PairTable, harmonize, orient, parse_summary_table
from .mei import CombinedResult, MeiResult, analyze, combined_test, h1_expected_numerator, mei_statistic
from .rivw import SelectionConfig, fit_rivw, rao_blackwell, rerandomized_select, rivw_estimate
from .simulate import ScenarioConfig, run_experiment, run_replicate
from .stats_dist import RngStream, bvn_max_abs_sf, bvn_rect_prob, lambda_from_pvalue

__all__ = [
    "__version__", "EggerResult", "conventional_select", "egger_fit", "ConfigError", "DegenerateDenominator",
    "DegenerateVariance", "InputError", "InsufficientInstruments", "MeiError", "StatisticalError",
    "CodingScheme", "HarmonizedPair", "PairTable", "harmonize", "orient", "parse_summary_table",
    "CombinedResult", "MeiResult", "analyze", "combined_test", "h1_expected_numerator", "mei_statistic",
    "SelectionConfig", "fit_rivw", "rao_blackwell", "rerandomized_select", "rivw_estimate",
    "ScenarioConfig", "run_experiment", "run_replicate", "RngStream", "bvn_max_abs_sf", "bvn_rect_prob",
    "lambda_from_pvalue",
]
