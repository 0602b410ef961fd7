"""Penalty-weight calibration for constrained binary optimization on Gibbs-like samplers."""

from .calibrator import (
    CalibrationBounds,
    CalibrationConfig,
    CalibrationResult,
    NoFeasibleTarget,
    calibrate_beta,
    calibrate_m,
    eta_exist,
    g_linear,
    log_g,
    lower_bound_provider,
)
from .degeneracy import DegeneracyTable, degeneracy_table, npen_bruteforce
from .estimators import InverseTemperatureCalibrator, PenaltyCalibrator, StretchedExponentialFit
from .generators import MnppSpec, PoSpec, TspSpec, gen_mnpp, gen_po, gen_tsp, gen_tsp_circle, gen_tsp_random
from .problem import ProblemInstance, big_m_l1, build_qubo, load_instance, save_instance
from .solvers import GibbsExact, SaSchedule, SolveReport, binary_search_m, gibbs_sample, simulated_annealing, speedup_metric
from .spectral import SpectralWeights, estimate_spectral_weights, exact_spectral_weights

__version__ = "0.1.0"

__all__ = [
    "CalibrationBounds",
    "CalibrationConfig",
    "CalibrationResult",
    "DegeneracyTable",
    "GibbsExact",
    "InverseTemperatureCalibrator",
    "MnppSpec",
    "NoFeasibleTarget",
    "PenaltyCalibrator",
    "PoSpec",
    "ProblemInstance",
    "SaSchedule",
    "SolveReport",
    "SpectralWeights",
    "StretchedExponentialFit",
    "TspSpec",
    "big_m_l1",
    "binary_search_m",
    "build_qubo",
    "calibrate_beta",
    "calibrate_m",
    "degeneracy_table",
    "estimate_spectral_weights",
    "eta_exist",
    "exact_spectral_weights",
    "g_linear",
    "gen_mnpp",
    "gen_po",
    "gen_tsp",
    "gen_tsp_circle",
    "gen_tsp_random",
    "gibbs_sample",
    "load_instance",
    "log_g",
    "lower_bound_provider",
    "npen_bruteforce",
    "save_instance",
    "simulated_annealing",
    "speedup_metric",
]
