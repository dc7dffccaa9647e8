"""Constrained adaptive sensing with DFT measurements of Haar-sparse signals."""

__version__ = "0.1.0"

from .transforms import DftEnsemble, HaarBasis, fourier_haar_matrix  # noqa: E402
from .signals import NoiseModel, SparseSignal, make_signal  # noqa: E402
from .recovery import RecoveryProblem, UnidentifiableSupportError, bpdn, cosamp, ls_on_support  # noqa: E402
from .design import DesignWeights, MeasurementPlan, draw_plan, oracle_mse, sampling_pmf, solve_relaxation  # noqa: E402
from .sensing import SensingOutcome, StrategyConfig, run_strategy, vds_pmf  # noqa: E402
from .harness import ExperimentConfig, TrialRecord, emit_outputs, median_aggregate, run_experiment  # noqa: E402

__all__ = [
    "DftEnsemble", "HaarBasis", "fourier_haar_matrix", "NoiseModel", "SparseSignal", "make_signal",
    "RecoveryProblem", "UnidentifiableSupportError", "bpdn", "cosamp", "ls_on_support", "DesignWeights",
    "MeasurementPlan", "draw_plan", "oracle_mse", "sampling_pmf", "solve_relaxation", "SensingOutcome",
    "StrategyConfig", "run_strategy", "vds_pmf", "ExperimentConfig", "TrialRecord", "emit_outputs",
    "median_aggregate", "run_experiment",
]
