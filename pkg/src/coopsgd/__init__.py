"""Simulator and bound calculator for cooperative local SGD with column-stochastic mixing."""
from .bounds import BoundInputs, BoundReport, epsilon_iid, epsilon_niid, eta_eff, p_value, report, s_series
from .errors import (ConfigError, DimensionError, DivergenceError, DomainError, InfeasibleError,
                     NumericalError)
from .mixing import MixingMatrix, MixingSchedule, consensus_deviation_sq, delta_of, validate
from .objectives import GradientOracle, LogisticSuite, QuadraticSuite, make_logistic, make_quadratic
from .selection import SelectionPolicy, SelectionSet, select
from .trainer import RunConfig, RunTrace, StateMatrix, run, step
from .config import ExperimentConfig
from .harness import bounds_only, compare_selection_modes, run_experiment

__version__ = "0.1.0"
