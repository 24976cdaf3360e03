"""Variational attitude and gyro-bias estimation on SO(3)."""

from ._kernels import BACKEND
from .estimator import (
    EstimatorGains,
    EstimatorState,
    PhiFunction,
    continuous_rhs,
    discrete_step,
    initial_state,
    lyapunov_V,
    lyapunov_V_error,
    newton_solve_omega,
    potential_U0,
    run_discrete,
)
from .harness import ScenarioConfig, emit_csv, emit_plots, run_scenario
from .measurement import MeasurementFrame, NoiseModel, choose_weights, compute_L, compute_SL
from .so3 import exp_so3, hat, log_so3, principal_angle, project_to_so3, vex

__version__ = "0.1.0"
