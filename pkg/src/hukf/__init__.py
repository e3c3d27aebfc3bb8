"""Unscented and higher-order-correlation unscented Kalman filters for
continuous-discrete state-space models, with an Euler-Maruyama simulator and a
Monte Carlo harness for sequential parameter estimation."""

from .errors import InvalidInput, NumericalFailure
from .filters import (
    HUKF,
    UKF,
    FilterConfig,
    FilterResult,
    FilterStep,
    MeasurementPrediction,
    filter_sequence,
    iter_filter,
    measurement_update_higher,
    measurement_update_linear,
    time_update,
)
from .experiment import ExperimentConfig, run_experiment
from .sde import SeededRng, Trajectory, simulate
from .sigma import GaussianBelief, Generator, SigmaKind, SigmaSet, degree3_sigma, degree5_sigma
from .ssm import EulerGrid, StateSpaceModel, augment_with_parameters, euler_transition, ou_model

__version__ = "0.1.0"

__all__ = [
    "HUKF", "UKF", "EulerGrid", "ExperimentConfig", "FilterConfig", "FilterResult", "FilterStep",
    "GaussianBelief", "Generator", "InvalidInput", "MeasurementPrediction",
    "NumericalFailure", "SeededRng", "SigmaKind", "SigmaSet", "StateSpaceModel", "Trajectory",
    "augment_with_parameters", "degree3_sigma", "degree5_sigma", "euler_transition",
    "filter_sequence", "iter_filter", "measurement_update_higher",
    "measurement_update_linear", "ou_model", "run_experiment", "simulate",
    "time_update",
]
