"""Estimation and testing of a time-varying Hurst exponent from high-frequency data."""

from .core import (DomainError, ObservationGrid, SamplePath, ThetaFunction, constant_theta, derive_seed,
                   read_path_csv, theta_from_samples, validate_path, write_path_csv)
from .estimators import (EstimatorParams, increments, integrated_hurst, hurst_log_ratio, hurst_smoothed_log,
                         variance_curve)
from .fracmath import AsymVarConfig, gamma_big, gamma_small, tau_squared, tau_squared_lrv
from .localpoly import Kernel, weights
from .simulate import FbmConfig, MbmConfig, simulate_fbm, simulate_mbm

__version__ = "0.1.0"
