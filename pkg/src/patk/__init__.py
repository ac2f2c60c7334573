"""Photoacoustic tomography reconstruction toolkit.

Spectral wave forward/adjoint operators on circular detector arrays, a
TV-regularized primal-dual solver, an untrained convolutional network
reconstruction engine with hand-written backpropagation, masked image
quality metrics, and an experiment harness with a CLI.
"""

from .dipnet import DipConfig, UNetConfig, dip_reconstruct, dip_reconstruct_all
from .errors import ConfigError, DataFormatError, NumericalError, PatkError
from .geometry import DetectorRing, Grid, TimeAxis, detector_positions, make_ring, subsample_arc
from .harness import ExperimentConfig, grid_search, run_experiment, sweep
from .iqa import MetricsReport, compute_report, haarpsi, pearson_cc, psnr, roi_from_gt, ssim
from .pdhg import PdhgConfig, solve
from .records import RunRecord
from .waveop import (
    ForwardOperator,
    adjoint,
    approximate_inverse,
    block_average,
    default_time_axis,
    forward,
    operator_norm,
    propagate,
    simulate_data,
)

__all__ = [
    "ConfigError",
    "DataFormatError",
    "NumericalError",
    "PatkError",
    "Grid",
    "DetectorRing",
    "TimeAxis",
    "make_ring",
    "subsample_arc",
    "detector_positions",
    "RunRecord",
    "ForwardOperator",
    "forward",
    "adjoint",
    "propagate",
    "approximate_inverse",
    "simulate_data",
    "operator_norm",
    "default_time_axis",
    "block_average",
    "PdhgConfig",
    "solve",
    "DipConfig",
    "UNetConfig",
    "dip_reconstruct",
    "dip_reconstruct_all",
    "MetricsReport",
    "compute_report",
    "psnr",
    "ssim",
    "pearson_cc",
    "haarpsi",
    "roi_from_gt",
    "ExperimentConfig",
    "run_experiment",
    "grid_search",
    "sweep",
]

__version__ = "0.1.0"
