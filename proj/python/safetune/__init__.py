"""Python access to the safetune core."""

import json

from ._core import (
    Calibration,
    ConfigError,
    ContractViolation,
    EpisodeMetrics,
    ExperimentConfig,
    GaussianProcess,
    KernelConfig,
    KernelMode,
    RunLog,
    apply_calibration,
    calibrate,
    load_config,
    run,
    simulate,
    zoh_step,
)


def summary(log):
    """Run summary as a dict."""
    return json.loads(log.summary_json())


__all__ = [
    "Calibration",
    "ConfigError",
    "ContractViolation",
    "EpisodeMetrics",
    "ExperimentConfig",
    "GaussianProcess",
    "KernelConfig",
    "KernelMode",
    "RunLog",
    "apply_calibration",
    "calibrate",
    "load_config",
    "run",
    "simulate",
    "summary",
    "zoh_step",
]
