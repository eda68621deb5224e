"""Simulation and moment-scaling analysis of integrated supOU processes."""

__version__ = "0.1.0"

from .model import (BigJumps, CharacteristicQuadruple, ModelError, RegimeLabel, SmallJumps,
                    centering_drift, classify, validate)
from .stable_dist import PiGamma, StableParams, TailWeights
from .theory import ScalingFunction, limit_params, tau_component, tau_max, tau_total

__all__ = [
    "__version__",
    "BigJumps",
    "CharacteristicQuadruple",
    "ModelError",
    "PiGamma",
    "RegimeLabel",
    "ScalingFunction",
    "SmallJumps",
    "StableParams",
    "TailWeights",
    "centering_drift",
    "classify",
    "limit_params",
    "tau_component",
    "tau_max",
    "tau_total",
    "validate",
]
