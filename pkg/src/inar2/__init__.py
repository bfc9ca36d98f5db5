"""Simulation, CLS estimation and limit-law verification for unstable INAR(2) models."""

import warnings

warnings.filterwarnings("ignore", message="The TBB threading layer", module="numba")

from .inar_core import (  # noqa: E402
    AutoregressiveParams,
    InnovationModel,
    ModelClass,
    Regularity,
    Stability,
    Trajectory,
    classify,
    parse_innovation,
    simulate,
    simulate_batch,
)

__all__ = [
    "AutoregressiveParams",
    "InnovationModel",
    "ModelClass",
    "Regularity",
    "Stability",
    "Trajectory",
    "classify",
    "parse_innovation",
    "simulate",
    "simulate_batch",
]
