"""Robust target-network updates for actor-critic learning.

The core is :mod:`tsoft.target_update` (hard, soft and t-soft rules); the
rest is a small from-scratch RL stack and experiment harness to exercise it.
"""

from .errors import CongruenceError, ConvergenceError, DomainError, ParameterError
from .params import ParamSet, ParamSubset, lerp_subset, mean_abs_diff, mean_sq_diff
from .target_update import (
    INF, TSoftDiagnostics, TSoftState, TargetUpdater, UpdateRule, hard_update,
    make_tsoft_state, soft_update, student_t_location_mle, track, tsoft_gate, tsoft_update,
    tsoft_weight,
)

__all__ = [
    "CongruenceError", "ConvergenceError", "DomainError", "ParameterError",
    "ParamSet", "ParamSubset", "lerp_subset", "mean_abs_diff", "mean_sq_diff",
    "INF", "TSoftDiagnostics", "TSoftState", "TargetUpdater", "UpdateRule", "hard_update",
    "make_tsoft_state", "soft_update", "student_t_location_mle", "track", "tsoft_gate",
    "tsoft_update", "tsoft_weight",
]
__version__ = "0.1.0"
