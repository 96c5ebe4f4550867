"""Quantum Fisher information at rank-changing points and QCRB audits."""

from .api import BoundAuditor, QFIProfiler
from .estimation import (
    ESTIMATORS,
    MLE_Q,
    MLE_THETA,
    BoundRecord,
    audit_scan,
    exact_stats,
    purification_bound,
    ych_check,
)
from .expr import parse
from .models import ModelSpec, ModelSpecError, ParametricModel, builtin_flip, builtin_trig, load_spec, resolve_model
from .numlin import SpectralDecomposition, bures_distance_sq, eigh, fidelity, schatten_norm
from .qfi import QfiReport, build_q, qfi_f2, qfi_f3_fd, qfi_report, solve_sld

__version__ = "0.1.0"

__all__ = [
    "BoundAuditor",
    "BoundRecord",
    "ESTIMATORS",
    "MLE_Q",
    "MLE_THETA",
    "ModelSpec",
    "ModelSpecError",
    "ParametricModel",
    "QFIProfiler",
    "QfiReport",
    "SpectralDecomposition",
    "audit_scan",
    "build_q",
    "builtin_flip",
    "builtin_trig",
    "bures_distance_sq",
    "eigh",
    "exact_stats",
    "fidelity",
    "load_spec",
    "parse",
    "purification_bound",
    "qfi_f2",
    "qfi_f3_fd",
    "qfi_report",
    "resolve_model",
    "schatten_norm",
    "solve_sld",
    "ych_check",
]
