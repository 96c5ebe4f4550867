"""scikit-learn style front ends.

Parameter grids are the samples: ``X`` is a column of parameter values and
each transformer maps it to a row of diagnostics per value. Hyperparameters
live in ``__init__`` so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimation import ESTIMATORS, audit_scan
from .models import resolve_model
from .qfi import DEFAULT_FD_EPS, qfi_report

QFI_FEATURES = (
    "rank",
    "f1_q",
    "f2",
    "f3",
    "delta",
    "sld_sup",
    "sld_bounded",
    "f3_divergent",
)

BOUND_FEATURES = (
    "mean",
    "bias",
    "mse",
    "variance",
    "dmean",
    "unbiased_bound",
    "biased_bound",
    "violated_unbiased",
    "holds_biased",
)


def check_thetas(X, model):
    """Validate a parameter grid: 1-D or single-column, finite, inside the domain."""
    X = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_2d=True)
    thetas = X[:, 0]
    for t in thetas:
        model.check_theta(t)
    return thetas


def _row(report):
    return [
        report.rank,
        report.f1_q,
        report.f2,
        report.f3,
        report.delta,
        report.sld_sup_element,
        float(report.sld_bounded_verdict),
        float(report.f3_divergent),
    ]


class QFIProfiler(TransformerMixin, BaseEstimator):
    """Map parameter values to QFI diagnostics of a one-parameter model.

    Parameters
    ----------
    model : str, dict, ModelSpec or ParametricModel
        ``"flip"``, ``"trig"``, a path to a model-spec JSON file, or a model.
    rank_tol : float or None
        Eigenvalues at or below this count as zero (default scales with the
        largest eigenvalue).
    fd_eps : float
        Initial step of the fidelity finite difference.
    """

    def __init__(self, model="trig", rank_tol=None, fd_eps=DEFAULT_FD_EPS):
        self.model = model
        self.rank_tol = rank_tol
        self.fd_eps = fd_eps

    def fit(self, X=None, y=None):
        self.model_ = resolve_model(self.model)
        self.domain_ = tuple(self.model_.domain)
        if X is not None:
            check_thetas(X, self.model_)
        return self

    def reports(self, X):
        check_is_fitted(self, "model_")
        return [qfi_report(self.model_, t, self.rank_tol, self.fd_eps) for t in check_thetas(X, self.model_)]

    def transform(self, X):
        return np.array([_row(r) for r in self.reports(X)], dtype=float).reshape(-1, len(QFI_FEATURES))

    def get_feature_names_out(self, input_features=None):
        return np.array(QFI_FEATURES, dtype=object)


class BoundAuditor(BaseEstimator):
    """Audit an estimator's error against the QCRB family over a parameter grid.

    ``fit(X)`` runs the audit for every sample count in ``n_samples`` and
    stores the records; ``score`` is the fraction of points where the biased
    bound holds.
    """

    def __init__(
        self,
        model="trig",
        estimator=None,
        n_samples=(10, 100, 1000),
        rank_tol=None,
        fd_eps=DEFAULT_FD_EPS,
        ych_eps=None,
        purification_thetap=None,
    ):
        self.model = model
        self.estimator = estimator
        self.n_samples = n_samples
        self.rank_tol = rank_tol
        self.fd_eps = fd_eps
        self.ych_eps = ych_eps
        self.purification_thetap = purification_thetap

    def _resolve_estimator(self, model):
        est = self.estimator
        if est is None:
            est = "mle_theta" if model.name == "trig" else "mle_q"
        if isinstance(est, str):
            if est not in ESTIMATORS:
                raise ValueError(f"unknown estimator {est!r}; choose from {sorted(ESTIMATORS)}")
            est = ESTIMATORS[est]
        return est

    def fit(self, X, y=None):
        self.model_ = resolve_model(self.model)
        self.estimator_ = self._resolve_estimator(self.model_)
        thetas = check_thetas(X, self.model_)
        ns = [int(n) for n in self.n_samples]
        if not ns or min(ns) < 1:
            raise ValueError(f"n_samples must be positive integers, got {self.n_samples!r}")
        self.records_ = audit_scan(
            self.model_,
            self.estimator_,
            ns,
            thetas,
            rank_tol=self.rank_tol,
            fd_eps=self.fd_eps,
            ych_eps=self.ych_eps,
            purification_thetap=self.purification_thetap,
        )
        self.n_unbiased_violations_ = sum(r.violated_unbiased for r in self.records_)
        self.n_biased_violations_ = sum(not r.holds_biased for r in self.records_)
        return self

    def transform(self, X=None):
        """Audit table (rows ordered by n, then theta); ``X`` is ignored."""
        check_is_fitted(self, "records_")
        return np.array(
            [[float(getattr(r, f)) for f in BOUND_FEATURES] for r in self.records_], dtype=float
        ).reshape(-1, len(BOUND_FEATURES))

    def score(self, X=None, y=None):
        check_is_fitted(self, "records_")
        if not self.records_:
            return math.nan
        return 1.0 - self.n_biased_violations_ / len(self.records_)

    def get_feature_names_out(self, input_features=None):
        return np.array(BOUND_FEATURES, dtype=object)
