"""scikit-learn style wrappers over the functional calibration API.

``fit`` takes a :class:`ProblemInstance` in place of a data matrix.
Hyperparameters live in ``__init__`` so ``get_params``/``set_params`` and
``sklearn.base.clone`` work as usual.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .calibrator import CalibrationConfig, calibrate_beta, calibrate_m
from .degeneracy import fit_stretched_exponential, stretched_exponential
from .problem import ProblemInstance, build_qubo


def _check_instance(inst):
    if not isinstance(inst, ProblemInstance):
        raise TypeError(f"expected a ProblemInstance, got {type(inst).__name__}")
    return inst


class PenaltyCalibrator(TransformerMixin, BaseEstimator):
    """Learn ``M*`` for an instance; ``transform`` returns the QUBO at that weight."""

    def __init__(
        self,
        beta=1.0,
        eta=0.5,
        E_f=math.inf,
        v_cut=None,
        n_samples=20_000,
        delta=None,
        mode="guaranteed",
        exact_spectral=False,
        auto_reduce=False,
        lower_bound="trivial",
        seed=None,
    ):
        self.beta = beta
        self.eta = eta
        self.E_f = E_f
        self.v_cut = v_cut
        self.n_samples = n_samples
        self.delta = delta
        self.mode = mode
        self.exact_spectral = exact_spectral
        self.auto_reduce = auto_reduce
        self.lower_bound = lower_bound
        self.seed = seed

    def _config(self):
        return CalibrationConfig(**self.get_params())

    def fit(self, inst, y=None):
        inst = _check_instance(inst)
        self.result_ = calibrate_m(inst, self._config())
        self.M_star_ = self.result_.M_star
        self.status_ = self.result_.status
        self.eta_exist_ = self.result_.eta_exist
        self.n_features_in_ = inst.n
        return self

    def transform(self, inst):
        check_is_fitted(self, "result_")
        inst = _check_instance(inst)
        if inst.n != self.n_features_in_:
            raise ValueError(f"instance has {inst.n} variables, calibrator was fitted on {self.n_features_in_}")
        if self.M_star_ is None:
            raise ValueError(f"no penalty weight available (status {self.status_!r}, eta_exist={self.eta_exist_:.4g})")
        return build_qubo(inst, self.M_star_)


class InverseTemperatureCalibrator(BaseEstimator):
    """Learn the inverse temperature ``beta*`` at which a fixed ``M`` meets ``eta``."""

    def __init__(self, M=1.0, eta=0.5, E_f=math.inf, v_cut=None, n_samples=20_000, delta=None, exact_spectral=False, seed=None):
        self.M = M
        self.eta = eta
        self.E_f = E_f
        self.v_cut = v_cut
        self.n_samples = n_samples
        self.delta = delta
        self.exact_spectral = exact_spectral
        self.seed = seed

    def fit(self, inst, y=None):
        inst = _check_instance(inst)
        params = self.get_params()
        M = params.pop("M")
        cfg = CalibrationConfig(beta=1.0, mode="practical", **params)
        self.result_ = calibrate_beta(inst, cfg, M)
        self.beta_star_ = self.result_.beta_star
        return self


class StretchedExponentialFit(RegressorMixin, BaseEstimator):
    """Fit ``ln n(v) = a + b v^k``; ``predict`` returns log-counts."""

    def __init__(self, k_min=1e-3, k_max=1.5):
        self.k_min = k_min
        self.k_max = k_max

    def fit(self, v, log_counts):
        v = np.asarray(v, dtype=float).ravel()
        y = np.asarray(log_counts, dtype=float).ravel()
        if v.shape != y.shape:
            raise ValueError("v and log_counts must have the same length")
        self.a_, self.b_, self.k_ = fit_stretched_exponential(v, y, (self.k_min, self.k_max))
        return self

    def predict(self, v):
        check_is_fitted(self, "k_")
        return stretched_exponential(np.asarray(v, dtype=float).ravel(), self.a_, self.b_, self.k_)
