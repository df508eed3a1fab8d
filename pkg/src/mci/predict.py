"""Predictor construction and Monte Carlo evaluation.

A finite-width predictor averages mean features against the recovered
coefficients, f(x) = (1/N) sum_j a_j sigma(<x, w_j>).  The quadratic-penalty
reference at infinite width is the kernel interpolant k(x, .)^T K^{-1} y built
from a :class:`~mci.features.KernelOracle`.  Distances and test errors are
estimated by Monte Carlo over the covariate distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidM, NoTarget
from .features import (
    DataSpec,
    FeatureSpec,
    Instance,
    KernelOracle,
    mean_features,
    sample_covariates,
)

# Keep per-chunk mean-feature blocks near this many entries when predicting on
# large test batches against wide models.
_CHUNK_ENTRIES = 2**24


@dataclass(frozen=True)
class Predictor:
    """Finite-width model f(x) = (1/N) sum_j a_j sigma(<x, w_j>)."""

    W: np.ndarray
    a: np.ndarray
    spec: FeatureSpec

    def __post_init__(self):
        if self.W.ndim != 2 or self.a.shape != (self.W.shape[0],):
            raise DimMismatch(f"W {self.W.shape} and a {self.a.shape} are inconsistent")

    def predict(self, X_test: np.ndarray) -> np.ndarray:
        X_test = np.asarray(X_test, dtype=np.float64)
        if X_test.ndim != 2 or X_test.shape[1] != self.W.shape[1]:
            raise DimMismatch(f"test rows {X_test.shape} incompatible with W {self.W.shape}")
        N = self.W.shape[0]
        rows = max(1, _CHUNK_ENTRIES // N)
        out = np.empty(X_test.shape[0])
        for lo in range(0, X_test.shape[0], rows):
            block = X_test[lo : lo + rows]
            out[lo : lo + rows] = mean_features(self.spec, block, self.W) @ self.a / N
        return out


@dataclass(frozen=True)
class KernelPredictor:
    """Kernel interpolant f(x) = k(x, .)^T K^{-1} y over the training rows."""

    X_train: np.ndarray
    coeffs: np.ndarray
    kernel: KernelOracle
    spec: FeatureSpec

    def predict(self, X_test: np.ndarray) -> np.ndarray:
        return self.kernel.cross(X_test) @ self.coeffs


def predict(pred, X_test: np.ndarray) -> np.ndarray:
    """Evaluate a predictor (or plain callable) on test rows."""
    if hasattr(pred, "predict"):
        return pred.predict(np.asarray(X_test, dtype=np.float64))
    return np.asarray(pred(np.asarray(X_test, dtype=np.float64)), dtype=np.float64)


def kernel_interpolant(oracle: KernelOracle, inst: Instance, spec: FeatureSpec) -> KernelPredictor:
    """Exact-fit kernel predictor with coefficients K^{-1} y."""
    if oracle.n != inst.n:
        raise DimMismatch("oracle and instance disagree on n")
    coeffs = oracle.inv_apply(inst.y)
    return KernelPredictor(X_train=inst.X, coeffs=coeffs, kernel=oracle, spec=spec)


def l2_distance(f, g, ds: DataSpec, M: int, seed: int) -> tuple[float, float]:
    """Monte Carlo L2(P) distance between two predictors, with standard error.

    Returns (sqrt(mean (f - g)^2), delta-method standard error of the root).
    """
    if M < 100:
        raise InvalidM("need at least 100 Monte Carlo points")
    X = sample_covariates(ds, M, seed)
    diff2 = (predict(f, X) - predict(g, X)) ** 2
    mean2 = float(np.mean(diff2))
    est = float(np.sqrt(mean2))
    se_mean2 = float(np.std(diff2, ddof=1) / np.sqrt(M))
    se = se_mean2 / (2.0 * est) if est > 0 else 0.0
    return est, se


def test_error(f, ds: DataSpec, M: int, seed: int) -> float:
    """Monte Carlo mean-squared error against the ridge target."""
    if ds.target is None:
        raise NoTarget("test_error requires a ridge target in the data spec")
    if M < 100:
        raise InvalidM("need at least 100 Monte Carlo points")
    X = sample_covariates(ds, M, seed)
    return float(np.mean((predict(f, X) - ds.target(X)) ** 2))
