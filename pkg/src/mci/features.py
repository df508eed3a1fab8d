"""Featurization maps, weight/data sampling, and empirical kernel machinery.

A feature map phi(x; w, z) = sigma(<x, w>) + z pairs an activation sigma with
a weight distribution for w and optional additive Gaussian noise z of standard
deviation gamma.  Prediction always uses the mean feature sigma(<x, w>) (noise
integrated out).  The empirical kernel matrix K = E_{w,z}[phi_n phi_n^T] over
the training rows supports whitening (K^{-1/2} phi) and the exact-fit kernel
predictor used as the width->infinity reference in the quadratic case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import (
    DimMismatch,
    IncompatibleMethod,
    InvalidDim,
    NotPSD,
    SingularKernel,
)
from .seeding import rng_from, row_rng

RELU = "relu"
TRUNCATED_RELU = "truncated_relu"
IDENTITY = "identity"

GAUSSIAN_ISOTROPIC = "gaussian_isotropic"  # w ~ N(0, I/d)
UNIFORM_SPHERE = "uniform_sphere"  # ||w|| = 1

MONTE_CARLO = "monte_carlo"
ARC_COSINE = "arc_cosine"
LATENT_LINEAR = "latent_linear"

UNIFORM_SPHERE_SQRT_D = "uniform_sphere_sqrt_d"  # ||x|| = sqrt(d)

# Relative eigenvalue floor applied inside K^{-1/2}: Monte Carlo kernel
# estimates can be numerically rank deficient even when the population kernel
# is strictly positive.
KERNEL_EIG_FLOOR = 1e-10
# MC eigenvalues below -NEG_EIG_TOL * lambda_max indicate a broken estimate.
NEG_EIG_TOL = 1e-8

DEFAULT_MC_SAMPLES = 100_000

Activation = Union[str, Callable[[np.ndarray], np.ndarray]]


def apply_activation(activation: Activation, u: np.ndarray) -> np.ndarray:
    if callable(activation):
        return np.asarray(activation(u), dtype=np.float64)
    if activation == RELU:
        return np.maximum(u, 0.0)
    if activation == TRUNCATED_RELU:
        return np.clip(u, 0.0, 1.0)
    if activation == IDENTITY:
        return np.asarray(u, dtype=np.float64)
    raise ValueError(f"unknown activation {activation!r}")


@dataclass(frozen=True)
class FeatureSpec:
    """Activation + weight distribution + feature-noise level gamma."""

    activation: Activation = RELU
    weight_dist: str = GAUSSIAN_ISOTROPIC
    noise_gamma: float = 0.0

    def __post_init__(self):
        if self.noise_gamma < 0:
            raise ValueError("noise_gamma must be >= 0")
        if self.weight_dist not in (GAUSSIAN_ISOTROPIC, UNIFORM_SPHERE):
            raise ValueError(f"unknown weight distribution {self.weight_dist!r}")
        if callable(self.activation):
            at_zero = float(np.asarray(self.activation(np.zeros(1)))[0])
            if abs(at_zero) > 1e-12:
                raise ValueError("custom activation must satisfy sigma(0) = 0")
        else:
            apply_activation(self.activation, np.zeros(1))


@dataclass(frozen=True)
class Instance:
    """Interpolation constraints: covariate rows X (n x d) and responses y (n)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1:
            raise InvalidDim("X must be 2-d and y 1-d")
        if X.shape[0] != y.shape[0]:
            raise DimMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidDim("need n >= 1 and d >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("instance contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class RidgeTarget:
    """Noiseless single-index target y = sigma_star(<w_star, x>), ||w_star|| = 1."""

    w_star: np.ndarray
    activation: Activation = RELU

    def __post_init__(self):
        w = np.asarray(self.w_star, dtype=np.float64)
        if abs(np.linalg.norm(w) - 1.0) > 1e-9:
            raise ValueError("w_star must be a unit vector")
        object.__setattr__(self, "w_star", w)

    @classmethod
    def random(cls, d: int, seed: int, activation: Activation = RELU) -> "RidgeTarget":
        w = rng_from(seed, "data", 99).standard_normal(d)
        return cls(w_star=w / np.linalg.norm(w), activation=activation)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return apply_activation(self.activation, X @ self.w_star)


@dataclass(frozen=True)
class DataSpec:
    """Covariate distribution and (optional) target for synthetic instances.

    `covariate_dist` is either the sqrt(d)-sphere tag or a callable
    (rng, n, d) -> ndarray for custom sub-Gaussian designs.  `target=None`
    marks externally supplied responses.
    """

    d: int
    covariate_dist: Union[str, Callable[[np.random.Generator, int, int], np.ndarray]] = (
        UNIFORM_SPHERE_SQRT_D
    )
    target: RidgeTarget | None = None

    def __post_init__(self):
        if self.d < 1:
            raise InvalidDim("d must be >= 1")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _draw_weights(spec: FeatureSpec, d: int, N: int, rng: np.random.Generator) -> np.ndarray:
    W = rng.standard_normal((N, d))
    if spec.weight_dist == GAUSSIAN_ISOTROPIC:
        return W / np.sqrt(d)
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def sample_weights(spec: FeatureSpec, d: int, N: int, seed: int) -> np.ndarray:
    """N i.i.d. weight rows from spec.weight_dist; deterministic given seed."""
    if N < 1 or d < 1:
        raise InvalidDim(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    return _draw_weights(spec, d, N, rng_from(seed, "weights"))


def sample_covariates(ds: DataSpec, n: int, seed: int) -> np.ndarray:
    """n covariate rows from ds.covariate_dist."""
    if n < 1:
        raise InvalidDim("n must be >= 1")
    rng = rng_from(seed, "data")
    if callable(ds.covariate_dist):
        X = np.asarray(ds.covariate_dist(rng, n, ds.d), dtype=np.float64)
        if X.shape != (n, ds.d):
            raise DimMismatch(f"custom sampler returned shape {X.shape}")
        return X
    if ds.covariate_dist != UNIFORM_SPHERE_SQRT_D:
        raise ValueError(f"unknown covariate distribution {ds.covariate_dist!r}")
    X = rng.standard_normal((n, ds.d))
    X *= np.sqrt(ds.d) / np.linalg.norm(X, axis=1, keepdims=True)
    return X


def sample_data(ds: DataSpec, n: int, seed: int) -> Instance:
    """Sample an instance; responses from the ridge target (noiseless)."""
    if ds.target is None:
        raise ValueError("sample_data requires a ridge target; external y unsupported here")
    X = sample_covariates(ds, n, seed)
    return Instance(X=X, y=ds.target(X))


# ---------------------------------------------------------------------------
# Feature evaluation
# ---------------------------------------------------------------------------

def _noise_matrix(gamma: float, n: int, N: int, seed: int) -> np.ndarray:
    """i.i.d. N(0, gamma^2) entries; row i sub-seeded from (seed, 'noise', i)."""
    Z = np.empty((n, N))
    for i in range(n):
        Z[i] = row_rng(seed, i, "noise").normal(0.0, gamma, size=N)
    return Z


def featurize(
    spec: FeatureSpec,
    X: np.ndarray,
    W: np.ndarray,
    seed: int = 0,
    return_noise: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Feature matrix Phi_{ij} = sigma(<x_i, w_j>) + z_ij with z ~ N(0, gamma^2).

    gamma = 0 gives deterministic features.  With `return_noise=True` the
    realized noise matrix is returned alongside Phi (needed by the latent
    diagnostics, where Z enters the residual identity explicitly).
    """
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim != 2 or W.ndim != 2 or X.shape[1] != W.shape[1]:
        raise DimMismatch(f"X {X.shape} and W {W.shape} are not compatible")
    Phi = apply_activation(spec.activation, X @ W.T)
    if spec.noise_gamma > 0:
        Z = _noise_matrix(spec.noise_gamma, X.shape[0], W.shape[0], seed)
        Phi = Phi + Z
    else:
        Z = np.zeros_like(Phi)
    return (Phi, Z) if return_noise else Phi


def mean_feature(spec: FeatureSpec, x: np.ndarray, w: np.ndarray) -> float:
    """Mean feature sigma(<x, w>): the noise is integrated out."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape or x.ndim != 1:
        raise DimMismatch(f"x {x.shape} and w {w.shape} must be equal-length vectors")
    return float(apply_activation(spec.activation, np.atleast_1d(x @ w))[0])


def mean_features(spec: FeatureSpec, X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Batch mean features sigma(X W^T), shape (rows of X) x (rows of W)."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.shape[1] != W.shape[1]:
        raise DimMismatch(f"X {X.shape} and W {W.shape} are not compatible")
    return apply_activation(spec.activation, X @ W.T)


# ---------------------------------------------------------------------------
# Kernel oracle
# ---------------------------------------------------------------------------

@dataclass
class KernelOracle:
    """Empirical kernel K = E_{w,z}[phi_n phi_n^T] with a floored inverse sqrt.

    Carries its construction context (spec, training rows, method, seed) so the
    cross kernel k(x, x_i) for prediction can be computed consistently.
    `mc_stderr` holds the entrywise Monte Carlo standard error when applicable.
    """

    K: np.ndarray
    inv_sqrt: np.ndarray
    floor_used: float
    method: str
    spec: FeatureSpec
    X: np.ndarray
    mc_samples: int
    seed: int
    evals: np.ndarray = field(repr=False, default=None)
    evecs: np.ndarray = field(repr=False, default=None)
    mc_stderr: np.ndarray | None = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def _floored(self) -> np.ndarray:
        return np.maximum(self.evals, self.floor_used)

    def inv_apply(self, v: np.ndarray) -> np.ndarray:
        """K^{-1} v using the floored eigenvalues."""
        lam = self._floored()
        if lam[-1] <= 0:
            raise SingularKernel("kernel has no positive eigenvalue")
        return self.evecs @ ((self.evecs.T @ v) / lam)

    def inv_sqrt_apply(self, v: np.ndarray) -> np.ndarray:
        return self.inv_sqrt @ v

    def norm_K(self, v: np.ndarray) -> float:
        """||v||_K = ||K^{1/2} v||_2."""
        lam = self._floored()
        proj = self.evecs.T @ v
        return float(np.sqrt(np.sum(lam * proj**2)))

    def mean_cross(self, X_test: np.ndarray) -> np.ndarray:
        """Noise-free cross kernel k_bar(x, x_i), shape m x n."""
        X_test = np.asarray(X_test, dtype=np.float64)
        if X_test.ndim != 2 or X_test.shape[1] != self.X.shape[1]:
            raise DimMismatch(f"test rows have dimension {X_test.shape}")
        if self.method == LATENT_LINEAR:
            return X_test @ self.X.T / self.X.shape[1]
        if self.method == ARC_COSINE:
            return _arc_cosine_kernel(X_test, self.X)
        # fresh weights, sub-seeded independently of the training estimate
        W = _draw_weights(self.spec, self.X.shape[1], self.mc_samples, rng_from(self.seed, "cross"))
        F_test = mean_features(self.spec, X_test, W)
        F_train = mean_features(self.spec, self.X, W)
        return F_test @ F_train.T / self.mc_samples

    def cross(self, X_test: np.ndarray) -> np.ndarray:
        """Cross kernel for prediction.

        A test row that is the identical vector of a training row shares that
        row's feature noise, so it carries the gamma^2 term; this is what makes
        the kernel interpolant reproduce the training responses exactly.
        """
        k = self.mean_cross(X_test)
        g2 = self.spec.noise_gamma**2
        if g2 > 0:
            index = {self.X[i].tobytes(): i for i in range(self.X.shape[0])}
            X_test = np.asarray(X_test, dtype=np.float64)
            for j in range(X_test.shape[0]):
                i = index.get(X_test[j].tobytes())
                if i is not None:
                    k[j, i] += g2
        return k


def _arc_cosine_kernel(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """E_w[relu(<a, w>) relu(<b, w>)] for w ~ N(0, I/d).

    Equals ||a|| ||b|| / (2 pi d) * (sin theta + (pi - theta) cos theta) with
    theta the angle between a and b.
    """
    d = A.shape[1]
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    denom = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, (A @ B.T) / denom, 0.0)
    cos = np.clip(cos, -1.0, 1.0)
    theta = np.arccos(cos)
    return denom / (2.0 * np.pi * d) * (np.sin(theta) + (np.pi - theta) * cos)


def kernel_matrix(
    spec: FeatureSpec,
    X: np.ndarray,
    method: str = MONTE_CARLO,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
) -> KernelOracle:
    """Empirical kernel matrix oracle for the training rows X.

    Feature noise contributes gamma^2 I analytically in every method; Monte
    Carlo averages `mc_samples` weight draws for the noise-free part.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimMismatch("X must be 2-d")
    n, d = X.shape
    stderr = None
    if method == ARC_COSINE:
        if spec.activation != RELU or spec.weight_dist != GAUSSIAN_ISOTROPIC:
            raise IncompatibleMethod("arc-cosine closed form needs relu + gaussian weights")
        Kbar = _arc_cosine_kernel(X, X)
    elif method == LATENT_LINEAR:
        if spec.activation != IDENTITY:
            raise IncompatibleMethod("latent-linear closed form needs the identity activation")
        Kbar = X @ X.T / d
    elif method == MONTE_CARLO:
        if mc_samples < 1:
            raise InvalidDim("mc_samples must be >= 1")
        W = _draw_weights(spec, d, mc_samples, rng_from(seed, "kernel"))
        F = mean_features(spec, X, W)  # n x M
        Kbar = F @ F.T / mc_samples
        second = (F**2) @ (F**2).T / mc_samples
        var = np.maximum(second - Kbar**2, 0.0)
        stderr = np.sqrt(var / mc_samples)
    else:
        raise IncompatibleMethod(f"unknown kernel method {method!r}")

    K = Kbar + spec.noise_gamma**2 * np.eye(n)
    K = 0.5 * (K + K.T)
    evals, evecs = np.linalg.eigh(K)
    lam_max = float(evals[-1])
    if lam_max <= 0:
        raise SingularKernel("kernel matrix has no positive eigenvalue")
    if method == MONTE_CARLO and evals[0] < -NEG_EIG_TOL * lam_max:
        raise NotPSD(f"Monte Carlo kernel estimate has eigenvalue {evals[0]:.3e}")
    floor = KERNEL_EIG_FLOOR * lam_max
    inv_sqrt = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, floor))) @ evecs.T
    inv_sqrt = 0.5 * (inv_sqrt + inv_sqrt.T)
    return KernelOracle(
        K=K,
        inv_sqrt=inv_sqrt,
        floor_used=floor,
        method=method,
        spec=spec,
        X=X,
        mc_samples=mc_samples,
        seed=seed,
        evals=evals,
        evecs=evecs,
        mc_stderr=stderr,
    )


def whiten(oracle: KernelOracle, Phi: np.ndarray) -> np.ndarray:
    """Whitened features Psi = K^{-1/2} Phi (columnwise)."""
    Phi = np.asarray(Phi, dtype=np.float64)
    if Phi.shape[0] != oracle.n:
        raise DimMismatch(f"Phi has {Phi.shape[0]} rows, oracle expects {oracle.n}")
    return oracle.inv_sqrt @ Phi


def save_matrix_csv(path, M: np.ndarray) -> None:
    """Row-major CSV with 17 significant digits."""
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")
