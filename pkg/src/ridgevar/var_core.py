"""VAR(p) process representation, regression matrices, simulation and stability.

Conventions follow the usual multivariate regression layout: an observed
series is a ``(K, N)`` array (rows are variables, columns are time), the
regressands are ``Y`` of shape ``(K, T)`` and the stacked lags are ``Z`` of
shape ``(Kp, T)`` with the newest lag on top.  When an intercept is fitted a
row of ones is appended *below* the lag rows, so ``B_aug = [A_1, ..., A_p, nu]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

STABILITY_TOL = 1e-10

# (rng, K, n) -> (K, n) array of i.i.d. draws with zero mean and identity covariance
InnovationSampler = Callable[[np.random.Generator, int, int], np.ndarray]


class UnstableModelError(ValueError):
    """Raised when a VAR has a companion eigenvalue on or outside the unit circle."""


def gaussian_innovations(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    return rng.standard_normal((n, k)).T


@dataclass(frozen=True)
class VarModel:
    """A K-dimensional VAR(p): ``y_t = nu + A_1 y_{t-1} + ... + A_p y_{t-p} + u_t``."""

    coeffs: np.ndarray  # (p, K, K)
    sigma_u: np.ndarray  # (K, K)
    intercept: Optional[np.ndarray] = None  # (K,)

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim == 2:
            coeffs = coeffs[None]
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2]:
            raise ValueError("coeffs must have shape (p, K, K)")
        k = coeffs.shape[1]
        sigma = np.array(self.sigma_u, dtype=float)
        if sigma.shape != (k, k):
            raise ValueError(f"sigma_u must have shape ({k}, {k})")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("sigma_u must be symmetric")
        if np.linalg.eigvalsh(sigma).min() <= 1e-10:
            raise ValueError("sigma_u must be positive definite")
        nu = np.zeros(k) if self.intercept is None else np.array(self.intercept, dtype=float).reshape(-1)
        if nu.shape != (k,):
            raise ValueError(f"intercept must have length {k}")
        for arr in (coeffs, sigma, nu):
            arr.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "sigma_u", sigma)
        object.__setattr__(self, "intercept", nu)

    @property
    def K(self) -> int:
        return self.coeffs.shape[1]

    @property
    def p(self) -> int:
        return self.coeffs.shape[0]

    @property
    def B(self) -> np.ndarray:
        """Coefficient matrix ``(A_1, ..., A_p)`` of shape ``(K, Kp)``."""
        return np.concatenate(list(self.coeffs), axis=1)

    @property
    def beta(self) -> np.ndarray:
        """``vec(B)``, column-major."""
        return self.B.reshape(-1, order="F")

    @classmethod
    def from_B(cls, B: np.ndarray, sigma_u: np.ndarray, intercept=None) -> "VarModel":
        return cls(coeffs=coeffs_from_B(B), sigma_u=sigma_u, intercept=intercept)


def coeffs_from_B(B: np.ndarray) -> np.ndarray:
    """Split a ``(K, Kp)`` coefficient matrix into a ``(p, K, K)`` stack."""
    B = np.asarray(B, dtype=float)
    k = B.shape[0]
    if B.shape[1] % k:
        raise ValueError("B must have shape (K, Kp)")
    p = B.shape[1] // k
    return B.reshape(k, p, k).transpose(1, 0, 2).copy()


@dataclass(frozen=True)
class RegressionData:
    """Stacked sample matrices for ``Y = B Z + U``."""

    Y: np.ndarray  # (K, T)
    Z: np.ndarray  # (Kp [+1], T)
    p: int
    includes_intercept: bool = False

    @property
    def K(self) -> int:
        return self.Y.shape[0]

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    @property
    def Z_lags(self) -> np.ndarray:
        """Lag rows of ``Z`` without the constant row."""
        return self.Z[: self.K * self.p]

    @property
    def n_regressors(self) -> int:
        return self.Z.shape[0]

    def subset(self, columns) -> "RegressionData":
        """Restrict to a subset of observation columns."""
        return RegressionData(self.Y[:, columns], self.Z[:, columns], self.p, self.includes_intercept)


def build_regression(series: np.ndarray, p: int, intercept: bool = False) -> RegressionData:
    """Build ``Y`` and ``Z`` from a ``(K, N)`` series; ``T = N - p``."""
    y = np.asarray(series, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.ndim != 2:
        raise ValueError("series must be a (K, N) array")
    if p < 1:
        raise ValueError("p must be >= 1")
    k, n = y.shape
    if n <= p:
        raise ValueError(f"series too short: N={n} must exceed p={p}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    Y = y[:, p:]
    Z = np.concatenate([y[:, p - lag : n - lag] for lag in range(1, p + 1)], axis=0)
    if intercept:
        Z = np.vstack([Z, np.ones((1, n - p))])
    return RegressionData(Y=Y.copy(), Z=Z, p=p, includes_intercept=intercept)


def companion_from_coeffs(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    p, k, _ = coeffs.shape
    F = np.zeros((k * p, k * p))
    F[:k] = np.concatenate(list(coeffs), axis=1)
    if p > 1:
        F[k:, : k * (p - 1)] = np.eye(k * (p - 1))
    return F


def companion(model: VarModel) -> np.ndarray:
    """``Kp x Kp`` companion matrix with ``[A_1 ... A_p]`` on top and shifted identities below."""
    return companion_from_coeffs(model.coeffs)


def spectral_radius(model) -> float:
    """Largest companion eigenvalue modulus. Accepts a VarModel or a ``(p, K, K)`` stack."""
    coeffs = model.coeffs if isinstance(model, VarModel) else np.asarray(model, dtype=float)
    if coeffs.ndim == 2:
        coeffs = coeffs[None]
    try:
        eig = linalg.eigvals(companion_from_coeffs(coeffs))
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver failed on companion matrix: {exc}") from exc
    if not np.all(np.isfinite(eig)):
        raise np.linalg.LinAlgError("eigensolver returned non-finite eigenvalues")
    return float(np.abs(eig).max())


def is_stable(model, tol: float = STABILITY_TOL) -> bool:
    return spectral_radius(model) < 1.0 - tol


def simulate(
    model: VarModel,
    T: int,
    burn_in: int = 200,
    seed: int = 0,
    innovations: InnovationSampler = gaussian_innovations,
    allow_unstable: bool = False,
) -> np.ndarray:
    """Draw a ``(K, T)`` sample from a stable VAR starting at zero.

    Innovations are ``C e_t`` with ``C`` the lower Cholesky factor of
    ``sigma_u`` and ``e_t`` produced by ``innovations``; the first ``burn_in``
    draws are discarded.  ``allow_unstable`` skips the stability check, which
    is needed for unit-root designs such as :func:`benchmark_var2`.
    """
    if T < 1 or burn_in < 0:
        raise ValueError("T must be positive and burn_in non-negative")
    if not allow_unstable and not is_stable(model):
        raise UnstableModelError(f"model is not stable (spectral radius {spectral_radius(model):.6g})")
    chol = np.linalg.cholesky(model.sigma_u)
    k, p = model.K, model.p
    n = T + burn_in
    rng = np.random.default_rng(seed)
    e = np.asarray(innovations(rng, k, n), dtype=float)
    if e.shape != (k, n):
        raise ValueError(f"innovation sampler returned shape {e.shape}, expected {(k, n)}")
    u = chol @ e + model.intercept[:, None]
    y = np.zeros((k, n + p))
    B = model.B
    # state holds (y_{t-1}', ..., y_{t-p}')' in the layout of a Z column
    state = np.zeros(k * p)
    for t in range(n):
        y_t = B @ state + u[:, t]
        y[:, p + t] = y_t
        state[k:] = state[:-k]
        state[:k] = y_t
    return y[:, p + burn_in :]


def sample_autocov(data: RegressionData) -> np.ndarray:
    """``Z Z' / T`` restricted to the lag rows (``Kp x Kp``)."""
    Z = data.Z_lags
    return Z @ Z.T / data.T


def population_autocov(model: VarModel) -> np.ndarray:
    """Stationary covariance of ``(y_t', ..., y_{t-p+1}')'`` from the companion Lyapunov equation."""
    if not is_stable(model):
        raise UnstableModelError("population autocovariance requires a stable model")
    F = companion(model)
    k = model.K
    Q = np.zeros_like(F)
    Q[:k, :k] = model.sigma_u
    G = linalg.solve_discrete_lyapunov(F, Q)
    return (G + G.T) / 2


def eigenvalue_continuity_check(gamma_hat: np.ndarray, gamma: np.ndarray) -> float:
    """Max distance between descending-ordered eigenvalues of two symmetric matrices."""
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma_hat.shape != gamma.shape or gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise ValueError(f"dimension mismatch: {gamma_hat.shape} vs {gamma.shape}")
    w_hat = np.linalg.eigvalsh(gamma_hat)[::-1]
    w = np.linalg.eigvalsh(gamma)[::-1]
    return float(np.abs(w_hat - w).max())


def damped(model: VarModel, rho: float) -> VarModel:
    """Rescale ``A_i -> rho**i A_i``; companion eigenvalues are multiplied by ``rho``."""
    scale = rho ** np.arange(1, model.p + 1)
    return VarModel(model.coeffs * scale[:, None, None], model.sigma_u, model.intercept)


def benchmark_var2(rho: float = 1.0) -> VarModel:
    """Bivariate VAR(2) used in the shrinkage experiments.

    As printed, ``det(I - A_1 - A_2) = 0``: the process has an exact unit root.
    Pass ``rho < 1`` for the damped, stationary variant with spectral radius ``rho``.
    """
    A1 = [[0.8, 0.1], [-0.1, 0.7]]
    A2 = [[0.1, -0.2], [-0.1, 0.1]]
    model = VarModel(coeffs=np.array([A1, A2]), sigma_u=np.diag([0.3, 5.0]))
    return model if rho == 1.0 else damped(model, rho)
