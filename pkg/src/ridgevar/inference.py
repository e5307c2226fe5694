"""Asymptotic covariance estimators for ridge VAR coefficients and residual covariance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .estimators import FitResult, PartitionedPenalty, SingularSystemError
from .var_core import RegressionData, VarModel, build_regression, simulate

GAMMA_COND_MAX = 1e12


@dataclass(frozen=True)
class AsymptoticCovariance:
    """Covariances of the ``sqrt(T)``-scaled estimators.

    ``coeff_cov`` covers the full coefficient vector (intercept last when
    fitted); ``sigma_cov`` is the covariance of ``sqrt(T) vec(Sigma_hat)``.
    The two blocks are asymptotically independent.
    """

    coeff_cov: np.ndarray
    sigma_cov: np.ndarray
    mode: str
    T: int
    K: int
    p: int
    bias_vector: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def lag_coeff_cov(self) -> np.ndarray:
        n = self.K * self.K * self.p
        return self.coeff_cov[:n, :n]

    def joint(self) -> np.ndarray:
        """Block-diagonal joint covariance of ``(beta, vec Sigma)``."""
        a, b = self.coeff_cov.shape[0], self.sigma_cov.shape[0]
        out = np.zeros((a + b, a + b))
        out[:a, :a] = self.coeff_cov
        out[a:, a:] = self.sigma_cov
        return out

    def standard_errors(self) -> np.ndarray:
        """Finite-sample standard errors of the coefficients."""
        return np.sqrt(np.diag(self.coeff_cov) / self.T)

    def to_csv(self, path, which: str = "coeff") -> None:
        mat = {"coeff": self.coeff_cov, "sigma": self.sigma_cov, "joint": self.joint()}[which]
        np.savetxt(path, mat, delimiter=",")


def _inv_gram(gram: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(gram)
    if not cond < GAMMA_COND_MAX:
        raise SingularSystemError(f"sample autocovariance is degenerate (condition number {cond:.3g})")
    return np.linalg.inv(gram)


def sigma_fourth_moment_cov(residuals: np.ndarray) -> np.ndarray:
    """Plug-in ``Omega = E[vec(u u') vec(u u')'] - sigma sigma'`` from ``(K, T)`` residuals."""
    U = np.asarray(residuals, dtype=float)
    K, T = U.shape
    if T <= K * K:
        raise ValueError(f"need more than K^2 = {K * K} residual columns, got {T}")
    W = (U[:, None, :] * U[None, :, :]).reshape(K * K, T)
    s = W.mean(axis=1)
    omega = W @ W.T / T - np.outer(s, s)
    return (omega + omega.T) / 2


def standard_cov(
    fit: FitResult,
    lambda0: Optional[np.ndarray] = None,
    center_limit: Optional[np.ndarray] = None,
    beta: Optional[np.ndarray] = None,
) -> AsymptoticCovariance:
    """``Gamma^{-1} kron Sigma`` with optional non-centred bias ``(Gamma^{-1} kron I) Lambda_0 (beta_0 - beta)``.

    ``lambda0`` is the diagonal of ``plim Lambda / sqrt(T)`` over the lag
    coefficients and ``center_limit`` the limit of the centring vector.  The
    bias uses ``beta`` when supplied, otherwise the fitted coefficients.
    """
    ginv = _inv_gram(fit.gram)
    coeff_cov = np.kron(ginv, fit.sigma_hat)
    bias = None
    if lambda0 is not None:
        n_lag = fit.n_lag_coeffs
        n_all = fit.beta_hat.size
        lam = np.zeros(n_all)
        lam[:n_lag] = np.asarray(lambda0, dtype=float).reshape(-1)[:n_lag] * np.ones(n_lag)
        c = np.zeros(n_all)
        if center_limit is not None:
            c[:n_lag] = np.asarray(center_limit, dtype=float).reshape(-1)[:n_lag]
        b = fit.beta_hat.copy()
        if beta is not None:
            b[:n_lag] = np.asarray(beta, dtype=float).reshape(-1)[:n_lag]
        bias = np.kron(ginv, np.eye(fit.K)) @ (lam * (c - b))
    return AsymptoticCovariance(
        coeff_cov=coeff_cov,
        sigma_cov=sigma_fourth_moment_cov(fit.residuals),
        mode="standard",
        T=fit.T,
        K=fit.K,
        p=fit.p,
        bias_vector=bias,
    )


def shrinkage_adjusted_cov(
    fit: FitResult,
    partition: Union[PartitionedPenalty, Iterable[int]],
    lbar2: Union[float, Sequence[float], None] = None,
) -> AsymptoticCovariance:
    """Sandwich ``Gamma_L^{-1} Gamma Gamma_L^{-1} kron Sigma`` with ``Gamma_L = Gamma + Lbar``.

    ``partition`` is a :class:`PartitionedPenalty` or the set of small-coefficient
    lags.  ``lbar2`` holds the limits of ``L_2 / T``, one per regressor row of
    those lags (a scalar is broadcast); it defaults to the partition's own
    penalty divided by ``T``.
    """
    K, p = fit.K, fit.p
    if isinstance(partition, PartitionedPenalty):
        small = partition.small_lags
        if lbar2 is None:
            lbar2 = partition.lbar2(fit.T)
    else:
        small = tuple(sorted(set(int(i) for i in partition)))
        if lbar2 is None:
            raise ValueError("lbar2 is required when the partition is given as a lag set")
    if any(i < 1 or i > p for i in small):
        raise ValueError(f"small-coefficient lags must lie in 1..{p}")
    rows = np.array([r for i in small for r in range((i - 1) * K, i * K)], dtype=int)
    vals = np.broadcast_to(np.asarray(lbar2, dtype=float), rows.shape)
    if np.any(vals < 0):
        raise ValueError("asymptotic shrinkage limits must be non-negative")
    gram = fit.gram
    lbar = np.zeros(gram.shape[0])
    lbar[rows] = vals
    g_inv = np.linalg.inv(gram + np.diag(lbar))
    _inv_gram(gram)  # refuse degenerate Gamma
    sandwich = g_inv @ gram @ g_inv
    sandwich = (sandwich + sandwich.T) / 2
    return AsymptoticCovariance(
        coeff_cov=np.kron(sandwich, fit.sigma_hat),
        sigma_cov=sigma_fourth_moment_cov(fit.residuals),
        mode="shrinkage_adjusted",
        T=fit.T,
        K=K,
        p=p,
        info={"small_lags": list(small), "lbar2": vals.tolist()},
    )


@dataclass(frozen=True)
class ConsistencyTable:
    T_grid: np.ndarray
    coef_error: np.ndarray  # median ||beta_hat - beta|| per T
    sigma_error: np.ndarray  # median ||Sigma_hat - Sigma_u||_F per T

    @property
    def coef_ratios(self) -> np.ndarray:
        """Error reduction factor between consecutive sample sizes."""
        return self.coef_error[:-1] / self.coef_error[1:]

    @property
    def sigma_ratios(self) -> np.ndarray:
        return self.sigma_error[:-1] / self.sigma_error[1:]


def consistency_diagnostics(
    dgp: VarModel,
    estimator: Callable[[RegressionData], FitResult],
    T_grid: Sequence[int],
    seeds: Iterable[int],
    p_fit: Optional[int] = None,
    intercept: bool = False,
    burn_in: int = 200,
    allow_unstable: bool = False,
) -> ConsistencyTable:
    """Median estimation error of ``estimator`` per sample size over ``seeds``.

    ``estimator`` receives the regression data (so penalty rules can depend
    on ``data.T``).
    """
    p_fit = dgp.p if p_fit is None else p_fit
    if p_fit < dgp.p:
        raise ValueError("p_fit must be at least the DGP lag order")
    beta = np.zeros(dgp.K * dgp.K * p_fit)
    beta[: dgp.beta.size] = dgp.beta
    seeds = list(seeds)
    coef_err = np.empty(len(T_grid))
    sig_err = np.empty(len(T_grid))
    for n, T in enumerate(T_grid):
        ce, se = [], []
        for s in seeds:
            y = simulate(dgp, T + p_fit, burn_in=burn_in, seed=s, allow_unstable=allow_unstable)
            fit = estimator(build_regression(y, p_fit, intercept=intercept))
            ce.append(np.linalg.norm(fit.beta_hat[: beta.size] - beta))
            se.append(np.linalg.norm(fit.sigma_hat - dgp.sigma_u))
        coef_err[n] = np.median(ce)
        sig_err[n] = np.median(se)
    return ConsistencyTable(np.asarray(T_grid), coef_err, sig_err)
