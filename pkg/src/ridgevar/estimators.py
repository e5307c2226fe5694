"""Least squares, ridge and Bayesian posterior-mean estimators for VAR(p) models.

Coefficient vectors are ``vec(B_aug)`` (column-major), where ``B_aug`` is
``(A_1, ..., A_p)`` optionally followed by the intercept column.  Index
``j * K + k`` therefore holds the coefficient of regressor row ``j`` of ``Z``
in equation ``k``; lag block ``i`` occupies entries ``K^2 (i-1) .. K^2 i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .var_core import RegressionData, VarModel, coeffs_from_B, build_regression

LS_RCOND_MIN = 1e-12
RIDGE_RCOND_MIN = 1e-14

STRUCTURES = ("isotropic", "lag_adapted", "partitioned", "general_diagonal")


class SingularSystemError(np.linalg.LinAlgError):
    """The (penalized) Gram matrix cannot be inverted reliably."""


def cho_solve_checked(A: np.ndarray, b: np.ndarray, rcond_min: float = RIDGE_RCOND_MIN) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` with a conditioning guard."""
    try:
        c, lower = linalg.cho_factor(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"matrix is not positive definite: {exc}") from exc
    anorm = np.abs(A).sum(axis=0).max()
    rcond, info = lapack.dpocon(c, anorm, uplo="L")
    if info != 0 or not rcond >= rcond_min:
        raise SingularSystemError(f"reciprocal condition estimate {rcond:.3g} below {rcond_min:g}")
    return linalg.cho_solve((c, lower), b)


# ---------------------------------------------------------------------------
# penalties


@dataclass(frozen=True)
class PenaltyMatrix:
    """Diagonal ridge penalty over the ``K^2 p`` lag coefficients.

    The intercept (when fitted) is never penalized; estimators pad ``diag``
    with zeros for it.
    """

    diag: np.ndarray
    K: int
    p: int
    structure: str = "general_diagonal"
    lag_values: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.array(self.diag, dtype=float).reshape(-1)
        if d.shape != (self.K * self.K * self.p,):
            raise ValueError(f"penalty diag must have length K^2 p = {self.K * self.K * self.p}, got {d.size}")
        if np.any(np.isnan(d)) or np.any(d < 0):
            raise ValueError("penalty entries must be non-negative")
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown penalty structure {self.structure!r}")
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)
        if self.lag_values is not None:
            lv = np.array(self.lag_values, dtype=float).reshape(-1)
            lv.setflags(write=False)
            object.__setattr__(self, "lag_values", lv)

    @classmethod
    def isotropic(cls, lam: float, K: int, p: int) -> "PenaltyMatrix":
        return cls(np.full(K * K * p, float(lam)), K, p, "isotropic")

    @classmethod
    def lag_adapted(cls, lambdas: Sequence[float], K: int) -> "PenaltyMatrix":
        lambdas = np.asarray(lambdas, dtype=float).reshape(-1)
        return cls(np.repeat(lambdas, K * K), K, lambdas.size, "lag_adapted", lag_values=lambdas)

    @classmethod
    def columnwise(cls, lam_kp: Sequence[float], K: int) -> "PenaltyMatrix":
        """``Lambda_Kp kron I_K``: one penalty per regressor row of ``Z``."""
        lam_kp = np.asarray(lam_kp, dtype=float).reshape(-1)
        if lam_kp.size % K:
            raise ValueError("lam_kp must have length K p")
        return cls(np.repeat(lam_kp, K), K, lam_kp.size // K, "general_diagonal")

    @classmethod
    def zero(cls, K: int, p: int) -> "PenaltyMatrix":
        return cls(np.zeros(K * K * p), K, p, "isotropic")

    def kp_diag(self) -> Optional[np.ndarray]:
        """Diagonal of ``Lambda_Kp`` if the penalty equals ``Lambda_Kp kron I_K``, else None."""
        m = self.diag.reshape(self.K * self.p, self.K)
        if np.all(m == m[:, :1]):
            return m[:, 0].copy()
        return None

    def describe(self) -> dict:
        out: dict[str, Any] = {"structure": self.structure, "K": self.K, "p": self.p}
        if self.lag_values is not None:
            out["lag_values"] = self.lag_values.tolist()
        elif self.structure == "isotropic":
            out["value"] = float(self.diag[0])
        else:
            out["diag"] = self.diag.tolist()
        return out


@dataclass(frozen=True)
class PartitionedPenalty:
    """Penalty split into lags ``1..split_lag`` (block L_1) and ``split_lag+1..p`` (block L_2)."""

    base: PenaltyMatrix
    split_lag: int

    def __post_init__(self):
        if not 1 <= self.split_lag <= self.base.p:
            raise ValueError(f"split_lag must lie in [1, {self.base.p}]")

    @classmethod
    def from_lags(cls, small_lambda, split_lag: int, K: int, p: int, large_lambda: float = 0.0):
        lambdas = np.full(p, float(large_lambda))
        lambdas[split_lag:] = small_lambda
        base = PenaltyMatrix(np.repeat(lambdas, K * K), K, p, "partitioned", lag_values=lambdas)
        return cls(base, split_lag)

    @property
    def small_lags(self) -> tuple[int, ...]:
        return tuple(range(self.split_lag + 1, self.base.p + 1))

    def lbar2(self, T: int) -> np.ndarray:
        """Per-regressor-row limits ``L_2 / T`` on the small-coefficient block."""
        kp = self.base.kp_diag()
        if kp is None:
            raise ValueError("partitioned penalty must be constant within each regressor row")
        K = self.base.K
        return kp[K * self.split_lag :] / T


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray  # vec(B_aug)
    sigma_hat: np.ndarray  # U U' / T
    gamma_hat: np.ndarray  # Z_lags Z_lags' / T
    gram: np.ndarray  # Z Z' / T including the constant row
    residuals: np.ndarray  # (K, T)
    K: int
    p: int
    T: int
    includes_intercept: bool
    method: str
    penalty: Optional[PenaltyMatrix] = None
    center: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def B_aug(self) -> np.ndarray:
        return self.beta_hat.reshape(self.K, -1, order="F")

    @property
    def B_hat(self) -> np.ndarray:
        return self.B_aug[:, : self.K * self.p]

    @property
    def nu_hat(self) -> Optional[np.ndarray]:
        return self.B_aug[:, -1].copy() if self.includes_intercept else None

    @property
    def coeffs(self) -> np.ndarray:
        return coeffs_from_B(self.B_hat)

    @property
    def n_lag_coeffs(self) -> int:
        return self.K * self.K * self.p

    def to_model(self) -> VarModel:
        return VarModel(self.coeffs, self.sigma_hat, self.nu_hat)

    def to_dict(self) -> dict:
        center = None
        if self.center is not None:
            center = {
                "coefficients": coeffs_from_B(self.center[: self.n_lag_coeffs].reshape(self.K, -1, order="F")).tolist()
            }
        return {
            "method": self.method,
            "K": self.K,
            "p": self.p,
            "T": self.T,
            "intercept": None if self.nu_hat is None else self.nu_hat.tolist(),
            "coefficients": self.coeffs.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "penalty": None if self.penalty is None else self.penalty.describe(),
            "center": center,
            "info": self.info,
        }


def _pad(vec: Optional[np.ndarray], data: RegressionData, what: str) -> np.ndarray:
    n_lag = data.K * data.K * data.p
    n_all = data.K * data.n_regressors
    if vec is None:
        return np.zeros(n_all)
    v = np.asarray(vec, dtype=float).reshape(-1)
    if v.size == n_lag:
        return np.concatenate([v, np.zeros(n_all - n_lag)])
    if v.size == n_all:
        return v.copy()
    raise ValueError(f"{what} has length {v.size}, expected {n_lag} or {n_all}")


def _check_penalty(penalty: PenaltyMatrix, data: RegressionData) -> None:
    if penalty.K != data.K or penalty.p != data.p:
        raise ValueError(f"penalty built for K={penalty.K}, p={penalty.p} but data has K={data.K}, p={data.p}")


def _finish(data: RegressionData, beta: np.ndarray, method: str, **kw) -> FitResult:
    B = beta.reshape(data.K, -1, order="F")
    U = data.Y - B @ data.Z
    T = data.T
    Zl = data.Z_lags
    return FitResult(
        beta_hat=beta,
        sigma_hat=U @ U.T / T,
        gamma_hat=Zl @ Zl.T / T,
        gram=data.Z @ data.Z.T / T,
        residuals=U,
        K=data.K,
        p=data.p,
        T=T,
        includes_intercept=data.includes_intercept,
        method=method,
        **kw,
    )


def ridge_from_moments(
    zz: np.ndarray,
    zy: np.ndarray,
    diag: np.ndarray,
    center: Optional[np.ndarray] = None,
    solver: str = "auto",
    rcond_min: float = RIDGE_RCOND_MIN,
) -> np.ndarray:
    """Ridge solution from ``ZZ'`` (M x M) and ``ZY'`` (M x K) with a diagonal penalty of length ``K M``.

    Because the penalty is diagonal the ``K M`` normal equations decouple into
    ``K`` independent ``M x M`` systems, one per equation.  When the penalty is
    constant within each regressor row they share one matrix and a single
    factorization solves all equations at once.
    """
    M, K = zy.shape
    lam = diag.reshape(M, K)
    b0 = np.zeros((M, K)) if center is None else center.reshape(M, K)
    if solver == "auto":
        solver = "matrix" if np.all(lam == lam[:, :1]) else "equationwise"
    if solver == "matrix":
        if not np.all(lam == lam[:, :1]):
            raise ValueError("matrix solver requires a penalty of the form Lambda_Kp kron I_K")
        lam_m = lam[:, 0]
        Bt = cho_solve_checked(zz + np.diag(lam_m), zy + lam_m[:, None] * b0, rcond_min)
    elif solver == "equationwise":
        Bt = np.empty((M, K))
        for k in range(K):
            Bt[:, k] = cho_solve_checked(zz + np.diag(lam[:, k]), zy[:, k] + lam[:, k] * b0[:, k], rcond_min)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return Bt.reshape(-1)


def ls_fit(data: RegressionData) -> FitResult:
    """Multivariate least squares ``B = Y Z' (Z Z')^{-1}``."""
    zz = data.Z @ data.Z.T
    zy = data.Z @ data.Y.T
    Bt = cho_solve_checked(zz, zy, LS_RCOND_MIN)
    return _finish(data, Bt.reshape(-1), "ls")


def rls_fit(
    data: RegressionData,
    penalty: PenaltyMatrix,
    center: Optional[np.ndarray] = None,
    solver: str = "auto",
    method: str = "ridge",
) -> FitResult:
    """Ridge estimator ``(ZZ' kron I + Lambda)^{-1} ((Z kron I) y + Lambda beta_0)``."""
    _check_penalty(penalty, data)
    diag = _pad(penalty.diag, data, "penalty")
    c = _pad(center, data, "center")
    beta = ridge_from_moments(data.Z @ data.Z.T, data.Z @ data.Y.T, diag, c, solver)
    return _finish(data, beta, method, penalty=penalty, center=None if center is None else c)


def matrix_ridge_fit(data: RegressionData, lam_kp, center_B: Optional[np.ndarray] = None) -> FitResult:
    """Matrix ridge ``(Y + B_0 Lambda_Kp) Z' (ZZ' + Lambda_Kp)^{-1}``.

    ``lam_kp`` is a length-``Kp`` diagonal or a full ``Kp x Kp`` symmetric
    positive semi-definite matrix.  The intercept row is left unpenalized.
    """
    M = data.n_regressors
    kp = data.K * data.p
    lam = np.asarray(lam_kp, dtype=float)
    if lam.ndim == 1:
        lam = np.diag(lam)
    if lam.shape != (kp, kp):
        raise ValueError(f"lam_kp must be of size {kp}")
    L = np.zeros((M, M))
    L[:kp, :kp] = lam
    B0 = np.zeros((data.K, M))
    if center_B is not None:
        B0[:, :kp] = np.asarray(center_B, dtype=float)[:, :kp]
    Bt = cho_solve_checked(data.Z @ data.Z.T + L, data.Z @ data.Y.T + L @ B0.T)
    center = B0.reshape(-1, order="F") if center_B is not None else None
    return _finish(data, Bt.reshape(-1), "matrix-ridge", center=center)


def _inv_pd(sigma: np.ndarray, name: str = "sigma") -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    try:
        c = linalg.cho_factor(sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc
    return linalg.cho_solve(c, np.eye(sigma.shape[0]))


def rls_gls_fit(data: RegressionData, penalty: PenaltyMatrix, sigma: np.ndarray) -> FitResult:
    """GLS ridge ``[Lambda + (ZZ' kron Sigma^{-1})]^{-1} (Z kron Sigma^{-1}) y``."""
    _check_penalty(penalty, data)
    s_inv = _inv_pd(sigma)
    A = np.kron(data.Z @ data.Z.T, s_inv) + np.diag(_pad(penalty.diag, data, "penalty"))
    rhs = (s_inv @ data.Y @ data.Z.T).reshape(-1, order="F")
    beta = cho_solve_checked(A, rhs)
    return _finish(data, beta, "ridge-gls", penalty=penalty, info={"sigma_used": np.asarray(sigma).tolist()})


def minnesota_prior_variance(K: int, p: int, lam: float, theta: float, sigma: np.ndarray) -> np.ndarray:
    """Prior variances of ``(A_i)_{jk}`` laid out like ``vec(B)``.

    ``lam^2 / i^2`` on own lags and ``theta lam^2 / i^2 * s_j / s_k`` on cross
    lags, with ``s`` the diagonal of ``sigma``.
    """
    s = np.diag(np.asarray(sigma, dtype=float))
    i = np.arange(1, p + 1, dtype=float)
    # v[i, k, j]: lag i, regressor variable k (column of A_i), equation j (row)
    ratio = s[None, :] / s[:, None]  # ratio[k, j] = s_j / s_k
    v = np.where(np.eye(K, dtype=bool), 1.0, theta * ratio)[None] * (lam**2 / i**2)[:, None, None]
    return v.reshape(-1)


def _check_minnesota(lam: float, theta: float) -> None:
    if not lam > 0:
        raise ValueError("Minnesota tightness must be positive")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")


def minnesota_posterior_mean(data: RegressionData, sigma: np.ndarray, lam: float, theta: float = 1.0) -> FitResult:
    """Posterior mean ``[V^{-1} + (ZZ' kron Sigma^{-1})]^{-1} (Z kron Sigma^{-1}) y`` under a zero-mean prior.

    ``lam = inf`` gives a flat prior (least squares).  The intercept has a flat prior.
    """
    _check_minnesota(lam, theta)
    s_inv = _inv_pd(sigma)
    n_all = data.K * data.n_regressors
    precision = np.zeros((n_all, n_all))
    if np.isfinite(lam):
        V = np.diag(minnesota_prior_variance(data.K, data.p, lam, theta, sigma))
        n_lag = V.shape[0]
        precision[:n_lag, :n_lag] = np.linalg.inv(V)
    A = precision + np.kron(data.Z @ data.Z.T, s_inv)
    rhs = (s_inv @ data.Y @ data.Z.T).reshape(-1, order="F")
    beta = np.linalg.solve(A, rhs)
    return _finish(data, beta, "minnesota", info={"tightness": lam, "theta": theta})


def hierarchical_posterior_mean(
    data: RegressionData, omega: np.ndarray, xi: float, prior_mean_B: np.ndarray
) -> FitResult:
    """Conditional posterior mean ``B' = ((Omega xi)^{-1} + ZZ')^{-1} (Z Y' + (Omega xi)^{-1} B_prior')``."""
    if not xi > 0:
        raise ValueError("xi must be positive")
    kp = data.K * data.p
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (kp, kp):
        raise ValueError(f"omega must be {kp} x {kp}")
    prec = _inv_pd(omega * xi, "omega")
    M = data.n_regressors
    P = np.zeros((M, M))
    P[:kp, :kp] = prec
    B0 = np.zeros((data.K, M))
    B0[:, :kp] = np.asarray(prior_mean_B, dtype=float)[:, :kp]
    Bt = np.linalg.solve(P + data.Z @ data.Z.T, data.Z @ data.Y.T + P @ B0.T)
    return _finish(data, Bt.reshape(-1), "hierarchical-mean", center=B0.reshape(-1, order="F"), info={"xi": xi})


def rlp_fit(data: RegressionData, penalty: PenaltyMatrix, lp_center: np.ndarray) -> FitResult:
    """Ridge shrinking towards VAR coefficients extracted from local projections."""
    return rls_fit(data, penalty, center=lp_center, method="rlp")


def penalized_objective(data: RegressionData, beta: np.ndarray, penalty: PenaltyMatrix, center=None) -> float:
    """``||Y - B Z||_F^2 + (beta - beta_0)' Lambda (beta - beta_0)``."""
    b = _pad(beta, data, "beta")
    c = _pad(center, data, "center")
    U = data.Y - b.reshape(data.K, -1, order="F") @ data.Z
    d = b - c
    return float(np.sum(U * U) + d @ (_pad(penalty.diag, data, "penalty") * d))


# ---------------------------------------------------------------------------
# local projections


@dataclass(frozen=True)
class LpResult:
    phi: np.ndarray  # (H+1, K, K), phi[0] = I
    cov: np.ndarray  # (H+1, K^2, K^2) covariance of vec(phi[h]); cov[0] = 0
    coefs: list  # per horizon (K, 1 + Kq) coefficient matrices [y_t .. y_{t-q+1}, const]
    T_h: np.ndarray  # effective sample per horizon (index 0 unused)
    nw_lags: np.ndarray
    sigma: np.ndarray  # residual covariance of the horizon-1 regression
    q: int


def newey_west_lag(T: int) -> int:
    return int(np.floor(1.3 * np.sqrt(T)))


def _newey_west_cov(X: np.ndarray, U: np.ndarray, n_lags: int) -> np.ndarray:
    """HAC covariance of ``vec(C)`` for ``Y = C X + U`` (Bartlett kernel)."""
    M, T = X.shape
    K = U.shape[0]
    # score for vec(C): x_t kron u_t
    g = (X[:, None, :] * U[None, :, :]).reshape(M * K, T)
    S = g @ g.T / T
    for lag in range(1, n_lags + 1):
        w = 1.0 - lag / (n_lags + 1.0)
        G = g[:, lag:] @ g[:, :-lag].T / T
        S += w * (G + G.T)
    Qinv = np.linalg.inv(X @ X.T / T)
    A = np.kron(Qinv, np.eye(K))
    return A @ S @ A.T / T


def lp_fit(series: np.ndarray, H: int, q: int) -> LpResult:
    """Local projections of ``y_{t+h}`` on ``y_t, ..., y_{t-q+1}`` and a constant, ``h = 1..H``."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 2:
        raise ValueError("series must be a (K, N) array")
    if H < 1 or q < 1:
        raise ValueError("H and q must be positive")
    K, N = y.shape
    if N <= q + H:
        raise ValueError(f"series of length {N} too short for q={q}, H={H}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    M = K * q + 1
    phi = np.zeros((H + 1, K, K))
    phi[0] = np.eye(K)
    cov = np.zeros((H + 1, K * K, K * K))
    T_h = np.zeros(H + 1, dtype=int)
    nw = np.zeros(H + 1, dtype=int)
    coefs = [None]
    sigma = None
    for h in range(1, H + 1):
        t = np.arange(q - 1, N - h)
        if t.size <= M:
            raise ValueError(f"insufficient sample at horizon {h}: {t.size} observations for {M} regressors")
        X = np.vstack([y[:, t - j] for j in range(q)] + [np.ones((1, t.size))])
        Yh = y[:, t + h]
        C = cho_solve_checked(X @ X.T, X @ Yh.T, LS_RCOND_MIN).T
        U = Yh - C @ X
        L = newey_west_lag(t.size)
        V = _newey_west_cov(X, U, L)
        phi[h] = C[:, :K]
        cov[h] = V[: K * K, : K * K]
        T_h[h] = t.size
        nw[h] = L
        coefs.append(C)
        if h == 1:
            sigma = U @ U.T / t.size
    return LpResult(phi=phi, cov=cov, coefs=coefs, T_h=T_h, nw_lags=nw, sigma=sigma, q=q)


# ---------------------------------------------------------------------------
# shrinkage diagnostics


@dataclass(frozen=True)
class ShrinkagePath:
    lambdas: np.ndarray
    total: np.ndarray  # Euclidean norm of the lag coefficients
    lag_blocks: np.ndarray  # (n_lambda, p) Frobenius norms of A_i


def shrinkage_norms(
    data: RegressionData,
    lambdas: Sequence[float],
    penalty_fn: Optional[Callable[[float], PenaltyMatrix]] = None,
) -> ShrinkagePath:
    """Coefficient norms along a penalty path (isotropic unless ``penalty_fn`` is given)."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size < 2:
        raise ValueError("need at least two penalty values")
    if penalty_fn is None:
        penalty_fn = lambda lam: PenaltyMatrix.isotropic(lam, data.K, data.p)  # noqa: E731
    total = np.empty(lambdas.size)
    blocks = np.empty((lambdas.size, data.p))
    for n, lam in enumerate(lambdas):
        fit = rls_fit(data, penalty_fn(lam))
        total[n] = np.linalg.norm(fit.beta_hat[: fit.n_lag_coeffs])
        blocks[n] = np.linalg.norm(fit.coeffs, axis=(1, 2))
    return ShrinkagePath(lambdas, total, blocks)


def pseudo_model_selection_limit(data: RegressionData, keep_lags: Iterable[int]) -> FitResult:
    """Least squares using only the lags in ``keep_lags``; other lag blocks are zero."""
    keep = sorted(set(int(i) for i in keep_lags))
    if not keep or keep[0] < 1 or keep[-1] > data.p:
        raise ValueError(f"keep_lags must be a non-empty subset of 1..{data.p}")
    K = data.K
    rows = [r for i in keep for r in range((i - 1) * K, i * K)]
    if data.includes_intercept:
        rows.append(K * data.p)
    Zs = data.Z[rows]
    Bt = cho_solve_checked(Zs @ Zs.T, Zs @ data.Y.T, LS_RCOND_MIN)
    B = np.zeros((K, data.n_regressors))
    B[:, rows] = Bt.T
    return _finish(data, B.reshape(-1, order="F"), "subset-ls", info={"keep_lags": keep})


__all__ = [
    "FitResult",
    "LpResult",
    "PartitionedPenalty",
    "PenaltyMatrix",
    "ShrinkagePath",
    "SingularSystemError",
    "build_regression",
    "hierarchical_posterior_mean",
    "lp_fit",
    "ls_fit",
    "matrix_ridge_fit",
    "minnesota_posterior_mean",
    "minnesota_prior_variance",
    "penalized_objective",
    "pseudo_model_selection_limit",
    "rlp_fit",
    "rls_fit",
    "rls_gls_fit",
    "shrinkage_norms",
]
