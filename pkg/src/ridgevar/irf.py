"""Moving-average coefficients, recursive structural impulse responses and delta-method bands."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .estimators import FitResult, lp_fit
from .inference import AsymptoticCovariance
from .var_core import VarModel, companion_from_coeffs


def _coeffs(model) -> np.ndarray:
    if isinstance(model, (VarModel, FitResult)):
        return model.coeffs
    c = np.asarray(model, dtype=float)
    return c[None] if c.ndim == 2 else c


def ma_coefficients(model, H: int) -> np.ndarray:
    """``Phi_0 .. Phi_H`` via ``Phi_h = sum_{j=1}^{min(h,p)} Phi_{h-j} A_j``; shape ``(H+1, K, K)``."""
    A = _coeffs(model)
    p, K, _ = A.shape
    phi = np.zeros((H + 1, K, K))
    phi[0] = np.eye(K)
    for h in range(1, H + 1):
        for j in range(1, min(h, p) + 1):
            phi[h] += phi[h - j] @ A[j - 1]
    return phi


def ma_coefficients_companion(model, H: int) -> np.ndarray:
    """Same as :func:`ma_coefficients` but read off the top-left block of companion powers."""
    A = _coeffs(model)
    K = A.shape[1]
    F = companion_from_coeffs(A)
    phi = np.zeros((H + 1, K, K))
    P = np.eye(F.shape[0])
    for h in range(H + 1):
        phi[h] = P[:K, :K]
        P = P @ F
    return phi


def inverse_irf_mapping(phis: np.ndarray) -> np.ndarray:
    """VAR(H) coefficients ``A_1..A_H`` reproducing the MA matrices ``Phi_1..Phi_H``.

    Uses the ``KH x KH`` matrix with first block row ``(-Phi_1, ..., -Phi_H)``
    and shifted identities: its ``H``-th power carries ``-A_H, ..., -A_1``
    (top to bottom) in the first ``K`` columns.
    """
    phis = np.asarray(phis, dtype=float)
    if phis.ndim == 2:
        phis = phis[None]
    H, K, _ = phis.shape
    if H < 1:
        raise ValueError("need at least one MA matrix")
    Fm = companion_from_coeffs(-phis)
    first = np.linalg.matrix_power(Fm, H)[:, :K]
    blocks = first.reshape(H, K, K)
    return -blocks[::-1].copy()


def lp_var_center(series: np.ndarray, p: int, H: Optional[int] = None, q: Optional[int] = None) -> np.ndarray:
    """``vec(A_1, ..., A_p)`` implied by local projections up to horizon ``H`` (default ``p``).

    The inverse mapping yields a VAR(H); lags beyond ``p`` are dropped and
    missing lags (``H < p``) are zero.
    """
    H = p if H is None else H
    lp = lp_fit(series, H=H, q=p if q is None else q)
    A = inverse_irf_mapping(lp.phi[1:])
    K = A.shape[1]
    out = np.zeros((p, K, K))
    n = min(p, H)
    out[:n] = A[:n]
    return np.concatenate(list(out), axis=1).reshape(-1, order="F")


# ---------------------------------------------------------------------------
# derivatives


def _commutation(K: int) -> np.ndarray:
    Kmat = np.zeros((K * K, K * K))
    for i in range(K):
        for j in range(K):
            Kmat[i * K + j, j * K + i] = 1.0
    return Kmat


def _elimination(K: int) -> np.ndarray:
    """``L`` with ``vech(S) = L vec(S)`` (column-major, lower triangle)."""
    rows = [j * K + i for j in range(K) for i in range(j, K)]
    L = np.zeros((len(rows), K * K))
    L[np.arange(len(rows)), rows] = 1.0
    return L


def _duplication(K: int) -> np.ndarray:
    """``D`` with ``vec(S) = D vech(S)`` for symmetric ``S``."""
    n = K * (K + 1) // 2
    D = np.zeros((K * K, n))
    col = 0
    for j in range(K):
        for i in range(j, K):
            D[j * K + i, col] = 1.0
            D[i * K + j, col] = 1.0
            col += 1
    return D


def _impact(sigma: np.ndarray, unit_shock: bool) -> np.ndarray:
    P = np.linalg.cholesky(sigma)
    if unit_shock:
        P = P / np.diag(P)[None, :]
    return P


def impact_jacobian(sigma: np.ndarray, unit_shock: bool = False) -> np.ndarray:
    """``d vec(P) / d vech(Sigma)'`` for the lower Cholesky factor ``P`` (column-normalized if ``unit_shock``)."""
    K = sigma.shape[0]
    P = np.linalg.cholesky(sigma)
    L = _elimination(K)
    Hm = L.T @ np.linalg.inv(L @ (np.eye(K * K) + _commutation(K)) @ np.kron(P, np.eye(K)) @ L.T)
    if not unit_shock:
        return Hm
    d_inv = np.diag(1.0 / np.diag(P))
    diag_sel = np.zeros((K * K, K * K))
    idx = np.arange(K) * (K + 1)
    diag_sel[idx, idx] = 1.0
    return (np.kron(d_inv, np.eye(K)) - np.kron(d_inv, P @ d_inv) @ diag_sel) @ Hm


def irf_jacobians(model, sigma: np.ndarray, H: int, unit_shock: bool = False):
    """Analytic derivatives of ``vec Theta(h)``, ``h = 0..H``.

    Returns ``(d_alpha, d_sigma)`` with shapes ``(H+1, K^2, K^2 p)`` and
    ``(H+1, K^2, K(K+1)/2)``; ``alpha = vec(A_1, ..., A_p)``.
    """
    A = _coeffs(model)
    p, K, _ = A.shape
    phi = ma_coefficients(A, H)
    F = companion_from_coeffs(A)
    P = _impact(sigma, unit_shock)
    dP = impact_jacobian(sigma, unit_shock)
    Ft = F.T
    # J (F')^n is the first K rows of (F')^n
    powers = [np.eye(K * p)[:K]]
    for _ in range(max(H - 1, 0)):
        powers.append(powers[-1] @ Ft)
    d_alpha = np.zeros((H + 1, K * K, K * K * p))
    d_sigma = np.zeros((H + 1, K * K, dP.shape[1]))
    PtI = np.kron(P.T, np.eye(K))
    for h in range(H + 1):
        G = np.zeros((K * K, K * K * p))
        for m in range(h):
            G += np.kron(powers[h - 1 - m], phi[m])
        d_alpha[h] = PtI @ G
        d_sigma[h] = np.kron(np.eye(K), phi[h]) @ dP
    return d_alpha, d_sigma


# ---------------------------------------------------------------------------
# structural responses


@dataclass(frozen=True)
class IrfResult:
    theta: np.ndarray  # (H+1, K, K); [h, k, m] response of variable k to shock m
    phi: np.ndarray  # (H+1, K, K) reduced-form MA matrices
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    level: Optional[float] = None
    se: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def H(self) -> int:
        return self.theta.shape[0] - 1

    def to_rows(self) -> list[dict]:
        """Long format: one row per (response_var, shock_var, horizon)."""
        K = self.theta.shape[1]
        rows = []
        for k in range(K):
            for m in range(K):
                for h in range(self.H + 1):
                    rows.append(
                        {
                            "response_var": k,
                            "shock_var": m,
                            "horizon": h,
                            "point": float(self.theta[h, k, m]),
                            "lower": None if self.lower is None else float(self.lower[h, k, m]),
                            "upper": None if self.upper is None else float(self.upper[h, k, m]),
                        }
                    )
        return rows


def _perm_indices(order: Sequence[int], K: int, p: int):
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(K)):
        raise ValueError(f"order must be a permutation of 0..{K - 1}")
    alpha_idx = np.array(
        [(lag * K + order[v]) * K + order[r] for lag in range(p) for v in range(K) for r in range(K)], dtype=int
    )
    sigma_idx = np.array([order[v] * K + order[r] for v in range(K) for r in range(K)], dtype=int)
    return order, alpha_idx, sigma_idx


def _unpermute(x: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    out[:, order[:, None], order[None, :]] = x
    return out


def structural_irf(fit, H: int, order: Optional[Sequence[int]] = None, unit_shock: bool = False) -> IrfResult:
    """Recursive (Cholesky) responses ``Theta(h) = Phi_h P``; accepts a FitResult or VarModel."""
    A = _coeffs(fit)
    sigma = fit.sigma_hat if isinstance(fit, FitResult) else fit.sigma_u
    K = A.shape[1]
    if order is not None:
        o = np.asarray(order, dtype=int)
        A = A[:, o][:, :, o]
        sigma = sigma[np.ix_(o, o)]
    try:
        P = _impact(sigma, unit_shock)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Cholesky factorization of the residual covariance failed") from exc
    phi = ma_coefficients(A, H)
    theta = phi @ P
    if order is not None:
        o = np.asarray(order, dtype=int)
        theta = _unpermute(theta, o)
        phi = _unpermute(phi, o)
    return IrfResult(theta=theta, phi=phi, info={"unit_shock": unit_shock, "order": None if order is None else list(order)})


def band_halfwidth(se_asymptotic, T: int, level: float):
    """``z_{(1+level)/2} * se / sqrt(T)``."""
    return stats.norm.ppf((1 + level) / 2) * np.asarray(se_asymptotic) / np.sqrt(T)


def delta_method_bands(
    fit: FitResult,
    cov: AsymptoticCovariance,
    H: int,
    level: float = 0.90,
    order: Optional[Sequence[int]] = None,
    unit_shock: bool = False,
) -> IrfResult:
    """Pointwise normal bands for structural responses from the joint coefficient/covariance limit."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    K, p = fit.K, fit.p
    if cov.K != K or cov.p != p or cov.T != fit.T or cov.coeff_cov.shape[0] != fit.beta_hat.size:
        raise ValueError("covariance does not belong to this fit")
    A = fit.coeffs
    sigma = fit.sigma_hat
    s_alpha = cov.lag_coeff_cov
    omega = cov.sigma_cov
    o = None
    if order is not None:
        o, a_idx, s_idx = _perm_indices(order, K, p)
        A = A[:, o][:, :, o]
        sigma = sigma[np.ix_(o, o)]
        s_alpha = s_alpha[np.ix_(a_idx, a_idx)]
        omega = omega[np.ix_(s_idx, s_idx)]
    try:
        d_alpha, d_sigma = irf_jacobians(A, sigma, H, unit_shock)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Cholesky derivative undefined: residual covariance not positive definite") from exc
    L = _elimination(K)
    s_vech = L @ omega @ L.T
    var = np.einsum("hij,jk,hik->hi", d_alpha, s_alpha, d_alpha) + np.einsum(
        "hij,jk,hik->hi", d_sigma, s_vech, d_sigma
    )
    se_asym = np.sqrt(np.maximum(var, 0.0)).reshape(H + 1, K, K, order="F")
    phi = ma_coefficients(A, H)
    theta = phi @ _impact(sigma, unit_shock)
    half = band_halfwidth(se_asym, fit.T, level)
    se = se_asym / np.sqrt(fit.T)
    if o is not None:
        theta, phi, half, se = (_unpermute(x, o) for x in (theta, phi, half, se))
    return IrfResult(
        theta=theta,
        phi=phi,
        lower=theta - half,
        upper=theta + half,
        level=level,
        se=se,
        info={"unit_shock": unit_shock, "order": None if order is None else list(order), "cov_mode": cov.mode},
    )
