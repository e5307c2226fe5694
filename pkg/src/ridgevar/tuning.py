"""Data-driven penalty selection: validation schemes, pattern search and Minnesota tightness CV."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .estimators import (
    PenaltyMatrix,
    SingularSystemError,
    _finish,
    _pad,
    ls_fit,
    minnesota_prior_variance,
    ridge_from_moments,
)
from .var_core import RegressionData

SCHEMES = ("out_of_sample", "block_cv", "block_nondep_cv")


@dataclass(frozen=True)
class CvPlan:
    scheme: str
    folds: int = 5
    os_split: float = 0.8
    gap: Optional[int] = None  # defaults to the lag order
    weighting: str = "equal"  # or "inverse_variance"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.folds < 1:
            raise ValueError("folds must be positive")
        if not 0 < self.os_split < 1:
            raise ValueError("os_split must lie in (0, 1)")
        if self.gap is not None and self.gap < 0:
            raise ValueError("gap must be non-negative")
        if self.weighting not in ("equal", "inverse_variance"):
            raise ValueError("weighting must be 'equal' or 'inverse_variance'")


def cv_splits(T: int, plan: CvPlan, p: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Train/test column indices for each fold.

    Test sets are contiguous blocks.  With ``block_nondep_cv`` the ``gap``
    columns on either side of a test block are dropped from training, so no
    training regressor overlaps a held-out observation.  ``folds=1`` in the
    block schemes falls back to the out-of-sample split.
    """
    idx = np.arange(T)
    if plan.scheme == "out_of_sample" or plan.folds == 1:
        cut = int(np.floor(plan.os_split * T))
        return [(idx[:cut], idx[cut:])]
    gap = p if plan.gap is None else plan.gap
    if plan.scheme == "block_cv":
        gap = 0
    bounds = np.linspace(0, T, plan.folds + 1).round().astype(int)
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        test = idx[a:b]
        train = idx[(idx < a - gap) | (idx >= b + gap)]
        out.append((train, test))
    return out


class CrossValidator:
    """Fold-wise sufficient statistics so that each penalty evaluation is a few small solves."""

    def __init__(self, data: RegressionData, plan: CvPlan):
        self.data = data
        self.plan = plan
        self.splits = cv_splits(data.T, plan, data.p)
        self._folds = []
        for train, test in self.splits:
            if train.size <= data.n_regressors or test.size == 0:
                raise ValueError(
                    f"fold too small: {train.size} training columns for {data.n_regressors} regressors"
                )
            Zt, Yt = data.Z[:, train], data.Y[:, train]
            if plan.weighting == "inverse_variance":
                w = 1.0 / Yt.var(axis=1)
            else:
                w = np.ones(data.K)
            self._folds.append((Zt @ Zt.T, Zt @ Yt.T, data.Z[:, test], data.Y[:, test], w, train))

    def _fold_loss(self, B: np.ndarray, Zv: np.ndarray, Yv: np.ndarray, w: np.ndarray) -> float:
        E = Yv - B @ Zv
        return float(np.mean(w @ (E * E)))

    def loss_diag(self, diag: np.ndarray) -> float:
        """CV loss for a ridge penalty given as its (unpadded) ``K^2 p`` diagonal."""
        d = _pad(diag, self.data, "penalty")
        K = self.data.K
        total = 0.0
        for zz, zy, Zv, Yv, w, _ in self._folds:
            try:
                beta = ridge_from_moments(zz, zy, d)
            except SingularSystemError:
                return np.inf
            total += self._fold_loss(beta.reshape(K, -1, order="F"), Zv, Yv, w)
        return total / len(self._folds)

    def loss(self, penalty: PenaltyMatrix) -> float:
        return self.loss_diag(penalty.diag)

    def minnesota_loss(self, lam: float, theta: float, sigma: np.ndarray) -> float:
        data = self.data
        total = 0.0
        for _, _, Zv, Yv, w, train in self._folds:
            beta = augmented_posterior_mean(data.subset(train), sigma, lam, theta)
            total += self._fold_loss(beta.reshape(data.K, -1, order="F"), Zv, Yv, w)
        return total / len(self._folds)


def cv_loss(
    data: RegressionData,
    penalty_builder: Callable[[np.ndarray], PenaltyMatrix],
    lambdas,
    plan: CvPlan,
) -> float:
    """Mean over folds of the one-step-ahead squared prediction error (summed over equations)."""
    return CrossValidator(data, plan).loss(penalty_builder(np.asarray(lambdas, dtype=float)))


# ---------------------------------------------------------------------------
# search space and optimizer


@dataclass(frozen=True)
class PenaltySearchSpace:
    """Lag-adapted penalties ``lambda_1..lambda_p`` searched over ``[0, upper_bound]^r``.

    ``zero_lags`` leading lags are held at zero; the ``n_params`` free values
    apply to the following lags and, with ``extrapolate_tail``, the last free
    value is repeated over the remaining lags.
    """

    p: int
    n_params: int
    upper_bound: float
    extrapolate_tail: bool = False
    zero_lags: int = 0

    def __post_init__(self):
        if self.n_params < 1 or self.zero_lags < 0:
            raise ValueError("n_params must be positive and zero_lags non-negative")
        used = self.zero_lags + self.n_params
        if used > self.p or (not self.extrapolate_tail and used != self.p):
            raise ValueError(
                f"{self.zero_lags} fixed + {self.n_params} free penalties do not cover p={self.p} lags"
            )
        if not self.upper_bound > 0:
            raise ValueError("upper_bound must be positive")

    @classmethod
    def for_data(
        cls,
        data: RegressionData,
        n_params: Optional[int] = None,
        extrapolate_tail: bool = False,
        zero_lags: int = 0,
        scale: float = 1e2,
    ) -> "PenaltySearchSpace":
        n = data.p - zero_lags if n_params is None else n_params
        return cls(data.p, n, data.T * scale, extrapolate_tail, zero_lags)

    def expand(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n_params:
            raise ValueError(f"expected {self.n_params} free penalties")
        lam = np.zeros(self.p)
        lam[self.zero_lags : self.zero_lags + x.size] = x
        lam[self.zero_lags + x.size :] = x[-1]
        return lam


@dataclass(frozen=True)
class PatternSearchConfig:
    initial_mesh: float = 1 / 16  # fraction of the box width
    expansion: float = 2.0
    contraction: float = 0.5
    min_mesh: float = 1e-3  # fraction of the box width
    max_evals: int = 500
    x0: Optional[tuple] = None


@dataclass
class PatternSearchResult:
    x: np.ndarray
    fval: float
    n_evals: int
    trace: list = field(default_factory=list)  # (x, f) for every distinct evaluation


def pattern_search(
    fun: Callable[[np.ndarray], float],
    lower: np.ndarray,
    upper: np.ndarray,
    x0: np.ndarray,
    config: PatternSearchConfig = PatternSearchConfig(),
    seed: int = 0,
    extra_points: Sequence[np.ndarray] = (),
) -> PatternSearchResult:
    """Box-constrained coordinate pattern search with opportunistic polling.

    Polls ``x +/- mesh * e_i`` (clipped to the box) in a seeded random order,
    moves to the first improving point and expands the mesh, otherwise
    contracts.  ``extra_points`` are evaluated up front and compete for the
    returned optimum.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    width = upper - lower
    rng = np.random.default_rng(seed)
    cache: dict = {}
    trace = []

    def f(x):
        key = tuple(np.round(x, 12))
        if key not in cache:
            if len(cache) >= config.max_evals:
                return None
            val = float(fun(x))
            cache[key] = val
            trace.append((x.copy(), val))
        return cache[key]

    best_x, best_f = None, np.inf
    for pt in list(extra_points) + [x0]:
        pt = np.clip(np.asarray(pt, dtype=float), lower, upper)
        val = f(pt)
        if val is not None and (best_x is None or val < best_f):
            best_x, best_f = pt, val
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    fx = cache[tuple(np.round(x, 12))]
    mesh = config.initial_mesh
    n = x.size
    while mesh >= config.min_mesh and len(cache) < config.max_evals:
        improved = False
        for d in rng.permutation(2 * n):
            step = np.zeros(n)
            step[d // 2] = (1 if d % 2 == 0 else -1) * mesh * width[d // 2]
            cand = np.clip(x + step, lower, upper)
            if np.array_equal(cand, x):
                continue
            val = f(cand)
            if val is None:
                break
            if val < fx:
                x, fx, improved = cand, val, True
                break
        mesh = mesh * (config.expansion if improved else config.contraction)
    for xt, ft in trace:
        if ft < best_f:
            best_x, best_f = xt, ft
    return PatternSearchResult(x=best_x, fval=best_f, n_evals=len(cache), trace=trace)


@dataclass
class PenaltySelection:
    lambdas: np.ndarray  # length p, lag-adapted values
    x: np.ndarray  # free parameters
    loss: float
    loss_at_zero: float
    n_evals: int
    trace: list

    def penalty(self, K: int) -> PenaltyMatrix:
        return PenaltyMatrix.lag_adapted(self.lambdas, K)


def select_penalty(
    data: RegressionData,
    space: PenaltySearchSpace,
    plan: CvPlan,
    config: PatternSearchConfig = PatternSearchConfig(),
    seed: int = 0,
) -> PenaltySelection:
    """Minimize the validation loss over the lag-adapted box with a pattern search.

    The search starts from the geometric midpoint ``sqrt(upper_bound)`` in
    every coordinate (unless ``config.x0`` is set); ``lambda = 0`` is always
    evaluated so the result never validates worse than least squares.
    """
    if space.p != data.p:
        raise ValueError("search space and data disagree on the lag order")
    cv = CrossValidator(data, plan)
    K = data.K

    def fun(x):
        return cv.loss_diag(np.repeat(space.expand(x), K * K))

    r = space.n_params
    lower = np.zeros(r)
    upper = np.full(r, space.upper_bound)
    x0 = np.full(r, np.sqrt(space.upper_bound)) if config.x0 is None else np.asarray(config.x0, dtype=float)
    res = pattern_search(fun, lower, upper, x0, config, seed, extra_points=[np.zeros(r)])
    if not np.isfinite(res.fval):
        raise RuntimeError("optimizer exhausted its budget without a feasible evaluation")
    zero_loss = res.trace[0][1]
    return PenaltySelection(
        lambdas=space.expand(res.x),
        x=res.x,
        loss=res.fval,
        loss_at_zero=zero_loss,
        n_evals=res.n_evals,
        trace=res.trace,
    )


# ---------------------------------------------------------------------------
# Minnesota prior via dummy observations


def minnesota_dummy_observations(data: RegressionData, sigma: np.ndarray, lam: float, theta: float = 1.0):
    """Whitened regression with prior rows appended, ``(X_aug, y_aug)``.

    With ``Sigma = C C'`` the GLS likelihood is the LS problem of
    ``vec(C^{-1} Y)`` on ``Z' kron C^{-1}``; the zero-mean prior adds rows
    ``V^{-1/2}`` with zero targets.  Plain LS on the result is the posterior mean.
    """
    C = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    C_inv = np.linalg.inv(C)
    X = np.kron(data.Z.T, C_inv)
    y = (C_inv @ data.Y).reshape(-1, order="F")
    if np.isfinite(lam):
        v = minnesota_prior_variance(data.K, data.p, lam, theta, sigma)
        prior = np.zeros((v.size, X.shape[1]))
        prior[np.arange(v.size), np.arange(v.size)] = 1.0 / np.sqrt(v)
        X = np.vstack([X, prior])
        y = np.concatenate([y, np.zeros(v.size)])
    return X, y


def augmented_posterior_mean(data: RegressionData, sigma: np.ndarray, lam: float, theta: float = 1.0) -> np.ndarray:
    X, y = minnesota_dummy_observations(data, sigma, lam, theta)
    return np.linalg.lstsq(X, y, rcond=None)[0]


def minnesota_dummy_fit(data: RegressionData, sigma: np.ndarray, lam: float, theta: float = 1.0):
    return _finish(data, augmented_posterior_mean(data, sigma, lam, theta), "minnesota-dummy",
                   info={"tightness": lam, "theta": theta})


@dataclass
class TightnessSelection:
    lam: float
    grid: np.ndarray
    losses: np.ndarray
    sigma: np.ndarray


DEFAULT_TIGHTNESS_GRID = tuple(np.logspace(-3, 1, 17)) + (np.inf,)


def minnesota_tightness_cv(
    data: RegressionData,
    theta: float = 1.0,
    grid: Sequence[float] = DEFAULT_TIGHTNESS_GRID,
    plan: CvPlan = CvPlan("block_nondep_cv"),
    sigma: Optional[np.ndarray] = None,
) -> TightnessSelection:
    """Grid search of the Minnesota tightness by validation loss (``inf`` = flat prior).

    ``sigma`` defaults to the residual covariance of a preliminary LS fit on
    the full sample.  Ties go to the smallest tightness.
    """
    if sigma is None:
        sigma = ls_fit(data).sigma_hat
    cv = CrossValidator(data, plan)
    grid = np.asarray(grid, dtype=float)
    losses = np.array([cv.minnesota_loss(lam, theta, sigma) for lam in grid])
    best = int(np.argmin(losses))
    return TightnessSelection(lam=float(grid[best]), grid=grid, losses=losses, sigma=sigma)
