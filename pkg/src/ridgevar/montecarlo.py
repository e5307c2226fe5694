"""Monte Carlo harness: relative MSE, coverage and interval length of structural impulse responses."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .estimators import (
    FitResult,
    PenaltyMatrix,
    PartitionedPenalty,
    SingularSystemError,
    lp_fit,
    ls_fit,
    minnesota_posterior_mean,
    rls_fit,
    rls_gls_fit,
)
from .inference import shrinkage_adjusted_cov, standard_cov
from .irf import _impact, delta_method_bands, structural_irf
from .tuning import CvPlan, PenaltySearchSpace, PatternSearchConfig, minnesota_tightness_cv, select_penalty
from .var_core import UnstableModelError, VarModel, build_regression, damped, is_stable, simulate, spectral_radius

REPORT_HORIZONS = (1, 4, 8, 12, 16, 20, 24)
TABLE_KINDS = ("relative_mse", "coverage", "length", "median_length")


@dataclass(frozen=True)
class MethodConfig:
    """An estimator in the menu; ``params`` are method specific (see :data:`METHODS`)."""

    name: str
    label: Optional[str] = None
    params: dict = field(default_factory=dict)

    @property
    def column(self) -> str:
        return self.label or self.name


@dataclass(frozen=True)
class McScenario:
    dgp: VarModel
    T: int
    B: int
    p_fit: int
    H: int = 24
    methods: tuple = (MethodConfig("ls"), MethodConfig("ridge"))
    level: float = 0.90
    seed_base: int = 0
    unit_shock: bool = True
    intercept: bool = True
    burn_in: int = 200
    allow_unstable: bool = False
    horizons: tuple = REPORT_HORIZONS
    plan: CvPlan = CvPlan("block_nondep_cv")
    optimizer: PatternSearchConfig = PatternSearchConfig()

    def __post_init__(self):
        if self.B < 1 or self.T < 1 or self.p_fit < 1 or self.H < 1:
            raise ValueError("B, T, p_fit and H must be positive")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        cols = [m.column for m in self.methods]
        if len(set(cols)) != len(cols):
            raise ValueError("method columns must be unique")
        for m in self.methods:
            if m.name not in METHODS:
                raise ValueError(f"unknown method {m.name!r}; registered: {sorted(METHODS)}")
            if m.name == "ridge-as" and not 1 <= int(m.params.get("split_lag", 6)) < self.p_fit:
                raise ValueError(f"ridge-as split_lag must lie in 1..{self.p_fit - 1}")
        if any(h > self.H or h < 0 for h in self.horizons):
            raise ValueError("report horizons must lie in 0..H")
        if not self.allow_unstable and not is_stable(self.dgp):
            raise UnstableModelError(
                f"DGP spectral radius {spectral_radius(self.dgp):.6f} >= 1; pass allow_unstable to draw it anyway"
            )


# ---------------------------------------------------------------------------
# method registry


@dataclass
class _Replication:
    """Per-replication inputs shared read-only by all methods, plus a cache for shared tuning."""

    scenario: McScenario
    series: np.ndarray
    data: object
    seed: int
    cache: dict = field(default_factory=dict)

    def ls(self) -> FitResult:
        if "ls" not in self.cache:
            self.cache["ls"] = ls_fit(self.data)
        return self.cache["ls"]

    def ridge_selection(self):
        if "ridge" not in self.cache:
            sc = self.scenario
            space = PenaltySearchSpace.for_data(self.data)
            self.cache["ridge"] = select_penalty(self.data, space, sc.plan, sc.optimizer, seed=self.seed)
        return self.cache["ridge"]


def _bands(rep: _Replication, fit: FitResult, cov):
    sc = rep.scenario
    res = delta_method_bands(fit, cov, sc.H, sc.level, unit_shock=sc.unit_shock)
    return res.theta, res.lower, res.upper, {}


def _m_ls(rep, params):
    fit = rep.ls()
    return _bands(rep, fit, standard_cov(fit))


def _m_ridge(rep, params):
    sel = rep.ridge_selection()
    fit = rls_fit(rep.data, sel.penalty(rep.data.K))
    theta, lo, up, _ = _bands(rep, fit, standard_cov(fit))
    return theta, lo, up, {"lambdas": sel.lambdas.tolist(), "n_evals": sel.n_evals}


def _m_ridge_fixed(rep, params):
    lam = params.get("lam", 10.0)
    d = rep.data
    pen = PenaltyMatrix.lag_adapted(lam, d.K) if np.ndim(lam) else PenaltyMatrix.isotropic(lam, d.K, d.p)
    fit = rls_fit(d, pen)
    return _bands(rep, fit, standard_cov(fit))


def _m_ridge_gls(rep, params):
    sel = rep.ridge_selection()
    fit = rls_gls_fit(rep.data, sel.penalty(rep.data.K), rep.ls().sigma_hat)
    theta, lo, up, _ = _bands(rep, fit, standard_cov(fit))
    return theta, lo, up, {"lambdas": sel.lambdas.tolist()}


def _m_ridge_as(rep, params):
    sc, d = rep.scenario, rep.data
    split = int(params.get("split_lag", 6))
    if not 1 <= split < d.p:
        raise ValueError(f"split_lag must lie in 1..{d.p - 1}")
    space = PenaltySearchSpace(d.p, 1, d.T * 1e2, extrapolate_tail=True, zero_lags=split)
    sel = select_penalty(d, space, sc.plan, sc.optimizer, seed=rep.seed)
    part = PartitionedPenalty.from_lags(float(sel.x[0]), split, d.K, d.p)
    fit = rls_fit(d, part.base, method="ridge-as")
    theta, lo, up, _ = _bands(rep, fit, shrinkage_adjusted_cov(fit, part))
    return theta, lo, up, {"lambda_tail": float(sel.x[0])}


def _m_lp(rep, params):
    sc = rep.scenario
    q = int(params.get("q", sc.p_fit))
    lp = lp_fit(rep.series, sc.H, q)
    K = lp.sigma.shape[0]
    P = _impact(lp.sigma, sc.unit_shock)
    # Theta(0) = P is treated as known; bands come from the horizon-wise HAC covariance
    theta = lp.phi @ P
    z = stats.norm.ppf((1 + sc.level) / 2)
    PtI = np.kron(P.T, np.eye(K))
    var = np.einsum("ij,hjk,ik->hi", PtI, lp.cov, PtI)
    half = z * np.sqrt(np.maximum(var, 0.0)).reshape(sc.H + 1, K, K, order="F")
    return theta, theta - half, theta + half, {"q": q}


def _m_bvar_cv(rep, params):
    theta_mn = float(params.get("theta", 1.0))
    sel = minnesota_tightness_cv(rep.data, theta=theta_mn, plan=rep.scenario.plan, sigma=rep.ls().sigma_hat)
    if np.isfinite(sel.lam):
        fit = minnesota_posterior_mean(rep.data, sel.sigma, sel.lam, theta_mn)
    else:
        fit = rep.ls()
    res = structural_irf(fit, rep.scenario.H, unit_shock=rep.scenario.unit_shock)
    return res.theta, None, None, {"tightness": sel.lam}


METHODS: dict[str, Callable] = {
    "ls": _m_ls,
    "ridge": _m_ridge,
    "ridge-fixed": _m_ridge_fixed,
    "ridge-gls": _m_ridge_gls,
    "ridge-as": _m_ridge_as,
    "lp": _m_lp,
    "bvar-cv": _m_bvar_cv,
}

_FAILURES = (np.linalg.LinAlgError, SingularSystemError, ValueError, RuntimeError, FloatingPointError)


def true_irf(scenario: McScenario) -> np.ndarray:
    return structural_irf(scenario.dgp, scenario.H, unit_shock=scenario.unit_shock).theta


def run_replication(scenario: McScenario, b: int, theta_true: Optional[np.ndarray] = None) -> dict:
    """Fit every method on replication ``b``; failures are recorded per method."""
    if theta_true is None:
        theta_true = true_irf(scenario)
    seed = scenario.seed_base + b
    series = simulate(
        scenario.dgp, scenario.T + scenario.p_fit, burn_in=scenario.burn_in, seed=seed,
        allow_unstable=scenario.allow_unstable,
    )
    rep = _Replication(scenario, series, build_regression(series, scenario.p_fit, scenario.intercept), seed)
    out = {}
    for m in scenario.methods:
        try:
            with np.errstate(all="raise"):
                theta, lo, up, info = METHODS[m.name](rep, m.params)
            if not np.all(np.isfinite(theta)):
                raise FloatingPointError("non-finite impulse responses")
        except _FAILURES as exc:
            out[m.column] = {"failed": f"{type(exc).__name__}: {exc}"}
            continue
        err = theta - theta_true
        rec = {"sqerr": np.sum(err * err, axis=2), "info": info}
        if lo is not None:
            rec["cover"] = ((lo <= theta_true) & (theta_true <= up)).mean(axis=2)
            rec["length"] = (up - lo).mean(axis=2)
        out[m.column] = rec
    return out


def _chunk(args):
    scenario, bs, theta_true = args
    return [run_replication(scenario, b, theta_true) for b in bs]


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class McTable:
    """Cells ``values[k, method, horizon]``."""

    kind: str
    methods: tuple
    horizons: tuple
    values: np.ndarray
    baseline_method: Optional[str] = None

    def cell(self, k: int, method: str, h: int) -> float:
        return float(self.values[k, self.methods.index(method), self.horizons.index(h)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variable", "method"] + [f"h={h}" for h in self.horizons])
            for k in range(self.values.shape[0]):
                for j, m in enumerate(self.methods):
                    w.writerow([k, m] + [repr(float(v)) for v in self.values[k, j]])


@dataclass
class McResult:
    tables: dict
    exclusions: dict
    n_success: dict
    infos: dict  # method -> list of per-replication diagnostics (e.g. selected penalties)
    scenario: McScenario

    def write(self, out_dir, prefix: str = "mc") -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for kind, table in self.tables.items():
            p = out_dir / f"{prefix}_{kind}.csv"
            table.to_csv(p)
            paths.append(p)
        meta = {
            "seeds": [self.scenario.seed_base, self.scenario.seed_base + self.scenario.B - 1],
            "B": self.scenario.B,
            "T": self.scenario.T,
            "p_fit": self.scenario.p_fit,
            "level": self.scenario.level,
            "unit_shock": self.scenario.unit_shock,
            "methods": [asdict(m) for m in self.scenario.methods],
            "baseline": self.tables["relative_mse"].baseline_method,
            "exclusions": self.exclusions,
            "n_success": self.n_success,
            "diagnostics": self.infos,
        }
        p = out_dir / f"{prefix}_meta.json"
        p.write_text(json.dumps(meta, indent=2, default=str))
        paths.append(p)
        return paths


def run_scenario(scenario: McScenario, jobs: int = 1, baseline: Optional[str] = None) -> McResult:
    """Run all replications and reduce them in replication order.

    Every method sees the same simulated series in replication ``b``
    (seed ``seed_base + b``), so serial and parallel runs agree exactly.
    """
    theta_true = true_irf(scenario)
    bs = list(range(scenario.B))
    if jobs <= 1:
        reps = [run_replication(scenario, b, theta_true) for b in bs]
    else:
        chunks = [bs[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_chunk, [(scenario, c, theta_true) for c in chunks]))
        by_b = {}
        for c, part in zip(chunks, parts):
            by_b.update(zip(c, part))
        reps = [by_b[b] for b in bs]

    cols = tuple(m.column for m in scenario.methods)
    baseline = baseline or cols[0]
    if baseline not in cols:
        raise ValueError(f"baseline {baseline!r} is not in the method menu")
    K = scenario.dgp.K
    hz = list(scenario.horizons)
    n_h = len(hz)
    mse = np.full((K, len(cols), n_h), np.nan)
    cov = np.full_like(mse, np.nan)
    length = np.full_like(mse, np.nan)
    med = np.full_like(mse, np.nan)
    exclusions, n_success, infos = {}, {}, {}
    for j, c in enumerate(cols):
        ok = [r[c] for r in reps if "failed" not in r[c]]
        exclusions[c] = [
            {"replication": b, "reason": r[c]["failed"]} for b, r in enumerate(reps) if "failed" in r[c]
        ]
        n_success[c] = len(ok)
        infos[c] = [r["info"] for r in ok if r["info"]]
        if not ok:
            continue
        mse[:, j] = np.mean([r["sqerr"][hz] for r in ok], axis=0).T
        banded = [r for r in ok if "cover" in r]
        if banded:
            cov[:, j] = np.mean([r["cover"][hz] for r in banded], axis=0).T
            L = np.array([r["length"][hz] for r in banded])
            length[:, j] = L.mean(axis=0).T
            med[:, j] = np.median(L, axis=0).T
    base = cols.index(baseline)
    ref = mse[:, base : base + 1]
    # cells fixed by identification (e.g. unit impacts) have zero baseline MSE
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(ref > 0, mse / ref, np.where(mse > 0, np.inf, 1.0))
    rel[np.isnan(mse)] = np.nan
    tables = {
        "relative_mse": McTable("relative_mse", cols, tuple(hz), rel, baseline),
        "coverage": McTable("coverage", cols, tuple(hz), cov),
        "length": McTable("length", cols, tuple(hz), length),
        "median_length": McTable("median_length", cols, tuple(hz), med),
    }
    return McResult(tables, exclusions, n_success, infos, scenario)


# ---------------------------------------------------------------------------
# designs


def small_coefficient_scale(T: int, delta: float) -> float:
    """``T^{-(1/2 + delta)}``."""
    return float(T) ** -(0.5 + delta)


def small_coefficient_dgp(base: VarModel, tail_lags: Sequence[int], scale: float) -> VarModel:
    """Copy of ``base`` with the coefficient blocks of ``tail_lags`` multiplied by ``scale``."""
    lags = sorted(set(int(i) for i in tail_lags))
    if any(i < 1 or i > base.p for i in lags):
        raise ValueError(f"tail lags must lie in 1..{base.p}")
    coeffs = base.coeffs.copy()
    for i in lags:
        coeffs[i - 1] *= scale
    model = VarModel(coeffs, base.sigma_u, base.intercept)
    if not is_stable(model):
        raise UnstableModelError(f"rescaled model has spectral radius {spectral_radius(model):.6f}")
    return model


def threshold_partition(fit: FitResult, threshold: float) -> tuple[int, ...]:
    """Lags whose largest absolute LS coefficient is below ``threshold`` (heuristic small-coefficient block).

    No post-selection correction is applied to subsequent inference.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    peak = np.abs(fit.coeffs).max(axis=(1, 2))
    return tuple(int(i + 1) for i in np.flatnonzero(peak < threshold))


def persistent_var(K: int = 7, p: int = 5, radius: float = 0.99, seed: int = 20240601) -> VarModel:
    """Synthetic persistent VAR(p) with companion spectral radius exactly ``radius``."""
    rng = np.random.default_rng(seed)
    coeffs = np.stack([rng.normal(scale=0.4 / (i * np.sqrt(K)), size=(K, K)) for i in range(1, p + 1)])
    coeffs[0] += 0.5 * np.eye(K)
    G = rng.normal(size=(K, K))
    sigma = G @ G.T / K + 0.5 * np.eye(K)
    model = VarModel(coeffs, sigma)
    return damped(model, radius / spectral_radius(model))
