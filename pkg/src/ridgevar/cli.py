"""Command-line front end: ``ridgevar {simulate,fit,irf,tune,mc,replay}``.

Exit codes: 0 success, 2 user or configuration error, 3 numerical failure.
Errors print one JSON line ``{"error": reason, "message": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, io
from .estimators import (
    PartitionedPenalty,
    PenaltyMatrix,
    hierarchical_posterior_mean,
    lp_fit,
    ls_fit,
    minnesota_posterior_mean,
    rlp_fit,
    rls_fit,
    rls_gls_fit,
)
from .inference import shrinkage_adjusted_cov, standard_cov
from .irf import delta_method_bands, lp_var_center, structural_irf
from .montecarlo import run_scenario
from .tuning import (
    SCHEMES,
    CvPlan,
    PatternSearchConfig,
    PenaltySearchSpace,
    minnesota_tightness_cv,
    select_penalty,
)
from .var_core import UnstableModelError, build_regression, simulate

FIT_METHODS = ("ls", "ridge", "ridge-gls", "ridge-as", "minnesota", "hierarchical-mean", "lp", "rlp")
IRF_METHODS = ("ls", "ridge", "ridge-gls", "ridge-as", "minnesota", "hierarchical-mean", "rlp")


class CliError(Exception):
    def __init__(self, reason: str, message: str, code: int = 2):
        super().__init__(message)
        self.reason = reason
        self.code = code


# ---------------------------------------------------------------------------
# shared helpers


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _out(args) -> Path:
    d = Path(args.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_model(args):
    if args.model:
        return io.load_model(args.model)
    return io.model_from_dict({"builtin": args.builtin, "rho": args.rho})


def _load_series(path) -> np.ndarray:
    return io.read_series_csv(path)[0]


def _plan(args) -> CvPlan:
    if args.scheme is None:
        raise CliError("missing_scheme", "penalty tuning requires an explicit --scheme")
    return CvPlan(args.scheme, folds=args.folds, os_split=args.os_split, gap=args.gap)


def _read_penalty_file(path) -> list:
    """Plain comma/newline separated values, or the two-column ``lag,lambda`` file written by ``tune``."""
    with open(path) as fh:
        first = fh.readline().strip()
    if first.replace(" ", "") == "lag,lambda":
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1].tolist()
    return np.loadtxt(path, delimiter=",", ndmin=1).reshape(-1).tolist()


def _penalty_from_args(args, K: int, p: int) -> Optional[PenaltyMatrix]:
    given = [x is not None for x in (args.lam, args.lam_lags, args.lam_file)]
    if sum(given) > 1:
        raise CliError("invalid_penalty", "use only one of --lam, --lam-lags, --lam-file")
    if args.lam is not None:
        return PenaltyMatrix.isotropic(args.lam, K, p)
    if args.lam_lags is not None:
        vals = [float(v) for v in args.lam_lags.split(",")]
    elif args.lam_file is not None:
        vals = _read_penalty_file(args.lam_file)
    else:
        return None
    n = len(vals)
    if n == p:
        return PenaltyMatrix.lag_adapted(vals, K)
    if n == K * p:
        return PenaltyMatrix.columnwise(vals, K)
    if n == K * K * p:
        return PenaltyMatrix(np.asarray(vals), K, p)
    raise CliError("dimension_mismatch", f"{n} penalty values do not match p={p}, Kp={K * p} or K^2 p={K * K * p}")


def _tuned_lag_penalty(args, data):
    space = PenaltySearchSpace.for_data(
        data, n_params=args.r, extrapolate_tail=args.r is not None and args.r < data.p, scale=args.bound_scale
    )
    return select_penalty(data, space, _plan(args), PatternSearchConfig(max_evals=args.max_evals), seed=_seed(args))


def _hierarchical_inputs(args, data):
    K, p = data.K, data.p
    if args.omega_file:
        omega = np.loadtxt(args.omega_file, delimiter=",", ndmin=2)
    else:
        s = np.diag(ls_fit(data).sigma_hat)
        omega = np.diag(np.concatenate([1.0 / (i * i * s) for i in range(1, p + 1)]))
    prior = np.loadtxt(args.prior_mean_file, delimiter=",", ndmin=2) if args.prior_mean_file else np.zeros((K, K * p))
    return omega, prior


def _fit(args, series: np.ndarray):
    """Returns ``(fit, partition)``; ``partition`` is set for ridge-as."""
    m = args.method
    data = build_regression(series, args.p, intercept=not args.no_intercept)
    K, p = data.K, data.p
    penalty = _penalty_from_args(args, K, p)
    if m == "ls":
        return ls_fit(data), None
    if m in ("ridge", "ridge-gls"):
        info = {}
        if args.tune:
            sel = _tuned_lag_penalty(args, data)
            penalty = sel.penalty(K)
            info = {"cv_loss": sel.loss, "cv_loss_at_zero": sel.loss_at_zero, "n_evals": sel.n_evals}
        if penalty is None:
            raise CliError("missing_penalty", f"{m} needs --lam, --lam-lags, --lam-file or --tune")
        fit = rls_fit(data, penalty) if m == "ridge" else rls_gls_fit(data, penalty, ls_fit(data).sigma_hat)
        fit.info.update(info)
        return fit, None
    if m == "ridge-as":
        if args.split_lag is None:
            raise CliError("missing_split_lag", "ridge-as needs --split-lag")
        if args.tune:
            space = PenaltySearchSpace(p, 1, data.T * args.bound_scale, extrapolate_tail=True, zero_lags=args.split_lag)
            sel = select_penalty(data, space, _plan(args), PatternSearchConfig(max_evals=args.max_evals), seed=_seed(args))
            tail = float(sel.x[0])
        elif args.lam is not None:
            tail = args.lam
        else:
            raise CliError("missing_penalty", "ridge-as needs --lam (tail penalty) or --tune")
        part = PartitionedPenalty.from_lags(tail, args.split_lag, K, p)
        return rls_fit(data, part.base, method="ridge-as"), part
    if m == "minnesota":
        sigma = ls_fit(data).sigma_hat
        lam = args.tightness
        if args.tune:
            lam = minnesota_tightness_cv(data, theta=args.theta, plan=_plan(args), sigma=sigma).lam
        if lam is None:
            raise CliError("missing_tightness", "minnesota needs --tightness or --tune")
        return minnesota_posterior_mean(data, sigma, lam, args.theta), None
    if m == "hierarchical-mean":
        omega, prior = _hierarchical_inputs(args, data)
        return hierarchical_posterior_mean(data, omega, args.xi, prior), None
    if m == "rlp":
        if args.H is None:
            raise CliError("missing_lp_horizon", "rlp needs the local-projection horizon --H")
        if penalty is None:
            raise CliError("missing_penalty", "rlp needs --lam, --lam-lags or --lam-file")
        center = lp_var_center(series, p, H=args.H, q=args.q)
        return rlp_fit(data, penalty, center), None
    raise CliError("unknown_method", f"unknown method {m!r}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(args, argv, outputs) -> Path:
    out = _out(args)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config["seed"] = _seed(args)
    doc = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "outputs": {p.name: _sha256(p) for p in outputs},
        "version": __version__,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, default=str))
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    model = _load_model(args)
    try:
        y = simulate(model, args.T, burn_in=args.burn_in, seed=_seed(args), allow_unstable=args.allow_unstable)
    except UnstableModelError as exc:
        raise CliError("unstable_dgp", str(exc)) from exc
    path = _out(args) / args.out
    io.write_series_csv(path, y)
    return [path]


def cmd_fit(args):
    series = _load_series(args.data)
    out = _out(args) / args.out
    if args.method == "lp":
        if args.H is None:
            raise CliError("missing_lp_horizon", "lp needs --H")
        lp = lp_fit(series, args.H, args.q or args.p)
        doc = {
            "method": "lp",
            "q": lp.q,
            "H": args.H,
            "phi": lp.phi.tolist(),
            "se": np.sqrt(np.diagonal(lp.cov, axis1=1, axis2=2)).reshape(-1, series.shape[0], series.shape[0], order="F").tolist(),
            "nw_lags": lp.nw_lags.tolist(),
            "sigma": lp.sigma.tolist(),
        }
    else:
        fit, _ = _fit(args, series)
        doc = fit.to_dict()
    out.write_text(json.dumps(doc, indent=2, default=float))
    return [out]


def cmd_irf(args):
    series = _load_series(args.data)
    fit, part = _fit(args, series)
    order = [int(v) for v in args.order.split(",")] if args.order else None
    if args.level is None:
        res = structural_irf(fit, args.horizon, order=order, unit_shock=args.unit_shock)
    else:
        cov = shrinkage_adjusted_cov(fit, part) if part is not None else standard_cov(fit)
        res = delta_method_bands(fit, cov, args.horizon, args.level, order=order, unit_shock=args.unit_shock)
    path = _out(args) / args.out
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["response_var", "shock_var", "horizon", "point", "lower", "upper"])
        w.writeheader()
        for row in res.to_rows():
            w.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return [path]


def cmd_tune(args):
    series = _load_series(args.data)
    data = build_regression(series, args.p, intercept=not args.no_intercept)
    r = data.p - args.zero_lags if args.r is None else args.r
    space = PenaltySearchSpace(
        data.p, r, data.T * args.bound_scale,
        extrapolate_tail=args.zero_lags + r < data.p, zero_lags=args.zero_lags,
    )
    sel = select_penalty(data, space, _plan(args), PatternSearchConfig(max_evals=args.max_evals), seed=_seed(args))
    out = _out(args)
    lam_path, trace_path = out / "lambda.csv", out / "trace.csv"
    with open(lam_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lag", "lambda"])
        for i, v in enumerate(sel.lambdas, start=1):
            w.writerow([i, repr(float(v))])
    with open(trace_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["evaluation"] + [f"x{j + 1}" for j in range(r)] + ["loss"])
        for n, (x, f) in enumerate(sel.trace):
            w.writerow([n] + [repr(float(v)) for v in x] + [repr(float(f))])
    return [lam_path, trace_path]


def cmd_mc(args):
    sc = io.load_scenario(args.scenario, B=args.B, seed_base=args.seed)
    res = run_scenario(sc, jobs=args.jobs, baseline=args.baseline)
    return res.write(_out(args), prefix=args.prefix)


def cmd_replay(args):
    doc = json.loads(Path(args.manifest).read_text())
    argv = list(doc["argv"])
    if args.output_dir is not None:
        argv += ["--output-dir", args.output_dir]
    return main(argv)


# ---------------------------------------------------------------------------
# parser


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    g.add_argument("--output-dir", default=".", help="directory for outputs and manifest.json")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for Monte Carlo replications")
    return g


def _estimation_flags(sp, methods):
    sp.add_argument("--data", required=True, help="CSV series, one row per period")
    sp.add_argument("--p", type=int, required=True, help="lag order")
    sp.add_argument("--method", choices=methods, default="ls")
    sp.add_argument("--no-intercept", action="store_true")
    sp.add_argument("--lam", type=float, help="isotropic penalty (tail penalty for ridge-as)")
    sp.add_argument("--lam-lags", help="comma-separated lag-adapted penalties")
    sp.add_argument("--lam-file", help="CSV with p, Kp or K^2 p penalty values")
    sp.add_argument("--tune", action="store_true", help="select the penalty by validation first")
    sp.add_argument("--split-lag", type=int, help="last unpenalized lag for ridge-as")
    sp.add_argument("--tightness", type=float, help="Minnesota tightness (inf = flat prior)")
    sp.add_argument("--theta", type=float, default=1.0, help="Minnesota cross-lag factor")
    sp.add_argument("--xi", type=float, default=1.0, help="hierarchical prior scale")
    sp.add_argument("--omega-file", help="CSV Kp x Kp prior covariance for hierarchical-mean")
    sp.add_argument("--prior-mean-file", help="CSV K x Kp prior mean for hierarchical-mean")
    sp.add_argument("--H", type=int, help="local-projection horizon (lp, rlp)")
    sp.add_argument("--q", type=int, help="local-projection lags (default p)")
    _tuning_flags(sp)


def _tuning_flags(sp):
    sp.add_argument("--scheme", choices=SCHEMES, help="validation scheme (required when tuning)")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--os-split", type=float, default=0.8)
    sp.add_argument("--gap", type=int, default=None, help="boundary gap for block_nondep_cv (default p)")
    sp.add_argument("--r", type=int, default=None, help="number of free lag penalties")
    sp.add_argument("--bound-scale", type=float, default=1e2, help="box upper bound is T times this")
    sp.add_argument("--max-evals", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    g = _global_flags()
    parser = argparse.ArgumentParser(prog="ridgevar", description="Ridge-regularized VAR estimation and inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[g], help="draw a sample from a VAR")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="TOML model file")
    src.add_argument("--builtin", choices=("benchmark", "persistent"))
    sp.add_argument("--rho", type=float, default=1.0, help="damping for the builtin benchmark model")
    sp.add_argument("--T", type=int, required=True)
    sp.add_argument("--burn-in", type=int, default=200)
    sp.add_argument("--allow-unstable", action="store_true")
    sp.add_argument("--out", default="series.csv")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", parents=[g], help="estimate a VAR or local projections")
    _estimation_flags(sp, FIT_METHODS)
    sp.add_argument("--out", default="fit.json")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("irf", parents=[g], help="structural impulse responses with delta-method bands")
    _estimation_flags(sp, IRF_METHODS)
    sp.add_argument("--horizon", type=int, default=24, help="maximum IRF horizon")
    sp.add_argument("--level", type=float, default=0.90, help="band level; omit bands with --no-bands")
    sp.add_argument("--no-bands", dest="level", action="store_const", const=None)
    sp.add_argument("--order", help="comma-separated recursive ordering")
    sp.add_argument("--unit-shock", action="store_true", help="normalize shocks to a unit impact")
    sp.add_argument("--out", default="irf.csv")
    sp.set_defaults(func=cmd_irf)

    sp = sub.add_parser("tune", parents=[g], help="select lag-adapted penalties")
    sp.add_argument("--data", required=True)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--no-intercept", action="store_true")
    sp.add_argument("--zero-lags", type=int, default=0, help="leading lags held unpenalized")
    _tuning_flags(sp)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("mc", parents=[g], help="run a Monte Carlo scenario")
    sp.add_argument("--scenario", required=True, help="TOML scenario")
    sp.add_argument("--B", type=int, default=None, help="override the number of replications")
    sp.add_argument("--baseline", default=None, help="method column normalizing relative MSE")
    sp.add_argument("--prefix", default="mc")
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--output-dir", default=None)
    sp.set_defaults(func=cmd_replay, seed=None, jobs=1)
    return parser


def _fail(reason: str, message: str, code: int) -> int:
    print(json.dumps({"error": reason, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else _fail("usage", "invalid command line", 2)
    try:
        if args.command == "replay":
            return args.func(args)
        outputs = args.func(args)
        _write_manifest(args, argv, outputs)
    except CliError as exc:
        return _fail(exc.reason, str(exc), exc.code)
    except UnstableModelError as exc:
        return _fail("unstable_dgp", str(exc), 2)
    except np.linalg.LinAlgError as exc:
        return _fail("numerical_failure", str(exc), 3)
    except (FileNotFoundError, IsADirectoryError) as exc:
        return _fail("missing_file", str(exc), 2)
    except RuntimeError as exc:
        return _fail("numerical_failure", str(exc), 3)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail("invalid_input", str(exc), 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
