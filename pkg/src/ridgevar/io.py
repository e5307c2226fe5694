"""File formats: CSV series (rows = time), TOML model and scenario documents."""

from __future__ import annotations

import csv
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .montecarlo import REPORT_HORIZONS, McScenario, MethodConfig, persistent_var
from .tuning import CvPlan, PatternSearchConfig
from .var_core import VarModel, benchmark_var2


def read_series_csv(path) -> tuple[np.ndarray, Optional[list[str]]]:
    """Load a CSV with one row per period; returns the ``(K, N)`` array and the header if present."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty series file")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"{path}: ragged or empty series")
    if header is not None and len(header) != data.shape[1]:
        raise ValueError(f"{path}: header has {len(header)} names for {data.shape[1]} columns")
    return data.T.copy(), header


def write_series_csv(path, series: np.ndarray, names: Optional[Sequence[str]] = None) -> None:
    y = np.asarray(series, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) if names else [f"y{k}" for k in range(y.shape[0])])
        for row in y.T:
            w.writerow([repr(float(v)) for v in row])


def model_from_dict(doc: dict) -> VarModel:
    """``builtin = "benchmark" | "persistent"`` or explicit ``K``, ``p``, ``A_1..A_p``, ``sigma_u``, ``nu``."""
    if "builtin" in doc:
        name = doc["builtin"]
        if name == "benchmark":
            return benchmark_var2(float(doc.get("rho", 1.0)))
        if name == "persistent":
            return persistent_var(radius=float(doc.get("radius", 0.99)))
        raise ValueError(f"unknown builtin model {name!r}")
    try:
        K, p = int(doc["K"]), int(doc["p"])
        coeffs = np.array([doc[f"A_{i}"] for i in range(1, p + 1)], dtype=float)
        sigma = np.array(doc["sigma_u"], dtype=float)
    except KeyError as exc:
        raise ValueError(f"model document lacks {exc}") from exc
    if coeffs.shape != (p, K, K):
        raise ValueError(f"coefficient matrices must be {K}x{K}")
    return VarModel(coeffs, sigma, doc.get("nu"))


def model_to_dict(model: VarModel) -> dict:
    doc = {"K": model.K, "p": model.p, "nu": model.intercept.tolist()}
    for i, A in enumerate(model.coeffs, start=1):
        doc[f"A_{i}"] = A.tolist()
    doc["sigma_u"] = model.sigma_u.tolist()
    return doc


def load_model(path) -> VarModel:
    with open(path, "rb") as fh:
        return model_from_dict(tomllib.load(fh))


def save_model(path, model: VarModel) -> None:
    Path(path).write_text(tomli_w.dumps(model_to_dict(model)))


def scenario_from_dict(doc: dict, base_dir=None) -> McScenario:
    """Scenario document: top-level settings, a ``[dgp]`` table (or ``dgp_file``) and ``[[methods]]``."""
    doc = dict(doc)
    if "dgp_file" in doc:
        path = Path(doc.pop("dgp_file"))
        dgp = load_model(path if base_dir is None or path.is_absolute() else Path(base_dir) / path)
    elif "dgp" in doc:
        dgp = model_from_dict(doc.pop("dgp"))
    else:
        raise ValueError("scenario needs a [dgp] table or dgp_file")
    methods = tuple(
        MethodConfig(m["name"], m.get("label"), dict(m.get("params", {}))) for m in doc.pop("methods", [{"name": "ls"}])
    )
    plan = CvPlan(**doc.pop("cv", {"scheme": "block_nondep_cv"}))
    opt = doc.pop("optimizer", {})
    if "x0" in opt:
        opt["x0"] = tuple(opt["x0"])
    optimizer = PatternSearchConfig(**opt)
    horizons = tuple(doc.pop("horizons", REPORT_HORIZONS))
    known = {"T", "B", "p_fit", "H", "level", "seed_base", "unit_shock", "intercept", "burn_in", "allow_unstable"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    return McScenario(dgp=dgp, methods=methods, plan=plan, optimizer=optimizer, horizons=horizons, **doc)


def load_scenario(path, **overrides) -> McScenario:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return scenario_from_dict(doc, base_dir=Path(path).parent)
