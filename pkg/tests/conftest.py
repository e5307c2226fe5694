import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ridgevar.var_core import VarModel, build_regression, simulate, spectral_radius

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_stable_model(rng: np.random.Generator, K: int, p: int, radius: float = 0.9) -> VarModel:
    """Random VAR(p) rescaled so the companion spectral radius is at most ``radius``."""
    coeffs = rng.normal(scale=0.5 / np.sqrt(K), size=(p, K, K))
    G = rng.normal(size=(K, K))
    sigma = G @ G.T + 0.5 * np.eye(K)
    model = VarModel(coeffs, sigma)
    r = spectral_radius(model)
    if r > radius:
        scale = (radius / r) ** np.arange(1, p + 1)
        model = VarModel(coeffs * scale[:, None, None], sigma)
    return model


def random_data(rng: np.random.Generator, K: int, p: int, T: int, intercept: bool = False):
    model = random_stable_model(rng, K, p)
    seed = int(rng.integers(2**31))
    return build_regression(simulate(model, T + p, burn_in=50, seed=seed), p, intercept=intercept)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(" C")[1].split()[0])):
            terminalreporter.write_line(line)
