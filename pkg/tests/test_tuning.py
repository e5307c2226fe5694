import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_data
from ridgevar.estimators import PenaltyMatrix, ls_fit, minnesota_posterior_mean
from ridgevar.tuning import (
    CrossValidator,
    CvPlan,
    PatternSearchConfig,
    PenaltySearchSpace,
    augmented_posterior_mean,
    cv_loss,
    cv_splits,
    minnesota_dummy_fit,
    minnesota_tightness_cv,
    pattern_search,
    select_penalty,
)
from ridgevar.var_core import RegressionData, VarModel, build_regression, benchmark_var2, simulate


def iso_builder(K, p):
    return lambda lam: PenaltyMatrix.isotropic(float(np.ravel(lam)[0]), K, p)


def noiseless_data(rng, K=2, p=1, T=80):
    Z = rng.normal(size=(K * p, T))
    B = rng.normal(scale=0.3, size=(K, K * p))
    return RegressionData(Y=B @ Z, Z=Z, p=p)


# ---------------------------------------------------------------------------
# plans and folds


def test_plan_validation():
    with pytest.raises(ValueError):
        CvPlan("kfold")
    with pytest.raises(ValueError):
        CvPlan("block_cv", folds=0)
    with pytest.raises(ValueError):
        CvPlan("out_of_sample", os_split=1.0)


@given(
    st.integers(30, 300),
    st.integers(2, 8),
    st.sampled_from(["block_cv", "block_nondep_cv"]),
    st.integers(1, 4),
    st.one_of(st.none(), st.integers(0, 5)),
)
def test_fold_partition_invariants(T, folds, scheme, p, gap):
    plan = CvPlan(scheme, folds=folds, gap=gap)
    splits = cv_splits(T, plan, p)
    held = np.concatenate([te for _, te in splits])
    np.testing.assert_array_equal(np.sort(held), np.arange(T))  # each column held out exactly once
    g = (p if gap is None else gap) if scheme == "block_nondep_cv" else 0
    for train, test in splits:
        assert np.intersect1d(train, test).size == 0
        assert np.all(np.diff(test) == 1)
        a, b = test[0], test[-1] + 1
        assert not np.any((train >= a - g) & (train < b + g))
        if scheme == "block_nondep_cv" and gap is None:
            # training regressors y_{t-1..t-p} never include a held-out target and vice versa
            for t in train:
                assert not np.any((t - np.arange(1, p + 1) >= a) & (t - np.arange(1, p + 1) < b))
                assert not np.any((test - t >= 1) & (test - t <= p))


def test_out_of_sample_split():
    (train, test), = cv_splits(100, CvPlan("out_of_sample", os_split=0.8), 2)
    np.testing.assert_array_equal(train, np.arange(80))
    np.testing.assert_array_equal(test, np.arange(80, 100))


def test_single_fold_reduces_to_out_of_sample(rng):
    data = random_data(rng, 2, 2, 120)
    b = iso_builder(2, 2)
    assert cv_loss(data, b, [3.0], CvPlan("block_cv", folds=1)) == cv_loss(data, b, [3.0], CvPlan("out_of_sample"))


def test_fold_too_small(rng):
    data = random_data(rng, 3, 4, 20)
    with pytest.raises(ValueError, match="fold too small"):
        CrossValidator(data, CvPlan("block_nondep_cv"))


def test_singular_system_gives_infinite_loss():
    y = np.tile(np.arange(1.0, 61.0), (2, 1))
    data = build_regression(y, 1)
    assert cv_loss(data, iso_builder(2, 1), [0.0], CvPlan("block_cv")) == np.inf


def test_loss_is_deterministic(rng):
    data = random_data(rng, 2, 2, 100)
    plan = CvPlan("block_nondep_cv")
    assert cv_loss(data, iso_builder(2, 2), [5.0], plan) == cv_loss(data, iso_builder(2, 2), [5.0], plan)


def test_inverse_variance_weighting_changes_scale(rng):
    data = random_data(rng, 2, 1, 120)
    eq = CrossValidator(data, CvPlan("block_cv")).loss_diag(np.zeros(4))
    iv = CrossValidator(data, CvPlan("block_cv", weighting="inverse_variance")).loss_diag(np.zeros(4))
    assert eq != iv and iv > 0


def test_noiseless_loss_grows_with_penalty(rng):
    data = noiseless_data(rng)
    plan = CvPlan("block_cv")
    losses = [cv_loss(data, iso_builder(2, 1), [lam], plan) for lam in (0.0, 0.1, 1.0, 10.0, 100.0)]
    assert losses[0] < 1e-20
    assert np.all(np.diff(losses) >= 0)


@pytest.mark.slow
def test_white_noise_prefers_heavy_penalty():
    m = VarModel(np.zeros((1, 2, 2)), np.eye(2))
    plan = CvPlan("block_nondep_cv")
    diffs = []
    for s in range(200):
        data = build_regression(simulate(m, 101, seed=s), 1, intercept=True)
        cv = CrossValidator(data, plan)
        diffs.append(cv.loss_diag(np.full(4, data.T * 1e2)) - cv.loss_diag(np.zeros(4)))
    assert np.median(diffs) <= 0


# ---------------------------------------------------------------------------
# search space and optimizer


def test_search_space_expand_and_validation():
    space = PenaltySearchSpace(6, 2, 100.0, extrapolate_tail=True)
    np.testing.assert_array_equal(space.expand([1.0, 7.0]), [1, 7, 7, 7, 7, 7])
    zl = PenaltySearchSpace(4, 1, 100.0, extrapolate_tail=True, zero_lags=2)
    np.testing.assert_array_equal(zl.expand([3.0]), [0, 0, 3, 3])
    with pytest.raises(ValueError):
        PenaltySearchSpace(6, 2, 100.0)
    with pytest.raises(ValueError):
        PenaltySearchSpace(2, 3, 100.0, extrapolate_tail=True)
    data = build_regression(np.random.default_rng(0).normal(size=(2, 52)), 2)
    assert PenaltySearchSpace.for_data(data).upper_bound == 50 * 100


def test_pattern_search_minimizes_quadratic():
    target = np.array([3.0, 40.0])
    res = pattern_search(lambda x: float(np.sum((x - target) ** 2)), np.zeros(2), np.full(2, 100.0), np.full(2, 10.0))
    np.testing.assert_allclose(res.x, target, atol=0.2)
    for x, _ in res.trace:
        assert np.all(x >= 0) and np.all(x <= 100)


def test_pattern_search_respects_budget():
    res = pattern_search(lambda x: float(x @ x), -np.ones(3), np.ones(3), np.full(3, 0.5), PatternSearchConfig(max_evals=7))
    assert res.n_evals <= 7


def test_select_noiseless_one_dim(rng):
    data = noiseless_data(rng, K=2, p=1)
    sel = select_penalty(data, PenaltySearchSpace.for_data(data), CvPlan("block_cv"))
    assert sel.loss - sel.loss_at_zero < 1e-6


def test_select_extrapolated_tail(rng):
    data = random_data(rng, 2, 6, 200)
    space = PenaltySearchSpace.for_data(data, n_params=2, extrapolate_tail=True)
    sel = select_penalty(data, space, CvPlan("block_nondep_cv"))
    assert np.all(sel.lambdas[2:] == sel.lambdas[1])


def test_select_contract_on_random_data():
    for s in range(20):
        data = random_data(np.random.default_rng(s), 2, 2, 120, intercept=True)
        space = PenaltySearchSpace.for_data(data)
        plan = CvPlan("block_nondep_cv")
        sel = select_penalty(data, space, plan, seed=s)
        assert np.all(sel.x >= 0) and np.all(sel.x <= space.upper_bound)
        assert sel.loss <= sel.loss_at_zero
        assert sel.loss <= min(f for _, f in sel.trace)
        again = select_penalty(data, space, plan, seed=s)
        np.testing.assert_array_equal(again.lambdas, sel.lambdas)


@pytest.mark.slow
def test_zero_tail_lags_get_heavier_penalties():
    base = benchmark_var2(0.9)
    m = VarModel(np.concatenate([base.coeffs, np.zeros((4, 2, 2))]), base.sigma_u)
    lams = []
    for s in range(100):
        data = build_regression(simulate(m, 206, seed=s), 6, intercept=True)
        lams.append(select_penalty(data, PenaltySearchSpace.for_data(data), CvPlan("block_nondep_cv"), seed=s).lambdas)
    med = np.median(lams, axis=0)
    assert np.all(med[2:] > med[0])


# ---------------------------------------------------------------------------
# Minnesota tightness


def test_augmentation_equals_direct_posterior_mean(rng):
    for _ in range(10):
        K, p = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        data = random_data(rng, K, p, 60 + 10 * K * p, intercept=bool(rng.integers(2)))
        sig = ls_fit(data).sigma_hat
        lam, theta = float(rng.uniform(0.05, 2)), float(rng.uniform(0.1, 1))
        direct = minnesota_posterior_mean(data, sig, lam, theta).beta_hat
        np.testing.assert_allclose(augmented_posterior_mean(data, sig, lam, theta), direct, atol=1e-8)
    assert minnesota_dummy_fit(data, sig, lam, theta).method == "minnesota-dummy"


def test_flat_tightness_equals_ls_loss(rng):
    data = random_data(rng, 2, 2, 150, intercept=True)
    plan = CvPlan("block_nondep_cv")
    sel = minnesota_tightness_cv(data, grid=[0.1, np.inf], plan=plan)
    assert sel.losses[-1] == pytest.approx(CrossValidator(data, plan).loss_diag(np.zeros(8)), rel=1e-10)


@pytest.mark.slow
def test_white_noise_selects_tight_prior():
    m = VarModel(np.zeros((1, 2, 2)), np.eye(2))
    grid = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0, np.inf)
    picks = []
    for s in range(100):
        data = build_regression(simulate(m, 102, seed=s), 2, intercept=True)
        picks.append(minnesota_tightness_cv(data, grid=grid).lam)
    assert np.median(picks) <= 0.1
