import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import coc.models as models
from coc.errors import ConvergenceError, ValidationError
from coc.models import (
    Dataset,
    GlmFitter,
    RobustLoss,
    fit_glm,
    fit_robust,
    fit_ustat,
    glm_objective,
    glm_score,
    load_dataset,
    ustat_parts,
)

from conftest import logistic_data


def test_logistic_intercept_only_symmetric():
    X = np.ones((10, 1))
    y = np.array([0, 1] * 5, dtype=float)
    s, diag = fit_glm(Dataset(X, y), "logistic")
    assert abs(s.theta[0]) < 1e-12
    np.testing.assert_allclose(s.V, [[0.25]])
    assert diag.score_norm < 1e-8


def test_poisson_intercept_only_log_mean():
    y = np.array([0, 1, 2, 3, 4, 5, 1, 2], dtype=float)
    s, _ = fit_glm(Dataset(np.ones((8, 1)), y), "poisson")
    assert s.theta[0] == pytest.approx(np.log(y.mean()), abs=1e-10)


def test_information_equality_large_n():
    rng = np.random.default_rng(1)
    s, _ = fit_glm(logistic_data(rng, 10_000, [0.3, -0.6, 0.9]), "logistic")
    assert np.linalg.norm(s.V - s.Q) / np.linalg.norm(s.V) <= 0.1


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    data = logistic_data(rng, 300, [0.1, 0.5, -0.4])
    h = 1e-6
    for _ in range(5):
        theta = rng.standard_normal(3)
        fd = np.array([
            (glm_objective(theta + h * e, data.X, data.y, "logistic")
             - glm_objective(theta - h * e, data.X, data.y, "logistic")) / (2 * h)
            for e in np.eye(3)
        ])
        grad = -glm_score(theta, data.X, data.y, "logistic")
        assert np.linalg.norm(fd - grad) / np.linalg.norm(grad) < 1e-5


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), family=st.sampled_from(["logistic", "poisson"]))
def test_score_residual_and_valid_summary(seed, family):
    rng = np.random.default_rng(seed)
    n = 400
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    eta = X @ np.array([0.2, 0.3, -0.3])
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float) if family == "logistic" else rng.poisson(np.exp(eta))
    s, _ = fit_glm(Dataset(X, y), family)
    assert np.linalg.norm(glm_score(s.theta, X, y.astype(float), family)) < 1e-8
    assert np.linalg.eigvalsh(s.V).min() > 0 and np.linalg.eigvalsh(s.Q).min() > -1e-12


def test_separation_warning():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(50), rng.standard_normal(50)])
    y = (X[:, 1] > 0).astype(float)
    try:
        _, diag = fit_glm(Dataset(X, y), "logistic")
    except ConvergenceError:
        return
    assert any("separation" in w for w in diag.warnings)


def test_non_convergence_reports_score(monkeypatch):
    monkeypatch.setattr(models, "MAX_ITER", 1)
    rng = np.random.default_rng(3)
    with pytest.raises(ConvergenceError) as err:
        fit_glm(logistic_data(rng, 500, [1.0, 2.0, -1.0]), "logistic")
    assert err.value.score_norm is not None and err.value.score_norm > 0


def test_glm_input_checks():
    with pytest.raises(ValidationError):
        fit_glm(Dataset(np.ones((3, 3)), np.zeros(3)), "logistic")
    with pytest.raises(ValidationError):
        fit_glm(Dataset(np.column_stack([np.ones(10), np.ones(10)]), np.zeros(10)), "logistic")
    with pytest.raises(ValidationError):
        fit_glm(Dataset(np.ones((5, 1)), np.full(5, 2.0)), "logistic")
    with pytest.raises(ValidationError):
        GlmFitter("gamma")


def test_huber_psi_values():
    loss = RobustLoss("huber", 1.345)
    np.testing.assert_allclose(loss.psi([0.5, 3.0, -3.0]), [0.5, 1.345, -1.345])
    np.testing.assert_allclose(loss.dpsi([1.345, -1.345, 2.0]), [1.0, 1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(t=st.floats(-1e6, 1e6), delta=st.floats(0.1, 10))
def test_bounded_scores(t, delta):
    for kind in ("pseudo_huber", "log_cosh"):
        loss = RobustLoss(kind, delta)
        assert abs(loss.psi(t)) < delta or abs(loss.psi(t)) == pytest.approx(delta)
        assert 0 <= loss.dpsi(t) <= 1


@pytest.mark.parametrize("kind", ["huber", "pseudo_huber", "log_cosh"])
def test_psi_is_derivative_of_rho(kind):
    loss = RobustLoss(kind, 1.2)
    t = np.array([-3.0, -0.7, 0.2, 1.1, 4.0])
    h = 1e-6
    np.testing.assert_allclose((loss.rho(t + h) - loss.rho(t - h)) / (2 * h), loss.psi(t), atol=1e-6)


@pytest.mark.parametrize("kind", ["huber", "pseudo_huber", "log_cosh"])
def test_huge_delta_gives_ols(kind):
    rng = np.random.default_rng(4)
    n = 200
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.standard_normal(n)
    s = fit_robust(Dataset(X, y), RobustLoss(kind, 1e6))
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(s.theta, ols, atol=1e-6)


def test_robust_resists_outliers():
    rng = np.random.default_rng(5)
    n = 300
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    y = X @ np.array([0.5, 1.0]) + 0.3 * rng.standard_normal(n)
    y[:15] += 50
    s = fit_robust(Dataset(X, y), RobustLoss("huber"))
    assert np.abs(s.theta - [0.5, 1.0]).max() < 0.15
    r = y - X @ s.theta
    loss = RobustLoss("huber")
    assert np.linalg.norm(X.T @ loss.psi(r) / n) < 1e-8


def test_robust_loss_validation():
    with pytest.raises(ValidationError):
        RobustLoss("tukey")
    with pytest.raises(ValidationError):
        RobustLoss("huber", 0.0)


def test_ustat_mean_kernel():
    s = fit_ustat(np.array([1.0, 2.0, 3.0]), lambda x, y: (x + y) / 2)
    assert s.theta[0] == pytest.approx(2.0)
    assert s.Q[0, 0] == 1.0 and s.V.shape == (1, 1)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 200), seed=st.integers(0, 2**31))
def test_ustat_brute_force_and_projection_mean(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)

    def kern(a, b):
        return np.abs(a - b) + a * b

    theta, nu = ustat_parts(x, kern)
    brute = sum(kern(x[i], x[j]) for i in range(n) for j in range(i + 1, n)) / (n * (n - 1) / 2)
    assert theta == pytest.approx(brute, abs=1e-12 * max(1.0, abs(brute)))
    assert nu.mean() == pytest.approx(theta, abs=1e-12 * max(1.0, abs(theta)))


def test_ustat_scalar_fallback_and_rows():
    x = np.arange(8, dtype=float).reshape(4, 2)
    theta, _ = ustat_parts(x, lambda a, b: float(np.dot(a, b)))
    brute = np.mean([x[i] @ x[j] for i in range(4) for j in range(i + 1, 4)])
    assert theta == pytest.approx(brute)


def test_ustat_variance_and_calibration():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(400)
    kern = (lambda a, b: (a + b) / 2)
    theta, nu = ustat_parts(x, kern)
    root = np.sqrt(4 / 400 * np.sum((nu - theta) ** 2))
    plain = fit_ustat(x, kern)
    assert plain.V[0, 0] == pytest.approx(root)
    cal = fit_ustat(x, kern, calibrated=True)
    # sandwich equals the asymptotic variance of sqrt(n)(theta - theta0), here var(x) = 1
    assert cal.sandwich[0, 0] == pytest.approx(root**2)
    assert cal.sandwich[0, 0] == pytest.approx(1.0, abs=0.2)


def test_ustat_degenerate_and_small():
    with pytest.raises(ValidationError):
        fit_ustat(np.full(5, 2.0), lambda a, b: a * b)
    with pytest.raises(ValidationError):
        fit_ustat(np.array([1.0]), lambda a, b: a * b)


def test_dataset_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,y,x2\n1,0,2\n3,1,4\n")
    d = load_dataset(path, intercept=True)
    np.testing.assert_array_equal(d.X, [[1, 1, 2], [1, 3, 4]])
    np.testing.assert_array_equal(d.y, [0, 1])
    with pytest.raises(ValidationError):
        load_dataset(path, response="z")


def test_dataset_validation():
    with pytest.raises(ValidationError):
        Dataset(np.ones((3, 2)), np.ones(4))
    with pytest.raises(ValidationError):
        Dataset(np.ones((2, 1)), np.array([1.0, np.nan]))
