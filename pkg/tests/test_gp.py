import math

import numpy as np
import pytest

from voidsurrogate.gp import (
    NUGGET_FLOOR,
    GpConfig,
    gp_condition,
    gp_fit,
    gp_log_marginal,
    gp_predict,
    gp_sample_hypers,
    se_kernel,
)


def naive_lml(X, y, theta):
    """Direct evaluation with an explicit inverse and determinant."""
    d = X.shape[1]
    ls = np.exp(theta[:d])
    diff = (X[:, None, :] - X[None, :, :]) / ls
    K = math.exp(theta[d]) * np.exp(-0.5 * (diff**2).sum(-1)) + math.exp(theta[d + 1]) * np.eye(len(y))
    _, logdet = np.linalg.slogdet(K)
    return -0.5 * y @ np.linalg.inv(K) @ y - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi)


def fd_grad(f, t, h=1e-5):
    g = np.empty_like(t)
    for i in range(t.size):
        e = np.zeros_like(t)
        e[i] = h
        g[i] = (f(t + e) - f(t - e)) / (2 * h)
    return g


@pytest.fixture
def toy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(25, 3))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] ** 2 + 0.05 * rng.normal(size=25)
    return X, y - y.mean()


def test_value_matches_naive(toy):
    X, y = toy
    theta = np.array([0.1, -0.2, 0.4, 0.3, math.log(1e-2)])
    v, _ = gp_log_marginal(X, y, theta)
    assert v == pytest.approx(naive_lml(X, y, theta), rel=1e-10)


def test_gradient_matches_finite_differences(toy):
    X, y = toy
    rng = np.random.default_rng(1)
    for _ in range(20):
        theta = np.concatenate([rng.uniform(-1, 1.5, 3), [rng.uniform(-1, 1)], [rng.uniform(-6, -1)]])
        _, g = gp_log_marginal(X, y, theta)
        fd = fd_grad(lambda t: gp_log_marginal(X, y, t, with_grad=False)[0], theta)
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)) < 1e-4


def test_identity_kernel_closed_form():
    rng = np.random.default_rng(2)
    X = np.eye(6) * 10.0
    y = rng.normal(size=6)
    # vanishing length-scale decorrelates distinct inputs, s2 + noise = 1
    theta = np.array([math.log(1e-3)] * 6 + [math.log(0.75), math.log(0.25)])
    v, _ = gp_log_marginal(X, y, theta)
    assert v == pytest.approx(-0.5 * y @ y - 3 * math.log(2 * math.pi), rel=1e-12)


def test_linear_function_held_out():
    rng = np.random.default_rng(3)
    w = np.array([1.5, -2.0])
    X = rng.uniform(-1, 1, size=(30, 2))
    Xq = np.array([[0.2, 0.3]])
    model = gp_fit(X, X @ w + 0.7, GpConfig(seed=0))
    pred, _ = gp_predict(model, Xq)
    truth = Xq @ w + 0.7
    assert abs(pred[0, 0] - truth[0]) / abs(truth[0]) < 1e-3


def test_constant_data():
    X = np.array([[0.0], [1.0], [2.0]])
    model = gp_fit(X, np.full(3, 4.2))
    pred, _ = gp_predict(model, np.array([[0.5], [7.0]]))
    np.testing.assert_allclose(pred, 4.2)
    assert model.hypers(0)["noise_var"] == pytest.approx(NUGGET_FLOOR, rel=1e-6)


def test_interpolates_training_points():
    rng = np.random.default_rng(4)
    X = rng.uniform(-2, 2, size=(20, 2))
    Y = np.column_stack([np.sin(X[:, 0]) * np.cos(X[:, 1]), X[:, 0] * X[:, 1]])
    theta = np.tile([0.0, 0.0, 0.0, math.log(NUGGET_FLOOR)], (2, 1))
    model = gp_condition(X, Y, theta)
    pred, _ = gp_predict(model, X)
    assert np.max(np.abs(pred - Y) / np.abs(Y).max(0)) < 1e-6


def test_prior_reversion_far_away(toy):
    X, y = toy
    model = gp_fit(X, y[:, None] * 3.0 + 1.0, GpConfig(restarts=2))
    mean, var = gp_predict(model, np.full((1, 3), 1e4))
    assert mean[0, 0] == pytest.approx(float(model.y_mean[0]), rel=1e-9)
    assert var[0, 0] == pytest.approx(model.hypers(0)["signal_var"] * model.y_std[0] ** 2, rel=1e-9)


def test_variance_nonnegative(toy):
    X, y = toy
    model = gp_fit(X, np.column_stack([y, y**2]), GpConfig(restarts=2))
    Q = np.random.default_rng(5).normal(scale=2.0, size=(1000, 3))
    _, var = gp_predict(model, np.vstack([Q, X]))
    assert np.all(var >= 0)


def test_affine_output_invariance(toy):
    X, y = toy
    cfg = GpConfig(restarts=2)
    m1 = gp_fit(X, y[:, None], cfg)
    m2 = gp_fit(X, 250.0 * y[:, None] - 40.0, cfg)
    Q = np.random.default_rng(6).normal(size=(30, 3))
    p1, _ = gp_predict(m1, Q)
    p2, _ = gp_predict(m2, Q)
    np.testing.assert_allclose((p2 + 40.0) / 250.0, p1, rtol=1e-8, atol=1e-8 * np.abs(p1).max())


def test_fit_beats_every_start(toy):
    X, y = toy
    model = gp_fit(X, np.column_stack([y, np.cos(y)]))
    for lml, starts in zip(model.info["log_marginal"], model.info["start_log_marginal"]):
        assert all(lml >= s for s in starts)


def test_nugget_perturbation_lowers_evidence(toy):
    X, y = toy
    model = gp_fit(X, y)
    theta = model.theta[0].copy()
    best, _ = gp_log_marginal(model.X, model.Y[:, 0], theta, with_grad=False)
    theta[-1] = math.log(5.0)
    worse, _ = gp_log_marginal(model.X, model.Y[:, 0], theta, with_grad=False)
    assert worse < best


def test_kernel_is_symmetric_pd(toy):
    X, _ = toy
    K = se_kernel(X, X, np.array([0.0, 0.3, -0.2, 0.1, -5.0]))
    np.testing.assert_array_equal(K, K.T)
    assert np.linalg.eigvalsh(K + 1e-10 * np.eye(len(X))).min() > 0


def test_duplicate_inputs_need_jitter():
    X = np.array([[0.0], [0.0], [1.0], [2.0]])
    y = np.array([1.0, 1.0, 2.0, 0.5])
    model = gp_condition(X, y, np.array([[0.0, 0.0, math.log(1e-300)]]))
    assert model.jitter[0] > 0
    assert np.all(np.isfinite(gp_predict(model, X)[0]))


def test_zero_samples_is_mle(toy):
    X, y = toy
    model = gp_fit(X, y)
    same = gp_sample_hypers(model, 0)
    Q = np.random.default_rng(7).normal(size=(10, 3))
    np.testing.assert_array_equal(gp_predict(model, Q)[0], gp_predict(same, Q)[0])


def test_sampler_recovers_noise_and_is_seeded():
    rng = np.random.default_rng(8)
    x = np.sort(rng.uniform(-3, 3, size=80))[:, None]
    noise_sd = 0.1
    y = np.sin(2 * x[:, 0]) + noise_sd * rng.normal(size=80)
    cfg = GpConfig(seed=1, mcmc_burn=300, mcmc_thin=4)
    model = gp_fit(x, y, cfg)
    post = gp_sample_hypers(model, 200, cfg)
    noise = np.exp(post.samples[0, :, -1]).mean() * model.y_std[0] ** 2
    assert noise_sd**2 / 2 < noise < 2 * noise_sd**2
    again = gp_sample_hypers(model, 200, cfg)
    np.testing.assert_array_equal(post.samples, again.samples)
    mean, var = gp_predict(post, x[:5])
    assert np.all(var > 0) and np.all(np.isfinite(mean))


def test_predict_rejects_wrong_width(toy):
    X, y = toy
    model = gp_fit(X, y, GpConfig(restarts=1))
    with pytest.raises(ValueError):
        gp_predict(model, np.zeros((2, 4)))
