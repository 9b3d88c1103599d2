import math

import numpy as np
import pytest

from hilbo.gp import (
    Bounds,
    Dataset,
    FitConfig,
    GpHyperparams,
    fit_gp,
    kernel_matrix,
    log_marginal_likelihood,
    matern52,
    posterior,
    posterior_batch,
)

# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def matern52_oracle(d, ell, sf2):
    # direct transcription of the closed form, kept separate from the library
    a = math.sqrt(5.0) * d / ell
    return sf2 * (1.0 + a + a * a / 3.0) * math.exp(-a)


def kernel_matrix_oracle(X, hp):
    t = len(X)
    K = np.empty((t, t))
    for i in range(t):
        for j in range(t):
            K[i, j] = matern52_oracle(np.linalg.norm(X[i] - X[j]), hp.lengthscale,
                                      hp.signal_variance)
    return K


def posterior_oracle(X, y, hp, q):
    """Textbook GP predictive mean/std via dense solves (no Cholesky cache)."""
    m0 = y.mean()
    K = kernel_matrix_oracle(X, hp) + hp.noise_variance * np.eye(len(X))
    kq = np.array([matern52_oracle(np.linalg.norm(x - q), hp.lengthscale,
                                   hp.signal_variance) for x in X])
    sol = np.linalg.solve(K, y - m0)
    mean = m0 + kq @ sol
    var = hp.signal_variance - kq @ np.linalg.solve(K, kq)
    return mean, math.sqrt(max(var, 0.0))


def lml_fd_gradient(data, hp, h=1e-5):
    """Central finite differences in (log ell, log sf2, log sn2)."""
    logs = np.log([hp.lengthscale, hp.signal_variance, hp.noise_variance])
    grad = np.empty(3)
    for i in range(3):
        for sign in (+1, -1):
            p = logs.copy()
            p[i] += sign * h
            val, _ = log_marginal_likelihood(
                data, GpHyperparams(math.exp(p[0]), math.exp(p[1]), math.exp(p[2]))
            )
            if sign > 0:
                grad[i] = val
            else:
                grad[i] = (grad[i] - val) / (2 * h)
    return grad


def random_dataset(rng, t, dim=1, lo=0.0, hi=10.0):
    bounds = Bounds(np.full(dim, lo), np.full(dim, hi))
    X = rng.uniform(lo, hi, size=(t, dim))
    y = rng.normal(size=t)
    return Dataset(X, y, bounds)


HP = GpHyperparams(lengthscale=0.8, signal_variance=1.5, noise_variance=0.05)


# ---------------------------------------------------------------------------
# matern52
# ---------------------------------------------------------------------------


def test_matern52_zero_distance_equals_signal_variance():
    assert matern52(0.0, HP) == HP.signal_variance


def test_matern52_monotone_decreasing_towards_zero():
    ds = np.linspace(0, 50, 400)
    vals = [matern52(d, HP) for d in ds]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-12
    assert all(v > 0 for v in vals)


def test_matern52_matches_high_precision_closed_form():
    # (1 + sqrt5 + 5/3) * exp(-sqrt5) evaluated with 50-digit Decimal arithmetic
    hp = GpHyperparams(1.0, 1.0, 0.0)
    assert abs(matern52(1.0, hp) - 0.5239941088318203) < 1e-12


def test_matern52_rejects_negative_distance():
    with pytest.raises(ValueError):
        matern52(-0.1, HP)


# ---------------------------------------------------------------------------
# kernel_matrix
# ---------------------------------------------------------------------------


def test_kernel_matrix_single_point():
    K = kernel_matrix([[3.0, 4.0]], HP)
    assert K.shape == (1, 1)
    assert K[0, 0] == HP.signal_variance


def test_kernel_matrix_duplicate_rows_singular():
    X = np.array([[1.0], [1.0], [4.0]])
    K = kernel_matrix(X, HP)
    assert abs(np.linalg.det(K)) < 1e-10


def test_kernel_matrix_matches_brute_force():
    rng = np.random.default_rng(7)
    X = rng.uniform(-2, 2, size=(5, 3))
    K = kernel_matrix(X, HP)
    assert np.abs(K - kernel_matrix_oracle(X, HP)).max() < 1e-12


def test_kernel_matrix_symmetric_and_psd_after_jitter():
    for seed in range(5):
        X = np.random.default_rng(seed).uniform(0, 10, size=(12, 2))
        K = kernel_matrix(X, HP)
        assert np.abs(K - K.T).max() < 1e-12
        L = np.linalg.cholesky(K + 1e-8 * np.eye(12))
        assert np.all(np.diag(L) > 0)


def test_kernel_matrix_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_matrix([[1.0, 2.0], [3.0]], HP)


# ---------------------------------------------------------------------------
# log marginal likelihood
# ---------------------------------------------------------------------------


def test_lml_single_centered_point():
    bounds = Bounds([0.0], [10.0])
    data = Dataset([[4.0]], [2.5], bounds)
    value, _ = log_marginal_likelihood(data, HP)
    expected = -0.5 * math.log(
        2 * math.pi * (HP.signal_variance + HP.noise_variance)
    )
    assert abs(value - expected) < 1e-12


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    data = random_dataset(rng, 6, dim=2)
    _, grad = log_marginal_likelihood(data, HP)
    fd = lml_fd_gradient(data, HP)
    assert np.allclose(grad, fd, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("seed", range(50))
def test_lml_gradient_fd_property(seed):
    rng = np.random.default_rng(seed)
    t = int(rng.integers(2, 9))
    dim = int(rng.integers(1, 4))
    data = random_dataset(rng, t, dim=dim)
    hp = GpHyperparams(
        lengthscale=float(rng.uniform(0.3, 3.0)),
        signal_variance=float(rng.uniform(0.2, 4.0)),
        noise_variance=float(rng.uniform(0.01, 0.5)),
    )
    _, grad = log_marginal_likelihood(data, hp)
    fd = lml_fd_gradient(data, hp)
    assert np.allclose(grad, fd, rtol=1e-4, atol=1e-6)


def test_lml_scaling_y_leaves_argmax_lengthscale_unchanged():
    # With free signal variance the profile in log-space shifts, so the
    # optimal lengthscale should not move when y is rescaled.
    rng = np.random.default_rng(5)
    bounds = Bounds([0.0], [10.0])
    X = rng.uniform(0, 10, size=(12, 1))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=12)
    cfg = FitConfig(seed=123)
    m1 = fit_gp(Dataset(X, y, bounds), cfg)
    m2 = fit_gp(Dataset(X, 3.7 * y, bounds), cfg)
    assert np.isclose(
        m1.hyperparams.lengthscale, m2.hyperparams.lengthscale, rtol=0.05
    )


# ---------------------------------------------------------------------------
# fit_gp
# ---------------------------------------------------------------------------


def make_gp_sample(rng, t, ell, lo=0.0, hi=5.0):
    X = np.sort(rng.uniform(lo, hi, size=(t, 1)), axis=0)
    K = kernel_matrix_oracle(X, GpHyperparams(ell, 1.0, 0.0))
    L = np.linalg.cholesky(K + 1e-10 * np.eye(t))
    return X, L @ rng.normal(size=t)


def test_fit_recovers_lengthscale_within_factor_two():
    rng = np.random.default_rng(17)
    X, y = make_gp_sample(rng, 30, ell=0.5)
    data = Dataset(X, y, Bounds([0.0], [5.0]))
    model = fit_gp(data, FitConfig(seed=1))
    assert 0.25 <= model.hyperparams.lengthscale <= 1.0


def test_fit_duplicate_x_contradicting_y_needs_noise():
    bounds = Bounds([0.0], [10.0])
    data = Dataset([[2.0], [2.0], [7.0]], [0.0, 1.0, 0.3], bounds)
    model = fit_gp(data, FitConfig(seed=2))
    assert model.hyperparams.noise_variance > 1e-4


def test_fit_two_points_interpolates():
    bounds = Bounds([0.0], [10.0])
    data = Dataset([[2.0], [8.0]], [1.0, -1.0], bounds)
    model = fit_gp(data, FitConfig(seed=1))
    for x, y in zip(data.points, data.values):
        mean, _ = posterior(model, x)
        assert abs(mean - y) < 1e-6


def test_fit_single_point_prior_dominated():
    bounds = Bounds([0.0], [10.0])
    data = Dataset([[5.0]], [2.0], bounds)
    model = fit_gp(data, FitConfig(seed=4))
    mean, std = posterior(model, [5.0])
    assert abs(mean - 2.0) < 1e-4
    far_mean, far_std = posterior(model, [0.0])
    assert abs(far_mean - 2.0) < 0.2  # mean offset is the single y
    assert far_std > 0.5


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------


def noiseless_model(rng, t=5, dim=1):
    bounds = Bounds(np.zeros(dim), np.full(dim, 10.0))
    X = rng.uniform(0, 10, size=(t, dim))
    y = rng.normal(size=t)
    data = Dataset(X, y, bounds)
    hp = GpHyperparams(1.2, 1.0, 0.0)
    # bypass fitting: build the model at fixed hyperparameters
    from hilbo.gp import _finalize_model

    return data, hp, _finalize_model(data, hp, float("nan"))


def test_posterior_interpolates_training_points():
    rng = np.random.default_rng(23)
    data, hp, model = noiseless_model(rng)
    for x, y in zip(data.points, data.values):
        mean, std = posterior(model, x)
        assert abs(mean - y) < 1e-6
        assert std <= 1e-4


def test_posterior_reverts_to_prior_far_away():
    rng = np.random.default_rng(29)
    bounds = Bounds([0.0], [1000.0])
    data = Dataset([[1.0], [2.0]], [3.0, 5.0], bounds)
    hp = GpHyperparams(1.0, 2.0, 0.0)
    from hilbo.gp import _finalize_model

    model = _finalize_model(data, hp, float("nan"))
    mean, std = posterior(model, [900.0])
    assert abs(mean - data.values.mean()) < 1e-9
    assert abs(std - math.sqrt(2.0)) < 1e-9


def test_posterior_matches_textbook_oracle():
    rng = np.random.default_rng(31)
    bounds = Bounds([0.0], [10.0])
    X = rng.uniform(0, 10, size=(5, 1))
    y = rng.normal(size=5)
    hp = GpHyperparams(1.5, 0.8, 0.02)
    from hilbo.gp import _finalize_model

    model = _finalize_model(Dataset(X, y, bounds), hp, float("nan"))
    for q in np.linspace(0, 10, 11):
        mean, std = posterior(model, [q])
        om, os_ = posterior_oracle(X, y, hp, np.array([q]))
        assert abs(mean - om) < 1e-8
        assert abs(std - os_) < 1e-8


@pytest.mark.parametrize("seed", range(20))
def test_posterior_oracle_property(seed):
    rng = np.random.default_rng(1000 + seed)
    dim = int(rng.integers(1, 3))
    bounds = Bounds(np.zeros(dim), np.full(dim, 10.0))
    t = int(rng.integers(2, 9))
    X = rng.uniform(0, 10, size=(t, dim))
    y = rng.normal(size=t)
    hp = GpHyperparams(
        float(rng.uniform(0.5, 3.0)),
        float(rng.uniform(0.2, 3.0)),
        float(rng.uniform(0.001, 0.3)),
    )
    from hilbo.gp import _finalize_model

    model = _finalize_model(Dataset(X, y, bounds), hp, float("nan"))
    Q = rng.uniform(0, 10, size=(6, dim))
    means, stds = posterior_batch(model, Q)
    for q, m, s in zip(Q, means, stds):
        om, os_ = posterior_oracle(X, y, hp, q)
        assert abs(m - om) < 1e-8
        assert abs(s - os_) < 1e-8


def test_posterior_dimension_mismatch():
    rng = np.random.default_rng(37)
    _, _, model = noiseless_model(rng, dim=2)
    with pytest.raises(ValueError):
        posterior(model, [1.0])


def test_posterior_std_never_exceeds_prior():
    rng = np.random.default_rng(41)
    for seed in range(10):
        r = np.random.default_rng(seed)
        bounds = Bounds([0.0], [10.0])
        X = r.uniform(0, 10, size=(6, 1))
        y = r.normal(size=6)
        hp = GpHyperparams(
            float(r.uniform(0.3, 3.0)),
            float(r.uniform(0.2, 3.0)),
            float(r.uniform(0.0, 0.3)),
        )
        from hilbo.gp import _finalize_model

        model = _finalize_model(Dataset(X, y, bounds), hp, float("nan"))
        cap = math.sqrt(hp.signal_variance + hp.noise_variance) + 1e-8
        _, stds = posterior_batch(model, rng.uniform(0, 10, size=(50, 1)))
        assert np.all(stds <= cap)


def test_added_noiseless_observation_never_increases_variance():
    from hilbo.gp import _finalize_model

    for seed in range(8):
        rng = np.random.default_rng(seed)
        bounds = Bounds([0.0], [10.0])
        X = rng.uniform(0, 10, size=(5, 1))
        y = rng.normal(size=5)
        hp = GpHyperparams(1.0, 1.0, 0.0)
        base = _finalize_model(Dataset(X, y, bounds), hp, float("nan"))
        grown_data = Dataset(X, y, bounds).append(rng.uniform(0, 10, size=1), 0.0)
        grown = _finalize_model(grown_data, hp, float("nan"))
        Q = rng.uniform(0, 10, size=(40, 1))
        _, s_before = posterior_batch(base, Q)
        _, s_after = posterior_batch(grown, Q)
        assert np.all(s_after <= s_before + 1e-8)


# ---------------------------------------------------------------------------
# type validation
# ---------------------------------------------------------------------------


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds([1.0], [1.0])
    with pytest.raises(ValueError):
        Bounds([0.0, 0.0], [1.0])


def test_dataset_rejects_out_of_bounds_points():
    with pytest.raises(ValueError):
        Dataset([[11.0]], [0.0], Bounds([0.0], [10.0]))


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        GpHyperparams(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        GpHyperparams(1.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        GpHyperparams(1.0, 1.0, -1e-9)
