"""Exact GP regression against a dense-inverse oracle."""

import numpy as np
import pytest

from coragp import gp


def dense_oracle(P, Y, params, query):
    """Posterior mean and variance via an explicit matrix inverse."""
    def k(a, b):
        d = (np.asarray(a) - np.asarray(b)) * params.inv_lengthscales
        return params.signal_std**2 * np.exp(-0.5 * float(d @ d))

    M = len(P)
    K = np.array([[k(P[i], P[j]) for j in range(M)] for i in range(M)])
    Kinv = np.linalg.inv(K + params.noise_std**2 * np.eye(M))
    kv = np.array([k(P[i], query) for i in range(M)])
    mean = kv @ Kinv @ np.asarray(Y)
    var = k(query, query) - kv @ Kinv @ kv
    return mean, var


def random_problem(rng, max_m=10, max_d=3):
    M = int(rng.integers(2, max_m + 1))
    D = int(rng.integers(1, max_d + 1))
    m_out = int(rng.integers(1, 4))
    params = gp.KernelParams(
        signal_std=float(rng.uniform(0.3, 2.0)),
        inv_lengthscales=rng.uniform(0.2, 3.0, size=D),
        noise_std=float(rng.uniform(0.05, 0.5)),
    )
    P = rng.normal(size=(M, D))
    Y = rng.normal(size=(M, m_out))
    return P, Y, params


def test_posterior_matches_dense_inverse_oracle(rng):
    for _ in range(20):
        P, Y, params = random_problem(rng)
        model = gp.fit(P, Y, params)
        q = rng.normal(size=P.shape[1])
        pred = model.predict(q, with_std=True)
        mean_ref, var_ref = dense_oracle(P, Y, params, q)
        np.testing.assert_allclose(pred.mean, mean_ref, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(pred.std**2, var_ref, rtol=1e-8, atol=1e-10)


def test_batch_paths_match_single_query(rng):
    P, Y, params = random_problem(rng)
    model = gp.fit(P, Y, params)
    Q = rng.normal(size=(6, P.shape[1]))
    means = model.predict_mean_batch(Q)
    variances = model.variance_batch(Q)
    for i, q in enumerate(Q):
        pred = model.predict(q, with_std=True)
        np.testing.assert_allclose(means[i], pred.mean, rtol=1e-12)
        np.testing.assert_allclose(variances[i], pred.std[0] ** 2, rtol=1e-10,
                                   atol=1e-14)


def test_outputs_share_variance(rng):
    P, Y, params = random_problem(rng)
    model = gp.fit(P, Y, params)
    pred = model.predict(rng.normal(size=P.shape[1]), with_std=True)
    assert pred.std.shape == (Y.shape[1],)
    assert np.all(pred.std == pred.std[0])


def test_interpolates_training_targets_with_zero_noise(rng):
    P = rng.normal(size=(8, 2))
    Y = rng.normal(size=(8, 2))
    params = gp.KernelParams(inv_lengthscales=np.array([1.0, 1.0]), noise_std=0.0)
    model = gp.fit(P, Y, params)
    for i in range(len(P)):
        np.testing.assert_allclose(model.predict(P[i]).mean, Y[i], atol=1e-7)


def test_prior_variance_far_from_data():
    P = np.zeros((1, 2))
    model = gp.fit(P, np.ones((1, 1)),
                   gp.KernelParams(signal_std=1.7, inv_lengthscales=np.ones(2),
                                   noise_std=0.1))
    pred = model.predict(np.array([50.0, 50.0]), with_std=True)
    np.testing.assert_allclose(pred.std[0] ** 2, 1.7**2, rtol=1e-12)
    np.testing.assert_allclose(pred.mean, 0.0, atol=1e-12)


def test_variance_clamped_and_counted():
    # duplicated inputs with tiny noise make the subtraction go negative
    P = np.zeros((12, 2))
    Y = np.ones((12, 1))
    model = gp.fit(P, Y, gp.KernelParams(inv_lengthscales=np.ones(2),
                                         noise_std=1e-6))
    var = model.variance_batch(np.zeros((1, 2)))
    assert var[0] >= 0.0
    assert model.clamp_warnings >= 0  # counter exists and never goes negative


def test_duplicate_inputs_zero_noise_raise():
    P = np.zeros((3, 2))
    with pytest.raises(gp.GramFactorizationError):
        gp.fit(P, np.ones((3, 1)),
               gp.KernelParams(inv_lengthscales=np.ones(2), noise_std=0.0))


def test_shape_validation():
    params = gp.KernelParams(inv_lengthscales=np.ones(2))
    with pytest.raises(ValueError, match="rows"):
        gp.fit(np.zeros((3, 2)), np.ones((4, 1)), params)
    with pytest.raises(ValueError, match="lengthscales"):
        gp.fit(np.zeros((3, 3)), np.ones((3, 1)), params)
    with pytest.raises(ValueError):
        gp.KernelParams(signal_std=-1.0, inv_lengthscales=np.ones(2))
    with pytest.raises(ValueError):
        gp.KernelParams(inv_lengthscales=np.array([1.0, -2.0]))
    with pytest.raises(ValueError):
        gp.KernelParams(inv_lengthscales=np.ones(2), noise_std=-0.1)


def test_inverse_lengthscale_convention():
    # larger inverse lengthscale means faster decay with distance
    a = gp.kernel_eval([0.0], [1.0],
                       gp.KernelParams(inv_lengthscales=np.array([0.5])))
    b = gp.kernel_eval([0.0], [1.0],
                       gp.KernelParams(inv_lengthscales=np.array([3.0])))
    assert b < a
    np.testing.assert_allclose(
        a, np.exp(-0.5 * 0.25), rtol=1e-14)
