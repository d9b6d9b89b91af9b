import io

import numpy as np
import pytest

from lifelong_dp.exceptions import ShapeError, UsageError
from lifelong_dp.model import (ModelParams, ModelShape, NoiseBundle, checkpoint_bytes,
                               clip_theta1_columns, encode, forward, grad_L, grad_R, init_params,
                               joint_gradient, load_checkpoint, noisy_code,
                               objective_L_perturbed, objective_L_polynomial,
                               objective_R_perturbed, objective_R_polynomial,
                               per_example_gradients, perturb_dataset, predict, save_checkpoint,
                               softmax)


def random_instance(rng, d=None, h1=None, hidden=None, K=None, n_rows=5, noise_scale=0.3):
    d = d or int(rng.integers(1, 9))
    h1 = h1 or int(rng.integers(1, 9))
    hidden = hidden or (int(rng.integers(1, 9)),)
    K = K or int(rng.integers(2, 6))
    shape = ModelShape(d, h1, hidden, K)
    params = init_params(shape, rng, theta1_column_norm_bound=1.0)
    x = rng.uniform(-1, 1, size=(n_rows, d))
    y = np.eye(K)[rng.integers(0, K, size=n_rows)]
    noise = NoiseBundle(rng.laplace(0, noise_scale, d), rng.laplace(0, noise_scale, h1),
                        rng.laplace(0, noise_scale, hidden[-1]))
    return params, x, y, noise


def test_shape_param_count():
    shape = ModelShape(4, 3, (5, 2), 3)
    params = init_params(shape, np.random.default_rng(0))
    assert params.flatten().size == shape.n_params == 4 * 3 + 3 * 5 + 5 + 5 * 2 + 2 + 2 * 3


def test_shape_rejects_empty_hidden():
    with pytest.raises(ShapeError):
        ModelShape(4, 3, (), 2)


def test_flatten_roundtrip(rng):
    params = random_instance(rng)[0]
    back = params.unflatten(params.flatten())
    assert np.array_equal(back.flatten(), params.flatten())
    with pytest.raises(ShapeError):
        params.unflatten(np.zeros(3))


def test_init_respects_column_bound(rng):
    params = init_params(ModelShape(50, 4, (3,), 2), rng, theta1_column_norm_bound=0.5)
    assert params.max_column_norm() <= 0.5
    assert all(np.all(b == 0) for b in params.biases)


def test_clip_columns_exact_bound(rng):
    theta = rng.normal(size=(30, 7)) * 10
    clip_theta1_columns(theta, 1.3)
    assert np.abs(theta).sum(axis=0).max() <= 1.3
    small = np.full((2, 2), 0.1)
    assert np.array_equal(clip_theta1_columns(small.copy(), 1.0), small)


def test_perturb_examples():
    noise = NoiseBundle(np.array([2.0, 2.0]), np.zeros(1), np.zeros(1))
    ds = perturb_dataset(np.array([[1.0, -1.0]]), np.array([[1.0]]), noise, 2)
    assert np.array_equal(ds.xbar, [[2.0, 0.0]])
    zero = perturb_dataset(np.array([[0.3, -0.4]]), np.array([[1.0]]),
                           NoiseBundle.zeros(2, 1, 1), 7)
    assert np.array_equal(zero.xbar, [[0.3, -0.4]])
    with pytest.raises(ShapeError):
        perturb_dataset(np.zeros((1, 3)), np.array([[1.0]]), noise, 2)
    with pytest.raises(ValueError):
        ds.xbar[0, 0] = 1.0


def test_forward_zero_theta_gives_noise_code(rng):
    params, x, y, noise = random_instance(rng, d=3, h1=2)
    params.theta1[:] = 0.0
    h, hbar, scores = forward(params, x, noise, 4)
    assert np.array_equal(h, np.zeros_like(h))
    assert np.array_equal(hbar, np.broadcast_to(2.0 * noise.chi2 / 4, hbar.shape))
    assert np.allclose(scores.sum(axis=1), 1.0, atol=1e-10)


def test_encode_clips():
    theta = np.array([[3.0, -2.0]])
    assert np.array_equal(encode(theta, np.array([[1.0]])), [[1.0, -1.0]])


def test_softmax_stable():
    z = np.array([[1000.0, 1000.0, -1000.0]])
    assert np.allclose(softmax(z), [[0.5, 0.5, 0.0]])


def _params_with_scores(scores):
    # one-layer net whose h_pi is a constant vector, so W_pi rows set the scores
    K = len(scores)
    params = init_params(ModelShape(1, 1, (1,), K), np.random.default_rng(0))
    params.theta1[:] = 0.0
    params.weights[0][:] = 0.0
    params.biases[0][:] = np.arctanh(0.5)
    params.W_pi[:] = 2.0 * np.log(np.asarray(scores, dtype=np.float64))[None, :]
    return params


@pytest.mark.parametrize("scores, expected", [
    ((0.1, 0.7, 0.2), 1),
    ((1 / 3, 1 / 3, 1 / 3), 0),
    ((1e-9, 1e-9, 1.0), 2),
])
def test_predict_examples(scores, expected):
    params = _params_with_scores(scores)
    assert predict(params, np.zeros((2, 1))).tolist() == [expected, expected]


def test_objective_R_examples():
    params = init_params(ModelShape(1, 1, (1,), 2), np.random.default_rng(0))
    params.theta1[:] = 1.0
    xbar = np.array([[0.5]])
    zero = NoiseBundle.zeros(1, 1, 1)
    assert objective_R_perturbed(params, xbar, zero, 1) == 0.0
    params.theta1[:] = 0.0
    assert objective_R_perturbed(params, xbar, zero, 1) == 0.0


def test_grad_R_examples():
    params = init_params(ModelShape(1, 1, (1,), 2), np.random.default_rng(0))
    zero = NoiseBundle.zeros(1, 1, 1)
    g = grad_R(params, np.array([[0.5]]), zero, 1, hbar=np.array([[0.2]]))
    assert g[0, 0] == 0.0
    g = grad_R(params, np.array([[1.0]]), zero, 1, hbar=np.array([[1.0]]))
    assert g[0, 0] == -0.5


def test_objective_L_examples():
    W = np.array([[1.0]])
    h = np.array([[1.0]])
    y = np.array([[1.0]])
    assert objective_L_polynomial(W, h, y, form="printed") == -0.625
    assert objective_L_polynomial(W, h, y, form="taylor") == -0.375
    assert objective_L_polynomial(np.zeros((3, 2)), np.ones((4, 3)), np.eye(2)[[0, 1, 0, 1]]) == 0.0
    with pytest.raises(ShapeError):
        objective_L_polynomial(W, h, y, form="other")


def test_loss_forms_at_large_scores():
    # the printed form is unbounded below, the taylor form grows with |z|
    W = np.array([[1.0]])
    y = np.array([[0.0]])
    for big in (20.0, -20.0):
        h = np.array([[big]])
        assert objective_L_polynomial(W, h, y, form="taylor") > 0
        assert objective_L_polynomial(W, h, y, form="printed") < -5


def test_mismatched_noise_is_usage_error(rng):
    params, x, y, _ = random_instance(rng, d=3, h1=2, hidden=(4,))
    with pytest.raises(UsageError):
        objective_R_perturbed(params, x, NoiseBundle.zeros(2, 2, 4), 5)


def _fd(f, arr, i, eps=1e-6):
    old = arr.flat[i]
    arr.flat[i] = old + eps
    up = f()
    arr.flat[i] = old - eps
    down = f()
    arr.flat[i] = old
    return (up - down) / (2 * eps)


def _away_from_kinks(params, x, noise, n, margin=1e-3):
    pre = x @ params.theta1
    if np.min(np.abs(np.abs(pre) - 1.0)) < margin:
        return False
    hbar = noisy_code(params, x, noise, n)
    acts = hbar
    for w, b in zip(params.weights, params.biases):
        acts = np.tanh(acts @ w + b)
    return np.min(np.abs(acts @ params.W_pi)) > margin


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    done = 0
    while done < 50:
        params, x, y, noise = random_instance(rng, n_rows=4)
        n = 7
        if not _away_from_kinks(params, x, noise, n):
            continue
        hbar = noisy_code(params, x, noise, n)
        gR = grad_R(params, x, noise, n, hbar=hbar)
        for i in range(params.theta1.size):
            num = _fd(lambda: objective_R_perturbed(params, x, noise, n, hbar=hbar),
                      params.theta1, i)
            assert abs(gR.flat[i] - num) <= 1e-4 * max(1.0, abs(num))
        gL = grad_L(params, hbar, y, noise, n)
        for arr, g in zip(params.theta2_arrays(), gL):
            for i in range(arr.size):
                num = _fd(lambda: objective_L_perturbed(params, hbar, y, noise, n), arr, i)
                assert abs(g.flat[i] - num) <= 1e-4 * max(1.0, abs(num))
        done += 1


def test_zero_noise_matches_polynomial_exactly():
    rng = np.random.default_rng(5)
    for _ in range(20):
        params, x, y, _ = random_instance(rng)
        shape = params.shape
        zero = NoiseBundle.zeros(shape.d, shape.h1_size, shape.h_pi_size)
        n = int(rng.integers(1, 500))
        xbar = perturb_dataset(x, y, zero, n).xbar
        h = encode(params.theta1, x)
        assert objective_R_perturbed(params, xbar, zero, n) == objective_R_polynomial(
            params.theta1, x, h)
        acts = h
        for w, b in zip(params.weights, params.biases):
            acts = np.tanh(acts @ w + b)
        assert objective_L_perturbed(params, h, y, zero, n) == objective_L_polynomial(
            params.W_pi, acts, y)


def test_per_example_gradients_sum_to_batch_gradient(rng):
    params, x, y, _ = random_instance(rng, n_rows=6)
    zero = NoiseBundle.zeros(params.shape.d, params.shape.h1_size, params.shape.h_pi_size)
    per = per_example_gradients(params, x, y)
    full = joint_gradient(params, x, y, zero, 1)[0]
    assert per.shape == (6, params.shape.n_params)
    assert np.allclose(per.sum(axis=0), full, rtol=1e-12, atol=1e-12)


def test_checkpoint_roundtrip(tmp_path, rng):
    params = random_instance(rng, hidden=(3,))[0]
    save_checkpoint(params, tmp_path / "p.npz")
    back = load_checkpoint(tmp_path / "p.npz")
    assert np.array_equal(back.flatten(), params.flatten())
    assert checkpoint_bytes(back) == checkpoint_bytes(params)
    buf = io.BytesIO(checkpoint_bytes(params))
    assert np.array_equal(load_checkpoint(buf).W_pi, params.W_pi)
