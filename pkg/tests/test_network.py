import numpy as np
import pytest

from drivesense.exceptions import (ExecutionException, ExecutionExceptionCode,
                                   ValidationException,
                                   ValidationExceptionCode)
from drivesense.network.checkpoint import load_checkpoint, save_checkpoint
from drivesense.network.config import NetworkConfig, parameter_count
from drivesense.network.layers import (attention_backward, attention_forward,
                                       batchnorm_backward, batchnorm_forward,
                                       bilstm_backward, bilstm_forward,
                                       conv1d_backward, conv1d_forward,
                                       dropout_mask, maxpool1d_backward,
                                       maxpool1d_forward, softmax)
from drivesense.network.model import (Mode, backward, build_model, forward,
                                      predict_proba)
from drivesense.training.config import LossSettings
from drivesense.training.loss import focal_loss

from utils import numerical_gradient


def column(values):
    return np.asarray(values, dtype=np.float64)[None, :, None]


def test_conv_scales_input():
    x = column([1.0, -2.0, 3.0])
    out, _ = conv1d_forward(x, np.full((1, 1, 1), 2.0), np.zeros(1))

    assert out.ravel().tolist() == [2.0, -4.0, 6.0]


def test_conv_identity_kernel():
    x = column([1.0, 2.0, 3.0, 4.0])
    kernel = np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1)
    out, _ = conv1d_forward(x, kernel, np.zeros(1))

    assert out.ravel().tolist() == [1.0, 2.0, 3.0, 4.0]


def test_conv_same_padding():
    """
    Test a box kernel over ones sees the zero padding at both ends
    """
    out, _ = conv1d_forward(
        column([1.0] * 4), np.ones((3, 1, 1)), np.zeros(1))

    assert out.ravel().tolist() == [2.0, 3.0, 3.0, 2.0]


def test_conv_backward_matches_differences():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 6, 3))
    kernel = rng.standard_normal((3, 3, 4))
    bias = rng.standard_normal(4)
    upstream = rng.standard_normal((2, 6, 4))

    def loss():
        return float((conv1d_forward(x, kernel, bias)[0] * upstream).sum())

    _, patches = conv1d_forward(x, kernel, bias)
    dx, dkernel, dbias = conv1d_backward(upstream, patches, kernel)
    np.testing.assert_allclose(dx, numerical_gradient(loss, x), atol=1e-7)
    np.testing.assert_allclose(
        dkernel, numerical_gradient(loss, kernel), atol=1e-7)
    np.testing.assert_allclose(
        dbias, numerical_gradient(loss, bias), atol=1e-7)


def test_maxpool():
    out, _ = maxpool1d_forward(column([1.0, 2.0, 3.0, 4.0]))
    assert out.ravel().tolist() == [2.0, 4.0]

    out, memory = maxpool1d_forward(column([1.0, 5.0, 2.0, 0.0, 9.0]))
    assert out.ravel().tolist() == [5.0, 2.0]
    assert memory[1] == (1, 5, 1)


def test_maxpool_ties_route_to_first():
    _, memory = maxpool1d_forward(column([3.0, 3.0, 1.0, 1.0]))
    dx = maxpool1d_backward(column([1.0, 1.0]), memory)

    assert dx.ravel().tolist() == [1.0, 0.0, 1.0, 0.0]


def test_batchnorm_standardizes():
    """
    Test two values one unit either side of their mean
    """
    x = np.array([[1.0], [3.0]])
    out, memory = batchnorm_forward(
        x, np.ones(1), np.zeros(1), np.zeros(1), np.ones(1), train=True)

    assert out.ravel().tolist() == pytest.approx([-1.0, 1.0], abs=1e-4)
    assert memory is not None


def test_batchnorm_constant_channel_gives_shift():
    x = np.full((4, 2), 7.0)
    out, _ = batchnorm_forward(
        x, np.array([2.0, 3.0]), np.array([0.5, -1.0]),
        np.zeros(2), np.ones(2), train=True)

    np.testing.assert_allclose(out, np.tile([0.5, -1.0], (4, 1)))


def test_batchnorm_running_statistics():
    running_mean = np.zeros(1)
    running_var = np.ones(1)
    batchnorm_forward(
        np.array([[1.0], [3.0]]), np.ones(1), np.zeros(1),
        running_mean, running_var, train=True, momentum=0.9)

    assert running_mean[0] == pytest.approx(0.2)
    assert running_var[0] == pytest.approx(1.0)

    before = running_mean.copy()
    first, memory = batchnorm_forward(
        np.array([[5.0]]), np.ones(1), np.zeros(1),
        running_mean, running_var, train=False)
    second, _ = batchnorm_forward(
        np.array([[5.0]]), np.ones(1), np.zeros(1),
        running_mean, running_var, train=False)
    assert memory is None
    assert first.tolist() == second.tolist()
    assert running_mean.tolist() == before.tolist()


def test_batchnorm_needs_two_in_training():
    with pytest.raises(ValidationException) as err:
        batchnorm_forward(
            np.ones((1, 3)), np.ones(3), np.zeros(3),
            np.zeros(3), np.ones(3), train=True)

    assert err.value.exception_code == ValidationExceptionCode.BatchTooSmall


def lstm_params(rng, fan_in, hidden, zero_bias=False):
    bias = np.zeros(4 * hidden) if zero_bias else rng.standard_normal(
        4 * hidden)
    return (
        rng.standard_normal((fan_in, 4 * hidden)) * 0.5,
        rng.standard_normal((hidden, 4 * hidden)) * 0.5,
        bias,
    )


def test_bilstm_zero_input():
    """
    Test zero input with zero bias keeps every state at zero
    """
    rng = np.random.default_rng(1)
    params = lstm_params(rng, 3, 4, zero_bias=True)
    out, _ = bilstm_forward(np.zeros((2, 5, 3)), params, params)

    assert out.shape == (2, 5, 8)
    assert not out.any()


def test_bilstm_single_step_is_symmetric():
    rng = np.random.default_rng(2)
    params = lstm_params(rng, 3, 4)
    out, _ = bilstm_forward(rng.standard_normal((2, 1, 3)), params, params)

    np.testing.assert_allclose(out[:, :, :4], out[:, :, 4:])


def test_bilstm_reversal_swaps_directions():
    """
    Test reversing time swaps the two halves when both directions share
    parameters
    """
    rng = np.random.default_rng(3)
    params = lstm_params(rng, 3, 4)
    x = rng.standard_normal((2, 6, 3))
    out, _ = bilstm_forward(x, params, params)
    flipped, _ = bilstm_forward(x[:, ::-1], params, params)
    flipped = flipped[:, ::-1]

    np.testing.assert_allclose(flipped[:, :, :4], out[:, :, 4:], atol=1e-12)
    np.testing.assert_allclose(flipped[:, :, 4:], out[:, :, :4], atol=1e-12)


def test_attention_on_identical_steps():
    hidden = np.tile(np.array([1.0, -2.0, 0.5]), (2, 4, 1))
    weights, weighted, context, _ = attention_forward(
        hidden, np.array([0.3, 0.1, -0.7]), np.zeros(1))

    np.testing.assert_allclose(weights, 0.25)
    np.testing.assert_allclose(weighted, hidden / 4)
    np.testing.assert_allclose(context, hidden[:, 0])


def test_attention_weights_sum_to_one():
    rng = np.random.default_rng(4)
    weights, _, _, _ = attention_forward(
        rng.standard_normal((3, 7, 5)), rng.standard_normal(5), np.ones(1))

    np.testing.assert_allclose(weights.sum(axis=1), 1.0)
    assert (weights > 0).all()


def test_dropout_keeps_the_expectation():
    """
    Test the mean output over many masks matches the input
    """
    rng = np.random.default_rng(5)
    x = rng.uniform(0.5, 2.0, size=(4, 6))
    total = np.zeros_like(x)
    draws = 10_000
    for _ in range(draws):
        total += x * dropout_mask(x.shape, 0.2, rng)
    mean = total / draws

    assert mean.sum() == pytest.approx(x.sum(), rel=0.02)
    np.testing.assert_allclose(mean, x, rtol=0.05)


def test_maxpool_backward_matches_differences():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 7, 3))
    upstream = rng.standard_normal((2, 3, 3))

    def loss():
        return float((maxpool1d_forward(x)[0] * upstream).sum())

    _, memory = maxpool1d_forward(x)
    dx = maxpool1d_backward(upstream, memory)
    np.testing.assert_allclose(
        dx, numerical_gradient(loss, x), rtol=1e-4, atol=1e-8)


def test_batchnorm_backward_matches_differences():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 5, 4))
    scale = rng.uniform(0.5, 1.5, size=4)
    shift = rng.standard_normal(4)
    upstream = rng.standard_normal((3, 5, 4))

    def run():
        return batchnorm_forward(
            x, scale, shift, np.zeros(4), np.ones(4), train=True)

    def loss():
        return float((run()[0] * upstream).sum())

    _, memory = run()
    dx, dscale, dshift = batchnorm_backward(upstream, memory, scale)
    np.testing.assert_allclose(
        dx, numerical_gradient(loss, x), rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(
        dscale, numerical_gradient(loss, scale), rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(
        dshift, numerical_gradient(loss, shift), rtol=1e-4, atol=1e-8)


def test_bilstm_backward_matches_differences():
    rng = np.random.default_rng(8)
    ahead = lstm_params(rng, 3, 2)
    behind = lstm_params(rng, 3, 2)
    x = rng.standard_normal((2, 4, 3))
    upstream = rng.standard_normal((2, 4, 4))

    def loss():
        return float((bilstm_forward(x, ahead, behind)[0] * upstream).sum())

    _, memory = bilstm_forward(x, ahead, behind)
    dx, ahead_grads, behind_grads = bilstm_backward(
        upstream, memory, ahead, behind)
    np.testing.assert_allclose(
        dx, numerical_gradient(loss, x), rtol=1e-4, atol=1e-8)
    for params, grads in ((ahead, ahead_grads), (behind, behind_grads)):
        W, U, b = params
        dW, dU, db = grads
        for tensor, grad in ((W, dW), (U, dU), (b, db)):
            np.testing.assert_allclose(
                grad, numerical_gradient(loss, tensor), rtol=1e-4, atol=1e-8)


def test_attention_backward_matches_differences():
    rng = np.random.default_rng(9)
    hidden = rng.standard_normal((2, 5, 3))
    w = rng.standard_normal(3)
    b = rng.standard_normal(1)
    upstream = rng.standard_normal((2, 5, 3))
    context_upstream = rng.standard_normal((2, 3))

    def loss():
        _, weighted, context, _ = attention_forward(hidden, w, b)
        return float((weighted * upstream).sum()
                     + (context * context_upstream).sum())

    _, _, _, memory = attention_forward(hidden, w, b)
    dhidden, dw, db = attention_backward(
        upstream, memory, w, context_upstream)
    np.testing.assert_allclose(
        dhidden, numerical_gradient(loss, hidden), rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(
        dw, numerical_gradient(loss, w), rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(
        db, numerical_gradient(loss, b), rtol=1e-4, atol=1e-8)


def test_softmax():
    assert softmax(np.array([[0.0, 0.0]])).tolist() == [[0.5, 0.5]]
    extreme = softmax(np.array([[1000.0, 0.0]]))
    assert np.isfinite(extreme).all()
    assert extreme[0].tolist() == pytest.approx([1.0, 0.0])
    shifted = softmax(np.array([[1.0, 2.0, 3.0]]) + 50.0)
    assert shifted.sum() == pytest.approx(1.0)
    assert shifted[0, 2] > shifted[0, 1] > shifted[0, 0]


def test_default_parameter_count():
    """
    Test the default network size
    """
    model = build_model(NetworkConfig(), init_seed=0)

    assert parameter_count(NetworkConfig()) == 175013
    assert model.count() == 175013
    assert abs(model.count() - 180325) / 180325 < 0.1


def test_build_is_seeded(tiny_network):
    first = build_model(tiny_network, 5)
    second = build_model(tiny_network, 5)
    other = build_model(tiny_network, 6)

    for name, tensor in first.tensors.items():
        assert np.array_equal(tensor, second.tensors[name])
    assert not np.array_equal(
        first.tensors["conv1.kernel"], other.tensors["conv1.kernel"])


def test_config_validation():
    with pytest.raises(ValidationException) as err:
        NetworkConfig(conv1_kernel=4, input_rows=10)

    assert "odd" in err.value.message
    assert "input_rows" in err.value.message


def test_pooled_sequence_shape():
    model = build_model(NetworkConfig(), init_seed=0)
    batch = np.random.default_rng(0).standard_normal((2, 100, 10))
    _, cache = forward(model, batch, Mode.train)

    assert cache.pool2[0].shape == (2, 25, 128)
    assert cache.attention_weights.shape == (2, 25)


def test_probabilities_are_valid(tiny_network):
    model = build_model(tiny_network, 0)
    batch = np.random.default_rng(1).standard_normal((5, 8, 2)) * 3
    probs, cache = forward(model, batch, Mode.eval)

    assert cache is None
    assert probs.shape == (5, 4)
    assert (probs >= 0).all() and (probs <= 1).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_eval_is_pure(tiny_network):
    model = build_model(tiny_network, 0)
    batch = np.random.default_rng(2).standard_normal((4, 8, 2))
    buffers = {k: v.copy() for k, v in model.buffers.items()}
    first, _ = forward(model, batch, Mode.eval)
    second, _ = forward(model, batch, Mode.eval)

    assert np.array_equal(first, second)
    for name, value in buffers.items():
        assert np.array_equal(model.buffers[name], value)


def test_eval_is_permutation_equivariant(tiny_network):
    model = build_model(tiny_network, 0)
    batch = np.random.default_rng(3).standard_normal((6, 8, 2))
    order = np.array([3, 0, 5, 1, 4, 2])

    np.testing.assert_allclose(
        predict_proba(model, batch[order]),
        predict_proba(model, batch)[order],
        atol=1e-10,
    )


def test_wrong_window_shape(tiny_network):
    model = build_model(tiny_network, 0)
    with pytest.raises(ExecutionException) as err:
        forward(model, np.zeros((2, 9, 2)))

    assert err.value.exception_code == ExecutionExceptionCode.ShapeMismatch


def test_gradients_match_finite_differences(tiny_network):
    """
    Test every parameter gradient against central differences
    """
    model = build_model(tiny_network, 11)
    rng = np.random.default_rng(12)
    batch = rng.standard_normal((3, 8, 2))
    labels = np.array([0, 2, 3])
    settings = LossSettings()

    def loss():
        probs, _ = forward(model, batch, Mode.train)
        return focal_loss(probs, labels, settings)[0]

    probs, cache = forward(model, batch, Mode.train)
    _, dlogits = focal_loss(probs, labels, settings)
    grads = backward(model, cache, dlogits)

    assert set(grads) == set(model.tensors)
    for name, tensor in model.tensors.items():
        np.testing.assert_allclose(
            grads[name], numerical_gradient(loss, tensor),
            rtol=1e-4, atol=1e-7, err_msg=name,
        )


def test_zero_upstream_gradient(tiny_network):
    model = build_model(tiny_network, 0)
    batch = np.random.default_rng(5).standard_normal((3, 8, 2))
    _, cache = forward(model, batch, Mode.train)
    grads = backward(model, cache, np.zeros((3, 4)))

    for gradient in grads.values():
        assert not gradient.any()


def test_stale_cache(tiny_network):
    model = build_model(tiny_network, 0)
    _, cache = forward(model, np.zeros((2, 8, 2)), Mode.train)
    model.version += 1
    with pytest.raises(ExecutionException) as err:
        backward(model, cache, np.zeros((2, 4)))

    assert err.value.exception_code == ExecutionExceptionCode.StaleCache


def test_checkpoint(tmp_path, tiny_network):
    model = build_model(tiny_network, 9)
    forward(model, np.random.default_rng(0).standard_normal((4, 8, 2)),
            Mode.train)
    save_checkpoint(model, tmp_path / "model.ckpt", {"epoch": 3})
    loaded, extra = load_checkpoint(tmp_path / "model.ckpt")

    assert extra == {"epoch": 3}
    assert loaded.config == tiny_network
    for name, tensor in model.tensors.items():
        np.testing.assert_allclose(
            loaded.tensors[name], tensor, rtol=1e-6, atol=1e-7)
    for name, buffer in model.buffers.items():
        np.testing.assert_allclose(
            loaded.buffers[name], buffer, rtol=1e-6, atol=1e-7)
    batch = np.random.default_rng(1).standard_normal((3, 8, 2))
    np.testing.assert_allclose(
        predict_proba(loaded, batch), predict_proba(model, batch), atol=1e-5)


def test_corrupt_checkpoint(tmp_path, tiny_network):
    save_checkpoint(build_model(tiny_network, 0), tmp_path / "model.ckpt")
    data = (tmp_path / "model.ckpt").read_bytes()
    (tmp_path / "model.ckpt").write_bytes(data[:len(data) // 2])
    with pytest.raises(ExecutionException) as err:
        load_checkpoint(tmp_path / "model.ckpt")

    assert err.value.exception_code == ExecutionExceptionCode.CorruptContainer
