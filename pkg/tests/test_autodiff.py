import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from railfd import autodiff as ad
from railfd.encoders import SupervisedHeadConfig, WheelEncoderConfig, build_supervised_encoder, build_wheel_encoder
from railfd.errors import DimensionError, NumericError, StateError

from oracles import forward_straight


def _layer_tuples(net):
    out = []
    for spec in net.layers:
        out.append((spec.kind, {"offset": spec.offset, "stride": spec.stride, "kernel_size": spec.kernel_size, "slope": spec.slope}))
    return out


def _raw_params(net):
    return [[t.data.astype(np.float64) for t in group] for group in net.params]


def small_wheel(seed=0):
    cfg = WheelEncoderConfig(filters=3, kernel_size=5, input_length=64)
    return build_wheel_encoder(cfg, seed)


def small_supervised(seed=0):
    backbone = WheelEncoderConfig(filters=2, kernel_size=5, input_length=64)
    head = SupervisedHeadConfig(hidden_dims=(12, 8), triplet_dim=8)
    enc = build_supervised_encoder(backbone, head, seed)
    tail = ad.build_network([ad.relu(), ad.dense(8, 3), ad.softmax()], (8,), seed + 1)
    return ad.stack(enc, tail)


# -- forward -----------------------------------------------------------------

def test_dense_identity():
    net = ad.build_network([ad.dense(3, 3)], (3,), 0)
    net.params[0][0].data[:] = np.eye(3)
    np.testing.assert_array_equal(ad.predict(net, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_conv_box_filter_zero_padding():
    net = ad.build_network([ad.conv1d(1, 3, 1)], (1, 4), 0)
    net.params[0][0].data[:] = 1.0
    out = ad.predict(net, np.ones((1, 4)))
    np.testing.assert_array_equal(out[0], [2.0, 3.0, 3.0, 2.0])


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_straight_line(seed):
    rng = np.random.default_rng(seed)
    net = ad.build_network([ad.conv1d(3, 4, 2), ad.leaky_relu(0.1), ad.dense(3 * 6, 5)], (2, 11), seed, dtype=np.float64)
    x = rng.standard_normal((4, 2, 11))
    ours = ad.predict(net, x)
    ref = forward_straight(_layer_tuples(net), _raw_params(net), x)
    np.testing.assert_allclose(ours, ref, rtol=1e-12, atol=1e-12)


def test_full_wheel_encoder_matches_straight_line():
    net = small_wheel(3).astype(np.float64)
    x = 1.0 + 0.1 * np.random.default_rng(3).standard_normal((2, 1, 64))
    np.testing.assert_allclose(ad.predict(net, x), forward_straight(_layer_tuples(net), _raw_params(net), x), rtol=1e-10, atol=1e-12)


def test_forward_is_pure():
    net = small_wheel(1)
    x = np.random.default_rng(0).standard_normal((3, 1, 64)).astype(np.float32)
    a, b = ad.predict(net, x), ad.predict(net, x)
    assert a.tobytes() == b.tobytes()


def test_composition_equals_sequential():
    first = ad.build_network([ad.conv1d(2, 3, 2), ad.leaky_relu(0.1)], (1, 16), 0)
    second = ad.build_network([ad.dense(16, 4), ad.relu()], first.output_shape, 1)
    x = np.random.default_rng(1).standard_normal((5, 1, 16)).astype(np.float32)
    np.testing.assert_array_equal(ad.predict(ad.stack(first, second), x), ad.predict(second, ad.predict(first, x)))


def test_forward_shape_error_names_layer():
    net = ad.build_network([ad.dense(3, 2)], (3,), 0)
    with pytest.raises(DimensionError, match="layer 0 \\(dense\\)"):
        ad.forward(net, np.ones((1, 4)))


@pytest.mark.parametrize("length,kernel,stride", [(1024, 16, 2), (512, 16, 2), (256, 16, 2), (128, 16, 2), (64, 16, 2), (64, 5, 2), (11, 4, 2), (7, 3, 1)])
def test_conv_output_length(length, kernel, stride):
    net = ad.build_network([ad.conv1d(1, kernel, stride)], (1, length), 0)
    pad = kernel // 2
    assert net.output_shape[1] == (length + 2 * pad - kernel) // stride + 1
    assert ad.predict(net, np.zeros((1, 1, length))).shape[-1] == net.output_shape[1]


def test_default_encoder_conv_length():
    # "same"-style padding with an even kernel keeps one extra sample per layer
    assert WheelEncoderConfig().conv_output_length() == 33


# -- backward ----------------------------------------------------------------

def test_dense_backward_closed_form():
    net = ad.build_network([ad.dense(2, 2)], (2,), 0, dtype=np.float64)
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    net.params[0][0].data[:] = w
    x = np.array([0.5, -1.0])
    g = np.array([1.0, -2.0])
    _, tape = ad.forward(net, x)
    grads = ad.backward(net, tape, g)
    np.testing.assert_allclose(grads.params[0], np.outer(g, x))
    np.testing.assert_allclose(grads.params[1], g)
    np.testing.assert_allclose(grads.input, w.T @ g)


def test_leaky_relu_negative_gradient():
    net = ad.build_network([ad.leaky_relu(0.1)], (1,), 0, dtype=np.float64)
    _, tape = ad.forward(net, np.array([-3.0]))
    assert ad.backward(net, tape, np.array([1.0])).input[0] == pytest.approx(0.1)


def test_backward_before_forward():
    net = ad.build_network([ad.dense(2, 2)], (2,), 0)
    with pytest.raises(StateError):
        ad.backward(net, ad.Tape(), np.ones(2))


def test_backward_deterministic():
    net = small_wheel(2)
    x = np.random.default_rng(2).standard_normal((3, 1, 64)).astype(np.float32)
    up = np.ones((3, 4), dtype=np.float32)
    g1 = ad.backward(net, ad.forward(net, x)[1], up)
    g2 = ad.backward(net, ad.forward(net, x)[1], up)
    for a, b in zip(g1.params, g2.params):
        assert a.tobytes() == b.tobytes()


# -- optimizers --------------------------------------------------------------

def _scalar_param(value):
    t = ad.Tensor(np.array([value], dtype=np.float64), "p")
    return t


def test_sgd_step():
    p = _scalar_param(1.0)
    opt = ad.make_optimizer("sgd", [p], 0.1)
    ad.step(opt, [p], [np.array([2.0])])
    assert p.data[0] == pytest.approx(0.8)


def test_adam_first_step():
    p = _scalar_param(0.0)
    opt = ad.make_optimizer("adam", [p], 0.001)
    ad.step(opt, [p], [np.array([1.0])])
    # m_hat = v_hat = 1, so the step is lr / (1 + eps)
    assert p.data[0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_zero_gradient_is_fixed_point(kind):
    p = _scalar_param(0.5)
    opt = ad.make_optimizer(kind, [p], 0.01)
    ad.step(opt, [p], [np.array([0.0])])
    assert p.data[0] == 0.5 and opt.step_count == 1


def test_nonfinite_gradient_names_parameter():
    p = _scalar_param(0.5)
    opt = ad.make_optimizer("sgd", [p], 0.01)
    with pytest.raises(NumericError, match="'p'"):
        ad.step(opt, [p], [np.array([np.nan])])


def test_gradient_shape_mismatch():
    p = _scalar_param(0.5)
    opt = ad.make_optimizer("sgd", [p], 0.01)
    with pytest.raises(DimensionError):
        ad.step(opt, [p], [np.array([1.0, 2.0])])


# -- gradient check ----------------------------------------------------------

def test_grad_check_dense_only():
    net = ad.build_network([ad.dense(5, 4), ad.dense(4, 3)], (5,), 0)
    x = np.random.default_rng(0).standard_normal((3, 5))
    assert ad.grad_check(net, x).max_error < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_grad_check_conv_leaky(seed):
    net = ad.build_network([ad.conv1d(3, 4, 2), ad.leaky_relu(0.1), ad.conv1d(2, 3, 1), ad.leaky_relu(0.1), ad.dense(2 * 6, 3)], (2, 11), seed)
    x = np.random.default_rng(seed).standard_normal((2, 2, 11))
    rep = ad.grad_check(net, x)
    assert rep.passed, rep.errors


@pytest.mark.parametrize("kind", ["shift", "relu", "softmax", "leaky-relu"])
def test_grad_check_each_parameter_free_layer(kind):
    layer = {"shift": ad.shift(1.0), "relu": ad.relu(), "softmax": ad.softmax(), "leaky-relu": ad.leaky_relu(0.1)}[kind]
    net = ad.build_network([ad.dense(6, 5), layer, ad.dense(5, 3)], (6,), 4)
    x = np.random.default_rng(4).standard_normal((3, 6))
    rep = ad.grad_check(net, x)
    assert rep.passed, rep.errors


def test_grad_check_flags_corrupted_backward():
    net = ad.build_network([ad.dense(4, 3), ad.leaky_relu(0.1), ad.dense(3, 2)], (4,), 0)
    x = np.random.default_rng(0).standard_normal((2, 4))

    def corrupted(network, tape, upstream):
        grads = ad.backward(network, tape, upstream)
        grads.params[2] = grads.params[2] * 1.5
        return grads

    rep = ad.grad_check(net, x, backward_fn=corrupted)
    assert not rep.passed
    assert rep.failing == ["2.dense.weight"]


def test_grad_check_rejects_bad_h():
    net = ad.build_network([ad.dense(2, 2)], (2,), 0)
    with pytest.raises(ValueError):
        ad.grad_check(net, np.ones((1, 2)), h=0.0)


def test_grad_check_small_wheel_encoder():
    net = small_wheel(0)
    x = 1.0 + 0.2 * np.random.default_rng(0).standard_normal((2, 1, 64))
    rep = ad.grad_check(net, x)
    assert rep.passed, rep.errors


def test_grad_check_small_supervised_stack():
    net = small_supervised(0)
    x = 1.0 + 0.2 * np.random.default_rng(0).standard_normal((2, 1, 64))
    rep = ad.grad_check(net, x)
    assert rep.passed, rep.errors


# -- properties --------------------------------------------------------------

@given(st.integers(0, 2**32 - 1), st.sampled_from(["shift", "relu", "leaky-relu", "softmax", "dense"]))
def test_property_layer_gradients(seed, kind):
    layer = {"shift": ad.shift(0.5), "relu": ad.relu(), "softmax": ad.softmax(), "leaky-relu": ad.leaky_relu(0.2), "dense": ad.dense(4, 4)}[kind]
    net = ad.build_network([ad.dense(3, 4), layer, ad.dense(4, 2)], (3,), seed)
    x = np.random.default_rng(seed).standard_normal((2, 3))
    assert ad.grad_check(net, x, seed=seed).max_error < 1e-4


@given(st.integers(1, 40), st.integers(1, 9), st.integers(1, 4))
def test_property_conv_length(length, kernel, stride):
    lout = ad.conv_output_length(length, kernel, stride)
    if lout < 1:
        with pytest.raises(DimensionError):
            ad.build_network([ad.conv1d(1, kernel, stride)], (1, length), 0)
        return
    net = ad.build_network([ad.conv1d(2, kernel, stride)], (1, length), 0)
    assert ad.predict(net, np.zeros((1, 1, length))).shape == (1, 2, lout)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-100, 100))
def test_property_softmax_shift_invariant(logits, c):
    a = ad.softmax_probs(np.array(logits))
    b = ad.softmax_probs(np.array(logits) + c)
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert a.sum() == pytest.approx(1.0)


def test_cross_entropy_perfect_prediction():
    loss, _ = ad.softmax_cross_entropy(np.array([[50.0, 0.0, 0.0]]), np.array([0]))
    assert loss < 1e-3


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        ad.LayerSpec("conv2d")
    with pytest.raises(ValueError):
        ad.leaky_relu(1.5)
    with pytest.raises(ValueError):
        ad.dense(0, 3)
