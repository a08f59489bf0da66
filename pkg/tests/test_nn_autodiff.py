import numpy as np
import pytest

from probenav import nn
from probenav.nn import autodiff as ad


def test_identity_forward_passthrough():
    net = nn.Identity()
    x = nn.Tensor([[1.0, 2.0, 3.0]])
    out = nn.forward(net, x)
    np.testing.assert_array_equal(out.data, [[1.0, 2.0, 3.0]])


def test_zero_weight_dense_returns_bias():
    rng = np.random.default_rng(0)
    layer = nn.Dense("d", 3, 2, rng)
    layer.params["w"].data[:] = 0.0
    layer.params["b"].data[:] = [0.5, -0.25]
    out = layer(nn.Tensor([[4.0, 5.0, 6.0]]))
    np.testing.assert_allclose(out.data, [[0.5, -0.25]])


def test_two_layer_mlp_matches_hand_matmul():
    # Hand oracle: y = tanh(x W0 + b0) W1 + b1 with fixed small weights.
    w0 = np.array([[0.1, -0.2], [0.3, 0.4]])
    b0 = np.array([0.05, -0.05])
    w1 = np.array([[1.0], [-1.0]])
    b1 = np.array([0.25])
    x = np.array([[0.5, -1.5], [2.0, 0.0]])

    mlp = nn.MLP("m", [2, 2, 1], np.random.default_rng(0), activation="tanh")
    mlp.params["h0.w"].data[:] = w0
    mlp.params["h0.b"].data[:] = b0
    mlp.params["h1.w"].data[:] = w1
    mlp.params["h1.b"].data[:] = b1

    expected = np.tanh(x @ w0 + b0) @ w1 + b1
    out = nn.forward(mlp, nn.Tensor(x))
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-15)


def test_dense_shape_mismatch_names_layer():
    layer = nn.Dense("phi.h0", 4, 2, np.random.default_rng(0))
    with pytest.raises(nn.ShapeError, match="phi.h0"):
        layer(nn.Tensor(np.zeros((1, 3))))


def test_constant_loss_gives_zero_gradients():
    rng = np.random.default_rng(1)
    layer = nn.Dense("d", 3, 3, rng)
    x = nn.Tensor(rng.normal(size=(2, 3)))
    out = layer(x)
    loss = (out - out).sum()  # identically zero regardless of params
    layer.params.zero_grads()
    nn.backward(loss)
    for _, p in layer.params.items():
        np.testing.assert_array_equal(p.grad, np.zeros_like(p.data))


def test_sum_of_linear_gradient_structure():
    # loss = sum(W x) => dL/dW[i, j] replicates x across output rows.
    rng = np.random.default_rng(2)
    w = nn.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    xv = rng.normal(size=(1, 3))
    loss = ad.matmul(nn.Tensor(xv), w).sum()
    w.zero_grad()
    nn.backward(loss)
    np.testing.assert_allclose(w.grad, np.repeat(xv.T, 4, axis=1), atol=1e-15)


def test_backward_before_forward_raises():
    leaf = nn.Tensor(0.0, requires_grad=True)
    with pytest.raises(nn.GraphError):
        nn.backward(leaf)


def test_backward_requires_scalar():
    x = nn.Tensor([[1.0, 2.0]], requires_grad=True)
    y = x * 2.0
    with pytest.raises(nn.ShapeError):
        nn.backward(y)


def test_unused_parameter_gradient_is_zero():
    rng = np.random.default_rng(3)
    used = nn.Dense("used", 2, 1, rng)
    unused = nn.Dense("unused", 2, 1, rng)
    ps = nn.ParamSet()
    ps.merge(used.params, "used.")
    ps.merge(unused.params, "unused.")
    ps.zero_grads()
    loss = used(nn.Tensor([[1.0, 1.0]])).sum()
    nn.backward(loss)
    np.testing.assert_array_equal(ps["unused.w"].grad, 0.0)
    assert np.any(ps["used.w"].grad != 0.0)


def test_nonfinite_forward_raises_with_op_name():
    x = nn.Tensor([[0.0]])
    with pytest.raises(nn.NonFiniteError, match="log"):
        ad.log(x)


def test_no_grad_blocks_graph():
    rng = np.random.default_rng(4)
    layer = nn.Dense("d", 2, 2, rng)
    with nn.no_grad():
        out = layer(nn.Tensor([[1.0, 2.0]]))
    assert out._parents == ()


def test_two_layer_network_matches_finite_differences():
    rng = np.random.default_rng(5)
    mlp = nn.MLP("m", [3, 4, 2], rng, activation="tanh")
    x = nn.Tensor(rng.normal(size=(5, 3)))

    def loss_fn():
        return nn.forward(mlp, x).square().sum()

    report = nn.grad_check(loss_fn, mlp.params, tolerance=1e-4)
    assert report.passed, str(report)


def test_linear_layer_grad_check_tight():
    rng = np.random.default_rng(6)
    layer = nn.Dense("lin", 3, 2, rng)
    x = nn.Tensor(rng.normal(size=(4, 3)))

    def loss_fn():
        return layer(x).square().mean()

    report = nn.grad_check(loss_fn, layer.params, tolerance=1e-6)
    assert report.passed, str(report)


def test_layernorm_grad_check():
    rng = np.random.default_rng(7)
    ln = nn.LayerNorm("ln", 5)
    ln.params["g"].data[:] = rng.normal(size=5)
    ln.params["b"].data[:] = rng.normal(size=5)
    x = nn.Tensor(rng.normal(size=(3, 5)))

    def loss_fn():
        return (ln(x) * nn.Tensor(np.arange(5.0))).sum()

    report = nn.grad_check(loss_fn, ln.params, tolerance=1e-5)
    assert report.passed, str(report)


def test_relu_grad_check_away_from_kink():
    rng = np.random.default_rng(8)
    mlp = nn.MLP("m", [2, 3, 1], rng, activation="relu")
    # keep preactivations far from zero so the finite difference is valid
    x = nn.Tensor(rng.normal(size=(4, 2)) + 3.0)

    def loss_fn():
        return nn.forward(mlp, x).sum()

    report = nn.grad_check(loss_fn, mlp.params, tolerance=1e-4)
    assert report.passed, str(report)


def test_cross_entropy_matches_manual_log_softmax():
    logits = np.array([[2.0, 0.0, -1.0], [0.5, 0.5, 0.5]])
    labels = [0, 2]
    t = nn.Tensor(logits, requires_grad=True)
    loss = ad.cross_entropy_with_index_labels(t, labels)
    manual = -np.mean(
        [logits[i, l] - np.log(np.exp(logits[i]).sum()) for i, l in enumerate(labels)]
    )
    assert loss.item() == pytest.approx(manual, abs=1e-12)


def test_cross_entropy_grad_check():
    rng = np.random.default_rng(9)
    layer = nn.Dense("head", 3, 4, rng)
    x = nn.Tensor(rng.normal(size=(6, 3)))
    labels = rng.integers(0, 4, size=6)

    def loss_fn():
        return ad.cross_entropy_with_index_labels(layer(x), labels)

    report = nn.grad_check(loss_fn, layer.params, tolerance=1e-5)
    assert report.passed, str(report)


def test_conv_encoder_grad_check_small():
    rng = np.random.default_rng(10)
    enc = nn.ConvEncoder("c", side=4, out_dim=2, rng=rng, channels=2)
    x = nn.Tensor(rng.uniform(size=(2, 16)))

    def loss_fn():
        return enc(x).square().sum()

    report = nn.grad_check(loss_fn, enc.params, tolerance=1e-4)
    assert report.passed, str(report)


def test_conv_matches_direct_convolution():
    rng = np.random.default_rng(11)
    conv = nn.Conv3x3("c", 1, 1, rng)
    img = rng.normal(size=(1, 5, 5, 1))
    out = conv(nn.Tensor(img)).data[0, :, :, 0]
    k = conv.params["w"].data.reshape(3, 3)  # kernel-major layout, single channel
    b = conv.params["b"].data[0]
    padded = np.pad(img[0, :, :, 0], 1)
    expected = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            expected[i, j] = np.sum(padded[i:i + 3, j:j + 3] * k) + b
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(42)
        mlp = nn.MLP("m", [4, 8, 2], rng, activation="tanh")
        x = nn.Tensor(np.linspace(-1, 1, 12).reshape(3, 4))
        out = nn.forward(mlp, x)
        mlp.params.zero_grads()
        nn.backward(out.square().sum())
        return out.data.copy(), {k: p.grad.copy() for k, p in mlp.params.items()}

    out1, g1 = run()
    out2, g2 = run()
    assert np.array_equal(out1, out2)
    for k in g1:
        assert np.array_equal(g1[k], g2[k])
