import numpy as np
import pytest

from lib.aon import AonMode
from lib.gradcheck import check_layer, check_layers, check_network
from lib.linalg import spectral_norm_oracle
from lib.nn import (
    BatchNormLayer,
    ConvLayer,
    DenseLayer,
    MaxPool2x2,
    NormMode,
    build_cnn,
    build_mlp,
    col2im,
    conv_reshape,
    conv_unreshape,
    im2col,
    softmax_cross_entropy,
)
from lib.utils.errors import BatchSizeError, FrozenParameterError, LabelError, ShapeError


def naive_conv(x, w, stride, padding):
    n, c, height, width = x.shape
    out_ch, _, kh, kw = w.shape
    xp = np.pad(x, [(0, 0), (0, 0), (padding, padding), (padding, padding)])
    oh = (height + 2 * padding - kh) // stride + 1
    ow = (width + 2 * padding - kw) // stride + 1
    out = np.zeros((n, out_ch, oh, ow))
    for b in range(n):
        for o in range(out_ch):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, o, i, j] = np.sum(patch * w[o])
    return out


def plain_conv(in_ch, out_ch, kernel, stride=1, padding=0):
    return ConvLayer(in_ch, out_ch, kernel, stride=stride, padding=padding,
                     norm_mode=NormMode.PLAIN, use_gamma=False)


def orthonormal(rows, cols, rng):
    q, _ = np.linalg.qr(rng.standard_normal((cols, rows)))
    return q.T


# reshape -------------------------------------------------------------------

def test_conv_reshape_round_trip(rng):
    w = rng.standard_normal((3, 2, 3, 3))
    m = conv_reshape(w)
    assert m.shape == (3, 18)
    assert np.array_equal(conv_unreshape(m, w.shape), w)


def test_conv_reshape_errors():
    with pytest.raises(ShapeError):
        conv_reshape(np.ones((3, 4)))
    with pytest.raises(ShapeError):
        conv_unreshape(np.ones((3, 17)), (3, 2, 3, 3))


# dense ---------------------------------------------------------------------

def test_plain_dense_identity(rng):
    layer = DenseLayer(3, 3, NormMode.PLAIN, use_gamma=False)
    layer.weight.value = np.eye(3)
    x = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(layer.forward(x), x)


def test_aon_dense_with_orthonormal_rows(rng):
    w = orthonormal(3, 5, rng)
    layer = DenseLayer(5, 3, NormMode.AON, q=2, use_gamma=False)
    layer.weight.value = w
    x = rng.standard_normal((2, 5))
    np.testing.assert_allclose(layer.forward(x, training=True), x @ w.T, atol=1e-12)


def test_dense_applies_gamma_after_normalization(rng):
    layer = DenseLayer(4, 3, NormMode.AON, q=2, seed=3)
    layer.gamma.value = np.array([0.5, 2.0, -1.0])
    x = rng.standard_normal((6, 4))
    for _ in range(5):
        layer.forward(x, training=True)
    out = layer.forward(x, training=False)
    h, _ = layer.effective_matrix(update_state=False)
    np.testing.assert_allclose(out, (x @ h.T) * layer.gamma.value, atol=1e-14)


def test_dense_shape_check():
    with pytest.raises(ShapeError):
        DenseLayer(4, 3).forward(np.ones((2, 5)))


def test_sn_only_layer_uses_q0():
    layer = DenseLayer(4, 3, NormMode.SN_ONLY, q=5)
    assert layer.q == 0 and layer.aon.q == 0


def test_diagnostics_of_orthonormal_aon_layer(rng):
    layer = DenseLayer(6, 4, NormMode.AON, q=2)
    layer.weight.value = orthonormal(4, 6, rng)
    layer.forward(rng.standard_normal((2, 6)), training=True)
    deviation, sigma = layer.diagnostics()
    assert deviation < 1e-12
    assert sigma == pytest.approx(1.0, abs=1e-12)


# conv ----------------------------------------------------------------------

def test_conv_identity_kernel(rng):
    layer = plain_conv(1, 1, (1, 1))
    layer.weight.value = np.ones((1, 1, 1, 1))
    x = rng.standard_normal((2, 1, 5, 5))
    np.testing.assert_array_equal(layer.forward(x), x)


def test_conv_all_ones_kernel():
    layer = plain_conv(1, 1, (3, 3))
    layer.weight.value = np.ones((1, 1, 3, 3))
    out = layer.forward(np.ones((1, 1, 5, 5)))
    assert out.shape == (1, 1, 3, 3)
    np.testing.assert_allclose(out, 9.0)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 0), (2, 1)])
def test_conv_matches_naive_loops(rng, stride, padding):
    layer = plain_conv(2, 3, (3, 3), stride=stride, padding=padding)
    x = rng.standard_normal((2, 2, 6, 7))
    expected = naive_conv(x, layer.weight.value, stride, padding)
    np.testing.assert_allclose(layer.forward(x), expected, atol=1e-12)


def test_conv_equals_im2col_then_dense(rng):
    layer = ConvLayer(2, 3, (3, 3), padding=1, norm_mode=NormMode.AON, q=2, use_gamma=False)
    x = rng.standard_normal((2, 2, 4, 4))
    out = layer.forward(x, training=False)
    h, _ = layer.effective_matrix(update_state=False)
    rows = im2col(x, 3, 3, 1, 1) @ h.T
    np.testing.assert_allclose(out, rows.reshape(2, 4, 4, 3).transpose(0, 3, 1, 2), atol=1e-12)


def test_col2im_is_adjoint_of_im2col(rng):
    x = rng.standard_normal((2, 3, 5, 5))
    cols = im2col(x, 3, 3, 2, 1)
    y = rng.standard_normal(cols.shape)
    lhs = np.sum(cols * y)
    rhs = np.sum(x * col2im(y, x.shape, 3, 3, 2, 1))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_aon_conv_keeps_orthonormal_kernel(rng):
    rows = orthonormal(2, 18, rng)
    layer = ConvLayer(2, 2, (3, 3), padding=1, norm_mode=NormMode.AON, q=2, use_gamma=False)
    layer.weight.value = conv_unreshape(rows, (2, 2, 3, 3))
    np.testing.assert_allclose(layer.kernel(update_state=True), layer.weight.value, atol=1e-12)


def test_conv_kernel_too_large():
    with pytest.raises(ShapeError):
        plain_conv(1, 1, (3, 3)).forward(np.ones((1, 1, 2, 2)))


# batch norm ----------------------------------------------------------------

def test_batchnorm_example():
    bn = BatchNormLayer(1)
    out = bn.forward(np.array([[1.0], [3.0]]), training=True)
    np.testing.assert_allclose(out[:, 0], [-0.999995, 0.999995], atol=1e-6)
    np.testing.assert_allclose(bn.running_mean, [0.2])
    np.testing.assert_allclose(bn.running_var, [1.0])


def test_batchnorm_constant_batch_outputs_beta():
    bn = BatchNormLayer(2)
    bn.beta_bn.value = np.array([0.3, -0.7])
    out = bn.forward(np.full((4, 2), 5.0), training=True)
    np.testing.assert_allclose(out, np.tile([0.3, -0.7], (4, 1)), atol=1e-12)


def test_batchnorm_inference_matches_training_on_batch_statistics(rng):
    x = rng.standard_normal((6, 3))
    bn = BatchNormLayer(3)
    bn.gamma_bn.value = np.array([1.5, 0.5, 2.0])
    bn.beta_bn.value = np.array([0.1, 0.2, 0.3])
    training_out = bn.forward(x, training=True, update_state=False)
    bn.running_mean = x.mean(axis=0)
    bn.running_var = x.var(axis=0)
    np.testing.assert_allclose(bn.forward(x, training=False), training_out, atol=1e-12)


def test_batchnorm_needs_two_samples():
    with pytest.raises(BatchSizeError):
        BatchNormLayer(2).forward(np.ones((1, 2)), training=True)
    BatchNormLayer(2).forward(np.ones((1, 2)), training=False)


def test_batchnorm_per_channel_on_images(rng):
    x = rng.standard_normal((3, 2, 4, 4)) * 3.0 + 1.0
    out = BatchNormLayer(2).forward(x, training=True)
    assert out.shape == x.shape
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-4)


# activations and loss ------------------------------------------------------

def test_softmax_cross_entropy_example():
    loss, grad = softmax_cross_entropy(np.array([0.0, 0.0]), 0)
    assert loss == pytest.approx(np.log(2.0))
    np.testing.assert_allclose(grad, [-0.5, 0.5])


def test_softmax_cross_entropy_batch_is_mean():
    logits = np.array([[0.0, 0.0], [2.0, -1.0]])
    loss, grad = softmax_cross_entropy(logits, [0, 0])
    single = [softmax_cross_entropy(row, 0) for row in logits]
    assert loss == pytest.approx(np.mean([s[0] for s in single]))
    np.testing.assert_allclose(grad, np.stack([s[1] for s in single]) / 2)


def test_softmax_cross_entropy_is_stable_for_large_logits():
    loss, _ = softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
    assert np.isfinite(loss) and loss == pytest.approx(0.0, abs=1e-12)


def test_bad_labels():
    with pytest.raises(LabelError):
        softmax_cross_entropy(np.zeros(3), 3)
    with pytest.raises(LabelError):
        softmax_cross_entropy(np.zeros((2, 3)), [0, -1])
    with pytest.raises(LabelError):
        softmax_cross_entropy(np.zeros((1, 3)), [0.5])


def test_maxpool_forward_and_routing():
    pool = MaxPool2x2()
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    np.testing.assert_array_equal(pool.forward(x)[0, 0], [[5, 7], [13, 15]])
    grad = pool.backward(np.ones((1, 1, 2, 2)))[0, 0]
    expected = np.zeros((4, 4))
    expected[[1, 1, 3, 3], [1, 3, 1, 3]] = 1.0
    np.testing.assert_array_equal(grad, expected)


def test_maxpool_ties_go_to_first_maximum():
    pool = MaxPool2x2()
    pool.forward(np.zeros((1, 1, 2, 2)))
    grad = pool.backward(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(grad[0, 0], [[1, 0], [0, 0]])


# gradients -----------------------------------------------------------------

def test_layer_gradients_match_finite_differences():
    for result in check_layers(seed=0):
        assert result.passed, f"{result.name}: {result.error:.3e}"


@pytest.mark.parametrize("q", [0, 2])
def test_network_gradients_match_finite_differences(q):
    for result in check_network(seed=1, q=q):
        assert result.passed, f"{result.name}: {result.error:.3e}"


def test_pre_sn_dense_gradients():
    layer = DenseLayer(5, 3, NormMode.AON, q=2, seed=2, aon_mode=AonMode.PRE_SN)
    x = np.random.default_rng(2).standard_normal((4, 5))
    for result in check_layer("dense_pre_sn", layer, x, seed=2):
        assert result.passed, f"{result.name}: {result.error:.3e}"


# network -------------------------------------------------------------------

def test_build_mlp_layout():
    model = build_mlp(4, [8, 8], 3, use_bn=True)
    kinds = [layer.kind for layer in model.layers]
    assert kinds == ["dense", "batchnorm", "relu", "dense", "batchnorm", "relu", "dense"]
    assert len(model.weight_layers()) == 3
    first = build_mlp(4, [8], 3, seed=5).weight_layers()[0].weight.value
    again = build_mlp(4, [8], 3, seed=5).weight_layers()[0].weight.value
    assert np.array_equal(first, again)


def test_build_cnn_output_shape(rng):
    model = build_cnn((1, 8, 8), [2, 3], 4)
    logits = model.forward(rng.standard_normal((2, 1, 8, 8)))
    assert logits.shape == (2, 4)


def test_freeze_matches_eval_and_blocks_backward(rng):
    model = build_mlp(4, [5], 3, seed=0)
    x = rng.standard_normal((6, 4))
    for _ in range(5):
        model.forward(x, training=True)
    expected = model.forward(x, training=False)
    model.freeze()
    assert model.frozen
    first = model.forward(x, training=False)
    second = model.forward(x, training=True)
    assert np.array_equal(first, expected)
    assert np.array_equal(first, second)

    _, grad = softmax_cross_entropy(second, np.array([0, 1, 2, 0, 1, 2]))
    with pytest.raises(FrozenParameterError):
        model.backward(grad)


def test_fresh_models_evaluate_without_training(rng):
    x = rng.standard_normal((5, 2))
    for seed in range(20):
        model = build_mlp(2, [16, 16], 3, seed=seed)
        assert np.all(np.isfinite(model.forward(x, training=False)))
        for layer in model.weight_layers():
            h, cache = layer.effective_matrix(update_state=False)
            assert cache.sigma > 0.0
            assert abs(spectral_norm_oracle(h) - 1.0) < 0.25


def test_fresh_cnn_freezes(rng):
    model = build_cnn((1, 8, 8), [4], 3, seed=2)
    x = rng.standard_normal((2, 1, 8, 8))
    expected = model.forward(x, training=False)
    model.freeze()
    assert np.array_equal(model.forward(x, training=False), expected)


def test_constrain_weight_clips_taylor_layers_only(rng):
    big = 3.0 * orthonormal(3, 5, rng)
    taylor = DenseLayer(5, 3, NormMode.AON, q=2)
    sn = DenseLayer(5, 3, NormMode.SN_ONLY)
    plain = DenseLayer(5, 3, NormMode.PLAIN)
    pre_sn = DenseLayer(5, 3, NormMode.AON, q=2, aon_mode=AonMode.PRE_SN)
    for layer in (taylor, sn, plain, pre_sn):
        layer.weight.value = big.copy()
        layer.constrain_weight()
    np.testing.assert_allclose(taylor.weight.value, big / 3.0, atol=1e-12)
    for layer in (sn, plain, pre_sn):
        assert np.array_equal(layer.weight.value, big)


def test_constrain_weight_on_conv_kernel(rng):
    layer = ConvLayer(2, 3, (3, 3), norm_mode=NormMode.AON, q=2)
    layer.weight.value = 5.0 * layer.weight.value
    layer.constrain_weight()
    assert layer.weight.value.shape == (3, 2, 3, 3)
    assert spectral_norm_oracle(layer.weight_matrix()) == pytest.approx(1.0, abs=1e-10)
