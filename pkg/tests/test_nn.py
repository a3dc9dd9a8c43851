import math

import numpy as np
import pytest

from mmdrive.nn import (Adam, Conv2D, Dense, Dropout, GlobalAvgPool,
                        GradientStop, LayerShapeError, ReLU, Sequential,
                        Sigmoid, Softmax, binary_cross_entropy, cross_entropy)
from mmdrive.nn.gradcheck import check_gradients, numeric_gradients, max_relative_error

TOL = 1e-4


def shifted_normal(rng, shape, gap=0.02):
    """Random values kept away from zero so ReLU kinks stay clear of +/-h."""
    x = rng.standard_normal(shape)
    return x + gap * np.sign(x)


def linear_probe_loss(layer, x, probe, train=False, seed=0):
    """Scalar loss probe . layer(x); returns loss, param grads and input grad."""
    def forward():
        y, _ = layer.forward(x, train=train, rng=np.random.default_rng(seed))
        return float((y * probe).sum())

    y, cache = layer.forward(x, train=train, rng=np.random.default_rng(seed))
    dx, grads = layer.backward(probe, cache)
    return forward, float((y * probe).sum()), grads, dx


class TestLayerGradients:
    @pytest.mark.parametrize("padding,in_shape", [("valid", (6, 5, 3)),
                                                  ("same", (5, 6, 2)),
                                                  ("valid", (7, 2, 4))])
    def test_conv2d(self, padding, in_shape):
        rng = np.random.default_rng(42)
        kernel = (3, 2) if in_shape[1] == 2 else (3, 3)
        layer = Conv2D(kernel, in_shape[2], 4, padding, rng=rng)
        x = rng.standard_normal((2,) + in_shape)
        probe = rng.standard_normal((2,) + layer.out_shape(in_shape))
        forward, _, grads, dx = linear_probe_loss(layer, x, probe)
        assert check_gradients(forward, grads, layer.params) < TOL
        # input gradient via an auxiliary parameter dict
        numeric = numeric_gradients(forward, {"x": x})
        assert max_relative_error({"x": dx}, numeric) < TOL

    def test_dense(self):
        rng = np.random.default_rng(1)
        layer = Dense(7, 5, rng=rng)
        x = rng.standard_normal((3, 7))
        probe = rng.standard_normal((3, 5))
        forward, _, grads, dx = linear_probe_loss(layer, x, probe)
        assert check_gradients(forward, grads, layer.params) < TOL
        assert max_relative_error({"x": dx}, numeric_gradients(forward, {"x": x})) < TOL

    def test_dense_single_example_outer_product(self):
        rng = np.random.default_rng(2)
        layer = Dense(4, 3, rng=rng)
        x = rng.standard_normal((1, 4))
        probe = rng.standard_normal((1, 3))
        _, _, grads, _ = linear_probe_loss(layer, x, probe)
        assert np.allclose(grads["weight"], np.outer(x[0], probe[0]))
        assert np.allclose(grads["bias"], probe[0])

    @pytest.mark.parametrize("make_layer", [ReLU, Sigmoid, Softmax,
                                            GlobalAvgPool, GradientStop])
    def test_parameter_free_layers(self, make_layer):
        rng = np.random.default_rng(3)
        layer = make_layer()
        shape = (2, 4, 3, 5) if isinstance(layer, GlobalAvgPool) else (3, 6)
        x = shifted_normal(rng, shape)
        out_shape = layer.out_shape(x.shape[1:])
        probe = rng.standard_normal((x.shape[0],) + out_shape)
        forward, _, _, dx = linear_probe_loss(layer, x, probe)
        numeric = numeric_gradients(forward, {"x": x})["x"]
        if isinstance(layer, GradientStop):
            # identity forward (numeric sees the probe), declared zero backward
            assert np.all(dx == 0.0)
            assert max_relative_error({"x": probe}, {"x": numeric}) < TOL
        else:
            assert max_relative_error({"x": dx}, {"x": numeric}) < TOL

    def test_dropout_train_mode_gradient(self):
        rng = np.random.default_rng(4)
        layer = Dropout(0.3)
        x = rng.standard_normal((4, 9))
        probe = rng.standard_normal((4, 9))
        forward, _, _, dx = linear_probe_loss(layer, x, probe, train=True, seed=7)
        numeric = numeric_gradients(forward, {"x": x})
        assert max_relative_error({"x": dx}, numeric) < TOL

    def test_gradient_stop_blocks_everything_upstream(self):
        rng = np.random.default_rng(5)
        net = Sequential([Dense(6, 5, rng=rng), ReLU(), GradientStop(),
                          Dense(5, 3, rng=rng)], input_shape=(6,))
        x = shifted_normal(rng, (2, 6))
        probe = rng.standard_normal((2, 3))
        y, caches = net.forward(x)
        _, grads = net.backward(probe, caches)
        assert np.all(grads[(0, "weight")] == 0.0)
        assert np.all(grads[(0, "bias")] == 0.0)
        assert np.abs(grads[(3, "weight")]).max() > 0.0


class TestShapes:
    def test_conv_identity_1x1(self):
        layer = Conv2D((1, 1), 1, 1, "valid", rng=np.random.default_rng(0))
        layer.params["weight"][...] = 1.0
        x = np.random.default_rng(1).standard_normal((2, 5, 4, 1))
        y, _ = layer.forward(x)
        assert np.allclose(y, x)

    def test_valid_padding_arithmetic(self):
        layer = Conv2D((3, 3), 10, 32, "valid", rng=np.random.default_rng(0))
        assert layer.out_shape((16, 64, 10)) == (14, 62, 32)

    def test_same_padding_preserves_dims(self):
        layer = Conv2D((3, 3), 4, 8, "same", rng=np.random.default_rng(0))
        assert layer.out_shape((16, 64, 4)) == (16, 64, 8)

    def test_kernel_too_large_rejected(self):
        layer = Conv2D((3, 3), 1, 1, "valid", rng=np.random.default_rng(0))
        with pytest.raises(LayerShapeError):
            layer.out_shape((2, 2, 1))

    def test_sequential_validates_at_construction(self):
        rng = np.random.default_rng(0)
        with pytest.raises(LayerShapeError, match="layer 1"):
            Sequential([Dense(4, 3, rng=rng), Dense(4, 2, rng=rng)],
                       input_shape=(4,))

    def test_forward_shape_mismatch_names_layer(self):
        rng = np.random.default_rng(0)
        net = Sequential([Dense(4, 3, rng=rng)], input_shape=(4,))
        with pytest.raises(LayerShapeError, match="layer 0"):
            net.forward(np.zeros((2, 5)))


class TestActivations:
    def test_softmax_rows_are_distributions(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((10, 9)) * 20.0
        p, _ = Softmax().forward(logits)
        assert np.all(p > 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_sigmoid_extremes_are_stable(self):
        p, _ = Sigmoid().forward(np.array([[-800.0, 0.0, 800.0]]))
        assert p[0, 0] == 0.0 and p[0, 1] == 0.5 and p[0, 2] == 1.0

    def test_dropout_eval_is_identity(self):
        x = np.random.default_rng(7).standard_normal((5, 8))
        y, _ = Dropout(0.5).forward(x, train=False)
        assert np.array_equal(y, x)

    def test_dropout_train_masks_and_scales(self):
        rng = np.random.default_rng(8)
        x = np.ones((2000, 10))
        y, _ = Dropout(0.25).forward(x, train=True, rng=rng)
        kept = y != 0.0
        assert np.allclose(y[kept], 1.0 / 0.75)
        assert abs(kept.mean() - 0.75) < 0.02

    def test_global_avg_pool_backward_preserves_sums(self):
        rng = np.random.default_rng(9)
        layer = GlobalAvgPool()
        x = rng.standard_normal((3, 4, 5, 6))
        probe = rng.standard_normal((3, 6))
        _, cache = layer.forward(x)
        dx, _ = layer.backward(probe, cache)
        assert np.allclose(dx.sum(axis=(1, 2)), probe, atol=1e-12)


class TestLosses:
    def test_perfect_prediction_zero_loss(self):
        p = np.zeros(9)
        p[4] = 1.0
        loss, _ = cross_entropy(p, 4)
        assert loss == pytest.approx(0.0, abs=1e-9)

    def test_uniform_over_nine_classes(self):
        loss, _ = cross_entropy(np.full(9, 1.0 / 9.0), 3)
        assert loss == pytest.approx(math.log(9.0), rel=1e-12)

    def test_fused_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        logits = rng.standard_normal((4, 6))
        targets = rng.integers(0, 6, size=4)
        softmax = Softmax()

        def forward():
            p, _ = softmax.forward(logits)
            return cross_entropy(p, targets)[0]

        p, _ = softmax.forward(logits)
        _, analytic = cross_entropy(p, targets)
        numeric = numeric_gradients(forward, {"logits": logits})
        assert max_relative_error({"logits": analytic}, numeric) < TOL

    def test_target_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            cross_entropy(np.full(9, 1.0 / 9.0), 9)

    def test_binary_fused_gradient(self):
        rng = np.random.default_rng(11)
        logits = rng.standard_normal(5)
        y = rng.integers(0, 2, size=5).astype(float)
        w = rng.uniform(0.5, 2.0, size=5)
        sigmoid = Sigmoid()

        def forward():
            p, _ = sigmoid.forward(logits[None, :])
            return binary_cross_entropy(p[0], y, w)[0]

        p, _ = sigmoid.forward(logits[None, :])
        _, analytic = binary_cross_entropy(p[0], y, w)
        numeric = numeric_gradients(forward, {"logits": logits})
        assert max_relative_error({"logits": analytic}, numeric) < TOL


class TestAdam:
    def test_zero_gradient_fresh_state_no_move(self):
        p = {"w": np.array([1.0, -2.0])}
        Adam(p, lr=0.1).step({"w": np.zeros(2)})
        assert np.array_equal(p["w"], [1.0, -2.0])

    def test_first_step_magnitude(self):
        p = {"w": np.array([0.0])}
        opt = Adam(p, lr=0.1)
        opt.step({"w": np.array([1.0])})
        assert p["w"][0] == pytest.approx(-0.1, rel=1e-6)

    def test_repeated_unit_gradient_drifts_steadily(self):
        p = {"w": np.array([0.0])}
        opt = Adam(p, lr=0.1)
        for _ in range(10):
            opt.step({"w": np.array([1.0])})
        assert p["w"][0] == pytest.approx(-1.0, rel=1e-2)

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(12)
            p = {"w": rng.standard_normal(6)}
            opt = Adam(p, lr=1e-2)
            for _ in range(25):
                opt.step({"w": np.sin(p["w"]) + 0.1})
            return p["w"].copy()

        assert np.array_equal(run(), run())

    def test_non_finite_gradient_names_parameter(self):
        p = {("dense", 0, "weight"): np.zeros(3)}
        opt = Adam(p)
        with pytest.raises(ValueError, match="dense"):
            opt.step({("dense", 0, "weight"): np.array([1.0, np.nan, 0.0])})


def test_loss_strictly_decreases_over_first_ten_steps():
    rng = np.random.default_rng(13)
    net = Sequential([Dense(12, 16, rng=rng), ReLU(), Dense(16, 4, rng=rng),
                      Softmax()], input_shape=(12,))
    x = shifted_normal(rng, (32, 12))
    y = rng.integers(0, 4, size=32)
    opt = Adam(net.parameters(), lr=1e-3)
    losses = []
    for _ in range(11):
        probs, caches = net.forward(x)
        loss, dlogits = cross_entropy(probs, y)
        losses.append(loss)
        _, grads = net.backward(dlogits, caches, from_layer=len(net.layers) - 2)
        opt.step(grads)
    assert all(b < a for a, b in zip(losses, losses[1:]))
