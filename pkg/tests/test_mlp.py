import numpy as np
import pytest

from hrtfpca import mlp
from hrtfpca.mlp import MlpNetwork, TrainConfig, gradient_check, load_network, save_network, train


def make_data(rng, n=40, d_in=3, d_out=2):
    x = rng.normal(size=(n, d_in))
    w = rng.normal(size=(d_in, d_out))
    y = x @ w + 0.1 * np.sin(3 * x[:, :1])
    return x, y


class TestScaling:
    def test_standardized_stats(self):
        rng = np.random.default_rng(0)
        x = rng.normal(loc=5.0, scale=3.0, size=(50, 4))
        s = mlp.Scaler.fit(x)
        z = s.scale(x)
        assert np.max(np.abs(z.mean(axis=0))) < 1e-10
        assert np.max(np.abs(z.std(axis=0) - 1.0)) < 1e-10

    def test_target_headroom(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=(30, 3)) * 40
        s = mlp.Scaler.fit(y, for_targets=True)
        z = s.scale(y)
        assert np.max(np.abs(z)) <= 1 / 1.2 + 1e-12
        np.testing.assert_allclose(s.unscale(z), y, atol=1e-10)

    def test_constant_feature_safe(self):
        y = np.full((10, 2), 7.0)
        s = mlp.Scaler.fit(y, for_targets=True)
        np.testing.assert_allclose(s.unscale(s.scale(y)), y)


class TestForward:
    def test_zero_net_outputs_target_mean(self):
        rng = np.random.default_rng(2)
        x, y = make_data(rng)
        net = MlpNetwork([3, 4, 2], seed=0)
        net.fit_scalers(x, y)
        for w in net.weights:
            w[:] = 0.0
        out = net.forward(x[0])
        np.testing.assert_allclose(out, y.mean(axis=0), atol=1e-12)

    def test_micro_net_hand_computed(self):
        # 1->1 net: output = unscale(tanh(w * scale(x) + b))
        net = MlpNetwork([1, 1], seed=0)
        x = np.array([[0.0], [2.0]])
        y = np.array([[1.0], [3.0]])
        net.fit_scalers(x, y)
        net.weights[0][:] = 0.5
        net.biases[0][:] = 0.1
        scaled = (1.5 - 1.0) / 1.0  # x=1.5 standardized (mean 1, std 1)
        expected = net.target_scaler.unscale(np.array([np.tanh(0.5 * scaled + 0.1)]))
        np.testing.assert_allclose(net.forward(np.array([1.5])), expected)

    def test_output_bounded_by_tanh_range(self):
        rng = np.random.default_rng(3)
        x, y = make_data(rng)
        net = MlpNetwork([3, 8, 2], seed=1)
        net.fit_scalers(x, y)
        huge = net.forward(np.array([1e6, -1e6, 1e6]))
        bound = np.abs(
            net.target_scaler.unscale(np.ones(2))
        ) + np.abs(net.target_scaler.unscale(-np.ones(2)))
        assert np.all(np.abs(huge) <= bound)

    def test_dimension_mismatch(self):
        net = MlpNetwork([3, 2], seed=0)
        net.fit_scalers(np.zeros((4, 3)), np.zeros((4, 2)))
        with pytest.raises(ValueError):
            net.forward(np.zeros(5))


class TestTraining:
    def test_learns_constant(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(20, 3))
        y = np.tile([2.5, -1.0], (20, 1))
        net = MlpNetwork([3, 4, 2], seed=0)
        net.fit_scalers(x, y)
        net, history = train(net, x, y, None, None,
                             TrainConfig(learning_rate=0.3, max_epochs=1000))
        out = net.forward(x)
        assert np.mean((out - y) ** 2) < 1e-4

    def test_learns_xor(self):
        x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([[0.0], [1.0], [1.0], [0.0]])
        net = MlpNetwork([2, 4, 1], seed=3)
        net.fit_scalers(x, y)
        net, _ = train(net, x, y, None, None,
                       TrainConfig(learning_rate=0.05, max_epochs=20000))
        out = net.forward(x)
        assert np.mean((out - y) ** 2) < 0.01

    def test_history_decreases_over_windows(self):
        rng = np.random.default_rng(5)
        x, y = make_data(rng)
        net = MlpNetwork([3, 8, 2], seed=0)
        net.fit_scalers(x, y)
        _, history = train(net, x, y, None, None, TrainConfig(max_epochs=600))
        h = np.asarray(history.train_losses)
        assert np.all(h[50:] <= h[:-50] + 1e-12)

    def test_early_stopping_returns_best_snapshot(self):
        rng = np.random.default_rng(6)
        x, y = make_data(rng, n=12)
        vx = rng.normal(size=(6, 3))
        vy = vx @ rng.normal(size=(3, 2)) + rng.normal(size=(6, 2))  # off-manifold
        net = MlpNetwork([3, 16, 2], seed=0)
        net.fit_scalers(x, y)
        net, history = train(net, x, y, vx, vy,
                             TrainConfig(learning_rate=0.02, max_epochs=3000, patience=60))
        assert history.best_epoch == int(np.argmin(history.valid_losses))
        # the returned network is the snapshot from the best epoch
        returned = net._forward_scaled(net.input_scaler.scale(vx))[-1]
        returned_loss = float(np.mean(np.sum(
            (returned - net.target_scaler.scale(vy)) ** 2, axis=1)))
        assert returned_loss == pytest.approx(min(history.valid_losses), rel=1e-12)
        # stopping happened before the budget once validation stalled
        assert len(history.train_losses) < 3000 or history.best_epoch > 3000 - 60

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(8)
        x, y = make_data(rng)

        def run():
            net = MlpNetwork([3, 6, 2], seed=42)
            net.fit_scalers(x, y)
            net, _ = train(net, x, y, x[:5], y[:5], TrainConfig(max_epochs=200, seed=42))
            return net

        a, b = run(), run()
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            np.testing.assert_array_equal(ba, bb)

    def test_divergence_reported_with_epoch(self):
        rng = np.random.default_rng(9)
        x, y = make_data(rng)
        net = MlpNetwork([3, 4, 2], seed=0)
        net.fit_scalers(x, y)
        net.weights[0][0, 0] = np.nan
        with pytest.raises(RuntimeError, match="epoch"):
            train(net, x, y, None, None, TrainConfig(max_epochs=10))

    def test_shape_mismatch(self):
        net = MlpNetwork([3, 2], seed=0)
        net.fit_scalers(np.zeros((4, 3)), np.zeros((4, 2)))
        with pytest.raises(ValueError):
            train(net, np.zeros((4, 3)), np.zeros((4, 3)), None, None, TrainConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)


class TestGradients:
    def test_random_small_nets(self):
        rng = np.random.default_rng(10)
        for i in range(20):
            sizes = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(2, 4)))]
            net = MlpNetwork(sizes, seed=i)
            x = rng.normal(size=(3, sizes[0]))
            y = rng.normal(size=(3, sizes[-1]))
            assert gradient_check(net, x, y) < 1e-4

    def test_zero_input_first_layer_grads(self):
        net = MlpNetwork([2, 3, 1], seed=0)
        x = np.zeros((1, 2))
        y = np.ones((1, 1))
        _, grad_w, _ = net._loss_and_gradients(x, y)
        np.testing.assert_allclose(grad_w[0], 0.0)

    def test_linear_regime(self):
        net = MlpNetwork([2, 2, 1], seed=0)
        for w in net.weights:
            w *= 1e-3
        rng = np.random.default_rng(11)
        x = rng.normal(size=(2, 2)) * 1e-3
        y = rng.normal(size=(2, 1)) * 1e-3
        assert gradient_check(net, x, y) < 1e-6


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        x, y = make_data(rng)
        net = MlpNetwork([3, 5, 2], seed=9)
        net.fit_scalers(x, y)
        net, _ = train(net, x, y, x[:8], y[:8], TrainConfig(max_epochs=50))
        save_network(net, tmp_path / "net.json")
        back = load_network(tmp_path / "net.json")
        np.testing.assert_array_equal(back.forward(x), net.forward(x))
        assert back.layer_sizes == net.layer_sizes
        assert back.epochs_trained == net.epochs_trained
