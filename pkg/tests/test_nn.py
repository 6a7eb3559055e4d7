import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evnugget import nn
from oracles import blobs, numeric_gradient, random_net, relative_error


def assert_gradient_matches(net, X, y):
    analytic = nn.gradient(net, (X, y))
    num_w, num_b = numeric_gradient(net, X, y)
    for a, n in zip(analytic.weights + analytic.biases, num_w + num_b):
        assert relative_error(a, n).max() < 1e-4


class TestConfig:
    def test_from_table_shapes(self):
        cfg = nn.NetConfig.from_table("2468-600-600-50-4", "0-.5-0-0-0", 10)
        assert cfg.layer_sizes == (2468, 600, 600, 50, 4)
        assert cfg.dropout_rates == (0.0, 0.5, 0.0, 0.0, 0.0)
        assert cfg.activations == ("relu", "tanh", "tanh", "softmax")
        assert (cfg.learning_rate, cfg.batch_size) == (0.01, 32)

    def test_short_dropout_padded(self):
        cfg = nn.NetConfig.from_table("2468-600-600-50-4", "0-.2-0-0", 15)
        assert cfg.dropout_rates == (0.0, 0.2, 0.0, 0.0, 0.0)

    @pytest.mark.parametrize("kwargs", [
        dict(layer_sizes=(3, 2), dropout_rates=(0, 0.5), activations=("softmax",)),
        dict(layer_sizes=(3, 2, 2), dropout_rates=(0, 0, 0), activations=("softmax", "softmax")),
        dict(layer_sizes=(3, 2), dropout_rates=(0,), activations=("softmax",)),
        dict(layer_sizes=(3, 2), dropout_rates=(1.0, 0), activations=("softmax",)),
        dict(layer_sizes=(3, 2), dropout_rates=(0, 0), activations=("gelu",)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            nn.NetConfig(**kwargs)

    def test_json_round_trip(self):
        cfg = nn.NetConfig.from_table("5-3-2", "0.1-0.2", 3, seed=4, learning_rate=0.5)
        assert nn.NetConfig.from_json(cfg.to_json()) == cfg


class TestForward:
    def test_zero_net_uniform(self):
        net = nn.init_net(nn.NetConfig.from_table("6-5-4", "", 1))
        for w in net.weights:
            w[:] = 0
        np.testing.assert_array_equal(net(np.ones(6)), [0.25] * 4)

    def test_identity_net(self):
        cfg = nn.NetConfig((3, 3), (0, 0), ("identity",))
        net = nn.DenseNet([np.eye(3)], [np.zeros(3)], cfg)
        x = np.array([1.5, -2.0, 0.25])
        np.testing.assert_array_equal(net(x), x)

    def test_softmax_closed_form(self):
        np.testing.assert_allclose(nn.softmax(np.array([np.log(2), 0.0])), [2 / 3, 1 / 3], rtol=0, atol=1e-15)

    def test_dimension_mismatch(self):
        net = nn.init_net(nn.NetConfig.from_table("4-2", "", 1))
        with pytest.raises(ValueError, match="width"):
            net(np.ones(5))

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(0)
        net = random_net(rng, [5, 4, 3], ["tanh"])
        X = rng.normal(size=(7, 5))
        batch = nn.predict(net, X)
        for i in range(7):
            np.testing.assert_allclose(batch[i], net(X[i]), rtol=0, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_softmax_outputs_are_distributions(self, seed):
        rng = np.random.default_rng(seed)
        net = random_net(rng, [6, 5, 4], ["relu"])
        out = nn.predict(net, rng.normal(scale=3, size=(10, 6)))
        assert ((out > 0) & (out < 1)).all()
        np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_sigmoid_stable(self):
        z = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
        s = nn.sigmoid(z)
        assert np.isfinite(s).all() and s[2] == 0.5
        np.testing.assert_allclose(s + nn.sigmoid(-z), 1.0, atol=1e-15)

    def test_train_mode_needs_rng(self):
        net = random_net(np.random.default_rng(0), [3, 2], [])
        with pytest.raises(ValueError):
            nn.forward(net, np.ones(3), "train")

    def test_inverted_dropout_expectation(self):
        rng = np.random.default_rng(7)
        cfg = nn.NetConfig((8, 6, 3), (0.3, 0.5, 0.0), ("identity", "identity"))
        net = nn.init_net(cfg, rng)
        x = rng.normal(size=8)
        expected = net(x)
        draws = 40000
        X = np.tile(x, (draws, 1))
        out, _ = nn.forward(net, X, "train", np.random.default_rng(1))
        mean = out.mean(axis=0)
        stderr = out.std(axis=0) / np.sqrt(draws)
        assert (np.abs(mean - expected) < 5 * stderr + 1e-12).all()

    def test_infer_mode_is_deterministic(self):
        cfg = nn.NetConfig.from_table("5-4-3", "0.5-0.5", 1)
        net = nn.init_net(cfg)
        x = np.ones(5)
        np.testing.assert_array_equal(nn.forward(net, x)[0], nn.forward(net, x)[0])


class TestGradient:
    def test_zero_net_bias_gradient(self):
        cfg = nn.NetConfig.from_table("5-3-4", "", 1)
        net = nn.init_net(cfg)
        for w in net.weights:
            w[:] = 0
        g = nn.gradient(net, (np.ones((1, 5)), np.array([2])))
        np.testing.assert_allclose(g.biases[-1], [0.25, 0.25, -0.75, 0.25], atol=1e-15)

    def test_random_5_3_2_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        net = random_net(rng, [5, 3, 2], ["relu"])
        X, y = rng.normal(size=(4, 5)), rng.integers(0, 2, 4)
        assert_gradient_matches(net, X, y)

    @pytest.mark.parametrize("acts", [("relu", "tanh"), ("tanh", "sigmoid"), ("sigmoid", "identity"), ("identity", "relu")])
    def test_deeper_nets(self, acts):
        rng = np.random.default_rng(len(acts[0]) * 31 + len(acts[1]))
        net = random_net(rng, [4, 5, 3, 3], list(acts))
        X, y = rng.normal(size=(6, 4)), rng.integers(0, 3, 6)
        assert_gradient_matches(net, X, y)

    def test_sigmoid_output_binary_ce(self):
        rng = np.random.default_rng(3)
        net = random_net(rng, [4, 3, 1], ["tanh"], out="sigmoid")
        X, y = rng.normal(size=(5, 4)), rng.integers(0, 2, 5)
        assert_gradient_matches(net, X, y)

    def test_duplicated_batch(self):
        rng = np.random.default_rng(9)
        net = random_net(rng, [5, 4, 3], ["tanh"])
        X, y = rng.normal(size=(4, 5)), rng.integers(0, 3, 4)
        g1 = nn.gradient(net, (X, y)).flat()
        g2 = nn.gradient(net, (np.vstack([X, X]), np.concatenate([y, y]))).flat()
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)

    def test_input_gradient(self):
        rng = np.random.default_rng(4)
        net = random_net(rng, [4, 3, 2], ["tanh"])
        x = rng.normal(size=4)
        v = np.array([0.3, -1.2])
        _, cache = nn.forward(net, x)
        g = nn.backward(net, cache, v).inputs
        h = 1e-6
        num = [(v @ net(x + h * e) - v @ net(x - h * e)) / (2 * h) for e in np.eye(4)]
        np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-9)


class TestTraining:
    def test_zero_learning_rate_keeps_initialisation(self):
        cfg = nn.NetConfig.from_table("6-4-3", "0-0.5", 1, learning_rate=0.0, seed=5)
        rng = np.random.default_rng(0)
        net = nn.train(cfg, rng.normal(size=(20, 6)), rng.integers(0, 3, 20), 3)
        assert nn.serialize(net) == nn.serialize(nn.init_net(cfg))

    def test_overfit_two_class(self):
        X, y = blobs(1, dim=10, k=2)
        cfg = nn.NetConfig.from_table("10-600-600-50-2", "0-.5-0-0-0", 10, seed=1)
        assert nn.accuracy(nn.train(cfg, X, y, 2), X, y) >= 0.95

    def test_overfit_nineteen_class(self):
        X, y = blobs(2, n=400, dim=30, k=19, spread=4.0)
        cfg = nn.NetConfig.from_table("30-852-852-200-19", "0-0-0-0", 15, seed=2)
        assert nn.accuracy(nn.train(cfg, X, y, 19), X, y) >= 0.95

    def test_deterministic(self):
        X, y = blobs(3, n=64, dim=8, k=3)
        cfg = nn.NetConfig.from_table("8-16-3", "0.2-0.5", 3, seed=11)
        assert nn.serialize(nn.train(cfg, X, y, 3)) == nn.serialize(nn.train(cfg, X, y, 3))

    def test_seed_changes_result(self):
        X, y = blobs(3, n=64, dim=8, k=3)
        a = nn.train(nn.NetConfig.from_table("8-16-3", "", 2, seed=1), X, y, 3)
        b = nn.train(nn.NetConfig.from_table("8-16-3", "", 2, seed=2), X, y, 3)
        assert nn.serialize(a) != nn.serialize(b)

    def test_rejects_bad_data(self):
        cfg = nn.NetConfig.from_table("3-2", "", 1)
        with pytest.raises(ValueError, match="empty"):
            nn.train(cfg, np.zeros((0, 3)), np.zeros(0), 2)
        with pytest.raises(ValueError, match="out of range"):
            nn.train(cfg, np.zeros((2, 3)), np.array([0, 2]), 2)
        with pytest.raises(ValueError, match="classes"):
            nn.train(cfg, np.zeros((2, 3)), np.array([0, 1]), 3)

    def test_logs_epoch_loss(self, caplog):
        X, y = blobs(0, n=32, dim=8, k=2, spread=4.0)
        with caplog.at_level("INFO", logger="evnugget.nn"):
            nn.train(nn.NetConfig.from_table("8-2", "", 3), X, y, 2, name="probe")
        assert sum("probe epoch" in r.message for r in caplog.records) == 3


class TestSerialization:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(0)
        net = random_net(rng, [7, 5, 3], ["relu"])
        back = nn.deserialize(nn.serialize(net))
        assert back.config == net.config
        for a, b in zip(net.weights + net.biases, back.weights + back.biases):
            assert a.tobytes() == b.tobytes()

    def test_header_layout(self):
        net = random_net(np.random.default_rng(0), [3, 2], [])
        data = nn.serialize(net)
        assert data[:8] == b"EVNUGNN\x00"
        assert int.from_bytes(data[8:12], "little") == 1
        assert int.from_bytes(data[12:16], "little") == 1
        assert (int.from_bytes(data[16:20], "little"), int.from_bytes(data[20:24], "little")) == (2, 3)
        assert np.frombuffer(data[24:24 + 48], "<f8").tolist() == net.weights[0].ravel().tolist()

    def test_corruption_detected(self):
        data = nn.serialize(random_net(np.random.default_rng(0), [4, 3, 2], ["tanh"]))
        for cut in (5, 30, len(data) - 1):
            with pytest.raises(nn.ModelFormatError):
                nn.deserialize(data[:cut])
        with pytest.raises(nn.ModelFormatError, match="magic"):
            nn.deserialize(b"X" + data[1:])
        with pytest.raises(nn.ModelFormatError, match="trailing"):
            nn.deserialize(data + b"\x00")

    def test_cross_process_load(self, tmp_path):
        rng = np.random.default_rng(8)
        net = random_net(rng, [6, 5, 3], ["relu"])
        x = rng.normal(size=(4, 6))
        nn.save(net, tmp_path / "net.bin")
        np.save(tmp_path / "x.npy", x)
        script = ("import sys, numpy as np; from evnugget import nn; "
                  "d = sys.argv[1]; net = nn.load(d + '/net.bin'); "
                  "np.save(d + '/y.npy', nn.predict(net, np.load(d + '/x.npy')))")
        subprocess.run([sys.executable, "-c", script, str(tmp_path)], check=True)
        assert np.load(tmp_path / "y.npy").tobytes() == nn.predict(net, x).tobytes()
