import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

import oracles
from conftest import make_panel
from sectorrank.predictors import (
    EsnNetwork,
    GruNetwork,
    LstmNetwork,
    RidgeModel,
    Standardizer,
    TrainConfig,
    TrainingDivergedError,
    esn_fit_readout,
    esn_init,
    esn_update,
    gru_cell,
    load_model,
    lstm_cell,
    make_model,
    make_supervised,
    predict_price,
    query_block,
    ridge_fit,
    ridge_solve,
    rnn_train,
    save_model,
)
from sectorrank.predictors.esn import Reservoir, echo_probe, probe_input, spectral_radius
from sectorrank.predictors.recurrent import GruLayer, LstmLayer

# ---------------------------------------------------------------- windows


def test_window_counting():
    panel = make_panel(10)
    w = make_supervised(panel, "IYW", ["f0", "f1"], 3, 1)
    assert len(w) == 7
    assert w.inputs.shape == (7, 3, 2)
    assert w.end_months[0] == panel.months[2] and w.end_months[-1] == panel.months[8]
    assert np.array_equal(w.targets, panel.prices["IYW"].to_numpy()[3:10])
    assert np.array_equal(w.inputs[0], panel.features[["f0", "f1"]].to_numpy()[0:3])


def test_window_lookback_one():
    panel = make_panel(10)
    w = make_supervised(panel, "IYW", ["f0"], 1, 1)
    assert len(w) == 9 and w.inputs.shape[1] == 1


def test_window_too_short():
    with pytest.raises(ValueError):
        make_supervised(make_panel(10), "IYW", ["f0"], 8, 3)


def test_query_block():
    panel = make_panel(12)
    block = query_block(panel, ["f2"], 4, end=panel.months[5])
    assert np.array_equal(block[:, 0], panel.features["f2"].to_numpy()[2:6])


def test_standardizer_round_trip():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((20, 5, 3)) * 50 + 7, rng.standard_normal(20) * 9 + 100
    s = Standardizer().fit(X, y)
    assert np.allclose(s.inverse_transform(s.transform(X)), X, atol=1e-12, rtol=0)
    assert np.allclose(s.inverse_transform_target(s.transform_target(y)), y, atol=1e-12, rtol=0)
    assert np.allclose(s.transform(X).reshape(-1, 3).mean(axis=0), 0, atol=1e-12)


def test_standardizer_constant_column_warns():
    X = np.ones((4, 2, 1))
    with pytest.warns(RuntimeWarning):
        s = Standardizer().fit(X, np.arange(4.0))
    assert s.scale_[0] == 1.0


# ---------------------------------------------------------------- ridge


def test_ridge_identity_closed_form():
    y = np.array([3.0, -1.5, 8.0, 0.25])
    for lam in (0.5, 1.0, 10.0):
        beta, _ = ridge_solve(np.eye(4), y, lam, fit_intercept=False)
        assert np.allclose(beta, y / (1 + lam), atol=1e-12, rtol=0)


def test_ridge_zero_penalty_is_least_squares():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((30, 4)), rng.standard_normal(30)
    coef, b = ridge_solve(X, y, 0.0)
    ref = np.linalg.lstsq(np.hstack([X, np.ones((30, 1))]), y, rcond=None)[0]
    assert np.allclose(np.append(coef, b), ref, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_ridge_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.standard_normal((20, 5)), rng.standard_normal(20)
    coef, b = ridge_solve(X, y, 10.0)
    ref_coef, ref_b = oracles.ridge_dense(X, y, 10.0)
    assert np.allclose(coef, ref_coef, atol=1e-10) and b == pytest.approx(ref_b, abs=1e-10)


def test_ridge_rank_deficient_falls_back():
    X = np.ones((5, 2))
    coef, b = ridge_solve(X, np.arange(5.0), 0.0)
    assert np.all(np.isfinite(coef)) and np.isfinite(b)


def test_ridge_rejects_nonfinite():
    with pytest.raises(ValueError):
        ridge_solve(np.array([[np.inf]]), np.array([1.0]), 1.0)


def test_ridge_model_intercept_only_predicts_mean():
    panel = make_panel(40)
    w = make_supervised(panel, "IYH", ["f0", "f1"], 3, 1)
    model = ridge_fit(w)
    assert model.coef_.shape == (6,)
    model.coef_ = np.zeros(6)
    model.intercept_ = 0.0
    assert predict_price(model, w.inputs[0]) == pytest.approx(w.targets.mean(), rel=1e-12)


# ---------------------------------------------------------------- cells


def _lstm_layer(p):
    return LstmLayer(
        np.vstack([p[f"W_{g}"] for g in "fico"]),
        np.vstack([p[f"U_{g}"] for g in "fico"]),
        np.concatenate([p[f"b_{g}"] for g in "fico"]),
    )


def _gru_layer(p):
    return GruLayer(
        np.vstack([p[f"W_{g}"] for g in "zrh"]),
        np.vstack([p[f"U_{g}"] for g in "zrh"]),
        np.concatenate([p[f"b_{g}"] for g in "zrh"]),
    )


def test_lstm_zero_params():
    layer = LstmLayer(np.zeros((12, 3)), np.zeros((12, 2)), np.zeros(12))
    c_prev = np.array([1.0, -2.0, 0.3])
    h, c = lstm_cell(np.ones(2), np.full(3, 0.7), c_prev, layer)
    assert np.allclose(c, 0.5 * c_prev, atol=1e-15)
    assert np.allclose(h, 0.5 * np.tanh(0.5 * c_prev), atol=1e-15)
    h, c = lstm_cell(np.ones(2), np.ones(3), np.zeros(3), layer)
    assert np.array_equal(h, np.zeros(3))


def test_gru_zero_params():
    layer = GruLayer(np.zeros((9, 3)), np.zeros((9, 2)), np.zeros(9))
    h_prev = np.array([0.4, -1.0, 2.0])
    assert np.allclose(gru_cell(np.ones(2), h_prev, layer), 0.5 * h_prev, atol=1e-15)
    assert np.array_equal(gru_cell(np.ones(2), np.zeros(3), layer), np.zeros(3))


@pytest.mark.parametrize("seed", range(10))
def test_cells_match_transcription(seed):
    rng = np.random.default_rng(seed)
    d, H = 3, 4
    p = oracles.lstm_params(rng, d, H)
    x, h0, c0 = rng.standard_normal(d), rng.standard_normal(H), rng.standard_normal(H)
    h, c = lstm_cell(x, h0, c0, _lstm_layer(p))
    h_ref, c_ref = oracles.lstm_step(x, h0, c0, p)
    assert np.allclose(h, h_ref, atol=1e-12, rtol=0) and np.allclose(c, c_ref, atol=1e-12, rtol=0)
    g = oracles.gru_params(rng, d, H)
    assert np.allclose(gru_cell(x, h0, _gru_layer(g)), oracles.gru_step(x, h0, g), atol=1e-12, rtol=0)


def test_cell_shape_mismatch():
    layer = LstmLayer(np.zeros((12, 3)), np.zeros((12, 2)), np.zeros(12))
    with pytest.raises(ValueError):
        lstm_cell(np.ones(3), np.zeros(3), np.zeros(3), layer)
    with pytest.raises(ValueError):
        gru_cell(np.ones(2), np.zeros(2), GruLayer(np.zeros((9, 3)), np.zeros((9, 2)), np.zeros(9)))


def test_gate_named_views():
    rng = np.random.default_rng(0)
    p = oracles.lstm_params(rng, 2, 3)
    layer = _lstm_layer(p)
    assert np.array_equal(layer.W_c, p["W_c"]) and np.array_equal(layer.b_o, p["b_o"])


# ---------------------------------------------------------------- training


@pytest.mark.parametrize("cls", [LstmNetwork, GruNetwork])
def test_gradient_check(cls):
    net, Z, t = oracles.toy_recurrent(cls, seed=1)
    assert oracles.gradient_check(net, Z, t) < 1e-4


@pytest.mark.parametrize("cls", [LstmNetwork, GruNetwork])
def test_gradient_check_without_relu(cls):
    net, Z, t = oracles.toy_recurrent(cls, seed=2)
    net.inter_layer_relu = False  # smooth everywhere
    assert oracles.gradient_check(net, Z, t) < 1e-4


def test_zero_target_stops_at_first_epoch():
    X = np.random.default_rng(0).standard_normal((10, 4, 2))
    with pytest.warns(RuntimeWarning):
        net = LstmNetwork(hidden_sizes=(3,), epochs=50).fit(X, np.zeros(10))
    assert net.epochs_run_ == 1 and net.loss_history_ == [0.0]


@pytest.mark.parametrize("cls", [LstmNetwork, GruNetwork])
def test_overfit_single_block(cls):
    X = np.random.default_rng(0).standard_normal((1, 4, 2))
    net = cls(hidden_sizes=(4, 4), epochs=1000, standardize=False)
    cfg = TrainConfig(learning_rate=1e-2, epochs=1000, patience=1000)
    net, history = rnn_train(net, (X, np.array([2.0])), cfg)
    assert history[-1] < 0.1 * history[0]
    running = np.minimum.accumulate(history)
    assert np.all(np.diff(running) <= 0)
    assert all(np.all(np.isfinite(p)) for p in net.parameters())


def test_divergence_reports_epoch(monkeypatch):
    net = GruNetwork(hidden_sizes=(2,), epochs=5)
    calls = {"n": 0}
    real = GruNetwork.loss_and_grads

    def flaky(self, Z, t):
        calls["n"] += 1
        loss, grads = real(self, Z, t)
        return (np.nan if calls["n"] == 3 else loss), grads

    monkeypatch.setattr(GruNetwork, "loss_and_grads", flaky)
    X = np.random.default_rng(0).standard_normal((6, 3, 2))
    with pytest.raises(TrainingDivergedError) as info:
        net.fit(X, np.arange(6.0))
    assert info.value.epoch == 3


def test_gate_activations_bounded():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((8, 5, 2)) * 10, rng.standard_normal(8)
    for net in (LstmNetwork(hidden_sizes=(3, 3), epochs=3), GruNetwork(hidden_sizes=(3, 3), epochs=3)):
        acts = net.fit(X, y).trace(X * 100)
        for name, values in acts.items():
            lo = 0.0 if name in ("f", "i", "o", "z", "r") else -1.0
            assert np.all(values >= lo) and np.all(values <= 1.0), name
            assert np.all(np.isfinite(net.predict(X * 1e6)))


def test_recurrent_determinism():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((8, 4, 2)), rng.standard_normal(8)
    a = LstmNetwork(hidden_sizes=(3, 2), epochs=20, random_state=4).fit(X, y)
    b = LstmNetwork(hidden_sizes=(3, 2), epochs=20, random_state=4).fit(X, y)
    assert a.loss_history_ == b.loss_history_


def test_forget_bias_and_zero_readout():
    net = LstmNetwork(hidden_sizes=(3,))
    net._init_layers(2, np.random.default_rng(0))
    assert np.array_equal(net.layers_[0].b_f, np.ones(3))
    assert np.array_equal(net.layers_[0].b_i, np.zeros(3))
    assert np.array_equal(net.readout_w_, np.zeros(3))
    assert np.all(np.abs(net.layers_[0].U) <= 1 / np.sqrt(2))


def test_weight_decay_option():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((8, 4, 2)), rng.standard_normal(8)
    plain = GruNetwork(hidden_sizes=(3,), epochs=30, learning_rate=1e-2).fit(X, y)
    decayed = GruNetwork(hidden_sizes=(3,), epochs=30, learning_rate=1e-2, weight_decay=1.0).fit(X, y)
    assert not np.array_equal(plain.layers_[0].W, decayed.layers_[0].W)


# ---------------------------------------------------------------- esn


def test_esn_density_one():
    net = esn_init(1, n_reservoir=2, density=1.0, seed=0)
    assert np.count_nonzero(net.W) == 4


@pytest.mark.parametrize("seed", range(5))
def test_esn_spectral_radius_vs_dense(seed):
    net = esn_init(4, n_reservoir=100, seed=seed)
    assert abs(np.max(np.abs(np.linalg.eigvals(net.W))) - 1.0) < 1e-6
    assert abs(np.count_nonzero(net.W) / net.W.size - 0.5) < 0.05
    assert np.all(np.abs(net.W_in) <= 1.0)


def test_spectral_radius_complex_pair():
    W = np.array([[0.0, -2.0], [2.0, 0.0]])
    assert spectral_radius(W) == pytest.approx(2.0, abs=1e-9)


def test_esn_init_deterministic():
    a, b = esn_init(3, 20, seed=5), esn_init(3, 20, seed=5)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.W_in, b.W_in)
    a.W_in[0, 0] = 99.0  # returned matrices are private copies
    assert esn_init(3, 20, seed=5).W_in[0, 0] != 99.0


def test_esn_update_examples():
    net = esn_init(2, 5, seed=0)
    assert np.array_equal(esn_update(net, np.zeros(2)), np.zeros(5))
    u = np.array([0.3, -2.0, 1.1])
    degenerate = Reservoir(np.eye(3), np.zeros((3, 3)), 1.0, np.full(3, 5.0), 0.0)
    assert np.allclose(esn_update(degenerate, u), np.tanh(u), atol=1e-15)
    with pytest.raises(ValueError):
        esn_update(net, np.zeros(3))


@pytest.mark.parametrize("seed", range(5))
def test_esn_update_transcription(seed):
    rng = np.random.default_rng(seed)
    net = esn_init(3, 6, leaking_rate=0.3, seed=seed)
    x = rng.standard_normal(6)
    net.state = x.copy()
    u = rng.standard_normal(3)
    expected = oracles.esn_step(x, u, net.W_in, net.W, 0.3)
    assert np.allclose(esn_update(net, u), expected, atol=1e-12, rtol=0)


def test_esn_readout_constant_targets():
    Z = np.random.default_rng(0).standard_normal((30, 5, 2))
    coef, b = esn_fit_readout(esn_init(2, 20, seed=1), Z, np.zeros(30))
    assert np.allclose(coef, 0, atol=1e-12) and abs(b) < 1e-12


def test_esn_readout_matches_oracle():
    rng = np.random.default_rng(1)
    Z, t = rng.standard_normal((40, 6, 2)), rng.standard_normal(40)
    net = esn_init(2, 30, seed=2)
    coef, b = esn_fit_readout(net, Z, t, alpha=1.0)
    states = []
    for block in Z:
        x = np.zeros(30)
        for u in block:
            x = oracles.esn_step(x, u, net.W_in, net.W, net.leaking_rate)
        states.append(np.concatenate([x, block[-1]]))
    ref_coef, ref_b = oracles.ridge_dense(np.array(states), t, 1.0)
    assert np.allclose(coef, ref_coef, atol=1e-8) and b == pytest.approx(ref_b, abs=1e-8)


def test_esn_washout_drops_blocks():
    rng = np.random.default_rng(1)
    Z, t = rng.standard_normal((20, 4, 2)), rng.standard_normal(20)
    net = esn_init(2, 10, seed=2)
    assert np.allclose(esn_fit_readout(net, Z, t, washout=5)[0], esn_fit_readout(net, Z[5:], t[5:])[0])


def test_esn_single_block_interpolates():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((1, 5, 2))
    net = esn_init(2, 20, seed=0)
    coef, b = esn_fit_readout(net, Z, np.array([0.7]), alpha=1e-10)
    model = EsnNetwork(n_reservoir=20, readout_alpha=1e-10, standardize=False).fit(Z, np.array([0.7]))
    assert model.predict(Z)[0] == pytest.approx(0.7, abs=1e-6)


def test_esn_constant_price():
    panel = make_panel(60)
    panel.prices["IYK"] = 42.0
    w = make_supervised(panel, "IYK", ["f0", "f1"], 6, 1)
    with pytest.warns(RuntimeWarning):
        model = EsnNetwork().fit(w)
    assert predict_price(model, w.inputs[-1]) == pytest.approx(42.0, abs=1e-6)


def test_echo_probe_converges():
    for seed in range(5):
        net = esn_init(4, seed=seed)
        rng = np.random.default_rng(seed)
        assert echo_probe(net, probe_input(), rng.uniform(-1, 1, 100), rng.uniform(-1, 1, 100)) < 1e-6


# ---------------------------------------------------------------- estimator plumbing


@pytest.mark.parametrize("kind", ["ridge", "lstm", "gru", "esn"])
def test_checkpoint_round_trip(kind, tmp_path):
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((12, 4, 3)), rng.standard_normal(12) * 5 + 50
    params = {"hidden_sizes": (3, 2), "epochs": 5} if kind in ("lstm", "gru") else {}
    model = make_model(kind, seed=3, **params).fit(X, y)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert type(back) is type(model)
    assert np.array_equal(back.predict(X), model.predict(X))
    assert back.get_params() == model.get_params()


def test_make_model_unknown():
    with pytest.raises(ValueError):
        make_model("svm")


def test_unfitted_and_shape_errors():
    with pytest.raises(NotFittedError):
        RidgeModel().predict(np.zeros((1, 2, 2)))
    model = RidgeModel().fit(np.random.default_rng(0).standard_normal((5, 2, 2)), np.arange(5.0))
    with pytest.raises(ValueError):
        model.predict(np.zeros((1, 3, 2)))


def test_ridge_esn_bit_determinism():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((30, 6, 3)), rng.standard_normal(30)
    for kind in ("ridge", "esn"):
        a, b = make_model(kind, seed=1).fit(X, y), make_model(kind, seed=1).fit(X, y)
        assert np.array_equal(a.coef_, b.coef_)


def test_ridge_singular_minimum_norm():
    X = np.hstack([np.arange(5.0)[:, None]] * 2)
    coef, _ = ridge_solve(X, 3 * np.arange(5.0), 0.0, fit_intercept=False)
    assert np.allclose(coef, [1.5, 1.5], atol=1e-10)
