import numpy as np
import pytest

import gradcheck
from mudec import models as md
from mudec import tensor as tn
from mudec.dsp import NormStats
from mudec.errors import ConfigError, ParameterError
from mudec.tensor import Tensor


def _conv_count(c_out, c_in, k):
    return c_out * c_in * k + c_out


def tcn_hand_count(f, w=64, k=9, blocks=6):
    stem = _conv_count(w, f, k)
    block = 2 * _conv_count(w, w, k) + 2 * w
    head = _conv_count(1, w, 1)
    return stem + blocks * block + head


def snn_hand_count(f, w=64, k=9):
    return _conv_count(w, f, k) + _conv_count(w, w, k) + 1 + _conv_count(1, w, 1)


def test_receptive_field():
    assert md.receptive_field(md.TcnConfig()) == 1 + 8 * (1 + 2 * (1 + 2 + 4 + 8 + 16 + 32)) == 1017
    assert md.receptive_field(md.SnnConfig()) == 1 + 8 * 3


@pytest.mark.parametrize("f", [1, 2, 8])
def test_parameter_counts(f):
    assert md.build_tcn(md.TcnConfig(in_features=f)).n_parameters() == tcn_hand_count(f)
    assert md.build_snn(md.SnnConfig(in_features=f)).n_parameters() == snn_hand_count(f)
    assert tcn_hand_count(2) == 445185


def test_receptive_field_is_tight():
    # the output at t responds to input at t - (RF - 1) but not earlier
    cfg = md.TcnConfig(width=4, kernel=3, dilations=[1, 2, 4], dropout=0.0)
    model = md.build_tcn(cfg, seed=1)
    # positive weights and inputs keep every ReLU open, so no path through the net is switched off
    for name, p in model.params.items():
        if name.endswith(".w"):
            p.data = np.abs(p.data) + 0.1
    rf = md.receptive_field(cfg)
    t_len = rf + 10
    out = lambda x: model(Tensor(x, dtype=np.float64)).data[0, -1]
    with tn.precision("f64"):
        base = np.random.default_rng(0).uniform(1, 2, size=(2, t_len))
        x = base.copy()
        x[:, t_len - rf] += 1.0
        assert out(x) != out(base)
        x = base.copy()
        x[:, : t_len - rf] += 1.0
        assert out(x) == out(base)


def test_zero_head_outputs_bias():
    model = md.build_tcn(md.TcnConfig(width=8, dilations=[1, 2]), seed=0)
    model.params["head.w"].data[:] = 0
    model.params["head.b"].data[:] = 0.37
    y = model(Tensor(np.random.default_rng(0).normal(size=(3, 2, 40)))).data
    assert np.allclose(y, 0.37)


def test_snn_zero_input_is_silent():
    model = md.build_snn(md.SnnConfig(width=16), seed=0)
    y = model(Tensor(np.zeros((2, 2, 64)))).data
    assert model.last_spikes.sum() == 0
    assert np.all(y == 0)


def test_snn_spikes_binary():
    model = md.build_snn(md.SnnConfig(width=16), seed=0)
    model(Tensor(3 * np.random.default_rng(0).normal(size=(2, 2, 128))))
    assert set(np.unique(model.last_spikes).tolist()) == {0.0, 1.0}


@pytest.mark.parametrize("kind", ["tcn", "snn"])
def test_strict_causality(kind):
    model = md.build_model(kind, {"width": 16}, seed=2)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 2, 256)).astype(np.float32)
    base = model(Tensor(x)).data
    for t in rng.integers(0, 256, 10):
        x2 = x.copy()
        x2[0, :, t] += rng.normal(size=2).astype(np.float32) * 5
        out = model(Tensor(x2)).data
        assert np.array_equal(out[..., :t], base[..., :t])


def test_tcn_shift_equivariance_on_interior(f64):
    cfg = md.TcnConfig(width=8, kernel=3, dilations=[1, 2], dropout=0.0)
    model = md.build_tcn(cfg, seed=0)
    rf = md.receptive_field(cfg)
    x = np.random.default_rng(0).normal(size=(1, 2, 80))
    shift = 7
    xs = np.concatenate([np.random.default_rng(1).normal(size=(1, 2, shift)), x], axis=2)
    y = model(Tensor(x)).data[0, 0]
    ys = model(Tensor(xs)).data[0, 0]
    assert np.allclose(ys[shift + rf :], y[rf:], atol=1e-10)


@pytest.mark.parametrize("kind", ["tcn", "snn"])
def test_batched_matches_single(kind, f64):
    model = md.build_model(kind, {"width": 8}, seed=0)
    x = np.random.default_rng(0).normal(size=(4, 2, 64))
    batched = model(Tensor(x)).data
    for i in range(4):
        assert np.allclose(model(Tensor(x[i])).data[0], batched[i, 0], atol=1e-12)


def test_train_mode_randomness_confined_to_dropout():
    model = md.build_tcn(md.TcnConfig(width=8, dilations=[1]), seed=0)
    x = Tensor(np.random.default_rng(0).normal(size=(2, 2, 32)))
    a = model(x, train=True, rng=np.random.default_rng(5)).data
    b = model(x, train=True, rng=np.random.default_rng(5)).data
    c = model(x, train=True, rng=np.random.default_rng(6)).data
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(model(x).data, model(x).data)


@pytest.mark.parametrize("seed", range(20))
def test_tcn_gradients(seed, f64):
    rng = np.random.default_rng(seed)
    cfg = md.TcnConfig(in_features=2, width=3, kernel=3, dilations=[1, 2], dropout=0.0)
    model = md.build_tcn(cfg, seed=seed)
    for p in model.parameters().values():
        p.data = p.data + 0.1 * rng.normal(size=p.shape)  # move LN/bias off their trivial init
    assert gradcheck.check_model(model, rng.normal(size=(2, 2, 10)), seed=seed) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_snn_gradients_relaxed(seed, f64):
    model, x = gradcheck.stable_snn_instance(seed)
    model.relaxed = True
    assert gradcheck.check_model(model, x, seed=seed) < 1e-4


def test_state_dict_roundtrip():
    a = md.build_snn(md.SnnConfig(width=8), seed=0)
    b = md.build_snn(md.SnnConfig(width=8), seed=1)
    b.load_state_dict(a.state_dict())
    x = Tensor(np.random.default_rng(0).normal(size=(1, 2, 50)))
    assert np.array_equal(a(x).data, b(x).data)
    with pytest.raises(ParameterError):
        b.load_state_dict({"nope": np.zeros(1)})


def test_config_validation():
    with pytest.raises(ConfigError):
        md.TcnConfig(dilations=[]).validate()
    with pytest.raises(ConfigError):
        md.SnnConfig(beta_m=1.0).validate()
    with pytest.raises(ConfigError):
        md.SnnConfig(alpha_init=0.0).validate()
    with pytest.raises(ConfigError):
        md.build_model("rnn", None)


def test_predict_window_destandardises_and_checks_features():
    model = md.build_tcn(md.TcnConfig(width=8, dilations=[1]), seed=0)
    dec = md.Decoder(model, NormStats(np.zeros(2), np.ones(2)), NormStats(np.array([50.0]), np.array([10.0])))
    w = np.random.default_rng(0).normal(size=(64, 2))
    raw = model(Tensor(w.T[None])).data[0, 0]
    out = md.predict_window(dec, w)
    assert np.allclose(out, raw * 10 + 50, rtol=1e-6)
    assert np.array_equal(out, md.predict_window(dec, w))
    with pytest.raises(ParameterError):
        md.predict_window(dec, np.zeros((64, 3)))
    with pytest.raises(ParameterError):
        dec.predict(np.zeros((2, 64, 3)))
