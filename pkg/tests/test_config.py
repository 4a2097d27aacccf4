import json

import pytest

from mudec.config import PipelineConfig, config_from_dict, load_config, save_config
from mudec.errors import ConfigError


def test_golden_defaults():
    cfg = PipelineConfig()
    assert (cfg.dsp.notch_f0_hz, cfg.dsp.notch_q) == (60.0, 35.0)
    assert (cfg.dsp.hp_order, cfg.dsp.hp_fc_hz, cfg.dsp.lp_order, cfg.dsp.lp_fc_hz) == (6, 20.0, 4, 10.0)
    assert cfg.dsp.feature_rate_hz == 200.0
    assert (cfg.window.T, cfg.window.stride, cfg.window.shift_ms, cfg.window.split) == (256, 128, 80.0, [6, 2, 2])
    assert cfg.decomp.per_subregion == 8 and cfg.decomp.feature_mode == "per_group"
    assert (cfg.decomp.kernel_shape, cfg.decomp.kernel_length_ms) == ("hann", 400.0)
    assert cfg.decomp.silhouette_cutoff == 0.85
    tcn, snn = cfg.model.tcn, cfg.model.snn
    assert (tcn.width, tcn.kernel, tcn.dilations, tcn.dropout) == (64, 9, [1, 2, 4, 8, 16, 32], 0.1)
    assert (snn.width, snn.kernel, snn.dilations, snn.beta_m, snn.v_th) == (64, 9, [1, 2], 0.9, 1.0)
    assert (cfg.train.lr, cfg.train.batch_size) == (1e-3, 32)
    assert cfg.model.kind == "tcn" and cfg.scenario == "easy"


def test_roundtrip(tmp_path):
    cfg = PipelineConfig(seed=7)
    cfg.model.tcn.dilations = [1, 3]
    cfg.decomp.n_sources = 12
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg
    assert config_from_dict(json.loads(cfg.to_json())).to_json() == cfg.to_json()


def test_partial_document_keeps_defaults():
    cfg = config_from_dict({"train": {"max_epochs": 3}, "model": {"kind": "snn"}})
    assert cfg.train.max_epochs == 3 and cfg.train.lr == 1e-3 and cfg.model.kind == "snn"


@pytest.mark.parametrize("doc, needle", [
    ({"trian": {}}, "trian"),
    ({"train": {"epochs": 3}}, "config.train"),
    ({"decomp": {"feature_mode": "both"}}, "feature_mode"),
    ({"model": {"kind": "rnn"}}, "model.kind"),
    ({"window": {"split": [6, 2]}}, "split"),
    ({"model": {"tcn": {"dropout": 1.5}}}, "dropout"),
    ({"dsp": 3}, "mapping"),
])
def test_invalid(doc, needle):
    with pytest.raises(ConfigError, match=needle):
        config_from_dict(doc)


def test_bad_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
    with pytest.raises(ConfigError, match="missing.json"):
        load_config(tmp_path / "missing.json")
