"""Causal TCN and LIF spiking decoders mapping neural-drive windows to force."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as tn
from .dsp import NormStats
from .errors import ConfigError, ParameterError
from .tensor import Tensor


@dataclass
class TcnConfig:
    in_features: int = 2
    width: int = 64
    kernel: int = 9
    dilations: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    dropout: float = 0.1

    def validate(self):
        if self.in_features < 1 or self.width < 1 or self.kernel < 1:
            raise ConfigError("in_features, width and kernel must be positive")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigError("dilations must be a nonempty list of positive integers")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")


@dataclass
class SnnConfig:
    in_features: int = 2
    width: int = 64
    kernel: int = 9
    dilations: list[int] = field(default_factory=lambda: [1, 2])
    beta_m: float = 0.90
    v_th: float = 1.0
    surrogate_slope: float = 25.0
    alpha_init: float = 0.9

    def validate(self):
        if self.in_features < 1 or self.width < 1 or self.kernel < 1:
            raise ConfigError("in_features, width and kernel must be positive")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigError("dilations must be a nonempty list of positive integers")
        if not 0 < self.beta_m < 1:
            raise ConfigError("beta_m must be in (0, 1)")
        if not 0 < self.alpha_init < 1:
            raise ConfigError("alpha_init must be in (0, 1)")
        if self.v_th <= 0 or self.surrogate_slope <= 0:
            raise ConfigError("v_th and surrogate_slope must be positive")


def _conv_params(rng, c_out, c_in, k):
    w = rng.normal(0.0, np.sqrt(2.0 / (c_in * k)), size=(c_out, c_in, k))
    return Tensor(w, requires_grad=True), Tensor(np.zeros(c_out), requires_grad=True)


class Model:
    """Holds named parameters in a fixed order; subclasses define ``forward``."""

    kind = ""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self.params) ^ set(state)
        if missing:
            raise ParameterError(f"checkpoint/model parameter mismatch: {sorted(missing)}")
        for k, p in self.params.items():
            if state[k].shape != p.shape:
                raise ParameterError(f"parameter {k}: checkpoint shape {state[k].shape} vs model {p.shape}")
            p.data = np.asarray(state[k], dtype=p.data.dtype).copy()

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def __call__(self, x, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        x = tn.as_tensor(x)
        if x.data.ndim == 2:
            return tn.reshape(self.forward(tn.reshape(x, (1,) + x.shape), train, rng), (1, x.shape[1]))
        return self.forward(x, train, rng)

    def forward(self, x: Tensor, train: bool, rng) -> Tensor:
        raise NotImplementedError

    @property
    def in_features(self) -> int:
        return self.config.in_features


class TcnModel(Model):
    """Causal stem, residual dilated blocks (conv-ReLU-LayerNorm-dropout-conv plus identity), 1x1 head."""

    kind = "tcn"

    def __init__(self, cfg: TcnConfig, seed=0):
        super().__init__()
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(seed)
        p = self.params
        p["stem.w"], p["stem.b"] = _conv_params(rng, cfg.width, cfg.in_features, cfg.kernel)
        for i, _ in enumerate(cfg.dilations):
            p[f"block{i}.conv1.w"], p[f"block{i}.conv1.b"] = _conv_params(rng, cfg.width, cfg.width, cfg.kernel)
            p[f"block{i}.ln.gamma"] = Tensor(np.ones(cfg.width), requires_grad=True)
            p[f"block{i}.ln.beta"] = Tensor(np.zeros(cfg.width), requires_grad=True)
            p[f"block{i}.conv2.w"], p[f"block{i}.conv2.b"] = _conv_params(rng, cfg.width, cfg.width, cfg.kernel)
        p["head.w"], p["head.b"] = _conv_params(rng, 1, cfg.width, 1)

    def forward(self, x, train=False, rng=None):
        p, cfg = self.params, self.config
        h = tn.causal_conv1d(x, p["stem.w"], p["stem.b"], 1)
        for i, d in enumerate(cfg.dilations):
            f = tn.causal_conv1d(h, p[f"block{i}.conv1.w"], p[f"block{i}.conv1.b"], d)
            f = tn.relu(f)
            f = tn.layer_norm_channels(f, p[f"block{i}.ln.gamma"], p[f"block{i}.ln.beta"])
            f = tn.dropout(f, cfg.dropout, train, rng)
            f = tn.causal_conv1d(f, p[f"block{i}.conv2.w"], p[f"block{i}.conv2.b"], d)
            h = tn.add(h, f)
        return tn.causal_conv1d(h, p["head.w"], p["head.b"], 1)


class SnnModel(Model):
    """Causal conv front-end, one LIF layer, learnable synaptic low-pass readout, 1x1 head."""

    kind = "snn"

    def __init__(self, cfg: SnnConfig, seed=0):
        super().__init__()
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(seed)
        p = self.params
        c_in = cfg.in_features
        for i, _ in enumerate(cfg.dilations):
            p[f"front{i}.w"], p[f"front{i}.b"] = _conv_params(rng, cfg.width, c_in, cfg.kernel)
            c_in = cfg.width
        p["readout.alpha"] = Tensor(np.array([np.log(cfg.alpha_init / (1.0 - cfg.alpha_init))]), requires_grad=True)
        p["head.w"], p["head.b"] = _conv_params(rng, 1, cfg.width, 1)
        self.relaxed = False
        self.last_spikes: np.ndarray | None = None

    @property
    def alpha(self) -> float:
        return float(1.0 / (1.0 + np.exp(-float(self.params["readout.alpha"].data[0]))))

    def forward(self, x, train=False, rng=None):
        p, cfg = self.params, self.config
        h = x
        for i, d in enumerate(cfg.dilations):
            h = tn.relu(tn.causal_conv1d(h, p[f"front{i}.w"], p[f"front{i}.b"], d))
        spikes, _ = tn.lif_forward(h, cfg.beta_m, cfg.v_th, cfg.surrogate_slope, relaxed=self.relaxed)
        self.last_spikes = spikes.data
        y = tn.synaptic_readout(spikes, p["readout.alpha"])
        return tn.causal_conv1d(y, p["head.w"], p["head.b"], 1)


def build_tcn(cfg: TcnConfig | None = None, seed=0) -> TcnModel:
    return TcnModel(cfg or TcnConfig(), seed)


def build_snn(cfg: SnnConfig | None = None, seed=0) -> SnnModel:
    return SnnModel(cfg or SnnConfig(), seed)


def build_model(kind: str, cfg, seed=0) -> Model:
    if kind == "tcn":
        return build_tcn(cfg if isinstance(cfg, TcnConfig) else TcnConfig(**(cfg or {})), seed)
    if kind == "snn":
        return build_snn(cfg if isinstance(cfg, SnnConfig) else SnnConfig(**(cfg or {})), seed)
    raise ConfigError(f"unknown model kind {kind!r}; expected 'tcn' or 'snn'")


def receptive_field(model_or_cfg) -> int:
    """Samples of input history that can influence one output sample."""
    cfg = getattr(model_or_cfg, "config", model_or_cfg)
    k = cfg.kernel
    if isinstance(cfg, TcnConfig):
        return 1 + (k - 1) * (1 + 2 * sum(cfg.dilations))
    return 1 + (k - 1) * sum(cfg.dilations)


def model_config_dict(model: Model) -> dict:
    return asdict(model.config)


@dataclass
class Decoder:
    """A trained model plus the standardisation it was trained with."""

    model: Model
    norm_stats: NormStats
    target_stats: NormStats | None = None

    def predict(self, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Force traces in %MVF for raw (unstandardised) windows shaped ``(N, T, F)``."""
        windows = np.asarray(windows)
        if windows.ndim == 2:
            return self.predict(windows[None], batch_size)[0]
        if windows.shape[2] != self.model.in_features:
            raise ParameterError(
                f"windows carry {windows.shape[2]} features but the model expects {self.model.in_features}"
            )
        x = (windows - self.norm_stats.mean) / self.norm_stats.std
        return self.predict_standardized(x, batch_size)

    def predict_standardized(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        out = []
        for start in range(0, x.shape[0], batch_size):
            xb = np.transpose(x[start : start + batch_size], (0, 2, 1))
            out.append(self.model(Tensor(xb), train=False).data[:, 0, :].astype(np.float64))
        y = np.concatenate(out)
        if self.target_stats is not None:
            y = y * self.target_stats.std[0] + self.target_stats.mean[0]
        return y


def predict_window(decoder: Decoder, window: np.ndarray) -> np.ndarray:
    """Force trace for one standardised ``(T, F)`` window, in %MVF."""
    window = np.asarray(window)
    if window.ndim != 2 or window.shape[1] != decoder.model.in_features:
        raise ParameterError(
            f"window shape {window.shape} does not match {decoder.model.in_features} model features"
        )
    return decoder.predict_standardized(window[None])[0]
