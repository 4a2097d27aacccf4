"""Pipeline configuration: defaults, JSON round-trip, validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .decomp import DecompParams
from .errors import ConfigError
from .models import SnnConfig, TcnConfig


@dataclass
class DspParams:
    notch_f0_hz: float = 60.0
    notch_q: float = 35.0
    hp_order: int = 6
    hp_fc_hz: float = 20.0
    lp_order: int = 4
    lp_fc_hz: float = 10.0
    feature_rate_hz: float = 200.0


@dataclass
class DecompSection(DecompParams):
    feature_mode: str = "per_group"  # or "per_mu"


@dataclass
class WindowParams:
    T: int = 256
    stride: int = 128
    shift_ms: float = 80.0
    split: list[int] = field(default_factory=lambda: [6, 2, 2])
    standardize_targets: bool = True


@dataclass
class ModelSection:
    kind: str = "tcn"
    tcn: TcnConfig = field(default_factory=TcnConfig)
    snn: SnnConfig = field(default_factory=SnnConfig)


@dataclass
class TrainParams:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 80
    patience: int = 10
    min_delta: float = 1e-5


@dataclass
class PipelineConfig:
    scenario: str = "easy"
    input_dir: str | None = None
    seed: int = 0
    jobs: int = 1
    dsp: DspParams = field(default_factory=DspParams)
    decomp: DecompSection = field(default_factory=DecompSection)
    window: WindowParams = field(default_factory=WindowParams)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainParams = field(default_factory=TrainParams)

    def validate(self) -> "PipelineConfig":
        if self.decomp.feature_mode not in ("per_group", "per_mu"):
            raise ConfigError(f"decomp.feature_mode must be 'per_group' or 'per_mu', got {self.decomp.feature_mode!r}")
        if self.model.kind not in ("tcn", "snn"):
            raise ConfigError(f"model.kind must be 'tcn' or 'snn', got {self.model.kind!r}")
        if len(self.window.split) != 3 or any(s < 1 for s in self.window.split):
            raise ConfigError("window.split must be three positive trial counts")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.window.T < 1 or self.window.stride < 1 or self.window.shift_ms < 0:
            raise ConfigError("window T/stride must be positive and shift_ms >= 0")
        try:
            self.model.tcn.validate()
            self.model.snn.validate()
        except ConfigError as exc:
            raise ConfigError(f"model: {exc}") from exc
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(cls, data, path="config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{path}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> PipelineConfig:
    try:
        cfg = _build(PipelineConfig, data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(cfg.to_json() + "\n")
