"""Signal conditioning: IIR filters, resampling, z-scoring and windowing.

Every filter here runs forward-only (causal). Filter design is delegated to
``scipy.signal``; the functions in this module wrap it with the parameter
checks and stability diagnostics the rest of the pipeline relies on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import signal as sps

from .errors import DegenerateFeatureWarning, EmptyDatasetError, NumericalError, ParameterError

ZSCORE_EPS = 1e-8


class Units(str, Enum):
    VOLTS = "volts"
    NEWTONS = "newtons"
    PERCENT_MVF = "percent_mvf"
    DIMENSIONLESS = "dimensionless"


@dataclass(frozen=True)
class MultiChannelSignal:
    """Uniformly sampled multichannel time series, shape ``(channels, samples)``."""

    data: np.ndarray
    sample_rate_hz: float
    channel_labels: list[str] = field(default_factory=list)
    units: Units = Units.DIMENSIONLESS

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise ParameterError(f"signal data must be 2-D (channels, samples), got shape {data.shape}")
        if not self.sample_rate_hz > 0:
            raise ParameterError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        labels = list(self.channel_labels) or [f"ch{i}" for i in range(data.shape[0])]
        if len(labels) != data.shape[0]:
            raise ParameterError(f"{len(labels)} labels for {data.shape[0]} channels")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_labels", labels)
        object.__setattr__(self, "units", Units(self.units))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def with_data(self, data: np.ndarray, **changes) -> "MultiChannelSignal":
        return replace(self, data=data, **changes)

    def select(self, indices) -> "MultiChannelSignal":
        indices = list(indices)
        return replace(self, data=self.data[indices], channel_labels=[self.channel_labels[i] for i in indices])


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class WindowedDataset:
    inputs: np.ndarray  # (windows, T, F)
    targets: np.ndarray  # (windows, T)
    window_len_T: int
    stride: int
    feature_rate_hz: float
    shift_samples: int = 0
    starts: np.ndarray | None = None
    norm_stats: NormStats | None = None
    target_stats: NormStats | None = None

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]


def _check_finite(y: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(y)):
        raise NumericalError(f"{what} produced non-finite output")
    return y


def _check_band(fc_hz: float, fs: float, name: str):
    if not 0 < fc_hz < fs / 2:
        raise ParameterError(f"{name}={fc_hz} Hz must lie in (0, {fs / 2}) for sample rate {fs} Hz")


def notch_design(f0_hz: float, q: float, fs: float) -> np.ndarray:
    """Second-order notch as a single SOS row."""
    _check_band(f0_hz, fs, "f0_hz")
    if q <= 0:
        raise ParameterError(f"q must be positive, got {q}")
    b, a = sps.iirnotch(f0_hz, q, fs=fs)
    return np.concatenate([b, a])[None, :]


def butterworth_design(kind: str, order: int, fc_hz: float, fs: float) -> np.ndarray:
    if kind not in ("highpass", "lowpass"):
        raise ParameterError(f"kind must be 'highpass' or 'lowpass', got {kind!r}")
    if order < 1:
        raise ParameterError(f"order must be >= 1, got {order}")
    _check_band(fc_hz, fs, "fc_hz")
    sos = sps.butter(order, fc_hz, btype=kind, fs=fs, output="sos")
    poles = np.concatenate([np.roots(row[3:]) for row in sos])
    if not np.all(np.abs(poles) < 1.0):
        raise NumericalError(
            "unstable Butterworth design",
            {"kind": kind, "order": order, "fc_hz": fc_hz, "fs": fs, "max_pole_radius": float(np.abs(poles).max())},
        )
    return sos


def apply_sos(sig: MultiChannelSignal, sos: np.ndarray) -> MultiChannelSignal:
    y = sps.sosfilt(sos, np.asarray(sig.data, dtype=np.float64), axis=1)
    return sig.with_data(_check_finite(y, "filter"))


def notch_filter(sig: MultiChannelSignal, f0_hz: float = 60.0, q: float = 35.0) -> MultiChannelSignal:
    return apply_sos(sig, notch_design(f0_hz, q, sig.sample_rate_hz))


def butterworth_filter(sig: MultiChannelSignal, kind: str, order: int, fc_hz: float) -> MultiChannelSignal:
    """Causal Butterworth high- or low-pass, run as cascaded second-order sections."""
    return apply_sos(sig, butterworth_design(kind, order, fc_hz, sig.sample_rate_hz))


def resample(sig: MultiChannelSignal, target_rate_hz: float, numtaps: int = 64) -> MultiChannelSignal:
    """Downsample onto a uniform grid at ``target_rate_hz``.

    A windowed-sinc FIR with cutoff ``0.45 * target_rate_hz`` removes content
    above the new Nyquist band, then the filtered signal is linearly
    interpolated at the target instants. The FIR group delay is compensated so
    the output is time-aligned with the input; edges are padded by repetition.
    """
    fs = sig.sample_rate_hz
    if not 0 < target_rate_hz <= fs:
        raise ParameterError(f"target rate {target_rate_hz} Hz must be in (0, {fs}] (no upsampling)")
    x = np.asarray(sig.data, dtype=np.float64)
    n = x.shape[1]
    n_out = int(round(n * target_rate_hz / fs))
    if target_rate_hz == fs:
        return sig.with_data(x.copy())
    taps = sps.firwin(numtaps, 0.45 * target_rate_hz, fs=fs)
    taps /= taps.sum()
    pad = numtaps
    xp = np.pad(x, ((0, 0), (pad, pad)), mode="edge")
    filtered = sps.oaconvolve(xp, taps[None, :], mode="full", axes=1)
    delay = (numtaps - 1) / 2.0
    # filtered[j] is centred on input sample j - pad - delay
    src_pos = np.arange(filtered.shape[1]) - pad - delay
    t_out = np.arange(n_out) * (fs / target_rate_hz)
    y = np.empty((x.shape[0], n_out))
    for c in range(x.shape[0]):
        y[c] = np.interp(t_out, src_pos, filtered[c])
    return sig.with_data(_check_finite(y, "resample"), sample_rate_hz=float(target_rate_hz))


def zscore_fit(train) -> NormStats:
    """Per-feature mean/std over every array in ``train`` (features on the last axis)."""
    arrays = [np.asarray(a, dtype=np.float64) for a in train]
    n_feat = arrays[0].shape[-1]
    flat = np.concatenate([a.reshape(-1, n_feat) for a in arrays], axis=0)
    if flat.shape[0] < 2:
        raise ParameterError("zscore_fit needs at least 2 samples per feature")
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    small = std < ZSCORE_EPS
    if np.any(small):
        warnings.warn(
            f"zero-variance feature(s) {np.flatnonzero(small).tolist()}; std clamped to {ZSCORE_EPS}",
            DegenerateFeatureWarning,
            stacklevel=2,
        )
        std = np.where(small, ZSCORE_EPS, std)
    return NormStats(mean=mean, std=std)


def zscore_apply(x, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def zscore_invert(x, stats: NormStats) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean


def shift_samples_for(shift_ms: float, rate_hz: float) -> int:
    return int(round(shift_ms * rate_hz / 1000.0))


def make_windows(
    features: MultiChannelSignal,
    force: MultiChannelSignal,
    T: int = 256,
    stride: int = 128,
    shift_ms: float = 80.0,
) -> WindowedDataset:
    """Cut aligned (input, target) windows; the target leads the input by ``shift_ms``."""
    if features.sample_rate_hz != force.sample_rate_hz or features.n_samples != force.n_samples:
        raise ParameterError(
            f"features ({features.n_samples} @ {features.sample_rate_hz} Hz) and force "
            f"({force.n_samples} @ {force.sample_rate_hz} Hz) are not aligned"
        )
    if shift_ms < 0:
        raise ParameterError(f"shift_ms must be >= 0, got {shift_ms}")
    if T < 1 or stride < 1:
        raise ParameterError("T and stride must be positive")
    rate = features.sample_rate_hz
    shift = shift_samples_for(shift_ms, rate)
    n_usable = features.n_samples - shift
    if n_usable < T:
        raise EmptyDatasetError(f"signal of {features.n_samples} samples is shorter than T+shift = {T + shift}")
    n_windows = (n_usable - T) // stride + 1
    starts = np.arange(n_windows) * stride
    idx = starts[:, None] + np.arange(T)[None, :]
    x = np.asarray(features.data, dtype=np.float64)
    inputs = np.transpose(x[:, idx], (1, 2, 0))
    targets = np.asarray(force.data[0], dtype=np.float64)[idx + shift]
    return WindowedDataset(
        inputs=inputs,
        targets=targets,
        window_len_T=T,
        stride=stride,
        feature_rate_hz=rate,
        shift_samples=shift,
        starts=starts,
    )


def concat_datasets(datasets: list[WindowedDataset]) -> WindowedDataset:
    first = datasets[0]
    return replace(
        first,
        inputs=np.concatenate([d.inputs for d in datasets]),
        targets=np.concatenate([d.targets for d in datasets]),
        starts=None,
    )


def standardize(ds: WindowedDataset, stats: NormStats, target_stats: NormStats | None = None) -> WindowedDataset:
    """Return a copy with inputs (and optionally targets) z-scored by the given stats."""
    targets = ds.targets
    if target_stats is not None:
        targets = (ds.targets - target_stats.mean[0]) / target_stats.std[0]
    return replace(ds, inputs=zscore_apply(ds.inputs, stats), targets=targets, norm_stats=stats, target_stats=target_stats)
