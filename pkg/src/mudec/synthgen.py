"""Ground-truth HD-sEMG, discharge times and fingertip force.

The simulation is deliberately simple: every motor unit is driven by a common
trapezoidal excitation, fires once its recruitment threshold is exceeded at a
rate that grows linearly with the excitation, and contributes a MUAP template
to each electrode and a twitch to the force. Each unit's template is a single
Hermite-Rodriguez waveform scaled per channel by the electrode's distance to
the unit, so the EMG is an instantaneous full-rank mixture of filtered spike
trains plus white noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import MultiChannelSignal, Units
from .errors import ParameterError
from .spiketrains import SpikeTrainSet

EMG_RATE_HZ = 2048.0
MIN_ISI_FACTOR = 0.5


@dataclass(frozen=True)
class MotorUnitPool:
    n_units: int
    recruitment_thresholds: np.ndarray
    min_rate_hz: float
    peak_rate_hz: float
    twitch_amplitudes: np.ndarray
    twitch_time_constants_ms: np.ndarray
    isi_cv: float = 0.1

    def __post_init__(self):
        thr = np.asarray(self.recruitment_thresholds, dtype=np.float64)
        amp = np.asarray(self.twitch_amplitudes, dtype=np.float64)
        tc = np.asarray(self.twitch_time_constants_ms, dtype=np.float64)
        if not (thr.shape == amp.shape == tc.shape == (self.n_units,)):
            raise ParameterError("per-unit arrays must all have length n_units")
        if self.n_units > 1 and np.any(np.diff(thr) <= 0):
            raise ParameterError("recruitment thresholds must be strictly increasing")
        if np.any(thr < 0) or np.any(thr >= 1):
            raise ParameterError("recruitment thresholds must lie in [0, 1)")
        if not 0 < self.min_rate_hz < self.peak_rate_hz:
            raise ParameterError("need 0 < min_rate_hz < peak_rate_hz")
        if np.any(amp <= 0) or np.any(tc <= 0):
            raise ParameterError("twitch amplitudes and time constants must be positive")
        if not 0 <= self.isi_cv <= 0.5:
            raise ParameterError("isi_cv must lie in [0, 0.5]")
        object.__setattr__(self, "recruitment_thresholds", thr)
        object.__setattr__(self, "twitch_amplitudes", amp)
        object.__setattr__(self, "twitch_time_constants_ms", tc)


@dataclass(frozen=True)
class MixingModel:
    muap_templates: np.ndarray  # (units, channels, template_samples)
    noise_std: float
    channel_groups: dict[str, list[int]] = field(default_factory=dict)
    grid_shapes: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.muap_templates, dtype=np.float64)
        if t.ndim != 3:
            raise ParameterError("muap_templates must be (units, channels, samples)")
        if not np.all(np.isfinite(t)):
            raise ParameterError("muap_templates must be finite")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be >= 0")
        object.__setattr__(self, "muap_templates", t)
        if not self.channel_groups:
            object.__setattr__(self, "channel_groups", {"all": list(range(t.shape[1]))})

    @property
    def n_channels(self) -> int:
        return self.muap_templates.shape[1]

    def channel_labels(self) -> list[str]:
        labels = [f"ch{c}" for c in range(self.n_channels)]
        for name, idx in self.channel_groups.items():
            for k, c in enumerate(idx):
                labels[c] = f"{name}{k}"
        return labels


@dataclass(frozen=True)
class TrialSpec:
    duration_s: float = 30.0
    onset_s: float = 2.0
    ramp_s: float = 5.0
    plateau_s: float = 14.0
    plateau_level_frac_mvf: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.onset_s < 0 or self.ramp_s <= 0 or self.plateau_s < 0:
            raise ParameterError("onset must be >= 0, ramp > 0 and plateau >= 0")
        if self.onset_s + 2 * self.ramp_s + self.plateau_s > self.duration_s:
            raise ParameterError("trapezoid does not fit in the trial duration")
        if not 0 < self.plateau_level_frac_mvf <= 1:
            raise ParameterError("plateau level must lie in (0, 1]")

    def drive(self, rate_hz: float = EMG_RATE_HZ) -> np.ndarray:
        """Excitation profile in [0, 1] sampled at ``rate_hz``."""
        n = int(round(self.duration_s * rate_hz))
        t = np.arange(n) / rate_hz
        up = (t - self.onset_s) / self.ramp_s
        down = (self.onset_s + 2 * self.ramp_s + self.plateau_s - t) / self.ramp_s
        return self.plateau_level_frac_mvf * np.clip(np.minimum(up, down), 0.0, 1.0)

    def plateau_mask(self, rate_hz: float = EMG_RATE_HZ) -> np.ndarray:
        n = int(round(self.duration_s * rate_hz))
        t = np.arange(n) / rate_hz
        start = self.onset_s + self.ramp_s
        return (t >= start) & (t < start + self.plateau_s)


@dataclass
class Trial:
    emg: MultiChannelSignal
    force: MultiChannelSignal
    truth_spikes: SpikeTrainSet
    spec: TrialSpec


@dataclass
class Scenario:
    name: str
    pool: MotorUnitPool
    mix: MixingModel
    specs: list[TrialSpec]
    snr_db: float


def hermite_muap(n_samples: int, width_samples: float) -> np.ndarray:
    """Second-order Hermite-Rodriguez waveform centred in the template, peak value 1."""
    tau = (np.arange(n_samples) - (n_samples - 1) / 2.0) / width_samples
    return (1.0 - 2.0 * tau**2) * np.exp(-(tau**2))


def twitch_kernel(time_constant_ms: float, rate_hz: float) -> np.ndarray:
    """Critically damped twitch ``(t/Tc) exp(1 - t/Tc)``, peak 1 at ``t = Tc``, zero at ``t = 0``."""
    tc = time_constant_ms * rate_hz / 1000.0
    t = np.arange(int(np.ceil(6 * tc)))
    return (t / tc) * np.exp(1.0 - t / tc)


def discharge_times(
    pool: MotorUnitPool,
    drive: np.ndarray,
    rate_hz: float,
    rng: np.random.Generator,
    duration_s: float | None = None,
) -> list[np.ndarray]:
    """Spike sample indices for every unit of ``pool`` under ``drive``.

    Each unit integrates its instantaneous rate into a phase and discharges
    whenever the phase crosses the next entry of a jittered cumulative
    threshold sequence. The jitter draws do not depend on the drive, so a
    stronger drive (pointwise) can only add spikes.
    """
    duration_s = duration_s if duration_s is not None else drive.size / rate_hz
    n_draws = int(np.ceil(pool.peak_rate_hz * duration_s)) + 2
    out = []
    for u in range(pool.n_units):
        jitter = rng.standard_normal(n_draws)
        thr = pool.recruitment_thresholds[u]
        active = drive > thr
        rate = np.where(
            active,
            pool.min_rate_hz + (pool.peak_rate_hz - pool.min_rate_hz) * (drive - thr) / (1.0 - thr),
            0.0,
        )
        phase = np.cumsum(rate) / rate_hz
        steps = np.maximum(1.0 + pool.isi_cv * jitter, MIN_ISI_FACTOR)
        # first discharge on recruitment, then one per jittered unit of phase
        crossings = np.concatenate([[1e-12], 1e-12 + np.cumsum(steps[:-1])])
        crossings = crossings[crossings <= phase[-1]] if phase.size else crossings[:0]
        idx = np.searchsorted(phase, crossings, side="left")
        out.append(np.unique(idx).astype(np.int64))
    return out


def render_emg(spikes: list[np.ndarray], templates: np.ndarray, n_samples: int) -> np.ndarray:
    """Noise-free EMG: each unit's spike train convolved with its per-channel template."""
    n_units, n_channels, length = templates.shape
    emg = np.zeros((n_channels, n_samples))
    for u in range(n_units):
        s = spikes[u]
        for lag in range(length):
            idx = s + lag
            idx = idx[idx < n_samples]
            emg[:, idx] += templates[u, :, lag][:, None]
    return emg


def render_force(pool: MotorUnitPool, spikes: list[np.ndarray], n_samples: int, rate_hz: float) -> np.ndarray:
    """Sum of twitches, added spike by spike so the force is exactly zero before the first discharge."""
    force = np.zeros(n_samples)
    for u in range(pool.n_units):
        kernel = pool.twitch_amplitudes[u] * twitch_kernel(pool.twitch_time_constants_ms[u], rate_hz)
        for s in spikes[u]:
            seg = kernel[: n_samples - s]
            force[s : s + seg.size] += seg
    return force


def generate_trial(
    pool: MotorUnitPool,
    mix: MixingModel,
    spec: TrialSpec,
    rate_hz: float = EMG_RATE_HZ,
    drive: np.ndarray | None = None,
) -> Trial:
    """Simulate one trial; fully determined by ``spec.seed``.

    ``drive`` overrides the trapezoid (it must have the trial's sample count).
    Force is scaled so its plateau mean equals ``100 * plateau_level`` %MVF.
    """
    if mix.muap_templates.shape[0] != pool.n_units:
        raise ParameterError("mixing model and pool disagree on the number of units")
    n = int(round(spec.duration_s * rate_hz))
    if drive is None:
        drive = spec.drive(rate_hz)
    elif drive.shape != (n,):
        raise ParameterError(f"drive must have {n} samples")
    spike_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(2))
    spikes = discharge_times(pool, drive, rate_hz, spike_rng, spec.duration_s)

    emg = render_emg(spikes, mix.muap_templates, n)
    if mix.noise_std > 0:
        emg += mix.noise_std * noise_rng.standard_normal(emg.shape)

    force = render_force(pool, spikes, n, rate_hz)
    plateau = spec.plateau_mask(rate_hz)
    level = force[plateau].mean() if plateau.any() else 0.0
    scale = 100.0 * spec.plateau_level_frac_mvf / level if level > 0 else 0.0
    force = force * scale

    labels = mix.channel_labels()
    return Trial(
        emg=MultiChannelSignal(emg, rate_hz, labels, Units.VOLTS),
        force=MultiChannelSignal(force[None, :], rate_hz, ["force"], Units.PERCENT_MVF),
        truth_spikes=SpikeTrainSet(spikes, n, rate_hz),
        spec=spec,
    )


# ---------------------------------------------------------------------------
# scenarios

_SCENARIOS = {
    # units, flexor grid (rows, cols), extensor grid, snr_db, footprint spread (electrodes), clustered
    "easy": dict(n_units=8, flexor=(11, 4), extensor=(5, 4), snr_db=20.0, spread=1.5, clustered=False),
    "medium": dict(n_units=20, flexor=(16, 8), extensor=(8, 8), snr_db=10.0, spread=1.5, clustered=False),
    "hard": dict(n_units=20, flexor=(16, 8), extensor=(8, 8), snr_db=5.0, spread=3.0, clustered=True),
}

MUAP_AMPLITUDE_V = 2e-4
TEMPLATE_MS = 10.0


def scenario_names() -> list[str]:
    return list(_SCENARIOS)


def _default_pool(n_units: int, rng: np.random.Generator) -> MotorUnitPool:
    thresholds = np.linspace(0.02, 0.35, n_units)
    rank = np.linspace(0.0, 1.0, n_units)
    return MotorUnitPool(
        n_units=n_units,
        recruitment_thresholds=thresholds,
        min_rate_hz=8.0,
        peak_rate_hz=30.0,
        twitch_amplitudes=1.0 + 4.0 * rank,
        twitch_time_constants_ms=70.0 - 30.0 * rank + rng.uniform(-3, 3, n_units),
        isi_cv=0.1,
    )


def _default_mixing(cfg: dict, rng: np.random.Generator, rate_hz: float) -> MixingModel:
    n_units = cfg["n_units"]
    groups, grids, coords = {}, {}, []
    offset = 0
    for name in ("flexor", "extensor"):
        rows, cols = cfg[name]
        groups[name] = list(range(offset, offset + rows * cols))
        grids[name] = (rows, cols)
        rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        coords.append((name, np.stack([rr.ravel(), cc.ravel()], axis=1).astype(float)))
        offset += rows * cols
    n_channels = offset

    # two thirds of the units sit under the flexor array
    n_flex = int(round(n_units * 2 / 3))
    unit_group = ["flexor"] * n_flex + ["extensor"] * (n_units - n_flex)
    length = int(round(TEMPLATE_MS * rate_hz / 1000.0))
    templates = np.zeros((n_units, n_channels, length))
    for u in range(n_units):
        name = unit_group[u]
        rows, cols = grids[name]
        if cfg["clustered"]:
            centre = np.array([rows / 2, cols / 2]) + rng.normal(0, 1.0, 2)
        else:
            centre = rng.uniform([0, 0], [rows - 1, cols - 1])
        depth = rng.uniform(0.5, 1.5)
        xy = dict(coords)[name]
        dist2 = ((xy - centre) ** 2).sum(axis=1) + depth**2
        gains = (1.0 + dist2 / cfg["spread"] ** 2) ** -1.5
        amp = MUAP_AMPLITUDE_V * rng.uniform(0.6, 1.4)
        shape = hermite_muap(length, width_samples=rng.uniform(1.5, 3.0))
        templates[u, groups[name], :] = amp * gains[:, None] * shape[None, :]
    return MixingModel(templates, 0.0, groups, grids)


def noise_std_for_snr(pool: MotorUnitPool, mix: MixingModel, snr_db: float, level: float = 0.5, seed: int = 0) -> float:
    """Noise standard deviation giving ``snr_db`` against the plateau EMG RMS over all channels."""
    rate_hz = EMG_RATE_HZ
    n = int(4 * rate_hz)
    drive = np.full(n, level)
    spikes = discharge_times(pool, drive, rate_hz, np.random.default_rng(seed))
    emg = render_emg(spikes, mix.muap_templates, n)[:, n // 4 :]
    rms = np.sqrt(np.mean(emg**2))
    return float(rms / 10 ** (snr_db / 20.0))


def measured_snr_db(trial: Trial, noise_free: np.ndarray) -> float:
    plateau = trial.spec.plateau_mask(trial.emg.sample_rate_hz)
    noise = trial.emg.data[:, plateau] - noise_free[:, plateau]
    return float(20 * np.log10(np.sqrt(np.mean(noise_free[:, plateau] ** 2)) / np.sqrt(np.mean(noise**2))))


def default_scenario(name: str, seed: int = 0, n_trials: int = 10, rate_hz: float = EMG_RATE_HZ) -> Scenario:
    """Desk-scale stand-in for the ten-trial protocol.

    ``easy``: 8 units, 64 channels, 20 dB; ``medium``: 20 units, 192 channels
    (128 flexor + 64 extensor), 10 dB; ``hard``: as medium with overlapping
    unit footprints and 5 dB.
    """
    if name not in _SCENARIOS:
        raise ParameterError(f"unknown scenario {name!r}; choose from {scenario_names()}")
    cfg = _SCENARIOS[name]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    pool = _default_pool(cfg["n_units"], rng)
    mix = _default_mixing(cfg, rng, rate_hz)
    noise = noise_std_for_snr(pool, mix, cfg["snr_db"], seed=seed)
    mix = MixingModel(mix.muap_templates, noise, mix.channel_groups, mix.grid_shapes)
    trial_seeds = np.random.SeedSequence([seed, 104729]).generate_state(n_trials)
    specs = []
    for k in range(n_trials):
        onset, ramp, plateau = rng.uniform(2.0, 3.0), rng.uniform(4.0, 5.0), rng.uniform(12.0, 14.0)
        specs.append(TrialSpec(30.0, onset, ramp, plateau, 0.5, int(trial_seeds[k])))
    return Scenario(name, pool, mix, specs, cfg["snr_db"])
