"""Motor-unit decomposition of HD-sEMG and neural-drive formation.

The pipeline per electrode array is: channel selection, centring and
whitening, deflation FastICA, peak detection on each squared source with a
two-cluster k-means split into spikes and noise, duplicate/quality cleanup,
and finally causal kernel smoothing of the spike trains into neural drives.
"""

from __future__ import annotations

import bisect
import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import signal as sps

from . import dsp
from .dsp import MultiChannelSignal, Units
from .errors import ConvergenceError, EmptyDecompositionError, NumericalError, ParameterError
from .kmeans import kmeans, silhouette_1d
from .spiketrains import SpikeTrainSet

log = logging.getLogger(__name__)

N_SUBREGIONS = 4
EIG_REL_FLOOR = 1e-10
MAX_SOURCES = 30


# ---------------------------------------------------------------------------
# channel selection


def _mad_sigma(x: np.ndarray) -> np.ndarray:
    med = np.median(x, axis=-1, keepdims=True)
    return np.median(np.abs(x - med), axis=-1) / 0.6745


def channel_quality(data: np.ndarray) -> np.ndarray:
    """RMS over a robust (median absolute deviation) estimate of the baseline noise."""
    data = np.asarray(data, dtype=np.float64)
    rms = np.sqrt(np.mean(data**2, axis=-1))
    noise = _mad_sigma(data)
    return np.where(noise > 0, rms / np.where(noise > 0, noise, 1.0), np.where(rms > 0, np.inf, 0.0))


def select_channels(emg: MultiChannelSignal, groups: dict[str, list[int]], per_subregion: int) -> dict[str, list[int]]:
    """Keep the ``per_subregion`` best channels of each quarter of every array.

    Channel order within a group is the grid's row-major order, so the
    quarters are bands of rows. Ties keep the lower index.
    """
    if per_subregion < 1:
        raise ParameterError(f"per_subregion must be >= 1, got {per_subregion}")
    score = channel_quality(emg.data)
    out = {}
    for name, idx in groups.items():
        idx = list(idx)
        if len(idx) < N_SUBREGIONS:
            warnings.warn(f"group {name!r} has {len(idx)} channels; used whole", stacklevel=2)
            out[name] = idx
            continue
        kept = []
        for part in np.array_split(np.asarray(idx), N_SUBREGIONS):
            order = np.argsort(-score[part], kind="stable")
            kept.extend(sorted(part[order[:per_subregion]].tolist()))
        out[name] = kept
    return out


# ---------------------------------------------------------------------------
# whitening


@dataclass(frozen=True)
class WhiteningTransform:
    mean_vector: np.ndarray
    whitening_matrix: np.ndarray  # (k, channels)

    @property
    def retained_components(self) -> int:
        return self.whitening_matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.whitening_matrix @ (np.asarray(x, dtype=np.float64) - self.mean_vector[:, None])


def fit_whitening(x) -> WhiteningTransform:
    """PCA whitening; directions with eigenvalue below ``1e-10 * max`` are discarded."""
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    c, n = x.shape
    if n < 2 * c:
        raise ParameterError(f"whitening needs at least {2 * c} samples for {c} channels, got {n}")
    mu = x.mean(axis=1)
    xc = x - mu[:, None]
    cov = xc @ xc.T / n
    evals, evecs = np.linalg.eigh(cov)
    if not evals[-1] > 0:
        raise NumericalError("covariance is identically zero; nothing to whiten", {"max_eigenvalue": float(evals[-1])})
    keep = evals >= EIG_REL_FLOOR * evals[-1]
    evals, evecs = evals[keep][::-1], evecs[:, keep][:, ::-1]
    v = evecs.T / np.sqrt(evals)[:, None]
    return WhiteningTransform(mu, v)


def apply_whitening(sig: MultiChannelSignal, wt: WhiteningTransform) -> MultiChannelSignal:
    y = wt.apply(sig.data)
    return MultiChannelSignal(y, sig.sample_rate_hz, [f"w{i}" for i in range(y.shape[0])], Units.DIMENSIONLESS)


# ---------------------------------------------------------------------------
# FastICA


@dataclass(frozen=True)
class UnmixingModel:
    unmixing_matrix: np.ndarray  # (M, k), unit-norm rows
    converged: np.ndarray
    n_iter: np.ndarray

    @property
    def source_count(self) -> int:
        return self.unmixing_matrix.shape[0]

    def sources(self, white: np.ndarray) -> np.ndarray:
        return self.unmixing_matrix @ white


def fastica(white, n_sources: int | None = None, tol: float = 1e-4, max_iter: int = 100, seed=0) -> UnmixingModel:
    """Deflation FastICA with the kurtosis contrast ``g(u) = u^3``.

    Each row iterates ``w <- E[y (w.y)^3] - 3 w``, is Gram-Schmidt
    orthogonalised against the rows already found and renormalised, and is
    declared converged once ``|<w_new, w_old>| > 1 - tol``. Rows that hit
    ``max_iter`` are kept but flagged.
    """
    y = np.asarray(getattr(white, "data", white), dtype=np.float64)
    k, n = y.shape
    n_sources = min(k, MAX_SOURCES) if n_sources is None else n_sources
    if not 1 <= n_sources <= k:
        raise ParameterError(f"n_sources={n_sources} must be in [1, {k}] (retained components)")
    rng = np.random.default_rng(seed)
    w_all = np.zeros((n_sources, k))
    converged = np.zeros(n_sources, dtype=bool)
    n_iter = np.zeros(n_sources, dtype=np.int64)
    for i in range(n_sources):
        w = rng.standard_normal(k)
        w -= w_all[:i].T @ (w_all[:i] @ w)
        w /= np.linalg.norm(w)
        for it in range(1, max_iter + 1):
            u = w @ y
            w_new = y @ (u * u * u) / n - 3.0 * w
            w_new -= w_all[:i].T @ (w_all[:i] @ w_new)
            norm = np.linalg.norm(w_new)
            if not np.isfinite(norm) or norm == 0:
                break
            w_new /= norm
            done = abs(w_new @ w) > 1.0 - tol
            w = w_new
            if done:
                converged[i] = True
                break
        n_iter[i] = it
        w_all[i] = w
    if not converged.any():
        raise ConvergenceError(
            "FastICA: no component converged",
            {"n_iter": n_iter.tolist(), "tol": tol, "max_iter": max_iter},
        )
    return UnmixingModel(w_all, converged, n_iter)


# ---------------------------------------------------------------------------
# spike extraction


class SpikeExtraction(NamedTuple):
    indices: np.ndarray
    silhouette: float
    threshold: float  # squared-source height separating spikes from noise peaks


def _merge_refractory(idx: np.ndarray, heights: np.ndarray, min_gap: int) -> np.ndarray:
    """Keep the larger of any two spikes closer than ``min_gap`` samples."""
    if idx.size < 2:
        return idx
    order = np.argsort(-heights, kind="stable")
    kept: list[int] = []
    for j in order:
        p = int(idx[j])
        pos = bisect.bisect_left(kept, p)
        if pos > 0 and p - kept[pos - 1] < min_gap:
            continue
        if pos < len(kept) and kept[pos] - p < min_gap:
            continue
        kept.insert(pos, p)
    return np.asarray(kept, dtype=np.int64)


def detect_peaks(source: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local maxima of the squared source above three median absolute deviations."""
    sq = np.asarray(source, dtype=np.float64) ** 2
    mad = np.median(np.abs(sq - np.median(sq)))
    peaks, _ = sps.find_peaks(sq)
    peaks = peaks[sq[peaks] > 3.0 * mad]
    return peaks, sq[peaks]


def threshold_spikes(source: np.ndarray, threshold: float, rate_hz: float, refractory_ms: float = 20.0) -> np.ndarray:
    """Spikes of ``source`` using a fixed squared-height threshold (frozen spike/noise split)."""
    peaks, heights = detect_peaks(source)
    keep = heights >= threshold
    return _merge_refractory(peaks[keep], heights[keep], int(round(refractory_ms * rate_hz / 1000.0)))


def cluster_peak_heights(heights: np.ndarray, seed=0, n_init: int = 5) -> tuple[np.ndarray, float, float]:
    """Two-cluster split of peak heights; returns (is_spike mask, silhouette, threshold)."""
    scale = heights.max()
    h = heights / scale
    if np.ptp(h) == 0:
        return np.zeros(h.size, dtype=bool), 0.0, np.inf
    res = kmeans(h, 2, seed=seed, n_init=n_init)
    hi = int(np.argmax(res.centroids[:, 0]))
    is_spike = res.labels == hi
    sil = silhouette_1d(h, res.labels)
    threshold = h[is_spike].min() * scale if is_spike.any() else np.inf
    return is_spike, sil, float(threshold)


def extract_spikes(source, rate_hz: float, refractory_ms: float = 20.0, seed=0) -> SpikeExtraction:
    """Spike sample indices from one separated source.

    Heights are normalised by their maximum before clustering, so the result
    does not depend on the source's amplitude scale.
    """
    source = np.asarray(source, dtype=np.float64)
    if source.size == 0:
        raise ParameterError("empty source")
    peaks, heights = detect_peaks(source)
    if peaks.size < 2:
        return SpikeExtraction(np.empty(0, dtype=np.int64), -1.0, np.inf)
    is_spike, sil, threshold = cluster_peak_heights(heights, seed=seed)
    min_gap = int(round(refractory_ms * rate_hz / 1000.0))
    idx = _merge_refractory(peaks[is_spike], heights[is_spike], min_gap)
    return SpikeExtraction(idx.astype(np.int64), sil, threshold)


# ---------------------------------------------------------------------------
# neural drive


@dataclass(frozen=True)
class KernelSpec:
    shape: str = "hann"
    length_ms: float = 400.0

    def taps(self, rate_hz: float) -> np.ndarray:
        """Causal smoothing kernel normalised to sum to ``rate_hz`` (drive in spikes/s)."""
        n = int(round(self.length_ms * rate_hz / 1000.0))
        if n < 1:
            raise ParameterError("kernel length must be positive")
        if self.shape == "hann":
            h = sps.windows.hann(n, sym=False) if n > 1 else np.ones(1)
        elif self.shape == "box":
            h = np.ones(n)
        else:
            raise ParameterError(f"unknown kernel shape {self.shape!r}")
        return h * (rate_hz / h.sum())


def smooth_spikes(spikes: SpikeTrainSet, kernel: KernelSpec) -> np.ndarray:
    """Per-unit causal convolution of the binary trains with the kernel, at the spike rate.

    Computed by adding one kernel copy per discharge, so each output sample
    depends only on discharges at or before it.
    """
    h = kernel.taps(spikes.sample_rate_hz)
    n = spikes.n_samples
    out = np.zeros((spikes.n_units, n))
    for u, s in enumerate(spikes.spikes):
        for p in s:
            m = min(h.size, n - p)
            out[u, p : p + m] += h[:m]
    return out


@dataclass
class NeuralDrive:
    unit_drives: MultiChannelSignal
    group_drives: MultiChannelSignal
    kernel: KernelSpec
    unit_groups: list[str] = field(default_factory=list)


def neural_drive(
    spikes: SpikeTrainSet,
    kernel: KernelSpec = KernelSpec(),
    out_rate_hz: float = 200.0,
    unit_groups: list[str] | None = None,
    group_names: list[str] | None = None,
) -> NeuralDrive:
    """Smooth each train, resample to ``out_rate_hz`` and sum units per muscle group."""
    if kernel.length_ms <= 0:
        raise ParameterError("kernel length must be positive")
    unit_groups = list(unit_groups) if unit_groups is not None else ["all"] * spikes.n_units
    group_names = list(group_names) if group_names is not None else list(dict.fromkeys(unit_groups)) or ["all"]
    d = smooth_spikes(spikes, kernel)
    hi = MultiChannelSignal(d if d.size else np.zeros((1, spikes.n_samples)), spikes.sample_rate_hz)
    lo = dsp.resample(hi, out_rate_hz)
    unit = np.maximum(lo.data[: spikes.n_units], 0.0)
    groups = np.zeros((len(group_names), lo.n_samples))
    for g, name in enumerate(group_names):
        members = [u for u, gname in enumerate(unit_groups) if gname == name]
        if members:
            groups[g] = unit[members].sum(axis=0)
    labels = [f"mu{uid}" for uid in spikes.unit_ids]
    return NeuralDrive(
        unit_drives=MultiChannelSignal(unit, out_rate_hz, labels) if labels else MultiChannelSignal(np.zeros((0, lo.n_samples)), out_rate_hz, []),
        group_drives=MultiChannelSignal(groups, out_rate_hz, group_names),
        kernel=kernel,
        unit_groups=unit_groups,
    )


# ---------------------------------------------------------------------------
# cleanup


def _binned(spikes: SpikeTrainSet, bin_ms: float) -> np.ndarray:
    width = max(1, int(round(bin_ms * spikes.sample_rate_hz / 1000.0)))
    n_bins = int(np.ceil(spikes.n_samples / width))
    out = np.zeros((spikes.n_units, n_bins))
    for u, s in enumerate(spikes.spikes):
        np.add.at(out[u], s // width, 1.0)
    return out


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 0 else 0.0


def dedup_and_rank(
    units: SpikeTrainSet,
    force: MultiChannelSignal,
    dup_threshold: float = 0.5,
    min_silhouette: float = 0.85,
    bin_ms: float = 5.0,
    kernel: KernelSpec = KernelSpec(),
    max_units: int | None = None,
) -> SpikeTrainSet:
    """Collapse duplicates, drop poorly separated units, rank survivors by force correlation.

    Two units are duplicates when their 5 ms binned trains correlate above
    ``dup_threshold``; the one with the lower silhouette goes. Survivors are
    sorted by the correlation between their smoothed drive and the force,
    highest first.
    """
    if force.n_samples != units.n_samples:
        raise ParameterError("force and spike trains are not aligned")
    n = units.n_units
    sil = np.nan_to_num(units.silhouette, nan=-1.0)
    binned = _binned(units, bin_ms)
    alive = np.ones(n, dtype=bool)
    for i in np.argsort(-sil, kind="stable"):
        if not alive[i]:
            continue
        for j in range(n):
            if j != i and alive[j] and sil[j] <= sil[i] and pearson(binned[i], binned[j]) > dup_threshold:
                alive[j] = False
    alive &= sil >= min_silhouette
    keep = np.flatnonzero(alive)
    if keep.size == 0:
        raise EmptyDecompositionError("every decomposed unit was removed as duplicate or low quality")
    kept = units.subset(keep)
    drives = smooth_spikes(kept, kernel)
    f = np.asarray(force.data[0], dtype=np.float64)
    corr = np.array([pearson(d, f) for d in drives])
    order = np.argsort(-corr, kind="stable")
    if max_units is not None:
        order = order[:max_units]
    kept.force_corr = corr
    return kept.subset(order)


# ---------------------------------------------------------------------------
# fitted decomposition


@dataclass
class DecompParams:
    per_subregion: int = 8
    n_sources: int | None = None
    tol: float = 1e-4
    max_iter: int = 100
    max_fit_samples: int = 131072
    refractory_ms: float = 20.0
    silhouette_cutoff: float = 0.85
    dup_threshold: float = 0.5
    dup_bin_ms: float = 5.0
    kernel_shape: str = "hann"
    kernel_length_ms: float = 400.0
    max_units: int | None = None

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.kernel_shape, self.kernel_length_ms)


@dataclass
class UnitFilter:
    """One accepted motor unit: a spatial filter on the raw channels plus its spike threshold."""

    group: str
    channels: list[int]
    mean: np.ndarray
    weights: np.ndarray  # combined unmixing row times whitening matrix
    threshold: float
    silhouette: float
    force_corr: float = float("nan")

    def source(self, emg: np.ndarray) -> np.ndarray:
        x = np.asarray(emg[self.channels], dtype=np.float64)
        return self.weights @ (x - self.mean[:, None])


@dataclass
class Decomposition:
    units: list[UnitFilter]
    group_names: list[str]
    sample_rate_hz: float
    refractory_ms: float = 20.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def unit_groups(self) -> list[str]:
        return [u.group for u in self.units]

    def spikes(self, emg: MultiChannelSignal) -> SpikeTrainSet:
        """Apply the frozen filters and thresholds to a (pre-filtered) recording."""
        trains = [threshold_spikes(u.source(emg.data), u.threshold, emg.sample_rate_hz, self.refractory_ms) for u in self.units]
        return SpikeTrainSet(
            trains,
            emg.n_samples,
            emg.sample_rate_hz,
            silhouette=[u.silhouette for u in self.units],
            force_corr=[u.force_corr for u in self.units],
        )


def fit_decomposition(
    emg: list[MultiChannelSignal],
    force: list[MultiChannelSignal],
    channel_groups: dict[str, list[int]],
    params: DecompParams = DecompParams(),
    seed=0,
) -> Decomposition:
    """Decompose the concatenated training recordings, array by array.

    Each array (channel group) gets its own channel selection, whitening and
    FastICA; the candidate units of all arrays are then cleaned up together
    against the concatenated force.
    """
    rate = emg[0].sample_rate_hz
    x = np.concatenate([np.asarray(e.data, dtype=np.float64) for e in emg], axis=1)
    f = np.concatenate([np.asarray(fo.data, dtype=np.float64) for fo in force], axis=1)
    whole = MultiChannelSignal(x, rate)
    selected = select_channels(whole, channel_groups, params.per_subregion)
    seeds = np.random.SeedSequence(seed).generate_state(len(selected))
    candidates: list[UnitFilter] = []
    trains: list[np.ndarray] = []
    diagnostics = {}
    for (name, chans), group_seed in zip(selected.items(), seeds):
        xg = x[chans]
        stride = max(1, int(np.ceil(xg.shape[1] / params.max_fit_samples)))
        wt = fit_whitening(xg[:, ::stride])
        y_fit = wt.apply(xg[:, ::stride])
        try:
            um = fastica(y_fit, params.n_sources, params.tol, params.max_iter, seed=int(group_seed))
        except ConvergenceError as exc:
            log.warning("group %s: %s", name, exc)
            diagnostics[name] = {"channels": len(chans), "components": wt.retained_components, "converged": 0}
            continue
        filters = um.unmixing_matrix @ wt.whitening_matrix
        diagnostics[name] = {
            "channels": len(chans),
            "components": wt.retained_components,
            "sources": um.source_count,
            "converged": int(um.converged.sum()),
        }
        for row in np.flatnonzero(um.converged):
            src = filters[row] @ (xg - wt.mean_vector[:, None])
            ex = extract_spikes(src, rate, params.refractory_ms, seed=int(group_seed))
            if ex.indices.size == 0:
                continue
            candidates.append(UnitFilter(name, list(map(int, chans)), wt.mean_vector, filters[row], ex.threshold, ex.silhouette))
            trains.append(ex.indices)
    if not candidates:
        raise EmptyDecompositionError("no source yielded a spike train", diagnostics)
    cand = SpikeTrainSet(trains, x.shape[1], rate, silhouette=[c.silhouette for c in candidates])
    kept = dedup_and_rank(
        cand,
        MultiChannelSignal(f[:1], rate),
        params.dup_threshold,
        params.silhouette_cutoff,
        params.dup_bin_ms,
        params.kernel,
        params.max_units,
    )
    units = []
    for uid, corr in zip(kept.unit_ids, kept.force_corr):
        c = candidates[uid]
        c.force_corr = float(corr)
        units.append(c)
    diagnostics["candidates"] = len(candidates)
    diagnostics["kept"] = len(units)
    return Decomposition(units, list(channel_groups), rate, params.refractory_ms, diagnostics)
