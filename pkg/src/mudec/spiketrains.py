"""Per-unit spike-time containers and truth-linked scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SpikeTrainSet:
    """Discharge times of several motor units, as sample indices at ``sample_rate_hz``."""

    spikes: list[np.ndarray]
    n_samples: int
    sample_rate_hz: float
    silhouette: np.ndarray | None = None
    force_corr: np.ndarray | None = None
    unit_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.spikes = [np.asarray(s, dtype=np.int64) for s in self.spikes]
        for s in self.spikes:
            if s.size > 1 and np.any(np.diff(s) <= 0):
                raise ValueError("spike indices must be strictly increasing")
            if s.size and (s[0] < 0 or s[-1] >= self.n_samples):
                raise ValueError("spike index outside the recording")
        if not self.unit_ids:
            self.unit_ids = list(range(len(self.spikes)))
        n = len(self.spikes)
        if self.silhouette is None:
            self.silhouette = np.full(n, np.nan)
        if self.force_corr is None:
            self.force_corr = np.full(n, np.nan)
        self.silhouette = np.asarray(self.silhouette, dtype=np.float64)
        self.force_corr = np.asarray(self.force_corr, dtype=np.float64)

    @property
    def n_units(self) -> int:
        return len(self.spikes)

    def binary(self, dtype=np.float64) -> np.ndarray:
        """Dense ``(units, samples)`` view with ones at discharge samples."""
        out = np.zeros((self.n_units, self.n_samples), dtype=dtype)
        for u, s in enumerate(self.spikes):
            out[u, s] = 1
        return out

    def subset(self, keep) -> "SpikeTrainSet":
        keep = list(keep)
        return SpikeTrainSet(
            spikes=[self.spikes[i] for i in keep],
            n_samples=self.n_samples,
            sample_rate_hz=self.sample_rate_hz,
            silhouette=self.silhouette[keep],
            force_corr=self.force_corr[keep],
            unit_ids=[self.unit_ids[i] for i in keep],
        )


def _count_matches(est: np.ndarray, ref: np.ndarray, tol: int) -> int:
    """Discharges of ``est`` with a distinct partner in ``ref`` no more than ``tol`` samples away."""
    if est.size == 0 or ref.size == 0:
        return 0
    pos = np.searchsorted(ref, est)
    left = np.clip(pos - 1, 0, ref.size - 1)
    right = np.clip(pos, 0, ref.size - 1)
    dl = np.abs(est - ref[left])
    dr = np.abs(ref[right] - est)
    nearest = np.where(dl <= dr, left, right)
    ok = np.minimum(dl, dr) <= tol
    return int(np.unique(nearest[ok]).size)


def rate_of_agreement(
    est: np.ndarray,
    ref: np.ndarray,
    rate_hz: float,
    tol_ms: float = 2.5,
    max_lag_ms: float = 20.0,
) -> tuple[float, int]:
    """Rate of agreement ``c / (c + a + b)`` after the best constant lag.

    ``c`` is the number of matched discharges, ``a`` and ``b`` the unmatched
    ones in each train. A decomposed source carries its MUAP's latency, so a
    single lag in ``[-max_lag_ms, max_lag_ms]`` is searched first. Returns
    ``(roa, lag_samples)`` with the lag applied to ``est``.
    """
    est = np.asarray(est, dtype=np.int64)
    ref = np.asarray(ref, dtype=np.int64)
    if est.size == 0 or ref.size == 0:
        return 0.0, 0
    tol = int(np.floor(tol_ms * rate_hz / 1000.0))
    max_lag = int(round(max_lag_ms * rate_hz / 1000.0))
    best, best_lag = -1, 0
    for lag in sorted(range(-max_lag, max_lag + 1), key=abs):
        c = _count_matches(est + lag, ref, tol)
        if c > best:
            best, best_lag = c, lag
    roa = best / (est.size + ref.size - best)
    return float(roa), best_lag


def match_to_truth(est: SpikeTrainSet, truth: SpikeTrainSet, tol_ms: float = 2.5) -> list[tuple[int, int, float]]:
    """For every estimated unit, the truth unit with the highest rate of agreement.

    Returns ``(est_index, truth_index, roa)`` triples.
    """
    out = []
    for i, s in enumerate(est.spikes):
        scores = [rate_of_agreement(s, t, est.sample_rate_hz, tol_ms)[0] for t in truth.spikes]
        j = int(np.argmax(scores)) if scores else -1
        out.append((i, j, scores[j] if scores else 0.0))
    return out


def recovered_units(est: SpikeTrainSet, truth: SpikeTrainSet, min_roa: float = 0.9, tol_ms: float = 2.5) -> dict[int, float]:
    """Truth units matched by some estimated unit with RoA above ``min_roa`` (best RoA per truth unit)."""
    best: dict[int, float] = {}
    for _, j, roa in match_to_truth(est, truth, tol_ms):
        if j >= 0 and roa > min_roa and roa > best.get(j, -1.0):
            best[j] = roa
    return best
