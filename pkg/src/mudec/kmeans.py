"""k-means with k-means++ seeding, and a fast silhouette score for 1-D data."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``k`` seeds: the first uniformly, each next with probability proportional to D^2."""
    n = x.shape[0]
    centroids = [x[rng.integers(n)]]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centroids.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centroids)


def _sq_dist(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    if x.shape[1] == 1:
        return (x - centroids[:, 0][None, :]) ** 2
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float) -> KMeansResult:
    k = centroids.shape[0]
    for _ in range(max_iter):
        labels = _sq_dist(x, centroids).argmin(axis=1)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        new = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centroids)
        shift = np.abs(new - centroids).max()
        centroids = new
        if shift <= tol:
            break
    dist = _sq_dist(x, centroids)
    labels = dist.argmin(axis=1)
    inertia = float(dist[np.arange(x.shape[0]), labels].sum())
    return KMeansResult(centroids, labels, inertia)


def kmeans(x, k: int, seed=0, n_init: int = 5, max_iter: int = 100, tol: float = 1e-10) -> KMeansResult:
    """Lloyd iterations from ``n_init`` k-means++ seedings; the lowest-inertia run wins."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < k:
        raise ValueError(f"need at least {k} points, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(x, kmeans_pp_init(x, k, rng), max_iter, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def _mean_abs_dist(q: np.ndarray, ref_sorted: np.ndarray, csum: np.ndarray) -> np.ndarray:
    """Mean of ``|q_i - r|`` over all ``r`` in ``ref_sorted``, for every query."""
    m = ref_sorted.size
    pos = np.searchsorted(ref_sorted, q, side="right")
    below = csum[pos]
    above = csum[-1] - below
    return (q * pos - below + above - q * (m - pos)) / m


def silhouette_1d(x, labels) -> float:
    """Mean silhouette of a 1-D clustering with absolute-difference distance, in O(n log n)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        return 0.0
    sorted_by = {}
    for c in uniq:
        r = np.sort(x[labels == c])
        sorted_by[c] = (r, np.concatenate([[0.0], np.cumsum(r)]))
    s = np.zeros_like(x)
    for c in uniq:
        mask = labels == c
        q = x[mask]
        r, cs = sorted_by[c]
        n_c = r.size
        if n_c == 1:
            continue
        # the point itself contributes zero distance; rescale to exclude it
        a = _mean_abs_dist(q, r, cs) * n_c / (n_c - 1)
        b = np.full(q.shape, np.inf)
        for other in uniq:
            if other != c:
                ro, cso = sorted_by[other]
                b = np.minimum(b, _mean_abs_dist(q, ro, cso))
        denom = np.maximum(a, b)
        s[mask] = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())
