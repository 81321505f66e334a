"""Seeded k-means (k-means++ start, Lloyd iterations)."""
from __future__ import annotations

import numpy as np


def _sq_dists(x, centers):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(x, k, rng):
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a center
            centers[j] = x[rng.integers(n)]
        else:
            idx = rng.choice(n, p=closest / total)
            centers[j] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[j:j + 1])[:, 0])
    return centers


def kmeans(x, k, rng, max_iter=25, tol=1e-6):
    """Return ``(centers, labels, inertia)``.

    Empty clusters keep their previous center.  Stops when the relative
    inertia improvement falls below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    centers = kmeans_pp_init(x, k, rng)
    prev = np.inf
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        labels = d.argmin(axis=1)
        inertia = float(d[np.arange(len(x)), labels].sum())
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
        if np.isfinite(prev) and prev - inertia <= tol * prev:
            break
        prev = inertia
    d = _sq_dists(x, centers)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(x)), labels].sum())
    return centers, labels, inertia
