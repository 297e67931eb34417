"""Deterministic sample generation.

All randomness flows through the counter-based Philox generator, so a
fixed seed reproduces the same streams bit-for-bit on any platform.
Normal variates are produced by inverse-CDF transform of the uniform
stream rather than rejection methods, which keeps the draw count (and
hence the stream position) independent of the values drawn.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["generator", "open_uniforms", "standard_normals", "latin_hypercube"]


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for a seed; `stream` selects a decorrelated jump."""
    bg = np.random.Philox(seed)
    if stream:
        bg = bg.jumped(stream)
    return np.random.Generator(bg)


def open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniforms strictly inside (0, 1); boundary draws are resampled."""
    u = rng.random(shape)
    mask = u <= 0.0
    while np.any(mask):
        u[mask] = rng.random(int(mask.sum()))
        mask = u <= 0.0
    return u


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via the inverse normal CDF of an open uniform stream."""
    return ndtri(open_uniforms(rng, shape))


def latin_hypercube(n: int, lower, upper, seed: int, stream: int = 0) -> np.ndarray:
    """Latin hypercube design of n points in a box.

    Each dimension is split into n equal strata; every stratum receives
    exactly one point, jittered uniformly within the stratum, with an
    independent random stratum permutation per dimension.
    """
    if n < 1:
        raise ValueError("need at least one point")
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    rng = generator(seed, stream)
    dim = lower.size
    pts = np.empty((n, dim))
    for d in range(dim):
        perm = rng.permutation(n)
        jitter = rng.random(n)
        pts[:, d] = lower[d] + (perm + jitter) / n * (upper[d] - lower[d])
    return pts
