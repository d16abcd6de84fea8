"""
Truncated discrete Gaussian sampling and density evaluation.

The distribution over integer vectors of dimension dim is proportional to
exp(-pi * ||x||^2 / B^2), restricted to ||x|| <= B * sqrt(dim).

Sampling draws every coordinate from the one-dimensional discrete Gaussian
(discrete Laplace proposal plus Bernoulli acceptance), then rejects and
redraws whole vectors that miss the norm bound. The untruncated joint density
factors over coordinates, so the result follows the truncated joint law.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussParams:
    """Width B and dimension dim of a truncated discrete Gaussian."""

    B: int
    dim: int

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    @property
    def sigma2(self) -> float:
        """Variance parameter of exp(-x^2 / (2 sigma^2)) matching exp(-pi x^2 / B^2)."""
        return self.B * self.B / (2 * math.pi)

    @property
    def bound_sq(self) -> int:
        return self.B * self.B * self.dim


def squared_norms(rows: np.ndarray) -> np.ndarray:
    """Exact squared norms of integer rows; falls back to Python ints on overflow risk."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
    if rows.size == 0:
        return np.zeros(rows.shape[0], dtype=np.int64)
    peak = int(np.abs(rows).max())
    if peak * peak * rows.shape[1] < 2 ** 63:
        return np.einsum("ij,ij->i", rows, rows)
    return np.array([sum(v * v for v in row) for row in rows.tolist()], dtype=object)


def sample_1d(B: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Untruncated one-dimensional discrete Gaussian with P(x) ~ exp(-pi x^2 / B^2).

    Args:
        B: Width parameter
        size: Number of samples
        rng: Pseudorandom generator

    Returns:
        int64 array of samples
    """
    sigma2 = B * B / (2 * math.pi)
    t = math.floor(math.sqrt(sigma2)) + 1
    p = -math.expm1(-1.0 / t)
    out = np.empty(size, dtype=np.int64)
    filled = 0
    while filled < size:
        batch = max(2 * (size - filled), 64)
        magnitude = rng.geometric(p, size=batch).astype(np.int64) - 1
        negative = rng.integers(0, 2, size=batch, dtype=np.int8) == 1
        keep = ~(negative & (magnitude == 0))
        candidates = np.where(negative, -magnitude, magnitude)[keep]
        bias = (np.abs(candidates) - sigma2 / t) ** 2 / (2 * sigma2)
        accepted = candidates[rng.random(candidates.size) < np.exp(-bias)]
        take = min(accepted.size, size - filled)
        out[filled:filled + take] = accepted[:take]
        filled += take
    return out


def dgauss_sample_batch(g: GaussParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw count independent vectors from the truncated law, shape (count, dim)."""
    out = sample_1d(g.B, count * g.dim, rng).reshape(count, g.dim)
    rejected = np.flatnonzero(squared_norms(out) > g.bound_sq)
    rounds = 0
    while rejected.size:
        rounds += 1
        redraw = sample_1d(g.B, rejected.size * g.dim, rng).reshape(rejected.size, g.dim)
        out[rejected] = redraw
        rejected = rejected[squared_norms(redraw) > g.bound_sq]
    if rounds:
        logger.debug("dgauss B=%d dim=%d needed %d rejection rounds", g.B, g.dim, rounds)
    return out


def dgauss_sample(g: GaussParams, rng: np.random.Generator) -> np.ndarray:
    """One vector of dim integers with ||x|| <= B * sqrt(dim)."""
    return dgauss_sample_batch(g, 1, rng)[0]


def in_support(g: GaussParams, v: np.ndarray) -> bool:
    """Exact integer test ||v||^2 <= B^2 * dim."""
    v = np.asarray(v, dtype=np.int64)
    if v.shape != (g.dim,):
        raise ValueError(f"Expected vector of length {g.dim}, got shape {v.shape}")
    return bool(squared_norms(v)[0] <= g.bound_sq)


def dgauss_log_rho(g: GaussParams, v: np.ndarray) -> float:
    """Log of the unnormalised density; -inf outside the support."""
    v = np.asarray(v, dtype=np.int64)
    if v.shape != (g.dim,):
        raise ValueError(f"Expected vector of length {g.dim}, got shape {v.shape}")
    sq = int(squared_norms(v)[0])
    if sq > g.bound_sq:
        return -math.inf
    return -math.pi * sq / (g.B * g.B)


def dgauss_rho(g: GaussParams, v: np.ndarray) -> float:
    """Unnormalised density exp(-pi ||v||^2 / B^2) inside the support, else 0.

    Callers that only need ratios can use this directly; the normaliser cancels.
    """
    return math.exp(dgauss_log_rho(g, v))
