"""Weighted particle systems and self-normalized estimators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np

from . import weights as _w
from .errors import WeightDegeneracyError

Direction = Literal["forward", "backward", "smoothing"]


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """N particles with log-weights, optional ancestor indices, a time and a direction.

    Individual weights may be zero (log-weight ``-inf``), but at least one
    must be strictly positive and none may be NaN or ``+inf``.

    ``log_offset`` is a common factor shared by every weight: the
    unnormalized weights are ``exp(log_weights + log_offset)``.  Keeping it
    apart leaves the normalized weights untouched by it, bit for bit.
    """

    particles: np.ndarray
    log_weights: np.ndarray
    time: int
    direction: Direction
    ancestors: np.ndarray | None = None
    log_offset: float = 0.0

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=np.float64)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "particles", np.asarray(self.particles))
        if lw.ndim != 1 or len(lw) != len(self.particles):
            raise ValueError("particles and log_weights must have the same length")
        if np.isnan(lw).any() or np.isposinf(lw).any():
            raise ValueError("log-weights contain NaN or +inf")
        if not np.isfinite(lw).any():
            raise WeightDegeneracyError(f"all {len(lw)} weights are zero ({self.direction}, t={self.time})")
        if self.ancestors is not None:
            a = np.asarray(self.ancestors)
            if a.shape != lw.shape:
                raise ValueError("ancestors must have one entry per particle")
            if a.size and (a.min() < 0 or a.max() >= len(lw)):
                raise ValueError("ancestor index out of range")
        for arr in (self.particles, self.log_weights, self.ancestors):
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.log_weights)

    @cached_property
    def log_weight_sum(self) -> float:
        return _w.log_sum(self.log_weights) + self.log_offset

    @property
    def weight_sum(self) -> float:
        """Omega, the linear-domain weight sum (may overflow for extreme log-weights)."""
        return float(np.exp(self.log_weight_sum))

    @cached_property
    def normalized_weights(self) -> np.ndarray:
        return _w.normalize(self.log_weights)

    def to_csv(self, path) -> None:
        """Write ``index,particle,log_weight,ancestor`` rows for debugging."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "particle", "log_weight", "ancestor"])
            anc = self.ancestors if self.ancestors is not None else [""] * len(self)
            for i, (x, lw, a) in enumerate(zip(self.particles, self.log_weights, anc)):
                writer.writerow([i, repr(x.item() if hasattr(x, "item") else x), repr(float(lw) + self.log_offset), a])


def estimate(ps: ParticleSystem, h: Callable[[np.ndarray], np.ndarray]) -> float:
    """Self-normalized estimate  Omega^{-1} sum_l w_l h(x_l).

    ``h`` is applied to the whole particle array at once.
    """
    vals = np.broadcast_to(np.asarray(h(ps.particles), dtype=np.float64), (len(ps),))
    w = ps.normalized_weights
    nz = w > 0
    w, vals = w[nz], vals[nz]
    # centring on one value makes constant h exact
    ref = vals[np.argmax(w)]
    return float(ref + np.dot(w, vals - ref) / w.sum())


def ess(ps: ParticleSystem) -> float:
    """Effective sample size of the system, in [1, N]."""
    return _w.ess(ps.log_weights)
