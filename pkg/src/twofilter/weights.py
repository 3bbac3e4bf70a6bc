"""Log-domain weight arithmetic and categorical sampling."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import logsumexp

from .errors import WeightDegeneracyError


def log_sum(log_weights: np.ndarray) -> float:
    """log of the sum of exp(log_weights), computed with a max shift."""
    return float(logsumexp(log_weights))


def normalize(log_weights: np.ndarray) -> np.ndarray:
    """Normalized linear-domain weights."""
    lw = np.asarray(log_weights, dtype=np.float64)
    m = np.max(lw)
    if not np.isfinite(m):
        raise WeightDegeneracyError("all weights are zero")
    w = np.exp(lw - m)
    return w / w.sum()


def ess(log_weights: np.ndarray) -> float:
    """Effective sample size (sum w)^2 / sum w^2."""
    lw = np.asarray(log_weights, dtype=np.float64)
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def _cdf(log_weights: np.ndarray) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=np.float64)
    m = np.max(lw)
    if not np.isfinite(m):
        raise WeightDegeneracyError("cannot select from all-zero weights")
    return np.cumsum(np.exp(lw - m))


def _search(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # first index whose cumulative strictly exceeds u
    idx = np.searchsorted(cdf, u, side="right")
    last = int(np.searchsorted(cdf, cdf[-1], side="left"))
    return np.minimum(idx, last)


def sample_categorical(rng: np.random.Generator, log_weights: np.ndarray, size: int) -> np.ndarray:
    """Draw ``size`` i.i.d. indices with probabilities proportional to exp(log_weights).

    Inverse-CDF lookup on the cumulative table; the selected index is the
    first one whose cumulative sum is strictly greater than the uniform.
    """
    cdf = _cdf(log_weights)
    u = rng.random(size) * cdf[-1]
    return _search(cdf, u)


def sample_systematic_unverified(rng: np.random.Generator, log_weights: np.ndarray, size: int) -> np.ndarray:
    """Systematic selection.  Not i.i.d.; excluded from every verified path."""
    warnings.warn("systematic selection is not covered by the convergence guarantees", stacklevel=2)
    cdf = _cdf(log_weights)
    u = (rng.random() + np.arange(size)) / size * cdf[-1]
    return _search(cdf, u)


def sample_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of a (n, K) matrix of nonnegative weights."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last)
