"""Exact reference marginals.

Scalar linear-Gaussian model: Kalman filter, RTS smoother and the backward
information filter in closed form.  Finite HMM: dynamic programming, with a
brute-force cross-check that materializes the joint law of the whole path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import UnsupportedModelError
from .model import DiscreteGamma, FiniteHMM, GammaFamily, GaussianGamma, LinearGaussianModel, default_gamma_prior

VARIANCE_FLOOR = 1e-300
ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class GaussianMarginal:
    mean: float
    variance: float
    time: int

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def expect(self, h, breakpoints=(-10.0, -2.0, 2.0, 10.0)) -> float:
        """E[h(X)] by adaptive quadrature over mean +/- 12 sd."""
        lo, hi = self.mean - 12 * self.sd, self.mean + 12 * self.sd
        pts = [p for p in breakpoints if lo < p < hi]
        dens = lambda x: math.exp(-0.5 * ((x - self.mean) / self.sd) ** 2) / (self.sd * math.sqrt(2 * math.pi))  # noqa: E731
        val, _ = integrate.quad(lambda x: float(h(np.float64(x))) * dens(x), lo, hi,
                                points=pts or None, epsabs=1e-13, epsrel=1e-11, limit=200)
        return val


@dataclass(frozen=True)
class DiscreteMarginal:
    probs: np.ndarray
    time: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must lie on the simplex")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def expect(self, h) -> float:
        return float(self.probs @ np.asarray(h(np.arange(len(self.probs))), dtype=np.float64))


def _gauss(mean, var, t) -> GaussianMarginal:
    if not var > 0:
        raise FloatingPointError(f"variance underflow at t={t}")
    return GaussianMarginal(float(mean), max(float(var), VARIANCE_FLOOR), t)


# ---------------------------------------------------------------------------
# linear-Gaussian


def kalman_rts(model: LinearGaussianModel) -> tuple[list[GaussianMarginal], list[GaussianMarginal]]:
    """Filtering and smoothing marginals for t = 0..T."""
    if not isinstance(model, LinearGaussianModel):
        raise UnsupportedModelError("Kalman recursions need a linear-Gaussian model")
    a, b, su2, sv2 = model.a, model.b, model.sigma_u**2, model.sigma_v**2
    T = model.horizon
    mp, pp = np.empty(T + 1), np.empty(T + 1)
    mf, pf = np.empty(T + 1), np.empty(T + 1)
    m, p = model.m0, model.s0**2
    for t in range(T + 1):
        if t:
            m, p = a * mf[t - 1], a * a * pf[t - 1] + su2
        mp[t], pp[t] = m, p
        k = p * b / (b * b * p + sv2)
        mf[t], pf[t] = m + k * (model.ys[t] - b * m), (1 - k * b) * p
    ms, ps = mf.copy(), pf.copy()
    for t in range(T - 1, -1, -1):
        j = pf[t] * a / pp[t + 1]
        ms[t] = mf[t] + j * (ms[t + 1] - mp[t + 1])
        ps[t] = pf[t] + j * j * (ps[t + 1] - pp[t + 1])
    return ([_gauss(mf[t], pf[t], t) for t in range(T + 1)],
            [_gauss(ms[t], ps[t], t) for t in range(T + 1)])


def lgssm_backward_info(model: LinearGaussianModel, gammas: GammaFamily | None = None) -> list[GaussianMarginal]:
    """Moments of gamma_t(x) p(y_{t:T} | x_t = x), normalized, for t = 0..T.

    The likelihood of y_{t:T} is carried as exp(-J x^2 / 2 + h x).  Any
    Gaussian gamma family is handled exactly; with the prior marginals the
    result is the law of X_t given y_{t:T}.
    """
    if not isinstance(model, LinearGaussianModel):
        raise UnsupportedModelError("closed-form backward filter needs a linear-Gaussian model")
    gammas = default_gamma_prior(model) if gammas is None else gammas
    if not isinstance(gammas, GaussianGamma):
        raise UnsupportedModelError("closed-form backward filter needs a Gaussian gamma family")
    a, b, su2, sv2 = model.a, model.b, model.sigma_u**2, model.sigma_v**2
    T = model.horizon
    out: list[GaussianMarginal] = [None] * (T + 1)  # type: ignore[list-item]
    J, h = 0.0, 0.0
    for t in range(T, -1, -1):
        if t < T:
            d = 1.0 + su2 * J
            J, h = a * a * J / d, a * h / d
        J, h = J + b * b / sv2, h + b * model.ys[t] / sv2
        prec = 1.0 / gammas.variances[t] + J
        out[t] = _gauss((gammas.means[t] / gammas.variances[t] + h) / prec, 1.0 / prec, t)
    return out


# ---------------------------------------------------------------------------
# finite HMM


def _normalize(v):
    return v / v.sum()


def _hmm_dp(model: FiniteHMM, gam: np.ndarray):
    Q, G, T = model.trans, model.potential_table, model.horizon
    filt = np.empty((T + 1, model.n_states))
    filt[0] = _normalize(model.init * G[0])
    for t in range(1, T + 1):
        filt[t] = _normalize((filt[t - 1] @ Q) * G[t])
    # beta[t] propto p(y_{t+1:T} | x_t), rescaled each step
    beta = np.ones((T + 1, model.n_states))
    for t in range(T - 1, -1, -1):
        beta[t] = _normalize(Q @ (G[t + 1] * beta[t + 1]))
    info = np.array([_normalize(gam[t] * G[t] * beta[t]) for t in range(T + 1)])
    smooth = np.array([_normalize(filt[t] * beta[t]) for t in range(T + 1)])
    return filt, info, smooth


def _hmm_enumerate(model: FiniteHMM, gam: np.ndarray):
    # joint weight of every path prefix / suffix as a K x ... x K tensor
    Q, G, T, K = model.trans, model.potential_table, model.horizon, model.n_states
    W = model.init * G[0]
    filt = [_normalize(W)]
    for t in range(1, T + 1):
        W = W[..., None] * (Q * G[t])
        filt.append(_normalize(W.reshape(-1, K).sum(axis=0)))
    smooth = [_normalize(W.sum(axis=tuple(a for a in range(T + 1) if a != s))) if T else _normalize(W)
              for s in range(T + 1)]
    info = [None] * (T + 1)
    S = G[T].copy()
    info[T] = _normalize(gam[T] * S)
    for t in range(T - 1, -1, -1):
        S = (G[t][:, None] * Q).reshape((K, K) + (1,) * (T - 1 - t)) * S[None, ...]
        info[t] = _normalize(gam[t] * S.reshape(K, -1).sum(axis=1))
    return np.array(filt), np.array(info), np.array(smooth)


def hmm_enumerate(model: FiniteHMM, gammas: GammaFamily | None = None):
    """Brute-force filter, backward-information and smoothing marginals."""
    gam = _gamma_table(model, gammas)
    if model.n_states ** (model.horizon + 1) > ENUMERATION_CAP:
        raise ValueError("path space too large to enumerate")
    return _as_marginals(_hmm_enumerate(model, gam))


def _gamma_table(model, gammas):
    if not isinstance(model, FiniteHMM):
        raise UnsupportedModelError("exact HMM marginals need a finite HMM")
    gammas = default_gamma_prior(model) if gammas is None else gammas
    if not isinstance(gammas, DiscreteGamma):
        raise UnsupportedModelError("finite HMM needs a discrete gamma family")
    return gammas.scaled_table


def _as_marginals(arrays):
    return tuple([DiscreteMarginal(row, t) for t, row in enumerate(arr)] for arr in arrays)


def hmm_exact(model: FiniteHMM, gammas: GammaFamily | None = None, cross_check: bool = True):
    """(filter, backward_info, smoother) marginals for t = 0..T by dynamic programming.

    When the path space has at most ``ENUMERATION_CAP`` elements the result is
    checked against brute-force enumeration (tolerance 1e-10); beyond the cap
    the check is skipped with a warning.
    """
    gam = _gamma_table(model, gammas)
    dp = _hmm_dp(model, gam)
    if cross_check:
        if model.n_states ** (model.horizon + 1) > ENUMERATION_CAP:
            warnings.warn("path space exceeds the enumeration cap; cross-check skipped", RuntimeWarning, stacklevel=2)
        else:
            for name, x, y in zip(("filter", "backward_info", "smoother"), dp, _hmm_enumerate(model, gam)):
                err = float(np.abs(x - y).max())
                if err > 1e-10:
                    raise ArithmeticError(f"{name}: dynamic programming and enumeration differ by {err:.3g}")
    return _as_marginals(dp)


def two_filter_marginals(model: FiniteHMM, gammas: GammaFamily | None = None) -> list[DiscreteMarginal]:
    """Smoothing marginals assembled from exact filter and backward-information marginals.

    phi_{s|T}(k) propto sum_{x, x'} phi_{s-1}(x) psi_{s+1}(x') q(x, k) g_s(k) q(k, x') / gamma_{s+1}(x'),
    with the one-sided forms at s = 0 and s = T.
    """
    gam = _gamma_table(model, gammas)
    filt, info, _ = _hmm_dp(model, gam)
    Q, G, T = model.trans, model.potential_table, model.horizon
    out = []
    for s in range(T + 1):
        if T == 0:
            p = filt[0]
        elif s == 0:
            p = filt[0] * (Q @ (info[1] / gam[1]))
        elif s == T:
            p = info[T] / gam[T] * (filt[T - 1] @ Q)
        else:
            p = (filt[s - 1] @ Q) * G[s] * (Q @ (info[s + 1] / gam[s + 1]))
        out.append(DiscreteMarginal(_normalize(p), s))
    return out
