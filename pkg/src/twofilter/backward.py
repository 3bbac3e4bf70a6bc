"""Auxiliary backward information filter.

The backward system at time ``t`` targets the distribution proportional to
``gamma_t(x) p(y_{t:T} | x)``.  Its ancestor indices point into the system
at ``t+1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnsupportedModelError
from .model import FiniteHMM, GammaFamily, GaussianGamma, LinearGaussianModel, StateSpaceModel, norm_logpdf
from .particles import ParticleSystem
from .rng import BACKWARD, stream
from .weights import sample_categorical, sample_rows


@dataclass(frozen=True, eq=False)
class BackwardProposal:
    """Adjustment ``theta_t(x')`` and kernel ``r_t(x', x)`` for the step ``t+1 -> t``.

    ``x'`` is always the time-(t+1) particle.  The adjustment is
    ``exp(log_scale) * exp(log_adjustment(t, x'))``; a constant factor kept
    in ``log_scale`` never enters per-particle arithmetic.
    """

    log_adjustment: Callable
    log_kernel: Callable
    kernel_sampler: Callable
    name: str = "custom"
    log_scale: float = 0.0

    def full_log_adjustment(self, t, xp):
        return self.log_adjustment(t, xp) + self.log_scale

    def adjustment(self, t, xp):
        return np.exp(self.full_log_adjustment(t, xp))

    def kernel_density(self, t, xp, x):
        return np.exp(self.log_kernel(t, xp, x))


def _state_values(model: FiniteHMM, gammas: GammaFamily, t: int, with_potential: bool) -> np.ndarray:
    states = np.arange(model.n_states)
    f = gammas.gamma(t, states)
    return f * model.potential_table[t] if with_potential else f


def _discrete_backward(model: FiniteHMM, gammas: GammaFamily, with_potential: bool, name: str) -> BackwardProposal:
    Q = model.trans
    scale = gammas.log_scale
    gammas = gammas.unscaled()

    def unnormalized(t, xp):
        # rows: x' ; columns: candidate x_t
        return _state_values(model, gammas, t, with_potential)[None, :] * Q[:, np.asarray(xp)].T

    if with_potential:
        def log_adj(t, xp):
            with np.errstate(divide="ignore"):
                return np.log((_state_values(model, gammas, t, True) @ Q)[xp])
    else:
        def log_adj(t, xp):
            return gammas.log_gamma(t + 1, xp)

    def log_kernel(t, xp, x):
        xp, x = np.broadcast_arrays(np.atleast_1d(xp), np.atleast_1d(x))
        m = unnormalized(t, xp)
        with np.errstate(divide="ignore"):
            return np.log(m[np.arange(len(xp)), x] / m.sum(axis=1))

    def sampler(rng, t, xp):
        return sample_rows(rng, unnormalized(t, np.atleast_1d(xp)))

    return BackwardProposal(log_adj, log_kernel, sampler, name=name, log_scale=scale)


def gamma_ratio_backward_proposal(gammas: GammaFamily, log_kernel: Callable, kernel_sampler: Callable,
                                  name: str = "custom") -> BackwardProposal:
    """theta(x') = gamma_{t+1}(x') with a caller-supplied kernel ``r_t(x', x)``.

    The selection law then depends on the backward weights alone.
    """
    scale = gammas.log_scale
    shape = gammas.unscaled()
    return BackwardProposal(lambda t, xp: shape.log_gamma(t + 1, xp), log_kernel, kernel_sampler,
                            name=name, log_scale=scale)


def fully_adapted_backward_proposal(model: StateSpaceModel, gammas: GammaFamily) -> BackwardProposal:
    """theta(x') = sum_x gamma_t(x) g_t(x) q(x, x'); kernel proportional to gamma_t g_t q(., x').

    Yields equal backward weights.  Finite HMMs only.
    """
    if not isinstance(model, FiniteHMM):
        raise UnsupportedModelError("fully adapted proposal unavailable in closed form")
    return _discrete_backward(model, gammas, with_potential=True, name="fully_adapted")


def reverse_kernel_backward_proposal(model: StateSpaceModel, gammas: GammaFamily) -> BackwardProposal:
    """theta(x') = gamma_{t+1}(x') and kernel proportional to gamma_t(x) q(x, x').

    With gamma the prior marginals the kernel is the time reversal of the
    prior chain and the backward weight reduces to ``g_t``.
    """
    if isinstance(model, FiniteHMM):
        return _discrete_backward(model, gammas, with_potential=False, name="reverse_kernel")
    if isinstance(model, LinearGaussianModel) and isinstance(gammas, GaussianGamma):
        scale = gammas.log_scale
        gammas = gammas.unscaled()
        a, su2 = model.a, model.sigma_u**2
        prec = 1.0 / gammas.variances[:-1] + a * a / su2
        sd = np.sqrt(1.0 / prec)

        def mean(t, xp):
            return (gammas.means[t] / gammas.variances[t] + a * np.asarray(xp) / su2) / prec[t]

        return BackwardProposal(
            log_adjustment=lambda t, xp: gammas.log_gamma(t + 1, xp),
            log_kernel=lambda t, xp, x: norm_logpdf(x, mean(t, xp), sd[t]),
            kernel_sampler=lambda rng, t, xp: mean(t, xp) + sd[t] * rng.standard_normal(np.shape(xp)),
            name="reverse_kernel",
            log_scale=scale,
        )
    raise UnsupportedModelError("reverse kernel needs a finite HMM or a Gaussian gamma family")


def init_backward(model: StateSpaceModel, gammas: GammaFamily, N: int, seed) -> ParticleSystem:
    """i.i.d. draws from the terminal density weighted by g_T gamma_T / rho_T.

    A common scale of gamma is carried in ``log_offset`` rather than folded
    into each weight.
    """
    if N < 1:
        raise ValueError("N must be positive")
    T = model.horizon
    rng = stream(seed, BACKWARD, T)
    shape = gammas.unscaled()
    x = shape.sample_terminal(rng, N)
    lw = model.log_potential(T, x) + shape.log_gamma(T, x) - shape.log_terminal_density(x)
    return ParticleSystem(x, lw, time=T, direction="backward", log_offset=gammas.log_scale)


def backward_step(
    model: StateSpaceModel,
    gammas: GammaFamily,
    proposal: BackwardProposal,
    nxt: ParticleSystem,
    t: int,
    seed,
) -> ParticleSystem:
    """One backward move from ``t+1`` to ``t``.

    Indices are drawn with probabilities proportional to
    ``w_{t+1} theta_t / gamma_{t+1}``, particles from ``r_t``, and the weight
    is ``gamma_t g_t q / (theta_t r_t)``.
    """
    if nxt.direction != "backward":
        raise ValueError("backward_step needs a backward system")
    if not 0 <= t <= model.horizon - 1:
        raise IndexError(f"backward step to t={t} outside [0, {model.horizon - 1}]")
    if nxt.time != t + 1:
        raise ValueError(f"next system is at time {nxt.time}, expected {t + 1}")
    rng = stream(seed, BACKWARD, t)
    N = len(nxt)
    # constant factors of gamma and of the adjustment cancel in the selection
    # law and are carried in log_offset
    scale = gammas.log_scale
    gammas = gammas.unscaled()
    log_adj = np.asarray(proposal.log_adjustment(t, nxt.particles), dtype=np.float64)
    log_ratio = log_adj - gammas.log_gamma(t + 1, nxt.particles)
    idx = sample_categorical(rng, nxt.log_weights + log_ratio, N)
    xn = nxt.particles[idx]
    x = proposal.kernel_sampler(rng, t, xn)
    lw = (
        gammas.log_gamma(t, x)
        + model.log_potential(t, x)
        + model.log_transition(x, xn)
        - log_adj[idx]
        - proposal.log_kernel(t, xn, x)
    )
    return ParticleSystem(x, lw, time=t, direction="backward", ancestors=idx, log_offset=scale - proposal.log_scale)


def run_backward(
    model: StateSpaceModel, gammas: GammaFamily, proposal: BackwardProposal, N: int, seed
) -> list[ParticleSystem]:
    """Backward systems indexed by time, ``out[t]`` for t = 0..T.

    The targets are only known up to a constant, so no normalizing-constant
    estimate is produced; ``log_offset`` is bookkeeping, not an evidence.
    """
    T = model.horizon
    out: list[ParticleSystem | None] = [None] * (T + 1)
    out[T] = init_backward(model, gammas, N, seed)
    for t in range(T - 1, -1, -1):
        out[t] = backward_step(model, gammas, proposal, out[t + 1], t, seed)
    return out
