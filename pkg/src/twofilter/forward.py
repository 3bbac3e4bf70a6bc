"""Auxiliary particle filter targeting the filtering distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnsupportedModelError
from .model import FiniteHMM, LinearGaussianModel, StateSpaceModel, norm_logpdf
from .particles import ParticleSystem
from .rng import FORWARD, stream
from .weights import sample_categorical, sample_rows, sample_systematic_unverified


@dataclass(frozen=True, eq=False)
class ForwardProposal:
    """Adjustment multiplier ``theta_t(x)`` and kernel ``p_t(x, x')``, in log form.

    ``log_adjustment(t, x)`` and ``log_kernel(t, x, x')`` are used when moving
    from time ``t-1`` to ``t``; ``kernel_sampler(rng, t, x)`` draws ``x'``.
    Boundedness of both (and of the resulting weight) is the caller's
    responsibility.
    """

    log_adjustment: Callable
    log_kernel: Callable
    kernel_sampler: Callable
    name: str = "custom"

    def adjustment(self, t, x):
        return np.exp(self.log_adjustment(t, x))

    def kernel_density(self, t, x, xp):
        return np.exp(self.log_kernel(t, x, xp))


def bootstrap_proposal(model: StateSpaceModel) -> ForwardProposal:
    """theta = 1 and p = q."""
    return ForwardProposal(
        log_adjustment=lambda t, x: np.zeros(np.shape(x)),
        log_kernel=lambda t, x, xp: model.log_transition(x, xp),
        kernel_sampler=lambda rng, t, x: model.sample_transition(rng, x),
        name="bootstrap",
    )


def fully_adapted_forward_proposal(model: StateSpaceModel) -> ForwardProposal:
    """theta_t(x) = int q(x, x') g_t(x') dx' and p_t proportional to q g_t."""
    if isinstance(model, FiniteHMM):
        Q = model.trans
        G = model.potential_table

        def log_adj(t, x):
            with np.errstate(divide="ignore"):
                return np.log(Q @ G[t])[x]

        def log_kernel(t, x, xp):
            with np.errstate(divide="ignore"):
                return np.log(Q[x, xp] * G[t][xp]) - log_adj(t, x)

        def sampler(rng, t, x):
            return sample_rows(rng, Q[x] * G[t])

        return ForwardProposal(log_adj, log_kernel, sampler, name="fully_adapted")

    if isinstance(model, LinearGaussianModel):
        a, b, su, sv = model.a, model.b, model.sigma_u, model.sigma_v
        pred_sd = np.sqrt(b * b * su * su + sv * sv)
        post_var = 1.0 / (1.0 / su**2 + b * b / sv**2)
        post_sd = np.sqrt(post_var)

        def post_mean(t, x):
            return post_var * (a * x / su**2 + b * model.ys[t] / sv**2)

        return ForwardProposal(
            log_adjustment=lambda t, x: norm_logpdf(model.ys[t], b * a * np.asarray(x), pred_sd),
            log_kernel=lambda t, x, xp: norm_logpdf(xp, post_mean(t, x), post_sd),
            kernel_sampler=lambda rng, t, x: post_mean(t, x) + post_sd * rng.standard_normal(np.shape(x)),
            name="fully_adapted",
        )
    raise UnsupportedModelError(f"no fully adapted forward kernel for {model.kind}")


def init_forward(model: StateSpaceModel, N: int, seed) -> ParticleSystem:
    """i.i.d. draws from rho_0 weighted by (d chi / d rho_0) g_0."""
    if N < 1:
        raise ValueError("N must be positive")
    rng = stream(seed, FORWARD, 0)
    x = model.sample_init(rng, N)
    lw = model.log_init_ratio(x) + model.log_potential(0, x)
    return ParticleSystem(x, lw, time=0, direction="forward")


def forward_step(
    model: StateSpaceModel,
    proposal: ForwardProposal,
    prev: ParticleSystem,
    t: int,
    seed,
    selection: str = "multinomial",
) -> ParticleSystem:
    """One auxiliary-filter move from ``t-1`` to ``t``.

    Ancestor indices are drawn i.i.d. with probabilities proportional to
    ``w_{t-1} * theta_t(x_{t-1})``; each offspring is drawn from ``p_t`` and
    weighted by ``q g_t / (theta_t p_t)``.  ``selection="systematic-unverified"``
    swaps in systematic selection, which breaks the i.i.d. draw.
    """
    if prev.direction != "forward":
        raise ValueError("forward_step needs a forward system")
    if not 1 <= t <= model.horizon:
        raise IndexError(f"forward step to t={t} outside [1, {model.horizon}]")
    if prev.time != t - 1:
        raise ValueError(f"previous system is at time {prev.time}, expected {t - 1}")
    rng = stream(seed, FORWARD, t)
    N = len(prev)
    log_adj = np.asarray(proposal.log_adjustment(t, prev.particles), dtype=np.float64)
    if selection == "multinomial":
        idx = sample_categorical(rng, prev.log_weights + log_adj, N)
    elif selection == "systematic-unverified":
        idx = sample_systematic_unverified(rng, prev.log_weights + log_adj, N)
    else:
        raise ValueError(f"unknown selection scheme {selection!r}")
    xa = prev.particles[idx]
    xn = proposal.kernel_sampler(rng, t, xa)
    lw = (
        model.log_transition(xa, xn)
        + model.log_potential(t, xn)
        - log_adj[idx]
        - proposal.log_kernel(t, xa, xn)
    )
    return ParticleSystem(xn, lw, time=t, direction="forward", ancestors=idx)


def run_forward(model: StateSpaceModel, proposal: ForwardProposal, N: int, seed) -> list[ParticleSystem]:
    """Forward systems for t = 0..T, one random stream per time step."""
    systems = [init_forward(model, N, seed)]
    for t in range(1, model.horizon + 1):
        systems.append(forward_step(model, proposal, systems[-1], t, seed))
    return systems
