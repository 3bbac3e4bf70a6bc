"""Two-filter estimators of the marginal smoothing distributions.

A forward system at ``s-1`` (or ``s``) and a backward information system at
``s+1`` (or ``s``) are combined through

    phi_{s|T}(dx_s)  propto  int phi_{s-1}(dx) psi_{s+1}(dx') q(x, x_s) g_s(x_s) q(x_s, x') / gamma_{s+1}(x')

Seven combiners are provided:

===========  ==========  ===============================================
method       cost        particles of the output system
===========  ==========  ===============================================
product      O(N^2)      forward particles at s (ratio of product estimates)
bdm-f        O(N^2)      forward particles at s
bdm-b        O(N^2)      backward particles at s
fwt-quad     O(N^2)      fresh draws, joint (i, j) index table
fwt-lin      O(N)        fresh draws, independent i and j
bdm-lin-f    O(N)        forward particles at s
bdm-lin-b    O(N)        backward particles at s
===========  ==========  ===============================================
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .backward import BackwardProposal, fully_adapted_backward_proposal, reverse_kernel_backward_proposal, run_backward
from .errors import UnsupportedModelError
from .forward import ForwardProposal, bootstrap_proposal, run_forward
from .model import LOG_2PI, FiniteHMM, GammaFamily, LinearGaussianModel, StateSpaceModel
from .particles import ParticleSystem, estimate
from .rng import COMBINE, stream
from .weights import log_sum, sample_categorical, sample_rows

METHODS = ("product", "bdm-f", "bdm-b", "fwt-quad", "fwt-lin", "bdm-lin-f", "bdm-lin-b")
QUADRATIC_METHODS = ("product", "bdm-f", "bdm-b", "fwt-quad")
LINEAR_METHODS = ("fwt-lin", "bdm-lin-f", "bdm-lin-b")

# entries of an N x M block evaluated at once
BLOCK_ENTRIES = 1 << 22
# largest joint index table materialized in one piece by fwt-quad
TABLE_CAP = 1 << 24


# ---------------------------------------------------------------------------
# helpers


def q2(model: StateSpaceModel, x, xp, xpp):
    """q(x, x'') q(x'', x')."""
    return model.transition_density(x, xpp) * model.transition_density(xpp, xp)


def odot(f: Callable, g: Callable) -> Callable:
    """(f . g)(x, x') = f(x, x') g(x')."""
    return lambda x, xp: f(x, xp) * g(xp)


def _log_matvec(pair_log, x, y, log_v, pair_lin=None, block=BLOCK_ENTRIES):
    """out_i = log sum_j exp(pair_log(x_i, y_j) + log_v_j), in row blocks.

    The product is taken in the linear domain (BLAS); rows whose sum
    underflows are recomputed with a log-sum-exp.
    """
    log_v = np.asarray(log_v, dtype=np.float64)
    vmax = np.max(log_v)
    out = np.full(len(x), -np.inf)
    if not np.isfinite(vmax):
        return out
    v = np.exp(log_v - vmax)
    rows = max(1, block // max(1, len(y)))
    for start in range(0, len(x), rows):
        xb = x[start:start + rows]
        m = pair_lin(xb, y) if pair_lin is not None else np.exp(pair_log(xb, y))
        s = m @ v
        with np.errstate(divide="ignore"):
            r = np.log(s)
        bad = ~(s > 1e-280)
        if bad.any():
            r[bad] = logsumexp(pair_log(xb[bad], y) + log_v, axis=1) - vmax
        out[start:start + rows] = r + vmax
    return out


def _shift(log_vs):
    log_vs = np.atleast_2d(np.asarray(log_vs, dtype=np.float64))
    top = np.max(log_vs, axis=1, keepdims=True)
    top[~np.isfinite(top)] = 0.0
    return np.exp(log_vs - top), top[:, 0]


def _pair_sums(model, x, y, row_logv=None, col_logu=None, block=BLOCK_ENTRIES):
    """Both contractions of the pairwise transition matrix in one pass.

    rows[i] = log sum_j q(x_i, y_j) exp(row_logv[j])
    cols[j] = log sum_i exp(col_logu[i]) q(x_i, y_j)

    Blocks of q are formed in the linear domain and contracted with BLAS;
    entries whose sum underflows are recomputed with a log-sum-exp.
    """
    nx, ny = len(x), len(y)
    v, vtop = _shift(row_logv) if row_logv is not None else (None, None)
    u, utop = _shift(col_logu) if col_logu is not None else (None, None)
    rows = np.empty(nx) if v is not None else None
    cols = np.zeros(ny) if u is not None else None
    step = max(1, block // max(1, ny))
    for start in range(0, nx, step):
        m = model.pairwise_transition(x[start:start + step], y)
        if v is not None:
            rows[start:start + step] = m @ v[0]
        if u is not None:
            cols += u[0, start:start + step] @ m
    out = []
    if rows is not None:
        out.append(_finish(rows, vtop[0], lambda sel: logsumexp(
            model.log_transition(x[sel][:, None], y[None, :]) + row_logv[None, :], axis=1)))
    if cols is not None:
        out.append(_finish(cols, utop[0], lambda sel: logsumexp(
            model.log_transition(x[:, None], y[sel][None, :]) + col_logu[:, None], axis=0)))
    return out[0] if len(out) == 1 else tuple(out)


def _finish(lin, top, fallback):
    with np.errstate(divide="ignore"):
        out = np.log(lin) + top
    bad = np.flatnonzero(~(lin > 1e-280))
    if bad.size:
        out[bad] = fallback(bad)
    return out


def _check_pair(fwd: ParticleSystem, bwd: ParticleSystem, gap: int):
    if fwd.direction != "forward" or bwd.direction != "backward":
        raise ValueError("expected a forward and a backward system")
    if bwd.time - fwd.time != gap:
        raise ValueError(f"forward time {fwd.time} and backward time {bwd.time} must differ by {gap}")


# ---------------------------------------------------------------------------
# proposals


@dataclass(frozen=True, eq=False)
class SmoothingProposal:
    """Adjustment ``theta(x, x')`` and kernel ``r(x, x'; x_s)`` for fresh smoothing draws.

    ``x`` is a forward particle at ``s-1`` and ``x'`` a backward particle at
    ``s+1``.  ``factorized`` marks adjustments of the form
    ``theta_s(x) * theta_{s|T}(x')``, the condition for the O(N) sampler.
    """

    log_adjustment: Callable
    log_kernel: Callable
    kernel_sampler: Callable
    factorized: bool = False
    name: str = "custom"
    log_scale: float = 0.0

    def full_log_adjustment(self, s, x, xp):
        return self.log_adjustment(s, x, xp) + self.log_scale

    def adjustment(self, s, x, xp):
        return np.exp(self.full_log_adjustment(s, x, xp))

    def kernel_density(self, s, x, xp, xs):
        return np.exp(self.log_kernel(s, x, xp, xs))


def factorized_smoothing_proposal(
    fwd_proposal: ForwardProposal, bwd_proposal: BackwardProposal, kernel: str = "forward"
) -> SmoothingProposal:
    """theta(x, x') = theta_s(x) theta_{s|T}(x'), with the forward or backward kernel reused."""
    if kernel == "forward":
        log_kernel = lambda s, x, xp, xs: fwd_proposal.log_kernel(s, x, xs)  # noqa: E731
        sampler = lambda rng, s, x, xp: fwd_proposal.kernel_sampler(rng, s, x)  # noqa: E731
    elif kernel == "backward":
        log_kernel = lambda s, x, xp, xs: bwd_proposal.log_kernel(s, xp, xs)  # noqa: E731
        sampler = lambda rng, s, x, xp: bwd_proposal.kernel_sampler(rng, s, xp)  # noqa: E731
    else:
        raise ValueError(f"kernel must be 'forward' or 'backward', got {kernel!r}")
    return SmoothingProposal(
        log_adjustment=lambda s, x, xp: fwd_proposal.log_adjustment(s, x) + bwd_proposal.log_adjustment(s, xp),
        log_kernel=log_kernel,
        kernel_sampler=sampler,
        factorized=True,
        name=f"factorized-{kernel}",
        log_scale=bwd_proposal.log_scale,
    )


def fully_adapted_smoothing_proposal(model: StateSpaceModel) -> SmoothingProposal:
    """theta(x, x') = int q(x, u) g_s(u) q(u, x') du with the matching kernel.

    Every importance weight equals one.  Closed form for the finite HMM and
    for the scalar linear-Gaussian model.
    """
    if isinstance(model, FiniteHMM):
        Q = model.trans
        G = model.potential_table

        def log_adj(s, x, xp):
            with np.errstate(divide="ignore"):
                return np.log((Q * G[s]) @ Q)[x, xp]

        def log_kernel(s, x, xp, xs):
            with np.errstate(divide="ignore"):
                return np.log(Q[x, xs] * G[s][xs] * Q[xs, xp]) - log_adj(s, x, xp)

        def sampler(rng, s, x, xp):
            return sample_rows(rng, Q[x] * G[s] * Q[:, xp].T)

        return SmoothingProposal(log_adj, log_kernel, sampler, name="fully_adapted")

    if isinstance(model, LinearGaussianModel):
        a, b, su2, sv2 = model.a, model.b, model.sigma_u**2, model.sigma_v**2
        var = 1.0 / ((1.0 + a * a) / su2 + b * b / sv2)
        sd = math.sqrt(var)

        def mean(s, x, xp):
            return var * (a * np.asarray(x) / su2 + b * model.ys[s] / sv2 + a * np.asarray(xp) / su2)

        def log_adj(s, x, xp):
            # Gaussian integral over u; the x and x' terms are formed before broadcasting
            x, xp = np.asarray(x, dtype=np.float64), np.asarray(xp, dtype=np.float64)
            y = model.ys[s]
            const = (0.5 * math.log(var) - LOG_2PI - math.log(su2) - 0.5 * math.log(sv2)
                     - 0.5 * y * y / sv2)
            bx = (a / su2) * x + b * y / sv2
            bp = (a / su2) * xp
            lin = bx + bp
            return (0.5 * var) * lin * lin + (const - 0.5 * a * a / su2 * x * x) - 0.5 / su2 * xp * xp

        def log_kernel(s, x, xp, xs):
            z = (xs - mean(s, x, xp)) / sd
            return -0.5 * z * z - math.log(sd) - 0.5 * LOG_2PI

        def sampler(rng, s, x, xp):
            m = mean(s, x, xp)
            return m + sd * rng.standard_normal(np.shape(m))

        return SmoothingProposal(log_adj, log_kernel, sampler, name="fully_adapted")
    raise UnsupportedModelError(f"no fully adapted smoothing kernel for {model.kind}")


@dataclass(frozen=True, eq=False)
class Proposals:
    """Everything ``smooth_all`` needs besides the model and gamma family.

    ``smoothing`` drives fwt-quad; ``linear_kernel`` must be factorized and
    drives fwt-lin.
    """

    forward: ForwardProposal
    backward: BackwardProposal
    smoothing: SmoothingProposal
    linear_kernel: SmoothingProposal


def default_proposals(model: StateSpaceModel, gammas: GammaFamily) -> Proposals:
    """Bootstrap forward filter; fully adapted (HMM) or reverse-kernel (LGSSM)
    backward filter; fully adapted fwt-quad; forward kernel for fwt-lin."""
    fwd = bootstrap_proposal(model)
    if isinstance(model, FiniteHMM):
        bwd = fully_adapted_backward_proposal(model, gammas)
    else:
        bwd = reverse_kernel_backward_proposal(model, gammas)
    return Proposals(fwd, bwd, fully_adapted_smoothing_proposal(model), factorized_smoothing_proposal(fwd, bwd))


# ---------------------------------------------------------------------------
# product estimator


def product_estimate(fwd: ParticleSystem, bwd: ParticleSystem, h2, separable: bool = False) -> float:
    """sum_{i,j} (w_i / Omega)(w'_j / Omega') h2(x_i, x'_j).

    ``h2`` is evaluated on broadcast arrays ``(x[:, None], x'[None, :])``;
    integer-valued particles are first merged by value.
    When the caller declares ``separable=True``, ``h2`` must be a pair
    ``(f, g)`` meaning ``h2(x, x') = f(x) g(x')``, and the O(N) route is taken.
    """
    if fwd.direction != "forward" or bwd.direction != "backward":
        raise ValueError("expected a forward and a backward system")
    if not fwd.time < bwd.time:
        raise ValueError(f"forward time {fwd.time} must precede backward time {bwd.time}")
    if separable:
        f, g = h2
        return estimate(fwd, f) * estimate(bwd, g)
    x, a = _support(fwd)
    y, b = _support(bwd)
    ref = float(np.asarray(h2(x[:1, None], y[None, :1])).ravel()[0])
    rows = max(1, BLOCK_ENTRIES // len(y))
    acc = 0.0
    for start in range(0, len(x), rows):
        xb = x[start:start + rows]
        hb = np.broadcast_to(np.asarray(h2(xb[:, None], y[None, :]), dtype=np.float64), (len(xb), len(y)))
        acc += float(a[start:start + rows] @ ((hb - ref) @ b))
    # centred on one value of h2 so constants come out exactly
    return ref + acc / (a.sum() * b.sum())


def _support(ps):
    # nonzero-weight particles; discrete states are merged with summed weights
    w = ps.normalized_weights
    keep = np.flatnonzero(w)
    x, w = ps.particles[keep], w[keep]
    if x.dtype.kind in "iu":
        x, inv = np.unique(x, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=w, minlength=len(x))
    return x, w


def _product_logw(fwd, bwd, model, gammas, rows=None):
    # phi_s x psi_{s+1}[1_A(x) q(x, x') / gamma_{s+1}(x')], as a function of A: row sums
    # of the normalized product table
    shift = log_sum(bwd.log_weights)
    if rows is None:
        rows = _pair_sums(model, fwd.particles, bwd.particles, row_logv=_backward_ratio(bwd, gammas) - shift)
    else:
        rows = rows - shift
    return fwd.log_weights - log_sum(fwd.log_weights) + rows


def product_smoothing(fwd: ParticleSystem, bwd: ParticleSystem, model, gammas) -> ParticleSystem:
    """Smoothing system at s as the ratio of two product estimates.

    With h2(x, x') = h(x) q(x, x') / gamma_{s+1}(x') on the forward system at
    s and the backward system at s+1, the ratio of the estimates for h and
    for 1 is a weighted sum over forward particles; the returned system
    carries those weights.  They agree with :func:`bdm_forward_reweight` up
    to a constant factor.
    """
    _check_pair(fwd, bwd, 1)
    return ParticleSystem(fwd.particles, _product_logw(fwd, bwd, model, gammas), time=fwd.time,
                          direction="smoothing")


# ---------------------------------------------------------------------------
# TwoFilt_bdm, quadratic


def _backward_ratio(bwd, gammas):
    return bwd.log_weights - gammas.unscaled().log_gamma(bwd.time, bwd.particles)


def _ratio_offset(bwd, gammas):
    # constant factor of w'/gamma
    return bwd.log_offset - gammas.log_scale


def _bdm_f_logw(fwd, bwd, model, gammas):
    return fwd.log_weights + _pair_sums(model, fwd.particles, bwd.particles, row_logv=_backward_ratio(bwd, gammas))


def _bdm_b_logw(fwd, bwd, model, gammas):
    return _backward_ratio(bwd, gammas) + _pair_sums(model, fwd.particles, bwd.particles, col_logu=fwd.log_weights)


def bdm_forward_reweight(fwd: ParticleSystem, bwd: ParticleSystem, model, gammas) -> ParticleSystem:
    """Forward particles at s reweighted by  sum_j w'_j q(x_i, x'_j) / gamma_{s+1}(x'_j)."""
    _check_pair(fwd, bwd, 1)
    return ParticleSystem(fwd.particles, _bdm_f_logw(fwd, bwd, model, gammas), time=fwd.time, direction="smoothing",
                          log_offset=_ratio_offset(bwd, gammas))


def bdm_backward_reweight(fwd: ParticleSystem, bwd: ParticleSystem, model, gammas) -> ParticleSystem:
    """Backward particles at s reweighted by  sum_i w_i q(x_i, x'_j) / gamma_s(x'_j)."""
    _check_pair(fwd, bwd, 1)
    return ParticleSystem(bwd.particles, _bdm_b_logw(fwd, bwd, model, gammas), time=bwd.time, direction="smoothing",
                          log_offset=_ratio_offset(bwd, gammas))


# ---------------------------------------------------------------------------
# TwoFilt_fwt


def _fwt_weights(model, s, x, xp, xs, log_adj, log_kernel):
    return (model.log_transition(x, xs) + model.log_potential(s, xs) + model.log_transition(xs, xp)
            - log_adj - log_kernel)


def _sample_joint_flat(rng, log_a, log_c, pair_log, x, y, size):
    table = log_a[:, None] + pair_log(x[:, None], y[None, :]) + log_c[None, :]
    flat = table.ravel()
    cdf = np.cumsum(np.exp(flat - flat.max()))
    u = rng.random(size) * cdf[-1]
    k = np.minimum(np.searchsorted(cdf, u, side="right"), int(np.searchsorted(cdf, cdf[-1], side="left")))
    return np.divmod(k, len(y))


def _sample_joint_blocked(rng, log_a, log_c, pair_log, x, y, size):
    # marginal over i first, then j | i; rows sharing a particle value share the conditional
    row = log_a + _log_matvec(lambda xb, yy: pair_log(xb[:, None], yy[None, :]), x, y, log_c)
    i = sample_categorical(rng, row, size)
    values, inv = np.unique(x[i], return_inverse=True)
    j = np.empty(size, dtype=np.int64)
    u = rng.random(size)
    m = len(y)
    nrows = max(1, BLOCK_ENTRIES // m)
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(0, len(values) + nrows, nrows))
    for b0, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        if lo == hi:
            continue
        vb = values[b0 * nrows:(b0 + 1) * nrows]
        lt = pair_log(vb[:, None], y[None, :]) + log_c[None, :]
        w = np.exp(lt - lt.max(axis=1, keepdims=True))
        cdf = np.cumsum(w, axis=1)
        cdf /= cdf[:, -1:]
        sel = order[lo:hi]
        r = inv[sel] - b0 * nrows
        flat = (cdf + np.arange(len(vb))[:, None]).ravel()
        k = np.searchsorted(flat, r + u[sel], side="right") - r * m
        j[sel] = np.minimum(k, m - 1)
    return i, j


def fwt_sample_quadratic(
    fwd: ParticleSystem,
    bwd: ParticleSystem,
    proposal: SmoothingProposal,
    model: StateSpaceModel,
    gammas: GammaFamily,
    N: int,
    seed,
    table_cap: int = TABLE_CAP,
) -> ParticleSystem:
    """Fresh smoothing draws at ``s`` from a forward system at ``s-1`` and a backward one at ``s+1``.

    Index pairs (i, j) are drawn jointly with probabilities proportional to
    ``w_i theta(x_i, x'_j) w'_j / gamma_{s+1}(x'_j)``.  Up to ``table_cap``
    entries the whole table is cumulated once; larger tables are sampled
    exactly in two stages (i from its marginal, then j given i).
    The auxiliary indices are not kept.
    """
    _check_pair(fwd, bwd, 2)
    s = fwd.time + 1
    rng = stream(seed, COMBINE, METHODS.index("fwt-quad"), s)
    log_c = bwd.log_weights - gammas.unscaled().log_gamma(s + 1, bwd.particles)
    pair_log = lambda x, y: proposal.log_adjustment(s, x, y)  # noqa: E731
    sampler = _sample_joint_flat if len(fwd) * len(bwd) <= table_cap else _sample_joint_blocked
    i, j = sampler(rng, fwd.log_weights, log_c, pair_log, fwd.particles, bwd.particles, N)
    x, xp = fwd.particles[i], bwd.particles[j]
    xs = proposal.kernel_sampler(rng, s, x, xp)
    lw = _fwt_weights(model, s, x, xp, xs, proposal.log_adjustment(s, x, xp), proposal.log_kernel(s, x, xp, xs))
    return ParticleSystem(xs, lw, time=s, direction="smoothing", log_offset=-proposal.log_scale)


def fwt_sample_linear(
    fwd: ParticleSystem,
    bwd: ParticleSystem,
    fwd_proposal: ForwardProposal,
    bwd_proposal: BackwardProposal,
    kernel: SmoothingProposal,
    model: StateSpaceModel,
    gammas: GammaFamily,
    N: int,
    seed,
) -> ParticleSystem:
    """O(N) variant: i and j drawn independently from the forward and backward selection laws."""
    _check_pair(fwd, bwd, 2)
    if not kernel.factorized:
        raise ValueError("fwt-lin needs a factorized adjustment; use fwt-quad for general ones")
    s = fwd.time + 1
    rng = stream(seed, COMBINE, METHODS.index("fwt-lin"), s)
    adj_f = np.asarray(fwd_proposal.log_adjustment(s, fwd.particles), dtype=np.float64)
    adj_b = np.asarray(bwd_proposal.log_adjustment(s, bwd.particles), dtype=np.float64)
    i = sample_categorical(rng, fwd.log_weights + adj_f, N)
    j = sample_categorical(rng, bwd.log_weights + (adj_b - gammas.unscaled().log_gamma(s + 1, bwd.particles)), N)
    x, xp = fwd.particles[i], bwd.particles[j]
    xs = kernel.kernel_sampler(rng, s, x, xp)
    lw = _fwt_weights(model, s, x, xp, xs, adj_f[i] + adj_b[j], kernel.log_kernel(s, x, xp, xs))
    return ParticleSystem(xs, lw, time=s, direction="smoothing", log_offset=-bwd_proposal.log_scale)


# ---------------------------------------------------------------------------
# TwoFilt_bdm, linear


def _bdm_lin_b(fwd, bwd, fwd_proposal, model, gammas, rng):
    s = bwd.time
    adj = np.asarray(fwd_proposal.log_adjustment(s, fwd.particles), dtype=np.float64)
    i = sample_categorical(rng, fwd.log_weights + adj, len(bwd))
    lw = (bwd.log_weights + model.log_transition(fwd.particles[i], bwd.particles)
          - gammas.unscaled().log_gamma(s, bwd.particles) - adj[i])
    return ParticleSystem(bwd.particles, lw, time=s, direction="smoothing", ancestors=i,
                          log_offset=_ratio_offset(bwd, gammas))


def _bdm_lin_f(fwd, bwd, bwd_proposal, model, gammas, rng):
    s = fwd.time
    adj = np.asarray(bwd_proposal.log_adjustment(s, bwd.particles), dtype=np.float64)
    j = sample_categorical(rng, bwd.log_weights + (adj - gammas.unscaled().log_gamma(s + 1, bwd.particles)), len(fwd))
    lw = fwd.log_weights + model.log_transition(fwd.particles, bwd.particles[j]) - adj[j]
    return ParticleSystem(fwd.particles, lw, time=s, direction="smoothing", ancestors=j,
                          log_offset=-bwd_proposal.log_scale)


def bdm_linear_backward(fwd, bwd, fwd_proposal, model, gammas, seed) -> ParticleSystem:
    """Backward particles at s reweighted in O(N).

    Draws forward indices i proportional to ``w_{s-1} theta_s`` and sets
    ``w = w'_s q(x_{s-1}^i, x'_s) / (gamma_s(x'_s) theta_s(x_{s-1}^i))``.
    The drawn indices are returned as ``ancestors`` (into the forward system).
    """
    _check_pair(fwd, bwd, 1)
    if bwd.ancestors is None:
        raise ValueError("backward system carries no ancestor indices")
    rng = stream(seed, COMBINE, METHODS.index("bdm-lin-b"), bwd.time)
    return _bdm_lin_b(fwd, bwd, fwd_proposal, model, gammas, rng)


def bdm_linear_forward(fwd, bwd, bwd_proposal, model, gammas, seed) -> ParticleSystem:
    """Forward particles at s reweighted in O(N).

    Draws backward indices j proportional to ``w'_{s+1} theta_{s|T} / gamma_{s+1}``
    and sets ``w = w_s q(x_s, x'^j_{s+1}) / theta_{s|T}(x'^j_{s+1})``.
    """
    _check_pair(fwd, bwd, 1)
    if fwd.ancestors is None:
        raise ValueError("forward system carries no ancestor indices")
    rng = stream(seed, COMBINE, METHODS.index("bdm-lin-f"), fwd.time)
    return _bdm_lin_f(fwd, bwd, bwd_proposal, model, gammas, rng)


def bdm_linear_backward_long_form(fwd, bwd, bwd_next, fwd_proposal, bwd_proposal, model, gammas, fwd_index):
    """Unsimplified bdm-lin-b log-weight, written out from the backward proposal terms.

    ``fwd_index`` are the forward indices drawn by :func:`bdm_linear_backward`
    (its ``ancestors``); the result matches ``log_weights + log_offset``.
    """
    s = bwd.time
    x, xb = fwd.particles[fwd_index], bwd.particles
    xn = bwd_next.particles[bwd.ancestors]
    return (gammas.log_gamma(s, xb) + model.log_potential(s, xb) + model.log_transition(xb, xn)
            - bwd_proposal.full_log_adjustment(s, xn) - bwd_proposal.log_kernel(s, xn, xb)
            + model.log_transition(x, xb) - gammas.log_gamma(s, xb) - fwd_proposal.log_adjustment(s, x))


def bdm_linear_forward_long_form(fwd_prev, fwd, bwd, fwd_proposal, bwd_proposal, model, bwd_index):
    """Unsimplified bdm-lin-f log-weight, written out from the forward proposal terms.

    ``bwd_index`` are the backward indices drawn by :func:`bdm_linear_forward`.
    """
    s = fwd.time
    xa, xf = fwd_prev.particles[fwd.ancestors], fwd.particles
    xn = bwd.particles[bwd_index]
    return (model.log_transition(xa, xf) + model.log_potential(s, xf)
            - fwd_proposal.log_adjustment(s, xa) - fwd_proposal.log_kernel(s, xa, xf)
            + model.log_transition(xf, xn) - bwd_proposal.full_log_adjustment(s, xn))


# ---------------------------------------------------------------------------
# orchestration


@dataclass(frozen=True, eq=False)
class Passes:
    """One forward and one backward pass, indexed by time."""

    forward: list
    backward: list
    N: int
    seed: int


def run_passes(model, gammas, proposals: Proposals, N: int, seed) -> Passes:
    return Passes(
        forward=run_forward(model, proposals.forward, N, seed),
        backward=run_backward(model, gammas, proposals.backward, N, seed),
        N=N,
        seed=seed,
    )


def _check_method(method, proposals):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "fwt-lin" and not proposals.linear_kernel.factorized:
        raise ValueError("fwt-lin needs a factorized adjustment")


def _smoothing(particles, log_w, s, offset=0.0):
    return ParticleSystem(particles, log_w, time=s, direction="smoothing", log_offset=offset)


def _combine_linear(passes, model, gammas, proposals, method, s):
    F, B, T = passes.forward, passes.backward, model.horizon
    rng = stream(passes.seed, COMBINE, METHODS.index(method), s)
    if T == 0:
        return _smoothing(F[0].particles, F[0].log_weights, 0)
    if s == 0:
        return _bdm_lin_f(F[0], B[1], proposals.backward, model, gammas, rng)
    if s == T:
        return _bdm_lin_b(F[T - 1], B[T], proposals.forward, model, gammas, rng)
    if method == "fwt-lin":
        return fwt_sample_linear(F[s - 1], B[s + 1], proposals.forward, proposals.backward,
                                 proposals.linear_kernel, model, gammas, passes.N, passes.seed)
    if method == "bdm-lin-f":
        return bdm_linear_forward(F[s], B[s + 1], proposals.backward, model, gammas, passes.seed)
    return bdm_linear_backward(F[s - 1], B[s], proposals.forward, model, gammas, passes.seed)


def combine(passes: Passes, model, gammas, proposals: Proposals, method: str, s: int,
            table_cap: int = TABLE_CAP) -> ParticleSystem:
    """Smoothing system at time ``s`` for one method, reusing precomputed passes.

    Interior times follow the method's own formula.  The endpoints use the
    reweighting forms that stay defined there: forward particles reweighted
    by the backward system at ``s=0``, backward particles reweighted by the
    forward system at ``s=T`` (quadratic sums for the O(N^2) methods, sampled
    indices for the O(N) ones).
    """
    _check_method(method, proposals)
    T = model.horizon
    if not 0 <= s <= T:
        raise IndexError(f"s={s} outside [0, {T}]")
    return smooth_methods(passes, model, gammas, proposals, [method], times=[s], table_cap=table_cap)[method][s]


def smooth_methods(passes: Passes, model, gammas, proposals: Proposals, methods, times=None,
                   table_cap: int = TABLE_CAP) -> dict[str, dict[int, ParticleSystem]]:
    """Several combiners on the same passes, ``out[method][s]``.

    ``times`` defaults to the interior times.  For each pair of systems
    (forward at k, backward at k+1) the transition matrix is contracted once
    and the row sums (product, bdm-f at k) and column sums (bdm-b at k+1)
    are shared.  Every output equals what a single-method call produces.
    """
    for method in methods:
        _check_method(method, proposals)
    T = model.horizon
    times = sorted(set(range(1, T) if times is None else times))
    if any(not 0 <= s <= T for s in times):
        raise IndexError(f"times must lie in [0, {T}]")
    F, B = passes.forward, passes.backward
    out: dict[str, dict[int, ParticleSystem]] = {m: {} for m in methods}
    quad = [m for m in methods if m in QUADRATIC_METHODS]
    if T == 0:
        for m in methods:
            out[m][0] = _smoothing(F[0].particles, F[0].log_weights, 0)
        return out
    for k in range(T):
        fwd, bwd = F[k], B[k + 1]
        row_users = [m for m in quad if k in times and (k == 0 or m in ("product", "bdm-f"))]
        col_users = [m for m in quad if k + 1 in times and (k + 1 == T or m == "bdm-b")]
        if not (row_users or col_users):
            continue
        sums = _pair_sums(model, fwd.particles, bwd.particles,
                          row_logv=_backward_ratio(bwd, gammas) if row_users else None,
                          col_logu=fwd.log_weights if col_users else None)
        rows, cols = (sums if row_users and col_users else
                      (sums, None) if row_users else (None, sums))
        for m in row_users:
            lw = _product_logw(fwd, bwd, model, gammas, rows) if m == "product" else fwd.log_weights + rows
            out[m][k] = _smoothing(fwd.particles, lw, k, 0.0 if m == "product" else _ratio_offset(bwd, gammas))
        for m in col_users:
            out[m][k + 1] = _smoothing(bwd.particles, _backward_ratio(bwd, gammas) + cols, k + 1,
                                       _ratio_offset(bwd, gammas))
    for s in times:
        if "fwt-quad" in methods and 0 < s < T:
            out["fwt-quad"][s] = fwt_sample_quadratic(F[s - 1], B[s + 1], proposals.smoothing, model, gammas,
                                                      passes.N, passes.seed, table_cap=table_cap)
        for m in methods:
            if m in LINEAR_METHODS:
                out[m][s] = _combine_linear(passes, model, gammas, proposals, m, s)
    return {m: dict(sorted(v.items())) for m, v in out.items()}


def smooth_all(model, gammas, proposals: Proposals, method: str, N: int, seed,
               endpoints: bool = False) -> dict[int, ParticleSystem]:
    """Smoothing systems for every interior s (and s = 0, T if ``endpoints``).

    Runs one forward pass and one backward pass, then applies the combiner
    at each time.
    """
    _check_method(method, proposals)
    passes = run_passes(model, gammas, proposals, N, seed)
    T = model.horizon
    times = range(0, T + 1) if endpoints else range(1, T)
    return smooth_methods(passes, model, gammas, proposals, [method], times=times)[method]


SMOOTHING_COLUMNS = ("s", "method", "N", "seed", "estimate_mean", "estimate_h_name")


def smoothing_rows(systems: dict[int, ParticleSystem], method: str, N, seed, functions: dict) -> list[dict]:
    """One row per (s, h) with the self-normalized estimate."""
    return [
        {"s": s, "method": method, "N": N, "seed": seed, "estimate_mean": estimate(ps, h), "estimate_h_name": name}
        for s, ps in systems.items()
        for name, h in functions.items()
    ]


def write_smoothing_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SMOOTHING_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
