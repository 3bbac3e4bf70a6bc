"""State-space models, pseudo-prior families and mixing constants.

Two concrete models are provided, a scalar linear-Gaussian model
(densities w.r.t. Lebesgue measure) and a finite-state HMM (densities
w.r.t. counting measure).  Observations are bound at construction, so the
potential ``g_t`` is a function of the state only.

All model methods are vectorized over particle arrays and work in the log
domain; the ``transition_density``/``potential``/``init_density_ratio``
helpers return linear-domain values.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import MixingViolationError, UnsupportedModelError
from .weights import sample_rows

LOG_2PI = math.log(2.0 * math.pi)
STOCHASTIC_TOL = 1e-12


def norm_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


class StateSpaceModel:
    """Hidden Markov model with transition density ``q`` and potentials ``g_t``.

    Subclasses implement the log-domain primitives.  ``horizon`` is ``T``,
    the index of the last observation.
    """

    kind: str = "abstract"
    state_dim: int = 1

    @property
    def horizon(self) -> int:
        return len(self.ys) - 1

    # log-domain primitives -------------------------------------------------
    def log_transition(self, x, xp):
        raise NotImplementedError

    def sample_transition(self, rng, x):
        raise NotImplementedError

    def log_potential(self, t, x):
        raise NotImplementedError

    def log_init_ratio(self, x):
        raise NotImplementedError

    def sample_init(self, rng, n):
        raise NotImplementedError

    def pairwise_transition(self, x, y):
        """Matrix ``q(x_i, y_j)`` in the linear domain (may underflow to 0)."""
        return np.exp(self.log_transition(np.asarray(x)[:, None], np.asarray(y)[None, :]))

    # linear-domain views ---------------------------------------------------
    def transition_density(self, x, xp):
        return np.exp(self.log_transition(x, xp))

    def potential(self, t, x):
        return np.exp(self.log_potential(t, x))

    def init_density_ratio(self, x):
        return np.exp(self.log_init_ratio(x))

    def _check_time(self, t):
        if not 0 <= t <= self.horizon:
            raise IndexError(f"time {t} outside [0, {self.horizon}]")


@dataclass(frozen=True, eq=False)
class LinearGaussianModel(StateSpaceModel):
    """X_t = a X_{t-1} + sigma_u U_t,  Y_t = b X_t + sigma_v V_t,  X_0 ~ N(m0, s0^2)."""

    a: float
    b: float
    sigma_u: float
    sigma_v: float
    m0: float
    s0: float
    ys: np.ndarray
    init_proposal: tuple[float, float] | None = None

    kind = "lgssm"

    def log_transition(self, x, xp):
        return norm_logpdf(xp, self.a * x, self.sigma_u)

    def sample_transition(self, rng, x):
        x = np.asarray(x, dtype=np.float64)
        return self.a * x + self.sigma_u * rng.standard_normal(x.shape)

    def log_potential(self, t, x):
        return norm_logpdf(self.ys[t], self.b * np.asarray(x), self.sigma_v)

    def pairwise_transition(self, x, y):
        z = np.subtract.outer(np.asarray(x, dtype=np.float64) * (self.a / self.sigma_u),
                              np.asarray(y, dtype=np.float64) / self.sigma_u)
        np.square(z, out=z)
        z *= -0.5
        np.exp(z, out=z)
        z *= 1.0 / (self.sigma_u * math.sqrt(2.0 * math.pi))
        return z

    def log_init_ratio(self, x):
        if self.init_proposal is None:
            return np.zeros(np.shape(x))
        m, sd = self.init_proposal
        return norm_logpdf(x, self.m0, self.s0) - norm_logpdf(x, m, sd)

    def sample_init(self, rng, n):
        m, sd = self.init_proposal or (self.m0, self.s0)
        return m + sd * rng.standard_normal(n)

    def prior_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Means and variances of the prior marginals of X_0..X_T."""
        T = self.horizon
        means = np.empty(T + 1)
        var = np.empty(T + 1)
        means[0], var[0] = self.m0, self.s0**2
        for t in range(1, T + 1):
            means[t] = self.a * means[t - 1]
            var[t] = self.a**2 * var[t - 1] + self.sigma_u**2
        return means, var


@dataclass(frozen=True, eq=False)
class FiniteHMM(StateSpaceModel):
    """Markov chain on {0..K-1} with emission matrix ``emit[state, symbol]``."""

    trans: np.ndarray
    emit: np.ndarray
    init: np.ndarray
    ys: np.ndarray
    init_proposal: np.ndarray | None = None
    _log_trans: np.ndarray = field(init=False, repr=False)
    _log_g: np.ndarray = field(init=False, repr=False)
    _trans_cdf: np.ndarray = field(init=False, repr=False)

    kind = "hmm"

    def __post_init__(self):
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_trans", _frozen(np.log(self.trans)))
            # row t holds log g_t(k) for every state k
            object.__setattr__(self, "_log_g", _frozen(np.log(self.emit[:, self.ys].T)))
        object.__setattr__(self, "_trans_cdf", _frozen(np.cumsum(self.trans, axis=1)))

    @property
    def n_states(self) -> int:
        return self.trans.shape[0]

    @property
    def potential_table(self) -> np.ndarray:
        """(T+1, K) array of g_t(k)."""
        return self.emit[:, self.ys].T

    def log_transition(self, x, xp):
        return self._log_trans[x, xp]

    # table lookups, exact rather than exp(log)
    def transition_density(self, x, xp):
        return self.trans[x, xp]

    def potential(self, t, x):
        return self.emit[x, self.ys[t]]

    def pairwise_transition(self, x, y):
        return self.trans[np.asarray(x)][:, np.asarray(y)]

    def sample_transition(self, rng, x):
        x = np.asarray(x)
        cdf = self._trans_cdf[x]
        u = rng.random(x.shape) * cdf[..., -1]
        out = (cdf <= u[..., None]).sum(axis=-1)
        return np.minimum(out, self.n_states - 1)

    def log_potential(self, t, x):
        return self._log_g[t][x]

    def log_init_ratio(self, x):
        if self.init_proposal is None:
            return np.zeros(np.shape(x))
        with np.errstate(divide="ignore"):
            return np.log(self.init[x]) - np.log(self.init_proposal[x])

    def sample_init(self, rng, n):
        p = self.init if self.init_proposal is None else self.init_proposal
        return sample_rows(rng, np.broadcast_to(p, (n, p.size)))

    def prior_marginals(self) -> np.ndarray:
        """(T+1, K) array of the prior laws init @ trans^t."""
        out = np.empty((self.horizon + 1, self.n_states))
        out[0] = self.init
        for t in range(1, self.horizon + 1):
            out[t] = out[t - 1] @ self.trans
        return out


def make_lgssm(a, b, sigma_u, sigma_v, m0, s0, ys, init_proposal=None) -> LinearGaussianModel:
    """Build the scalar linear-Gaussian model bound to observations ``ys``."""
    for name, v in (("sigma_u", sigma_u), ("sigma_v", sigma_v), ("s0", s0)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    ys = _frozen(np.atleast_1d(ys))
    if ys.ndim != 1 or ys.size == 0:
        raise ValueError("observations must be a nonempty 1-D sequence")
    if init_proposal is not None:
        m, sd = init_proposal
        if not sd > 0:
            raise ValueError("init proposal scale must be positive")
        init_proposal = (float(m), float(sd))
    return LinearGaussianModel(float(a), float(b), float(sigma_u), float(sigma_v),
                               float(m0), float(s0), ys, init_proposal)


def truncate(model: StateSpaceModel, horizon: int) -> StateSpaceModel:
    """The same model bound to the first ``horizon + 1`` observations."""
    if not 0 <= horizon <= model.horizon:
        raise ValueError(f"horizon {horizon} outside [0, {model.horizon}]")
    return dataclasses.replace(model, ys=_frozen(model.ys[: horizon + 1], dtype=model.ys.dtype))


def _check_stochastic(name, m, axis=-1):
    if np.any(m < 0):
        raise ValueError(f"{name} has negative entries")
    if not np.allclose(m.sum(axis=axis), 1.0, rtol=0, atol=STOCHASTIC_TOL):
        raise ValueError(f"{name} rows must sum to 1 within {STOCHASTIC_TOL}")


def make_finite_hmm(trans, emit, init, ys, init_proposal=None) -> FiniteHMM:
    """Build a finite HMM; ``ys`` are symbol indices into the columns of ``emit``."""
    trans = _frozen(trans)
    emit = _frozen(emit)
    init = _frozen(init)
    K = trans.shape[0]
    if trans.shape != (K, K) or emit.ndim != 2 or emit.shape[0] != K or init.shape != (K,):
        raise ValueError("inconsistent HMM dimensions")
    _check_stochastic("trans", trans)
    _check_stochastic("emit", emit)
    _check_stochastic("init", init)
    ys = _frozen(np.atleast_1d(ys), dtype=np.int64)
    if ys.ndim != 1 or ys.size == 0:
        raise ValueError("observations must be a nonempty 1-D sequence")
    if ys.min() < 0 or ys.max() >= emit.shape[1]:
        raise ValueError("observation symbol out of range")
    if init_proposal is not None:
        init_proposal = _frozen(init_proposal)
        _check_stochastic("init_proposal", init_proposal)
        if np.any((init > 0) & (init_proposal == 0)):
            raise ValueError("init must be absolutely continuous w.r.t. init_proposal")
    return FiniteHMM(trans, emit, init, ys, init_proposal)


def simulate_lgssm(a, b, sigma_u, sigma_v, m0, s0, horizon, seed):
    """Seeded draw of (states, observations) for t = 0..horizon."""
    rng = np.random.default_rng(seed)
    x = np.empty(horizon + 1)
    x[0] = m0 + s0 * rng.standard_normal()
    for t in range(1, horizon + 1):
        x[t] = a * x[t - 1] + sigma_u * rng.standard_normal()
    y = b * x + sigma_v * rng.standard_normal(horizon + 1)
    return x, y


def simulate_hmm(trans, emit, init, horizon, seed):
    rng = np.random.default_rng(seed)
    trans, emit = np.asarray(trans), np.asarray(emit)
    x = np.empty(horizon + 1, dtype=np.int64)
    y = np.empty(horizon + 1, dtype=np.int64)
    x[0] = rng.choice(len(init), p=init)
    for t in range(horizon + 1):
        if t > 0:
            x[t] = rng.choice(trans.shape[0], p=trans[x[t - 1]])
        y[t] = rng.choice(emit.shape[1], p=emit[x[t]])
    return x, y


# ---------------------------------------------------------------------------
# pseudo-prior families


@dataclass(frozen=True, eq=False)
class GammaFamily:
    """Positive functions gamma_t plus the terminal instrumental density.

    ``log_scale`` multiplies every gamma_t by a common constant; it leaves
    the terminal density (a proper density) untouched.
    """

    log_scale: float = 0.0

    def log_gamma(self, t, x):
        raise NotImplementedError

    def log_terminal_density(self, x):
        raise NotImplementedError

    def sample_terminal(self, rng, n):
        raise NotImplementedError

    def gamma(self, t, x):
        return np.exp(self.log_gamma(t, x))

    def terminal_density(self, x):
        return np.exp(self.log_terminal_density(x))

    def unscaled(self) -> "GammaFamily":
        """The same family with the common scale removed."""
        return dataclasses.replace(self, log_scale=0.0) if self.log_scale else self

    def scaled(self, c: float) -> "GammaFamily":
        if not c > 0:
            raise ValueError("scale must be positive")
        return dataclasses.replace(self, log_scale=self.log_scale + math.log(c))


@dataclass(frozen=True, eq=False)
class GaussianGamma(GammaFamily):
    """gamma_t = N(means[t], variances[t]); terminal density N(means[T], variances[T])."""

    means: np.ndarray = None
    variances: np.ndarray = None

    def log_gamma(self, t, x):
        return norm_logpdf(x, self.means[t], math.sqrt(self.variances[t])) + self.log_scale

    def log_terminal_density(self, x):
        return norm_logpdf(x, self.means[-1], math.sqrt(self.variances[-1]))

    def sample_terminal(self, rng, n):
        return self.means[-1] + math.sqrt(self.variances[-1]) * rng.standard_normal(n)


@dataclass(frozen=True, eq=False)
class DiscreteGamma(GammaFamily):
    """gamma_t(k) = table[t, k]; terminal density ``terminal[k]``."""

    table: np.ndarray = None
    terminal: np.ndarray = None

    def __post_init__(self):
        # gamma_0 only ever multiplies; later gammas also divide
        if np.any(self.table < 0) or np.any(self.table[1:] <= 0):
            raise ValueError("gamma must be strictly positive (nonnegative at t=0)")
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_table", np.log(self.table))
            object.__setattr__(self, "_log_terminal", np.log(self.terminal))

    @property
    def scaled_table(self) -> np.ndarray:
        return self.table * math.exp(self.log_scale)

    def log_gamma(self, t, x):
        return self._log_table[t][x] + self.log_scale

    def log_terminal_density(self, x):
        return self._log_terminal[x]

    def sample_terminal(self, rng, n):
        return sample_rows(rng, np.broadcast_to(self.terminal, (n, self.terminal.size)))


def default_gamma_prior(model: StateSpaceModel) -> GammaFamily:
    """gamma_t = prior marginal law of X_t; terminal density = gamma_T."""
    if isinstance(model, LinearGaussianModel):
        means, var = model.prior_moments()
        return GaussianGamma(means=_frozen(means), variances=_frozen(var))
    if isinstance(model, FiniteHMM):
        table = model.prior_marginals()
        if np.any(table[1:] <= 0):
            raise ValueError("prior marginal has a zero-probability state; supply gamma explicitly")
        return DiscreteGamma(table=_frozen(table), terminal=_frozen(table[-1] / table[-1].sum()))
    raise UnsupportedModelError(f"no default gamma for model kind {getattr(model, 'kind', model)!r}")


# ---------------------------------------------------------------------------
# strong mixing


@dataclass(frozen=True)
class MixingCertificate:
    sigma_minus: float
    sigma_plus: float
    c_minus: float
    gamma_minus: float
    gamma_plus: float
    c_check_minus: float

    @property
    def violations(self) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(self) if not getattr(self, f.name) > 0)

    @property
    def valid(self) -> bool:
        return not self.violations


def check_mixing(model: FiniteHMM, gammas: DiscreteGamma, strict: bool = True) -> MixingCertificate:
    """Tightest strong-mixing constants of a finite HMM by enumeration.

    Raises :class:`MixingViolationError` when a constant is zero, unless
    ``strict`` is False.
    """
    if not isinstance(model, FiniteHMM) or not isinstance(gammas, DiscreteGamma):
        raise UnsupportedModelError("mixing constants are computed for finite HMMs only")
    Q = model.trans
    G = model.potential_table
    Gam = gammas.scaled_table
    T = model.horizon
    c_minus = min(float(model.init @ G[0]), float((Q @ G.T).min()))
    c_check = float(Gam[T] @ G[T])
    for t in range(T):
        # inf over x of sum_k gamma_t(k) g_t(k) q(k, x) / gamma_{t+1}(x)
        c_check = min(c_check, float(((Gam[t] * G[t]) @ Q / Gam[t + 1]).min()))
    cert = MixingCertificate(
        sigma_minus=float(Q.min()),
        sigma_plus=float(Q.max()),
        c_minus=c_minus,
        gamma_minus=float(Gam.min()),
        gamma_plus=float(Gam.max()),
        c_check_minus=c_check,
    )
    if strict and cert.violations:
        raise MixingViolationError(f"mixing violated: {', '.join(cert.violations)} = 0", cert)
    return cert


# ---------------------------------------------------------------------------
# JSON documents


def model_from_dict(doc: dict[str, Any]) -> StateSpaceModel:
    """Build a model from ``{"kind": "lgssm" | "hmm", ..., "observations": [...]}``.

    Instead of ``observations`` a document may carry
    ``"simulate": {"horizon": T, "seed": s}`` to draw a seeded record.
    """
    kind = doc.get("kind")
    if kind == "lgssm":
        params = {k: float(doc[k]) for k in ("a", "b", "sigma_u", "sigma_v", "m0", "s0")}
        ys = _observations(doc, lambda T, s: simulate_lgssm(**params, horizon=T, seed=s)[1])
        prop = doc.get("init_proposal")
        return make_lgssm(**params, ys=ys, init_proposal=tuple(prop) if prop else None)
    if kind == "hmm":
        ys = _observations(doc, lambda T, s: simulate_hmm(doc["trans"], doc["emit"], doc["init"], T, s)[1])
        return make_finite_hmm(doc["trans"], doc["emit"], doc["init"], ys, doc.get("init_proposal"))
    raise UnsupportedModelError(f"unknown model kind {kind!r}")


def _observations(doc, simulate):
    if "observations" in doc:
        return doc["observations"]
    if "simulate" in doc:
        sim = doc["simulate"]
        return simulate(int(sim["horizon"]), int(sim["seed"]))
    raise ValueError("model document needs 'observations' or 'simulate'")


def load_model(path: str | Path) -> StateSpaceModel:
    return model_from_dict(json.loads(Path(path).read_text()))
