import itertools
import json
import math

import numpy as np
import pytest
from scipy import integrate

from twofilter import (
    DiscreteGamma,
    GaussianGamma,
    MixingViolationError,
    UnsupportedModelError,
    check_mixing,
    default_gamma_prior,
    load_model,
    make_finite_hmm,
    make_lgssm,
)
from twofilter.model import model_from_dict, simulate_hmm, truncate

from conftest import EMIT, TRANS, UNIFORM_INIT

INV_SQRT_2PI = 0.3989422804


def test_lgssm_transition_density_at_origin():
    m = make_lgssm(0.5, 1.0, 1.0, 1.0, 0.0, 1.0, [0.0])
    assert m.transition_density(0.0, 0.0) == pytest.approx(INV_SQRT_2PI, abs=1e-10)


def test_lgssm_potential_at_origin():
    m = make_lgssm(0.5, 1.0, 1.0, 1.0, 0.0, 1.0, [0.0])
    assert m.potential(0, 0.0) == pytest.approx(INV_SQRT_2PI, abs=1e-10)


@pytest.mark.parametrize("c", [-3.0, 0.0, 0.7, 12.5])
def test_lgssm_unit_slope_density_on_diagonal(c):
    m = make_lgssm(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, [0.0])
    assert m.transition_density(c, c) == pytest.approx(INV_SQRT_2PI, abs=1e-10)


def test_hmm_lookups():
    m = make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [0, 1])
    assert m.transition_density(0, 1) == 0.1
    assert m.potential(1, 0) == 0.3


def test_hmm_identity_transition():
    m = make_finite_hmm(np.eye(3), np.full((3, 2), 0.5), [1, 0, 0], [0])
    for i in range(3):
        assert m.transition_density(i, i) == 1.0


@pytest.mark.parametrize("a", [0.0, 0.5, 0.9, -1.3])
def test_lgssm_transition_integrates_to_one(a):
    m = make_lgssm(a, 1.0, 0.7, 1.0, 0.0, 1.0, [0.0])
    for x in (-2.0, 0.0, 3.5):
        mu = a * x
        val, _ = integrate.quad(lambda xp: float(m.transition_density(x, xp)), mu - 8 * 0.7, mu + 8 * 0.7,
                                epsabs=1e-13)
        assert abs(val - 1.0) < 1e-9


def test_hmm_transition_sums_to_one(hmm5):
    x = np.arange(2)
    tot = hmm5.pairwise_transition(x, x).sum(axis=1)
    assert np.allclose(tot, 1.0, atol=1e-9, rtol=0)


def test_pairwise_transition_matches_pointwise(lgssm):
    x = np.linspace(-3, 3, 7)
    y = np.linspace(-2, 4, 5)
    ref = np.exp(lgssm.log_transition(x[:, None], y[None, :]))
    assert np.allclose(lgssm.pairwise_transition(x, y), ref, rtol=1e-13, atol=0)


def test_gamma_prior_lgssm_variance():
    m = make_lgssm(0.5, 1.0, 1.0, 1.0, 0.0, 1.0, [0.0, 0.0])
    g = default_gamma_prior(m)
    assert g.variances[1] == pytest.approx(1.25, abs=1e-15)


def test_gamma_prior_memoryless_mean_is_zero():
    m = make_lgssm(0.0, 1.0, 1.0, 1.0, 0.0, 2.0, [0.0] * 5)
    g = default_gamma_prior(m)
    assert np.all(g.means[1:] == 0.0)


def test_gamma_prior_hmm_one_step():
    m = make_finite_hmm(TRANS, EMIT, [1.0, 0.0], [0, 0])
    g = default_gamma_prior(m)
    assert np.allclose(g.table[1], [0.9, 0.1], atol=1e-15, rtol=0)


def test_gamma_prior_rejects_zero_mass_state():
    # state 1 stays unreachable, so gamma_1(1) = 0 would sit in a denominator
    m = make_finite_hmm(np.eye(2), EMIT, [1.0, 0.0], [0, 1])
    with pytest.raises(ValueError):
        default_gamma_prior(m)


def test_gamma_prior_condition_finite_and_positive(hmm5):
    # sum over paths of gamma_t(x_t) prod g_u(x_u) q(x_{u-1}, x_u) for every t
    g = default_gamma_prior(hmm5)
    T = hmm5.horizon
    Q, G = hmm5.trans, hmm5.potential_table
    for t in range(T + 1):
        tot = 0.0
        for path in itertools.product(range(2), repeat=T - t + 1):
            w = g.table[t][path[0]] * G[t][path[0]]
            for u in range(1, len(path)):
                w *= Q[path[u - 1], path[u]] * G[t + u][path[u]]
            tot += w
        assert 0 < tot < math.inf


def test_gamma_scaling():
    g = DiscreteGamma(table=np.array([[0.5, 0.5], [0.25, 0.75]]), terminal=np.array([0.25, 0.75]))
    g3 = g.scaled(3.0)
    assert g3.gamma(1, 1) == pytest.approx(2.25, rel=1e-15)
    assert g3.terminal_density(1) == 0.75
    assert g3.unscaled().log_scale == 0.0
    with pytest.raises(ValueError):
        g.scaled(0.0)


def test_mixing_constants():
    m = make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [0, 1, 0])
    cert = check_mixing(m, default_gamma_prior(m))
    assert (cert.sigma_minus, cert.sigma_plus) == (0.1, 0.9)
    assert cert.valid


def test_mixing_violation():
    m = make_finite_hmm([[1.0, 0.0], [0.2, 0.8]], EMIT, UNIFORM_INIT, [0, 1])
    g = DiscreteGamma(table=np.ones((2, 2)), terminal=np.array([0.5, 0.5]))
    with pytest.raises(MixingViolationError, match="mixing violated") as info:
        check_mixing(m, g)
    assert "sigma_minus" in info.value.certificate.violations
    assert not check_mixing(m, g, strict=False).valid


def test_mixing_uniform_everything():
    m = make_finite_hmm(np.full((2, 2), 0.5), np.full((2, 2), 0.5), UNIFORM_INIT, [0, 1, 0])
    g = DiscreteGamma(table=np.ones((3, 2)), terminal=np.array([0.5, 0.5]))
    cert = check_mixing(m, g)
    assert cert.sigma_minus == cert.sigma_plus == 0.5
    assert cert.gamma_minus == cert.gamma_plus == 1.0
    assert cert.c_minus == cert.c_check_minus == 0.5


def test_mixing_constants_bound_by_enumeration(hmm5):
    g = default_gamma_prior(hmm5)
    cert = check_mixing(hmm5, g)
    Q, G, Gam, T = hmm5.trans, hmm5.potential_table, g.table, hmm5.horizon
    assert Q.min() == cert.sigma_minus and Q.max() == cert.sigma_plus
    lower = [hmm5.init @ G[0]] + [sum(Q[x, k] * G[t][k] for k in range(2)) for t in range(T + 1) for x in range(2)]
    assert min(lower) == pytest.approx(cert.c_minus, rel=1e-15)
    check = [Gam[T] @ G[T]] + [sum(Gam[t][k] * G[t][k] * Q[k, x] for k in range(2)) / Gam[t + 1][x]
                               for t in range(T) for x in range(2)]
    assert min(check) == pytest.approx(cert.c_check_minus, rel=1e-12)
    assert cert.gamma_minus <= Gam.min() and Gam.max() <= cert.gamma_plus


def test_mixing_needs_finite_model(lgssm):
    with pytest.raises(UnsupportedModelError):
        check_mixing(lgssm, default_gamma_prior(lgssm))


def test_invalid_models():
    with pytest.raises(ValueError):
        make_lgssm(0.5, 1.0, 0.0, 1.0, 0.0, 1.0, [0.0])
    with pytest.raises(ValueError):
        make_finite_hmm([[0.5, 0.6], [0.5, 0.5]], EMIT, UNIFORM_INIT, [0])
    with pytest.raises(ValueError):
        make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [2])


def test_truncate_keeps_prefix(hmm5):
    m = truncate(hmm5, 2)
    assert m.horizon == 2 and list(m.ys) == [0, 1, 1]


def test_model_documents(tmp_path):
    doc = {"kind": "hmm", "trans": TRANS, "emit": EMIT, "init": UNIFORM_INIT, "simulate": {"horizon": 4, "seed": 9}}
    m = model_from_dict(doc)
    assert list(m.ys) == list(simulate_hmm(TRANS, EMIT, UNIFORM_INIT, 4, 9)[1])
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"kind": "lgssm", "a": 0.9, "b": 1, "sigma_u": 1, "sigma_v": 1, "m0": 0, "s0": 1,
                             "observations": [0.5, -1.0]}))
    m2 = load_model(p)
    assert m2.horizon == 1 and m2.a == 0.9
    with pytest.raises(UnsupportedModelError):
        model_from_dict({"kind": "nonlinear"})
    with pytest.raises(ValueError):
        model_from_dict({"kind": "hmm", "trans": TRANS, "emit": EMIT, "init": UNIFORM_INIT})


def test_gaussian_gamma_terminal_density():
    g = GaussianGamma(means=np.array([0.0, 1.0]), variances=np.array([1.0, 4.0]))
    assert g.terminal_density(1.0) == pytest.approx(1 / math.sqrt(8 * math.pi), rel=1e-14)
