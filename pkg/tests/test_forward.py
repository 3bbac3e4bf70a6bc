import math

import numpy as np
import pytest

from twofilter import (
    ForwardProposal,
    UnsupportedModelError,
    bootstrap_proposal,
    ess,
    estimate,
    fully_adapted_forward_proposal,
    hmm_exact,
    kalman_rts,
    make_finite_hmm,
    make_lgssm,
    run_forward,
)
from twofilter.forward import forward_step, init_forward
from twofilter.harness.registry import resolve

from conftest import EMIT, TRANS, UNIFORM_INIT

# P(X_1 = 0 | y_0 = 0, y_1 = 1) for the two-state fixture with a uniform
# initial law, from enumerating the four paths by hand (independent script)
FILTER_1_STATE_0 = 0.47651006711409394

is0 = resolve("indicator:0")


def test_single_particle_has_unit_weight(hmm01, lgssm):
    for m in (hmm01, lgssm):
        for ps in run_forward(m, bootstrap_proposal(m), 1, 4):
            assert ps.normalized_weights[0] == 1.0


def test_lgssm_initial_mean_matches_kalman():
    m = make_lgssm(0.9, 1.0, 1.0, 1.0, 0.0, 1.0, [0.0])
    ps = init_forward(m, 10**5, 1)
    mean = estimate(ps, lambda x: x)
    sd = math.sqrt(estimate(ps, lambda x: (x - mean) ** 2))
    assert kalman_rts(m)[0][0].mean == 0.0
    assert abs(mean) <= 3 * sd / math.sqrt(ess(ps))


def test_bootstrap_weight_is_potential(lgssm):
    prop = bootstrap_proposal(lgssm)
    prev = init_forward(lgssm, 500, 2)
    ps = forward_step(lgssm, prop, prev, 1, 2)
    assert np.allclose(ps.log_weights, lgssm.log_potential(1, ps.particles), rtol=0, atol=1e-12)


def test_hmm_filter_two_steps(hmm01):
    ps = run_forward(hmm01, bootstrap_proposal(hmm01), 10**5, 11)[1]
    exact = hmm_exact(hmm01)[0][1].probs[0]
    assert exact == pytest.approx(FILTER_1_STATE_0, abs=1e-12)
    assert abs(estimate(ps, is0) - FILTER_1_STATE_0) < 0.01


def test_bootstrap_filter_accuracy_over_seeds(hmm5):
    exact = [m.probs[0] for m in hmm_exact(hmm5)[0]]
    hits = 0
    for seed in range(100):
        systems = run_forward(hmm5, bootstrap_proposal(hmm5), 10**4, seed)
        hits += all(abs(estimate(ps, is0) - e) < 0.02 for ps, e in zip(systems, exact))
    assert hits >= 95


def test_fully_adapted_weights_uniform(hmm5):
    systems = run_forward(hmm5, fully_adapted_forward_proposal(hmm5), 300, 5)
    for ps in systems[1:]:
        assert np.ptp(ps.log_weights) < 1e-12


def test_fully_adapted_lgssm_weights_uniform(lgssm):
    systems = run_forward(lgssm, fully_adapted_forward_proposal(lgssm), 300, 5)
    for ps in systems[1:]:
        assert np.ptp(ps.log_weights) < 1e-10


def test_step_preconditions(hmm01):
    prop = bootstrap_proposal(hmm01)
    ps0 = init_forward(hmm01, 10, 0)
    with pytest.raises(IndexError):
        forward_step(hmm01, prop, ps0, 2, 0)
    with pytest.raises(ValueError):
        forward_step(hmm01, prop, ps0, 1, 0, selection="stratified")
    with pytest.raises(ValueError):
        init_forward(hmm01, 0, 0)


def test_systematic_selection_is_opt_in(hmm01):
    prev = init_forward(hmm01, 64, 3)
    with pytest.warns(UserWarning):
        ps = forward_step(hmm01, bootstrap_proposal(hmm01), prev, 1, 3, selection="systematic-unverified")
    assert len(ps) == 64


def test_ancestors_recorded(hmm01):
    ps = run_forward(hmm01, bootstrap_proposal(hmm01), 50, 1)
    assert ps[0].ancestors is None
    assert ps[1].ancestors.shape == (50,)


def test_reproducible(hmm5):
    a = run_forward(hmm5, bootstrap_proposal(hmm5), 100, 9)
    b = run_forward(hmm5, bootstrap_proposal(hmm5), 100, 9)
    for x, y in zip(a, b):
        assert np.array_equal(x.particles, y.particles) and np.array_equal(x.log_weights, y.log_weights)


def test_custom_adjustment_changes_selection_only(hmm01):
    # theta favouring state 1 tilts selection; the weight undoes it
    prop = ForwardProposal(
        log_adjustment=lambda t, x: np.where(np.asarray(x) == 1, math.log(4.0), 0.0),
        log_kernel=lambda t, x, xp: hmm01.log_transition(x, xp),
        kernel_sampler=lambda rng, t, x: hmm01.sample_transition(rng, x),
    )
    ps = run_forward(hmm01, prop, 10**5, 8)[1]
    assert abs(estimate(ps, is0) - FILTER_1_STATE_0) < 0.01


def test_fully_adapted_needs_known_model():
    class Other:
        kind = "other"

    with pytest.raises(UnsupportedModelError):
        fully_adapted_forward_proposal(Other())


def test_init_proposal_reweights():
    m = make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [0], init_proposal=[0.9, 0.1])
    ps = init_forward(m, 10**5, 2)
    assert abs(estimate(ps, is0) - 0.35 / 0.55) < 0.01
