import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from twofilter import (
    METHODS,
    Proposals,
    bootstrap_proposal,
    default_gamma_prior,
    default_proposals,
    estimate,
    fully_adapted_backward_proposal,
    hmm_exact,
    kalman_rts,
    make_finite_hmm,
    product_estimate,
    reverse_kernel_backward_proposal,
    run_backward,
    run_forward,
    smooth_all,
)
from twofilter.harness.registry import resolve
from twofilter.model import truncate
from twofilter.smoothing import (
    SMOOTHING_COLUMNS,
    bdm_forward_reweight,
    bdm_linear_backward,
    bdm_linear_backward_long_form,
    bdm_linear_forward,
    bdm_linear_forward_long_form,
    combine,
    factorized_smoothing_proposal,
    fully_adapted_smoothing_proposal,
    fwt_sample_linear,
    fwt_sample_quadratic,
    odot,
    product_smoothing,
    q2,
    run_passes,
    smooth_methods,
    smoothing_rows,
    write_smoothing_csv,
)

from conftest import EMIT, TRANS, UNIFORM_INIT

# independent enumeration of the eight paths for ys = [0, 1, 0]
SMOOTH_T2 = (0.5829838226482925, 0.5700419412822049, 0.6668663870581187)
# phi_0[1_0] * psi_{1|1}[1_0] for ys = [0, 1]
PRODUCT_T1 = 0.2413793103448275

is0 = resolve("indicator:0")


def setup(model, N, seed):
    g = default_gamma_prior(model)
    P = default_proposals(model, g)
    return g, P, run_passes(model, g, P, N, seed)


def test_q2_and_odot(hmm01):
    assert q2(hmm01, 0, 1, 0) == pytest.approx(0.9 * 0.1, rel=1e-15)
    assert q2(hmm01, 1, 1, 0) == pytest.approx(0.2 * 0.1, rel=1e-15)
    f = odot(lambda x, xp: x + xp, lambda xp: 2 * xp)
    assert f(1, 3) == 24


def test_product_constant_exact(hmm01):
    g, P, passes = setup(hmm01, 500, 1)
    for c in (0.0, -3.25, 1e6):
        assert product_estimate(passes.forward[0], passes.backward[1], lambda x, y: np.full(np.broadcast(x, y).shape, c)) == c


def test_product_two_marginals(hmm01):
    g, P, passes = setup(hmm01, 10**5, 2)
    ex = hmm_exact(hmm01)
    assert ex[0][0].probs[0] * ex[1][1].probs[0] == pytest.approx(PRODUCT_T1, abs=1e-12)
    v = product_estimate(passes.forward[0], passes.backward[1], lambda x, y: ((x == 0) & (y == 0)).astype(float))
    assert abs(v - PRODUCT_T1) < 0.01


def test_product_separable_fast_path(hmm5):
    g, P, passes = setup(hmm5, 700, 3)
    f, h = is0, (lambda y: 1.0 + y)
    fwd, bwd = passes.forward[1], passes.backward[3]
    a = product_estimate(fwd, bwd, (f, h), separable=True)
    b = product_estimate(fwd, bwd, lambda x, y: f(x) * h(y))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_product_needs_ordered_pair(hmm01):
    g, P, passes = setup(hmm01, 10, 0)
    with pytest.raises(ValueError):
        product_estimate(passes.forward[1], passes.backward[0], lambda x, y: x)


def test_single_particle_weights(hmm010):
    g = default_gamma_prior(hmm010)
    P = default_proposals(hmm010, g)
    for m in METHODS:
        for ps in smooth_all(hmm010, g, P, m, 1, 5, endpoints=True).values():
            assert ps.normalized_weights[0] == 1.0


def test_every_method_hits_enumerated_marginal(hmm010):
    g = default_gamma_prior(hmm010)
    P = default_proposals(hmm010, g)
    hits = dict.fromkeys(METHODS, 0)
    for seed in range(100):
        passes = run_passes(hmm010, g, P, 10**4, seed)
        out = smooth_methods(passes, hmm010, g, P, METHODS, times=[1])
        for m in METHODS:
            hits[m] += abs(estimate(out[m][1], is0) - SMOOTH_T2[1]) < 0.02
    assert all(v >= 95 for v in hits.values()), hits


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1e3, 1e3))
def test_constants_and_range(seed, c):
    m = make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [0, 1, 1, 0])
    g, P, passes = setup(m, 64, seed)
    out = smooth_methods(passes, m, g, P, METHODS, times=range(4))
    for systems in out.values():
        for ps in systems.values():
            assert estimate(ps, lambda x: np.full(np.shape(x), c)) == c
            v = estimate(ps, lambda x: 3.0 * x - 1.0)
            assert -1.0 <= v <= 2.0


def test_product_matches_bdm_forward(hmm5):
    g, P, passes = setup(hmm5, 400, 7)
    a = product_smoothing(passes.forward[2], passes.backward[3], hmm5, g)
    b = bdm_forward_reweight(passes.forward[2], passes.backward[3], hmm5, g)
    assert np.allclose(a.normalized_weights, b.normalized_weights, rtol=1e-12, atol=1e-15)


def test_shared_passes_match_single_calls(hmm5):
    g, P, passes = setup(hmm5, 200, 8)
    joint = smooth_methods(passes, hmm5, g, P, METHODS, times=range(5))
    for m in METHODS:
        for s in range(5):
            single = combine(passes, hmm5, g, P, m, s)
            assert np.array_equal(single.particles, joint[m][s].particles)
            assert np.array_equal(single.log_weights, joint[m][s].log_weights)


def test_endpoints_close_to_truth(hmm010):
    g = default_gamma_prior(hmm010)
    P = default_proposals(hmm010, g)
    for m in METHODS:
        out = smooth_all(hmm010, g, P, m, 20000, 11, endpoints=True)
        assert sorted(out) == [0, 1, 2]
        for s, ps in out.items():
            assert abs(estimate(ps, is0) - SMOOTH_T2[s]) < 0.03, (m, s)


def test_fully_adapted_fwt_weights_uniform(hmm5, lgssm):
    for model in (hmm5, lgssm):
        g, P, passes = setup(model, 300, 9)
        for s in range(1, model.horizon):
            ps = fwt_sample_quadratic(passes.forward[s - 1], passes.backward[s + 1], P.smoothing, model, g, 300, 9)
            assert np.ptp(ps.log_weights) < 1e-10


def test_lgssm_fully_adapted_adjustment_matches_quadrature(lgssm):
    prop = fully_adapted_smoothing_proposal(lgssm)
    for x, xp in ((0.3, -1.2), (2.0, 2.5), (-4.0, 1.0)):
        val, _ = integrate.quad(lambda u: float(lgssm.transition_density(x, u) * lgssm.potential(2, u)
                                                * lgssm.transition_density(u, xp)), -30, 30, epsabs=1e-16)
        assert prop.adjustment(2, x, xp) == pytest.approx(val, rel=1e-9)


def test_blocked_joint_sampler_matches_table(hmm010):
    g, P, passes = setup(hmm010, 2000, 12)
    args = (passes.forward[0], passes.backward[2], P.smoothing, hmm010, g, 40000, 12)
    flat = fwt_sample_quadratic(*args)
    blocked = fwt_sample_quadratic(*args, table_cap=1000)
    for ps in (flat, blocked):
        assert abs(estimate(ps, is0) - SMOOTH_T2[1]) < 0.02
    a, b = np.bincount(flat.particles, minlength=2) / 40000, np.bincount(blocked.particles, minlength=2) / 40000
    assert np.abs(a - b).max() < 0.02


def test_fwt_linear_needs_factorized_kernel(hmm010):
    g, P, passes = setup(hmm010, 50, 0)
    with pytest.raises(ValueError):
        fwt_sample_linear(passes.forward[0], passes.backward[2], P.forward, P.backward, P.smoothing, hmm010, g, 50, 0)
    bad = Proposals(P.forward, P.backward, P.smoothing, P.smoothing)
    with pytest.raises(ValueError):
        smooth_all(hmm010, g, bad, "fwt-lin", 50, 0)


def test_unknown_method(hmm010):
    g = default_gamma_prior(hmm010)
    with pytest.raises(ValueError):
        smooth_all(hmm010, g, default_proposals(hmm010, g), "bdm-x", 10, 0)


@pytest.mark.parametrize("kernel", ["forward", "backward"])
def test_factorized_kernels_target_marginal(hmm010, kernel):
    g = default_gamma_prior(hmm010)
    fp = bootstrap_proposal(hmm010)
    bp = fully_adapted_backward_proposal(hmm010, g)
    P = Proposals(fp, bp, factorized_smoothing_proposal(fp, bp, kernel), factorized_smoothing_proposal(fp, bp, kernel))
    for m in ("fwt-quad", "fwt-lin"):
        ps = smooth_all(hmm010, g, P, m, 40000, 13)[1]
        assert abs(estimate(ps, is0) - SMOOTH_T2[1]) < 0.02


def test_linear_factorizations_match_long_forms(hmm5, lgssm):
    for model in (hmm5, lgssm):
        g = default_gamma_prior(model)
        fp = bootstrap_proposal(model)
        bp = reverse_kernel_backward_proposal(model, g)
        F = run_forward(model, fp, 1000, 14)
        B = run_backward(model, g, bp, 1000, 14)
        for s in range(1, model.horizon):
            lb = bdm_linear_backward(F[s - 1], B[s], fp, model, g, 14)
            long_b = bdm_linear_backward_long_form(F[s - 1], B[s], B[s + 1], fp, bp, model, g, lb.ancestors)
            np.testing.assert_allclose(long_b, lb.log_weights + lb.log_offset, rtol=1e-12, atol=1e-12)
            lf = bdm_linear_forward(F[s], B[s + 1], bp, model, g, 14)
            long_f = bdm_linear_forward_long_form(F[s - 1], F[s], B[s + 1], fp, bp, model, lf.ancestors)
            np.testing.assert_allclose(long_f, lf.log_weights + lf.log_offset, rtol=1e-12, atol=1e-12)


def test_lgssm_smoothed_means_close(lgssm):
    g = default_gamma_prior(lgssm)
    P = default_proposals(lgssm, g)
    _, rts = kalman_rts(lgssm)
    for m in METHODS:
        out = smooth_all(lgssm, g, P, m, 4000, 15)
        for s, ps in out.items():
            assert abs(estimate(ps, lambda x: x) - rts[s].mean) < 0.15, (m, s)


def test_smoothing_rows_csv(tmp_path, hmm010):
    g = default_gamma_prior(hmm010)
    out = smooth_all(hmm010, g, default_proposals(hmm010, g), "bdm-f", 100, 1)
    rows = smoothing_rows(out, "bdm-f", 100, 1, {"indicator:0": is0})
    path = tmp_path / "s.csv"
    write_smoothing_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(SMOOTHING_COLUMNS)
    assert len(lines) == 2
    assert math.isclose(float(lines[1].split(",")[4]), rows[0]["estimate_mean"], rel_tol=0, abs_tol=0)


def test_horizon_zero(hmm01):
    m = truncate(hmm01, 0)
    g = default_gamma_prior(m)
    out = smooth_all(m, g, default_proposals(m, g), "bdm-lin-b", 500, 1, endpoints=True)
    assert list(out) == [0]
    assert abs(estimate(out[0], is0) - 0.35 / 0.55) < 0.06
