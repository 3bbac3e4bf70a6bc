"""Two-filter particle approximations of marginal smoothing distributions.

Forward auxiliary particle filter, backward information filter, seven
ways of combining them, closed-form oracles and a replicated-experiment
harness (``smc`` on the command line).
"""

from .backward import (
    BackwardProposal,
    fully_adapted_backward_proposal,
    gamma_ratio_backward_proposal,
    reverse_kernel_backward_proposal,
    run_backward,
)
from .errors import (
    DegenerateErrorSignal,
    InsufficientDataError,
    MixingViolationError,
    UnsupportedModelError,
    WeightDegeneracyError,
)
from .forward import ForwardProposal, bootstrap_proposal, fully_adapted_forward_proposal, run_forward
from .model import (
    DiscreteGamma,
    FiniteHMM,
    GaussianGamma,
    LinearGaussianModel,
    check_mixing,
    default_gamma_prior,
    load_model,
    make_finite_hmm,
    make_lgssm,
)
from .oracles import hmm_exact, kalman_rts, lgssm_backward_info, two_filter_marginals
from .particles import ParticleSystem, ess, estimate
from .smoothing import (
    METHODS,
    Proposals,
    SmoothingProposal,
    default_proposals,
    product_estimate,
    smooth_all,
)

__all__ = [
    "BackwardProposal", "DegenerateErrorSignal", "DiscreteGamma", "FiniteHMM", "ForwardProposal",
    "GaussianGamma", "InsufficientDataError", "LinearGaussianModel", "METHODS", "MixingViolationError",
    "ParticleSystem", "Proposals", "SmoothingProposal", "UnsupportedModelError", "WeightDegeneracyError",
    "bootstrap_proposal", "check_mixing", "default_gamma_prior", "default_proposals", "ess", "estimate",
    "fully_adapted_backward_proposal", "fully_adapted_forward_proposal", "gamma_ratio_backward_proposal", "hmm_exact", "kalman_rts",
    "lgssm_backward_info", "load_model", "make_finite_hmm", "make_lgssm", "product_estimate",
    "reverse_kernel_backward_proposal", "run_backward", "run_forward", "smooth_all", "two_filter_marginals",
]
