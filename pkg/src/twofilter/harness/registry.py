"""Named test functions and their exact expectations.

===================  =========================  ===========
name                 h(x)                       osc(h)
===================  =========================  ===========
indicator:k          1{x = k}                   1
identity             x                          unbounded
clipped_identity     clip(x, -10, 10)           20
cubic                clip(x, -2, 2)^3 / 8       2
===================  =========================  ===========
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..model import FiniteHMM, GammaFamily, LinearGaussianModel, StateSpaceModel
from ..oracles import ENUMERATION_CAP, hmm_exact, kalman_rts


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    osc: float

    def __call__(self, x):
        return self.fn(x)


TestFunction.__test__ = False  # keep pytest from collecting it


def resolve(name: str) -> TestFunction:
    if name.startswith("indicator:"):
        k = int(name.split(":", 1)[1])
        return TestFunction(name, lambda x: (np.asarray(x) == k).astype(np.float64), 1.0)
    if name == "identity":
        return TestFunction(name, lambda x: np.asarray(x, dtype=np.float64), math.inf)
    if name == "clipped_identity":
        return TestFunction(name, lambda x: np.clip(np.asarray(x, dtype=np.float64), -10.0, 10.0), 20.0)
    if name == "cubic":
        return TestFunction(name, lambda x: np.clip(np.asarray(x, dtype=np.float64), -2.0, 2.0) ** 3 / 8.0, 2.0)
    raise ValueError(f"unknown test function {name!r}")


def smoothing_truth(model: StateSpaceModel, gammas: GammaFamily, names) -> dict[tuple[int, str], float]:
    """Exact E[h(X_s) | y_{0:T}] for every s and every named h."""
    if isinstance(model, LinearGaussianModel):
        _, marginals = kalman_rts(model)
    elif isinstance(model, FiniteHMM):
        small = model.n_states ** (model.horizon + 1) <= ENUMERATION_CAP
        _, _, marginals = hmm_exact(model, gammas, cross_check=small)
    else:
        raise TypeError(f"no oracle for {model.kind}")
    out = {}
    for name in names:
        h = resolve(name)
        for m in marginals:
            if name == "identity" and isinstance(model, LinearGaussianModel):
                out[(m.time, name)] = m.mean
            else:
                out[(m.time, name)] = m.expect(h)
    return out
