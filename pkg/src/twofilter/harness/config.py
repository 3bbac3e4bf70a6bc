"""Experiment configuration documents."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..backward import fully_adapted_backward_proposal, reverse_kernel_backward_proposal
from ..forward import bootstrap_proposal, fully_adapted_forward_proposal
from ..model import (
    DiscreteGamma,
    GammaFamily,
    GaussianGamma,
    StateSpaceModel,
    default_gamma_prior,
    model_from_dict,
)
from ..smoothing import (
    METHODS,
    Proposals,
    factorized_smoothing_proposal,
    fully_adapted_smoothing_proposal,
)
from .registry import resolve

_strict = ConfigDict(extra="forbid")


class GammaSpec(BaseModel):
    """``prior`` marginals, or explicit Gaussian / discrete tables, times ``scale``."""

    model_config = _strict
    kind: Literal["prior", "gaussian", "discrete"] = "prior"
    means: list[float] | None = None
    variances: list[float] | None = None
    table: list[list[float]] | None = None
    terminal: list[float] | None = None
    scale: float = Field(1.0, gt=0)

    def build(self, model: StateSpaceModel) -> GammaFamily:
        if self.kind == "prior":
            g = default_gamma_prior(model)
        elif self.kind == "gaussian":
            g = GaussianGamma(means=np.array(self.means, dtype=float), variances=np.array(self.variances, dtype=float))
        else:
            g = DiscreteGamma(table=np.array(self.table, dtype=float), terminal=np.array(self.terminal, dtype=float))
        return g.scaled(self.scale) if self.scale != 1.0 else g


class ProposalSpec(BaseModel):
    model_config = _strict
    forward: Literal["bootstrap", "fully_adapted"] = "bootstrap"
    backward: Literal["default", "fully_adapted", "reverse_kernel"] = "default"
    smoothing: Literal["fully_adapted", "factorized-forward", "factorized-backward"] = "fully_adapted"
    linear_kernel: Literal["forward", "backward"] = "forward"

    def build(self, model: StateSpaceModel, gammas: GammaFamily) -> Proposals:
        fwd = bootstrap_proposal(model) if self.forward == "bootstrap" else fully_adapted_forward_proposal(model)
        kind = self.backward
        if kind == "default":
            kind = "fully_adapted" if model.kind == "hmm" else "reverse_kernel"
        if kind == "fully_adapted":
            bwd = fully_adapted_backward_proposal(model, gammas)
        else:
            bwd = reverse_kernel_backward_proposal(model, gammas)
        if self.smoothing == "fully_adapted":
            smo = fully_adapted_smoothing_proposal(model)
        else:
            smo = factorized_smoothing_proposal(fwd, bwd, self.smoothing.split("-")[1])
        return Proposals(fwd, bwd, smo, factorized_smoothing_proposal(fwd, bwd, self.linear_kernel))


class _Claim(BaseModel):
    model_config = _strict
    id: str
    h: str
    s: int | None = None


class RmseSlopeClaim(_Claim):
    kind: Literal["rmse_slope"]
    method: str
    band: tuple[float, float] = (-0.65, -0.35)
    n_boot: int = 1000


class ExceedanceClaim(_Claim):
    kind: Literal["exceedance"]
    method: str
    eps: float = 0.05


class NormalityClaim(_Claim):
    kind: Literal["normality"]
    method: str
    N: int | None = None
    max_skew: float = 0.3
    max_excess_kurtosis: float = 0.6


class VarianceClaim(_Claim):
    kind: Literal["variance_compare"]
    larger: str = "fwt-lin"
    smaller: str = "bdm-lin-f"
    N: int | None = None
    level: float = 0.05


class UniformityClaim(_Claim):
    kind: Literal["time_uniformity"]
    method: str
    T1: int
    T2: int
    N: int | None = None
    factor: float = 1.5


class OracleClaim(_Claim):
    kind: Literal["oracle_agreement"]
    methods: list[str] | None = None
    N: int | None = None
    n_se: float = 5.0


class CrossClaim(_Claim):
    kind: Literal["cross_agreement"]
    methods: list[str] | None = None
    N: int | None = None
    tol: float = 0.02
    fraction: float = 0.95


Claim = Annotated[
    Union[RmseSlopeClaim, ExceedanceClaim, NormalityClaim, VarianceClaim, UniformityClaim, OracleClaim, CrossClaim],
    Field(discriminator="kind"),
]


class ExperimentConfig(BaseModel):
    """A replicated smoothing experiment plus the claims checked on its output."""

    model_config = _strict

    model: dict[str, Any]
    gamma: GammaSpec = GammaSpec()
    proposals: ProposalSpec = ProposalSpec()
    methods: list[str]
    N: list[int]
    R: int = Field(ge=2)
    T: int | None = Field(None, ge=0)
    functions: list[str]
    seed: int = 0
    output: str = "smc-out"
    endpoints: bool = False
    timing: bool = False
    claims: list[Claim] = []

    @field_validator("methods")
    @classmethod
    def _methods(cls, v):
        bad = [m for m in v if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if len(set(v)) != len(v):
            raise ValueError("methods must be distinct")
        return v

    @field_validator("N")
    @classmethod
    def _grid(cls, v):
        if not v or any(n < 1 for n in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("N grid must be positive and strictly increasing")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        for name in self.functions:
            resolve(name)
        if len(set(self.functions)) != len(self.functions):
            raise ValueError("functions must be distinct")
        if self.T is not None and "observations" in self.model and len(self.model["observations"]) != self.T + 1:
            raise ValueError("T disagrees with the number of observations")
        ids = [c.id for c in self.claims]
        if len(set(ids)) != len(ids):
            raise ValueError("claim ids must be distinct")
        for c in self.claims:
            if c.h not in self.functions:
                raise ValueError(f"claim {c.id}: function {c.h!r} is not configured")
            used = [getattr(c, k) for k in ("method", "larger", "smaller") if hasattr(c, k)]
            used += getattr(c, "methods", None) or []
            missing = [m for m in used if m not in self.methods]
            if missing:
                raise ValueError(f"claim {c.id}: methods {missing} are not configured")
            n = getattr(c, "N", None)
            if n is not None and n not in self.N:
                raise ValueError(f"claim {c.id}: N={n} is not on the grid")
        return self

    def model_doc(self, horizon: int | None = None) -> dict[str, Any]:
        """Model document with the horizon applied (simulated or truncated records)."""
        doc = dict(self.model)
        T = self.T if horizon is None else horizon
        if T is None:
            return doc
        if "simulate" in doc:
            doc["simulate"] = {**doc["simulate"], "horizon": max(T, doc["simulate"].get("horizon", T))}
            return doc
        return doc

    def build_model(self, horizon: int | None = None) -> StateSpaceModel:
        """The model, cut to ``horizon`` (default ``T``) by keeping a prefix of the record."""
        model = model_from_dict(self.model_doc(horizon))
        T = self.T if horizon is None else horizon
        if T is not None and T != model.horizon:
            if T > model.horizon:
                raise ValueError(f"horizon {T} exceeds the {model.horizon + 1} available observations")
            doc = dict(self.model_doc(horizon))
            doc.pop("simulate", None)
            doc["observations"] = np.asarray(model.ys)[: T + 1].tolist()
            model = model_from_dict(doc)
        return model

    def build(self, horizon: int | None = None):
        model = self.build_model(horizon)
        gammas = self.gamma.build(model)
        proposals = self.proposals.build(model, gammas)
        return model, gammas, proposals


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.model_validate(json.loads(Path(path).read_text()))
