"""Verification statistics over replicate tables.

Each check returns its raw statistic, the threshold it was compared to
and a verdict.  The error bounds being probed involve constants that are
existential, so the checks target rates, monotonicity, normality, variance
ordering and time uniformity rather than the constants themselves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import DegenerateErrorSignal, InsufficientDataError, MixingViolationError
from ..model import MixingCertificate

Truth = Mapping[tuple[int, str], float]


def _errors(frame: pd.DataFrame, truth: Truth) -> pd.DataFrame:
    if frame["estimate"].isna().any():
        raise ValueError("table contains failed runs (NaN estimates)")
    ref = np.array([truth[(int(s), h)] for s, h in zip(frame["s"], frame["h_name"])])
    return frame.assign(error=frame["estimate"].to_numpy() - ref)


def _single(frame: pd.DataFrame, col: str, what: str):
    vals = frame[col].unique()
    if len(vals) != 1:
        raise ValueError(f"expected a single {what}, found {sorted(vals)}")
    return vals[0]


# ---------------------------------------------------------------------------
# rate


@dataclass(frozen=True)
class SlopeResult:
    slope: float
    ci: tuple[float, float]
    N: tuple[int, ...]
    rmse: tuple[float, ...]
    R: int


def _ols_slope(logn, logr):
    return float(np.polyfit(logn, logr, 1)[0])


def rmse_slope(frame: pd.DataFrame, truth: Truth, n_boot: int = 1000, seed: int = 0,
               min_grid: int = 4, min_R: int = 50) -> SlopeResult:
    """OLS slope of log RMSE(N) on log N with a percentile bootstrap CI.

    RMSE at each N pools every (s, h) row of the replicate.  The bootstrap
    resamples replicate seeds within each N.
    """
    e = _errors(frame, truth)
    grid = np.sort(e["N"].unique())
    if len(grid) < min_grid:
        raise InsufficientDataError(f"need at least {min_grid} N values, got {len(grid)}")
    per_seed = e.assign(sq=e["error"] ** 2).groupby(["N", "seed"])["sq"].mean()
    groups = [per_seed.loc[n].to_numpy() for n in grid]
    R = min(len(g) for g in groups)
    if R < min_R:
        raise InsufficientDataError(f"need at least {min_R} replicates per N, got {R}")
    mse = np.array([g.mean() for g in groups])
    if np.all(mse == 0):
        raise DegenerateErrorSignal("every replicate error is zero; no rate to estimate")
    if np.any(mse == 0):
        raise DegenerateErrorSignal("zero RMSE at some N; log-log fit undefined")
    logn = np.log(grid.astype(float))
    slope = _ols_slope(logn, 0.5 * np.log(mse))
    rng = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        m = np.array([g[rng.integers(0, len(g), len(g))].mean() for g in groups])
        boot[b] = _ols_slope(logn, 0.5 * np.log(np.maximum(m, np.finfo(float).tiny)))
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return SlopeResult(slope, (float(lo), float(hi)), tuple(int(n) for n in grid),
                       tuple(float(x) for x in np.sqrt(mse)), R)


# ---------------------------------------------------------------------------
# concentration


@dataclass(frozen=True)
class ExceedanceResult:
    N: tuple[int, ...]
    frequency: tuple[float, ...]
    sigma: tuple[float, ...]
    worst_excess: float
    monotone: bool
    R: int


def exceedance_curve(frame: pd.DataFrame, truth: Truth, eps: float) -> ExceedanceResult:
    """Fraction of replicates with |error| > eps at each N.

    The curve counts as non-increasing when every consecutive step obeys
    P_{k+1} <= P_k + 2 sqrt(s_k^2 + s_{k+1}^2), with s_k^2 = P_k (1 - P_k) / R_k.
    ``worst_excess`` is the largest step rise minus its band (<= 0 passes).
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    e = _errors(frame, truth)
    grid = np.sort(e["N"].unique())
    freq, sig, Rs = [], [], []
    for n in grid:
        err = e.loc[e["N"] == n, "error"].to_numpy()
        p = float(np.mean(np.abs(err) > eps))
        freq.append(p)
        sig.append(float(np.sqrt(p * (1 - p) / len(err))))
        Rs.append(len(err))
    excess = [freq[k + 1] - freq[k] - 2 * np.hypot(sig[k], sig[k + 1]) for k in range(len(grid) - 1)]
    worst = float(max(excess)) if excess else -np.inf
    return ExceedanceResult(tuple(int(n) for n in grid), tuple(freq), tuple(sig), worst, worst <= 0, min(Rs))


# ---------------------------------------------------------------------------
# normality


@dataclass(frozen=True)
class NormalityResult:
    skewness: float
    excess_kurtosis: float
    passed: bool
    R: int


def normality_check(sample, truth: Truth | None = None, max_skew: float = 0.3,
                    max_excess_kurtosis: float = 0.6, min_R: int = 200) -> NormalityResult:
    """Skewness and excess kurtosis of standardized replicate errors.

    ``sample`` is either a 1-D array of errors or a table restricted to one
    (method, N, s, h); in the latter case ``truth`` supplies the reference.
    """
    if isinstance(sample, pd.DataFrame):
        for col, what in (("method", "method"), ("N", "N"), ("s", "s"), ("h_name", "function")):
            _single(sample, col, what)
        x = _errors(sample, truth)["error"].to_numpy()
    else:
        x = np.asarray(sample, dtype=np.float64).ravel()
    if len(x) < min_R:
        raise InsufficientDataError(f"need at least {min_R} replicates, got {len(x)}")
    sd = x.std(ddof=1)
    if sd == 0:
        raise DegenerateErrorSignal("replicate errors have zero spread")
    z = (x - x.mean()) / sd
    sk = float(stats.skew(z))
    ku = float(stats.kurtosis(z))
    return NormalityResult(sk, ku, abs(sk) < max_skew and abs(ku) < max_excess_kurtosis, len(x))


# ---------------------------------------------------------------------------
# variance ordering


@dataclass(frozen=True)
class VarianceResult:
    ratio: float
    threshold: float
    passed: bool
    R: tuple[int, int]


def variance_compare(larger, smaller, level: float = 0.05, min_R: int = 200) -> VarianceResult:
    """One-sided check that Var(larger) >= Var(smaller) up to sampling noise.

    The ratio of sample variances is compared with the lower ``level``
    quantile of F(R1 - 1, R2 - 1), the largest value a true ratio of 1
    would undercut with probability ``level``.  Inputs are arrays of
    replicate estimates or tables for one (N, s, h) each.
    """
    a, b = _estimates(larger, smaller)
    if min(len(a), len(b)) < min_R:
        raise InsufficientDataError(f"need at least {min_R} replicates, got {min(len(a), len(b))}")
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    if vb == 0:
        raise DegenerateErrorSignal("reference variance is zero")
    ratio = float(va / vb)
    thr = float(stats.f.ppf(level, len(a) - 1, len(b) - 1))
    return VarianceResult(ratio, thr, ratio >= thr, (len(a), len(b)))


def _estimates(x, y):
    if isinstance(x, pd.DataFrame) != isinstance(y, pd.DataFrame):
        raise ValueError("compare two tables or two arrays")
    if not isinstance(x, pd.DataFrame):
        return np.asarray(x, dtype=np.float64).ravel(), np.asarray(y, dtype=np.float64).ravel()
    for col, what in (("N", "N"), ("s", "s"), ("h_name", "function")):
        if _single(x, col, what) != _single(y, col, what):
            raise ValueError(f"mismatched configurations: {what} differs")
    return x["estimate"].to_numpy(), y["estimate"].to_numpy()


# ---------------------------------------------------------------------------
# uniformity in time


@dataclass(frozen=True)
class UniformityResult:
    max_rmse_T1: float
    max_rmse_T2: float
    ratio: float
    factor: float
    passed: bool
    R: int


def _max_rmse(frame, truth):
    e = _errors(frame, truth)
    return float(np.sqrt((e["error"] ** 2).groupby([e["s"], e["h_name"]]).mean()).max()), e["seed"].nunique()


def time_uniformity(frame_T1: pd.DataFrame, truth_T1: Truth, frame_T2: pd.DataFrame, truth_T2: Truth,
                    factor: float = 1.5, certificate: MixingCertificate | None = None) -> UniformityResult:
    """max_s RMSE at the longer horizon against ``factor`` times that at the shorter one."""
    if certificate is not None and not certificate.valid:
        raise MixingViolationError(f"mixing certificate invalid: {certificate.violations}", certificate)
    for f in (frame_T1, frame_T2):
        _single(f, "method", "method")
        _single(f, "N", "N")
    r1, n1 = _max_rmse(frame_T1, truth_T1)
    r2, n2 = _max_rmse(frame_T2, truth_T2)
    if r1 == 0:
        raise DegenerateErrorSignal("zero error at the shorter horizon")
    ratio = r2 / r1
    return UniformityResult(r1, r2, ratio, factor, ratio <= factor, min(n1, n2))


# ---------------------------------------------------------------------------
# oracle agreement


@dataclass(frozen=True)
class AgreementResult:
    statistic: float
    threshold: float
    passed: bool
    worst: dict = field(default_factory=dict)
    R: int = 0


def oracle_agreement(frame: pd.DataFrame, truth: Truth, n_se: float = 5.0) -> AgreementResult:
    """max over (method, s, h) of |mean estimate - truth| / (replicate standard error)."""
    e = _errors(frame, truth)
    g = e.groupby(["method", "N", "s", "h_name"])["error"]
    z = g.mean().abs() / (g.std(ddof=1) / np.sqrt(g.count()))
    z = z.fillna(np.inf).where(g.std(ddof=1) > 0, np.where(g.mean().abs() > 0, np.inf, 0.0))
    key = z.idxmax()
    return AgreementResult(float(z.max()), n_se, bool(z.max() <= n_se),
                           dict(zip(["method", "N", "s", "h_name"], map(_plain, key))), int(g.count().min()))


def cross_agreement(frame: pd.DataFrame, tol: float = 0.02, fraction: float = 0.95) -> AgreementResult:
    """Per method pair, the fraction of seeds whose gap stays below ``tol``; the statistic is the worst pair.

    A seed's gap for a pair is the largest difference over s and h.  The
    fraction of seeds on which *all* pairs agree at once is reported as
    ``joint_fraction`` but not judged: with several methods it falls below
    the per-pair value even for exact i.i.d. samplers.
    """
    if frame["estimate"].isna().any():
        raise ValueError("table contains failed runs (NaN estimates)")
    wide = frame.pivot_table(index=["N", "seed", "s", "h_name"], columns="method", values="estimate")
    methods = list(wide.columns)
    if len(methods) < 2:
        raise InsufficientDataError("cross agreement needs at least two methods")
    worst_pair, worst_frac, pair_gaps = None, np.inf, []
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            per_seed = (wide[a] - wide[b]).abs().groupby(["N", "seed"]).max()
            pair_gaps.append(per_seed)
            frac = float((per_seed < tol).mean())
            if frac < worst_frac:
                worst_pair, worst_frac = (a, b), frac
    joint = pd.concat(pair_gaps, axis=1).max(axis=1)
    details = {"pair": list(worst_pair), "max_gap": float(joint.max()), "joint_fraction": float((joint < tol).mean())}
    return AgreementResult(worst_frac, fraction, worst_frac >= fraction, details, int(joint.size))


def _plain(v):
    return v.item() if hasattr(v, "item") else v


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class ReportEntry:
    claim: str
    statistic: float
    threshold: float | list
    passed: bool
    details: dict

    def to_json(self) -> dict:
        return {"claim": self.claim, "statistic": _finite(self.statistic), "threshold": _finite(self.threshold),
                "pass": bool(self.passed), "details": _finite(self.details)}


def _finite(v):
    # strict JSON has no NaN or infinity
    if isinstance(v, dict):
        return {k: _finite(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite(x) for x in v]
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def details_of(result) -> dict:
    d = asdict(result) if hasattr(result, "__dataclass_fields__") else dict(result)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
