"""Replicated runs and the replicate table."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..particles import estimate
from ..rng import replicate_seed
from ..smoothing import run_passes, smooth_methods
from .config import ExperimentConfig
from .registry import resolve

log = logging.getLogger(__name__)

COLUMNS = ["method", "N", "s", "seed", "h_name", "estimate", "wall_time_ns"]
KEY = ["method", "N", "s", "seed", "h_name"]


@dataclass
class ReplicateTable:
    """Rows of ``method,N,s,seed,h_name,estimate,wall_time_ns``.

    ``errors`` lists the (method, N, seed, message) of failed runs; their
    rows carry NaN estimates.
    """

    frame: pd.DataFrame
    errors: list = field(default_factory=list)

    def __post_init__(self):
        missing = set(COLUMNS) - set(self.frame.columns)
        if missing:
            raise ValueError(f"missing columns {sorted(missing)}")
        self.frame = self.frame[COLUMNS].astype(
            {"method": str, "N": np.int64, "s": np.int64, "seed": np.int64, "h_name": str,
             "estimate": np.float64, "wall_time_ns": np.int64}
        ).reset_index(drop=True)
        if self.frame.duplicated(KEY).any():
            raise ValueError("duplicate (method, N, s, seed, h_name) rows")

    def __len__(self):
        return len(self.frame)

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path) -> "ReplicateTable":
        return cls(pd.read_csv(path, dtype={"method": str, "h_name": str}, float_precision="round_trip"))

    def select(self, **eq) -> pd.DataFrame:
        f = self.frame
        for k, v in eq.items():
            if v is not None:
                f = f[f[k] == v]
        return f


def worker_count() -> int:
    raw = os.environ.get("SMC_THREADS")
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError("SMC_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


def _one_replicate(model, gammas, proposals, methods, N, seed, functions, times, timing):
    rows, errors = [], []
    try:
        t0 = time.perf_counter_ns()
        passes = run_passes(model, gammas, proposals, N, seed)
        pass_ns = time.perf_counter_ns() - t0
    except Exception as exc:  # noqa: BLE001 - recorded per row, the run goes on
        return _failed(methods, N, seed, functions, times, exc), [(m, N, seed, repr(exc)) for m in methods]
    groups = [[m] for m in methods] if timing else [methods]
    for group in groups:
        try:
            t0 = time.perf_counter_ns()
            out = smooth_methods(passes, model, gammas, proposals, group, times=times)
            ns = pass_ns + time.perf_counter_ns() - t0 if timing else 0
        except Exception as exc:  # noqa: BLE001
            rows += _failed(group, N, seed, functions, times, exc)
            errors += [(m, N, seed, repr(exc)) for m in group]
            continue
        for m in group:
            for s, ps in out[m].items():
                for h in functions:
                    rows.append((m, N, s, seed, h.name, estimate(ps, h), ns))
    return rows, errors


def _failed(methods, N, seed, functions, times, exc):
    log.warning("run failed (N=%d, seed=%d): %r", N, seed, exc)
    return [(m, N, s, seed, h.name, np.nan, 0) for m in methods for s in times for h in functions]


def run_replicates(config: ExperimentConfig, model=None, methods=None, N_grid=None) -> ReplicateTable:
    """Run every (N, replicate) job and collect estimates for each method, s and h.

    Replicate r uses seed ``replicate_seed(config.seed, r)``, shared by all
    methods and all N, so one forward and one backward pass serve every
    method.  Jobs run on ``SMC_THREADS`` workers and are merged in job order.
    ``wall_time_ns`` is 0 unless ``config.timing`` is set.
    """
    if model is None:
        model, gammas, proposals = config.build()
    else:
        gammas = config.gamma.build(model)
        proposals = config.proposals.build(model, gammas)
    methods = list(methods or config.methods)
    T = model.horizon
    times = list(range(0, T + 1)) if config.endpoints else list(range(1, T))
    if T == 0:
        times = [0]
    functions = [resolve(h) for h in config.functions]
    jobs = [(N, replicate_seed(config.seed, r)) for N in (N_grid or config.N) for r in range(config.R)]

    def job(args):
        N, seed = args
        return _one_replicate(model, gammas, proposals, methods, N, seed, functions, times, config.timing)

    workers = min(worker_count(), len(jobs)) or 1
    if workers == 1:
        results = [job(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, jobs))
    rows = [r for rs, _ in results for r in rs]
    errors = [e for _, es in results for e in es]
    frame = pd.DataFrame(rows, columns=COLUMNS)
    return ReplicateTable(frame, errors)


def write_outputs(table: ReplicateTable, out_dir: str | Path, name: str = "table.csv") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    table.to_csv(path)
    return path
