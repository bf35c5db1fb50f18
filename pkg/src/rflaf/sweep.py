"""Sweeps over schemes, feature counts and seeds, with per-S summaries."""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .errors import InvalidArgument
from .pipeline import LWS, PS, PipelineConfig, run_scheme

FULL_S = (30, 50, 100, 300, 500, 1000)
FULL_POOLS = (3000, 5000)
DESK_POOLS = (300, 500)
CONFIDENCE = 0.8

COLUMNS = ["kind", "scheme", "S", "s", "seed", "train_loss", "test_loss", "d_eff",
           "status", "error", "n_ok", "mean", "ci_lo", "ci_hi"]


@dataclass
class SweepSpec:
    schemes: list = field(default_factory=lambda: [LWS, PS])
    S_values: list = field(default_factory=lambda: list(FULL_S))
    pool_sizes: list = field(default_factory=lambda: list(DESK_POOLS))
    seeds: int = 8
    dataset: Optional[str] = None
    base: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if not self.schemes or not self.S_values or not self.pool_sizes:
            raise InvalidArgument("schemes, S values and pool sizes must be non-empty")
        if self.seeds < 1:
            raise InvalidArgument("need at least one seed")
        bad = set(self.schemes) - {LWS, PS}
        if bad:
            raise InvalidArgument(f"unknown schemes {sorted(bad)}")

    def cells(self):
        """``(scheme, S, s, seed)`` tuples; the plain scheme ignores the pool size."""
        out = []
        for scheme in self.schemes:
            pools = self.pool_sizes if scheme == LWS else [None]
            for s in pools:
                for S in self.S_values:
                    for seed in range(self.seeds):
                        out.append((scheme, S, s, seed))
        return out


def _run_cell(args):
    scheme, S, s, seed, base, train, test = args
    cfg = replace(base, S=S, s=s if s is not None else base.s, seed=seed)
    row = {"kind": "cell", "scheme": scheme, "S": S, "s": "" if s is None else s, "seed": seed}
    t = time.perf_counter()
    try:
        _, rep = run_scheme(scheme, train, test, cfg)
        row.update(train_loss=rep.train_loss, test_loss=rep.test_loss, d_eff=rep.d_eff,
                   status="ok", error="")
    except Exception as exc:  # a failed cell is recorded and the sweep goes on
        row.update(train_loss="", test_loss="", d_eff="", status="error",
                   error=f"{type(exc).__name__}: {exc}")
    row["secs"] = time.perf_counter() - t
    return row


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("RFLAF_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, train, test, workers: Optional[int] = None) -> list[dict]:
    """Run every cell; rows come back in cell order regardless of worker count."""
    jobs = [(sc, S, s, seed, spec.base, train, test) for sc, S, s, seed in spec.cells()]
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        rows = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_cell, jobs))
    return rows + summarize(rows)


def interval(values, confidence: float = CONFIDENCE):
    """Mean and two-sided Student-t interval of the mean."""
    x = np.asarray(values, dtype=float)
    mean = float(np.mean(x))
    if x.size < 2:
        return mean, mean, mean
    half = stats.t.ppf(0.5 + confidence / 2, x.size - 1) * np.std(x, ddof=1) / np.sqrt(x.size)
    return mean, float(mean - half), float(mean + half)


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict = {}
    for r in rows:
        if r["kind"] != "cell":
            continue
        groups.setdefault((r["scheme"], r["S"], r["s"]), []).append(r)
    out = []
    for (scheme, S, s), cells in groups.items():
        ok = [c["test_loss"] for c in cells if c["status"] == "ok"]
        row = {"kind": "summary", "scheme": scheme, "S": S, "s": s, "n_ok": len(ok)}
        if ok:
            row["mean"], row["ci_lo"], row["ci_hi"] = interval(ok)
        out.append(row)
    return out


def write_csv(rows: list[dict], path, timing: bool = False) -> None:
    """Write cells and summaries; wall-clock seconds only with ``timing``."""
    cols = COLUMNS + (["secs"] if timing else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
