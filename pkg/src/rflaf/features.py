"""Random feature pools, ridge leverage scores and weighted resampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegeneratePoolError, InvalidArgument

POOL_SCALED = "pool"
UNSCALED = "unscaled"
Q_MODES = (POOL_SCALED, UNSCALED)


@dataclass(frozen=True)
class FeaturePool:
    """Columns of ``W`` are i.i.d. draws from the standard normal density."""

    W: np.ndarray
    seed: Optional[int] = None
    density: str = "standard_normal"

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def s(self) -> int:
        return self.W.shape[1]


def sample_pool(d: int, s: int, seed) -> FeaturePool:
    if d < 1 or s < 1:
        raise InvalidArgument(f"pool needs d >= 1 and s >= 1, got d={d}, s={s}")
    W = np.random.default_rng(seed).standard_normal((d, s))
    return FeaturePool(W, seed)


@dataclass(frozen=True)
class LeverageWeights:
    q: np.ndarray
    raw: np.ndarray
    lam: float

    def summary(self) -> dict:
        q = self.q
        nz = q[q > 0]
        return {
            "q_min": float(q.min()),
            "q_max": float(q.max()),
            "q_entropy": float(-np.sum(nz * np.log(nz))),
        }


def leverage_weights(Z: np.ndarray, lam: float, n: Optional[int] = None) -> LeverageWeights:
    """Ridge leverage of every pool column.

    ``raw[i]`` is the i-th diagonal entry of ``Z^T Z ((1/s) Z^T Z + n lam I)^{-1}``.
    When ``n < s`` the identical diagonal is computed through the n x n
    form ``Z^T ((1/s) Z Z^T + n lam I)^{-1} Z``.
    """
    if not lam > 0:
        raise InvalidArgument(f"leverage needs lam > 0, got {lam}")
    Z = np.asarray(Z, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise InvalidArgument("feature matrix has non-finite entries")
    rows, s = Z.shape
    n = rows if n is None else n
    shift = n * lam
    if rows < s:
        A = Z @ Z.T / s + shift * np.eye(rows)
        raw = np.einsum("ij,ij->j", Z, cho_solve(cho_factor(A), Z))
    else:
        M = Z.T @ Z
        A = M / s + shift * np.eye(s)
        # M and A commute, so diag(M A^{-1}) = diag(A^{-1} M)
        raw = np.diag(cho_solve(cho_factor(A), M)).copy()
    raw = np.maximum(raw, 0.0)
    total = raw.sum()
    if not total > 0:
        raise DegeneratePoolError("all leverage scores are zero; the activation is degenerate")
    return LeverageWeights(raw / total, raw, float(lam))


@dataclass(frozen=True)
class WeightedFeatures:
    """Selected feature directions and their importance weights.

    ``Q`` stores the diagonal of the weight matrix.
    """

    W: np.ndarray
    Q: np.ndarray
    source_indices: np.ndarray

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def S(self) -> int:
        return self.W.shape[1]

    @property
    def Q_matrix(self) -> np.ndarray:
        return np.diag(self.Q)

    def save(self, path) -> None:
        np.savez(path, d=self.d, S=self.S, W=self.W, Q=self.Q,
                 source_indices=self.source_indices)

    @classmethod
    def load(cls, path) -> "WeightedFeatures":
        with np.load(path) as f:
            W = f["W"]
            if W.shape != (int(f["d"]), int(f["S"])):
                raise InvalidArgument("stored feature shape disagrees with its header")
            return cls(W, f["Q"], f["source_indices"])


def plain_features(pool: FeaturePool) -> WeightedFeatures:
    return WeightedFeatures(pool.W, np.ones(pool.s), np.arange(pool.s))


def importance_weights(q: np.ndarray, s: int, q_mode: str = POOL_SCALED) -> np.ndarray:
    """Diagonal of the weight matrix for selection probabilities ``q``."""
    if q_mode == POOL_SCALED:
        return np.sqrt(1.0 / (s * q))
    if q_mode == UNSCALED:
        return np.sqrt(1.0 / q)
    raise InvalidArgument(f"unknown q_mode {q_mode!r}")


def resample_weighted(pool: FeaturePool, weights: LeverageWeights, S: int, seed,
                      q_mode: str = POOL_SCALED) -> WeightedFeatures:
    """Draw ``S`` pool columns i.i.d. from ``q`` (with replacement)."""
    if S < 1:
        raise InvalidArgument(f"need S >= 1, got {S}")
    q = weights.q
    if q.shape != (pool.s,):
        raise InvalidArgument("weights do not match the pool size")
    if q_mode not in Q_MODES:
        raise InvalidArgument(f"unknown q_mode {q_mode!r}")
    idx = np.random.default_rng(seed).choice(pool.s, size=S, replace=True, p=q)
    return select_features(pool, q, idx, q_mode)


def select_features(pool: FeaturePool, q: np.ndarray, indices, q_mode: str = POOL_SCALED) -> WeightedFeatures:
    idx = np.asarray(indices, dtype=np.int64)
    Q = importance_weights(q[idx], pool.s, q_mode)
    return WeightedFeatures(pool.W[:, idx], Q, idx)
