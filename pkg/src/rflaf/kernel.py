"""Feature matrices, Gram matrices, effective dimension and spectrum bounds."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .basis import BasisConfig, eval_basis
from .errors import InvalidArgument, NumericError

CLAMP_TOL = 1e-10


def projections(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    P = np.asarray(X, dtype=float) @ np.asarray(W, dtype=float)
    bad = np.argwhere(~np.isfinite(P))
    if bad.size:
        i, j = bad[0]
        raise NumericError(f"non-finite projection at sample {i}, feature {j}")
    return P


def basis_tensor(X: np.ndarray, W: np.ndarray, cfg: BasisConfig) -> np.ndarray:
    """``Phi[i, j, k] = B_k(w_j^T x_i)``, shape ``(n, s, N)``."""
    return eval_basis(cfg, projections(X, W))


def feature_matrix(X: np.ndarray, features, coeffs, cfg: BasisConfig) -> np.ndarray:
    """``Z[i, j] = Q_j * sum_k a_k B_k(w_j^T x_i)``.

    ``features`` is a :class:`WeightedFeatures` or a :class:`FeaturePool`
    (unit weights).
    """
    a = getattr(coeffs, "a", coeffs)
    a = np.asarray(a, dtype=float)
    if a.shape != (cfg.n_grid,):
        raise InvalidArgument(f"expected {cfg.n_grid} coefficients, got shape {a.shape}")
    Q = getattr(features, "Q", None)
    Z = basis_tensor(X, features.W, cfg) @ a
    if Q is not None:
        Z = Z * Q
    return Z


def gram_empirical(Z: np.ndarray, s: Optional[int] = None) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if s is None:
        s = Z.shape[1]
    if s != Z.shape[1]:
        raise InvalidArgument(f"s={s} but the feature matrix has {Z.shape[1]} columns")
    K = Z @ Z.T / s
    return 0.5 * (K + K.T)


def clamp_spectrum(eigs: np.ndarray) -> np.ndarray:
    eigs = np.asarray(eigs, dtype=float)
    if eigs.size == 0:
        return eigs
    top = max(float(eigs.max()), 0.0)
    if eigs.min() < -CLAMP_TOL * top or (top == 0.0 and eigs.min() < 0):
        raise NumericError(f"eigenvalue {eigs.min():.3e} is too negative for a PSD matrix")
    return np.maximum(eigs, 0.0)


def effective_dimension(eigs, lam: float) -> float:
    """``sum_m eig_m / (eig_m + lam)``; with ``lam = 0`` this is the rank."""
    if lam < 0:
        raise InvalidArgument("lam must be nonnegative")
    e = clamp_spectrum(eigs)
    if lam == 0:
        top = e.max() if e.size else 0.0
        return float(np.count_nonzero(e > CLAMP_TOL * top)) if top > 0 else 0.0
    return float(np.sum(e / (e + lam)))


def effective_dimension_trace(K: np.ndarray, lam: float) -> float:
    """Cross-check path: ``Tr[K (K + n lam I)^{-1}]`` via a Cholesky solve."""
    if not lam > 0:
        raise InvalidArgument("the trace path needs lam > 0")
    n = K.shape[0]
    A = K + n * lam * np.eye(n)
    return float(np.trace(cho_solve(cho_factor(A), K)))


def gram_eigenvalues(K: np.ndarray) -> np.ndarray:
    """Non-increasing, clamped eigenvalues of ``K / n``."""
    n = K.shape[0]
    return clamp_spectrum(eigh(K / n, eigvals_only=True)[::-1])


def feature_eigenvalues(Z: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``(1/s) Z Z^T / n`` through the smaller Gram side.

    Zero eigenvalues beyond ``min(n, s)`` are omitted; they do not change
    the effective dimension.
    """
    n, s = Z.shape
    G = Z.T @ Z if s < n else Z @ Z.T
    G = 0.5 * (G + G.T)
    return clamp_spectrum(eigh(G / (s * n), eigvals_only=True)[::-1])


def check_regularization(eigs: np.ndarray, lam: float) -> bool:
    """Warn when ``lam`` exceeds the leading eigenvalue of the normalised Gram."""
    top = float(np.max(eigs)) if len(eigs) else 0.0
    if lam > top:
        warnings.warn(f"lam={lam:.3g} exceeds the top Gram eigenvalue {top:.3g}; "
                      "the model will underfit", RuntimeWarning, stacklevel=2)
        return False
    return True


@dataclass
class GramSummary:
    eigenvalues: np.ndarray
    lam: float
    d_eff: float

    @classmethod
    def from_gram(cls, K: np.ndarray, lam: float) -> "GramSummary":
        eigs = gram_eigenvalues(K)
        return cls(eigs, lam, effective_dimension(eigs, lam))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue"])
            for i, e in enumerate(self.eigenvalues, start=1):
                w.writerow([i, repr(float(e))])


FINITE_RANK = "finite_rank"
EXPONENTIAL = "exponential"
POLYNOMIAL = "polynomial"
HARMONIC = "harmonic"


@dataclass(frozen=True)
class SpectrumRegime:
    """Eigenvalue decay profile of a normalised Gram matrix.

    ``c`` is the scale constant (``c1``, ``c2`` or ``c3``) of the profile.
    """

    kind: str
    r: Optional[int] = None
    A: Optional[float] = None
    t: Optional[float] = None
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidArgument("spectrum constant must be positive")
        if self.kind == FINITE_RANK:
            if self.r is None or self.r < 1:
                raise InvalidArgument("finite rank needs r >= 1")
        elif self.kind == EXPONENTIAL:
            if self.A is None or not 0 < self.A < 1:
                raise InvalidArgument("exponential decay needs A in (0, 1)")
        elif self.kind == POLYNOMIAL:
            if self.t is None or not self.t > 1:
                raise InvalidArgument("polynomial decay needs t > 1")
        elif self.kind != HARMONIC:
            raise InvalidArgument(f"unknown spectrum regime {self.kind!r}")

    @classmethod
    def finite_rank(cls, r: int, c: float = 1.0):
        return cls(FINITE_RANK, r=r, c=c)

    @classmethod
    def exponential(cls, A: float, c1: float = 1.0):
        return cls(EXPONENTIAL, A=A, c=c1)

    @classmethod
    def polynomial(cls, t: float, c2: float = 1.0):
        return cls(POLYNOMIAL, t=t, c=c2)

    @classmethod
    def harmonic(cls, c3: float = 1.0):
        return cls(HARMONIC, c=c3)

    def profile(self, n: int) -> np.ndarray:
        """Planted eigenvalues ``lambda_1 >= ... >= lambda_n``."""
        m = np.arange(1, n + 1, dtype=float)
        if self.kind == FINITE_RANK:
            if self.r > n:
                raise InvalidArgument(f"rank {self.r} exceeds n={n}")
            out = np.zeros(n)
            out[: self.r] = self.c * (self.r - m[: self.r] + 1) / self.r
            return out
        if self.kind == EXPONENTIAL:
            return self.c * self.A ** m
        if self.kind == POLYNOMIAL:
            return self.c * m ** (-self.t)
        return self.c / m


def spectrum_bound(regime: SpectrumRegime, lam: float, n: int, C: float = 1.0) -> float:
    """Order-of-magnitude upper bound on the effective dimension per regime.

    ``C`` is the regime's unspecified constant. Harmonic decay uses the
    explicit partial-sum bound ``(c3 / lam) log n + 1``, which holds with
    ``C = 1``.
    """
    if not lam > 0:
        raise InvalidArgument("lam must be positive")
    if regime.kind == FINITE_RANK:
        return C * regime.r
    if regime.kind == EXPONENTIAL:
        return C * np.log(1.0 / lam)
    if regime.kind == POLYNOMIAL:
        return C * (1.0 / lam) ** (1.0 / regime.t)
    return C * ((regime.c / lam) * np.log(n) + 1.0)
