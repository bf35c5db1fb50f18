"""Ridge solves, losses and stochastic gradient training of the bilinear model.

The model output is ``F = Z(a) v`` with ``Z(a)[i, j] = Q_j sum_k a_k Phi[i, j, k]``
where ``Phi[i, j, k] = B_k(w_j^T x_i)``. Two objectives are trained:

* ``MAIN``:    mean loss + ``lam * S * |v|^2``, with ``|a| <= R`` enforced by
  projection after every step;
* ``SENSING``: mean loss + ``lam0 * (|a|^2 - |v|^2)^2``, unconstrained.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from .basis import BasisConfig, radius_bound
from .errors import DivergenceError, InvalidArgument, NumericError
from .kernel import basis_tensor

MSE = "mse"
CROSS_ENTROPY = "cross_entropy"
LOSSES = (MSE, CROSS_ENTROPY)

MAIN = "main"
SENSING = "sensing"
OBJECTIVES = (MAIN, SENSING)

_CE_SCALE = 1.0 / np.sqrt(2.0)


# ---------------------------------------------------------------- ridge ---

def _check_lam(lam):
    if not lam > 0:
        raise InvalidArgument(f"ridge needs lam > 0, got {lam}")


def ridge_solve(Z: np.ndarray, y: np.ndarray, lam: float,
                s: Optional[int] = None, n: Optional[int] = None) -> np.ndarray:
    """Minimiser of ``(1/n)|Z v - y|^2 + lam s |v|^2`` from the s x s system."""
    _check_lam(lam)
    rows, cols = Z.shape
    s = cols if s is None else s
    n = rows if n is None else n
    A = Z.T @ Z + lam * n * s * np.eye(cols)
    try:
        return cho_solve(cho_factor(A), Z.T @ y)
    except LinAlgError as exc:
        raise NumericError("ridge normal equations failed to factor") from exc


def ridge_solve_dual(Z: np.ndarray, y: np.ndarray, lam: float,
                     s: Optional[int] = None, n: Optional[int] = None) -> np.ndarray:
    """Same minimiser through the n x n system ``(1/s) Z^T ((1/s) Z Z^T + n lam I)^{-1} y``."""
    _check_lam(lam)
    rows, cols = Z.shape
    s = cols if s is None else s
    n = rows if n is None else n
    A = Z @ Z.T / s + n * lam * np.eye(rows)
    try:
        return Z.T @ cho_solve(cho_factor(A), y) / s
    except LinAlgError as exc:
        raise NumericError("dual ridge system failed to factor") from exc


def ridge_objective(Z, y, v, lam, s=None) -> float:
    s = Z.shape[1] if s is None else s
    r = Z @ v - y
    return float(np.sum(r * r) / Z.shape[0] + lam * s * np.sum(v * v))


# --------------------------------------------------------------- losses ---

def _as_labels(labels, n_out):
    labels = np.asarray(labels)
    if n_out == 1:
        if np.any((labels != 0) & (labels != 1)):
            raise InvalidArgument("binary labels must be 0 or 1")
        return labels.astype(float)
    lab = labels.astype(np.int64)
    if np.any(lab != labels) or lab.min() < 0 or lab.max() >= n_out:
        raise InvalidArgument(f"class labels must be integers in [0, {n_out})")
    return lab


def loss_eval(kind: str, predictions, labels) -> float:
    """Mean loss.

    Cross-entropy takes logits: a 1-D array is the binary logistic loss with
    labels in {0, 1}; an ``(n, C)`` array is softmax cross-entropy scaled by
    ``1/sqrt(2)`` so that each sample's loss is 1-Lipschitz in the logits.
    """
    pred = np.asarray(predictions, dtype=float)
    if kind == MSE:
        labels = np.asarray(labels, dtype=float)
        if pred.shape != labels.shape:
            raise InvalidArgument(f"shape mismatch {pred.shape} vs {labels.shape}")
        diff = (pred - labels).reshape(pred.shape[0], -1)
        return float(np.mean(np.sum(diff * diff, axis=1)))
    if kind == CROSS_ENTROPY:
        if pred.ndim == 1:
            y = _as_labels(labels, 1)
            return float(np.mean(np.logaddexp(0.0, pred) - y * pred))
        lab = _as_labels(labels, pred.shape[1])
        per = logsumexp(pred, axis=1) - pred[np.arange(pred.shape[0]), lab]
        return float(_CE_SCALE * np.mean(per))
    raise InvalidArgument(f"unknown loss {kind!r}")


def loss_grad(kind: str, predictions: np.ndarray, labels) -> np.ndarray:
    """Gradient of :func:`loss_eval` with respect to the predictions."""
    pred = np.asarray(predictions, dtype=float)
    n = pred.shape[0]
    if kind == MSE:
        return 2.0 * (pred - np.asarray(labels, dtype=float)) / n
    if pred.ndim == 1:
        y = _as_labels(labels, 1)
        return (0.5 * (1.0 + np.tanh(0.5 * pred)) - y) / n
    lab = _as_labels(labels, pred.shape[1])
    p = np.exp(pred - logsumexp(pred, axis=1, keepdims=True))
    p[np.arange(n), lab] -= 1.0
    return _CE_SCALE * p / n


def ridge_targets(kind: str, labels, n_classes: Optional[int] = None) -> np.ndarray:
    """Real-valued targets used to warm-start ``v`` by a ridge solve."""
    if kind == MSE:
        return np.asarray(labels, dtype=float)
    labels = np.asarray(labels).astype(np.int64)
    if n_classes is None or n_classes <= 2:
        return 2.0 * labels - 1.0
    return np.eye(n_classes)[labels]


# ------------------------------------------------------- bilinear model ---

class BilinearObjective:
    """Objective and analytic gradients over a fixed basis tensor."""

    def __init__(self, objective: str, Phi: np.ndarray, Q: np.ndarray, y,
                 loss: str = MSE, lam: float = 0.0, lam0: float = 0.0):
        if objective not in OBJECTIVES:
            raise InvalidArgument(f"unknown objective {objective!r}")
        if loss not in LOSSES:
            raise InvalidArgument(f"unknown loss {loss!r}")
        self.objective = objective
        self.Phi = Phi
        self.Q = np.asarray(Q, dtype=float)
        self.y = np.asarray(y)
        self.loss = loss
        self.lam = float(lam)
        self.lam0 = float(lam0)
        self.S = Phi.shape[1]

    def features(self, a, idx=None) -> np.ndarray:
        Phi = self.Phi if idx is None else self.Phi[idx]
        return (Phi @ a) * self.Q

    def penalty(self, a, v) -> float:
        if self.objective == MAIN:
            return self.lam * self.S * float(np.sum(v * v))
        gap = float(a @ a - np.sum(v * v))
        return self.lam0 * gap * gap

    def value(self, a, v) -> float:
        F = self.features(a) @ v
        return loss_eval(self.loss, F, self.y) + self.penalty(a, v)

    def gradient(self, a, v, idx=None):
        """Return ``(grad_a, grad_v)`` of the (mini-batch) objective."""
        Phi = self.Phi if idx is None else self.Phi[idx]
        y = self.y if idx is None else self.y[idx]
        Z = (Phi @ a) * self.Q
        g = loss_grad(self.loss, Z @ v, y)
        gv = Z.T @ g
        u = self.Q[:, None] * v.reshape(self.S, -1)
        M = g.reshape(g.shape[0], -1) @ u.T
        ga = np.tensordot(M, Phi, axes=([0, 1], [0, 1]))
        if self.objective == MAIN:
            gv = gv + 2.0 * self.lam * self.S * v
        else:
            gap = float(a @ a - np.sum(v * v))
            ga = ga + 4.0 * self.lam0 * gap * a
            gv = gv - 4.0 * self.lam0 * gap * v
        return ga, gv

    def a_lipschitz(self, v) -> float:
        """Lipschitz constant of the MSE objective's a-gradient at fixed ``v``."""
        u = self.Q[:, None] * v.reshape(self.S, -1)
        G = np.einsum("ijk,jc->ick", self.Phi, u).reshape(-1, self.Phi.shape[2])
        top = np.linalg.eigvalsh(G.T @ G)[-1]
        return 2.0 * float(top) / self.Phi.shape[0]


def project_ball(a: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(a))
    if norm > radius:
        return a * (radius / norm)
    return a


@dataclass
class SgdConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    radius: Optional[float] = None
    radius_scale: float = 1.0
    lam0: float = 1e-3
    refresh_v: bool = False
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgument("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgument("epochs must be >= 0 and batch_size >= 1")
        if self.lam0 < 0:
            raise InvalidArgument("lam0 must be nonnegative")
        if self.radius is not None and not self.radius > 0:
            raise InvalidArgument("radius must be positive")


@dataclass
class SgdResult:
    a: np.ndarray
    v: np.ndarray
    trace: list = field(default_factory=list)
    a_history: list = field(default_factory=list)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([row["objective"] for row in self.trace])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "objective", "grad_norm"])
            w.writeheader()
            w.writerows(self.trace)


def init_coefficients(n_grid: int, radius: float, rng) -> np.ndarray:
    """Uniform draw on ``[-R/sqrt(N), R/sqrt(N)]^N`` projected onto the R-ball."""
    half = radius / np.sqrt(n_grid)
    return project_ball(rng.uniform(-half, half, size=n_grid), radius)


def sgd_joint(objective: str, X: np.ndarray, y, features, basis: BasisConfig,
              cfg: SgdConfig, loss: str = MSE, lam: Optional[float] = None,
              a0=None, v0=None, train_a: bool = True, train_v: bool = True, n_classes: Optional[int] = None,
              Phi: Optional[np.ndarray] = None) -> SgdResult:
    """Train ``(a, v)`` on one of the two bilinear objectives.

    ``lam`` is the ridge weight of the ``MAIN`` objective and also the ridge
    used to warm-start ``v`` when ``v0`` is not given. ``train_a`` and
    ``train_v`` freeze either factor. ``Phi`` may be passed
    to reuse a precomputed basis tensor.
    """
    if Phi is None:
        Phi = basis_tensor(X, features.W, basis)
    n = Phi.shape[0]
    if lam is None:
        lam = 1.0 / np.sqrt(n)
    rng = np.random.default_rng(cfg.seed)
    radius = cfg.radius if cfg.radius is not None else radius_bound(basis, cfg.radius_scale)
    constrained = objective == MAIN
    prob = BilinearObjective(objective, Phi, features.Q, y, loss, lam, cfg.lam0)

    if a0 is None:
        a = init_coefficients(basis.n_grid, radius, rng)
    else:
        a = np.array(a0, dtype=float)
        if constrained:
            a = project_ball(a, radius)
    targets = ridge_targets(loss, y, n_classes)
    if v0 is None:
        v = ridge_solve(prob.features(a), targets, lam)
    else:
        v = np.array(v0, dtype=float)
    if cfg.refresh_v and loss != MSE:
        raise InvalidArgument("refreshing v in closed form needs the MSE loss")

    full_batch = cfg.batch_size >= n
    cap_step = full_batch and loss == MSE and objective == MAIN
    result = SgdResult(a, v)

    def record(epoch):
        ga, gv = prob.gradient(a, v)
        val = prob.value(a, v)
        result.trace.append({"epoch": epoch, "objective": val,
                             "grad_norm": float(np.sqrt(ga @ ga + np.sum(gv * gv)))})
        result.a_history.append(a.copy())
        return val

    start = record(0)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = None if full_batch else order[lo:lo + cfg.batch_size]
            ga, gv = prob.gradient(a, v, idx)
            step = cfg.learning_rate
            if cap_step:
                L = prob.a_lipschitz(v)
                if L > 0:
                    step = min(step, 1.0 / L)
            if train_a:
                a = a - step * ga
                if constrained:
                    a = project_ball(a, radius)
            if train_v and not cfg.refresh_v:
                if constrained:
                    # proximal step on the ridge term, stable for any lam
                    ridge = 2.0 * lam * prob.S
                    v = (v - cfg.learning_rate * (gv - ridge * v)) / (1.0 + cfg.learning_rate * ridge)
                else:
                    v = v - cfg.learning_rate * gv
        if cfg.refresh_v and train_v:
            v = ridge_solve(prob.features(a), targets, lam)
        val = record(epoch)
        if not np.isfinite(val) or val > cfg.divergence_factor * max(start, 1e-300):
            raise DivergenceError(
                f"objective grew from {start:.3g} to {val:.3g} at epoch {epoch}; "
                "try a smaller learning rate")
    result.a, result.v = a, v
    return result
