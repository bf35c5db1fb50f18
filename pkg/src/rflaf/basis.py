"""Basis functions on a 1-D grid and the learnable activation built from them.

An activation is a linear combination ``sigma_a(z) = sum_i a_i B_i(z)`` of
``N`` fixed bumps. Two families are supported: Gaussian radial basis
functions centred on an even grid, and clamped uniform B-splines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lstsq

from .errors import IllPosedError, InvalidArgument

RBF = "rbf"
BSPLINE = "bspline"
KINDS = (RBF, BSPLINE)


def make_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """Return ``n`` evenly spaced points covering ``[lo, hi]``.

    Both endpoints are included when ``n >= 2``; a single point sits at the
    midpoint.
    """
    if n < 1:
        raise InvalidArgument(f"grid needs at least one point, got n={n}")
    if lo > hi:
        raise InvalidArgument(f"empty interval [{lo}, {hi}]")
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n)


def clamped_knots(lo: float, hi: float, n_basis: int, degree: int) -> np.ndarray:
    n_intervals = n_basis - degree
    if n_intervals < 1:
        raise InvalidArgument(
            f"a degree-{degree} spline needs at least {degree + 1} basis functions"
        )
    inner = np.linspace(lo, hi, n_intervals + 1)
    return np.concatenate([np.full(degree, lo), inner, np.full(degree, hi)])


@dataclass(frozen=True)
class BasisConfig:
    """Grid of basis functions over the compact set ``[lo, hi]``.

    For RBF bases ``centers`` are the bump locations and ``width`` is the
    Gaussian scale ``h``. For B-splines ``centers`` hold the Greville
    abscissae of the clamped knot vector and ``width`` the knot spacing;
    ``order`` is the polynomial degree of each piece.
    """

    kind: str
    centers: np.ndarray
    width: float
    extent: tuple[float, float]
    order: int = 3
    knots: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown basis kind {self.kind!r}")
        c = np.asarray(self.centers, dtype=float)
        object.__setattr__(self, "centers", c)
        lo, hi = map(float, self.extent)
        object.__setattr__(self, "extent", (lo, hi))
        if c.ndim != 1 or c.size < 1:
            raise InvalidArgument("need at least one center")
        if lo > hi:
            raise InvalidArgument(f"empty extent [{lo}, {hi}]")
        if np.any(np.diff(c) <= 0):
            raise InvalidArgument("centers must be strictly increasing")
        if c[0] < lo or c[-1] > hi:
            raise InvalidArgument("centers must lie inside the extent")
        if not (self.width > 0 and np.isfinite(self.width)):
            raise InvalidArgument(f"width must be positive, got {self.width}")
        if self.kind == BSPLINE and self.knots is None:
            knots = clamped_knots(lo, hi, c.size, self.order)
            object.__setattr__(self, "knots", knots)

    @property
    def n_grid(self) -> int:
        return int(self.centers.size)

    @classmethod
    def rbf(cls, extent: Sequence[float], n_grid: int, width: Optional[float] = None) -> "BasisConfig":
        lo, hi = map(float, extent)
        centers = make_grid(lo, hi, n_grid)
        if width is None:
            width = default_width(lo, hi, n_grid)
        return cls(RBF, centers, float(width), (lo, hi))

    @classmethod
    def bspline(cls, extent: Sequence[float], n_grid: int, order: int = 3) -> "BasisConfig":
        lo, hi = map(float, extent)
        if not hi > lo:
            raise InvalidArgument("B-spline extent must have positive length")
        knots = clamped_knots(lo, hi, n_grid, order)
        # Greville abscissae: averages of `order` consecutive interior knots
        if order == 0:
            centers = 0.5 * (knots[:-1] + knots[1:])
        else:
            windows = np.lib.stride_tricks.sliding_window_view(knots[1:-1], order)
            centers = windows.mean(axis=1)
        spacing = (hi - lo) / (n_grid - order)
        return cls(BSPLINE, centers, spacing, (lo, hi), order=order, knots=knots)

    @classmethod
    def build(cls, kind: str, extent: Sequence[float], n_grid: int,
              width: Optional[float] = None, order: int = 3) -> "BasisConfig":
        if kind == RBF:
            return cls.rbf(extent, n_grid, width)
        if kind == BSPLINE:
            return cls.bspline(extent, n_grid, order)
        raise InvalidArgument(f"unknown basis kind {kind!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "order": self.order,
            "n_grid": self.n_grid,
            "width": self.width,
            "extent_lo": self.extent[0],
            "extent_hi": self.extent[1],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisConfig":
        extent = (d["extent_lo"], d["extent_hi"])
        if d["kind"] == RBF:
            return cls.rbf(extent, int(d["n_grid"]), d.get("width"))
        return cls.bspline(extent, int(d["n_grid"]), int(d.get("order", 3)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BasisConfig":
        return cls.from_dict(json.loads(text))


def default_width(lo: float, hi: float, n_grid: int) -> float:
    """Spacing of the grid, so that neighbouring bumps cross at ``e^{-1/2}``."""
    if n_grid >= 2 and hi > lo:
        return (hi - lo) / (n_grid - 1)
    return max(hi - lo, 1.0)


def default_extent(projections: np.ndarray, scale: float = 3.0) -> tuple[float, float]:
    """Symmetric extent ``[-T, T]`` with ``T = scale * std(projections)``."""
    t = scale * float(np.std(projections))
    if not t > 0:
        t = 1.0
    return (-t, t)


@dataclass
class ActivationCoeffs:
    a: np.ndarray
    norm_bound: Optional[float] = None
    sup_residual: Optional[float] = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)


def _bspline_eval(z: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    t = knots
    zz = z[..., None]
    B = ((t[:-1] <= zz) & (zz < t[1:])).astype(float)
    # the right end of the extent belongs to the last non-empty interval
    last = int(np.nonzero(t[:-1] < t[1:])[0][-1])
    B[..., last] = np.where(z == t[-1], 1.0, B[..., last])
    for k in range(1, degree + 1):
        den_l = t[k:-1] - t[: -k - 1]
        den_r = t[k + 1:] - t[1:-k]
        safe_l = np.where(den_l > 0, den_l, 1.0)
        safe_r = np.where(den_r > 0, den_r, 1.0)
        wl = np.where(den_l > 0, (zz - t[: -k - 1]) / safe_l, 0.0)
        wr = np.where(den_r > 0, (t[k + 1:] - zz) / safe_r, 0.0)
        B = wl * B[..., :-1] + wr * B[..., 1:]
    return B


def eval_basis(cfg: BasisConfig, z) -> np.ndarray:
    """Evaluate every basis function at ``z``; output shape is ``z.shape + (N,)``."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise InvalidArgument("basis evaluated at a non-finite point")
    if cfg.kind == RBF:
        diff = z[..., None] - cfg.centers
        return np.exp(-(diff * diff) / (2.0 * cfg.width ** 2))
    return _bspline_eval(z, cfg.knots, cfg.order)


def eval_activation(coeffs, cfg: BasisConfig, z) -> np.ndarray:
    a = coeffs.a if isinstance(coeffs, ActivationCoeffs) else np.asarray(coeffs, dtype=float)
    if a.shape != (cfg.n_grid,):
        raise InvalidArgument(f"expected {cfg.n_grid} coefficients, got shape {a.shape}")
    return eval_basis(cfg, z) @ a


def fit_activation(z, values, cfg: BasisConfig, ridge: float = 1e-10) -> ActivationCoeffs:
    """Least-squares fit of basis coefficients to samples ``(z, values)``.

    Minimises ``sum (sigma_a(z) - value)^2 + ridge * |a|^2`` as an
    augmented least-squares problem, avoiding the squared condition number
    of the normal equations.
    """
    z = np.asarray(z, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if z.shape != values.shape:
        raise InvalidArgument("sample locations and values differ in length")
    if ridge < 0:
        raise InvalidArgument("ridge must be nonnegative")
    n = cfg.n_grid
    if ridge == 0 and z.size < n:
        raise IllPosedError(f"{z.size} samples cannot determine {n} coefficients without a ridge")
    B = eval_basis(cfg, z)
    A = np.vstack([B, np.sqrt(ridge) * np.eye(n)])
    b = np.concatenate([values, np.zeros(n)])
    a, _, rank, _ = lstsq(A, b, lapack_driver="gelsd")
    if rank < n:
        raise IllPosedError("basis is rank deficient on these samples; add a ridge")
    resid = float(np.max(np.abs(B @ a - values))) if z.size else 0.0
    return ActivationCoeffs(a, sup_residual=resid)


def sup_error(coeffs, cfg: BasisConfig, target: Callable[[np.ndarray], np.ndarray],
              grid: np.ndarray) -> float:
    """Largest absolute gap between the activation and ``target`` on ``grid``."""
    return float(np.max(np.abs(eval_activation(coeffs, cfg, grid) - target(grid))))


def coupled_width(lo: float, hi: float, n_grid: int) -> float:
    """Width ``(hi - lo) / sqrt(N)``, shrinking more slowly than the grid spacing.

    With the width tied to the spacing the bumps keep a fixed shape and the
    fit error near the ends of the interval stops improving as ``N`` grows;
    letting ``1/h`` grow like ``sqrt(N)`` lets the sup-norm error keep falling.
    """
    if n_grid < 1 or not hi > lo:
        raise InvalidArgument("need n_grid >= 1 and hi > lo")
    return (hi - lo) / np.sqrt(n_grid)


def radius_bound(cfg: BasisConfig, scale: float = 1.0) -> float:
    """Coefficient-norm bound ``R = scale / (h sqrt(N))``."""
    return scale / (cfg.width * np.sqrt(cfg.n_grid))
