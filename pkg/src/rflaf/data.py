"""Datasets: CSV ingestion, standardisation and synthetic generators."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, InvalidArgument
from .kernel import SpectrumRegime

log = logging.getLogger(__name__)

REGRESSION = "regression"
CLASSIFICATION = "classification"
MISSING = {"", "?", "na", "nan", "null"}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)
    task: str = REGRESSION
    classes: Optional[list] = None
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise InvalidArgument(f"X has shape {self.X.shape} but y has {self.y.shape[0]} rows")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.X.shape[1])]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> Optional[int]:
        return None if self.classes is None else len(self.classes)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], list(self.feature_names), self.task,
                       self.classes, self.mean, self.std)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: str, task: str = REGRESSION, delimiter: str = ",",
             categorical: Optional[Sequence[str]] = None) -> Dataset:
    """Read a headed CSV into a :class:`Dataset`.

    A column is numeric when more than half of its cells parse as numbers;
    otherwise it is one-hot encoded (levels in sorted order). Rows with a
    missing cell are dropped. Classification labels are mapped to
    ``0..C-1`` in sorted order of their text.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
            rows.append((lineno, [c.strip() for c in row]))
    if label_column not in header:
        raise ConfigError(f"label column {label_column!r} not in {header}")
    kept = [(ln, r) for ln, r in rows if not any(c.lower() in MISSING for c in r)]
    if len(kept) < len(rows):
        log.warning("dropped %d rows with missing values", len(rows) - len(kept))
    if not kept:
        raise DataError(f"{path} has no complete rows")
    lab = header.index(label_column)
    categorical = set(categorical or ())

    cols, names = [], []
    for j, name in enumerate(header):
        if j == lab:
            continue
        cells = [r[j] for _, r in kept]
        numeric = name not in categorical and sum(map(_is_float, cells)) * 2 > len(cells)
        if numeric:
            values = np.empty(len(cells))
            for i, c in enumerate(cells):
                try:
                    values[i] = float(c)
                except ValueError:
                    raise DataError(f"{path}:{kept[i][0]}: column {name!r} has non-numeric value {c!r}") from None
            if not np.all(np.isfinite(values)):
                bad = int(np.argmax(~np.isfinite(values)))
                raise DataError(f"{path}:{kept[bad][0]}: column {name!r} is not finite")
            cols.append(values[:, None])
            names.append(name)
        else:
            levels = sorted(set(cells))
            index = {lv: k for k, lv in enumerate(levels)}
            onehot = np.zeros((len(cells), len(levels)))
            onehot[np.arange(len(cells)), [index[c] for c in cells]] = 1.0
            cols.append(onehot)
            names.extend(f"{name}={lv}" for lv in levels)
    X = np.hstack(cols) if cols else np.zeros((len(kept), 0))

    raw_labels = [r[lab] for _, r in kept]
    if task == REGRESSION:
        try:
            y = np.array([float(c) for c in raw_labels])
        except ValueError:
            raise DataError(f"{path}: label column {label_column!r} is not numeric") from None
        classes = None
    elif task == CLASSIFICATION:
        classes = sorted(set(raw_labels))
        index = {c: k for k, c in enumerate(classes)}
        y = np.array([index[c] for c in raw_labels], dtype=np.int64)
    else:
        raise ConfigError(f"unknown task {task!r}")
    log.info("loaded %s: n=%d, d=%d", path, X.shape[0], X.shape[1])
    return Dataset(X, y, names, task, classes)


def write_csv(ds: Dataset, path, label_column: str = "y") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + [label_column])
        labels = ds.y if ds.classes is None else [ds.classes[k] for k in ds.y]
        for row, lab in zip(ds.X, labels):
            w.writerow([repr(float(x)) for x in row] + [lab if isinstance(lab, str) else repr(lab.item() if hasattr(lab, "item") else lab)])


def standardize_split(ds: Dataset, test_fraction: float = 0.2, seed=0, standardize: bool = True):
    """Seeded train/test split; columns standardised with training statistics.

    Constant training columns are dropped with a warning. ``standardize=False``
    only splits, which keeps a planted input covariance intact.
    """
    if not 0 < test_fraction < 1:
        raise InvalidArgument("test_fraction must be in (0, 1)")
    n_test = int(round(ds.n * test_fraction))
    n_train = ds.n - n_test
    if n_test < 1 or n_train < 2:
        raise InvalidArgument(f"n={ds.n} is too small for a {test_fraction} split")
    perm = np.random.default_rng(seed).permutation(ds.n)
    tr, te = perm[:n_train], perm[n_train:]
    mean = ds.X[tr].mean(axis=0)
    std = ds.X[tr].std(axis=0)
    keep = std > 0
    if not np.all(keep):
        dropped = [nm for nm, k in zip(ds.feature_names, keep) if not k]
        log.warning("dropping constant columns: %s", dropped)
    mean, std = mean[keep], std[keep]
    names = [nm for nm, k in zip(ds.feature_names, keep) if k]

    if not standardize:
        mean, std = np.zeros(int(keep.sum())), np.ones(int(keep.sum()))

    def part(idx):
        X = (ds.X[idx][:, keep] - mean) / std
        return Dataset(X, ds.y[idx], names, ds.task, ds.classes, mean, std)

    return part(tr), part(te)


# ------------------------------------------------------------ synthetic ---

ACTIVATIONS = {
    "cos": np.cos,
    "sin": np.sin,
    "tanh": np.tanh,
    "identity": lambda z: z,
}
BOUNDED = {"cos": 1.0, "sin": 1.0, "tanh": 1.0}
TARGET_FK = "target_fk"


@dataclass
class SyntheticTruth:
    """Finite-mixture target ``f*(x) = sum_m v_m sigma*(w_m^T x) / sqrt(M)``.

    Inputs are drawn as ``x = scales * g`` with ``g ~ N(0, I_d)``; the default
    unit scales give isotropic data. Labels are ``clip(f*(x) + eps, +-y0)``.
    """

    W: np.ndarray
    v: np.ndarray
    activation: str = "cos"
    noise_var: float = 0.0
    x_scales: Optional[np.ndarray] = None
    y0: Optional[float] = None
    kind: str = TARGET_FK

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.activation not in ACTIVATIONS:
            raise InvalidArgument(f"unknown activation {self.activation!r}")
        if self.noise_var < 0:
            raise InvalidArgument("noise variance must be nonnegative")
        if np.sum(self.v ** 2) / self.M > 1.0 + 1e-12:
            raise InvalidArgument("mixture weights violate E[v(w)^2] <= 1")
        if self.x_scales is not None:
            self.x_scales = np.asarray(self.x_scales, dtype=float)
        if self.y0 is None and self.activation in BOUNDED:
            sup = BOUNDED[self.activation] * np.sum(np.abs(self.v)) / math.sqrt(self.M)
            self.y0 = 6.0 * math.sqrt(self.noise_var) + sup

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def M(self) -> int:
        return self.W.shape[1]

    @classmethod
    def random(cls, d: int, M: int = 64, activation: str = "cos", noise_var: float = 0.01,
               seed=0, x_scales=None) -> "SyntheticTruth":
        """Planted features from N(0, I_d) and weights with ``sum v^2 / M = 1``."""
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((d, M))
        v = rng.standard_normal(M)
        v *= math.sqrt(M) / np.linalg.norm(v)
        return cls(W, v, activation, noise_var, x_scales)

    def f(self, X: np.ndarray) -> np.ndarray:
        sigma = ACTIVATIONS[self.activation]
        return sigma(X @ self.W) @ self.v / math.sqrt(self.M)

    def sample_x(self, n: int, rng) -> np.ndarray:
        X = rng.standard_normal((n, self.d))
        if self.x_scales is not None:
            X = X * self.x_scales
        return X

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "activation": self.activation,
            "noise_var": self.noise_var,
            "y0": self.y0,
            "W": self.W.tolist(),
            "v": self.v.tolist(),
            "x_scales": None if self.x_scales is None else self.x_scales.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTruth":
        return cls(np.array(d["W"]), np.array(d["v"]), d["activation"], d["noise_var"],
                   None if d.get("x_scales") is None else np.array(d["x_scales"]),
                   d.get("y0"), d.get("kind", TARGET_FK))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SyntheticTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


def synth_target(truth: SyntheticTruth, n: int, seed=0, d: Optional[int] = None) -> Dataset:
    if d is not None and d != truth.d:
        raise InvalidArgument(f"truth has d={truth.d}, requested d={d}")
    rng = np.random.default_rng(seed)
    X = truth.sample_x(n, rng)
    fx = truth.f(X)
    eps = rng.standard_normal(n) * math.sqrt(truth.noise_var)
    y = fx + eps
    y0 = truth.y0
    if y0 is None:
        y0 = 6.0 * math.sqrt(truth.noise_var) + float(np.max(np.abs(fx), initial=0.0))
    y = np.clip(y, -y0, y0)
    return Dataset(X, y)


def exponential_scales(d: int, A: float = 0.5) -> np.ndarray:
    """Per-coordinate standard deviations proportional to ``A^j``.

    Normalised to unit root-mean-square, so ``E|x|^2 = d`` as for isotropic
    data while the input covariance spectrum decays geometrically.
    """
    s = A ** np.arange(d)
    return s * math.sqrt(d) / np.linalg.norm(s)


@dataclass
class PlantedSpectrum:
    dataset: Dataset
    eigenvalues: np.ndarray
    gram: np.ndarray


def synth_spectrum(regime: SpectrumRegime, n: int, seed=0, rank: Optional[int] = None) -> PlantedSpectrum:
    """Design whose linear-activation Gram ``X X^T / n`` has a planted spectrum.

    ``X = sqrt(n) U diag(sqrt(lambda))`` with ``U`` having orthonormal
    columns, so ``X X^T / n = U diag(lambda) U^T`` exactly. ``rank``
    limits the number of planted directions (default ``min(n, profile)``).
    """
    if n < 2:
        raise InvalidArgument("need n >= 2")
    if regime.kind == "finite_rank" and regime.r > n:
        raise InvalidArgument(f"rank {regime.r} exceeds n={n}")
    r = regime.r if regime.kind == "finite_rank" else n
    if rank is not None:
        r = min(r, rank)
    lam = regime.profile(n)[:r]
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, r)))
    X = math.sqrt(n) * U * np.sqrt(lam)
    beta = rng.standard_normal(r)
    y = X @ beta / math.sqrt(r)
    K = X @ X.T
    return PlantedSpectrum(Dataset(X, y), lam, 0.5 * (K + K.T))
