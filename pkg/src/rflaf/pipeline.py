"""End-to-end training: leverage weighted sampling and the plain baseline."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .basis import RBF, BasisConfig, default_extent, eval_activation, fit_activation
from .data import ACTIVATIONS, Dataset, SyntheticTruth, synth_target
from .errors import DegeneratePoolError, InvalidArgument, PipelineError
from .features import (POOL_SCALED, FeaturePool, LeverageWeights, WeightedFeatures,
                       leverage_weights, plain_features, resample_weighted,
                       sample_pool, select_features)
from .kernel import (basis_tensor, effective_dimension, feature_eigenvalues,
                     gram_eigenvalues, gram_empirical)
from .solvers import (MAIN, MSE, SENSING, SgdConfig, loss_eval, ridge_objective,
                      ridge_solve, sgd_joint)

SCHEMA = 1
LWS = "lws"
PS = "ps"


@dataclass
class PipelineConfig:
    """Settings shared by both sampling schemes.

    ``lam`` weighs the leverage computation, ``lam_star`` the final ridge
    term; both default to ``1/sqrt(n)``. When ``basis`` is None it is built
    from ``basis_kind``/``n_grid`` over ``[-T, T]`` with ``T`` equal to
    ``extent_scale`` standard deviations of the training projections.
    """

    s: int = 3000
    S: int = 100
    lam0: float = 1e-3
    lam: Optional[float] = None
    lam_star: Optional[float] = None
    q_mode: str = POOL_SCALED
    sgd: SgdConfig = field(default_factory=SgdConfig)
    basis: Optional[BasisConfig] = None
    basis_kind: str = RBF
    n_grid: int = 16
    order: int = 3
    extent_scale: float = 3.0
    loss: str = MSE
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        if self.s < 1 or self.S < 1:
            raise InvalidArgument("pool size s and feature count S must be positive")
        for name in ("lam", "lam_star"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise InvalidArgument(f"{name} must be positive")

    def seeds(self) -> list[int]:
        """Independent seeds for pool, activation fit, resampling and final fit."""
        return [int(x) for x in np.random.SeedSequence(self.seed).generate_state(4)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["basis"] = None if self.basis is None else self.basis.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        sgd = SgdConfig(**d.pop("sgd", {}))
        basis = d.pop("basis", None)
        basis = None if basis is None else BasisConfig.from_dict(basis)
        return cls(sgd=sgd, basis=basis, **d)


@dataclass
class PipelineHooks:
    """Test hooks: fixed line-2 coefficients, forced ``q``, forced draws."""

    a_tilde: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = None


@dataclass
class RflafModel:
    a: np.ndarray
    v: np.ndarray
    basis: BasisConfig
    features: WeightedFeatures

    def feature_matrix(self, X) -> np.ndarray:
        return (basis_tensor(X, self.features.W, self.basis) @ self.a) * self.features.Q

    def predict(self, X) -> np.ndarray:
        return self.feature_matrix(X) @ self.v

    def to_dict(self) -> dict:
        return {
            "a": self.a.tolist(),
            "v": self.v.tolist(),
            "basis": self.basis.to_dict(),
            "W": self.features.W.tolist(),
            "Q": self.features.Q.tolist(),
            "source_indices": self.features.source_indices.tolist(),
        }


@dataclass
class ExperimentReport:
    scheme: str
    S: int
    s: int
    seed: int
    train_loss: float
    test_loss: float
    d_eff: float
    lam: float
    lam_star: float
    timings: dict = field(default_factory=dict)
    q_summary: Optional[dict] = None
    model: Optional[dict] = None
    schema: int = SCHEMA

    def to_json(self, with_model: bool = True) -> str:
        d = asdict(self)
        if not with_model:
            d.pop("model")
        return json.dumps(d, indent=2)

    @property
    def secs(self) -> float:
        return float(sum(self.timings.values()))


def _lams(cfg: PipelineConfig, n: int):
    default = 1.0 / math.sqrt(n)
    return (cfg.lam or default), (cfg.lam_star or default)


def _basis_for(cfg: PipelineConfig, X: np.ndarray, W: np.ndarray) -> BasisConfig:
    if cfg.basis is not None:
        return cfg.basis
    extent = default_extent(X @ W, cfg.extent_scale)
    return BasisConfig.build(cfg.basis_kind, extent, cfg.n_grid, order=cfg.order)


def _finish(scheme, cfg, train, test, basis, features, fit, Phi, lam, lam_star,
            timings, q_summary=None):
    model = RflafModel(fit.a, fit.v, basis, features)
    Z = (Phi @ fit.a) * features.Q
    train_loss = loss_eval(cfg.loss, Z @ fit.v, train.y)
    test_loss = loss_eval(cfg.loss, model.predict(test.X), test.y)
    d_eff = effective_dimension(feature_eigenvalues(Z), lam_star)
    report = ExperimentReport(scheme, features.S, cfg.s if scheme == LWS else features.S,
                              cfg.seed, train_loss, test_loss, d_eff, lam, lam_star,
                              timings, q_summary, model.to_dict())
    return model, report


def run_leverage_weighted(train: Dataset, test: Dataset, cfg: PipelineConfig,
                   hooks: Optional[PipelineHooks] = None):
    """Pool, approximate kernel, leverage weights, resampling, final fit."""
    hooks = hooks or PipelineHooks()
    pool_seed, sense_seed, draw_seed, fit_seed = cfg.seeds()
    lam, lam_star = _lams(cfg, train.n)
    timings = {}

    t = time.perf_counter()
    pool = sample_pool(train.d, cfg.s, pool_seed)
    basis = _basis_for(cfg, train.X, pool.W)
    Phi = basis_tensor(train.X, pool.W, basis)
    timings["pool"] = time.perf_counter() - t

    t = time.perf_counter()
    if hooks.a_tilde is not None:
        a_tilde = np.asarray(hooks.a_tilde, dtype=float)
    else:
        sense = replace(cfg.sgd, seed=sense_seed, lam0=cfg.lam0)
        a_tilde = sgd_joint(SENSING, train.X, train.y, plain_features(pool), basis, sense,
                            cfg.loss, lam, n_classes=train.n_classes, Phi=Phi).a
    if not np.any(a_tilde):
        raise PipelineError("activation fit returned an all-zero activation")
    timings["sensing"] = time.perf_counter() - t

    t = time.perf_counter()
    if hooks.q is not None:
        q = np.asarray(hooks.q, dtype=float)
        weights = LeverageWeights(q, q, lam)
    else:
        try:
            weights = leverage_weights(Phi @ a_tilde, lam, train.n)
        except DegeneratePoolError as exc:
            raise PipelineError(f"leverage scoring: {exc}") from exc
    timings["leverage"] = time.perf_counter() - t

    t = time.perf_counter()
    if hooks.indices is not None:
        features = select_features(pool, weights.q, hooks.indices, cfg.q_mode)
    else:
        features = resample_weighted(pool, weights, cfg.S, draw_seed, cfg.q_mode)
    Phi_S = Phi[:, features.source_indices, :]
    timings["resample"] = time.perf_counter() - t

    t = time.perf_counter()
    final = replace(cfg.sgd, seed=fit_seed)
    a0 = a_tilde if cfg.warm_start else None
    fit = sgd_joint(MAIN, train.X, train.y, features, basis, final, cfg.loss, lam_star,
                    a0=a0, n_classes=train.n_classes, Phi=Phi_S)
    timings["fit"] = time.perf_counter() - t
    return _finish(LWS, cfg, train, test, basis, features, fit, Phi_S, lam, lam_star,
                   timings, weights.summary())


def run_plain(train: Dataset, test: Dataset, cfg: PipelineConfig):
    """``S`` features straight from the standard normal, unit weights."""
    pool_seed, _, _, fit_seed = cfg.seeds()
    lam, lam_star = _lams(cfg, train.n)
    timings = {}
    t = time.perf_counter()
    pool = sample_pool(train.d, cfg.S, pool_seed)
    basis = _basis_for(cfg, train.X, pool.W)
    features = plain_features(pool)
    Phi = basis_tensor(train.X, pool.W, basis)
    timings["pool"] = time.perf_counter() - t

    t = time.perf_counter()
    final = replace(cfg.sgd, seed=fit_seed)
    fit = sgd_joint(MAIN, train.X, train.y, features, basis, final, cfg.loss, lam_star,
                    n_classes=train.n_classes, Phi=Phi)
    timings["fit"] = time.perf_counter() - t
    return _finish(PS, cfg, train, test, basis, features, fit, Phi, lam, lam_star, timings)


def run_scheme(scheme: str, train: Dataset, test: Dataset, cfg: PipelineConfig):
    if scheme == LWS:
        return run_leverage_weighted(train, test, cfg)
    if scheme == PS:
        return run_plain(train, test, cfg)
    raise InvalidArgument(f"unknown scheme {scheme!r}")


def excess_risk(predict: Callable[[np.ndarray], np.ndarray], truth: SyntheticTruth,
                n_test: int, seed=0, loss: str = MSE) -> float:
    """Monte Carlo estimate of ``E[l(f_hat)] - E[l(f*)]`` on fresh samples.

    For the squared loss the reference risk is the noise variance.
    """
    if n_test < 1:
        raise InvalidArgument("n_test must be positive")
    ds = synth_target(truth, n_test, seed)
    risk = loss_eval(loss, predict(ds.X), ds.y)
    if loss == MSE:
        return risk - truth.noise_var
    return risk - loss_eval(loss, truth.f(ds.X), ds.y)


# ------------------------------------------------- 2-lambda guarantee ---

def rkhs_target(X: np.ndarray, coeffs: np.ndarray, basis: BasisConfig,
                alpha: float, beta: float, u: np.ndarray) -> np.ndarray:
    """Exact ``E_w[sigma(w^T x) (alpha + beta w^T u)]`` for ``w ~ N(0, I)``.

    ``sigma`` is an RBF activation and ``u`` a unit vector; with
    ``alpha^2 + beta^2 <= 1`` the result has RKHS norm at most one.
    Uses the Gaussian integrals of ``exp(-(r g - c)^2 / 2h^2)`` and
    ``g exp(-(r g - c)^2 / 2h^2)`` over ``g ~ N(0, 1)``.
    """
    if basis.kind != RBF:
        raise InvalidArgument("closed-form targets need an RBF basis")
    r = np.linalg.norm(X, axis=1)
    h2 = basis.width ** 2
    c = basis.centers
    tot = h2 + r[:, None] ** 2
    base = np.sqrt(h2 / tot) * np.exp(-c ** 2 / (2.0 * tot))
    even = base @ coeffs
    odd = (base * r[:, None] * c / tot) @ coeffs
    safe = np.where(r > 0, r, 1.0)
    along = np.where(r > 0, (X @ u) / safe, 0.0)
    return alpha * even + beta * along * odd


@dataclass
class RidgeGuaranteeResult:
    success_rate: float
    objectives: np.ndarray
    thresholds: np.ndarray
    d_eff: np.ndarray
    lam: float

    @property
    def bound(self) -> float:
        return 2.0 * self.lam


def ridge_guarantee_check(n: int = 200, d: int = 5, lam: float = 0.05, delta: float = 0.1,
                  trials: int = 50, n_grid: int = 16, pool_size: int = 4000,
                  activation: str = "tanh", alpha: float = 0.6, beta: float = 0.8,
                  seed=0) -> RidgeGuaranteeResult:
    """Fraction of trials where the ridge objective on a unit-norm target is <= 2 lam.

    Each trial draws data, approximates the population kernel with a large
    plain pool, samples ``s = ceil(5 d log(16 d / delta))`` features from
    the pool by ridge leverage (``d`` the effective dimension at ``lam``),
    and solves the inner ridge problem in closed form.
    """
    if alpha ** 2 + beta ** 2 > 1 + 1e-12:
        raise InvalidArgument("target weights must satisfy alpha^2 + beta^2 <= 1")
    objectives, thresholds, dims = [], [], []
    for child in np.random.SeedSequence(seed).spawn(trials):
        data_seed, pool_seed, draw_seed = child.generate_state(3)
        rng = np.random.default_rng(data_seed)
        X = rng.standard_normal((n, d))
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        pool = sample_pool(d, pool_size, pool_seed)
        basis = BasisConfig.rbf(default_extent(X @ pool.W), n_grid)
        grid = np.linspace(*basis.extent, 4 * n_grid + 1)
        coeffs = fit_activation(grid, ACTIVATIONS[activation](grid), basis, ridge=1e-8).a
        Z_pool = basis_tensor(X, pool.W, basis) @ coeffs
        d_eff = effective_dimension(gram_eigenvalues(gram_empirical(Z_pool)), lam)
        s_req = max(1, math.ceil(5 * d_eff * math.log(16 * d_eff / delta)))
        weights = leverage_weights(Z_pool, lam, n)
        feats = resample_weighted(pool, weights, s_req, draw_seed)
        Z = Z_pool[:, feats.source_indices] * feats.Q
        f = rkhs_target(X, coeffs, basis, alpha, beta, u)
        v = ridge_solve(Z, f, lam)
        objectives.append(ridge_objective(Z, f, v, lam))
        thresholds.append(s_req)
        dims.append(d_eff)
    obj = np.array(objectives)
    return RidgeGuaranteeResult(float(np.mean(obj <= 2 * lam)), obj, np.array(thresholds),
                         np.array(dims), lam)
