"""Numerical verification suites, shared by the CLI and the acceptance tests.

Each suite returns a :class:`CheckResult` with the measured quantities and a
pass flag computed at the suite's tolerance.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import eigh

from .basis import BasisConfig, coupled_width, fit_activation, sup_error
from .data import SyntheticTruth, exponential_scales, standardize_split, synth_spectrum, synth_target
from .features import (POOL_SCALED, leverage_weights, plain_features, resample_weighted,
                       sample_pool)
from .kernel import (SpectrumRegime, basis_tensor, effective_dimension,
                     effective_dimension_trace, gram_eigenvalues, gram_empirical)
from .pipeline import (PipelineConfig, PipelineHooks, ridge_guarantee_check, run_leverage_weighted,
                       run_plain)
from .solvers import MAIN, SENSING, BilinearObjective, SgdConfig, ridge_solve, ridge_solve_dual


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items()
                          if not isinstance(v, (list, dict)))
        return f"[{status}] {self.name}: {shown} ({self.seconds:.2f}s)"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t
        res.measured["seconds"] = res.seconds
        if "time_limit" in res.measured:
            res.passed = res.passed and res.seconds < res.measured["time_limit"]
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_woodbury(instances: int = 100, tol: float = 1e-8, seed=0) -> CheckResult:
    """Primal and dual ridge solutions agree on random small instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n, s = rng.integers(1, 65, size=2)
        lam = 10.0 ** rng.uniform(-4, 0)
        Z = rng.standard_normal((n, s))
        y = rng.standard_normal(n)
        vp = ridge_solve(Z, y, lam)
        vd = ridge_solve_dual(Z, y, lam)
        err = np.linalg.norm(vp - vd) / max(np.linalg.norm(vp), 1e-300)
        worst = max(worst, float(err))
    return CheckResult("woodbury", worst <= tol,
                       {"instances": instances, "max_rel_err": worst, "tol": tol, "time_limit": 5.0})


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


EFFDIM_LAMS = np.logspace(-4, -1, 7)


@_timed
def check_effdim(matrices: int = 20, tol: float = 1e-10, slope_tol: float = 0.15,
                 n_planted: int = 1024, seed=0) -> CheckResult:
    """Eigen-sum vs trace path, and ``(1/lam)^(1/t)`` growth on planted spectra."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(matrices):
        n = int(rng.integers(2, 60))
        B = rng.standard_normal((n, int(rng.integers(1, 2 * n))))
        K = B @ B.T
        lam = 10.0 ** rng.uniform(-3, 1)
        d1 = effective_dimension(eigh(K / n, eigvals_only=True), lam)
        d2 = effective_dimension_trace(K, lam)
        worst = max(worst, abs(d1 - d2) / max(abs(d2), 1.0))
    slopes = {}
    ok = worst <= tol
    lams = EFFDIM_LAMS
    for t in (1.5, 2.0):
        planted = synth_spectrum(SpectrumRegime.polynomial(t), n_planted, seed=seed)
        eigs = gram_eigenvalues(planted.gram)
        d = [effective_dimension(eigs, lam) for lam in lams]
        slopes[t] = loglog_slope(1.0 / lams, d)
        ok = ok and abs(slopes[t] - 1.0 / t) <= slope_tol
    return CheckResult("effdim", ok, {"max_path_gap": worst, "tol": tol,
                                      "slope_t1.5": slopes[1.5], "slope_t2": slopes[2.0],
                                      "time_limit": 10.0})


@_timed
def check_ridge_guarantee(trials: int = 50, rate: float = 0.9, seed=0, **kwargs) -> CheckResult:
    """Leverage sampling at the stated feature count keeps the ridge objective under ``2 lam``."""
    res = ridge_guarantee_check(trials=trials, seed=seed, **kwargs)
    return CheckResult("ridge_guarantee", res.success_rate >= rate, {
        "success_rate": res.success_rate, "required": rate, "bound": res.bound,
        "max_objective": float(res.objectives.max()),
        "median_objective": float(np.median(res.objectives)),
        "mean_s": float(res.thresholds.mean()), "mean_d_eff": float(res.d_eff.mean()),
        "time_limit": 60.0})


@_timed
def check_leverage_bound(configs: int = 20, seed=0) -> CheckResult:
    """Every raw leverage score is at most ``|z_i|^2 / (n lam)``."""
    rng = np.random.default_rng(seed)
    violations = 0
    checked = 0
    worst_ratio = 0.0
    for _ in range(configs):
        n = int(rng.integers(5, 120))
        d = int(rng.integers(1, 8))
        s = int(rng.integers(5, 200))
        lam = 10.0 ** rng.uniform(-4, 0)
        X = rng.standard_normal((n, d))
        pool = sample_pool(d, s, rng.integers(2 ** 32))
        basis = BasisConfig.rbf((-3.0, 3.0), int(rng.integers(4, 17)))
        a = rng.standard_normal(basis.n_grid)
        Z = basis_tensor(X, pool.W, basis) @ a
        raw = leverage_weights(Z, lam).raw
        bound = np.sum(Z * Z, axis=0) / (n * lam)
        violations += int(np.count_nonzero(raw > bound))
        checked += s
        pos = bound > 0
        worst_ratio = max(worst_ratio, float(np.max(raw[pos] / bound[pos], initial=0.0)))
    return CheckResult("leverage_bound", violations == 0,
                       {"configs": configs, "scores": checked, "violations": violations,
                        "max_ratio": worst_ratio})


def _gradcheck_instance(rng, objective):
    n, S, N = 6, 4, 5
    basis = BasisConfig.rbf((-2.0, 2.0), N)
    X = rng.standard_normal((n, 3))
    W = rng.standard_normal((3, S))
    Phi = basis_tensor(X, W, basis)
    Q = rng.uniform(0.5, 1.5, S)
    y = rng.standard_normal(n)
    return BilinearObjective(objective, Phi, Q, y, lam=0.1, lam0=0.3)


@_timed
def check_gradients(points: int = 10, tol: float = 1e-4, step: float = 1e-6, seed=0) -> CheckResult:
    """Analytic gradients of both objectives against central differences."""
    rng = np.random.default_rng(seed)
    worst = {}
    for objective in (MAIN, SENSING):
        prob = _gradcheck_instance(rng, objective)
        err = 0.0
        for _ in range(points):
            a = rng.standard_normal(prob.Phi.shape[2])
            v = rng.standard_normal(prob.S)
            ga, gv = prob.gradient(a, v)
            fa = np.array([(prob.value(a + step * e, v) - prob.value(a - step * e, v)) / (2 * step)
                           for e in np.eye(a.size)])
            fv = np.array([(prob.value(a, v + step * e) - prob.value(a, v - step * e)) / (2 * step)
                           for e in np.eye(v.size)])
            g = np.concatenate([ga, gv])
            f = np.concatenate([fa, fv])
            err = max(err, float(np.linalg.norm(g - f) / max(np.linalg.norm(f), 1e-12)))
        worst[objective] = err
    ok = all(e <= tol for e in worst.values())
    return CheckResult("gradcheck", ok, {"rel_err_main": worst[MAIN],
                                         "rel_err_sensing": worst[SENSING], "tol": tol,
                                         "time_limit": 5.0})


@_timed
def check_unbiasedness(resamples: int = 1000, s: int = 100, n: int = 40, tol: float = 0.05,
                       seed=0) -> CheckResult:
    """Averaged Grams of weighted resamples approach the pool Gram."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 4))
    pool = sample_pool(4, s, seed)
    basis = BasisConfig.rbf((-3.0, 3.0), 8)
    a = rng.standard_normal(basis.n_grid)
    Z = basis_tensor(X, pool.W, basis) @ a
    weights = leverage_weights(Z, 1e-2)
    target = gram_empirical(Z)
    acc = np.zeros_like(target)
    for r in range(resamples):
        feats = resample_weighted(pool, weights, s, (seed, r), POOL_SCALED)
        acc += gram_empirical(Z[:, feats.source_indices] * feats.Q)
    err = float(np.linalg.norm(acc / resamples - target) / np.linalg.norm(target))
    return CheckResult("unbiasedness", err <= tol, {"resamples": resamples, "frob_rel_err": err,
                                                    "tol": tol, "time_limit": 30.0})


@_timed
def check_degeneracy(S: int = 40, n: int = 200, seed=3, tol: float = 1e-10) -> CheckResult:
    """Uniform weights, identity draws and a cold start reduce to the plain scheme."""
    truth = SyntheticTruth.random(4, 16, "cos", 0.01, seed=seed)
    train, test = standardize_split(synth_target(truth, n, seed), 0.25, seed)
    cfg = PipelineConfig(s=S, S=S, seed=seed, warm_start=False, lam=1e-3, lam_star=1e-4,
                         sgd=SgdConfig(epochs=3, learning_rate=1e-2, radius_scale=10.0))
    hooks = PipelineHooks(q=np.full(S, 1.0 / S), indices=np.arange(S))
    _, lws = run_leverage_weighted(train, test, cfg, hooks)
    _, ps = run_plain(train, test, cfg)
    gap = max(abs(lws.train_loss - ps.train_loss), abs(lws.test_loss - ps.test_loss))
    return CheckResult("degeneracy", gap <= tol, {"loss_gap": gap, "tol": tol,
                                                  "test_loss": ps.test_loss})


@_timed
def check_activation_fit(grids=(8, 16, 32), extent=(-3.0, 3.0), points: int = 1001) -> CheckResult:
    """Sup-norm error of fitting ``cos`` shrinks strictly as the grid grows.

    The width follows :func:`coupled_width`.
    """
    z = np.linspace(*extent, points)
    errs = []
    for N in grids:
        basis = BasisConfig.rbf(extent, N, width=coupled_width(*extent, N))
        coeffs = fit_activation(z, np.cos(z), basis)
        errs.append(sup_error(coeffs, basis, np.cos, z))
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    return CheckResult("activation_fit", ok, {f"sup_err_N{N}": e for N, e in zip(grids, errs)}
                       | {"time_limit": 5.0})


# ------------------------------------------------ desk-scale comparison ---

LWS_TASK = {
    "n": 2000, "d": 10, "M": 64, "activation": "cos", "noise_var": 0.01, "A": 0.2,
    "truth_seed": 123, "data_seed": 7, "s": 500, "n_grid": 16,
    "lam": 1e-3, "lam_star": 1e-5,
    "sgd": {"epochs": 20, "learning_rate": 1e-2, "radius_scale": 10.0},
}


def lws_task_data(task: dict = LWS_TASK):
    """Cosine target with geometrically decaying input scales, 80/20 split."""
    truth = SyntheticTruth.random(task["d"], task["M"], task["activation"], task["noise_var"],
                                  seed=task["truth_seed"],
                                  x_scales=exponential_scales(task["d"], task["A"]))
    ds = synth_target(truth, task["n"], task["data_seed"])
    train, test = standardize_split(ds, 0.2, seed=0, standardize=False)
    return truth, train, test


def lws_task_config(S: int, seed: int, task: dict = LWS_TASK) -> PipelineConfig:
    return PipelineConfig(s=task["s"], S=S, seed=seed, n_grid=task["n_grid"], lam=task["lam"],
                          lam_star=task["lam_star"], sgd=SgdConfig(**task["sgd"]))


def compare_schemes(S_values=(30, 50, 100, 300), extra_ps=(200,), seeds: int = 8,
                    task: dict = LWS_TASK) -> dict:
    """Mean test MSE over seeds, keyed by ``(scheme, S)``."""
    _, train, test = lws_task_data(task)
    out = {}
    for S in sorted(set(S_values) | set(extra_ps)):
        schemes = [("ps", run_plain)] + ([("lws", run_leverage_weighted)] if S in S_values else [])
        for name, run in schemes:
            losses = [run(train, test, lws_task_config(S, seed, task))[1].test_loss
                      for seed in range(seeds)]
            out[(name, S)] = float(np.mean(losses))
    return out


@_timed
def check_lws_vs_ps(seeds: int = 8, slack: float = 1.05, results: dict | None = None) -> CheckResult:
    """Leverage sampling is never worse than plain sampling, and 50 of them beat 200 plain."""
    res = results if results is not None else compare_schemes(seeds=seeds)
    S_values = sorted(S for (name, S) in res if name == "lws")
    measured = {}
    ok = True
    for S in S_values:
        measured[f"lws_{S}"] = res[("lws", S)]
        measured[f"ps_{S}"] = res[("ps", S)]
        ok = ok and res[("lws", S)] <= slack * res[("ps", S)]
    measured["ps_200"] = res[("ps", 200)]
    ok = ok and res[("lws", 50)] <= res[("ps", 200)]
    measured["time_limit"] = 600.0
    return CheckResult("lws_vs_ps", ok, measured)


def check_ps_monotone(results: dict, S_values=(30, 50, 100, 300), slack: float = 1.05) -> CheckResult:
    """Plain-scheme test loss does not rise by more than ``slack`` as ``S`` grows."""
    losses = [results[("ps", S)] for S in S_values]
    ok = all(b <= slack * a for a, b in zip(losses, losses[1:]))
    return CheckResult("ps_monotone", ok, {f"ps_{S}": x for S, x in zip(S_values, losses)})


SUITES = {
    "woodbury": check_woodbury,
    "effdim": check_effdim,
    "ridge_guarantee": check_ridge_guarantee,
    "leverage_bound": check_leverage_bound,
    "gradcheck": check_gradients,
    "unbiasedness": check_unbiasedness,
    "lws_vs_ps": check_lws_vs_ps,
    "degeneracy": check_degeneracy,
    "activation_fit": check_activation_fit,
}


def run_suite(name: str, **kwargs) -> CheckResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**kwargs)
