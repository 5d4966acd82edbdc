"""Multi-output Gaussian process regression on latent vectors.

Each output column gets its own GP with an anisotropic squared-exponential
kernel plus nugget.  Hyperparameters live in log space as

    theta = [log l_1, ..., log l_d, log signal_var, log noise_var]

and are fit by maximizing the log marginal likelihood with L-BFGS-B from
several starting points.  An optional random-walk Metropolis chain over theta
gives hyperparameter samples that predictions average over.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

log = logging.getLogger(__name__)

NUGGET_FLOOR = 1e-10
LOG_2PI = math.log(2.0 * math.pi)


class GpNumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class GpConfig:
    restarts: int = 5
    seed: int = 0
    max_iter: int = 300
    nugget_floor: float = NUGGET_FLOOR
    lengthscale_bounds: tuple[float, float] = (1e-2, 1e3)
    signal_bounds: tuple[float, float] = (1e-4, 1e4)
    noise_upper: float = 10.0
    # hyperparameter posterior sampling (off unless n_mcmc > 0)
    n_mcmc: int = 0
    mcmc_thin: int = 5
    mcmc_burn: int = 200
    mcmc_step: float = 0.1
    prior_sd: float = 1.0


def _standardize(A: np.ndarray):
    mu = A.mean(axis=0)
    sd = A.std(axis=0)
    # columns with (numerically) no spread are treated as constant
    tiny = sd <= 1e-10 * max(float(sd.max(initial=0.0)), np.finfo(float).tiny)
    return mu, np.where(tiny, 1.0, sd)


def _sq_dists(X1, X2, ls):
    A = X1 / ls
    B = X2 / ls
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def se_kernel(X1, X2, theta) -> np.ndarray:
    d = X1.shape[1]
    ls = np.exp(theta[:d])
    return math.exp(theta[d]) * np.exp(-0.5 * _sq_dists(X1, X2, ls))


def _factor(K: np.ndarray, signal_var: float):
    """Cholesky of ``K`` with jitter escalation up to ``1e-4 * signal_var``."""
    n = K.shape[0]
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    jitter = 1e-10 * signal_var
    while jitter <= 1e-4 * signal_var * (1 + 1e-12):
        try:
            return cholesky(K + jitter * np.eye(n), lower=True, check_finite=False), jitter
        except LinAlgError:
            jitter *= 10.0
    raise GpNumericalError("kernel matrix is not positive definite after jitter escalation")


def gp_log_marginal(X: np.ndarray, y: np.ndarray, theta, with_grad: bool = True):
    """Log marginal likelihood of ``y`` under the GP at ``theta`` and its gradient.

    Returns ``(value, gradient)``; the gradient is w.r.t. the log-parameters
    and is ``None`` when ``with_grad`` is false.
    """
    theta = np.asarray(theta, dtype=float)
    n, d = X.shape
    ls = np.exp(theta[:d])
    s2 = math.exp(theta[d])
    sn2 = math.exp(theta[d + 1])

    Kse = s2 * np.exp(-0.5 * _sq_dists(X, X, ls))
    K = Kse + sn2 * np.eye(n)
    L, _ = _factor(K, s2)
    alpha = cho_solve((L, True), y, check_finite=False)
    value = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI
    if not with_grad:
        return value, None

    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n), check_finite=False)
    WK = W * Kse
    grad = np.empty(d + 2)
    for j in range(d):
        diff = X[:, j][:, None] - X[:, j][None, :]
        grad[j] = 0.5 * np.sum(WK * diff * diff) / ls[j] ** 2
    grad[d] = 0.5 * np.sum(WK)
    grad[d + 1] = 0.5 * sn2 * np.trace(W)
    return value, grad


@dataclass(frozen=True)
class GpModel:
    """Fitted independent-output GP; all arrays are in standardized units."""

    X: np.ndarray
    Y: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    theta: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: np.ndarray
    samples: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def k_in(self) -> int:
        return self.X.shape[1]

    @property
    def k_out(self) -> int:
        return self.Y.shape[1]

    def hypers(self, j: int) -> dict:
        d = self.k_in
        return {
            "lengthscales": np.exp(self.theta[j, :d]),
            "signal_var": float(np.exp(self.theta[j, d])),
            "noise_var": float(np.exp(self.theta[j, d + 1])),
        }

    def predict(self, Z):
        return gp_predict(self, Z)

    def state(self):
        desc = {"k_in": self.k_in, "k_out": self.k_out, "info": self.info}
        arrays = {
            "X": self.X, "Y": self.Y, "x_mean": self.x_mean, "x_std": self.x_std,
            "y_mean": self.y_mean, "y_std": self.y_std, "theta": self.theta,
            "chol": self.chol, "alpha": self.alpha, "jitter": self.jitter,
        }
        if self.samples is not None:
            arrays["samples"] = self.samples
        return desc, arrays

    @classmethod
    def from_state(cls, desc, arrays) -> "GpModel":
        names = ("X", "Y", "x_mean", "x_std", "y_mean", "y_std", "theta", "chol", "alpha", "jitter")
        return cls(**{k: arrays[k] for k in names}, samples=arrays.get("samples"), info=desc.get("info", {}))


def _condition(X, y, theta):
    n = X.shape[0]
    d = X.shape[1]
    K = se_kernel(X, X, theta) + math.exp(theta[d + 1]) * np.eye(n)
    L, jitter = _factor(K, math.exp(theta[d]))
    alpha = cho_solve((L, True), y, check_finite=False)
    return L, alpha, jitter


def gp_condition(Z_in, Z_out, theta, config: GpConfig | None = None) -> GpModel:
    """Build a model at fixed log-hyperparameters ``theta`` (one row per output)."""
    Z_in = np.asarray(Z_in, dtype=float)
    Z_out = np.asarray(Z_out, dtype=float)
    if Z_out.ndim == 1:
        Z_out = Z_out[:, None]
    x_mean, x_std = _standardize(Z_in)
    y_mean, y_std = _standardize(Z_out)
    X = (Z_in - x_mean) / x_std
    Y = (Z_out - y_mean) / y_std
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape != (Y.shape[1], X.shape[1] + 2):
        raise ValueError(f"theta shape {theta.shape} does not match data")
    return _assemble(X, Y, x_mean, x_std, y_mean, y_std, theta, {})


def _assemble(X, Y, x_mean, x_std, y_mean, y_std, theta, info):
    n, q = Y.shape
    chol = np.empty((q, n, n))
    alpha = np.empty((q, n))
    jitter = np.empty(q)
    for j in range(q):
        chol[j], alpha[j], jitter[j] = _condition(X, Y[:, j], theta[j])
    return GpModel(X, Y, x_mean, x_std, y_mean, y_std, theta, chol, alpha, jitter, None, info)


def _bounds(d: int, cfg: GpConfig):
    lo_l, hi_l = np.log(cfg.lengthscale_bounds)
    lo_s, hi_s = np.log(cfg.signal_bounds)
    return [(lo_l, hi_l)] * d + [(lo_s, hi_s), (math.log(cfg.nugget_floor), math.log(cfg.noise_upper))]


def _initial_points(d: int, cfg: GpConfig, rng: np.random.Generator) -> list[np.ndarray]:
    base = np.concatenate([np.full(d, 0.5 * math.log(max(d, 1))), [0.0, math.log(1e-2)]])
    points = [base]
    for _ in range(max(cfg.restarts, 1) - 1):
        p = np.concatenate([
            base[:d] + rng.uniform(-1.5, 1.5, size=d),
            [rng.uniform(-1.0, 1.0), rng.uniform(math.log(1e-6), math.log(1e-1))],
        ])
        points.append(p)
    bnds = np.array(_bounds(d, cfg))
    return [np.clip(p, bnds[:, 0], bnds[:, 1]) for p in points]


def _fit_one(X, y, cfg: GpConfig, rng):
    d = X.shape[1]
    bounds = _bounds(d, cfg)

    def objective(t):
        try:
            v, g = gp_log_marginal(X, y, t)
        except GpNumericalError:
            return 1e25, np.zeros_like(t)
        return -v, -g

    best_theta, best_val, start_vals = None, -np.inf, []
    for t0 in _initial_points(d, cfg, rng):
        f0, _ = objective(t0)
        start_vals.append(-f0)
        res = minimize(objective, t0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.max_iter})
        val = -res.fun
        theta = res.x
        if -f0 > val:
            theta, val = t0, -f0
        if val > best_val:
            best_theta, best_val = theta, val
    if best_theta is None or not np.isfinite(best_val) or best_val <= -1e24:
        raise GpNumericalError("no restart produced a positive-definite kernel")
    return best_theta, best_val, start_vals


def gp_fit(Z_in, Z_out, config: GpConfig | None = None) -> GpModel:
    """Fit one GP per output column by maximizing the log marginal likelihood."""
    cfg = config or GpConfig()
    Z_in = np.asarray(Z_in, dtype=float)
    Z_out = np.asarray(Z_out, dtype=float)
    if Z_out.ndim == 1:
        Z_out = Z_out[:, None]
    if Z_in.ndim != 2 or Z_in.shape[0] != Z_out.shape[0]:
        raise ValueError(f"mismatched training shapes {Z_in.shape} and {Z_out.shape}")
    if Z_in.shape[0] < 3:
        raise ValueError("need at least 3 training points")

    x_mean, x_std = _standardize(Z_in)
    y_mean, y_std = _standardize(Z_out)
    X = (Z_in - x_mean) / x_std
    Y = (Z_out - y_mean) / y_std
    q = Y.shape[1]
    rng = np.random.default_rng(cfg.seed)

    theta = np.empty((q, X.shape[1] + 2))
    lml = np.empty(q)
    start_lml = []
    for j in range(q):
        theta[j], lml[j], starts = _fit_one(X, Y[:, j], cfg, rng)
        start_lml.append(starts)
    info = {"log_marginal": lml.tolist(), "start_log_marginal": start_lml}
    model = _assemble(X, Y, x_mean, x_std, y_mean, y_std, theta, info)
    if cfg.n_mcmc > 0:
        model = gp_sample_hypers(model, cfg.n_mcmc, cfg)
    return model


def _predict_standardized(X, y_cols, Xs, theta, L=None, alpha=None):
    d = X.shape[1]
    if L is None:
        L, alpha, _ = _condition(X, y_cols, theta)
    ks = se_kernel(Xs, X, theta)
    mean = ks @ alpha
    v = solve_triangular(L, ks.T, lower=True, check_finite=False)
    var = np.maximum(math.exp(theta[d]) - (v * v).sum(0), 0.0)
    return mean, var


def gp_predict(model: GpModel, Z):
    """Predictive mean and latent variance at ``Z``, in original output units."""
    Z = np.asarray(Z, dtype=float)
    squeeze = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.shape[1] != model.k_in:
        raise ValueError(f"expected {model.k_in} input columns, got {Z.shape[1]}")
    Xs = (Z - model.x_mean) / model.x_std
    m = Xs.shape[0]
    mean = np.empty((m, model.k_out))
    var = np.empty((m, model.k_out))
    for j in range(model.k_out):
        if model.samples is None or model.samples.shape[1] == 0:
            mean[:, j], var[:, j] = _predict_standardized(
                model.X, None, Xs, model.theta[j], model.chol[j], model.alpha[j])
        else:
            mus, vs = [], []
            for t in model.samples[j]:
                mu, v = _predict_standardized(model.X, model.Y[:, j], Xs, t)
                mus.append(mu)
                vs.append(v)
            mus = np.array(mus)
            mean[:, j] = mus.mean(0)
            var[:, j] = np.mean(vs, axis=0) + mus.var(0)
    mean = mean * model.y_std + model.y_mean
    var = var * model.y_std**2
    if squeeze:
        return mean[0], var[0]
    return mean, var


def gp_sample_hypers(model: GpModel, n_samples: int, config: GpConfig | None = None) -> GpModel:
    """Random-walk Metropolis over log-hyperparameters, one chain per output.

    The prior is an independent normal in log space centred at the fitted
    hyperparameters.  Returns a copy of ``model`` carrying ``n_samples``
    thinned draws per output (``n_samples == 0`` leaves predictions unchanged).
    """
    cfg = config or GpConfig()
    if n_samples <= 0:
        return replace(model, samples=None)
    rng = np.random.default_rng([cfg.seed, 7919])
    q, p = model.theta.shape
    out = np.empty((q, n_samples, p))
    rates = []
    bnds = np.array(_bounds(p - 2, cfg))
    lo, width = bnds[:, 0], bnds[:, 1] - bnds[:, 0]

    def propose(t, step):
        # reflect at the box edges: keeps the proposal symmetric when the
        # fitted optimum sits on a bound, as it often does
        y = np.mod(t + step * rng.standard_normal(p) - lo, 2 * width)
        return lo + np.where(y > width, 2 * width - y, y)

    for j in range(q):
        y = model.Y[:, j]
        center = model.theta[j]

        def log_post(t):
            if np.any(t < bnds[:, 0]) or np.any(t > bnds[:, 1]):
                return -np.inf
            try:
                v, _ = gp_log_marginal(model.X, y, t, with_grad=False)
            except GpNumericalError:
                return -np.inf
            return v - 0.5 * np.sum(((t - center) / cfg.prior_sd) ** 2)

        step = cfg.mcmc_step
        cur = center.copy()
        cur_lp = log_post(cur)
        accepted = 0
        for i in range(cfg.mcmc_burn):
            prop = propose(cur, step)
            lp = log_post(prop)
            if math.log(rng.random()) < lp - cur_lp:
                cur, cur_lp = prop, lp
                accepted += 1
            if (i + 1) % 25 == 0:
                # scale the step toward a ~25% acceptance rate
                rate = accepted / 25
                if not 0.15 <= rate <= 0.4:
                    step *= min(2.0, max(0.1, rate / 0.25))
                accepted = 0

        accepted = 0
        total = n_samples * cfg.mcmc_thin
        for i in range(total):
            prop = propose(cur, step)
            lp = log_post(prop)
            if math.log(rng.random()) < lp - cur_lp:
                cur, cur_lp = prop, lp
                accepted += 1
            if (i + 1) % cfg.mcmc_thin == 0:
                out[j, (i + 1) // cfg.mcmc_thin - 1] = cur
        rate = accepted / total
        rates.append(rate)
        log.info("output %d: Metropolis acceptance %.3f (step %.3g)", j, rate, step)
        if rate < 0.01:
            warnings.warn(f"output {j}: Metropolis acceptance {rate:.3%} is pathological; step adapted to {step:.3g}")

    info = dict(model.info, mcmc_acceptance=rates)
    return replace(model, samples=out, info=info)
