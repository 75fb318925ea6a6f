"""Comparison models: NB2 regression, Nadaraya-Watson kernel regression and a
randomly initialized network trained with the shared fine-tuning code."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .errors import ConvergenceError, DimensionError, RejectedInputError
from .finetune import FeedforwardNet, FineTuneConfig, random_net, train
from .numerics import RngStream
from .rbm import ActivationParams

MAX_DISPERSION = 1e10


@dataclass(frozen=True)
class NbModel:
    coefficients: np.ndarray  # intercept first
    dispersion: float  # k in var = mu + mu^2 / k
    loglik: float = float("nan")
    iterations: int = 0


def _design(features) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=float))
    return np.hstack([np.ones((x.shape[0], 1)), x])


def nb_loglik(coefficients, dispersion: float, features, counts) -> float:
    x = _design(features)
    y = np.asarray(counts, dtype=float)
    mu = np.exp(x @ coefficients)
    k = dispersion
    return float(np.sum(gammaln(y + k) - gammaln(k) - gammaln(y + 1)
                        + k * np.log(k / (k + mu)) + y * np.log(mu / (k + mu))))


def fit_nb(features, counts, max_iter: int = 200, tol: float = 1e-8, trace: list | None = None) -> NbModel:
    """Maximum-likelihood NB2 fit with a log link.

    Alternates a Fisher-scoring step for the coefficients with a Newton step
    on log(k); each step is halved until the log-likelihood does not drop.
    Stops once an outer iteration changes the log-likelihood by less than
    ``tol``.  ``trace``, when given, receives the log-likelihood after each
    half-step.
    """
    x = _design(features)
    y = np.asarray(counts, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"{x.shape[0]} rows vs {y.shape[0]} counts")
    if y.size == 0 or np.any(y < 0) or np.any(y != np.round(y)) or not np.all(np.isfinite(x)):
        raise RejectedInputError("counts must be non-negative integers and features finite")
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise RejectedInputError("design matrix (with intercept) is rank deficient")
    if y.sum() == 0:
        raise RejectedInputError("all counts are zero; the log-link mean is unbounded")

    def ll(b, k):
        mu = np.exp(np.clip(x @ b, -700, 700))
        return float(np.sum(gammaln(y + k) - gammaln(k) + k * np.log(k / (k + mu))
                            + y * np.log(mu / (k + mu)) - gammaln(y + 1)))

    mean = y.mean()
    var = y.var()
    beta = np.zeros(x.shape[1])
    beta[0] = np.log(mean)
    k = mean ** 2 / (var - mean) if var > mean else 1e6
    k = float(np.clip(k, 1e-4, MAX_DISPERSION))
    cur = ll(beta, k)
    if trace is not None:
        trace.append(cur)

    for it in range(1, max_iter + 1):
        start = cur
        # Fisher scoring for the coefficients, k fixed
        mu = np.exp(x @ beta)
        w = mu * k / (k + mu)
        score = x.T @ ((y - mu) * k / (k + mu))
        info = x.T @ (x * w[:, None])
        step = np.linalg.solve(info, score)
        t = 1.0
        while True:
            cand = beta + t * step
            new = ll(cand, k)
            if np.isfinite(new) and new >= cur:
                beta, cur = cand, new
                break
            t *= 0.5
            if t < 1e-10:
                break
        if trace is not None:
            trace.append(cur)
        # Newton on log k, coefficients fixed
        mu = np.exp(x @ beta)
        d1 = np.sum(digamma(y + k) - digamma(k) + np.log(k / (k + mu)) + (mu - y) / (k + mu))
        d2 = np.sum(polygamma(1, y + k) - polygamma(1, k) + 1.0 / k - 1.0 / (k + mu)
                    - (mu - y) / (k + mu) ** 2)
        g = k * d1
        h = k * d1 + k * k * d2
        dlog = -g / h if h < 0 else np.sign(g)
        t = 1.0
        while True:
            cand_k = float(np.clip(k * np.exp(t * dlog), 1e-8, MAX_DISPERSION))
            new = ll(beta, cand_k)
            if np.isfinite(new) and new >= cur:
                k, cur = cand_k, new
                break
            t *= 0.5
            if t < 1e-10:
                break
        if trace is not None:
            trace.append(cur)
        if abs(cur - start) < tol:
            return NbModel(beta, k, cur, it)
    raise ConvergenceError(f"NB fit did not converge in {max_iter} iterations",
                           last=NbModel(beta, k, cur, max_iter))


def predict_nb(model: NbModel, x):
    """Mean prediction ``exp(intercept + x . slopes)`` for one row or many."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.coefficients.size - 1,):
        raise DimensionError(f"expected {model.coefficients.size - 1} features")
    out = np.exp(model.coefficients[0] + x @ model.coefficients[1:])
    return float(out) if x.ndim == 1 else out


# ---------------------------------------------------------------- kernel regression


@dataclass(frozen=True)
class KernelModel:
    features: np.ndarray
    targets: np.ndarray
    bandwidth: np.ndarray

    def __post_init__(self):
        if self.features.shape[0] == 0:
            raise RejectedInputError("kernel regression needs training rows")
        if np.any(self.bandwidth <= 0) or not np.all(np.isfinite(self.bandwidth)):
            raise RejectedInputError("bandwidths must be positive and finite")


def silverman_bandwidth(features) -> np.ndarray:
    """Multivariate normal-reference rule; zero-spread columns get 1.0."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    n, d = x.shape
    sd = x.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    factor = (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))
    return np.where(sd > 0, sd * factor, 1.0)


def _kernel_weights(model: KernelModel, q: np.ndarray) -> np.ndarray:
    z = (q[:, None, :] - model.features[None, :, :]) / model.bandwidth
    return np.exp(-0.5 * np.sum(z * z, axis=2))


def _loocv_score(features, targets, bandwidth) -> float:
    model = KernelModel(features, targets, bandwidth)
    n = features.shape[0]
    pred = np.empty(n)
    for start in range(0, n, 256):
        stop = min(start + 256, n)
        w = _kernel_weights(model, features[start:stop])
        w[np.arange(stop - start), np.arange(start, stop)] = 0.0
        den = w.sum(axis=1)
        pred[start:stop] = np.where(den > 0, (w @ targets) / np.where(den > 0, den, 1.0),
                                    targets.mean())
    return float(np.mean((pred - targets) ** 2))


def fit_kr(features, targets, bandwidth_rule="silverman") -> KernelModel:
    """Store the training set with a bandwidth per feature.

    ``bandwidth_rule`` is ``"silverman"``, ``"loocv"`` (best multiple of the
    Silverman bandwidth on a log grid), or a positive number / vector for a
    fixed bandwidth.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    if x.shape[0] == 0:
        raise RejectedInputError("kernel regression needs training rows")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"{x.shape[0]} rows vs {y.shape[0]} targets")
    if isinstance(bandwidth_rule, str):
        base = silverman_bandwidth(x)
        if bandwidth_rule == "silverman":
            h = base
        elif bandwidth_rule == "loocv":
            grid = np.geomspace(0.1, 10.0, 21)
            scores = [_loocv_score(x, y, base * c) for c in grid]
            h = base * grid[int(np.argmin(scores))]
        else:
            raise RejectedInputError(f"unknown bandwidth rule {bandwidth_rule!r}")
    else:
        h = np.broadcast_to(np.asarray(bandwidth_rule, dtype=float), (x.shape[1],)).copy()
    return KernelModel(x.copy(), y.copy(), np.asarray(h, dtype=float))


def predict_kr(model: KernelModel, x, with_flag: bool = False, chunk: int = 256):
    """Nadaraya-Watson prediction.

    Queries whose kernel weights all underflow get the global target mean and
    are flagged as extrapolated.
    """
    x = np.asarray(x, dtype=float)
    q = np.atleast_2d(x)
    if q.shape[1] != model.features.shape[1]:
        raise DimensionError(f"expected {model.features.shape[1]} features")
    preds = np.empty(q.shape[0])
    flags = np.zeros(q.shape[0], dtype=bool)
    for start in range(0, q.shape[0], chunk):
        w = _kernel_weights(model, q[start:start + chunk])
        den = w.sum(axis=1)
        empty = den == 0
        num = w @ model.targets
        preds[start:start + chunk] = np.where(empty, model.targets.mean(),
                                              num / np.where(empty, 1.0, den))
        flags[start:start + chunk] = empty
    if x.ndim == 1:
        preds, flags = float(preds[0]), bool(flags[0])
    return (preds, flags) if with_flag else preds


# ---------------------------------------------------------------- Bayesian NN


def train_bayesian_nn(features, targets, structure, config: FineTuneConfig,
                      stream: RngStream | None = None,
                      activation: ActivationParams = ActivationParams()):
    """Random initialization followed by the shared fine-tuning trainer."""
    stream = stream if stream is not None else RngStream(config.seed)
    net = random_net(structure, stream, activation.without_noise())
    return train(net, features, targets, config)


__all__ = [
    "NbModel", "KernelModel", "FeedforwardNet", "fit_nb", "predict_nb", "nb_loglik",
    "fit_kr", "predict_kr", "silverman_bandwidth", "train_bayesian_nn",
]
