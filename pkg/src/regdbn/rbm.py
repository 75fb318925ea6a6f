"""Restricted Boltzmann machine with binary and continuous units.

Binary units use the logistic conditionals.  Continuous units replace the
Bernoulli draw by a bounded sigmoid

    phi(x) = theta_low + (theta_high - theta_low) * logistic(a * x)

applied to ``bias + weighted input + sigma * N(0, 1)``.  Training is one-step
contrastive divergence: the increment ``lr * (<v0 h0> - <v1 h1>)`` is added to
the current parameters.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DimensionError, DivergenceError, RejectedInputError
from .numerics import RngStream

MAX_ENUMERATED_UNITS = 12


class Mode(str, enum.Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ActivationParams:
    theta_low: float = 0.0
    theta_high: float = 1.0
    sigma: float = 0.2
    noise_control: float = 1.0

    def __post_init__(self):
        if not self.theta_low < self.theta_high:
            raise RejectedInputError("theta_low must be below theta_high")
        if self.sigma < 0:
            raise RejectedInputError("sigma must be non-negative")
        if self.noise_control <= 0:
            raise RejectedInputError("noise_control must be positive")

    def phi(self, x):
        return self.theta_low + (self.theta_high - self.theta_low) * expit(self.noise_control * x)

    def phi_prime(self, x):
        s = expit(self.noise_control * x)
        return (self.theta_high - self.theta_low) * self.noise_control * s * (1.0 - s)

    def without_noise(self) -> "ActivationParams":
        return replace(self, sigma=0.0)


LOGISTIC = ActivationParams(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class ContinuousRbm:
    weights: np.ndarray  # n_visible x n_hidden
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    activation: ActivationParams = ActivationParams()
    mode: Mode = Mode.CONTINUOUS

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2:
            raise DimensionError("weights must be a matrix")
        if self.visible_bias.shape != (w.shape[0],) or self.hidden_bias.shape != (w.shape[1],):
            raise DimensionError(
                f"bias shapes {self.visible_bias.shape}/{self.hidden_bias.shape} "
                f"do not match weights {w.shape}"
            )

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def initialize(cls, n_visible: int, n_hidden: int, stream: RngStream,
                   activation: ActivationParams = ActivationParams(),
                   mode: Mode = Mode.CONTINUOUS, weight_std: float = 0.01) -> "ContinuousRbm":
        return cls(
            stream.normal((n_visible, n_hidden), scale=weight_std),
            np.zeros(n_visible),
            np.zeros(n_hidden),
            activation,
            Mode(mode),
        )

    def mirrored(self) -> "ContinuousRbm":
        """Swap the roles of the visible and hidden layers."""
        return replace(self, weights=self.weights.T.copy(),
                       visible_bias=self.hidden_bias.copy(), hidden_bias=self.visible_bias.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.visible_bias))
                    and np.all(np.isfinite(self.hidden_bias)))


@dataclass(frozen=True)
class RbmGradient:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.visible_bias, self.hidden_bias])


@dataclass(frozen=True)
class Chain:
    """States of one Gibbs step, each a (batch, units) matrix."""

    v0: np.ndarray
    h0: np.ndarray
    v1: np.ndarray
    h1: np.ndarray


def _check_width(x, width: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (width,):
        raise DimensionError(f"{what} has width {x.shape[-1:] or 'scalar'}, expected {width}")
    return x


def _require_mode(rbm: ContinuousRbm, mode: Mode, op: str):
    if rbm.mode is not mode:
        raise RejectedInputError(f"{op} requires {mode.value} mode, rbm is {rbm.mode.value}")


def hidden_preactivation(rbm: ContinuousRbm, v) -> np.ndarray:
    v = _check_width(v, rbm.n_visible, "visible vector")
    return v @ rbm.weights + rbm.hidden_bias


def visible_preactivation(rbm: ContinuousRbm, h) -> np.ndarray:
    h = _check_width(h, rbm.n_hidden, "hidden vector")
    return h @ rbm.weights.T + rbm.visible_bias


def hidden_prob(rbm: ContinuousRbm, v) -> np.ndarray:
    _require_mode(rbm, Mode.BINARY, "hidden_prob")
    return expit(hidden_preactivation(rbm, v))


def visible_prob(rbm: ContinuousRbm, h) -> np.ndarray:
    _require_mode(rbm, Mode.BINARY, "visible_prob")
    return expit(visible_preactivation(rbm, h))


def _noisy(rbm, pre, stream, noise):
    if noise is not None:
        return pre + rbm.activation.sigma * np.asarray(noise, dtype=float)
    if stream is not None and rbm.activation.sigma > 0:
        return pre + rbm.activation.sigma * stream.normal(pre.shape)
    return pre


def hidden_activation(rbm: ContinuousRbm, v, stream: RngStream | None = None, noise=None) -> np.ndarray:
    """Continuous hidden states.  No stream and no explicit noise means noise off."""
    _require_mode(rbm, Mode.CONTINUOUS, "hidden_activation")
    return rbm.activation.phi(_noisy(rbm, hidden_preactivation(rbm, v), stream, noise))


def visible_activation(rbm: ContinuousRbm, h, stream: RngStream | None = None, noise=None) -> np.ndarray:
    _require_mode(rbm, Mode.CONTINUOUS, "visible_activation")
    return rbm.activation.phi(_noisy(rbm, visible_preactivation(rbm, h), stream, noise))


def mean_hidden(rbm: ContinuousRbm, v) -> np.ndarray:
    """Deterministic upward pass in either mode."""
    if rbm.mode is Mode.BINARY:
        return hidden_prob(rbm, v)
    return hidden_activation(rbm, v)


def mean_visible(rbm: ContinuousRbm, h) -> np.ndarray:
    if rbm.mode is Mode.BINARY:
        return visible_prob(rbm, h)
    return visible_activation(rbm, h)


def _bernoulli(p, stream: RngStream) -> np.ndarray:
    return (stream.uniform(size=p.shape) < p).astype(float)


def gibbs_chain(rbm: ContinuousRbm, v0, stream: RngStream, binarize_hidden: bool = False) -> Chain:
    """Run one Gibbs step from the data rows ``v0``.

    Binary mode samples h0 and v1 and keeps the hidden probabilities as the
    h0/h1 statistics.  Continuous mode propagates noisy continuous states; with
    ``binarize_hidden`` the hidden state that drives the reconstruction is a
    two-level draw between the asymptotes.
    """
    v0 = np.atleast_2d(_check_width(v0, rbm.n_visible, "batch"))
    if rbm.mode is Mode.BINARY:
        h0 = hidden_prob(rbm, v0)
        v1 = _bernoulli(visible_prob(rbm, _bernoulli(h0, stream)), stream)
        h1 = hidden_prob(rbm, v1)
        return Chain(v0, h0, v1, h1)
    act = rbm.activation
    h0 = hidden_activation(rbm, v0, stream)
    drive = h0
    if binarize_hidden:
        span = act.theta_high - act.theta_low
        drive = act.theta_low + span * _bernoulli((h0 - act.theta_low) / span, stream)
    v1 = visible_activation(rbm, drive, stream)
    h1 = hidden_activation(rbm, v1, stream)
    return Chain(v0, h0, v1, h1)


def chain_gradient(chain: Chain) -> RbmGradient:
    """Batch-averaged CD statistics ``<v0 h0> - <v1 h1>`` and bias analogues."""
    n = chain.v0.shape[0]
    dw = (chain.v0.T @ chain.h0 - chain.v1.T @ chain.h1) / n
    dc = (chain.v0 - chain.v1).mean(axis=0)
    db = (chain.h0 - chain.h1).mean(axis=0)
    return RbmGradient(dw, dc, db)


def apply_gradient(rbm: ContinuousRbm, grad: RbmGradient, learning_rate: float) -> ContinuousRbm:
    # overflow surfaces as non-finite parameters, checked by the caller
    with np.errstate(over="ignore", invalid="ignore"):
        return replace(
        rbm,
            weights=rbm.weights + learning_rate * grad.weights,
            visible_bias=rbm.visible_bias + learning_rate * grad.visible_bias,
            hidden_bias=rbm.hidden_bias + learning_rate * grad.hidden_bias,
        )


def reconstruction_error(rbm: ContinuousRbm, batch) -> float:
    """Mean squared difference between rows and their noise-free reconstruction."""
    batch = np.atleast_2d(_check_width(batch, rbm.n_visible, "batch"))
    if batch.shape[0] == 0:
        raise RejectedInputError("empty batch")
    recon = mean_visible(rbm, mean_hidden(rbm, batch))
    return float(np.mean((batch - recon) ** 2))


def _check_batch(rbm: ContinuousRbm, batch) -> np.ndarray:
    batch = np.atleast_2d(_check_width(batch, rbm.n_visible, "batch"))
    if batch.shape[0] == 0:
        raise RejectedInputError("empty batch")
    if rbm.mode is Mode.BINARY:
        if not np.all((batch == 0) | (batch == 1)):
            raise RejectedInputError("binary rbm requires 0/1 batch entries")
    elif np.any(batch < 0) or np.any(batch > 1) or not np.all(np.isfinite(batch)):
        raise RejectedInputError("continuous rbm requires batch entries in [0, 1]")
    return batch


def cd1_update(rbm: ContinuousRbm, batch, learning_rate: float, stream: RngStream,
               binarize_hidden: bool = False, epoch: int | None = None) -> tuple[ContinuousRbm, float]:
    """One CD-1 step on ``batch``; returns the new rbm and the pre-update error."""
    if learning_rate <= 0:
        raise RejectedInputError("learning rate must be positive")
    batch = _check_batch(rbm, batch)
    err = reconstruction_error(rbm, batch)
    chain = gibbs_chain(rbm, batch, stream, binarize_hidden)
    updated = apply_gradient(rbm, chain_gradient(chain), learning_rate)
    if not updated.is_finite():
        where = f" at epoch {epoch}" if epoch is not None else ""
        raise DivergenceError(f"non-finite rbm parameters{where} (learning rate {learning_rate})",
                              epoch=epoch, learning_rate=learning_rate)
    return updated, err


def _enumerate_states(n: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(-1, n)


def _check_enumerable(rbm: ContinuousRbm):
    _require_mode(rbm, Mode.BINARY, "exact enumeration")
    if rbm.n_visible + rbm.n_hidden > MAX_ENUMERATED_UNITS:
        raise RejectedInputError(
            f"exact enumeration limited to {MAX_ENUMERATED_UNITS} units, "
            f"rbm has {rbm.n_visible + rbm.n_hidden}"
        )


def _joint_log_weights(rbm: ContinuousRbm, vs: np.ndarray, hs: np.ndarray) -> np.ndarray:
    # -energy(v, h) for every pair, shape (len(vs), len(hs))
    return vs @ rbm.weights @ hs.T + (vs @ rbm.visible_bias)[:, None] + (hs @ rbm.hidden_bias)[None, :]


def exact_loglik(rbm: ContinuousRbm, batch) -> float:
    """Mean log-likelihood of binary rows, by full enumeration."""
    _check_enumerable(rbm)
    batch = np.atleast_2d(_check_width(batch, rbm.n_visible, "batch"))
    vs = _enumerate_states(rbm.n_visible)
    hs = _enumerate_states(rbm.n_hidden)
    log_z = logsumexp(_joint_log_weights(rbm, vs, hs))
    log_unnorm = logsumexp(_joint_log_weights(rbm, batch, hs), axis=1)
    return float(np.mean(log_unnorm) - log_z)


def exact_loglik_gradient(rbm: ContinuousRbm, batch) -> RbmGradient:
    """Gradient of the mean log-likelihood: data minus model expectations."""
    _check_enumerable(rbm)
    batch = np.atleast_2d(_check_width(batch, rbm.n_visible, "batch"))
    if batch.shape[0] == 0:
        raise RejectedInputError("empty batch")
    vs = _enumerate_states(rbm.n_visible)
    hs = _enumerate_states(rbm.n_hidden)
    logw = _joint_log_weights(rbm, vs, hs)
    p = np.exp(logw - logsumexp(logw))
    model_vh = vs.T @ p @ hs
    model_v = p.sum(axis=1) @ vs
    model_h = p.sum(axis=0) @ hs
    h_data = expit(batch @ rbm.weights + rbm.hidden_bias)
    n = batch.shape[0]
    return RbmGradient(
        batch.T @ h_data / n - model_vh,
        batch.mean(axis=0) - model_v,
        h_data.mean(axis=0) - model_h,
    )
