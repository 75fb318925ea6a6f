"""Supervised fine-tuning under the regularized objective F = alpha*P + beta*E_W.

P is the mean squared prediction error over the provided rows and E_W the
mean of the squared weights of every layer (biases excluded).  Training is
plain full-batch gradient descent.  With ``reestimate`` enabled, alpha and
beta are refreshed from the evidence approximation every
``reestimate_interval`` epochs.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DivergenceError, RejectedInputError
from .numerics import RngStream
from .rbm import ActivationParams

HISTORY_COLUMNS = ("epoch", "F_W", "P", "E_W", "alpha", "beta")


@dataclass
class FeedforwardNet:
    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    output_weights: np.ndarray
    output_bias: float
    activation: ActivationParams

    def __post_init__(self):
        self.activation = self.activation.without_noise()
        self.output_bias = float(self.output_bias)
        if len(self.hidden_weights) != len(self.hidden_biases):
            raise DimensionError("one bias vector per hidden layer")
        for k, (w, b) in enumerate(zip(self.hidden_weights, self.hidden_biases)):
            if b.shape != (w.shape[1],):
                raise DimensionError(f"hidden layer {k}: bias {b.shape} vs weights {w.shape}")
            if k and w.shape[0] != self.hidden_weights[k - 1].shape[1]:
                raise DimensionError(f"hidden layer {k} input width mismatch")
        last = self.hidden_weights[-1].shape[1] if self.hidden_weights else None
        if last is not None and self.output_weights.shape != (last,):
            raise DimensionError(f"output weights {self.output_weights.shape}, expected ({last},)")

    @property
    def input_width(self) -> int:
        if self.hidden_weights:
            return self.hidden_weights[0].shape[0]
        return self.output_weights.shape[0]

    @property
    def structure(self) -> list[int]:
        return [self.input_width] + [w.shape[1] for w in self.hidden_weights] + [1]

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.hidden_weights) + self.output_weights.size

    def copy(self) -> "FeedforwardNet":
        return FeedforwardNet([w.copy() for w in self.hidden_weights],
                              [b.copy() for b in self.hidden_biases],
                              self.output_weights.copy(), self.output_bias, self.activation)

    # flat layout: per hidden layer W (row-major) then b; output w; output b
    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.hidden_weights, self.hidden_biases):
            parts += [w.ravel(), b]
        parts += [self.output_weights, [self.output_bias]]
        return np.concatenate(parts)

    def weight_mask(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.hidden_weights, self.hidden_biases):
            parts += [np.ones(w.size, bool), np.zeros(b.size, bool)]
        parts += [np.ones(self.output_weights.size, bool), [False]]
        return np.concatenate(parts)

    def with_flat(self, vec) -> "FeedforwardNet":
        vec = np.asarray(vec, dtype=float).ravel()
        size = self.flatten().size
        if vec.size != size:
            raise DimensionError(f"flat vector has {vec.size} entries, net has {size}")
        pos = 0

        def take(shape):
            nonlocal pos
            n = int(np.prod(shape))
            out = vec[pos:pos + n].reshape(shape).copy()
            pos += n
            return out

        ws, bs = [], []
        for w, b in zip(self.hidden_weights, self.hidden_biases):
            ws.append(take(w.shape))
            bs.append(take(b.shape))
        ow = take(self.output_weights.shape)
        ob = float(take((1,))[0])
        return FeedforwardNet(ws, bs, ow, ob, self.activation)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flatten())))


def random_net(structure, stream: RngStream, activation: ActivationParams = ActivationParams(),
               output_std: float = 0.01) -> FeedforwardNet:
    """Randomly initialized net; hidden weights ~ N(0, 1/fan_in).

    Hidden layers draw from ``stream.child("hidden")`` and the output layer
    from ``stream.child("output")``, the same stream ``unfold`` is given by
    the benchmark builders.
    """
    structure = list(structure)
    if len(structure) < 3 or structure[-1] != 1:
        raise RejectedInputError("structure must be input-hidden...-1")
    hidden = stream.child("hidden")
    ws, bs = [], []
    for n_in, n_out in zip(structure[:-2], structure[1:-1]):
        ws.append(hidden.normal((n_in, n_out), scale=1.0 / np.sqrt(n_in)))
        bs.append(np.zeros(n_out))
    ow = stream.child("output").normal(structure[-2], scale=output_std)
    return FeedforwardNet(ws, bs, ow, 0.0, activation)


def _forward_cache(net: FeedforwardNet, x: np.ndarray):
    acts, pres = [x], []
    a = x
    for w, b in zip(net.hidden_weights, net.hidden_biases):
        z = a @ w + b
        a = net.activation.phi(z)
        pres.append(z)
        acts.append(a)
    return acts, pres, a @ net.output_weights + net.output_bias


def _as_rows(net: FeedforwardNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (net.input_width,):
        raise DimensionError(f"input width {x.shape[-1:]} != net input {net.input_width}")
    return x


def forward(net: FeedforwardNet, x):
    """Prediction for one row (returns float) or a matrix of rows (returns vector)."""
    x = _as_rows(net, x)
    _, _, out = _forward_cache(net, np.atleast_2d(x))
    return float(out[0]) if x.ndim == 1 else out


def _check_data(net, features, targets):
    x = np.atleast_2d(_as_rows(net, features))
    t = np.asarray(targets, dtype=float).reshape(-1)
    if x.shape[0] == 0:
        raise RejectedInputError("empty training data")
    if x.shape[0] != t.shape[0]:
        raise DimensionError(f"{x.shape[0]} feature rows vs {t.shape[0]} targets")
    return x, t


def weight_penalty(net: FeedforwardNet) -> float:
    total = sum(float(np.sum(w * w)) for w in net.hidden_weights)
    total += float(np.sum(net.output_weights ** 2))
    return total / net.n_weights


def objective(net: FeedforwardNet, features, targets, alpha: float, beta: float):
    """Return ``(F_W, P, E_W)``."""
    x, t = _check_data(net, features, targets)
    _, _, out = _forward_cache(net, x)
    p = float(np.mean((out - t) ** 2))
    ew = weight_penalty(net)
    return alpha * p + beta * ew, p, ew


@dataclass
class _Grads:
    hidden_weights: list
    hidden_biases: list
    output_weights: np.ndarray
    output_bias: float


def _mse_grads(net: FeedforwardNet, x: np.ndarray, t: np.ndarray) -> _Grads:
    """Backpropagated gradient of P alone."""
    acts, pres, out = _forward_cache(net, x)
    dy = 2.0 * (out - t) / t.shape[0]
    g_ow = acts[-1].T @ dy
    g_ob = float(np.sum(dy))
    delta = np.outer(dy, net.output_weights)
    gws, gbs = [], []
    for k in range(len(net.hidden_weights) - 1, -1, -1):
        dz = delta * net.activation.phi_prime(pres[k])
        gws.append(acts[k].T @ dz)
        gbs.append(dz.sum(axis=0))
        delta = dz @ net.hidden_weights[k].T
    return _Grads(gws[::-1], gbs[::-1], g_ow, g_ob)


def _objective_grads(net, x, t, alpha, beta) -> _Grads:
    g = _mse_grads(net, x, t)
    scale = 2.0 / net.n_weights
    return _Grads(
        [alpha * gw + beta * (scale * w) for gw, w in zip(g.hidden_weights, net.hidden_weights)],
        [alpha * gb for gb in g.hidden_biases],
        alpha * g.output_weights + beta * (scale * net.output_weights),
        alpha * g.output_bias,
    )


def _flatten_grads(g: _Grads) -> np.ndarray:
    parts = []
    for w, b in zip(g.hidden_weights, g.hidden_biases):
        parts += [w.ravel(), b]
    parts += [g.output_weights, [g.output_bias]]
    return np.concatenate(parts)


def gradient(net: FeedforwardNet, features, targets, alpha: float, beta: float) -> np.ndarray:
    """Exact gradient of F_W, in the layout of ``FeedforwardNet.flatten``."""
    x, t = _check_data(net, features, targets)
    g = _flatten_grads(_objective_grads(net, x, t, alpha, beta))
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient")
    return g


def _step(net: FeedforwardNet, g: _Grads, lr: float) -> FeedforwardNet:
    return FeedforwardNet(
        [w - lr * gw for w, gw in zip(net.hidden_weights, g.hidden_weights)],
        [b - lr * gb for b, gb in zip(net.hidden_biases, g.hidden_biases)],
        net.output_weights - lr * g.output_weights,
        net.output_bias - lr * g.output_bias,
        net.activation,
    )


@dataclass(frozen=True)
class FineTuneConfig:
    alpha: float = 1.0
    beta: float = 0.01
    learning_rate: float = 0.5
    epochs: int = 1000
    reestimate: bool = False
    reestimate_interval: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise RejectedInputError("alpha, beta must be non-negative with a positive sum")
        if self.learning_rate <= 0:
            raise RejectedInputError("learning rate must be positive")
        if self.epochs < 1 or self.reestimate_interval < 1:
            raise RejectedInputError("epochs and reestimate_interval must be positive")


@dataclass
class TrainerState:
    epoch: int
    F_W: float
    P: float
    E_W: float
    alpha: float
    beta: float
    gamma: float | None = None
    singular: bool = False


def train(net: FeedforwardNet, features, targets, config: FineTuneConfig):
    """Gradient descent on F_W.  Returns ``(trained net, history)``.

    History entry ``e`` holds the objective evaluated at the parameters before
    step ``e``.  Re-estimated (alpha, beta) are rescaled to keep the configured
    alpha + beta, so only their ratio comes from the evidence update; this
    keeps the step size meaningful.
    """
    x, t = _check_data(net, features, targets)
    alpha, beta = config.alpha, config.beta
    gamma, singular = None, False
    history = []
    lr = config.learning_rate
    for epoch in range(1, config.epochs + 1):
        if config.reestimate and epoch > 1 and (epoch - 1) % config.reestimate_interval == 0:
            prev = TrainerState(epoch, 0.0, 0.0, 0.0, alpha, beta, gamma)
            a, b, gamma, singular = _reestimate(net, x, t, prev)
            total = config.alpha + config.beta
            alpha, beta = total * a / (a + b), total * b / (a + b)
        with np.errstate(over="ignore", invalid="ignore"):
            _, _, out = _forward_cache(net, x)
            p = float(np.mean((out - t) ** 2))
            ew = weight_penalty(net)
            fw = alpha * p + beta * ew
        if not np.isfinite(fw):
            raise DivergenceError(f"F_W became non-finite at epoch {epoch} with learning rate {lr}",
                                  epoch=epoch, learning_rate=lr)
        history.append(TrainerState(epoch, fw, p, ew, alpha, beta, gamma, singular))
        net = _step(net, _objective_grads(net, x, t, alpha, beta), lr)
    if not net.is_finite():
        raise DivergenceError(f"parameters became non-finite after epoch {config.epochs} "
                              f"with learning rate {lr}", epoch=config.epochs, learning_rate=lr)
    return net, history


def train_mse(net: FeedforwardNet, features, targets, learning_rate: float, epochs: int):
    """Ordinary back propagation on the mean squared error."""
    x, t = _check_data(net, features, targets)
    for _ in range(epochs):
        net = _step(net, _mse_grads(net, x, t), learning_rate)
    return net


# ---------------------------------------------------------------- evidence


def output_jacobian(net: FeedforwardNet, x: np.ndarray) -> np.ndarray:
    """d(prediction_t)/d(theta) for every row, in the flat parameter layout."""
    acts, pres, _ = _forward_cache(net, x)
    n = x.shape[0]
    blocks_w, blocks_b = [], []
    delta = np.broadcast_to(net.output_weights, (n, net.output_weights.size))
    for k in range(len(net.hidden_weights) - 1, -1, -1):
        dz = delta * net.activation.phi_prime(pres[k])
        blocks_w.append((acts[k][:, :, None] * dz[:, None, :]).reshape(n, -1))
        blocks_b.append(dz)
        delta = dz @ net.hidden_weights[k].T
    cols = []
    for w, b in zip(blocks_w[::-1], blocks_b[::-1]):
        cols += [w, b]
    cols += [acts[-1], np.ones((n, 1))]
    return np.hstack(cols)


def evidence_update(jtj: np.ndarray, sse: float, ssw: float, n_data: int,
                    weight_mask: np.ndarray, data_precision: float, weight_precision: float):
    """One evidence step in the sum-of-squares convention.

    The objective is ``data_precision * sse + weight_precision * ssw`` with
    Gauss-Newton Hessian ``H = 2*data_precision*JtJ + 2*weight_precision*M``
    (``M`` the diagonal weight mask).  Returns the new precisions and
    ``gamma = N_w - 2*weight_precision*trace_w(H^-1)``, clamped to [0, N_w].
    Raises ``np.linalg.LinAlgError`` when H is singular.
    """
    mask = np.asarray(weight_mask, dtype=bool)
    n_w = int(mask.sum())
    h = 2.0 * data_precision * jtj + 2.0 * weight_precision * np.diag(mask.astype(float))
    cond = np.linalg.cond(h)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError("singular Gauss-Newton Hessian")
    h_inv_diag = np.diag(np.linalg.inv(h))
    gamma = n_w - 2.0 * weight_precision * float(np.sum(h_inv_diag[mask]))
    gamma = min(max(gamma, 0.0), float(n_w))
    new_weight = gamma / (2.0 * ssw) if ssw > 0 else weight_precision
    new_data = (n_data - gamma) / (2.0 * sse) if sse > 0 else data_precision
    return new_data, new_weight, gamma


def _reestimate(net, x, t, state: TrainerState):
    n_w = net.n_weights
    n = x.shape[0]
    # objective alpha*P + beta*E_W equals (alpha/n)*sse + (beta/N_w)*ssw
    data_prec = state.alpha / n
    weight_prec = state.beta / n_w
    if data_prec <= 0 or weight_prec <= 0:
        data_prec = data_prec or 1.0 / n
        weight_prec = weight_prec or 1.0 / n_w
    jtj = np.zeros((net.flatten().size,) * 2)
    for start in range(0, n, 4096):
        j = output_jacobian(net, x[start:start + 4096])
        jtj += j.T @ j
    _, _, out = _forward_cache(net, x)
    sse = float(np.sum((out - t) ** 2))
    ssw = weight_penalty(net) * n_w
    try:
        new_data, new_weight, gamma = evidence_update(jtj, sse, ssw, n, net.weight_mask(),
                                                      data_prec, weight_prec)
    except np.linalg.LinAlgError:
        return state.alpha, state.beta, state.gamma, True
    if not (new_data > 0 and new_weight > 0):
        return state.alpha, state.beta, gamma, True
    return new_data * n, new_weight * n_w, gamma, False


def reestimate_hyperparams(net: FeedforwardNet, features, targets, state: TrainerState):
    """Evidence estimate of ``(alpha, beta, gamma)`` in the F_W convention.

    A singular Hessian leaves (alpha, beta) unchanged and sets
    ``state.singular``.
    """
    x, t = _check_data(net, features, targets)
    alpha, beta, gamma, singular = _reestimate(net, x, t, state)
    state.singular = singular
    return alpha, beta, gamma


def history_to_csv(history) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for s in history:
        writer.writerow([s.epoch] + [format(v, ".17g") for v in (s.F_W, s.P, s.E_W, s.alpha, s.beta)])
    return buf.getvalue()
