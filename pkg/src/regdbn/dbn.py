"""Deep belief network: a stack of RBMs trained greedily, then unfolded."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, RejectedInputError
from .finetune import FeedforwardNet
from .numerics import RngStream
from .rbm import LOGISTIC, ActivationParams, ContinuousRbm, Mode, cd1_update, mean_hidden

OUTPUT_WEIGHT_STD = 0.01


@dataclass(frozen=True)
class DbnModel:
    layers: tuple[ContinuousRbm, ...]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise RejectedInputError("a DBN needs at least one RBM")
        for lower, upper in zip(self.layers, self.layers[1:]):
            if lower.n_hidden != upper.n_visible:
                raise DimensionError(
                    f"layer with {lower.n_hidden} hidden units feeds one with {upper.n_visible} visible"
                )

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].n_visible] + [layer.n_hidden for layer in self.layers]

    @classmethod
    def initialize(cls, layer_sizes, stream: RngStream,
                   activation: ActivationParams = ActivationParams(),
                   mode: Mode = Mode.CONTINUOUS) -> "DbnModel":
        if len(layer_sizes) < 2:
            raise RejectedInputError("layer_sizes needs an input size and at least one hidden size")
        layers = tuple(
            ContinuousRbm.initialize(n_in, n_out, stream.child(f"layer{k}"), activation, mode)
            for k, (n_in, n_out) in enumerate(zip(layer_sizes, layer_sizes[1:]))
        )
        return cls(layers)


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 20
    learning_rate: float = 1.0
    batch_size: int = 100
    seed: int = 0
    binarize_hidden: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise RejectedInputError("pretraining needs at least one epoch")
        if not 0 < self.learning_rate <= 10:
            raise RejectedInputError("pretraining learning rate must lie in (0, 10]")
        if self.batch_size < 1:
            raise RejectedInputError("batch size must be positive")


@dataclass
class PretrainResult:
    model: DbnModel
    history: list[list[float]] = field(default_factory=list)  # per layer, one entry per epoch


def train_layer(rbm: ContinuousRbm, data: np.ndarray, config: PretrainConfig,
                stream: RngStream) -> tuple[ContinuousRbm, list[float]]:
    """Train one RBM for ``config.epochs`` full passes over ``data``.

    Each epoch draws a permutation from ``stream`` and then runs ``cd1_update``
    on consecutive batches with the same stream.  The epoch's recorded error
    is the row-weighted mean of the pre-update batch errors.
    """
    n = data.shape[0]
    history = []
    for epoch in range(config.epochs):
        order = stream.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = data[order[start:start + config.batch_size]]
            rbm, err = cd1_update(rbm, batch, config.learning_rate, stream,
                                  config.binarize_hidden, epoch=epoch + 1)
            total += err * batch.shape[0]
        history.append(total / n)
    return rbm, history


def pretrain(dbn: DbnModel, features, config: PretrainConfig) -> PretrainResult:
    """Greedy layer-wise CD-1 pretraining.

    Layer k sees the noise-free output of the already trained layers below it.
    Layer k draws from ``RngStream(config.seed).child(f"layer{k}")``.
    """
    data = np.asarray(features, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise RejectedInputError("features must be a non-empty matrix")
    if data.shape[1] != dbn.layers[0].n_visible:
        raise DimensionError(f"feature width {data.shape[1]} != input layer {dbn.layers[0].n_visible}")
    if not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 1:
        raise RejectedInputError("pretraining features must lie in [0, 1]")
    root = RngStream(config.seed)
    trained, history = [], []
    for k, rbm in enumerate(dbn.layers):
        rbm, errs = train_layer(rbm, data, config, root.child(f"layer{k}"))
        trained.append(rbm)
        history.append(errs)
        data = mean_hidden(rbm, data)
    return PretrainResult(DbnModel(tuple(trained)), history)


def propagate_up(dbn: DbnModel, v) -> np.ndarray:
    out = np.asarray(v, dtype=float)
    for rbm in dbn.layers:
        out = mean_hidden(rbm, out)
    return out


def unfold(dbn: DbnModel, stream: RngStream) -> FeedforwardNet:
    """Copy the stack into a regressor with a fresh single linear output unit."""
    first = dbn.layers[0]
    activation = LOGISTIC if first.mode is Mode.BINARY else first.activation.without_noise()
    for rbm in dbn.layers[1:]:
        if rbm.mode is not first.mode or rbm.activation != first.activation:
            raise RejectedInputError("unfold requires one activation shared by all layers")
    return FeedforwardNet(
        hidden_weights=[rbm.weights.copy() for rbm in dbn.layers],
        hidden_biases=[rbm.hidden_bias.copy() for rbm in dbn.layers],
        output_weights=stream.normal(dbn.layers[-1].n_hidden, scale=OUTPUT_WEIGHT_STD),
        output_bias=0.0,
        activation=activation,
    )
