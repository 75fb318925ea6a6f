"""Benchmark-ready builders wrapping each model with its preprocessing."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import KernelModel, NbModel, fit_kr, fit_nb, predict_kr, predict_nb
from .data import Dataset
from .dbn import DbnModel, PretrainConfig, PretrainResult, pretrain, unfold
from .errors import DimensionError
from .finetune import FeedforwardNet, FineTuneConfig, forward, random_net, train
from .numerics import RngStream, Scaler, fit_scaler
from .rbm import ActivationParams


@dataclass
class Regressor:
    """A fine-tuned net with the scalers that map raw rows and counts."""

    net: FeedforwardNet
    feature_scaler: Scaler
    target_scaler: Scaler
    history: list = field(default_factory=list, repr=False)
    pretrain_history: list = field(default_factory=list, repr=False)

    def __call__(self, features) -> np.ndarray:
        z = forward(self.net, self.feature_scaler.apply(np.atleast_2d(features)))
        return self.target_scaler.invert(z).reshape(-1)


@dataclass
class NbPredictor:
    model: NbModel

    def __call__(self, features) -> np.ndarray:
        return predict_nb(self.model, np.atleast_2d(features))


@dataclass
class KrPredictor:
    model: KernelModel

    def __call__(self, features) -> np.ndarray:
        return predict_kr(self.model, np.atleast_2d(features))


def _scale(train_ds: Dataset):
    fs = fit_scaler(train_ds.features)
    ts = fit_scaler(train_ds.targets)
    return fs, ts, fs.apply(train_ds.features), ts.apply(train_ds.targets)


def _check_structure(structure, ds: Dataset):
    if structure[0] != ds.features.shape[1]:
        raise DimensionError(f"structure expects {structure[0]} inputs, data has {ds.features.shape[1]}")


@dataclass(frozen=True)
class RegDbnBuilder:
    structure: tuple[int, ...] = (6, 10, 10, 1)
    pretrain_epochs: int = 20
    pretrain_lr: float = 1.0
    batch_size: int = 100
    activation: ActivationParams = ActivationParams()
    binarize_hidden: bool = False
    finetune: FineTuneConfig = FineTuneConfig()
    name: str = "regdbn"

    def fit(self, train_ds: Dataset, stream: RngStream) -> Regressor:
        _check_structure(self.structure, train_ds)
        fs, ts, x, y = _scale(train_ds)
        config = PretrainConfig(self.pretrain_epochs, self.pretrain_lr, self.batch_size,
                                stream.child("pretrain").derive_seed(), self.binarize_hidden)
        dbn = DbnModel.initialize(self.structure[:-1], stream.child("dbn-init"), self.activation)
        result: PretrainResult = pretrain(dbn, x, config)
        net = unfold(result.model, stream.child("output"))
        net, history = train(net, x, y, self.finetune)
        return Regressor(net, fs, ts, history, result.history)


@dataclass(frozen=True)
class BayesNnBuilder:
    """Same structure and fine-tuning as ``RegDbnBuilder`` without pretraining."""

    structure: tuple[int, ...] = (6, 10, 10, 1)
    activation: ActivationParams = ActivationParams()
    finetune: FineTuneConfig = FineTuneConfig()
    name: str = "bayesnn"

    def fit(self, train_ds: Dataset, stream: RngStream) -> Regressor:
        _check_structure(self.structure, train_ds)
        fs, ts, x, y = _scale(train_ds)
        net = random_net(self.structure, stream, self.activation.without_noise())
        net, history = train(net, x, y, self.finetune)
        return Regressor(net, fs, ts, history)


@dataclass(frozen=True)
class NbBuilder:
    name: str = "nb"

    def fit(self, train_ds: Dataset, stream: RngStream) -> NbPredictor:
        return NbPredictor(fit_nb(train_ds.features, train_ds.targets))


@dataclass(frozen=True)
class KrBuilder:
    bandwidth_rule: object = "silverman"
    name: str = "kr"

    def fit(self, train_ds: Dataset, stream: RngStream) -> KrPredictor:
        return KrPredictor(fit_kr(train_ds.features, train_ds.targets, self.bandwidth_rule))
