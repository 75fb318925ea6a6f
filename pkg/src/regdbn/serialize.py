"""JSON model container.

Every file is one JSON object::

    {"format_version": 1, "kind": "<kind>", ...payload}

``kind`` is one of ``dbn``, ``feedforward``, ``regressor``, ``nb``, ``kr``.
Arrays are nested lists of floats written with Python's shortest round-trip
repr, so loading reproduces every parameter bit for bit.

dbn
    ``layers``: list of ``{"mode", "activation", "weights", "visible_bias",
    "hidden_bias"}``; ``weights`` is n_visible x n_hidden.
feedforward
    ``activation``, ``hidden_weights`` (list of matrices), ``hidden_biases``,
    ``output_weights``, ``output_bias``.
regressor
    ``net`` (a feedforward payload), ``feature_scaler`` and ``target_scaler``
    (``{"minimum", "maximum"}``).
nb
    ``coefficients`` (intercept first), ``dispersion``.
kr
    ``features``, ``targets``, ``bandwidth``.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .baselines import KernelModel, NbModel
from .dbn import DbnModel
from .errors import SchemaError
from .finetune import FeedforwardNet
from .models import Regressor
from .numerics import Scaler
from .rbm import ActivationParams, ContinuousRbm, Mode

FORMAT_VERSION = 1


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _act(d) -> ActivationParams:
    return ActivationParams(**d)


def _net_payload(net: FeedforwardNet) -> dict:
    return {
        "activation": dataclasses.asdict(net.activation),
        "hidden_weights": [_arr(w) for w in net.hidden_weights],
        "hidden_biases": [_arr(b) for b in net.hidden_biases],
        "output_weights": _arr(net.output_weights),
        "output_bias": float(net.output_bias),
    }


def _net_from(d) -> FeedforwardNet:
    return FeedforwardNet(
        [np.array(w, dtype=float).reshape(len(w), -1) for w in d["hidden_weights"]],
        [np.array(b, dtype=float) for b in d["hidden_biases"]],
        np.array(d["output_weights"], dtype=float),
        float(d["output_bias"]),
        _act(d["activation"]),
    )


def to_dict(model) -> dict:
    if isinstance(model, DbnModel):
        body = {"kind": "dbn", "layer_sizes": model.layer_sizes, "layers": [
            {"mode": rbm.mode.value, "activation": dataclasses.asdict(rbm.activation),
             "weights": _arr(rbm.weights), "visible_bias": _arr(rbm.visible_bias),
             "hidden_bias": _arr(rbm.hidden_bias)} for rbm in model.layers]}
    elif isinstance(model, FeedforwardNet):
        body = {"kind": "feedforward", **_net_payload(model)}
    elif isinstance(model, Regressor):
        body = {"kind": "regressor", "net": _net_payload(model.net),
                "feature_scaler": model.feature_scaler.to_dict(),
                "target_scaler": model.target_scaler.to_dict()}
    elif isinstance(model, NbModel):
        body = {"kind": "nb", "coefficients": _arr(model.coefficients),
                "dispersion": float(model.dispersion)}
    elif isinstance(model, KernelModel):
        body = {"kind": "kr", "features": _arr(model.features), "targets": _arr(model.targets),
                "bandwidth": _arr(model.bandwidth)}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, **body}


def from_dict(d: dict):
    if d.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported model format version {d.get('format_version')!r}")
    kind = d.get("kind")
    if kind == "dbn":
        layers = tuple(
            ContinuousRbm(np.array(l["weights"], dtype=float).reshape(len(l["weights"]), -1),
                          np.array(l["visible_bias"], dtype=float),
                          np.array(l["hidden_bias"], dtype=float),
                          _act(l["activation"]), Mode(l["mode"]))
            for l in d["layers"])
        return DbnModel(layers)
    if kind == "feedforward":
        return _net_from(d)
    if kind == "regressor":
        return Regressor(_net_from(d["net"]), Scaler.from_dict(d["feature_scaler"]),
                         Scaler.from_dict(d["target_scaler"]))
    if kind == "nb":
        return NbModel(np.array(d["coefficients"], dtype=float), float(d["dispersion"]))
    if kind == "kr":
        feats = np.array(d["features"], dtype=float)
        return KernelModel(feats.reshape(len(d["features"]), -1), np.array(d["targets"], dtype=float),
                           np.array(d["bandwidth"], dtype=float))
    raise SchemaError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(to_dict(model)) + "\n", encoding="utf-8")


def load_model(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a model file ({exc})") from None
    return from_dict(d)
