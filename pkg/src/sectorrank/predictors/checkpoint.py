"""JSON checkpoints for fitted predictors.

Format ``sectorrank-model v1``::

    {
      "format": "sectorrank-model v1",
      "kind": "ridge" | "lstm" | "gru" | "esn",
      "params": {...},                 # constructor arguments
      "standardizer": {"mean": [...], "scale": [...],
                       "target_mean": x, "target_scale": x},
      "lookback": L, "n_features": p,
      "arrays": {"<name>": {"shape": [...], "data": [...]}},
      "scalars": {...}
    }

Arrays are stored flattened in C order. Python's ``json`` writes floats with
``repr`` so a load reproduces parameters bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .esn import EsnNetwork, Reservoir
from .recurrent import GruLayer, GruNetwork, LstmLayer, LstmNetwork
from .ridge import RidgeModel
from .windows import Standardizer

FORMAT = "sectorrank-model v1"

_KINDS = {"ridge": RidgeModel, "lstm": LstmNetwork, "gru": GruNetwork, "esn": EsnNetwork}


def _kind_of(model) -> str:
    for kind, cls in _KINDS.items():
        if type(model) is cls:
            return kind
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _pack(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unpack(doc) -> np.ndarray:
    return np.array(doc["data"], dtype=float).reshape(doc["shape"])


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, np.generic):
        return value.item()
    return value


def to_dict(model) -> dict:
    if not hasattr(model, "standardizer_"):
        raise ValueError("cannot checkpoint an unfitted model")
    kind = _kind_of(model)
    arrays, scalars = {}, {}
    if kind == "ridge":
        arrays["coef"] = _pack(model.coef_)
        scalars["intercept"] = model.intercept_
    elif kind == "esn":
        res = model.reservoir_
        arrays.update(W_in=_pack(res.W_in), W=_pack(res.W), coef=_pack(model.coef_))
        scalars.update(intercept=model.intercept_, spectral_radius=res.spectral_radius)
    else:
        for k, layer in enumerate(model.layers_):
            arrays.update({f"layer{k}.W": _pack(layer.W), f"layer{k}.U": _pack(layer.U), f"layer{k}.b": _pack(layer.b)})
        arrays.update(readout_w=_pack(model.readout_w_), readout_b=_pack(model.readout_b_))
        scalars["epochs_run"] = model.epochs_run_
        arrays["loss_history"] = _pack(model.loss_history_)
    return {
        "format": FORMAT,
        "kind": kind,
        "params": {k: _jsonable(v) for k, v in model.get_params().items()},
        "standardizer": model.standardizer_.to_dict(),
        "lookback": model.lookback_,
        "n_features": model.n_features_in_,
        "arrays": arrays,
        "scalars": scalars,
    }


def from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    kind = doc["kind"]
    params = dict(doc["params"])
    if "hidden_sizes" in params:
        params["hidden_sizes"] = tuple(params["hidden_sizes"])
    model = _KINDS[kind](**params)
    model.standardizer_ = Standardizer.from_dict(doc["standardizer"])
    model.lookback_ = int(doc["lookback"])
    model.n_features_in_ = int(doc["n_features"])
    arrays = {k: _unpack(v) for k, v in doc["arrays"].items()}
    scalars = doc["scalars"]
    if kind == "ridge":
        model.coef_, model.intercept_ = arrays["coef"], float(scalars["intercept"])
    elif kind == "esn":
        model.reservoir_ = Reservoir(
            arrays["W_in"], arrays["W"], float(params["leaking_rate"]),
            np.zeros(arrays["W"].shape[0]), float(scalars["spectral_radius"]),
        )
        model.coef_, model.intercept_ = arrays["coef"], float(scalars["intercept"])
    else:
        layer_cls = LstmLayer if kind == "lstm" else GruLayer
        model.layers_ = [
            layer_cls(arrays[f"layer{k}.W"], arrays[f"layer{k}.U"], arrays[f"layer{k}.b"])
            for k in range(len(model.hidden_sizes))
        ]
        model.readout_w_, model.readout_b_ = arrays["readout_w"], arrays["readout_b"]
        model.loss_history_ = arrays["loss_history"].tolist()
        model.epochs_run_ = int(scalars["epochs_run"])
    return model


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(to_dict(model)) + "\n", encoding="utf-8")


def load_model(path):
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
