"""Price predictors over supervised lookback windows."""

from .base import WindowRegressor, predict_price
from .checkpoint import load_model, save_model
from .esn import EsnNetwork, esn_fit_readout, esn_init, esn_update
from .recurrent import (
    GruNetwork,
    LstmNetwork,
    TrainConfig,
    TrainingDivergedError,
    gru_cell,
    lstm_cell,
    rnn_train,
)
from .ridge import RidgeModel, ridge_fit, ridge_solve
from .windows import Standardizer, SupervisedWindowSet, make_supervised, query_block

MODEL_KINDS = ("ridge", "lstm", "gru", "esn")

_FACTORIES = {"ridge": RidgeModel, "lstm": LstmNetwork, "gru": GruNetwork, "esn": EsnNetwork}


def make_model(kind: str, seed: int = 0, **params) -> WindowRegressor:
    """Construct an unfitted predictor of ``kind`` with ``params`` overriding defaults."""
    try:
        cls = _FACTORIES[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}") from None
    if "hidden_sizes" in params:
        params["hidden_sizes"] = tuple(params["hidden_sizes"])
    if kind != "ridge":
        params.setdefault("random_state", seed)
    return cls(**params)


__all__ = [
    "MODEL_KINDS",
    "make_model",
    "WindowRegressor",
    "predict_price",
    "save_model",
    "load_model",
    "EsnNetwork",
    "esn_init",
    "esn_update",
    "esn_fit_readout",
    "LstmNetwork",
    "GruNetwork",
    "TrainConfig",
    "TrainingDivergedError",
    "lstm_cell",
    "gru_cell",
    "rnn_train",
    "RidgeModel",
    "ridge_fit",
    "ridge_solve",
    "Standardizer",
    "SupervisedWindowSet",
    "make_supervised",
    "query_block",
]
