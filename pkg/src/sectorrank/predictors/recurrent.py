"""Stacked LSTM and GRU regressors trained by full-batch BPTT with Adam.

Row-vector convention throughout: a batch of inputs ``x`` has shape
(batch, in_dim) and a gate pre-activation is ``h_prev @ W.T + x @ U.T + b``.
Gate blocks are stacked along the first axis of ``W``, ``U`` and ``b`` in the
order (f, i, c, o) for LSTM and (z, r, h) for GRU.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import WindowRegressor

__all__ = [
    "LstmLayer",
    "GruLayer",
    "TrainConfig",
    "TrainingDivergedError",
    "lstm_cell",
    "gru_cell",
    "LstmNetwork",
    "GruNetwork",
    "rnn_train",
]


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class LstmLayer:
    W: np.ndarray  # (4H, H) recurrent weights
    U: np.ndarray  # (4H, D) input weights
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str):
        k = "fico".index(name)
        H = self.hidden
        s = slice(k * H, (k + 1) * H)
        return self.W[s], self.U[s], self.b[s]

    W_f = property(lambda self: self.gate("f")[0])
    U_f = property(lambda self: self.gate("f")[1])
    b_f = property(lambda self: self.gate("f")[2])
    W_i = property(lambda self: self.gate("i")[0])
    U_i = property(lambda self: self.gate("i")[1])
    b_i = property(lambda self: self.gate("i")[2])
    W_c = property(lambda self: self.gate("c")[0])
    U_c = property(lambda self: self.gate("c")[1])
    b_c = property(lambda self: self.gate("c")[2])
    W_o = property(lambda self: self.gate("o")[0])
    U_o = property(lambda self: self.gate("o")[1])
    b_o = property(lambda self: self.gate("o")[2])

    def arrays(self):
        return [self.W, self.U, self.b]


@dataclass
class GruLayer:
    W: np.ndarray  # (3H, H)
    U: np.ndarray  # (3H, D)
    b: np.ndarray  # (3H,)

    @property
    def hidden(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str):
        k = "zrh".index(name)
        H = self.hidden
        s = slice(k * H, (k + 1) * H)
        return self.W[s], self.U[s], self.b[s]

    W_z = property(lambda self: self.gate("z")[0])
    U_z = property(lambda self: self.gate("z")[1])
    b_z = property(lambda self: self.gate("z")[2])
    W_r = property(lambda self: self.gate("r")[0])
    U_r = property(lambda self: self.gate("r")[1])
    b_r = property(lambda self: self.gate("r")[2])
    W_h = property(lambda self: self.gate("h")[0])
    U_h = property(lambda self: self.gate("h")[1])
    b_h = property(lambda self: self.gate("h")[2])

    def arrays(self):
        return [self.W, self.U, self.b]


def _check_cell(x, h, layer):
    if x.shape[-1] != layer.U.shape[1] or h.shape[-1] != layer.hidden:
        raise ValueError(
            f"cell expects input {layer.U.shape[1]} and hidden {layer.hidden}, "
            f"got {x.shape[-1]} and {h.shape[-1]}"
        )


def _lstm_step(x, h_prev, c_prev, layer: LstmLayer):
    H = layer.hidden
    a = h_prev @ layer.W.T + x @ layer.U.T + layer.b
    f = sigmoid(a[..., :H])
    i = sigmoid(a[..., H : 2 * H])
    g = np.tanh(a[..., 2 * H : 3 * H])
    o = sigmoid(a[..., 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, f, i, g, o, tc)


def lstm_cell(x_t, h_prev, c_prev, layer: LstmLayer):
    """One LSTM step; returns ``(h_t, c_t)``. Accepts single vectors or batches."""
    x_t, h_prev, c_prev = (np.asarray(a, dtype=float) for a in (x_t, h_prev, c_prev))
    _check_cell(x_t, h_prev, layer)
    if c_prev.shape != h_prev.shape:
        raise ValueError("cell state and hidden state shapes differ")
    h, c, _ = _lstm_step(x_t, h_prev, c_prev, layer)
    return h, c


def _gru_step(x, h_prev, layer: GruLayer):
    H = layer.hidden
    W, U, b = layer.W, layer.U, layer.b
    xu = x @ U.T + b
    a_zr = h_prev @ W[: 2 * H].T + xu[..., : 2 * H]
    z = sigmoid(a_zr[..., :H])
    r = sigmoid(a_zr[..., H:])
    rh = r * h_prev
    ht = np.tanh(rh @ W[2 * H :].T + xu[..., 2 * H :])
    h = (1.0 - z) * h_prev + z * ht
    return h, (x, h_prev, z, r, rh, ht)


def gru_cell(x_t, h_prev, layer: GruLayer):
    """One GRU step; returns ``h_t``."""
    x_t, h_prev = np.asarray(x_t, dtype=float), np.asarray(h_prev, dtype=float)
    _check_cell(x_t, h_prev, layer)
    return _gru_step(x_t, h_prev, layer)[0]


def _lstm_back(dh, dc, cache, layer: LstmLayer, grads):
    x, h_prev, c_prev, f, i, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    da = np.concatenate(
        [
            dc * c_prev * f * (1.0 - f),
            dc * g * i * (1.0 - i),
            dc * i * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=-1,
    )
    grads[0] += da.T @ h_prev
    grads[1] += da.T @ x
    grads[2] += da.sum(axis=0)
    return da @ layer.W, dc * f, da @ layer.U


def _gru_back(dh, cache, layer: GruLayer, grads):
    x, h_prev, z, r, rh, ht = cache
    H = layer.hidden
    W = layer.W
    dz = dh * (ht - h_prev)
    dah = dh * z * (1.0 - ht * ht)
    dh_prev = dh * (1.0 - z)
    drh = dah @ W[2 * H :]
    dar = drh * h_prev * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dh_prev += drh * r
    dazr = np.concatenate([daz, dar], axis=-1)
    dh_prev += dazr @ W[: 2 * H]
    grads[0][: 2 * H] += dazr.T @ h_prev
    grads[0][2 * H :] += dah.T @ rh
    da = np.concatenate([dazr, dah], axis=-1)
    grads[1] += da.T @ x
    grads[2] += da.sum(axis=0)
    return dh_prev, da @ layer.U


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss or parameters) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and stopping settings for BPTT training.

    ``decay`` is a time decay of the learning rate,
    ``lr_t = learning_rate / (1 + decay * t)``; ``weight_decay`` is an
    optional L2 term added to the gradients.
    """

    learning_rate: float = 1e-4
    decay: float = 1e-7
    beta_1: float = 0.9
    beta_2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 1000
    patience: int = 25
    min_delta: float = 1e-6
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class _Adam:
    cfg: TrainConfig
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def step(self, params, grads):
        cfg = self.cfg
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        lr = cfg.learning_rate / (1.0 + cfg.decay * self.t)
        self.t += 1
        c1 = 1.0 - cfg.beta_1**self.t
        c2 = 1.0 - cfg.beta_2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if cfg.weight_decay:
                g = g + cfg.weight_decay * p
            m *= cfg.beta_1
            m += (1.0 - cfg.beta_1) * g
            v *= cfg.beta_2
            v += (1.0 - cfg.beta_2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)


class _RecurrentRegressor(WindowRegressor):
    """Stacked recurrent layers, relu between layers, linear readout of the last step."""

    _gates: int
    _layer_cls: type

    def _init_layers(self, n_inputs: int, rng: np.random.Generator):
        layers = []
        d = n_inputs
        for H in self.hidden_sizes:
            G = self._gates * H
            W = rng.uniform(-1, 1, (G, H)) / np.sqrt(H)
            U = rng.uniform(-1, 1, (G, d)) / np.sqrt(d)
            b = self._init_bias(H)
            layers.append(self._layer_cls(W, U, b))
            d = H
        self.layers_ = layers
        self.readout_w_ = np.zeros(d)
        self.readout_b_ = np.zeros(1)

    def _init_bias(self, H):
        return np.zeros(self._gates * H)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers_:
            out.extend(layer.arrays())
        out.extend([self.readout_w_, self.readout_b_])
        return out

    def _relu(self, a):
        return np.maximum(a, 0.0) if self.inter_layer_relu else a

    def _forward(self, Z, keep: bool = False):
        """Return predictions and, if ``keep``, per-layer caches for backprop."""
        B, L, _ = Z.shape
        seq = Z
        caches = []
        for layer in self.layers_:
            H = layer.hidden
            h = np.zeros((B, H))
            c = np.zeros((B, H))
            outs = np.empty((B, L, H))
            steps = []
            for t in range(L):
                if self._gates == 4:
                    h, c, cache = _lstm_step(seq[:, t], h, c, layer)
                else:
                    h, cache = _gru_step(seq[:, t], h, layer)
                outs[:, t] = h
                if keep:
                    steps.append(cache)
            caches.append((steps, outs))
            seq = self._relu(outs)
        top = seq[:, -1]
        pred = top @ self.readout_w_ + self.readout_b_[0]
        return pred, (caches, top)

    def loss_and_grads(self, Z, t):
        """RMSE on standardized data and its gradient for every parameter."""
        pred, (caches, top) = self._forward(Z, keep=True)
        resid = pred - t
        loss = float(np.sqrt(np.mean(resid * resid)))
        grads = [np.zeros_like(p) for p in self.parameters()]
        if loss == 0.0:
            return loss, grads
        dpred = resid / (len(t) * loss)
        grads[-2] += top.T @ dpred
        grads[-1][0] += dpred.sum()
        B, L, _ = Z.shape
        # gradient w.r.t. the (post-relu) output sequence of the current layer
        dseq = np.zeros((B, L, self.layers_[-1].hidden))
        dseq[:, -1] = np.outer(dpred, self.readout_w_)
        for k in range(len(self.layers_) - 1, -1, -1):
            layer = self.layers_[k]
            steps, outs = caches[k]
            if self.inter_layer_relu:
                dseq = dseq * (outs > 0.0)
            lg = grads[3 * k : 3 * k + 3]
            H = layer.hidden
            dh_next = np.zeros((B, H))
            dc_next = np.zeros((B, H))
            dx = np.empty((B, L, layer.U.shape[1]))
            for s in range(L - 1, -1, -1):
                dh = dseq[:, s] + dh_next
                if self._gates == 4:
                    dh_next, dc_next, dx[:, s] = _lstm_back(dh, dc_next, steps[s], layer, lg)
                else:
                    dh_next, dx[:, s] = _gru_back(dh, steps[s], layer, lg)
            dseq = dx
        return loss, grads

    def trace(self, X):
        """Gate activations of a forward pass on raw (unscaled) blocks, keyed by name."""
        Z = self.standardizer_.transform(X)
        _, (caches, _) = self._forward(Z, keep=True)
        names = ("f", "i", "c_tilde", "o", "tanh_c") if self._gates == 4 else ("z", "r", "h_tilde")
        pick = (3, 4, 5, 6, 7) if self._gates == 4 else (2, 3, 5)
        out = {n: [] for n in names}
        for steps, _ in caches:
            for cache in steps:
                for n, j in zip(names, pick):
                    out[n].append(cache[j])
        return {n: np.concatenate([a.ravel() for a in v]) for n, v in out.items()}

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            decay=self.decay,
            beta_1=self.beta_1,
            beta_2=self.beta_2,
            epsilon=self.epsilon,
            epochs=self.epochs,
            patience=self.patience,
            min_delta=self.min_delta,
            weight_decay=self.weight_decay,
            seed=self.random_state,
        )

    def _fit_scaled(self, Z, t):
        cfg = self.train_config()
        self._init_layers(Z.shape[2], np.random.default_rng(cfg.seed))
        self.loss_history_ = _train_loop(self, Z, t, cfg)

    def _predict_scaled(self, Z):
        return self._forward(Z)[0]


def _train_loop(net: _RecurrentRegressor, Z, t, cfg: TrainConfig) -> list[float]:
    adam = _Adam(cfg)
    history = []
    best = np.inf
    wait = 0
    for epoch in range(1, cfg.epochs + 1):
        loss, grads = net.loss_and_grads(Z, t)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch)
        history.append(loss)
        if loss <= 1e-12:
            break
        if loss < best - cfg.min_delta:
            best, wait = loss, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
        params = net.parameters()
        adam.step(params, grads)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingDivergedError(epoch)
    net.epochs_run_ = len(history)
    return history


def rnn_train(net: _RecurrentRegressor, windows, cfg: TrainConfig | None = None):
    """Fit ``net`` on ``windows`` with ``cfg`` overriding its optimizer settings.

    ``windows`` is a SupervisedWindowSet or an ``(inputs, targets)`` pair.
    Returns ``(net, loss_history)``.
    """
    if cfg is not None:
        net.set_params(
            learning_rate=cfg.learning_rate,
            decay=cfg.decay,
            beta_1=cfg.beta_1,
            beta_2=cfg.beta_2,
            epsilon=cfg.epsilon,
            epochs=cfg.epochs,
            patience=cfg.patience,
            min_delta=cfg.min_delta,
            weight_decay=cfg.weight_decay,
            random_state=cfg.seed,
        )
    if isinstance(windows, tuple):
        net.fit(*windows)
    else:
        net.fit(windows)
    return net, net.loss_history_


_DOC_PARAMS = """
    Parameters
    ----------
    hidden_sizes : tuple of int
        Units per stacked layer, bottom first.
    epochs : int
        Maximum full-batch epochs.
    learning_rate, decay, beta_1, beta_2, epsilon : float
        Adam settings; the step size decays as ``lr / (1 + decay * t)``.
    patience : int
        Epochs without a ``min_delta`` improvement in training RMSE before stopping.
    min_delta : float
    weight_decay : float
        Optional L2 coefficient added to every gradient.
    inter_layer_relu : bool
        Apply relu to each layer's hidden-state sequence before the next layer
        (and before the readout).
    standardize : bool
    random_state : int
        Seed for weight initialization.
"""


class LstmNetwork(_RecurrentRegressor):
    _gates = 4
    _layer_cls = LstmLayer

    def __init__(
        self,
        hidden_sizes=(16, 256, 64),
        epochs=1000,
        learning_rate=1e-4,
        decay=1e-7,
        beta_1=0.9,
        beta_2=0.999,
        epsilon=1e-8,
        patience=25,
        min_delta=1e-6,
        weight_decay=0.0,
        inter_layer_relu=True,
        standardize=True,
        random_state=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.decay = decay
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.patience = patience
        self.min_delta = min_delta
        self.weight_decay = weight_decay
        self.inter_layer_relu = inter_layer_relu
        self.standardize = standardize
        self.random_state = random_state

    def _init_bias(self, H):
        b = np.zeros(4 * H)
        b[:H] = 1.0  # forget gate
        return b


LstmNetwork.__doc__ = "Stacked LSTM price regressor.\n" + _DOC_PARAMS


class GruNetwork(_RecurrentRegressor):
    _gates = 3
    _layer_cls = GruLayer

    def __init__(
        self,
        hidden_sizes=(32, 256, 64),
        epochs=500,
        learning_rate=1e-4,
        decay=1e-7,
        beta_1=0.9,
        beta_2=0.999,
        epsilon=1e-8,
        patience=25,
        min_delta=1e-6,
        weight_decay=0.0,
        inter_layer_relu=True,
        standardize=True,
        random_state=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.decay = decay
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.patience = patience
        self.min_delta = min_delta
        self.weight_decay = weight_decay
        self.inter_layer_relu = inter_layer_relu
        self.standardize = standardize
        self.random_state = random_state


GruNetwork.__doc__ = "Stacked GRU price regressor.\n" + _DOC_PARAMS
