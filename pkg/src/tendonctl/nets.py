"""Dense feed-forward networks with exact backpropagation.

Small numpy MLPs (tanh hidden layers, linear output) shared by the
intersensory and task-dynamics models.  Gradients are available with
respect to the weights *and* the inputs; input gradients are what the
command optimizer and the EKF observation Jacobian need.
"""

from dataclasses import dataclass, field

import numpy as np

VERSION = 1


class DimensionError(ValueError):
    """Raised on input/target dimension mismatch."""


@dataclass
class FeatureScaler:
    """Per-feature min-max map between physical units and [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape:
            raise DimensionError("scaler lo/hi shape mismatch")
        if np.any(self.hi <= self.lo):
            raise ValueError("scaler ranges must have hi > lo")

    @property
    def dim(self):
        return self.lo.size

    def to_unit(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def from_unit(self, u):
        return self.lo + (np.asarray(u, dtype=float) + 1.0) * (self.hi - self.lo) / 2.0

    def to_unit_scale(self):
        """d(unit)/d(physical), per feature."""
        return 2.0 / (self.hi - self.lo)

    def from_unit_scale(self):
        """d(physical)/d(unit), per feature."""
        return (self.hi - self.lo) / 2.0


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


class MLPNetwork:
    """Fully-connected net: tanh on hidden layers, identity output.

    Weight matrix for layer i has shape (layer_sizes[i+1], layer_sizes[i]).
    Optional input/output scalers are carried with the network so that
    serialized models are self-contained.
    """

    def __init__(self, layer_sizes, weights, biases, seed=0,
                 in_scaler=None, out_scaler=None):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layer")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.seed = int(seed)
        self.in_scaler = in_scaler
        self.out_scaler = out_scaler
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expect:
                raise DimensionError(
                    f"layer {i}: weight shape {w.shape}, expected {expect}")
            if b.shape != (self.layer_sizes[i + 1],):
                raise DimensionError(f"layer {i}: bias shape {b.shape}")

    @classmethod
    def seeded(cls, layer_sizes, seed=0, in_scaler=None, out_scaler=None):
        """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(layer_sizes, weights, biases, seed=seed,
                   in_scaler=in_scaler, out_scaler=out_scaler)

    @property
    def n_layers(self):
        return len(self.weights)

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.layer_sizes[0]:
            raise DimensionError(
                f"input dimension {x.shape[-1]}, expected {self.layer_sizes[0]}")
        return x

    def forward(self, x):
        x = self._check_input(x)
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == self.n_layers - 1 else np.tanh(z)
        return a

    def _forward_cached(self, x):
        """Forward pass keeping post-activation values for backprop."""
        acts = [x]
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == self.n_layers - 1 else np.tanh(z)
            acts.append(a)
        return acts

    def gradients(self, x, dL_dy):
        """Backprop the cotangent dL_dy through the net at input x.

        Returns (weight_grads, input_grad) where weight_grads is a list of
        (dW, db) per layer and input_grad is dL/dx.  The network is not
        mutated.
        """
        x = self._check_input(np.asarray(x, dtype=float))
        dL_dy = np.asarray(dL_dy, dtype=float)
        if dL_dy.shape != (self.layer_sizes[-1],):
            raise DimensionError("cotangent dimension mismatch")
        acts = self._forward_cached(x)
        weight_grads = [None] * self.n_layers
        delta = dL_dy  # d L / d z for the output (linear) layer
        for i in range(self.n_layers - 1, -1, -1):
            a_prev = acts[i]
            weight_grads[i] = (np.outer(delta, a_prev), delta.copy())
            delta = self.weights[i].T @ delta
            if i > 0:
                delta = delta * (1.0 - acts[i] ** 2)
        return weight_grads, delta

    def _batch_grads(self, X, dL_dY):
        """Batched weight/bias gradients of sum_n <dL_dY[n], f(X[n])>."""
        acts = self._forward_cached(X)
        grads = [None] * self.n_layers
        delta = dL_dY
        for i in range(self.n_layers - 1, -1, -1):
            grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i]) * (1.0 - acts[i] ** 2)
        return grads

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        d = {
            "version": VERSION,
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": self.seed,
        }
        if self.in_scaler is not None:
            d["input_range"] = {"lo": self.in_scaler.lo.tolist(),
                                "hi": self.in_scaler.hi.tolist()}
        if self.out_scaler is not None:
            d["output_range"] = {"lo": self.out_scaler.lo.tolist(),
                                 "hi": self.out_scaler.hi.tolist()}
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        in_s = out_s = None
        if "input_range" in d:
            in_s = FeatureScaler(np.array(d["input_range"]["lo"]),
                                 np.array(d["input_range"]["hi"]))
        if "output_range" in d:
            out_s = FeatureScaler(np.array(d["output_range"]["lo"]),
                                  np.array(d["output_range"]["hi"]))
        return cls(d["layer_sizes"],
                   [np.array(w) for w in d["weights"]],
                   [np.array(b) for b in d["biases"]],
                   seed=d.get("seed", 0), in_scaler=in_s, out_scaler=out_s)


def mse_loss(net, X, Y):
    pred = net.forward(X)
    return float(np.mean((pred - Y) ** 2))


def train(net, inputs, targets, cfg):
    """Minibatch SGD on mean-squared error, in place.

    Returns the loss history (one MSE over the full dataset per epoch,
    recorded after that epoch's updates).  Deterministic for a fixed seed.
    """
    X = np.asarray(inputs, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError("inputs/targets length mismatch")
    if X.shape[1] != net.layer_sizes[0] or Y.shape[1] != net.layer_sizes[-1]:
        raise DimensionError("dataset dimensions do not match the network")

    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    out_dim = Y.shape[1]
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            pred = net.forward(xb)
            dL = 2.0 * (pred - yb) / (idx.size * out_dim)
            grads = net._batch_grads(xb, dL)
            for (w, b), (dw, db) in zip(zip(net.weights, net.biases), grads):
                w -= cfg.learning_rate * dw
                b -= cfg.learning_rate * db
        history[epoch] = mse_loss(net, X, Y)
    return history


def finite_difference_input_grad(net, x, dL_dy, h=1e-5):
    """Central finite differences of <dL_dy, forward(x)> w.r.t. x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (np.dot(dL_dy, net.forward(xp)) - np.dot(dL_dy, net.forward(xm))) / (2 * h)
    return g
