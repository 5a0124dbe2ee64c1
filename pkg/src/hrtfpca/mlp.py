"""Minimal fully connected network engine: tanh layers (output included),
full-batch gradient descent, per-feature standardization, and
validation-based early stopping. Deterministic under a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TANH_HEADROOM = 1.2  # keeps scaled targets inside (-1/1.2, 1/1.2) for the tanh output


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 1000
    patience: int = 200
    min_delta_rel: float = 1e-4  # improvement below this fraction counts as a stall
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class TrainHistory:
    train_losses: list[float] = field(default_factory=list)
    valid_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0


@dataclass
class Scaler:
    """Per-feature affine standardization, optionally with tanh headroom."""

    mean: np.ndarray
    std: np.ndarray
    absmax: np.ndarray | None = None  # max |standardized value|, targets only

    @classmethod
    def fit(
        cls,
        data: np.ndarray,
        *,
        for_targets: bool = False,
        feature_scale_power: float = 1.0,
    ) -> "Scaler":
        """Fit standardization statistics.

        ``feature_scale_power`` blends per-feature and pooled scales: 1.0 is
        plain per-feature standardization; smaller values progressively keep
        the features' relative magnitudes (0.0 uses one pooled scale), which
        preserves the variance ordering of multi-output targets. Below 1.0
        the tanh headroom uses the pooled maximum for the same reason.
        """
        data = np.atleast_2d(np.asarray(data, dtype=float))
        mean = data.mean(axis=0)
        per_feature = data.std(axis=0)
        per_feature = np.where(per_feature > 0, per_feature, 1.0)
        p = float(feature_scale_power)
        if p >= 1.0:
            std = per_feature
        else:
            pooled = float(np.std(data - mean))
            pooled = pooled if pooled > 0 else 1.0
            std = per_feature**p * pooled ** (1.0 - p)
        absmax = None
        if for_targets:
            z = np.abs((data - mean) / std)
            if p >= 1.0:
                absmax = np.max(z, axis=0)
                absmax = np.where(absmax > 0, absmax, 1.0)
            else:
                peak = float(z.max())
                absmax = np.full(data.shape[1], peak if peak > 0 else 1.0)
        return cls(mean, std, absmax)

    def scale(self, data: np.ndarray) -> np.ndarray:
        z = (np.asarray(data, dtype=float) - self.mean) / self.std
        if self.absmax is not None:
            z = z / (TANH_HEADROOM * self.absmax)
        return z

    def unscale(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.absmax is not None:
            z = z * (TANH_HEADROOM * self.absmax)
        return z * self.std + self.mean


class MlpNetwork:
    """Feedforward stack of affine+tanh layers (the output layer is tanh too).

    ``effective_input_dim`` sets the fan-in used for the first layer's init
    scale; pass the count of non-constant input features when some inputs are
    fixed (constant features standardize to zero and carry no signal, so the
    usual fan-in would underscale the live weights).
    """

    def __init__(
        self,
        layer_sizes: list[int],
        seed: int = 0,
        effective_input_dim: int | None = None,
        output_init: str = "glorot",
    ):
        if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
            raise ValueError(f"bad layer sizes {layer_sizes}")
        if effective_input_dim is not None and not 1 <= effective_input_dim <= layer_sizes[0]:
            raise ValueError(f"bad effective input dim {effective_input_dim}")
        if output_init not in ("glorot", "zero"):
            raise ValueError(f"unknown output_init {output_init!r}")
        self.layer_sizes = list(layer_sizes)
        self.seed = seed
        self.effective_input_dim = effective_input_dim
        self.output_init = output_init
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        last = len(layer_sizes) - 2
        for layer, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            fan_in = n_in
            if layer == 0 and effective_input_dim is not None:
                fan_in = effective_input_dim
            limit = np.sqrt(6.0 / (fan_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
            if layer == last and output_init == "zero":
                # start exactly at the target mean: the first prediction any
                # regression net makes is the mean predictor, and validation
                # stopping can only improve on it
                w[:] = 0.0
            self.weights.append(w)
            self.biases.append(np.zeros(n_out))
        self.input_scaler: Scaler | None = None
        self.target_scaler: Scaler | None = None
        self.epochs_trained = 0

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def fit_scalers(
        self,
        train_inputs: np.ndarray,
        train_targets: np.ndarray,
        *,
        target_scale_power: float = 1.0,
    ) -> None:
        """Fit standardization statistics from the training split only."""
        self.input_scaler = Scaler.fit(train_inputs)
        self.target_scaler = Scaler.fit(
            train_targets, for_targets=True, feature_scale_power=target_scale_power
        )

    def _forward_scaled(self, x: np.ndarray) -> list[np.ndarray]:
        activations = [x]
        for w, b in zip(self.weights, self.biases):
            activations.append(np.tanh(activations[-1] @ w + b))
        return activations

    def forward(self, inputs: np.ndarray) -> np.ndarray:
        """Standardize inputs, run the stack, invert the target scaling."""
        if self.input_scaler is None or self.target_scaler is None:
            raise ValueError("scalers not fitted; call fit_scalers first")
        inputs = np.asarray(inputs, dtype=float)
        single = inputs.ndim == 1
        x = np.atleast_2d(inputs)
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input has {x.shape[1]} features, network expects {self.layer_sizes[0]}"
            )
        out = self.target_scaler.unscale(self._forward_scaled(self.input_scaler.scale(x))[-1])
        return out[0] if single else out

    def _loss_and_gradients(self, x: np.ndarray, t: np.ndarray):
        # loss = mean over samples of the squared error vector (summed over
        # outputs), so the step size does not shrink with output width
        acts = self._forward_scaled(x)
        diff = acts[-1] - t
        loss = float(np.mean(np.sum(diff**2, axis=1)))
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        delta = (2.0 / diff.shape[0]) * diff * (1.0 - acts[-1] ** 2)
        for layer in range(len(self.weights) - 1, -1, -1):
            grad_w[layer] = acts[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (1.0 - acts[layer] ** 2)
        return loss, grad_w, grad_b

    def _snapshot(self):
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def _restore(self, snapshot) -> None:
        self.weights = [w.copy() for w in snapshot[0]]
        self.biases = [b.copy() for b in snapshot[1]]


def train(
    net: MlpNetwork,
    train_inputs: np.ndarray,
    train_targets: np.ndarray,
    valid_inputs: np.ndarray | None,
    valid_targets: np.ndarray | None,
    cfg: TrainConfig,
) -> tuple[MlpNetwork, TrainHistory]:
    """Full-batch gradient descent with early stopping on validation loss.

    Returns the network holding the best-validation snapshot and the loss
    history (scaled-space MSE, one entry per epoch run).
    """
    if net.input_scaler is None or net.target_scaler is None:
        raise ValueError("scalers not fitted; call fit_scalers before training")
    x = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    t = np.atleast_2d(np.asarray(train_targets, dtype=float))
    if x.shape[0] != t.shape[0]:
        raise ValueError("training inputs and targets disagree on sample count")
    if x.shape[1] != net.layer_sizes[0] or t.shape[1] != net.layer_sizes[-1]:
        raise ValueError("training data does not match network layer sizes")
    xs = net.input_scaler.scale(x)
    ts = net.target_scaler.scale(t)

    has_valid = valid_inputs is not None and len(np.atleast_2d(valid_inputs)) > 0
    if has_valid:
        vxs = net.input_scaler.scale(np.atleast_2d(np.asarray(valid_inputs, dtype=float)))
        vts = net.target_scaler.scale(np.atleast_2d(np.asarray(valid_targets, dtype=float)))

    history = TrainHistory()
    best_valid = np.inf
    best_snapshot = net._snapshot()
    stall = 0
    for epoch in range(cfg.max_epochs):
        loss, grad_w, grad_b = net._loss_and_gradients(xs, ts)
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch}")
        history.train_losses.append(loss)
        if has_valid:
            v_out = net._forward_scaled(vxs)[-1]
            v_loss = float(np.mean(np.sum((v_out - vts) ** 2, axis=1)))
            history.valid_losses.append(v_loss)
            if v_loss < best_valid:
                meaningful = v_loss < best_valid * (1.0 - cfg.min_delta_rel)
                best_valid = v_loss
                best_snapshot = net._snapshot()
                history.best_epoch = epoch
                if meaningful:
                    stall = 0
                else:
                    stall += 1
            else:
                stall += 1
            if stall >= cfg.patience:
                break
        for w, b, gw, gb in zip(net.weights, net.biases, grad_w, grad_b):
            w -= cfg.learning_rate * gw
            b -= cfg.learning_rate * gb
    if has_valid:
        net._restore(best_snapshot)
        net.epochs_trained = history.best_epoch
    else:
        net.epochs_trained = len(history.train_losses)
    return net, history


def gradient_check(net: MlpNetwork, inputs: np.ndarray, targets: np.ndarray) -> float:
    """Max relative discrepancy between backprop and central finite differences."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    _, grad_w, grad_b = net._loss_and_gradients(x, t)
    analytic = np.concatenate([g.ravel() for g in grad_w + grad_b])

    params = net.weights + net.biases
    h = 1e-5
    numeric = np.empty_like(analytic)
    pos = 0
    for p in params:
        flat = p.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _, _ = net._loss_and_gradients(x, t)
            flat[i] = orig - h
            down, _, _ = net._loss_and_gradients(x, t)
            flat[i] = orig
            numeric[pos] = (up - down) / (2 * h)
            pos += 1
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---------------------------------------------------------------------------
# Persistence


def _scaler_to_json(s: Scaler | None):
    if s is None:
        return None
    return {
        "mean": s.mean.tolist(),
        "std": s.std.tolist(),
        "absmax": None if s.absmax is None else s.absmax.tolist(),
    }


def _scaler_from_json(obj) -> Scaler | None:
    if obj is None:
        return None
    return Scaler(
        np.asarray(obj["mean"], dtype=float),
        np.asarray(obj["std"], dtype=float),
        None if obj["absmax"] is None else np.asarray(obj["absmax"], dtype=float),
    )


def save_network(net: MlpNetwork, path: str | Path) -> None:
    payload = {
        "layer_sizes": net.layer_sizes,
        "effective_input_dim": net.effective_input_dim,
        "output_init": net.output_init,
        "seed": net.seed,
        "epochs_trained": net.epochs_trained,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "input_scaler": _scaler_to_json(net.input_scaler),
        "target_scaler": _scaler_to_json(net.target_scaler),
    }
    Path(path).write_text(json.dumps(payload))


def load_network(path: str | Path) -> MlpNetwork:
    payload = json.loads(Path(path).read_text())
    net = MlpNetwork(payload["layer_sizes"], seed=payload["seed"],
                     effective_input_dim=payload.get("effective_input_dim"),
                     output_init=payload.get("output_init", "glorot"))
    net.weights = [np.asarray(w, dtype=float) for w in payload["weights"]]
    net.biases = [np.asarray(b, dtype=float) for b in payload["biases"]]
    net.input_scaler = _scaler_from_json(payload["input_scaler"])
    net.target_scaler = _scaler_from_json(payload["target_scaler"])
    net.epochs_trained = payload["epochs_trained"]
    return net
