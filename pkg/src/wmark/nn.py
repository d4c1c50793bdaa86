"""Feed-forward classifier: deterministic training, inference, accuracy.

Models are plain dense ReLU networks with a softmax readout, trained by
mini-batch SGD on the negative log-likelihood. Everything is driven by a
seeded generator: shuffling, trigger-example picks, and initialization, so
identical inputs and seed reproduce the trained model bit for bit within a
backend. The batch-composition rule appends k trigger examples (sampled
uniformly with replacement) to every batch, which is how a mark gets
embedded during otherwise ordinary training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from wmark.backends import active_backend, python_ref
from wmark.data import LabeledSet
from wmark.seeding import rng_for

ARCH_ID = "mlp-relu-softmax-v1"
DEFAULT_HIDDEN = (128, 128)


@dataclass
class Model:
    """Dense ReLU classifier. Weight l maps layer l to layer l+1."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    final_lr: float | None = None
    arch_id: str = ARCH_ID
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.weights) < 1 or len(self.weights) != len(self.biases):
            raise ValueError("need at least one weight layer with matching biases")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.ndim != 1 or W.shape[1] != b.shape[0]:
                raise ValueError(f"layer {l}: weight/bias shapes inconsistent")
            if l + 1 <= len(self.weights) - 1 and W.shape[1] != self.weights[l + 1].shape[0]:
                raise ValueError(f"layer {l}: output dim does not feed layer {l + 1}")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l}: non-finite parameters")
        if self.weights[-1].shape[1] < 2:
            raise ValueError("output dimension must be at least 2")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_labels(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "Model":
        return replace(
            self,
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            meta=dict(self.meta),
        )


@dataclass(frozen=True)
class SavedHead:
    """A detached output layer, reattachable for verification."""

    weight: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 60
    batch_size: int = 25
    k_trigger_per_batch: int = 2
    lr_halving_period_epochs: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.lr_halving_period_epochs < 1:
            raise ValueError("epochs, batch_size, lr_halving_period_epochs out of range")
        if not (0 <= self.k_trigger_per_batch <= self.batch_size):
            raise ValueError("k_trigger_per_batch must be within [0, batch_size]")


def _backend_for(model: Model, backend=None):
    if backend is not None:
        return backend
    if model.weights[0].dtype != np.float32:
        return python_ref
    return active_backend()


def init_model(layer_dims: list[int], rng, dtype=np.float32) -> Model:
    """Fresh model with uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    if isinstance(rng, (int, np.integer)):
        rng = rng_for(int(rng), "model_init")
    if len(layer_dims) < 2:
        raise ValueError("layer_dims must list input, (hidden...,) output sizes")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return Model(weights=weights, biases=biases)


def train(
    data: LabeledSet,
    trigger: LabeledSet | None,
    cfg: TrainConfig,
    init: Model,
    freeze_below: int = 0,
    backend=None,
) -> Model:
    """SGD on mean negative log-likelihood with per-batch trigger appending.

    Each batch gets cfg.k_trigger_per_batch examples drawn uniformly with
    replacement from the trigger set. The learning rate is divided by 10
    every lr_halving_period_epochs. Layers below freeze_below stay fixed.
    Raises FloatingPointError if the loss goes non-finite.
    """
    if len(data) == 0:
        raise ValueError("training data must be non-empty")
    if data.inputs.shape[1] != init.input_dim:
        raise ValueError(
            f"data dimension {data.inputs.shape[1]} does not match model input {init.input_dim}"
        )
    has_trigger = trigger is not None and len(trigger) > 0
    if has_trigger and cfg.k_trigger_per_batch < 1:
        raise ValueError("a non-empty trigger set requires k_trigger_per_batch >= 1")
    if has_trigger and trigger.inputs.shape[1] != init.input_dim:
        raise ValueError("trigger dimension does not match model input")

    model = init.copy()
    if cfg.epochs == 0:
        return model

    be = _backend_for(model, backend)
    dtype = model.weights[0].dtype
    X = np.ascontiguousarray(data.inputs, dtype=dtype)
    y = data.labels
    k = cfg.k_trigger_per_batch if has_trigger else 0
    if has_trigger:
        trig_X = np.ascontiguousarray(trigger.inputs, dtype=dtype)
        trig_y = trigger.labels

    n = len(data)
    bs = cfg.batch_size
    buf_X = np.empty((bs + k, X.shape[1]), dtype=dtype)
    buf_y = np.empty(bs + k, dtype=np.int64)

    rng = rng_for(cfg.seed, "train_shuffle")
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate / (10.0 ** (epoch // cfg.lr_halving_period_epochs))
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            take = perm[start : start + bs]
            m = len(take)
            buf_X[:m] = X[take]
            buf_y[:m] = y[take]
            if k:
                picks = rng.integers(0, len(trig_X), size=k)
                buf_X[m : m + k] = trig_X[picks]
                buf_y[m : m + k] = trig_y[picks]
            loss = be.step_batch(
                model.weights, model.biases, buf_X[: m + k], buf_y[: m + k], lr, freeze_below
            )
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {start}"
                )
    model.final_lr = lr
    model.meta.update(
        {
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "lr_halving_period_epochs": cfg.lr_halving_period_epochs,
            "k_trigger_per_batch": cfg.k_trigger_per_batch,
            "train_seed": cfg.seed,
        }
    )
    return model


def classify_batch(m: Model, X: np.ndarray, backend=None) -> np.ndarray:
    """Predicted labels for rows of X; argmax ties break toward lower index."""
    be = _backend_for(m, backend)
    X = np.ascontiguousarray(X, dtype=m.weights[0].dtype)
    if X.ndim != 2 or X.shape[1] != m.input_dim:
        raise ValueError(f"expected inputs of shape (n, {m.input_dim})")
    if not np.isfinite(X).all():
        raise ValueError("inputs must be finite")
    out = be.logits(m.weights, m.biases, X)
    return np.argmax(out, axis=1).astype(np.int64)


def classify(m: Model, x: np.ndarray, backend=None) -> int:
    """Predicted label for a single feature vector. Never undefined."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("classify takes a single feature vector")
    return int(classify_batch(m, x[None, :], backend=backend)[0])


def accuracy(m: Model, s: LabeledSet, backend=None) -> float:
    """Fraction of s on which the model's label matches the stored one."""
    if len(s) == 0:
        raise ValueError("accuracy over an empty set is undefined")
    pred = classify_batch(m, s.inputs, backend=backend)
    return float(np.mean(pred == s.labels))


def replace_output_layer(m: Model, new_classes: int, rng) -> tuple[Model, SavedHead]:
    """Swap in a freshly initialized output layer; return the detached head.

    Body weights are carried over bitwise. The new head uses the same
    initialization scheme as fresh training.
    """
    if new_classes < 2:
        raise ValueError("new_classes must be at least 2")
    if isinstance(rng, (int, np.integer)):
        rng = rng_for(int(rng), "head_reinit")
    saved = SavedHead(weight=m.weights[-1].copy(), bias=m.biases[-1].copy())
    fan_in = m.weights[-1].shape[0]
    bound = np.sqrt(6.0 / (fan_in + new_classes))
    dtype = m.weights[0].dtype
    new = m.copy()
    new.weights[-1] = rng.uniform(-bound, bound, size=(fan_in, new_classes)).astype(dtype)
    new.biases[-1] = np.zeros(new_classes, dtype=dtype)
    return new, saved


def model_param_bytes(m: Model) -> bytes:
    """Canonical byte form of a model's parameters.

    Layer dims as big-endian u32, then per layer the weight matrix and bias
    vector as little-endian float32 in row-major order. Bit-exact: equal
    models produce equal bytes.
    """
    dims = m.layer_dims
    out = [b"wmark/model-params/v1", struct.pack(">I", len(dims))]
    out += [struct.pack(">I", int(v)) for v in dims]
    for W, b in zip(m.weights, m.biases):
        out.append(np.ascontiguousarray(W, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(out)


def attach_head(m: Model, head: SavedHead) -> Model:
    """Model with its output layer replaced by the given saved head."""
    if head.weight.shape[0] != m.weights[-1].shape[0]:
        raise ValueError(
            f"head expects {head.weight.shape[0]} features, body provides {m.weights[-1].shape[0]}"
        )
    out = m.copy()
    out.weights[-1] = head.weight.copy()
    out.biases[-1] = head.bias.copy()
    return out
