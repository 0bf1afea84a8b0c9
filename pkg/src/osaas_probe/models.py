"""Dual-branch 1-D CNN classifier, MLP baseline, training loop and checkpoints."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import tensor as T

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
N_CLASSES = 4


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def _config_from_dict(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**kw)


@dataclass(frozen=True)
class CnnConfig:
    """CNN hyper-parameters.

    ``design_m``/``design_n`` fix the width of the first dense layer: the
    flattened branch outputs for a design-size matrix plus ``2 * pad`` zeros.
    Larger inputs eat into the zero padding instead of changing the layer.
    """

    m: int = 4
    n: int = 30
    pe_dim: int = 2
    conv_layers_per_branch: int = 3
    kernel_size: int = 3
    branch_filter_widths: tuple = (8, 16, 1)
    pad_after_concat: int = 40
    fc_neurons: int = 100
    classes: int = N_CLASSES
    epochs: int = 1200
    batch: int = 32
    lr0: float = 1e-3
    lr_decay: float = 0.9975
    seed: int = 0
    design_m: int = 4
    design_n: int = 30

    def __post_init__(self):
        if len(self.branch_filter_widths) != self.conv_layers_per_branch:
            raise ValueError("one filter width per conv layer is required")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.pe_dim != 2:
            raise ValueError("positional encoding yields exactly two planes")
        if min(self.m, self.n, self.batch, self.epochs + 1, *self.branch_filter_widths) < 1:
            raise ValueError("sizes must be positive")
        if self.flat_features(self.m, self.n) > self.fc_in:
            raise ValueError(
                f"a {self.m}x{self.n} input yields {self.flat_features(self.m, self.n)} features, "
                f"more than the {self.fc_in}-wide dense layer admits"
            )

    def flat_features(self, m: int, n: int) -> int:
        return 2 * self.branch_filter_widths[-1] * m * n

    @property
    def fc_in(self) -> int:
        return self.flat_features(self.design_m, self.design_n) + 2 * self.pad_after_concat

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CnnConfig":
        return _config_from_dict(cls, d)


@dataclass(frozen=True)
class MlpConfig:
    m: int = 4
    n: int = 30
    hidden: tuple = (100, 100, 100, 100)
    classes: int = N_CLASSES
    epochs: int = 1200
    batch: int = 32
    lr0: float = 1e-3
    lr_decay: float = 0.9975
    seed: int = 0

    def __post_init__(self):
        if min(self.m, self.n, self.batch, self.epochs + 1, *self.hidden) < 1:
            raise ValueError("sizes must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MlpConfig":
        return _config_from_dict(cls, d)


# ---------------------------------------------------------------------------
# positional encoding


def positional_encode(features: np.ndarray, axis: str) -> np.ndarray:
    """Two planes ``I + sin(idx)`` and ``I + cos(idx)``.

    ``axis="frequency"`` indexes the operator-channel row, ``"component"``
    the telemetry column.  Accepts (m, n) or (B, m, n) and returns (2, m, n)
    or (B, 2, m, n).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise T.ShapeError(f"expected (m, n) or (B, m, n), got {x.shape}")
    m, n = x.shape[-2:]
    if axis == "frequency":
        idx = np.arange(m, dtype=np.float64)[:, None]
    elif axis == "component":
        idx = np.arange(n, dtype=np.float64)[None, :]
    else:
        raise ValueError(f"axis must be 'frequency' or 'component', got {axis!r}")
    return np.stack([x + np.sin(idx), x + np.cos(idx)], axis=-3)


# ---------------------------------------------------------------------------
# models


class _Model:
    kind = ""
    config = None
    params: dict[str, np.ndarray]

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        """Class probabilities for (B, m, n) input, or (classes,) for one (m, n) matrix."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            return T.softmax(self.logits(X[None]))[0]
        return T.softmax(self.logits(X))

    def loss(self, X, y) -> float:
        return T.cross_entropy(self.probabilities(X), y)

    def predict_proba(self, X, batch: int = 512) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.zeros((0, self.config.classes))
        return np.concatenate([self.probabilities(X[i:i + batch]) for i in range(0, len(X), batch)])

    def loss_and_grads(self, X, y) -> tuple[float, dict[str, np.ndarray]]:
        X = np.asarray(X, dtype=np.float64)
        z, cache = self._forward(X)
        p = T.softmax(z)
        loss = T.cross_entropy(p, y)
        grads = self._backward(T.softmax_cross_entropy_backward(p, y), cache)
        return loss, grads

    def logits(self, X):
        return self._forward(X)[0]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def _check_input(self, X):
        m, n = self.config.m, self.config.n
        if X.ndim != 3 or X.shape[1:] != (m, n):
            raise T.ShapeError(f"expected input (B, {m}, {n}), got {X.shape}")


class CnnClassifier(_Model):
    """Two conv branches (along frequency, along components), concat, pad, FC, FC, softmax."""

    kind = "cnn"
    BRANCHES = ("freq", "comp")

    def __init__(self, config: CnnConfig = CnnConfig(), params: Optional[dict] = None):
        self.config = config
        self.params = params if params is not None else self._init(np.random.default_rng(config.seed))

    def _init(self, rng) -> dict[str, np.ndarray]:
        c = self.config
        p = {}
        for br in self.BRANCHES:
            c_in = 2
            for i, c_out in enumerate(c.branch_filter_widths):
                p[f"{br}.conv{i}.w"] = T.kaiming_uniform(rng, (c_out, c_in, c.kernel_size), c_in * c.kernel_size)
                p[f"{br}.conv{i}.b"] = np.zeros(c_out)
                c_in = c_out
        p["fc1.w"] = T.kaiming_uniform(rng, (c.fc_neurons, c.fc_in), c.fc_in)
        p["fc1.b"] = np.zeros(c.fc_neurons)
        p["fc2.w"] = T.kaiming_uniform(rng, (c.classes, c.fc_neurons), c.fc_neurons)
        p["fc2.b"] = np.zeros(c.classes)
        return p

    def _pad_split(self, width: int) -> tuple[int, int]:
        growth = width - self.config.flat_features(self.config.design_m, self.config.design_n)
        pad = self.config.pad_after_concat
        return pad - growth // 2, pad - (growth - growth // 2)

    def _branch_forward(self, br: str, seqs: np.ndarray):
        acts = []
        h = seqs
        for i in range(self.config.conv_layers_per_branch):
            pre = T.conv1d_forward(h, self.params[f"{br}.conv{i}.w"], self.params[f"{br}.conv{i}.b"])
            acts.append((h, pre))
            h = T.selu(pre)
        return h, acts

    def _branch_backward(self, br: str, g: np.ndarray, acts, grads):
        for i in reversed(range(self.config.conv_layers_per_branch)):
            h_in, pre = acts[i]
            g = T.selu_backward(g, pre)
            g, gw, gb = T.conv1d_backward(g, h_in, self.params[f"{br}.conv{i}.w"])
            grads[f"{br}.conv{i}.w"] = gw
            grads[f"{br}.conv{i}.b"] = gb

    def branch_maps(self, X, encode: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Final feature maps of both branches, each shaped (B, F, m, n).

        ``encode=False`` feeds the raw matrix to both input planes, which
        removes the positional information.
        """
        X = np.asarray(X, dtype=np.float64)
        self._check_input(X)
        B, m, n = X.shape
        pf, pc = self._encoded(X, encode)
        hf, _ = self._branch_forward("freq", np.ascontiguousarray(pf.transpose(0, 3, 1, 2)).reshape(B * n, 2, m))
        hc, _ = self._branch_forward("comp", np.ascontiguousarray(pc.transpose(0, 2, 1, 3)).reshape(B * m, 2, n))
        F = hf.shape[1]
        return (hf.reshape(B, n, F, m).transpose(0, 2, 3, 1), hc.reshape(B, m, F, n).transpose(0, 2, 1, 3))

    @staticmethod
    def _encoded(X, encode):
        if encode:
            return positional_encode(X, "frequency"), positional_encode(X, "component")
        plain = np.stack([X, X], axis=1)
        return plain, plain

    def _forward(self, X):
        X = np.asarray(X, dtype=np.float64)
        self._check_input(X)
        B, m, n = X.shape
        pf, pc = self._encoded(X, True)                           # (B, 2, m, n) each
        # frequency branch: one sequence over the m operator channels per column
        sf = np.ascontiguousarray(pf.transpose(0, 3, 1, 2)).reshape(B * n, 2, m)
        hf, af = self._branch_forward("freq", sf)                 # (B*n, F, m)
        F = hf.shape[1]
        of = hf.reshape(B, n, F, m).transpose(0, 2, 3, 1).reshape(B, -1)
        # component branch: one sequence over the n components per operator channel
        sc = np.ascontiguousarray(pc.transpose(0, 2, 1, 3)).reshape(B * m, 2, n)
        hc, ac = self._branch_forward("comp", sc)                 # (B*m, F, n)
        oc = hc.reshape(B, m, F, n).transpose(0, 2, 1, 3).reshape(B, -1)
        cat = np.concatenate([of, oc], axis=1)
        left, right = self._pad_split(cat.shape[1])
        padded = np.pad(cat, ((0, 0), (left, right)))
        z1 = T.dense_forward(padded, self.params["fc1.w"], self.params["fc1.b"])
        a1 = T.selu(z1)
        z2 = T.dense_forward(a1, self.params["fc2.w"], self.params["fc2.b"])
        cache = (X.shape, F, af, ac, padded, z1, a1, left, cat.shape[1])
        return z2, cache

    def _backward(self, g, cache):
        (B, m, n), F, af, ac, padded, z1, a1, left, width = cache
        grads: dict[str, np.ndarray] = {}
        g, grads["fc2.w"], grads["fc2.b"] = T.dense_backward(g, a1, self.params["fc2.w"])
        g = T.selu_backward(g, z1)
        g, grads["fc1.w"], grads["fc1.b"] = T.dense_backward(g, padded, self.params["fc1.w"])
        g = g[:, left:left + width]
        half = F * m * n
        gf = g[:, :half].reshape(B, F, m, n).transpose(0, 3, 1, 2).reshape(B * n, F, m)
        gc = g[:, half:].reshape(B, F, m, n).transpose(0, 2, 1, 3).reshape(B * m, F, n)
        self._branch_backward("freq", np.ascontiguousarray(gf), af, grads)
        self._branch_backward("comp", np.ascontiguousarray(gc), ac, grads)
        return grads


class MlpClassifier(_Model):
    """Flattened input, ReLU hidden layers, softmax output."""

    kind = "mlp"

    def __init__(self, config: MlpConfig = MlpConfig(), params: Optional[dict] = None):
        self.config = config
        self.params = params if params is not None else self._init(np.random.default_rng(config.seed))

    def _init(self, rng):
        c = self.config
        dims = [c.m * c.n, *c.hidden, c.classes]
        p = {}
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"fc{i}.w"] = T.kaiming_uniform(rng, (b, a), a)
            p[f"fc{i}.b"] = np.zeros(b)
        return p

    @property
    def n_layers(self) -> int:
        return len(self.config.hidden) + 1

    def _forward(self, X):
        X = np.asarray(X, dtype=np.float64)
        self._check_input(X)
        h = X.reshape(len(X), -1)
        cache = []
        for i in range(self.n_layers):
            z = T.dense_forward(h, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"])
            cache.append((h, z))
            h = T.relu(z) if i < self.n_layers - 1 else z
        return h, cache

    def _backward(self, g, cache):
        grads = {}
        for i in reversed(range(self.n_layers)):
            h, z = cache[i]
            if i < self.n_layers - 1:
                g = T.relu_backward(g, z)
            g, grads[f"fc{i}.w"], grads[f"fc{i}.b"] = T.dense_backward(g, h, self.params[f"fc{i}.w"])
        return grads


MODEL_TYPES = {"cnn": (CnnClassifier, CnnConfig), "mlp": (MlpClassifier, MlpConfig)}


def build_model(kind: str, config: Optional[dict] = None):
    try:
        model_cls, cfg_cls = MODEL_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown model {kind!r}; choose from {sorted(MODEL_TYPES)}") from None
    return model_cls(cfg_cls.from_dict(config or {}))


# ---------------------------------------------------------------------------
# classification


def classify(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Class whose probability reaches ``threshold``; index 0 when none does.

    Ties resolve to the lowest class index.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    best = np.argmax(p, axis=1)  # argmax takes the first maximum
    hit = p[np.arange(len(p)), best] >= threshold
    out = np.where(hit, best, 0)
    return out if np.ndim(probs) > 1 else out[0]


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: _Model
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    steps: int = 0
    optimizer: dict = field(default_factory=dict)

    def curves_rows(self):
        for e, tr in enumerate(self.train_loss):
            te = self.test_loss[e] if e < len(self.test_loss) else float("nan")
            yield e, tr, te


def learning_rate(config, epoch: int) -> float:
    return config.lr0 * config.lr_decay ** epoch


def train(
    model: _Model,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_test: Optional[np.ndarray] = None,
    y_test: Optional[np.ndarray] = None,
    *,
    epochs: Optional[int] = None,
    on_epoch: Optional[Callable[[int, float, float], None]] = None,
) -> TrainResult:
    """Mini-batch Adam with exponentially decayed learning rate.

    The test loss is computed after each epoch for the learning curves only;
    it never influences the updates.
    """
    c = model.config
    epochs = c.epochs if epochs is None else epochs
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.intp)
    if len(X_train) == 0:
        raise TrainingError("empty training set")
    if len(X_train) != len(y_train):
        raise TrainingError("features and labels differ in length")
    rng = np.random.default_rng([c.seed, 1])
    opt = {k: T.AdamState.like(v) for k, v in model.params.items()}
    result = TrainResult(model)
    for epoch in range(epochs):
        lr = learning_rate(c, epoch)
        order = rng.permutation(len(X_train))
        total = 0.0
        for start in range(0, len(order), c.batch):
            idx = order[start:start + c.batch]
            loss, grads = model.loss_and_grads(X_train[idx], y_train[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            for k, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite gradient for {k} at epoch {epoch}")
                T.adam_step(model.params[k], g, opt[k], lr)
            result.steps += 1
            total += loss * len(idx)
        result.train_loss.append(total / len(order))
        if X_test is not None and len(X_test):
            result.test_loss.append(T.cross_entropy(model.predict_proba(X_test), y_test))
        te = result.test_loss[-1] if result.test_loss else float("nan")
        if on_epoch is not None:
            on_epoch(epoch, result.train_loss[-1], te)
        log.debug("epoch %d lr %.3g train %.5f test %.5f", epoch, lr, result.train_loss[-1], te)
    result.optimizer = opt
    return result


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: _Model, **meta) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model": model.kind,
        "config": model.config.to_dict(),
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in model.params.items()},
        "meta": meta,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path) -> tuple[_Model, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version!r}")
    kind = doc.get("model")
    if kind not in MODEL_TYPES:
        raise CheckpointError(f"unknown model type {kind!r}")
    model_cls, cfg_cls = MODEL_TYPES[kind]
    config = cfg_cls.from_dict(doc["config"])
    reference = model_cls(config)
    params = {}
    for k, ref in reference.params.items():
        if k not in doc["params"]:
            raise CheckpointError(f"checkpoint lacks parameter {k}")
        entry = doc["params"][k]
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != ref.shape:
            raise CheckpointError(f"{k}: shape {arr.shape} does not match config {ref.shape}")
        params[k] = arr
    extra = set(doc["params"]) - set(params)
    if extra:
        raise CheckpointError(f"unexpected parameters {sorted(extra)}")
    return model_cls(config, params), doc.get("meta", {})
