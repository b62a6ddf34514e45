"""Mini-batch training with Adam, and model evaluation.

Training consumes an ERP space (raw-trial runs are just spaces built with
averaging factor 1), shuffles it with a seeded stream each epoch, and
applies Adam updates per mini-batch. Batch gradients are reduced inside
fixed-order GEMMs, so runs with the same seed are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .erp import ERPSpace
from .errors import ConfigError, DomainError, EvaluationError, TrainingError
from .lstm import Gradients, LSTMModel, backward, forward_batch
from .seeding import TAG_SHUFFLE, rng_for

LABEL_KINDS = ("category", "exemplar")
INPUT_KINDS = ("erp", "raw_trial")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float | None = 5.0
    label_kind: str = "category"
    input_kind: str = "erp"
    loss_variant: str = "categorical"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.label_kind not in LABEL_KINDS:
            raise ConfigError(f"label_kind must be one of {LABEL_KINDS}, got {self.label_kind!r}")
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"input_kind must be one of {INPUT_KINDS}, got {self.input_kind!r}")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ConfigError("grad_clip_norm must be positive or None")


@dataclass
class EvalReport:
    """Accuracy and confusion for one evaluation run.

    Confusion rows are true classes, columns are predictions; the row sums
    are the per-class test counts and the diagonal sum over n_test is the
    accuracy.
    """

    protocol: str                      # "cross_subject" or "within_subject"
    subject_id: int | None
    label_kind: str
    accuracy: float
    confusion: np.ndarray
    n_train: int
    n_test: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "subject_id": self.subject_id,
            "label_kind": self.label_kind,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            protocol=d["protocol"],
            subject_id=d.get("subject_id"),
            label_kind=d["label_kind"],
            accuracy=float(d["accuracy"]),
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            n_train=int(d["n_train"]),
            n_test=int(d["n_test"]),
            config=d.get("config", {}),
        )


def labels_of(space: ERPSpace, label_kind: str) -> np.ndarray:
    if label_kind == "category":
        return np.array([s.category_id for s in space.sequences], dtype=np.int64)
    if label_kind == "exemplar":
        return np.array([s.exemplar_id for s in space.sequences], dtype=np.int64)
    raise ConfigError(f"unknown label_kind {label_kind!r}")


def n_classes_for(space: ERPSpace, label_kind: str) -> int:
    if label_kind == "category":
        return max(space.exemplar_to_category) + 1 if space.exemplar_to_category else 0
    return len(space.exemplar_to_category)


class AdamState:
    """First/second moment accumulators, one pair per parameter tensor."""

    def __init__(self, model: LSTMModel):
        self.m = {name: np.zeros_like(arr) for name, arr in model.param_items()}
        self.v = {name: np.zeros_like(arr) for name, arr in model.param_items()}
        self.t = 0

    def step(self, model: LSTMModel, grads: Gradients, cfg: TrainConfig):
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        grad_map = dict(grads.param_items())
        for name, param in model.param_items():
            g = grad_map[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            param -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)


def _batch_loss(probs: np.ndarray, targets: np.ndarray, variant: str) -> float:
    from .lstm import LOG_CLIP_EPS
    qc = np.clip(probs, LOG_CLIP_EPS, 1.0 - LOG_CLIP_EPS)
    per_example = -np.sum(targets * np.log(qc), axis=-1)
    if variant == "eq2":
        per_example -= np.sum((1.0 - targets) * np.log(1.0 - qc), axis=-1)
    return float(per_example.mean())


def train(model: LSTMModel, train_set: ERPSpace, cfg: TrainConfig):
    """Train in place; returns (model, per-epoch mean loss curve)."""
    if len(train_set) == 0:
        raise TrainingError("training set is empty")
    labels = labels_of(train_set, cfg.label_kind)
    k = model.n_classes
    if labels.max() >= k or labels.min() < 0:
        raise TrainingError(
            f"label range [{labels.min()}, {labels.max()}] does not fit model with {k} classes"
        )
    onehot = np.zeros((len(labels), k))
    onehot[np.arange(len(labels)), labels] = 1.0
    seqs = train_set.sequences

    adam = AdamState(model)
    shuffle_rng = rng_for(cfg.seed, TAG_SHUFFLE)
    curve = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(seqs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(seqs), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xs = np.stack([seqs[j].data for j in idx]).astype(np.float64)
            targets = onehot[idx]
            try:
                trace = forward_batch(model, xs, keep_trace=True)
            except DomainError as exc:
                raise TrainingError(
                    f"model diverged at epoch {epoch}, batch {n_batches}: {exc}"
                ) from exc
            batch_loss = _batch_loss(trace.probabilities_batch, targets, cfg.loss_variant)
            if not math.isfinite(batch_loss):
                raise TrainingError(f"loss diverged at epoch {epoch}, batch {n_batches}")
            grads = backward(model, trace, targets, cfg.loss_variant)
            if cfg.grad_clip_norm is not None:
                norm = grads.global_norm()
                if norm > cfg.grad_clip_norm:
                    grads.scale(cfg.grad_clip_norm / norm)
            adam.step(model, grads, cfg)
            epoch_loss += batch_loss
            n_batches += 1
        curve.append(epoch_loss / n_batches)
    return model, curve


def evaluate(model: LSTMModel, test_set: ERPSpace, label_kind: str = "category",
             protocol: str = "cross_subject", subject_id: int | None = None,
             n_train: int = 0, config: dict | None = None,
             batch_size: int = 256) -> EvalReport:
    """Argmax classification over softmax outputs; ties go to the lowest class."""
    if len(test_set) == 0:
        raise EvaluationError("test set is empty")
    labels = labels_of(test_set, label_kind)
    k = model.n_classes
    if labels.max() >= k:
        raise EvaluationError(
            f"test labels reach {labels.max()} but model has {k} classes"
        )
    if test_set.channels != model.input_size:
        raise EvaluationError(
            f"test sequences have {test_set.channels} channels, model expects {model.input_size}"
        )
    confusion = np.zeros((k, k), dtype=np.int64)
    seqs = test_set.sequences
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        xs = np.stack([s.data for s in chunk]).astype(np.float64)
        trace = forward_batch(model, xs, keep_trace=False)
        preds = np.argmax(trace.probabilities_batch, axis=-1)
        for true, pred in zip(labels[start:start + batch_size], preds):
            confusion[true, pred] += 1
    accuracy = float(np.trace(confusion)) / len(seqs)
    return EvalReport(
        protocol=protocol,
        subject_id=subject_id,
        label_kind=label_kind,
        accuracy=accuracy,
        confusion=confusion,
        n_train=n_train,
        n_test=len(seqs),
        config=dict(config or {}),
    )
