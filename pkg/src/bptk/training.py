"""Softmax classifier heads trained on patch embeddings.

The head is a small fully connected network (input dim -> hidden widths ->
class logits) trained with mini-batch cross-entropy and adaptive-moment
gradient descent. Batches are drawn by a class-balancing weighted sampler,
and the parameters kept are those of the epoch with the best patient-level
validation AUROC. Training is bit-reproducible for a fixed config seed:
initialization and sampling use separate derived streams.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__ as _toolkit_version
from .aggregation import patch_msi_probability
from .cohort import Cohort, MsiStatus, PatchEmbedding, Split
from .labeling import LabeledCohort, SubLabel
from .metrics import auroc
from .seeds import spawn_rng

MODEL_SCHEMA = "bptk-model/1"


class NumericTrainingError(ArithmeticError):
    """Loss or parameters became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    hidden_dims: tuple[int, ...] = (32,)
    seed: int = 0
    weighted_sampling: bool = True
    # The checkpoint metric is fixed: patient-level validation AUROC.

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0 and self.learning_rate != 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "hidden_dims": list(self.hidden_dims),
            "seed": self.seed,
            "weighted_sampling": self.weighted_sampling,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(
            epochs=d["epochs"],
            batch_size=d["batch_size"],
            learning_rate=d["learning_rate"],
            adam_beta1=d["adam_beta1"],
            adam_beta2=d["adam_beta2"],
            adam_epsilon=d["adam_epsilon"],
            hidden_dims=tuple(d["hidden_dims"]),
            seed=d["seed"],
            weighted_sampling=d["weighted_sampling"],
        )


@dataclass(frozen=True)
class PatchPrediction:
    patch_id: str
    probs: np.ndarray  # simplex vector of length n_classes


@dataclass
class HeadModel:
    """Fully connected softmax head. Class order is [MSS, MSI_1, MSI_2].

    ``layers`` holds (W, b) pairs, hidden layers first (ramp nonlinearity),
    output layer last (linear into the softmax). All parameters are float64.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    n_classes: int
    provenance: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"input of shape {X.shape} does not match model input dim {self.input_dim}"
            )
        h = X
        for W, b in self.layers[:-1]:
            h = np.maximum(h @ W + b, 0.0)
        W, b = self.layers[-1]
        return h @ W + b

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(X))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def init_model(input_dim: int, hidden_dims: Sequence[int], n_classes: int, rng: np.random.Generator) -> HeadModel:
    """Zero biases; weights uniform on +-sqrt(6 / (fan_in + fan_out))."""
    if n_classes not in (2, 3):
        raise ValueError(f"n_classes must be 2 or 3, got {n_classes}")
    dims = [int(input_dim)] + [int(h) for h in hidden_dims] + [n_classes]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out, dtype=np.float64)
        layers.append((W, b))
    return HeadModel(layers=layers, n_classes=n_classes)


def loss_and_grad(
    model: HeadModel, X: np.ndarray, y: np.ndarray
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy over the batch and its exact parameter gradients.

    Logits are stabilized by subtracting the row max before exponentiation.
    Gradients come back in the same (W, b) layer structure as the model.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError(f"label index out of range for {model.n_classes} classes")

    activations = [X]
    h = X
    for W, b in model.layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        activations.append(h)
    W_out, b_out = model.layers[-1]
    logits = h @ W_out + b_out

    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    n = X.shape[0]
    loss = float(-log_probs[np.arange(n), y].mean())

    probs = np.exp(log_probs)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    grads[-1] = (activations[-1].T @ delta, delta.sum(axis=0))
    upstream = delta @ W_out.T
    for i in range(len(model.layers) - 2, -1, -1):
        W, _ = model.layers[i]
        upstream = upstream * (activations[i + 1] > 0.0)
        grads[i] = (activations[i].T @ upstream, upstream.sum(axis=0))
        upstream = upstream @ W.T
    return loss, grads


class _Adam:
    def __init__(self, model: HeadModel, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in model.layers]
        self.v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in model.layers]

    def step(self, model: HeadModel, grads) -> None:
        cfg = self.cfg
        self.t += 1
        correction1 = 1.0 - cfg.adam_beta1**self.t
        correction2 = 1.0 - cfg.adam_beta2**self.t
        for i, (W, b) in enumerate(model.layers):
            for j, (param, grad) in enumerate(((W, grads[i][0]), (b, grads[i][1]))):
                m = self.m[i][j]
                v = self.v[i][j]
                m *= cfg.adam_beta1
                m += (1.0 - cfg.adam_beta1) * grad
                v *= cfg.adam_beta2
                v += (1.0 - cfg.adam_beta2) * grad * grad
                param -= cfg.learning_rate * (m / correction1) / (
                    np.sqrt(v / correction2) + cfg.adam_epsilon
                )


def _patient_slices(cohort: Cohort, patient_ids: Sequence[str]):
    """Patch matrix plus per-patient index ranges and binary labels."""
    ordered = [p for p in cohort.patients if p.patient_id in set(patient_ids)]
    X, _, owners = cohort.patch_matrix([p.patient_id for p in ordered])
    slices = []
    start = 0
    for p in ordered:
        n = len(p.patch_ids)
        slices.append((p.patient_id, start, start + n, p.msi_status is MsiStatus.MSI))
        start += n
    return X, slices


def _patient_level_auroc(model: HeadModel, X: np.ndarray, slices) -> float:
    probs = model.predict_proba(X)
    merged = patch_msi_probability(probs, model.n_classes)
    scores = [float(merged[a:b].mean()) for _, a, b, _ in slices]
    labels = [is_msi for _, _, _, is_msi in slices]
    return auroc(labels, scores)


def train(
    labeled: LabeledCohort,
    train_patients: set[str],
    val_patients: set[str],
    cfg: TrainConfig,
    fold: int | None = None,
) -> HeadModel:
    """Fit a head on the training patients' patches; keep the best epoch.

    Train and validation sets must be disjoint, nonempty, drawn from the
    TRAIN split, with exclusions already applied to the training side. Every class
    must be present among training patches, and validation must contain both
    subtypes so the checkpoint AUROC is defined.
    """
    cohort = labeled.base
    if not train_patients or not val_patients:
        raise ValueError("train and validation patient sets must be nonempty")
    if train_patients & val_patients:
        raise ValueError("train and validation patient sets overlap")
    overlap_excluded = train_patients & labeled.excluded_train_patients
    if overlap_excluded:
        raise ValueError(
            f"training set contains excluded patients: {sorted(overlap_excluded)[:3]}..."
        )
    by_id = cohort.patients_by_id()
    for pid in list(train_patients) + list(val_patients):
        if by_id[pid].split is not Split.TRAIN:
            raise ValueError(f"patient {pid} is not in the TRAIN split")

    n_classes = labeled.spec.n_classes
    X_train, _, owners = cohort.patch_matrix(sorted(train_patients))
    y_train = np.array(
        [labeled.sublabels[owner].value for owner in owners], dtype=np.intp
    )
    class_patch_counts = np.bincount(y_train, minlength=n_classes)
    missing = [SubLabel(c).name for c in range(n_classes) if class_patch_counts[c] == 0]
    if missing:
        raise ValueError(f"training classes with zero patches: {', '.join(missing)}")

    X_val, val_slices = _patient_slices(cohort, sorted(val_patients))
    if len({is_msi for _, _, _, is_msi in val_slices}) < 2:
        raise ValueError("validation set has a single class; checkpoint AUROC undefined")

    rng_init = spawn_rng(cfg.seed, "init")
    rng_sampler = spawn_rng(cfg.seed, "sampler")
    model = init_model(cohort.dim, cfg.hidden_dims, n_classes, rng_init)

    sample_weights = None
    if cfg.weighted_sampling:
        # Inverse patch frequency of each patch's sub-label, normalized.
        w = 1.0 / class_patch_counts[y_train]
        sample_weights = w / w.sum()

    adam = _Adam(model, cfg)
    n = X_train.shape[0]
    epoch_log: list[float] = []
    best_auroc = -np.inf
    best_epoch = -1
    best_layers = None
    for epoch in range(cfg.epochs):
        if sample_weights is not None:
            order = rng_sampler.choice(n, size=n, replace=True, p=sample_weights)
        else:
            order = rng_sampler.permutation(n)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grad(model, X_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise NumericTrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            adam.step(model, grads)
        val_auroc = _patient_level_auroc(model, X_val, val_slices)
        epoch_log.append(val_auroc)
        if val_auroc > best_auroc:
            best_auroc = val_auroc
            best_epoch = epoch
            best_layers = [(W.copy(), b.copy()) for W, b in model.layers]

    return HeadModel(
        layers=best_layers,
        n_classes=n_classes,
        provenance={
            "config": cfg.to_dict(),
            "variant": labeled.spec.variant.value,
            "threshold": labeled.spec.threshold,
            "exclude_mss_cimp_h_from_train": labeled.spec.exclude_mss_cimp_h_from_train,
            "fold": fold,
            "best_epoch": best_epoch,
            "best_val_auroc": best_auroc,
            "val_auroc_per_epoch": epoch_log,
            "n_train_patches": int(n),
            "class_patch_counts": [int(c) for c in class_patch_counts],
            "toolkit_version": _toolkit_version,
        },
    )


def predict(model: HeadModel, patches: Sequence[PatchEmbedding]) -> list[PatchPrediction]:
    """Order-preserving patch probabilities."""
    if not patches:
        return []
    X = np.vstack([p.vector for p in patches]).astype(np.float64)
    probs = model.predict_proba(X)
    return [PatchPrediction(patch_id=p.patch_id, probs=probs[i]) for i, p in enumerate(patches)]


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).copy()


def model_to_dict(model: HeadModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "n_classes": model.n_classes,
        "layers": [
            {"W": _encode_array(W), "b": _encode_array(b)} for W, b in model.layers
        ],
        "provenance": model.provenance,
    }


def model_from_dict(d: dict) -> HeadModel:
    if d.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema {d.get('schema')!r}")
    layers = [(_decode_array(layer["W"]), _decode_array(layer["b"])) for layer in d["layers"]]
    return HeadModel(layers=layers, n_classes=d["n_classes"], provenance=d["provenance"])


def canonical_json_bytes(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def model_digest(model: HeadModel) -> str:
    return hashlib.sha256(canonical_json_bytes(model_to_dict(model))).hexdigest()


def save_model(model: HeadModel, path: str | Path) -> None:
    Path(path).write_bytes(canonical_json_bytes(model_to_dict(model)))


def load_model(path: str | Path) -> HeadModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
