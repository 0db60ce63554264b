"""Fusing two primed models through a small trainable network.

The fusion net consumes, per patch, the concatenated class probabilities
of two fixed 3-class source models (A's three, then B's three, each in
[MSS, MSI_1, MSI_2] order) and produces a binary MSI/MSS probability.
Patient scores come from the usual mean aggregation of the patch outputs.

To avoid fitting the fusion on probabilities the source heads overfit,
its training features are out-of-fold: each training patient's features
come from the source models that never saw that patient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__ as _toolkit_version
from .aggregation import PatientScore
from .cohort import Cohort, CohortError, MsiStatus, Split
from .evaluation import (
    EvaluationReport,
    ExperimentResult,
    FoldOutputs,
    FoldPlan,
    _evaluate_models,
    _labels_for,
    paired_comparison,
)
from .labeling import LabeledCohort
from .metrics import auroc
from .seeds import child_seed, spawn_rng
from .stats import paired_t_test
from .training import (
    HeadModel,
    NumericTrainingError,
    TrainConfig,
    _Adam,
    canonical_json_bytes,
    init_model,
    loss_and_grad,
    model_digest,
    model_from_dict,
    model_to_dict,
)

FUSION_INPUT_DIM = 6
FUSION_SCHEMA = "bptk-fusion/1"


@dataclass(frozen=True)
class FusionModel:
    net: HeadModel
    source_a: str  # content digest of source model A
    source_b: str

    def __post_init__(self) -> None:
        if self.net.input_dim != FUSION_INPUT_DIM:
            raise ValueError(f"fusion input dim must be {FUSION_INPUT_DIM}, got {self.net.input_dim}")
        if self.net.n_classes != 2:
            raise ValueError("fusion output must be binary")


@dataclass(frozen=True)
class FusionDataset:
    features: np.ndarray  # (n, 6) float64
    labels: np.ndarray  # (n,) 0=MSS, 1=MSI
    patch_ids: tuple[str, ...]
    patient_ids: tuple[str, ...]

    def subset(self, patients: set[str]) -> "FusionDataset":
        mask = np.array([pid in patients for pid in self.patient_ids])
        return FusionDataset(
            features=self.features[mask],
            labels=self.labels[mask],
            patch_ids=tuple(p for p, m in zip(self.patch_ids, mask) if m),
            patient_ids=tuple(p for p, m in zip(self.patient_ids, mask) if m),
        )


def _model_predictions(model: HeadModel, cohort: Cohort, patients: Sequence[str]) -> dict[str, np.ndarray]:
    X, patch_ids, _ = cohort.patch_matrix(patients)
    probs = model.predict_proba(X)
    return {pid: probs[i] for i, pid in enumerate(patch_ids)}


def build_fusion_dataset(
    model_a: HeadModel,
    model_b: HeadModel,
    labeled_a: LabeledCohort,
    labeled_b: LabeledCohort,
    patients: set[str],
    predictions_a: Mapping[str, np.ndarray] | None = None,
    predictions_b: Mapping[str, np.ndarray] | None = None,
) -> FusionDataset:
    """Per-patch 6-vectors (A probs then B probs) with binary base labels.

    Exclusions in either labeled cohort are irrelevant here: fusion rows use
    the base subtype labels, so every patch of every listed patient appears.
    Precomputed prediction maps (for out-of-fold features) may be supplied;
    a listed patch missing from either map is an error.
    """
    if model_a.n_classes != 3 or model_b.n_classes != 3:
        raise ValueError("fusion sources must both be 3-class models")
    if labeled_a.base is not labeled_b.base:
        raise ValueError("source labelings must share the same base cohort")
    cohort = labeled_a.base
    by_id = cohort.patients_by_id()
    ordered = [p for p in cohort.patients if p.patient_id in patients]
    if predictions_a is None:
        predictions_a = _model_predictions(model_a, cohort, [p.patient_id for p in ordered])
    if predictions_b is None:
        predictions_b = _model_predictions(model_b, cohort, [p.patient_id for p in ordered])

    rows = []
    labels = []
    patch_ids = []
    patient_ids = []
    for patient in ordered:
        for pid in patient.patch_ids:
            if pid not in predictions_a or pid not in predictions_b:
                raise CohortError(f"patch {pid!r} missing from a source model's prediction set")
            rows.append(np.concatenate([predictions_a[pid], predictions_b[pid]]))
            labels.append(int(patient.msi_status is MsiStatus.MSI))
            patch_ids.append(pid)
            patient_ids.append(patient.patient_id)
    if not rows:
        raise CohortError("no patches for the requested patients")
    return FusionDataset(
        features=np.vstack(rows).astype(np.float64),
        labels=np.asarray(labels, dtype=np.intp),
        patch_ids=tuple(patch_ids),
        patient_ids=tuple(patient_ids),
    )


def _patient_groups(dataset: FusionDataset) -> list[tuple[str, np.ndarray, bool]]:
    groups: dict[str, list[int]] = {}
    label_of: dict[str, bool] = {}
    for i, pid in enumerate(dataset.patient_ids):
        groups.setdefault(pid, []).append(i)
        label_of[pid] = bool(dataset.labels[i])
    return [(pid, np.asarray(idx), label_of[pid]) for pid, idx in groups.items()]


def _dataset_patient_auroc(net: HeadModel, dataset: FusionDataset) -> float:
    probs = net.predict_proba(dataset.features)[:, 1]
    groups = _patient_groups(dataset)
    scores = [float(probs[idx].mean()) for _, idx, _ in groups]
    labels = [is_msi for _, _, is_msi in groups]
    return auroc(labels, scores)


def train_fusion(
    dataset: FusionDataset,
    train_patients: set[str],
    val_patients: set[str],
    cfg: TrainConfig,
    source_a_digest: str = "",
    source_b_digest: str = "",
    fold: int | None = None,
) -> FusionModel:
    """Fit the fusion net on patch rows; keep the best epoch.

    Same contract as head training with 6-dim inputs and two classes; the
    checkpoint metric is patient-level validation AUROC of the aggregated
    fusion outputs.
    """
    if not train_patients or not val_patients:
        raise ValueError("train and validation patient sets must be nonempty")
    if train_patients & val_patients:
        raise ValueError("train and validation patient sets overlap")
    train_set = dataset.subset(train_patients)
    val_set = dataset.subset(val_patients)
    counts = np.bincount(train_set.labels, minlength=2)
    if counts.min() == 0:
        raise ValueError("a fusion training class has zero patches")
    if len({bool(v) for v in val_set.labels}) < 2:
        raise ValueError("fusion validation set has a single class; checkpoint AUROC undefined")

    rng_init = spawn_rng(cfg.seed, "init")
    rng_sampler = spawn_rng(cfg.seed, "sampler")
    net = init_model(FUSION_INPUT_DIM, cfg.hidden_dims, 2, rng_init)
    adam = _Adam(net, cfg)

    sample_weights = None
    if cfg.weighted_sampling:
        w = 1.0 / counts[train_set.labels]
        sample_weights = w / w.sum()

    n = train_set.features.shape[0]
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
            loss, grads = loss_and_grad(net, train_set.features[idx], train_set.labels[idx])
            if not np.isfinite(loss):
                raise NumericTrainingError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            adam.step(net, grads)
        val_auroc = _dataset_patient_auroc(net, val_set)
        epoch_log.append(val_auroc)
        if val_auroc > best_auroc:
            best_auroc = val_auroc
            best_epoch = epoch
            best_layers = [(W.copy(), b.copy()) for W, b in net.layers]

    best = HeadModel(
        layers=best_layers,
        n_classes=2,
        provenance={
            "config": cfg.to_dict(),
            "fold": fold,
            "best_epoch": best_epoch,
            "best_val_auroc": best_auroc,
            "val_auroc_per_epoch": epoch_log,
            "n_train_patches": int(n),
            "class_patch_counts": [int(c) for c in counts],
            "sources": {"a": source_a_digest, "b": source_b_digest},
            "toolkit_version": _toolkit_version,
        },
    )
    return FusionModel(net=best, source_a=source_a_digest, source_b=source_b_digest)


def predict_fusion(
    fusion: FusionModel,
    model_a: HeadModel,
    model_b: HeadModel,
    cohort: Cohort,
    patients: Sequence[str],
) -> list[PatientScore]:
    """Patient scores from mean-aggregated fusion patch probabilities."""
    by_id = cohort.patients_by_id()
    preds_a = _model_predictions(model_a, cohort, patients)
    preds_b = _model_predictions(model_b, cohort, patients)
    scores = []
    for pid in patients:
        record = by_id[pid]
        feats = np.vstack(
            [np.concatenate([preds_a[p], preds_b[p]]) for p in record.patch_ids]
        )
        probs = fusion.net.predict_proba(feats)[:, 1]
        scores.append(
            PatientScore(patient_id=pid, p_msi=float(probs.mean()), n_patches=len(record.patch_ids))
        )
    return scores


def out_of_fold_predictions(
    models: Sequence[HeadModel], plan: FoldPlan, cohort: Cohort
) -> dict[str, np.ndarray]:
    """Each TRAIN patient's patch probabilities from the model that held it out."""
    preds: dict[str, np.ndarray] = {}
    for fold in range(plan.k):
        patients = sorted(plan.fold_patients(fold))
        preds.update(_model_predictions(models[fold], cohort, patients))
    return preds


def run_fusion_experiment(
    result_a: ExperimentResult,
    result_b: ExperimentResult,
    cfg: TrainConfig,
    seed: int,
    name: str = "combined",
    baseline_report: EvaluationReport | None = None,
) -> tuple[EvaluationReport, list[FusionModel]]:
    """Train per-fold fusion models on out-of-fold source probabilities.

    Fold structure follows result_a's plan: fusion session i fits on the
    pooled out-of-fold rows of every fold but i, checkpoints on fold i,
    and is scored on the test split through source models A_i and B_i.
    The paired comparison defaults to result_b's matched baseline.
    """
    labeled_a, labeled_b = result_a.labeled, result_b.labeled
    cohort = labeled_a.base
    plan = result_a.fold_plan
    models_a = [fo.model for fo in result_a.fold_outputs]
    models_b = [fo.model for fo in result_b.fold_outputs]
    oof_a = out_of_fold_predictions(models_a, plan, cohort)
    oof_b = out_of_fold_predictions(models_b, result_b.fold_plan, cohort)
    all_train = set(plan.assignment)
    dataset = build_fusion_dataset(
        models_a[0], models_b[0], labeled_a, labeled_b, all_train,
        predictions_a=oof_a, predictions_b=oof_b,
    )

    test_patients = sorted(p.patient_id for p in cohort.patients if p.split is Split.TEST)
    test_labels = _labels_for(cohort, test_patients)
    fold_outputs: list[FoldOutputs] = []
    fusions: list[FusionModel] = []
    for fold in range(plan.k):
        fold_cfg = replace(cfg, seed=child_seed(seed, "fusion", fold))
        fusion = train_fusion(
            dataset,
            plan.training_patients(fold),
            plan.fold_patients(fold),
            fold_cfg,
            source_a_digest=model_digest(models_a[fold]),
            source_b_digest=model_digest(models_b[fold]),
            fold=fold,
        )
        fusions.append(fusion)
        val_ordered = sorted(plan.fold_patients(fold))
        val_subset = dataset.subset(set(val_ordered))
        val_probs = fusion.net.predict_proba(val_subset.features)[:, 1]
        groups = {pid: [] for pid in val_ordered}
        for i, pid in enumerate(val_subset.patient_ids):
            groups[pid].append(val_probs[i])
        fold_outputs.append(
            FoldOutputs(
                model=fusion.net,
                val_labels=_labels_for(cohort, val_ordered),
                val_scores=[float(np.mean(groups[pid])) for pid in val_ordered],
                test_scores=predict_fusion(fusion, models_a[fold], models_b[fold], cohort, test_patients),
            )
        )

    report = _evaluate_models(
        name,
        "combined",
        plan.k,
        seed,
        cohort,
        fold_outputs,
        test_labels,
        tuple(sorted(labeled_a.excluded_train_patients | labeled_b.excluded_train_patients)),
        {
            "train_config": cfg.to_dict(),
            "k": plan.k,
            "seed": seed,
            "toolkit_version": _toolkit_version,
            "sources": {
                "a": result_a.report.name,
                "b": result_b.report.name,
                "a_digests": [model_digest(m) for m in models_a],
                "b_digests": [model_digest(m) for m in models_b],
            },
            "fusion_features": "out-of-fold source probabilities",
        },
    )
    if baseline_report is None:
        baseline_report = result_b.baseline_report
    report.paired_vs_baseline = paired_comparison(report, baseline_report)
    return report, fusions


def fusion_to_dict(fusion: FusionModel) -> dict:
    d = model_to_dict(fusion.net)
    d["schema"] = FUSION_SCHEMA
    d["sources"] = {"a": fusion.source_a, "b": fusion.source_b}
    return d


def fusion_from_dict(d: dict) -> FusionModel:
    if d.get("schema") != FUSION_SCHEMA:
        raise ValueError(f"unsupported fusion schema {d.get('schema')!r}")
    inner = dict(d)
    inner["schema"] = "bptk-model/1"
    net = model_from_dict(inner)
    return FusionModel(net=net, source_a=d["sources"]["a"], source_b=d["sources"]["b"])


def save_fusion(fusion: FusionModel, path: str | Path) -> None:
    Path(path).write_bytes(canonical_json_bytes(fusion_to_dict(fusion)))


def load_fusion(path: str | Path) -> FusionModel:
    return fusion_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
