"""Stratified fold planning, experiment orchestration, and reporting.

Folds are stratified at the patient level by sub-label so every fold sees
the same class composition up to a one-patient deviation per stratum.
An experiment trains one head per fold, scores the fixed test split with
each, and reports per-fold AUROC/AP/F1 with fold-mean curves and a paired
t-test against a baseline trained on the identical fold partitions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__ as _toolkit_version
from .aggregation import PatientScore, aggregate_patient, patch_msi_probability
from .cohort import Cohort, CohortError, MsiStatus, Split, require_trainable
from .labeling import LabeledCohort, LabelingSpec, SubLabel, Variant, relabel
from .metrics import (
    SingleClassError,
    auroc,
    average_precision,
    f1_at_threshold,
    mean_curve,
    pr_points,
    roc_points,
    select_f1_threshold,
)
from .seeds import child_seed, spawn_rng
from .stats import PairedTTest, mean_sd_ci, paired_t_test
from .training import HeadModel, TrainConfig, canonical_json_bytes, train

REPORT_SCHEMA = "bptk-report/1"


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]  # TRAIN patient -> fold index
    stratify_variant: str
    seed: int
    small_strata: tuple[str, ...] = ()

    def fold_patients(self, fold: int) -> set[str]:
        return {pid for pid, f in self.assignment.items() if f == fold}

    def training_patients(self, fold: int) -> set[str]:
        return {pid for pid, f in self.assignment.items() if f != fold}


def make_folds(labeled: LabeledCohort, k: int, seed: int) -> FoldPlan:
    """Stratified patient-level fold assignment, deterministic given seed.

    Each stratum (sub-label; excluded patients count as MSS) is shuffled and
    dealt round-robin from a random starting fold, so per-fold stratum
    counts deviate from the ideal by at most one. Excluded patients are
    still assigned: they take part in validation, just never in fitting.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    cohort = labeled.base
    require_trainable(cohort)
    train_patients = [p for p in cohort.patients if p.split is Split.TRAIN]
    if k > len(train_patients):
        raise ValueError(f"k={k} exceeds the {len(train_patients)} TRAIN patients")

    strata: dict[str, list[str]] = {}
    for p in train_patients:
        if p.patient_id in labeled.excluded_train_patients:
            label = SubLabel.MSS.name
        else:
            label = labeled.sublabels[p.patient_id].name
        strata.setdefault(label, []).append(p.patient_id)

    rng = spawn_rng(seed, "folds")
    assignment: dict[str, int] = {}
    small = []
    for label in sorted(strata):
        members = sorted(strata[label])
        if len(members) < k:
            small.append(label)
        order = rng.permutation(len(members))
        start = int(rng.integers(k))
        for slot, idx in enumerate(order):
            assignment[members[idx]] = (start + slot) % k
    return FoldPlan(
        k=k,
        assignment=assignment,
        stratify_variant=labeled.spec.variant.value,
        seed=seed,
        small_strata=tuple(small),
    )


def write_fold_plan(plan: FoldPlan, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "fold"])
        for pid in sorted(plan.assignment):
            writer.writerow([pid, plan.assignment[pid]])


def read_fold_plan(path: str | Path, k: int, stratify_variant: str, seed: int) -> FoldPlan:
    assignment: dict[str, int] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["patient_id", "fold"]:
            raise CohortError(f"{path}: bad fold plan header {header!r}")
        for pid, fold in reader:
            assignment[pid] = int(fold)
    return FoldPlan(k=k, assignment=assignment, stratify_variant=stratify_variant, seed=seed)


@dataclass(frozen=True)
class MetricSummary:
    per_fold: tuple[float, ...]
    mean: float
    sd: float
    ci95: tuple[float, float]

    @staticmethod
    def compute(values: Sequence[float]) -> "MetricSummary":
        mean, sd, ci = mean_sd_ci(values)
        return MetricSummary(per_fold=tuple(float(v) for v in values), mean=mean, sd=sd, ci95=ci)


def _curve_dict(xs: np.ndarray, ys: np.ndarray) -> dict:
    return {"x": [float(v) for v in xs], "y": [float(v) for v in ys]}


@dataclass
class EvaluationReport:
    name: str
    variant: str
    k: int
    seed: int
    auroc: MetricSummary
    ap: MetricSummary
    f1: MetricSummary
    threshold: float
    threshold_degenerate: bool
    confusion_mean: tuple[tuple[float, float], tuple[float, float]]
    roc_per_fold: list[dict]  # {"x": fpr, "y": tpr}
    pr_per_fold: list[dict]  # {"x": recall, "y": precision}
    roc_mean: dict  # {"grid", "mean", "lo", "hi"}
    pr_mean: dict
    test_scores: list[list[tuple[str, float, int, int]]]  # per fold: (pid, p_msi, n, label)
    excluded_train_patients: tuple[str, ...]
    paired_vs_baseline: dict | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "name": self.name,
            "variant": self.variant,
            "k": self.k,
            "seed": self.seed,
            "metrics": {
                metric: {
                    "per_fold": list(summary.per_fold),
                    "mean": summary.mean,
                    "sd": summary.sd,
                    "ci95": list(summary.ci95),
                }
                for metric, summary in (("auroc", self.auroc), ("ap", self.ap), ("f1", self.f1))
            },
            "threshold": {"value": self.threshold, "degenerate": self.threshold_degenerate},
            "confusion_mean": [list(row) for row in self.confusion_mean],
            "curves": {
                "roc": {"per_fold": self.roc_per_fold, "mean": self.roc_mean},
                "pr": {"per_fold": self.pr_per_fold, "mean": self.pr_mean},
            },
            "test_scores": [
                [[pid, p, n, label] for pid, p, n, label in fold] for fold in self.test_scores
            ],
            "excluded_train_patients": list(self.excluded_train_patients),
            "paired_vs_baseline": self.paired_vs_baseline,
            "provenance": self.provenance,
        }

    @staticmethod
    def from_dict(d: dict) -> "EvaluationReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")

        def summary(key: str) -> MetricSummary:
            m = d["metrics"][key]
            return MetricSummary(
                per_fold=tuple(m["per_fold"]),
                mean=m["mean"],
                sd=m["sd"],
                ci95=(m["ci95"][0], m["ci95"][1]),
            )

        return EvaluationReport(
            name=d["name"],
            variant=d["variant"],
            k=d["k"],
            seed=d["seed"],
            auroc=summary("auroc"),
            ap=summary("ap"),
            f1=summary("f1"),
            threshold=d["threshold"]["value"],
            threshold_degenerate=d["threshold"]["degenerate"],
            confusion_mean=tuple(tuple(row) for row in d["confusion_mean"]),
            roc_per_fold=d["curves"]["roc"]["per_fold"],
            pr_per_fold=d["curves"]["pr"]["per_fold"],
            roc_mean=d["curves"]["roc"]["mean"],
            pr_mean=d["curves"]["pr"]["mean"],
            test_scores=[
                [(pid, p, n, label) for pid, p, n, label in fold] for fold in d["test_scores"]
            ],
            excluded_train_patients=tuple(d["excluded_train_patients"]),
            paired_vs_baseline=d["paired_vs_baseline"],
            provenance=d["provenance"],
        )

    def to_json_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_dict())

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_json_bytes())

    @staticmethod
    def read(path: str | Path) -> "EvaluationReport":
        return EvaluationReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_curve_csvs(self, out_dir: str | Path, prefix: str) -> None:
        out_dir = Path(out_dir)
        for i, curve in enumerate(self.roc_per_fold):
            _write_curve(out_dir / f"{prefix}_roc_fold{i}.csv", ["fpr", "tpr"], curve["x"], curve["y"])
        for i, curve in enumerate(self.pr_per_fold):
            _write_curve(
                out_dir / f"{prefix}_pr_fold{i}.csv", ["recall", "precision"], curve["x"], curve["y"]
            )
        _write_band(out_dir / f"{prefix}_roc_mean.csv", ["fpr", "tpr_mean", "tpr_lo", "tpr_hi"], self.roc_mean)
        _write_band(
            out_dir / f"{prefix}_pr_mean.csv", ["recall", "precision_mean", "precision_lo", "precision_hi"], self.pr_mean
        )


def _write_curve(path: Path, header: list[str], xs, ys) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, y in zip(xs, ys):
            writer.writerow([repr(float(x)), repr(float(y))])


def _write_band(path: Path, header: list[str], band: dict) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, m, lo, hi in zip(band["grid"], band["mean"], band["lo"], band["hi"]):
            writer.writerow([repr(float(x)), repr(float(m)), repr(float(lo)), repr(float(hi))])


def patient_scores(model: HeadModel, cohort: Cohort, patient_ids: Sequence[str]) -> list[PatientScore]:
    """Score each patient by predicting its patches and mean-merging."""
    by_id = cohort.patients_by_id()
    scores = []
    for pid in patient_ids:
        record = by_id[pid]
        X = np.vstack([cohort.embeddings[p].vector for p in record.patch_ids]).astype(np.float64)
        merged = patch_msi_probability(model.predict_proba(X), model.n_classes)
        scores.append(PatientScore(patient_id=pid, p_msi=float(merged.mean()), n_patches=X.shape[0]))
    return scores


def _labels_for(cohort: Cohort, patient_ids: Sequence[str]) -> list[int]:
    by_id = cohort.patients_by_id()
    return [int(by_id[pid].msi_status is MsiStatus.MSI) for pid in patient_ids]


@dataclass
class FoldOutputs:
    model: HeadModel
    val_labels: list[int]
    val_scores: list[float]
    test_scores: list[PatientScore]


def _evaluate_models(
    name: str,
    variant: str,
    k: int,
    seed: int,
    cohort: Cohort,
    fold_outputs: list[FoldOutputs],
    test_labels: list[int],
    excluded: tuple[str, ...],
    provenance: dict,
) -> EvaluationReport:
    """Assemble the per-fold metrics, threshold, curves, and confusion means."""
    choice = select_f1_threshold(
        [(fo.val_labels, fo.val_scores) for fo in fold_outputs]
    )
    fold_auroc, fold_ap, fold_f1 = [], [], []
    roc_per_fold, pr_per_fold = [], []
    roc_xs, roc_ys, pr_xs, pr_ys = [], [], [], []
    confusions = []
    test_score_rows = []
    for fo in fold_outputs:
        scores = [s.p_msi for s in fo.test_scores]
        fold_auroc.append(auroc(test_labels, scores))
        fold_ap.append(average_precision(test_labels, scores))
        result = f1_at_threshold(test_labels, scores, choice.threshold)
        fold_f1.append(result.f1)
        confusions.append(np.asarray(result.confusion, dtype=np.float64))
        fpr, tpr, _ = roc_points(test_labels, scores)
        recall, precision, _ = pr_points(test_labels, scores)
        roc_per_fold.append(_curve_dict(fpr, tpr))
        pr_per_fold.append(_curve_dict(recall, precision))
        roc_xs.append(fpr)
        roc_ys.append(tpr)
        # PR curves are averaged on a recall grid; prepend the zero-recall point.
        pr_xs.append(np.r_[0.0, recall])
        pr_ys.append(np.r_[precision[0], precision])
        test_score_rows.append(
            [
                (s.patient_id, float(s.p_msi), int(s.n_patches), int(label))
                for s, label in zip(fo.test_scores, test_labels)
            ]
        )
    grid, mean, lo, hi = mean_curve(roc_xs, roc_ys)
    roc_mean = {
        "grid": [float(v) for v in grid],
        "mean": [float(v) for v in mean],
        "lo": [float(v) for v in lo],
        "hi": [float(v) for v in hi],
    }
    grid, mean, lo, hi = mean_curve(pr_xs, pr_ys)
    pr_mean = {
        "grid": [float(v) for v in grid],
        "mean": [float(v) for v in mean],
        "lo": [float(v) for v in lo],
        "hi": [float(v) for v in hi],
    }
    confusion_mean = np.mean(confusions, axis=0)
    return EvaluationReport(
        name=name,
        variant=variant,
        k=k,
        seed=seed,
        auroc=MetricSummary.compute(fold_auroc),
        ap=MetricSummary.compute(fold_ap),
        f1=MetricSummary.compute(fold_f1),
        threshold=choice.threshold,
        threshold_degenerate=choice.degenerate,
        confusion_mean=((float(confusion_mean[0, 0]), float(confusion_mean[0, 1])),
                        (float(confusion_mean[1, 0]), float(confusion_mean[1, 1]))),
        roc_per_fold=roc_per_fold,
        pr_per_fold=pr_per_fold,
        roc_mean=roc_mean,
        pr_mean=pr_mean,
        test_scores=test_score_rows,
        excluded_train_patients=excluded,
        provenance=provenance,
    )


def paired_comparison(model_report: EvaluationReport, baseline_report: EvaluationReport) -> dict:
    """Paired t-tests over the per-fold metric values of two reports."""
    out: dict = {"baseline_name": baseline_report.name, "n": model_report.k}
    for metric in ("auroc", "ap", "f1"):
        a = getattr(model_report, metric).per_fold
        b = getattr(baseline_report, metric).per_fold
        test: PairedTTest = paired_t_test(a, b)
        out[metric] = {
            "t": None if not np.isfinite(test.t) else test.t,
            "p": test.p,
            "degenerate": test.degenerate,
        }
    return out


@dataclass
class ExperimentResult:
    fold_plan: FoldPlan
    labeled: LabeledCohort
    labeled_baseline: LabeledCohort
    fold_outputs: list[FoldOutputs]
    baseline_outputs: list[FoldOutputs]
    report: EvaluationReport
    baseline_report: EvaluationReport


def _run_folds(
    labeled: LabeledCohort,
    plan: FoldPlan,
    cfg: TrainConfig,
    seed: int,
    tag: str,
    test_patients: list[str],
    jobs: int = 1,
) -> list[FoldOutputs]:
    cohort = labeled.base

    def run_fold(fold: int) -> FoldOutputs:
        fit = plan.training_patients(fold) - labeled.excluded_train_patients
        val = plan.fold_patients(fold)
        fold_cfg = replace(cfg, seed=child_seed(seed, "train", tag, fold))
        model = train(labeled, fit, val, fold_cfg, fold=fold)
        val_ordered = sorted(val)
        val_scores = patient_scores(model, cohort, val_ordered)
        return FoldOutputs(
            model=model,
            val_labels=_labels_for(cohort, val_ordered),
            val_scores=[s.p_msi for s in val_scores],
            test_scores=patient_scores(model, cohort, test_patients),
        )

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_fold, range(plan.k)))
    return [run_fold(fold) for fold in range(plan.k)]


def run_experiment(
    cohort: Cohort,
    spec: LabelingSpec,
    k: int,
    train_cfg: TrainConfig,
    seed: int,
    name: str | None = None,
    jobs: int = 1,
) -> ExperimentResult:
    """Train and evaluate a primed model against its matched baseline.

    The baseline (2-class) comparator trains on the identical fold
    partitions and the identical training patients, including any CIMP
    exclusions, so the paired per-fold comparison isolates the label-space
    change.
    """
    test_patients = sorted(p.patient_id for p in cohort.patients if p.split is Split.TEST)
    if not test_patients:
        raise CohortError("cohort has no TEST split patients")
    labeled = relabel(cohort, spec)
    labeled_baseline = relabel(cohort, LabelingSpec(variant=Variant.BASELINE))
    if spec.exclude_mss_cimp_h_from_train:
        # Matched baseline drops the same patients from its fitting sets.
        labeled_baseline = LabeledCohort(
            base=labeled_baseline.base,
            spec=labeled_baseline.spec,
            sublabels={
                pid: lab
                for pid, lab in labeled_baseline.sublabels.items()
                if pid not in labeled.excluded_train_patients
            },
            excluded_train_patients=labeled.excluded_train_patients,
        )
    plan = make_folds(labeled, k, child_seed(seed, "folds", spec.variant.value))
    test_labels = _labels_for(cohort, test_patients)

    name = name or spec.variant.value
    fold_outputs = _run_folds(labeled, plan, train_cfg, seed, name, test_patients, jobs)
    baseline_outputs = _run_folds(
        labeled_baseline, plan, train_cfg, seed, f"{name}-baseline", test_patients, jobs
    )

    common_provenance = {
        "train_config": train_cfg.to_dict(),
        "k": k,
        "seed": seed,
        "toolkit_version": _toolkit_version,
        "fold_seed": plan.seed,
        "small_strata": list(plan.small_strata),
    }
    excluded = tuple(sorted(labeled.excluded_train_patients))
    report = _evaluate_models(
        name,
        spec.variant.value,
        k,
        seed,
        cohort,
        fold_outputs,
        test_labels,
        excluded,
        {**common_provenance, "labeling": _spec_dict(spec)},
    )
    baseline_report = _evaluate_models(
        f"{name}-baseline",
        Variant.BASELINE.value,
        k,
        seed,
        cohort,
        baseline_outputs,
        test_labels,
        excluded,
        {**common_provenance, "labeling": _spec_dict(LabelingSpec(variant=Variant.BASELINE))},
    )
    report.paired_vs_baseline = paired_comparison(report, baseline_report)
    return ExperimentResult(
        fold_plan=plan,
        labeled=labeled,
        labeled_baseline=labeled_baseline,
        fold_outputs=fold_outputs,
        baseline_outputs=baseline_outputs,
        report=report,
        baseline_report=baseline_report,
    )


def _spec_dict(spec: LabelingSpec) -> dict:
    return {
        "variant": spec.variant.value,
        "threshold": spec.threshold,
        "exclude_mss_cimp_h_from_train": spec.exclude_mss_cimp_h_from_train,
    }


@dataclass(frozen=True)
class CategoryProfile:
    n_patches: int
    n_patients: int
    empty: bool
    snp: dict[str, float] | None  # five-number summary
    cimp_proportions: dict[str, float]
    cnv: dict[str, float] | None


def misclassification_profile(
    labeled: LabeledCohort,
    predictions: Sequence,
    threshold: float,
    n_classes: int,
) -> dict[str, CategoryProfile]:
    """Patient-level genomics digests per patch classification category.

    Patches are split into TP/FN/FP/TN (MSI positive) by comparing their
    merged MSI probability against the threshold; each patch carries its
    patient's genomic profile.
    """
    cohort = labeled.base
    owner = {pid: p for p in cohort.patients for pid in p.patch_ids}
    buckets: dict[str, list] = {"TP": [], "FN": [], "FP": [], "TN": []}
    for pred in predictions:
        patient = owner.get(pred.patch_id)
        if patient is None:
            raise CohortError(f"prediction for unknown patch {pred.patch_id!r}")
        score = patch_msi_probability(pred.probs, n_classes)
        positive = score >= threshold
        if patient.msi_status is MsiStatus.MSI:
            buckets["TP" if positive else "FN"].append(patient)
        else:
            buckets["FP" if positive else "TN"].append(patient)

    profile: dict[str, CategoryProfile] = {}
    for category, patients in buckets.items():
        snp_values = [float(p.genomic.snp_count) for p in patients if p.genomic.snp_count is not None]
        cnv_values = [p.genomic.cnv_fraction for p in patients if p.genomic.cnv_fraction is not None]
        cimp_counts: dict[str, int] = {}
        for p in patients:
            key = "NA" if p.genomic.cimp_status is None else p.genomic.cimp_status.value
            cimp_counts[key] = cimp_counts.get(key, 0) + 1
        total = len(patients)
        profile[category] = CategoryProfile(
            n_patches=total,
            n_patients=len({p.patient_id for p in patients}),
            empty=total == 0,
            snp=_five_number_dict(snp_values),
            cimp_proportions={k: v / total for k, v in sorted(cimp_counts.items())} if total else {},
            cnv=_five_number_dict(cnv_values),
        )
    return profile


def _five_number_dict(values: list[float]) -> dict[str, float] | None:
    if not values:
        return None
    q = np.percentile(np.asarray(values, dtype=np.float64), [0, 25, 50, 75, 100])
    return {
        "min": float(q[0]),
        "q1": float(q[1]),
        "median": float(q[2]),
        "q3": float(q[3]),
        "max": float(q[4]),
    }


def write_profile_csv(profile: dict[str, CategoryProfile], path: str | Path) -> None:
    cimp_keys = sorted({k for p in profile.values() for k in p.cimp_proportions})
    header = ["category", "n_patches", "n_patients", "empty"]
    header += [f"snp_{k}" for k in ("min", "q1", "median", "q3", "max")]
    header += [f"cimp_{k}_prop" for k in cimp_keys]
    header += [f"cnv_{k}" for k in ("min", "q1", "median", "q3", "max")]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for category in ("TP", "FN", "FP", "TN"):
            p = profile[category]
            row: list = [category, p.n_patches, p.n_patients, int(p.empty)]
            row += ["" if p.snp is None else repr(p.snp[k]) for k in ("min", "q1", "median", "q3", "max")]
            row += [repr(p.cimp_proportions.get(k, 0.0)) if p.cimp_proportions else "" for k in cimp_keys]
            row += ["" if p.cnv is None else repr(p.cnv[k]) for k in ("min", "q1", "median", "q3", "max")]
            writer.writerow(row)
