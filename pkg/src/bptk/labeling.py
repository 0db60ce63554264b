"""Genomic sub-label generation for biologically-primed training.

MSI patients are split into two sub-classes by a single genomic feature:
a strict threshold on SNP count or CNV fraction (feature > threshold puts
the patient in the second sub-class, boundary values stay in the first),
or the CIMP-H / non-CIMP-H dichotomy. MSS patients keep a single class.
The CIMP variant can additionally drop CIMP-H MSS patients from training
portions; they remain available for validation and test scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .cohort import CimpStatus, Cohort, MsiStatus, Split, require_trainable


class LabelingError(ValueError):
    """A labeling spec cannot be applied to the given cohort."""


class Variant(Enum):
    BASELINE = "baseline"
    SNP = "snp"
    CIMP = "cimp"
    CNV = "cnv"


class SubLabel(Enum):
    # Values are the class indices of the trained heads.
    MSS = 0
    MSI_1 = 1
    MSI_2 = 2


@dataclass(frozen=True)
class LabelingSpec:
    variant: Variant
    threshold: float | None = None
    exclude_mss_cimp_h_from_train: bool = False

    def __post_init__(self) -> None:
        if self.variant in (Variant.SNP, Variant.CNV):
            if self.threshold is None or not math.isfinite(self.threshold):
                raise LabelingError(f"{self.variant.value} labeling requires a finite threshold")
            if self.variant is Variant.SNP and self.threshold <= 0:
                raise LabelingError(f"SNP threshold must be > 0, got {self.threshold}")
            if self.variant is Variant.CNV and not 0.0 < self.threshold < 1.0:
                raise LabelingError(f"CNV threshold must be in (0, 1), got {self.threshold}")
        elif self.threshold is not None:
            raise LabelingError(f"{self.variant.value} labeling takes no threshold")
        if self.exclude_mss_cimp_h_from_train and self.variant is not Variant.CIMP:
            raise LabelingError("MSS CIMP-H exclusion is only meaningful for the cimp variant")

    @property
    def n_classes(self) -> int:
        return 2 if self.variant is Variant.BASELINE else 3


@dataclass(frozen=True)
class LabeledCohort:
    base: Cohort
    spec: LabelingSpec
    # Covers every patient except excluded ones, so that sub-labels plus
    # the excluded set partition the cohort.
    sublabels: dict[str, SubLabel]
    excluded_train_patients: frozenset[str]


def _msi_sublabel(patient, spec: LabelingSpec) -> SubLabel:
    g = patient.genomic
    if spec.variant is Variant.BASELINE:
        return SubLabel.MSI_1
    if spec.variant is Variant.SNP:
        if g.snp_count is None:
            raise LabelingError(f"patient {patient.patient_id}: snp_count is NA")
        return SubLabel.MSI_2 if g.snp_count > spec.threshold else SubLabel.MSI_1
    if spec.variant is Variant.CNV:
        if g.cnv_fraction is None:
            raise LabelingError(f"patient {patient.patient_id}: cnv_fraction is NA")
        return SubLabel.MSI_2 if g.cnv_fraction > spec.threshold else SubLabel.MSI_1
    if g.cimp_status is None:
        raise LabelingError(f"patient {patient.patient_id}: cimp_status is NA")
    return SubLabel.MSI_2 if g.cimp_status is CimpStatus.CIMP_H else SubLabel.MSI_1


def relabel(cohort: Cohort, spec: LabelingSpec) -> LabeledCohort:
    """Assign sub-labels per the spec; a pure, deterministic function.

    MSS patients map to MSS; MSI patients map to MSI_1/MSI_2 by the spec's
    rule. With CIMP exclusion on, CIMP-H MSS patients in the TRAIN split go
    to the excluded set instead of receiving a sub-label.
    """
    sublabels: dict[str, SubLabel] = {}
    excluded: set[str] = set()
    for patient in cohort.patients:
        if patient.msi_status is MsiStatus.MSS:
            if spec.exclude_mss_cimp_h_from_train and patient.split is Split.TRAIN:
                if patient.genomic.cimp_status is None:
                    raise LabelingError(
                        f"patient {patient.patient_id}: cimp_status is NA "
                        "(required to apply the MSS CIMP-H exclusion)"
                    )
                if patient.genomic.cimp_status is CimpStatus.CIMP_H:
                    excluded.add(patient.patient_id)
                    continue
            sublabels[patient.patient_id] = SubLabel.MSS
        else:
            sublabels[patient.patient_id] = _msi_sublabel(patient, spec)
    return LabeledCohort(
        base=cohort,
        spec=spec,
        sublabels=sublabels,
        excluded_train_patients=frozenset(excluded),
    )


def class_counts(labeled: LabeledCohort, split: Split) -> dict[SubLabel, tuple[int, int]]:
    """(patient, patch) counts per sub-label; excluded patients do not count."""
    counts = {label: [0, 0] for label in SubLabel}
    for patient in labeled.base.patients:
        if patient.split is not split or patient.patient_id in labeled.excluded_train_patients:
            continue
        label = labeled.sublabels[patient.patient_id]
        counts[label][0] += 1
        counts[label][1] += len(patient.patch_ids)
    return {label: (n, p) for label, (n, p) in counts.items()}


def snp_candidates(lo: float = 800.0, hi: float = 1500.0, step: float = 100.0) -> list[float]:
    """Default SNP threshold sweep grid: 800 to 1500 in steps of 100."""
    values = []
    v = lo
    while v <= hi + 1e-9:
        values.append(float(v))
        v += step
    return values


def sweep_snp_threshold(
    cohort: Cohort,
    candidates: list[float],
    fold_plan,
    train_cfg,
) -> tuple[float, list[tuple[float, float | None]]]:
    """Pick the SNP split threshold by validation AUROC on the first fold.

    For each candidate (strictly increasing), the cohort is relabeled, a
    3-class head is trained on the first fold's training portion, and
    patient-level AUROC is measured on the first fold's validation portion.
    Candidates that leave an MSI sub-class with no training patches are
    skipped (AUROC None in the table). Ties go to the smaller threshold.
    """
    from .training import train  # local import: training depends on labeling

    if not candidates:
        raise LabelingError("candidate list is empty")
    if any(b <= a for a, b in zip(candidates, candidates[1:])):
        raise LabelingError("candidates must be strictly increasing")
    if fold_plan.k < 1:
        raise LabelingError("fold plan has no folds")
    require_trainable(cohort)

    val_patients = {pid for pid, fold in fold_plan.assignment.items() if fold == 0}
    train_patients = {pid for pid, fold in fold_plan.assignment.items() if fold != 0}
    table: list[tuple[float, float | None]] = []
    best: tuple[float, float] | None = None  # (auroc, threshold)
    for candidate in candidates:
        labeled = relabel(cohort, LabelingSpec(variant=Variant.SNP, threshold=candidate))
        counts = class_counts(labeled, Split.TRAIN)
        fit_patients = train_patients - labeled.excluded_train_patients
        n1 = sum(1 for pid in fit_patients if labeled.sublabels[pid] is SubLabel.MSI_1)
        n2 = sum(1 for pid in fit_patients if labeled.sublabels[pid] is SubLabel.MSI_2)
        if n1 == 0 or n2 == 0:
            table.append((candidate, None))
            continue
        model = train(labeled, fit_patients, val_patients, train_cfg)
        score = float(model.provenance["best_val_auroc"])
        table.append((candidate, score))
        if best is None or score > best[0]:
            best = (score, candidate)
    if best is None:
        raise LabelingError("every candidate left an empty MSI sub-class in training")
    return best[1], table
