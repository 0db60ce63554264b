"""Patch-to-patient score computation.

A 3-class head's per-patch MSI probability is the max of its two MSI
sub-class probabilities (the merge happens per patch, before any
averaging); a 2-class head's is its positive-class probability. The
patient score is the arithmetic mean of the per-patch MSI probabilities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PatientScore:
    patient_id: str
    p_msi: float
    n_patches: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_msi <= 1.0:
            raise ValueError(f"p_msi must be in [0, 1], got {self.p_msi}")
        if self.n_patches < 1:
            raise ValueError(f"n_patches must be >= 1, got {self.n_patches}")


def patch_msi_probability(probs, n_classes: int):
    """MSI probability of one patch (or a batch, row-wise).

    2-class: the probability at index 1. 3-class: max of indices 1 and 2.
    """
    if n_classes not in (2, 3):
        raise ValueError(f"n_classes must be 2 or 3, got {n_classes}")
    arr = np.asarray(probs, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != n_classes:
        raise ValueError(f"probability rows of length {arr.shape[1]} do not match n_classes={n_classes}")
    merged = arr[:, 1] if n_classes == 2 else np.maximum(arr[:, 1], arr[:, 2])
    return float(merged[0]) if single else merged


def aggregate_patient(patient_id: str, preds: Sequence, n_classes: int) -> PatientScore:
    """Mean of per-patch MSI probabilities for one patient's predictions."""
    if not len(preds):
        raise ValueError(f"patient {patient_id}: no predictions to aggregate")
    probs = np.vstack([p.probs for p in preds])
    merged = patch_msi_probability(probs, n_classes)
    return PatientScore(patient_id=patient_id, p_msi=float(merged.mean()), n_patches=len(preds))


def write_scores_csv(scores: Sequence[PatientScore], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "p_msi", "n_patches"])
        for s in scores:
            writer.writerow([s.patient_id, repr(s.p_msi), s.n_patches])
