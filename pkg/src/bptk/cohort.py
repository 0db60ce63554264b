"""Patient cohort model: manifests, genomic profiles, patch embeddings.

A cohort is assembled in two steps: ``load_manifest`` reads the
patient-level CSV (subtype label, genomic profile, split), then
``attach_embeddings`` binds one fixed-dimension feature vector per patch
from a CSV or packed binary file. Cohorts are immutable after construction
and safe to share across workers.

Genomic values may be the literal token ``NA``; such patients load fine and
are only rejected later by labeling rules that need the missing feature.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

MANIFEST_HEADER = ["patient_id", "msi_status", "snp_count", "cimp_status", "cnv_fraction", "split"]
PACKED_MAGIC = b"BPEM"
PACKED_VERSION = 1


class CohortError(ValueError):
    """A manifest or embedding file violates the cohort contract."""


class MsiStatus(Enum):
    MSI = "MSI"
    MSS = "MSS"


class CimpStatus(Enum):
    CIMP_H = "CIMP_H"
    CIMP_LOW = "CIMP_LOW"
    NON_CIMP = "NON_CIMP"


class Split(Enum):
    TRAIN = "TRAIN"
    TEST = "TEST"


@dataclass(frozen=True)
class GenomicProfile:
    """Patient-level genomics; None marks an NA manifest cell."""

    snp_count: int | None
    cimp_status: CimpStatus | None
    cnv_fraction: float | None

    def __post_init__(self) -> None:
        if self.snp_count is not None and self.snp_count < 0:
            raise CohortError(f"snp_count must be >= 0, got {self.snp_count}")
        if self.cnv_fraction is not None and not 0.0 <= self.cnv_fraction <= 1.0:
            raise CohortError(f"cnv_fraction must be in [0, 1], got {self.cnv_fraction}")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    msi_status: MsiStatus
    genomic: GenomicProfile
    split: Split
    patch_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class PatchEmbedding:
    patch_id: str
    patient_id: str
    vector: np.ndarray  # float32, shape (dim,)


@dataclass(frozen=True)
class Cohort:
    patients: tuple[PatientRecord, ...]
    embeddings: Mapping[str, PatchEmbedding]
    dim: int | None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for p in self.patients:
            if p.patient_id in seen:
                raise CohortError(f"duplicate patient_id {p.patient_id!r}")
            seen.add(p.patient_id)

    @property
    def has_embeddings(self) -> bool:
        return self.dim is not None

    def patient(self, patient_id: str) -> PatientRecord:
        for p in self.patients:
            if p.patient_id == patient_id:
                return p
        raise KeyError(patient_id)

    def patients_by_id(self) -> dict[str, PatientRecord]:
        return {p.patient_id: p for p in self.patients}

    def patches_of(self, patient_id: str) -> list[PatchEmbedding]:
        record = self.patient(patient_id)
        return [self.embeddings[pid] for pid in record.patch_ids]

    def patch_matrix(self, patient_ids: Iterable[str]) -> tuple[np.ndarray, list[str], list[str]]:
        """Stack patch vectors of the given patients, preserving patch order.

        Returns (X, patch_ids, owner_patient_ids) with X float64 of shape
        (n_patches, dim).
        """
        if not self.has_embeddings:
            raise CohortError("cohort has no embeddings attached")
        by_id = self.patients_by_id()
        rows: list[np.ndarray] = []
        patch_ids: list[str] = []
        owners: list[str] = []
        for patient_id in patient_ids:
            record = by_id[patient_id]
            for pid in record.patch_ids:
                rows.append(self.embeddings[pid].vector)
                patch_ids.append(pid)
                owners.append(patient_id)
        if not rows:
            raise CohortError("no patches for the requested patients")
        return np.vstack(rows).astype(np.float64), patch_ids, owners


def require_trainable(cohort: Cohort) -> None:
    """Training entry points need both subtypes present in the TRAIN split."""
    train = [p for p in cohort.patients if p.split is Split.TRAIN]
    if not any(p.msi_status is MsiStatus.MSI for p in train) or not any(
        p.msi_status is MsiStatus.MSS for p in train
    ):
        raise CohortError("TRAIN split must contain at least one MSI and one MSS patient")


def _parse_enum(enum_cls, token: str, line: int, column: str):
    try:
        return enum_cls(token)
    except ValueError:
        allowed = "/".join(e.value for e in enum_cls)
        raise CohortError(
            f"line {line}, column {column}: unknown token {token!r} (expected {allowed})"
        ) from None


def load_manifest(path: str | Path) -> Cohort:
    """Read the patient manifest CSV into a Cohort without embeddings.

    Errors carry the 1-based line number and the offending column. Row
    order is preserved.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError(f"{path}: empty manifest") from None
        if header != MANIFEST_HEADER:
            raise CohortError(
                f"{path}: bad header {header!r}, expected {','.join(MANIFEST_HEADER)}"
            )
        patients: list[PatientRecord] = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(MANIFEST_HEADER):
                raise CohortError(
                    f"line {line}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}"
                )
            patient_id, msi_tok, snp_tok, cimp_tok, cnv_tok, split_tok = row
            if not patient_id:
                raise CohortError(f"line {line}, column patient_id: empty")
            msi = _parse_enum(MsiStatus, msi_tok, line, "msi_status")
            split = _parse_enum(Split, split_tok, line, "split")
            if snp_tok == "NA":
                snp = None
            else:
                try:
                    snp = int(snp_tok)
                except ValueError:
                    raise CohortError(
                        f"line {line}, column snp_count: {snp_tok!r} is not an integer or NA"
                    ) from None
            cimp = None if cimp_tok == "NA" else _parse_enum(CimpStatus, cimp_tok, line, "cimp_status")
            if cnv_tok == "NA":
                cnv = None
            else:
                try:
                    cnv = float(cnv_tok)
                except ValueError:
                    raise CohortError(
                        f"line {line}, column cnv_fraction: {cnv_tok!r} is not a decimal or NA"
                    ) from None
                if not math.isfinite(cnv):
                    raise CohortError(f"line {line}, column cnv_fraction: non-finite value")
            try:
                genomic = GenomicProfile(snp_count=snp, cimp_status=cimp, cnv_fraction=cnv)
            except CohortError as exc:
                raise CohortError(f"line {line}: {exc}") from None
            patients.append(
                PatientRecord(patient_id=patient_id, msi_status=msi, genomic=genomic, split=split)
            )
    if not patients:
        raise CohortError(f"{path}: manifest has no patient rows")
    return Cohort(patients=tuple(patients), embeddings={}, dim=None)


def write_manifest(cohort: Cohort, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for p in cohort.patients:
            g = p.genomic
            writer.writerow(
                [
                    p.patient_id,
                    p.msi_status.value,
                    "NA" if g.snp_count is None else str(g.snp_count),
                    "NA" if g.cimp_status is None else g.cimp_status.value,
                    "NA" if g.cnv_fraction is None else repr(g.cnv_fraction),
                    p.split.value,
                ]
            )


def _iter_embedding_csv(path: Path):
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError(f"{path}: empty embedding file") from None
        if len(header) < 3 or header[:2] != ["patch_id", "patient_id"]:
            raise CohortError(f"{path}: bad embedding header {header[:3]!r}...")
        dim = len(header) - 2
        expected = [f"f{i}" for i in range(dim)]
        if header[2:] != expected:
            raise CohortError(f"{path}: feature columns must be f0..f{dim - 1}")
        for line, row in enumerate(reader, start=2):
            if len(row) != dim + 2:
                raise CohortError(f"line {line}: expected {dim + 2} fields, got {len(row)}")
            try:
                vec = np.array([float(v) for v in row[2:]], dtype=np.float32)
            except ValueError:
                raise CohortError(f"line {line}: non-numeric embedding entry") from None
            yield row[0], row[1], vec


def _iter_embedding_packed(path: Path):
    data = path.read_bytes()
    if len(data) < 20 or data[:4] != PACKED_MAGIC:
        raise CohortError(f"{path}: not a packed embedding file (bad magic)")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != PACKED_VERSION:
        raise CohortError(f"{path}: unsupported packed version {version}")
    offset = 20
    for i in range(count):
        try:
            (n_patch,) = struct.unpack_from("<H", data, offset)
            offset += 2
            patch_id = data[offset : offset + n_patch].decode("utf-8")
            offset += n_patch
            (n_patient,) = struct.unpack_from("<H", data, offset)
            offset += 2
            patient_id = data[offset : offset + n_patient].decode("utf-8")
            offset += n_patient
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
            offset += 4 * dim
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise CohortError(f"{path}: truncated or corrupt record {i}: {exc}") from None
        if vec.size != dim:
            raise CohortError(f"{path}: truncated vector in record {i}")
        yield patch_id, patient_id, vec
    if offset != len(data):
        raise CohortError(f"{path}: {len(data) - offset} trailing bytes after last record")


def attach_embeddings(cohort: Cohort, path: str | Path) -> Cohort:
    """Bind patch embeddings to an already-loaded cohort.

    The file format is sniffed from the magic bytes. The returned cohort has
    dim set from the first row, patch_ids populated in file order, and full
    referential integrity; any orphan patch, duplicate patch id, dimension
    mismatch, non-finite entry, or zero-patch patient is an error.
    """
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
    rows = _iter_embedding_packed(path) if magic == PACKED_MAGIC else _iter_embedding_csv(path)

    known = {p.patient_id for p in cohort.patients}
    embeddings: dict[str, PatchEmbedding] = {}
    per_patient: dict[str, list[str]] = {pid: [] for pid in known}
    dim: int | None = None
    for patch_id, patient_id, vec in rows:
        if dim is None:
            dim = int(vec.size)
        elif vec.size != dim:
            raise CohortError(
                f"patch {patch_id!r}: dimension {vec.size} does not match established dim {dim}"
            )
        if patient_id not in known:
            raise CohortError(f"patch {patch_id!r}: unknown patient_id {patient_id!r}")
        if patch_id in embeddings:
            raise CohortError(f"duplicate patch_id {patch_id!r}")
        if not np.all(np.isfinite(vec)):
            raise CohortError(f"patch {patch_id!r}: non-finite embedding entry")
        vec = np.ascontiguousarray(vec, dtype=np.float32)
        vec.setflags(write=False)
        embeddings[patch_id] = PatchEmbedding(patch_id=patch_id, patient_id=patient_id, vector=vec)
        per_patient[patient_id].append(patch_id)
    if dim is None:
        raise CohortError(f"{path}: embedding file has no rows")
    empty = sorted(pid for pid, patches in per_patient.items() if not patches)
    if empty:
        raise CohortError(f"patients with zero patches: {', '.join(empty)}")
    patients = tuple(
        replace(p, patch_ids=tuple(per_patient[p.patient_id])) for p in cohort.patients
    )
    return Cohort(patients=patients, embeddings=embeddings, dim=dim)


def write_embeddings_csv(cohort: Cohort, path: str | Path) -> None:
    if not cohort.has_embeddings:
        raise CohortError("cohort has no embeddings to write")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patch_id", "patient_id"] + [f"f{i}" for i in range(cohort.dim)])
        for p in cohort.patients:
            for pid in p.patch_ids:
                emb = cohort.embeddings[pid]
                writer.writerow([emb.patch_id, emb.patient_id] + [repr(float(v)) for v in emb.vector])


def write_embeddings_packed(cohort: Cohort, path: str | Path) -> None:
    if not cohort.has_embeddings:
        raise CohortError("cohort has no embeddings to write")
    records = [cohort.embeddings[pid] for p in cohort.patients for pid in p.patch_ids]
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(PACKED_MAGIC)
        fh.write(struct.pack("<IIQ", PACKED_VERSION, cohort.dim, len(records)))
        for emb in records:
            patch_bytes = emb.patch_id.encode("utf-8")
            patient_bytes = emb.patient_id.encode("utf-8")
            fh.write(struct.pack("<H", len(patch_bytes)))
            fh.write(patch_bytes)
            fh.write(struct.pack("<H", len(patient_bytes)))
            fh.write(patient_bytes)
            fh.write(np.ascontiguousarray(emb.vector, dtype="<f4").tobytes())


def _five_number(values: list[float]) -> dict[str, float] | None:
    if not values:
        return None
    q = np.percentile(np.asarray(values, dtype=np.float64), [0, 25, 50, 75, 100])
    return {"min": float(q[0]), "q1": float(q[1]), "median": float(q[2]), "q3": float(q[3]), "max": float(q[4])}


@dataclass(frozen=True)
class GroupSummary:
    n_patients: int
    n_patches: int
    snp: dict[str, float] | None  # min/median/max
    cimp_proportions: dict[str, float]
    cnv: dict[str, float] | None  # five-number
    n_na: dict[str, int]


@dataclass(frozen=True)
class CohortSummary:
    dim: int
    groups: dict[str, GroupSummary]  # keyed "TRAIN/MSI" etc.

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "groups": {
                key: {
                    "n_patients": g.n_patients,
                    "n_patches": g.n_patches,
                    "snp": g.snp,
                    "cimp_proportions": g.cimp_proportions,
                    "cnv": g.cnv,
                    "n_na": g.n_na,
                }
                for key, g in self.groups.items()
            },
        }


def cohort_summary(cohort: Cohort) -> CohortSummary:
    """Patient/patch counts and genomic digests per (split, subtype) group."""
    if not cohort.has_embeddings:
        raise CohortError("attach embeddings before summarizing")
    groups: dict[str, GroupSummary] = {}
    for split in Split:
        for status in MsiStatus:
            members = [
                p for p in cohort.patients if p.split is split and p.msi_status is status
            ]
            snp_values = [float(p.genomic.snp_count) for p in members if p.genomic.snp_count is not None]
            cnv_values = [p.genomic.cnv_fraction for p in members if p.genomic.cnv_fraction is not None]
            cimp_counts = {status_.value: 0 for status_ in CimpStatus}
            cimp_counts["NA"] = 0
            for p in members:
                key = "NA" if p.genomic.cimp_status is None else p.genomic.cimp_status.value
                cimp_counts[key] += 1
            total = len(members)
            proportions = {k: (v / total if total else 0.0) for k, v in cimp_counts.items()}
            snp_digest = None
            if snp_values:
                arr = np.asarray(snp_values)
                snp_digest = {
                    "min": float(arr.min()),
                    "median": float(np.median(arr)),
                    "max": float(arr.max()),
                }
            groups[f"{split.value}/{status.value}"] = GroupSummary(
                n_patients=total,
                n_patches=sum(len(p.patch_ids) for p in members),
                snp=snp_digest,
                cimp_proportions=proportions,
                cnv=_five_number(cnv_values),
                n_na={
                    "snp_count": sum(1 for p in members if p.genomic.snp_count is None),
                    "cimp_status": cimp_counts["NA"],
                    "cnv_fraction": sum(1 for p in members if p.genomic.cnv_fraction is None),
                },
            )
    return CohortSummary(dim=cohort.dim, groups=groups)
