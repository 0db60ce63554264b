import numpy as np
import pytest

from bptk.cohort import (
    CimpStatus,
    Cohort,
    GenomicProfile,
    MsiStatus,
    PatchEmbedding,
    PatientRecord,
    Split,
)


def pytest_addoption(parser):
    parser.addoption(
        "--regen-golden",
        action="store_true",
        default=False,
        help="rewrite golden report fixtures from the current implementation",
    )


def build_cohort(rows, dim=4, seed=0):
    """Assemble an in-memory cohort with embeddings.

    rows: (patient_id, msi, snp, cimp, cnv, split, n_patches) tuples; snp/cimp/cnv
    may be None for NA. Patch vectors are seeded standard normals.
    """
    rng = np.random.default_rng(seed)
    patients = []
    embeddings = {}
    for patient_id, msi, snp, cimp, cnv, split, n_patches in rows:
        patch_ids = []
        for j in range(n_patches):
            pid = f"{patient_id}-p{j}"
            vec = rng.standard_normal(dim).astype(np.float32)
            vec.setflags(write=False)
            embeddings[pid] = PatchEmbedding(patch_id=pid, patient_id=patient_id, vector=vec)
            patch_ids.append(pid)
        patients.append(
            PatientRecord(
                patient_id=patient_id,
                msi_status=MsiStatus(msi),
                genomic=GenomicProfile(
                    snp_count=snp,
                    cimp_status=None if cimp is None else CimpStatus(cimp),
                    cnv_fraction=cnv,
                ),
                split=Split(split),
                patch_ids=tuple(patch_ids),
            )
        )
    return Cohort(patients=tuple(patients), embeddings=embeddings, dim=dim)


@pytest.fixture
def small_cohort():
    return build_cohort(
        [
            ("P1", "MSI", 1432, "CIMP_H", 0.001, "TRAIN", 3),
            ("P2", "MSI", 600, "CIMP_LOW", 0.002, "TRAIN", 2),
            ("P3", "MSS", 50, "NON_CIMP", 0.2, "TRAIN", 4),
            ("P4", "MSS", 80, "CIMP_H", 0.15, "TRAIN", 2),
            ("P5", "MSI", 2200, "CIMP_H", 0.004, "TEST", 3),
            ("P6", "MSS", 40, "NON_CIMP", 0.3, "TEST", 2),
        ]
    )
