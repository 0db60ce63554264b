"""Manifest / embedding ingestion, validation errors, and round-trips."""

import numpy as np
import pytest

from bptk.cohort import (
    CohortError,
    MsiStatus,
    Split,
    attach_embeddings,
    cohort_summary,
    load_manifest,
    write_embeddings_csv,
    write_embeddings_packed,
    write_manifest,
)
from conftest import build_cohort

HEADER = "patient_id,msi_status,snp_count,cimp_status,cnv_fraction,split\n"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def embedding_csv(rows, dim):
    header = "patch_id,patient_id," + ",".join(f"f{i}" for i in range(dim)) + "\n"
    body = "".join(
        f"{patch},{patient}," + ",".join(repr(float(v)) for v in vec) + "\n"
        for patch, patient, vec in rows
    )
    return header + body


class TestLoadManifest:
    def test_two_row_manifest(self, tmp_path):
        path = write(
            tmp_path,
            "m.csv",
            HEADER
            + "P1,MSI,1432,CIMP_H,0.001,TRAIN\n"
            + "P2,MSS,50,NON_CIMP,0.2,TEST\n",
        )
        cohort = load_manifest(path)
        assert len(cohort.patients) == 2
        p1, p2 = cohort.patients
        assert p1.patient_id == "P1"
        assert p1.msi_status is MsiStatus.MSI
        assert p1.genomic.snp_count == 1432
        assert p1.genomic.cnv_fraction == 0.001
        assert p1.split is Split.TRAIN
        assert p2.msi_status is MsiStatus.MSS
        assert p2.split is Split.TEST

    def test_cohort_scale_counts(self, tmp_path):
        # 260 TRAIN rows (39 MSI), 100 TEST rows (26 MSI).
        lines = [HEADER.strip()]
        for i in range(260):
            msi = "MSI" if i < 39 else "MSS"
            lines.append(f"TR{i:03d},{msi},100,NON_CIMP,0.1,TRAIN")
        for i in range(100):
            msi = "MSI" if i < 26 else "MSS"
            lines.append(f"TE{i:03d},{msi},100,NON_CIMP,0.1,TEST")
        cohort = load_manifest(write(tmp_path, "m.csv", "\n".join(lines) + "\n"))
        train = [p for p in cohort.patients if p.split is Split.TRAIN]
        test = [p for p in cohort.patients if p.split is Split.TEST]
        assert len(train) == 260
        assert len(test) == 100
        assert sum(p.msi_status is MsiStatus.MSI for p in train) == 39
        assert sum(p.msi_status is MsiStatus.MSI for p in test) == 26

    def test_cnv_out_of_range_names_row(self, tmp_path):
        path = write(tmp_path, "m.csv", HEADER + "P1,MSI,100,CIMP_H,1.5,TRAIN\n")
        with pytest.raises(CohortError, match=r"line 2.*cnv_fraction.*\[0, 1\]"):
            load_manifest(path)

    def test_duplicate_patient_id(self, tmp_path):
        path = write(
            tmp_path, "m.csv", HEADER + "P1,MSI,1,CIMP_H,0.1,TRAIN\nP1,MSS,2,NON_CIMP,0.1,TEST\n"
        )
        with pytest.raises(CohortError, match="duplicate patient_id"):
            load_manifest(path)

    def test_unknown_enum_token(self, tmp_path):
        path = write(tmp_path, "m.csv", HEADER + "P1,MAYBE,1,CIMP_H,0.1,TRAIN\n")
        with pytest.raises(CohortError, match="line 2.*msi_status.*'MAYBE'"):
            load_manifest(path)

    def test_malformed_row_reports_line_and_column(self, tmp_path):
        path = write(tmp_path, "m.csv", HEADER + "P1,MSI,abc,CIMP_H,0.1,TRAIN\n")
        with pytest.raises(CohortError, match="line 2, column snp_count"):
            load_manifest(path)

    def test_na_cells_accepted(self, tmp_path):
        path = write(tmp_path, "m.csv", HEADER + "P1,MSI,NA,NA,NA,TRAIN\n")
        cohort = load_manifest(path)
        g = cohort.patients[0].genomic
        assert g.snp_count is None and g.cimp_status is None and g.cnv_fraction is None

    def test_bad_header_rejected(self, tmp_path):
        path = write(tmp_path, "m.csv", "patient,label\nP1,MSI\n")
        with pytest.raises(CohortError, match="bad header"):
            load_manifest(path)

    def test_manifest_roundtrip_identity(self, tmp_path, small_cohort):
        path = tmp_path / "m.csv"
        write_manifest(small_cohort, path)
        again = load_manifest(path)
        for a, b in zip(small_cohort.patients, again.patients):
            assert a.patient_id == b.patient_id
            assert a.msi_status == b.msi_status
            assert a.genomic == b.genomic
            assert a.split == b.split


class TestAttachEmbeddings:
    def manifest_two(self, tmp_path):
        return load_manifest(
            write(
                tmp_path,
                "m.csv",
                HEADER + "P1,MSI,1432,CIMP_H,0.001,TRAIN\nP2,MSS,50,NON_CIMP,0.2,TRAIN\n",
            )
        )

    def test_counts_and_dim(self, tmp_path):
        cohort = self.manifest_two(tmp_path)
        rows = [(f"a{i}", "P1", [i, 0, 0, 1]) for i in range(3)]
        rows += [(f"b{i}", "P2", [0, i, 1, 0]) for i in range(2)]
        attached = attach_embeddings(cohort, write(tmp_path, "e.csv", embedding_csv(rows, 4)))
        assert attached.dim == 4
        assert len(attached.patient("P1").patch_ids) == 3
        assert len(attached.patient("P2").patch_ids) == 2

    def test_dimension_mismatch_names_patch(self, tmp_path):
        cohort = self.manifest_two(tmp_path)
        text = embedding_csv([("a0", "P1", [1, 2, 3, 4])], 4)
        text += "a1,P1,1.0,2.0,3.0\n"
        with pytest.raises(CohortError, match="line 3"):
            attach_embeddings(cohort, write(tmp_path, "e.csv", text))

    def test_orphan_patch(self, tmp_path):
        cohort = self.manifest_two(tmp_path)
        rows = [("a0", "P1", [1, 2]), ("x0", "P9", [1, 2]), ("b0", "P2", [0, 1])]
        with pytest.raises(CohortError, match="unknown patient_id 'P9'"):
            attach_embeddings(cohort, write(tmp_path, "e.csv", embedding_csv(rows, 2)))

    def test_zero_patch_patient(self, tmp_path):
        cohort = self.manifest_two(tmp_path)
        rows = [("a0", "P1", [1, 2])]
        with pytest.raises(CohortError, match="zero patches: P2"):
            attach_embeddings(cohort, write(tmp_path, "e.csv", embedding_csv(rows, 2)))

    def test_non_finite_entry(self, tmp_path):
        cohort = self.manifest_two(tmp_path)
        text = embedding_csv([("a0", "P1", [1, 2])], 2) + "b0,P2,inf,1.0\n"
        with pytest.raises(CohortError, match="non-finite"):
            attach_embeddings(cohort, write(tmp_path, "e.csv", text))

    def test_duplicate_patch_id(self, tmp_path):
        cohort = self.manifest_two(tmp_path)
        rows = [("a0", "P1", [1, 2]), ("a0", "P1", [3, 4]), ("b0", "P2", [0, 1])]
        with pytest.raises(CohortError, match="duplicate patch_id"):
            attach_embeddings(cohort, write(tmp_path, "e.csv", embedding_csv(rows, 2)))

    def test_packed_roundtrip_bit_identical(self, tmp_path, small_cohort):
        manifest = tmp_path / "m.csv"
        packed = tmp_path / "e.bpem"
        write_manifest(small_cohort, manifest)
        write_embeddings_packed(small_cohort, packed)
        again = attach_embeddings(load_manifest(manifest), packed)
        assert again.dim == small_cohort.dim
        for pid, emb in small_cohort.embeddings.items():
            got = again.embeddings[pid]
            assert got.patient_id == emb.patient_id
            assert got.vector.tobytes() == emb.vector.tobytes()
        # Second write must be byte-identical too.
        packed2 = tmp_path / "e2.bpem"
        write_embeddings_packed(again, packed2)
        assert packed.read_bytes() == packed2.read_bytes()

    def test_csv_roundtrip_exact(self, tmp_path, small_cohort):
        manifest = tmp_path / "m.csv"
        csv_path = tmp_path / "e.csv"
        write_manifest(small_cohort, manifest)
        write_embeddings_csv(small_cohort, csv_path)
        again = attach_embeddings(load_manifest(manifest), csv_path)
        for pid, emb in small_cohort.embeddings.items():
            assert np.array_equal(again.embeddings[pid].vector, emb.vector)

    def test_truncated_packed_rejected(self, tmp_path, small_cohort):
        manifest = tmp_path / "m.csv"
        packed = tmp_path / "e.bpem"
        write_manifest(small_cohort, manifest)
        write_embeddings_packed(small_cohort, packed)
        packed.write_bytes(packed.read_bytes()[:-3])
        with pytest.raises(CohortError):
            attach_embeddings(load_manifest(manifest), packed)

    def test_referential_integrity_total(self, small_cohort):
        for p in small_cohort.patients:
            for pid in p.patch_ids:
                assert small_cohort.embeddings[pid].patient_id == p.patient_id


class TestSummary:
    def test_patch_totals_equal_sum_of_lengths(self, small_cohort):
        summary = cohort_summary(small_cohort)
        total = sum(g.n_patches for g in summary.groups.values())
        assert total == sum(len(p.patch_ids) for p in small_cohort.patients)

    def test_single_patient_degenerate_digests(self):
        cohort = build_cohort([("P1", "MSI", 1432, "CIMP_H", 0.004, "TRAIN", 5)])
        summary = cohort_summary(cohort)
        g = summary.groups["TRAIN/MSI"]
        assert g.n_patients == 1
        assert g.n_patches == 5
        assert g.snp == {"min": 1432.0, "median": 1432.0, "max": 1432.0}
        assert g.cnv["min"] == g.cnv["max"] == 0.004
        assert g.cimp_proportions["CIMP_H"] == 1.0

    def test_cohort_scale_patch_counts(self):
        # Patient/patch counts matching the reference cohort layout:
        # TRAIN MSI 46704 + MSS 46704 patches, TEST MSI 28335 + MSS 70569.
        rows = []
        for i in range(39):
            rows.append((f"TRM{i}", "MSI", 1000, "CIMP_H", 0.002, "TRAIN", 1198 if i < (46704 - 39 * 1197) else 1197))
        for i in range(221):
            rows.append((f"TRS{i}", "MSS", 100, "NON_CIMP", 0.1, "TRAIN", 212 if i < (46704 - 221 * 211) else 211))
        for i in range(26):
            rows.append((f"TEM{i}", "MSI", 1000, "CIMP_H", 0.002, "TEST", 1090 if i < (28335 - 26 * 1089) else 1089))
        for i in range(74):
            rows.append((f"TES{i}", "MSS", 100, "NON_CIMP", 0.1, "TEST", 954 if i < (70569 - 74 * 953) else 953))
        cohort = build_cohort(rows, dim=2)
        summary = cohort_summary(cohort)
        assert summary.groups["TRAIN/MSI"].n_patches == 46704
        assert summary.groups["TRAIN/MSS"].n_patches == 46704
        assert summary.groups["TEST/MSI"].n_patches == 28335
        assert summary.groups["TEST/MSS"].n_patches == 70569
        assert summary.groups["TRAIN/MSI"].n_patients == 39
        assert summary.groups["TEST/MSS"].n_patients == 74

    def test_requires_embeddings(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(HEADER + "P1,MSI,1,CIMP_H,0.1,TRAIN\n", encoding="utf-8")
        with pytest.raises(CohortError, match="attach embeddings"):
            cohort_summary(load_manifest(path))
