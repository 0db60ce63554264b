"""Synthetic cohort generator: planted truth, determinism, file conformance."""

import numpy as np
import pytest

from bptk.cohort import (
    CimpStatus,
    MsiStatus,
    Split,
    attach_embeddings,
    cohort_summary,
    load_manifest,
    write_embeddings_packed,
    write_manifest,
)
from bptk.synth import GeneratorConfig, MorphologyLink, generate, planted_truth


def vector_hash(cohort):
    import hashlib

    h = hashlib.sha256()
    for p in cohort.patients:
        for pid in p.patch_ids:
            h.update(cohort.embeddings[pid].vector.tobytes())
    return h.hexdigest()


class TestPlantedTruth:
    def test_split_points_exposed(self):
        cfg = GeneratorConfig(seed=1)
        truth = planted_truth(cfg)
        assert truth.snp_split == 1000.0
        assert truth.cnv_split == 0.005

    def test_zero_delta_sub_collapses_modes(self):
        cfg = GeneratorConfig(seed=1, delta_sub=0.0)
        truth = planted_truth(cfg)
        low = truth.mean_vector(msi=True, snp_high=False, cimp_h=False)
        high = truth.mean_vector(msi=True, snp_high=True, cimp_h=True)
        assert np.array_equal(low, high)

    def test_linked_axes_orthogonal(self):
        truth = planted_truth(GeneratorConfig(seed=0))
        a = truth.mean_vector(msi=True, snp_high=True) - truth.mean_vector(msi=True, snp_high=False)
        b = truth.mean_vector(msi=True, cimp_h=True) - truth.mean_vector(msi=True, cimp_h=False)
        assert a @ b == 0.0
        assert np.linalg.norm(a) == pytest.approx(2.2)

    def test_unlinked_cnv_has_no_offset(self):
        truth = planted_truth(GeneratorConfig(seed=0))
        assert np.array_equal(
            truth.mean_vector(msi=True, cnv_high=True), truth.mean_vector(msi=True, cnv_high=False)
        )


class TestGenerate:
    def test_counts_match_config(self):
        cfg = GeneratorConfig(
            n_train_msi=5, n_train_mss=7, n_test_msi=3, n_test_mss=4,
            patches_min=2, patches_max=4, dim=4, seed=2,
        )
        cohort = generate(cfg)
        groups = {(p.split, p.msi_status): 0 for p in cohort.patients}
        for p in cohort.patients:
            groups[(p.split, p.msi_status)] += 1
        assert groups[(Split.TRAIN, MsiStatus.MSI)] == 5
        assert groups[(Split.TRAIN, MsiStatus.MSS)] == 7
        assert groups[(Split.TEST, MsiStatus.MSI)] == 3
        assert groups[(Split.TEST, MsiStatus.MSS)] == 4
        for p in cohort.patients:
            assert 2 <= len(p.patch_ids) <= 4

    def test_reference_cohort_counts(self):
        cfg = GeneratorConfig(
            n_train_msi=39, n_train_mss=221, n_test_msi=26, n_test_mss=74,
            patches_min=2, patches_max=3, dim=4, seed=3,
        )
        summary = cohort_summary(generate(cfg))
        assert summary.groups["TRAIN/MSI"].n_patients == 39
        assert summary.groups["TRAIN/MSS"].n_patients == 221
        assert summary.groups["TEST/MSI"].n_patients == 26
        assert summary.groups["TEST/MSS"].n_patients == 74

    def test_same_seed_identical_cohorts(self):
        cfg = GeneratorConfig(n_train_msi=4, n_train_mss=6, n_test_msi=2, n_test_mss=3,
                              patches_min=2, patches_max=3, dim=4, seed=9)
        assert vector_hash(generate(cfg)) == vector_hash(generate(cfg))

    def test_distinct_seeds_differ(self):
        base = dict(n_train_msi=4, n_train_mss=6, n_test_msi=2, n_test_mss=3,
                    patches_min=2, patches_max=3, dim=4)
        a = generate(GeneratorConfig(seed=1, **base))
        b = generate(GeneratorConfig(seed=2, **base))
        assert vector_hash(a) != vector_hash(b)

    def test_generated_files_load_cleanly(self, tmp_path):
        cfg = GeneratorConfig(n_train_msi=4, n_train_mss=6, n_test_msi=2, n_test_mss=3,
                              patches_min=2, patches_max=3, dim=4, seed=5)
        cohort = generate(cfg)
        write_manifest(cohort, tmp_path / "m.csv")
        write_embeddings_packed(cohort, tmp_path / "e.bpem")
        loaded = attach_embeddings(load_manifest(tmp_path / "m.csv"), tmp_path / "e.bpem")
        assert loaded.dim == 4
        assert vector_hash(loaded) == vector_hash(cohort)

    def test_empirical_mode_means_near_planted(self):
        cfg = GeneratorConfig(seed=13, patches_min=20, patches_max=20)
        cohort = generate(cfg)
        truth = planted_truth(cfg)
        sigma = np.sqrt(cfg.noise_sigma**2 + cfg.patient_sigma**2)
        for snp_high in (False, True):
            members = [
                p for p in cohort.patients
                if p.msi_status is MsiStatus.MSI
                and (p.genomic.snp_count > cfg.snp.split) == snp_high
                and (p.genomic.cimp_status is CimpStatus.CIMP_H) is False
            ]
            X = np.vstack([
                cohort.embeddings[pid].vector for p in members for pid in p.patch_ids
            ])
            planted = truth.mean_vector(msi=True, snp_high=snp_high, cimp_h=False)
            err = np.abs(X.mean(axis=0) - planted)
            assert np.all(err < 4 * sigma / np.sqrt(len(X)) + 4 * cfg.patient_sigma / np.sqrt(len(members)))

    def test_unlinked_cnv_uncorrelated_with_embeddings(self):
        # One patch per patient: patches of one patient share its mean, so
        # independence must be tested across 10^4 independent draws.
        cfg = GeneratorConfig(seed=17, n_train_msi=10_000, n_train_mss=10, n_test_msi=2,
                              n_test_mss=2, patches_min=1, patches_max=1, dim=4)
        cohort = generate(cfg)
        msi = [p for p in cohort.patients
               if p.msi_status is MsiStatus.MSI and p.split is Split.TRAIN]
        cnv = np.asarray([p.genomic.cnv_fraction for p in msi])
        assert len(cnv) == 10_000
        X = np.vstack([cohort.embeddings[p.patch_ids[0]].vector for p in msi])
        for axis in range(cfg.dim):
            r = np.corrcoef(cnv, X[:, axis])[0, 1]
            assert abs(r) < 3.0 / np.sqrt(len(cnv))

    def test_cimp_prevalences_near_defaults(self):
        cfg = GeneratorConfig(seed=23, n_train_msi=600, n_train_mss=600,
                              n_test_msi=300, n_test_mss=600,
                              patches_min=1, patches_max=1)
        cohort = generate(cfg)
        def prev(split, status):
            members = [p for p in cohort.patients if p.split is split and p.msi_status is status]
            return np.mean([p.genomic.cimp_status is CimpStatus.CIMP_H for p in members])
        assert prev(Split.TRAIN, MsiStatus.MSI) == pytest.approx(0.59, abs=0.06)
        assert prev(Split.TRAIN, MsiStatus.MSS) == pytest.approx(0.05, abs=0.03)
        assert prev(Split.TEST, MsiStatus.MSS) == pytest.approx(0.01, abs=0.015)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="dim"):
            GeneratorConfig(dim=1)
        with pytest.raises(ValueError, match="morphology axes"):
            GeneratorConfig(dim=2, morphology_link=MorphologyLink(snp=True, cimp=True, cnv=False))
        with pytest.raises(ValueError, match="separations"):
            GeneratorConfig(delta_sub=-1.0)

    def test_config_dict_roundtrip(self):
        cfg = GeneratorConfig(seed=3, delta_sub=1.5)
        again = GeneratorConfig.from_dict(cfg.to_dict())
        assert again == cfg
