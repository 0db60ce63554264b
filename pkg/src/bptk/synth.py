"""Seeded synthetic cohort generator with a planted genomics-morphology link.

Patch embeddings are isotropic Gaussians around a per-patient mean. The
MSS mean sits at the origin; MSI patients are displaced along a class axis,
and, for every genomic feature whose morphology link is enabled, further
displaced along that feature's own axis according to the patient's
sub-class under the feature (SNP count above/below the planted split,
CIMP-H or not, CNV fraction above/below its split). A per-patient jitter
controls how far patient-level scores can be separated, which is the dial
for the baseline model's achievable AUROC; the per-patch noise controls
patch-level difficulty.

Axes are the standard basis vectors e0 (class), e1 (SNP), e2 (CIMP),
e3 (CNV), so independently linked features shift morphology independently.
With the CIMP link enabled, CIMP-H MSS patients are also shifted along the
CIMP axis, which is what makes excluding them from training useful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import (
    CimpStatus,
    Cohort,
    GenomicProfile,
    MsiStatus,
    PatchEmbedding,
    PatientRecord,
    Split,
)
from .seeds import spawn_rng


@dataclass(frozen=True)
class MorphologyLink:
    snp: bool = True
    cimp: bool = True
    cnv: bool = False


@dataclass(frozen=True)
class SnpMixture:
    """Bimodal log-normal SNP counts for MSI; a single low mode for MSS."""

    split: float = 1000.0
    low_median: float = 880.0
    high_median: float = 1180.0
    sigma_log: float = 0.08
    high_fraction: float = 0.5
    mss_median: float = 120.0
    mss_sigma_log: float = 0.6


@dataclass(frozen=True)
class CnvBeta:
    """Beta-distributed CNV fractions: low for MSI, wide for MSS."""

    split: float = 0.005
    msi_alpha: float = 2.0
    msi_beta: float = 398.0
    mss_alpha: float = 2.5
    mss_beta: float = 20.0


@dataclass(frozen=True)
class GeneratorConfig:
    n_train_msi: int = 89
    n_train_mss: int = 497
    n_test_msi: int = 39
    n_test_mss: int = 111
    patches_min: int = 16
    patches_max: int = 24
    dim: int = 16
    delta_class: float = 0.8
    delta_sub: float = 2.2
    morphology_link: MorphologyLink = field(default_factory=MorphologyLink)
    snp: SnpMixture = field(default_factory=SnpMixture)
    cimp_h_prev_msi: float = 0.59
    cimp_h_prev_mss_train: float = 0.05
    cimp_h_prev_mss_test: float = 0.01
    cnv: CnvBeta = field(default_factory=CnvBeta)
    noise_sigma: float = 0.8
    patient_sigma: float = 0.55
    seed: int = 0

    def __post_init__(self) -> None:
        if self.delta_class < 0 or self.delta_sub < 0:
            raise ValueError("separations must be >= 0")
        for name in ("cimp_h_prev_msi", "cimp_h_prev_mss_train", "cimp_h_prev_mss_test"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        n_axes = 1 + self.morphology_link.snp + self.morphology_link.cimp + self.morphology_link.cnv
        if self.dim < n_axes:
            raise ValueError(
                f"dim={self.dim} too small for {n_axes} independent morphology axes"
            )
        if not 1 <= self.patches_min <= self.patches_max:
            raise ValueError("need 1 <= patches_min <= patches_max")
        if self.noise_sigma <= 0 or self.patient_sigma < 0:
            raise ValueError("noise_sigma must be > 0 and patient_sigma >= 0")

    def to_dict(self) -> dict:
        return {
            "n_train_msi": self.n_train_msi,
            "n_train_mss": self.n_train_mss,
            "n_test_msi": self.n_test_msi,
            "n_test_mss": self.n_test_mss,
            "patches_min": self.patches_min,
            "patches_max": self.patches_max,
            "dim": self.dim,
            "delta_class": self.delta_class,
            "delta_sub": self.delta_sub,
            "morphology_link": {
                "snp": self.morphology_link.snp,
                "cimp": self.morphology_link.cimp,
                "cnv": self.morphology_link.cnv,
            },
            "snp": {
                "split": self.snp.split,
                "low_median": self.snp.low_median,
                "high_median": self.snp.high_median,
                "sigma_log": self.snp.sigma_log,
                "high_fraction": self.snp.high_fraction,
                "mss_median": self.snp.mss_median,
                "mss_sigma_log": self.snp.mss_sigma_log,
            },
            "cimp_h_prev_msi": self.cimp_h_prev_msi,
            "cimp_h_prev_mss_train": self.cimp_h_prev_mss_train,
            "cimp_h_prev_mss_test": self.cimp_h_prev_mss_test,
            "cnv": {
                "split": self.cnv.split,
                "msi_alpha": self.cnv.msi_alpha,
                "msi_beta": self.cnv.msi_beta,
                "mss_alpha": self.cnv.mss_alpha,
                "mss_beta": self.cnv.mss_beta,
            },
            "noise_sigma": self.noise_sigma,
            "patient_sigma": self.patient_sigma,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "GeneratorConfig":
        kwargs = dict(d)
        if "morphology_link" in kwargs:
            kwargs["morphology_link"] = MorphologyLink(**kwargs["morphology_link"])
        if "snp" in kwargs:
            kwargs["snp"] = SnpMixture(**kwargs["snp"])
        if "cnv" in kwargs:
            kwargs["cnv"] = CnvBeta(**kwargs["cnv"])
        return GeneratorConfig(**kwargs)


@dataclass(frozen=True)
class PlantedTruth:
    """The generative ground truth, for oracle-based tests."""

    snp_split: float
    cnv_split: float
    dim: int
    class_axis: int
    snp_axis: int
    cimp_axis: int
    cnv_axis: int
    delta_class: float
    delta_sub: float
    link: MorphologyLink
    noise_sigma: float
    patient_sigma: float

    def mean_vector(
        self,
        msi: bool,
        snp_high: bool = False,
        cimp_h: bool = False,
        cnv_high: bool = False,
    ) -> np.ndarray:
        """Population mean (before patient jitter) for a genomic combination."""
        mean = np.zeros(self.dim)
        if msi:
            mean[self.class_axis] = self.delta_class
            if self.link.snp:
                mean[self.snp_axis] = (0.5 if snp_high else -0.5) * self.delta_sub
            if self.link.cimp:
                mean[self.cimp_axis] = (0.5 if cimp_h else -0.5) * self.delta_sub
            if self.link.cnv:
                mean[self.cnv_axis] = (0.5 if cnv_high else -0.5) * self.delta_sub
        elif self.link.cimp and cimp_h:
            # Atypical MSS: CIMP-H shifts it toward the MSI CIMP-H mode.
            mean[self.cimp_axis] = 0.5 * self.delta_sub
        return mean


def planted_truth(cfg: GeneratorConfig) -> PlantedTruth:
    return PlantedTruth(
        snp_split=cfg.snp.split,
        cnv_split=cfg.cnv.split,
        dim=cfg.dim,
        class_axis=0,
        snp_axis=1 % cfg.dim,
        cimp_axis=2 % cfg.dim,
        cnv_axis=3 % cfg.dim,
        delta_class=cfg.delta_class,
        delta_sub=cfg.delta_sub,
        link=cfg.morphology_link,
        noise_sigma=cfg.noise_sigma,
        patient_sigma=cfg.patient_sigma,
    )


def _sample_lognormal(rng: np.random.Generator, median: float, sigma_log: float) -> float:
    return float(math.exp(rng.normal(math.log(median), sigma_log)))


def _sample_genomics(rng: np.random.Generator, cfg: GeneratorConfig, msi: bool, split: Split) -> GenomicProfile:
    if msi:
        if rng.random() < cfg.snp.high_fraction:
            snp = _sample_lognormal(rng, cfg.snp.high_median, cfg.snp.sigma_log)
        else:
            snp = _sample_lognormal(rng, cfg.snp.low_median, cfg.snp.sigma_log)
        cimp_h = rng.random() < cfg.cimp_h_prev_msi
        cnv = rng.beta(cfg.cnv.msi_alpha, cfg.cnv.msi_beta)
    else:
        snp = _sample_lognormal(rng, cfg.snp.mss_median, cfg.snp.mss_sigma_log)
        prev = cfg.cimp_h_prev_mss_train if split is Split.TRAIN else cfg.cimp_h_prev_mss_test
        cimp_h = rng.random() < prev
        cnv = rng.beta(cfg.cnv.mss_alpha, cfg.cnv.mss_beta)
    if cimp_h:
        cimp = CimpStatus.CIMP_H
    else:
        cimp = CimpStatus.CIMP_LOW if rng.random() < 0.5 else CimpStatus.NON_CIMP
    return GenomicProfile(
        snp_count=max(1, int(round(snp))),
        cimp_status=cimp,
        cnv_fraction=min(1.0, float(cnv)),
    )


def generate(cfg: GeneratorConfig) -> Cohort:
    """Generate a full cohort (manifest fields plus embeddings), seeded.

    Each patient gets its own derived RNG stream, so generation order and
    any parallelization cannot change the output.
    """
    truth = planted_truth(cfg)
    groups = [
        (Split.TRAIN, MsiStatus.MSI, cfg.n_train_msi),
        (Split.TRAIN, MsiStatus.MSS, cfg.n_train_mss),
        (Split.TEST, MsiStatus.MSI, cfg.n_test_msi),
        (Split.TEST, MsiStatus.MSS, cfg.n_test_mss),
    ]
    patients: list[PatientRecord] = []
    embeddings: dict[str, PatchEmbedding] = {}
    for split, status, count in groups:
        for i in range(count):
            patient_id = f"SIM-{split.value[:2]}-{status.value}-{i:04d}"
            rng = spawn_rng(cfg.seed, "patient", patient_id)
            genomic = _sample_genomics(rng, cfg, status is MsiStatus.MSI, split)
            mean = truth.mean_vector(
                msi=status is MsiStatus.MSI,
                snp_high=genomic.snp_count > cfg.snp.split,
                cimp_h=genomic.cimp_status is CimpStatus.CIMP_H,
                cnv_high=genomic.cnv_fraction > cfg.cnv.split,
            )
            mean = mean + cfg.patient_sigma * rng.standard_normal(cfg.dim)
            n_patches = int(rng.integers(cfg.patches_min, cfg.patches_max + 1))
            vectors = mean + cfg.noise_sigma * rng.standard_normal((n_patches, cfg.dim))
            patch_ids = []
            for j in range(n_patches):
                patch_id = f"{patient_id}-p{j:04d}"
                vec = np.ascontiguousarray(vectors[j], dtype=np.float32)
                vec.setflags(write=False)
                embeddings[patch_id] = PatchEmbedding(
                    patch_id=patch_id, patient_id=patient_id, vector=vec
                )
                patch_ids.append(patch_id)
            patients.append(
                PatientRecord(
                    patient_id=patient_id,
                    msi_status=status,
                    genomic=genomic,
                    split=split,
                    patch_ids=tuple(patch_ids),
                )
            )
    return Cohort(patients=tuple(patients), embeddings=embeddings, dim=cfg.dim)
