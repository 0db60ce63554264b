"""Command-line surface for the toolkit.

Every subcommand that writes outputs also writes a ``run.json`` provenance
record (effective config, seeds, input digests, toolkit version) from
which the run can be reproduced bit-for-bit. All randomness flows from
explicit ``--seed`` flags; nothing is seeded from the clock.

Exit codes: 0 success, 2 usage error, 3 data validation error, 4 numeric
failure, 5 statistical degeneracy. Failures print a single machine-parsable
line ``bp: E<code> <kind>: <message>`` to stderr. The BP_LOG environment
variable (quiet|info|debug) controls verbosity only.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .cohort import (
    Cohort,
    CohortError,
    attach_embeddings,
    cohort_summary,
    load_manifest,
    write_embeddings_packed,
    write_manifest,
)
from .evaluation import (
    EvaluationReport,
    make_folds,
    misclassification_profile,
    paired_comparison,
    read_fold_plan,
    run_experiment,
    write_fold_plan,
    write_profile_csv,
)
from .fusion import run_fusion_experiment, save_fusion
from .labeling import (
    LabelingError,
    LabelingSpec,
    SubLabel,
    Variant,
    relabel,
    snp_candidates,
    sweep_snp_threshold,
)
from .metrics import SingleClassError
from .seeds import child_seed
from .stats import DegenerateStatisticError
from .synth import GeneratorConfig, generate, planted_truth
from .training import (
    HeadModel,
    NumericTrainingError,
    TrainConfig,
    load_model,
    predict,
    save_model,
)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_DEGENERATE = 5

log = logging.getLogger("bp")


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("BP_LOG", "info"), logging.INFO
    )
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_record(out_dir: Path, command: str, config: dict, inputs: list[Path], outputs: list[str]) -> None:
    record = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "toolkit_version": __version__,
    }
    (out_dir / "run.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _load_cohort(manifest: str, embeddings: str | None) -> Cohort:
    cohort = load_manifest(manifest)
    if embeddings:
        cohort = attach_embeddings(cohort, embeddings)
    return cohort


def _spec_from_args(args) -> LabelingSpec:
    variant = Variant(args.variant)
    threshold = getattr(args, "threshold", None)
    if variant in (Variant.SNP, Variant.CNV) and threshold is None:
        raise LabelingError(f"--threshold is required for variant {variant.value}")
    return LabelingSpec(
        variant=variant,
        threshold=threshold if variant in (Variant.SNP, Variant.CNV) else None,
        exclude_mss_cimp_h_from_train=getattr(args, "exclude_mss_cimp_h", False),
    )


def _train_config_from_args(args, seed: int) -> TrainConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text(encoding="utf-8")).get("train", {})
    merged = dict(base)
    for flag, key in (
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("learning_rate", "learning_rate"),
        ("hidden", "hidden_dims"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = value
    if getattr(args, "no_weighted_sampling", False):
        merged["weighted_sampling"] = False
    if "hidden_dims" in merged and isinstance(merged["hidden_dims"], str):
        merged["hidden_dims"] = _parse_hidden(merged["hidden_dims"])
    merged["seed"] = seed
    return TrainConfig(**{k: v for k, v in merged.items() if k in TrainConfig().to_dict()})


def _parse_hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _parse_candidates(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise LabelingError(f"bad candidate range {text!r}, expected lo:hi:step")
        lo, hi, step = (float(p) for p in parts)
        return snp_candidates(lo, hi, step)
    return [float(v) for v in text.split(",")]


def desk_train_config(seed: int = 0) -> TrainConfig:
    """Desk-scale head training profile for synthetic experiments.

    Keeps the reference schedule (15 epochs, batches of 64, weighted
    sampling, best-epoch checkpointing) but uses a linear head and a
    learning rate suited to a few thousand synthetic patches. The linear
    head keeps the comparison about the label space: the primed model's
    merged score is a max of per-sub-class scorers, which no single linear
    scorer can express.
    """
    return TrainConfig(learning_rate=0.02, hidden_dims=(), seed=seed)


def desk_fusion_config(seed: int = 0) -> TrainConfig:
    """Desk-scale fusion training profile (one hidden layer of width 16)."""
    return TrainConfig(learning_rate=0.02, hidden_dims=(16,), seed=seed)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--hidden", type=str, help="comma-separated hidden widths, empty for linear")
    parser.add_argument("--no-weighted-sampling", action="store_true")
    parser.add_argument("--config", type=str, help="JSON config file; flags override it")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg_dict: dict = {}
    if args.config:
        cfg_dict = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    cfg = GeneratorConfig.from_dict(cfg_dict) if cfg_dict else GeneratorConfig()
    cohort = generate(cfg)
    out = _out_dir(args)
    write_manifest(cohort, out / "manifest.csv")
    write_embeddings_packed(cohort, out / "embeddings.bpem")
    truth = planted_truth(cfg)
    (out / "truth.json").write_text(
        json.dumps(
            {"snp_split": truth.snp_split, "cnv_split": truth.cnv_split,
             "delta_class": truth.delta_class, "delta_sub": truth.delta_sub},
            sort_keys=True, indent=2,
        ) + "\n",
        encoding="utf-8",
    )
    inputs = [Path(args.config)] if args.config else []
    _write_run_record(out, "simulate", cfg.to_dict(), inputs, ["manifest.csv", "embeddings.bpem", "truth.json"])
    log.info("wrote %s patients / %s patches to %s", len(cohort.patients), len(cohort.embeddings), out)
    return 0


def cmd_summary(args) -> int:
    cohort = _load_cohort(args.manifest, args.embeddings)
    summary = cohort_summary(cohort)
    for key in sorted(summary.groups):
        g = summary.groups[key]
        print(f"{key}: n={g.n_patients} p={g.n_patches}")
    print(f"dim={summary.dim}")
    if args.out:
        out = _out_dir(args)
        (out / "summary.json").write_text(
            json.dumps(summary.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        _write_run_record(
            out, "summary", {"manifest": args.manifest, "embeddings": args.embeddings},
            [Path(args.manifest), Path(args.embeddings)], ["summary.json"],
        )
    return 0


def cmd_relabel(args) -> int:
    cohort = load_manifest(args.manifest)
    spec = _spec_from_args(args)
    labeled = relabel(cohort, spec)
    out = _out_dir(args)
    with (out / "sublabels.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "sublabel", "excluded"])
        for p in cohort.patients:
            excluded = p.patient_id in labeled.excluded_train_patients
            label = "" if excluded else labeled.sublabels[p.patient_id].name
            writer.writerow([p.patient_id, label, int(excluded)])
    _write_run_record(
        out, "relabel",
        {"variant": spec.variant.value, "threshold": spec.threshold,
         "exclude_mss_cimp_h_from_train": spec.exclude_mss_cimp_h_from_train},
        [Path(args.manifest)], ["sublabels.csv"],
    )
    return 0


def cmd_folds(args) -> int:
    cohort = load_manifest(args.manifest)
    spec = _spec_from_args(args)
    labeled = relabel(cohort, spec)
    plan = make_folds(labeled, args.k, args.seed)
    out = _out_dir(args)
    write_fold_plan(plan, out / "folds.csv")
    _write_run_record(
        out, "folds",
        {"variant": spec.variant.value, "threshold": spec.threshold, "k": args.k, "seed": args.seed},
        [Path(args.manifest)], ["folds.csv"],
    )
    return 0


def cmd_sweep(args) -> int:
    cohort = _load_cohort(args.manifest, args.embeddings)
    candidates = _parse_candidates(args.candidates)
    # The sweep compares candidates on one fixed plan, stratified by subtype
    # only, so every candidate sees the same validation patients.
    baseline = relabel(cohort, LabelingSpec(variant=Variant.BASELINE))
    plan = make_folds(baseline, args.k, child_seed(args.seed, "sweep-folds"))
    cfg = _train_config_from_args(args, child_seed(args.seed, "sweep-train"))
    best, table = sweep_snp_threshold(cohort, candidates, plan, cfg)
    out = _out_dir(args)
    with (out / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "val_auroc"])
        for threshold, score in table:
            writer.writerow([repr(threshold), "NA" if score is None else repr(score)])
    (out / "chosen.json").write_text(
        json.dumps({"threshold": best}, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_run_record(
        out, "sweep",
        {"candidates": candidates, "k": args.k, "seed": args.seed, "train": cfg.to_dict()},
        [Path(args.manifest), Path(args.embeddings)], ["sweep.csv", "chosen.json"],
    )
    print(f"chosen threshold: {best}")
    return 0


def _models_dir_meta(models_dir: Path) -> dict:
    meta_path = models_dir / "spec.json"
    if not meta_path.exists():
        raise CohortError(f"{models_dir}: missing spec.json (not a models directory?)")
    return json.loads(meta_path.read_text(encoding="utf-8"))


def cmd_train(args) -> int:
    cohort = _load_cohort(args.manifest, args.embeddings)
    spec = _spec_from_args(args)
    labeled = relabel(cohort, spec)
    plan = make_folds(labeled, args.k, child_seed(args.seed, "folds", spec.variant.value))
    out = _out_dir(args)
    folds = range(plan.k) if args.fold == "all" else [int(args.fold)]
    from .training import train as train_head

    written = []
    for fold in folds:
        cfg = _train_config_from_args(args, child_seed(args.seed, "train", spec.variant.value, fold))
        fit = plan.training_patients(fold) - labeled.excluded_train_patients
        model = train_head(labeled, fit, plan.fold_patients(fold), cfg, fold=fold)
        name = f"model_fold{fold}.json"
        save_model(model, out / name)
        written.append(name)
        log.info("fold %d: best epoch %s, val AUROC %.4f", fold,
                 model.provenance["best_epoch"], model.provenance["best_val_auroc"])
    write_fold_plan(plan, out / "foldplan.csv")
    meta = {
        "variant": spec.variant.value,
        "threshold": spec.threshold,
        "exclude_mss_cimp_h_from_train": spec.exclude_mss_cimp_h_from_train,
        "k": args.k,
        "seed": args.seed,
        "train": _train_config_from_args(args, 0).to_dict(),
    }
    (out / "spec.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_run_record(
        out, "train", meta, [Path(args.manifest), Path(args.embeddings)],
        written + ["foldplan.csv", "spec.json"],
    )
    return 0


def _report_from_models_dir(cohort: Cohort, models_dir: Path, name: str) -> EvaluationReport:
    from .evaluation import FoldOutputs, _evaluate_models, _labels_for, patient_scores
    from .cohort import Split

    meta = _models_dir_meta(models_dir)
    spec = LabelingSpec(
        variant=Variant(meta["variant"]),
        threshold=meta["threshold"] if Variant(meta["variant"]) in (Variant.SNP, Variant.CNV) else None,
        exclude_mss_cimp_h_from_train=meta["exclude_mss_cimp_h_from_train"],
    )
    labeled = relabel(cohort, spec)
    plan = read_fold_plan(models_dir / "foldplan.csv", meta["k"], meta["variant"], meta["seed"])
    test_patients = sorted(p.patient_id for p in cohort.patients if p.split is Split.TEST)
    if not test_patients:
        raise CohortError("cohort has no TEST split patients")
    test_labels = _labels_for(cohort, test_patients)
    fold_outputs = []
    for fold in range(meta["k"]):
        model = load_model(models_dir / f"model_fold{fold}.json")
        val_ordered = sorted(plan.fold_patients(fold))
        val_scores = patient_scores(model, cohort, val_ordered)
        fold_outputs.append(
            FoldOutputs(
                model=model,
                val_labels=_labels_for(cohort, val_ordered),
                val_scores=[s.p_msi for s in val_scores],
                test_scores=patient_scores(model, cohort, test_patients),
            )
        )
    return _evaluate_models(
        name, meta["variant"], meta["k"], meta["seed"], cohort, fold_outputs, test_labels,
        tuple(sorted(labeled.excluded_train_patients)),
        {"models_dir": str(models_dir), "train_config": meta["train"], "k": meta["k"],
         "seed": meta["seed"], "labeling": {"variant": meta["variant"], "threshold": meta["threshold"],
         "exclude_mss_cimp_h_from_train": meta["exclude_mss_cimp_h_from_train"]},
         "toolkit_version": __version__},
    )


def cmd_evaluate(args) -> int:
    cohort = _load_cohort(args.manifest, args.embeddings)
    models_dir = Path(args.models)
    baseline_dir = Path(args.baseline)
    report = _report_from_models_dir(cohort, models_dir, models_dir.name)
    baseline_report = _report_from_models_dir(cohort, baseline_dir, baseline_dir.name)
    report.paired_vs_baseline = paired_comparison(report, baseline_report)
    out = _out_dir(args)
    report.write(out / "report_model.json")
    baseline_report.write(out / "report_baseline.json")
    report.write_curve_csvs(out, "model")
    baseline_report.write_curve_csvs(out, "baseline")
    _write_run_record(
        out, "evaluate",
        {"models": str(models_dir), "baseline": str(baseline_dir)},
        [Path(args.manifest), Path(args.embeddings)],
        ["report_model.json", "report_baseline.json"],
    )
    t = report.paired_vs_baseline["auroc"]
    print(
        f"AUROC {report.auroc.mean:.3f}+-{report.auroc.sd:.3f} vs "
        f"{baseline_report.auroc.mean:.3f}+-{baseline_report.auroc.sd:.3f} (p={t['p']:.4g})"
    )
    return 0


def cmd_combine(args) -> int:
    cohort = _load_cohort(args.manifest, args.embeddings)
    dir_a, dir_b = Path(args.model_a), Path(args.model_b)
    result_a = _experiment_from_dir(cohort, dir_a)
    result_b = _experiment_from_dir(cohort, dir_b)
    cfg = _train_config_from_args(args, 0)
    report, fusions = run_fusion_experiment(result_a, result_b, cfg, args.seed)
    out = _out_dir(args)
    written = []
    for fold, fusion in enumerate(fusions):
        name = f"fusion_fold{fold}.json"
        save_fusion(fusion, out / name)
        written.append(name)
    report.write(out / "report_fusion.json")
    report.write_curve_csvs(out, "fusion")
    _write_run_record(
        out, "combine",
        {"model_a": str(dir_a), "model_b": str(dir_b), "seed": args.seed, "train": cfg.to_dict()},
        [Path(args.manifest), Path(args.embeddings)],
        written + ["report_fusion.json"],
    )
    print(f"fusion AUROC {report.auroc.mean:.3f}+-{report.auroc.sd:.3f}")
    return 0


def _experiment_from_dir(cohort: Cohort, models_dir: Path):
    """Rehydrate enough of an ExperimentResult for fusion from a models dir."""
    from .evaluation import ExperimentResult, FoldOutputs

    meta = _models_dir_meta(models_dir)
    spec = LabelingSpec(
        variant=Variant(meta["variant"]),
        threshold=meta["threshold"] if Variant(meta["variant"]) in (Variant.SNP, Variant.CNV) else None,
        exclude_mss_cimp_h_from_train=meta["exclude_mss_cimp_h_from_train"],
    )
    labeled = relabel(cohort, spec)
    plan = read_fold_plan(models_dir / "foldplan.csv", meta["k"], meta["variant"], meta["seed"])
    report = _report_from_models_dir(cohort, models_dir, models_dir.name)
    fold_outputs = [
        FoldOutputs(
            model=load_model(models_dir / f"model_fold{fold}.json"),
            val_labels=[], val_scores=[], test_scores=[],
        )
        for fold in range(meta["k"])
    ]
    return ExperimentResult(
        fold_plan=plan,
        labeled=labeled,
        labeled_baseline=labeled,
        fold_outputs=fold_outputs,
        baseline_outputs=[],
        report=report,
        baseline_report=report,
    )


def cmd_profile(args) -> int:
    cohort = _load_cohort(args.manifest, args.embeddings)
    models_dir = Path(args.models)
    meta = _models_dir_meta(models_dir)
    model = load_model(models_dir / f"model_fold{args.fold}.json")
    spec = LabelingSpec(
        variant=Variant(meta["variant"]),
        threshold=meta["threshold"] if Variant(meta["variant"]) in (Variant.SNP, Variant.CNV) else None,
        exclude_mss_cimp_h_from_train=meta["exclude_mss_cimp_h_from_train"],
    )
    labeled = relabel(cohort, spec)
    from .cohort import Split

    test_patches = [
        cohort.embeddings[pid]
        for p in cohort.patients
        if p.split is Split.TEST
        for pid in p.patch_ids
    ]
    predictions = predict(model, test_patches)
    profile = misclassification_profile(labeled, predictions, args.threshold, model.n_classes)
    out = _out_dir(args)
    write_profile_csv(profile, out / "profile.csv")
    _write_run_record(
        out, "profile",
        {"models": str(models_dir), "fold": args.fold, "threshold": args.threshold},
        [Path(args.manifest), Path(args.embeddings)], ["profile.csv"],
    )
    return 0


def cmd_reproduce_synthetic(args) -> int:
    """End-to-end seeded synthetic run: simulate, train primed vs baseline, report."""
    out = _out_dir(args)
    cfg = GeneratorConfig(seed=args.seed)
    cohort = generate(cfg)
    write_manifest(cohort, out / "manifest.csv")
    write_embeddings_packed(cohort, out / "embeddings.bpem")
    spec = LabelingSpec(variant=Variant.SNP, threshold=cfg.snp.split)
    result = run_experiment(
        cohort, spec, k=5, train_cfg=desk_train_config(0), seed=child_seed(args.seed, "experiment"),
        jobs=args.jobs,
    )
    result.report.write(out / "report_model.json")
    result.baseline_report.write(out / "report_baseline.json")
    result.report.write_curve_csvs(out, "model")
    result.baseline_report.write_curve_csvs(out, "baseline")
    written = ["manifest.csv", "embeddings.bpem", "report_model.json", "report_baseline.json"]
    for fold, fo in enumerate(result.fold_outputs):
        name = f"model_fold{fold}.json"
        save_model(fo.model, out / name)
        written.append(name)
    _write_run_record(
        out, "reproduce-synthetic",
        {"seed": args.seed, "generator": cfg.to_dict(), "train": desk_train_config(0).to_dict(), "k": 5},
        [], written,
    )
    t = result.report.paired_vs_baseline["auroc"]
    print(
        f"snp AUROC {result.report.auroc.mean:.3f}+-{result.report.auroc.sd:.3f} vs "
        f"baseline {result.baseline_report.auroc.mean:.3f}+-{result.baseline_report.auroc.sd:.3f} "
        f"(p={t['p']:.4g})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--config", type=str)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summary", help="cohort counts and genomic digests")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("relabel", help="write sub-labels for a variant")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    p.add_argument("--threshold", type=float)
    p.add_argument("--exclude-mss-cimp-h", dest="exclude_mss_cimp_h", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_relabel)

    p = sub.add_parser("folds", help="stratified fold plan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    p.add_argument("--threshold", type=float)
    p.add_argument("--exclude-mss-cimp-h", dest="exclude_mss_cimp_h", action="store_true")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_folds)

    p = sub.add_parser("sweep", help="SNP threshold sweep on the first fold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--candidates", default="800:1500:100")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train", help="train per-fold heads for a variant")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    p.add_argument("--threshold", type=float)
    p.add_argument("--exclude-mss-cimp-h", dest="exclude_mss_cimp_h", action="store_true")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--fold", default="all", help="fold index or 'all'")
    p.add_argument("--seed", type=int, required=True)
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate trained models against a baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("combine", help="fuse two trained primed models")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--model-a", dest="model_a", required=True)
    p.add_argument("--model-b", dest="model_b", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("profile", help="genomics profile of patch classifications")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("reproduce-synthetic", help="one-shot seeded synthetic experiment")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reproduce_synthetic)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CohortError, LabelingError) as exc:
        print(f"bp: E{EXIT_DATA} data-validation: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericTrainingError, ArithmeticError) as exc:
        print(f"bp: E{EXIT_NUMERIC} numeric-failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SingleClassError, DegenerateStatisticError) as exc:
        print(f"bp: E{EXIT_DEGENERATE} statistical-degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValueError, OSError, KeyError) as exc:
        print(f"bp: E{EXIT_DATA} data-validation: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
