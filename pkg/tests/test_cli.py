"""Command-line surface: outputs, exit codes, provenance records."""

import json
import subprocess
import sys

import pytest

from bptk.cli import main

TINY_GEN = {
    "n_train_msi": 10, "n_train_mss": 22, "n_test_msi": 5, "n_test_mss": 13,
    "patches_min": 3, "patches_max": 5, "dim": 6, "seed": 4,
}


@pytest.fixture
def sim_dir(tmp_path):
    cfg_path = tmp_path / "gen.json"
    cfg_path.write_text(json.dumps(TINY_GEN), encoding="utf-8")
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    return out


def test_simulate_then_summary_counts(sim_dir, tmp_path, capsys):
    out = tmp_path / "sum"
    code = main([
        "summary", "--manifest", str(sim_dir / "manifest.csv"),
        "--embeddings", str(sim_dir / "embeddings.bpem"), "--out", str(out),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "TRAIN/MSI: n=10" in printed
    assert "TEST/MSS: n=13" in printed
    summary = json.loads((out / "summary.json").read_text())
    assert summary["groups"]["TRAIN/MSS"]["n_patients"] == 22
    assert (out / "run.json").exists()


def test_simulate_writes_provenance(sim_dir):
    record = json.loads((sim_dir / "run.json").read_text())
    assert record["command"] == "simulate"
    assert record["config"]["seed"] == 4
    assert "manifest.csv" in record["outputs"]
    assert record["toolkit_version"]


def test_relabel_csv(sim_dir, tmp_path):
    out = tmp_path / "relabel"
    code = main([
        "relabel", "--manifest", str(sim_dir / "manifest.csv"),
        "--variant", "snp", "--threshold", "1000", "--out", str(out),
    ])
    assert code == 0
    lines = (out / "sublabels.csv").read_text().splitlines()
    assert lines[0] == "patient_id,sublabel,excluded"
    labels = {line.split(",")[1] for line in lines[1:]}
    assert labels <= {"MSS", "MSI_1", "MSI_2"}


def test_folds_csv(sim_dir, tmp_path):
    out = tmp_path / "folds"
    code = main([
        "folds", "--manifest", str(sim_dir / "manifest.csv"),
        "--variant", "baseline", "--k", "2", "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    lines = (out / "folds.csv").read_text().splitlines()
    assert lines[0] == "patient_id,fold"
    assert len(lines) == 1 + 32  # TRAIN patients only


def test_train_then_evaluate_identical_dirs_p_one(sim_dir, tmp_path, capsys):
    models = tmp_path / "models"
    code = main([
        "train", "--manifest", str(sim_dir / "manifest.csv"),
        "--embeddings", str(sim_dir / "embeddings.bpem"),
        "--variant", "snp", "--threshold", "1000", "--k", "2", "--seed", "5",
        "--epochs", "2", "--learning-rate", "0.02", "--hidden", "",
        "--out", str(models),
    ])
    assert code == 0
    assert (models / "model_fold0.json").exists()
    assert (models / "model_fold1.json").exists()
    assert (models / "foldplan.csv").exists()

    out = tmp_path / "eval"
    code = main([
        "evaluate", "--manifest", str(sim_dir / "manifest.csv"),
        "--embeddings", str(sim_dir / "embeddings.bpem"),
        "--models", str(models), "--baseline", str(models), "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "report_model.json").read_text())
    assert report["paired_vs_baseline"]["auroc"]["p"] == 1.0
    assert (out / "model_roc_fold0.csv").exists()
    assert "p=1" in capsys.readouterr().out


def test_profile_command(sim_dir, tmp_path):
    models = tmp_path / "models"
    main([
        "train", "--manifest", str(sim_dir / "manifest.csv"),
        "--embeddings", str(sim_dir / "embeddings.bpem"),
        "--variant", "baseline", "--k", "2", "--seed", "5",
        "--epochs", "1", "--hidden", "", "--out", str(models),
    ])
    out = tmp_path / "profile"
    code = main([
        "profile", "--manifest", str(sim_dir / "manifest.csv"),
        "--embeddings", str(sim_dir / "embeddings.bpem"),
        "--models", str(models), "--threshold", "0.5", "--out", str(out),
    ])
    assert code == 0
    lines = (out / "profile.csv").read_text().splitlines()
    assert lines[0].startswith("category,n_patches,n_patients,empty")
    assert {line.split(",")[0] for line in lines[1:]} == {"TP", "FN", "FP", "TN"}


def test_unknown_subcommand_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_manifest_exit_3(tmp_path, capsys):
    code = main([
        "summary", "--manifest", str(tmp_path / "nope.csv"),
        "--embeddings", str(tmp_path / "nope.bpem"),
    ])
    assert code == 3
    err = capsys.readouterr().err
    assert err.startswith("bp: E3 data-validation:")
    assert err.count("\n") == 1


def test_invalid_manifest_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("patient_id,msi_status,snp_count,cimp_status,cnv_fraction,split\n"
                   "P1,MSI,10,CIMP_H,2.0,TRAIN\n", encoding="utf-8")
    emb = tmp_path / "none.bpem"
    emb.write_bytes(b"BPEM" + b"\x00" * 16)
    code = main(["summary", "--manifest", str(bad), "--embeddings", str(emb)])
    assert code == 3


def test_console_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "bptk.cli", "--version"], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert out.stdout.startswith("bp ")


def test_sweep_command(sim_dir, tmp_path):
    out = tmp_path / "sweep"
    code = main([
        "sweep", "--manifest", str(sim_dir / "manifest.csv"),
        "--embeddings", str(sim_dir / "embeddings.bpem"),
        "--candidates", "900,1100", "--k", "2", "--seed", "6",
        "--epochs", "2", "--hidden", "", "--out", str(out),
    ])
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "threshold,val_auroc"
    assert len(lines) == 3
    chosen = json.loads((out / "chosen.json").read_text())
    assert chosen["threshold"] in (900.0, 1100.0)


def test_combine_command(sim_dir, tmp_path):
    dirs = {}
    for variant, extra in (("snp", ["--threshold", "1000"]), ("cimp", ["--exclude-mss-cimp-h"])):
        models = tmp_path / f"models_{variant}"
        code = main([
            "train", "--manifest", str(sim_dir / "manifest.csv"),
            "--embeddings", str(sim_dir / "embeddings.bpem"),
            "--variant", variant, *extra, "--k", "2", "--seed", "5",
            "--epochs", "2", "--learning-rate", "0.02", "--hidden", "",
            "--out", str(models),
        ])
        assert code == 0
        dirs[variant] = models
    out = tmp_path / "combined"
    code = main([
        "combine", "--manifest", str(sim_dir / "manifest.csv"),
        "--embeddings", str(sim_dir / "embeddings.bpem"),
        "--model-a", str(dirs["snp"]), "--model-b", str(dirs["cimp"]),
        "--seed", "8", "--epochs", "2", "--hidden", "16", "--out", str(out),
    ])
    assert code == 0
    assert (out / "fusion_fold0.json").exists()
    report = json.loads((out / "report_fusion.json").read_text())
    assert report["variant"] == "combined"
    assert report["provenance"]["sources"]["a"] == "models_snp"
