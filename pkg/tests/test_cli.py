"""Command-line contract tests: exit codes, outputs, determinism."""

import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from affuse.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    format_float,
    load_config,
    main,
)
from affuse.featpack import (
    FeatureSequence,
    Manifest,
    ModalityDecl,
    VideoDecl,
    write_pack,
)
from affuse.synth import build_ah_gating_pack, build_expr_cluster_pack


def write_config(path: Path, **overrides) -> Path:
    doc = {
        "task": "EXPR",
        "pack": str(path.parent / "pack"),
        "seed": 0,
        "output_dir": str(path.parent / "out"),
        "fusion": {"modalities": ["face", "audio"], "smooth_k": 1},
        "training": {"learning_rate": 0.1, "epochs": 4, "batch_size": 64},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key].update(value)
        else:
            doc[key] = value
    path.write_text(json.dumps(doc, indent=2))
    return path


@pytest.fixture()
def expr_workspace(tmp_path):
    build_expr_cluster_pack(
        tmp_path / "pack", n_videos=5, frames=30, include_pretrained=True, seed=2
    )
    cfg = write_config(tmp_path / "cfg.json")
    return tmp_path, cfg


def tree_bytes(root: Path, skip=()):
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in skip:
            out[str(p.relative_to(root))] = p.read_bytes()
    return out


class TestValidateCommand:
    def test_clean_pack(self, expr_workspace, capsys):
        tmp, _ = expr_workspace
        assert main(["validate", str(tmp / "pack")]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "OK"

    def test_violations_listed(self, tmp_path, capsys):
        manifest = Manifest(
            task="EXPR",
            modalities=[ModalityDecl("m", 2, "probabilities")],
            videos=[VideoDecl("v", 1)],
        )
        write_pack(
            tmp_path / "pack",
            manifest,
            [FeatureSequence("v", "m", np.array([[0.9, 0.3]], dtype=np.float32))],
        )
        assert main(["validate", str(tmp_path / "pack")]) == EXIT_VALIDATION
        out = capsys.readouterr().out
        assert "simplex" in out and "(v, m," in out

    def test_nonexistent_path(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope")]) == EXIT_IO


class TestTrainCommand:
    def test_creates_model_dirs(self, expr_workspace, capsys):
        tmp, cfg = expr_workspace
        assert main(["train", "-c", str(cfg)]) == EXIT_OK
        assert (tmp / "out" / "face" / "model.json").is_file()
        assert (tmp / "out" / "audio" / "W1.fpk").is_file()
        assert (tmp / "out" / "history.json").is_file()
        history = json.loads((tmp / "out" / "history.json").read_text())
        assert len(history["face"]) == 4  # one record per epoch

    def test_byte_identical_reruns(self, expr_workspace):
        tmp, cfg = expr_workspace
        assert main(["train", "-c", str(cfg)]) == EXIT_OK
        first = tree_bytes(tmp / "out")
        assert main(["train", "-c", str(cfg)]) == EXIT_OK
        assert tree_bytes(tmp / "out") == first

    def test_batch_size_exceeds_n(self, tmp_path, capsys):
        build_expr_cluster_pack(tmp_path / "pack", n_videos=2, frames=5, seed=0)
        cfg = write_config(tmp_path / "cfg.json", training={"batch_size": 4096, "epochs": 1})
        assert main(["train", "-c", str(cfg)]) == EXIT_VALIDATION
        err = capsys.readouterr().err
        assert "4096" in err and "10" in err  # both numbers named

    def test_schema_violation_pointer(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", training={"epochs": 0})
        assert main(["train", "-c", str(cfg)]) == EXIT_CONFIG
        assert "/training/epochs" in capsys.readouterr().err


class TestPredictCommand:
    def test_outputs_and_consistency(self, expr_workspace, capsys):
        tmp, cfg = expr_workspace
        assert main(["train", "-c", str(cfg)]) == EXIT_OK
        assert main(["predict", "-c", str(cfg)]) == EXIT_OK
        csv_text = (tmp / "out" / "predictions.csv").read_text()
        assert csv_text.startswith("video_id,frame,label")
        report = json.loads((tmp / "out" / "report.json").read_text())
        assert report["task"] == "EXPR"
        assert 0.0 <= report["macro_f1"] <= 1.0
        assert "timestamp" in report["meta"]

    def test_missing_models(self, expr_workspace, capsys):
        tmp, cfg = expr_workspace
        assert main(["predict", "-c", str(cfg)]) == EXIT_IO
        assert "missing model directory" in capsys.readouterr().err

    def test_gated_ah_writes_source_column(self, tmp_path):
        build_ah_gating_pack(tmp_path / "pack", n_videos=8, frames=40, seed=1)
        cfg = write_config(
            tmp_path / "cfg.json",
            task="AH",
            fusion={
                "modalities": ["face"],
                "mode": "gated",
                "gate_modality": "text",
                "smooth_k": 1,
            },
            training={"learning_rate": 0.2, "epochs": 10, "batch_size": 64},
        )
        assert main(["train", "-c", str(cfg)]) == EXIT_OK
        assert (tmp_path / "out" / "gate" / "model.json").is_file()
        assert main(["predict", "-c", str(cfg)]) == EXIT_OK
        lines = (tmp_path / "out" / "predictions.csv").read_text().splitlines()
        assert lines[0] == "video_id,frame,label,source"
        sources = {line.split(",")[3] for line in lines[1:]}
        assert "gated" in sources  # at least one video rejected by the gate

    def test_deterministic_reports(self, expr_workspace):
        tmp, cfg = expr_workspace
        main(["train", "-c", str(cfg)])
        main(["predict", "-c", str(cfg)])
        first = tree_bytes(tmp / "out", skip=("report.json",))
        report_1 = json.loads((tmp / "out" / "report.json").read_text())
        main(["predict", "-c", str(cfg)])
        assert tree_bytes(tmp / "out", skip=("report.json",)) == first
        report_2 = json.loads((tmp / "out" / "report.json").read_text())
        report_1.pop("meta")
        report_2.pop("meta")
        assert report_1 == report_2


class TestSweepCommand:
    def test_w_sweep_prefers_informative_modality(self, tmp_path, capsys):
        info = build_expr_cluster_pack(
            tmp_path / "pack", n_videos=10, frames=60, audio_informative=False, seed=3
        )
        # held-out evaluation: a noise-trained audio model cannot generalize
        cfg = write_config(
            tmp_path / "cfg.json",
            sweep={"axis": "w", "values": [0.0, 0.5, 1.0]},
            training={"learning_rate": 0.1, "epochs": 8, "batch_size": 64},
            train_videos=info.train_ids,
            eval_videos=info.eval_ids,
        )
        assert main(["sweep", "-c", str(cfg)]) == EXIT_OK
        summary = json.loads((tmp_path / "out" / "sweep_summary.json").read_text())
        assert summary["best_value"] == 1.0  # face-only wins over pure-noise audio
        rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
        assert rows[0] == "param,value,macro_f1,accuracy"
        assert len(rows) == 4

    def test_single_value_sweep_matches_predict(self, expr_workspace):
        tmp, cfg_path = expr_workspace
        cfg_doc = json.loads(cfg_path.read_text())
        cfg_doc["sweep"] = {"axis": "k", "values": [3]}
        cfg_doc["fusion"]["smooth_k"] = 3
        cfg_path.write_text(json.dumps(cfg_doc))
        assert main(["train", "-c", str(cfg_path)]) == EXIT_OK
        assert main(["predict", "-c", str(cfg_path)]) == EXIT_OK
        assert main(["sweep", "-c", str(cfg_path)]) == EXIT_OK
        report = json.loads((tmp / "out" / "report.json").read_text())
        row = (tmp / "out" / "sweep.csv").read_text().splitlines()[1].split(",")
        assert row[2] == format_float(report["macro_f1"])
        assert row[3] == format_float(report["accuracy"])

    def test_even_k_rejected(self, expr_workspace, capsys):
        tmp, cfg_path = expr_workspace
        cfg_doc = json.loads(cfg_path.read_text())
        cfg_doc["sweep"] = {"axis": "k", "values": [2]}
        cfg_path.write_text(json.dumps(cfg_doc))
        assert main(["sweep", "-c", str(cfg_path)]) == EXIT_CONFIG
        assert "odd" in capsys.readouterr().err

    def test_parallel_equals_serial(self, tmp_path):
        build_expr_cluster_pack(
            tmp_path / "pack", n_videos=4, frames=30, include_pretrained=True, seed=5
        )
        cfg = write_config(
            tmp_path / "cfg.json",
            fusion={
                "modalities": ["face", "audio"],
                "pretrained_modality": "face_scores",
                "filter_t": 0.5,
            },
            sweep={"axis": "t", "values": [0.0, 0.25, 0.5, 0.75, 1.0]},
            training={"learning_rate": 0.1, "epochs": 3, "batch_size": 32},
        )
        env_before = os.environ.get("AFFUSE_THREADS")
        try:
            os.environ["AFFUSE_THREADS"] = "1"
            assert main(["sweep", "-c", str(cfg)]) == EXIT_OK
            serial = tree_bytes(tmp_path / "out")
            os.environ["AFFUSE_THREADS"] = "4"
            assert main(["sweep", "-c", str(cfg)]) == EXIT_OK
            parallel = tree_bytes(tmp_path / "out")
        finally:
            if env_before is None:
                os.environ.pop("AFFUSE_THREADS", None)
            else:
                os.environ["AFFUSE_THREADS"] = env_before
        assert serial == parallel


class TestReportCommand:
    def make_report(self, path, task, digest, **metrics):
        doc = {"task": task, "config_digest": digest, "per_video": {}, **metrics}
        path.write_text(json.dumps(doc))
        return path

    def test_single_report(self, tmp_path, capsys):
        p = self.make_report(tmp_path / "r.json", "EXPR", "abc", macro_f1=0.5, accuracy=0.6)
        assert main(["report", str(p)]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0].split() == ["method", "task", "macro_f1", "accuracy", "config_digest"]
        assert len(out) == 2

    def test_sorted_descending(self, tmp_path, capsys):
        a = self.make_report(tmp_path / "a.json", "EXPR", "aaa", macro_f1=0.4, accuracy=0.5)
        b = self.make_report(tmp_path / "b.json", "EXPR", "bbb", macro_f1=0.7, accuracy=0.6)
        out_csv = tmp_path / "table.csv"
        assert main(["report", str(a), str(b), "-o", str(out_csv)]) == EXIT_OK
        rows = out_csv.read_text().splitlines()
        assert rows[1].startswith("bbb") and rows[2].startswith("aaa")

    def test_mixed_tasks_rejected(self, tmp_path, capsys):
        a = self.make_report(tmp_path / "a.json", "EXPR", "aaa", macro_f1=0.4, accuracy=0.5)
        b = self.make_report(tmp_path / "b.json", "EMI", "bbb", mean_pcc=0.3)
        assert main(["report", str(a), str(b)]) == EXIT_VALIDATION
        assert "mixed-task" in capsys.readouterr().err


class TestConfigLoading:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        doc = json.loads(cfg.read_text())
        doc["bogus"] = 1
        cfg.write_text(json.dumps(doc))
        with pytest.raises(Exception, match="bogus"):
            load_config(cfg)

    def test_t_sweep_requires_pretrained(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", sweep={"axis": "t", "values": [0.5]})
        with pytest.raises(Exception, match="pretrained_modality"):
            load_config(cfg)

    def test_w_sweep_requires_two_modalities(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            fusion={"modalities": ["face"]},
            sweep={"axis": "w", "values": [0.5]},
        )
        with pytest.raises(Exception, match="two modalities"):
            load_config(cfg)


def test_console_entry_point(tmp_path):
    build_expr_cluster_pack(tmp_path / "pack", n_videos=2, frames=5, seed=0)
    proc = subprocess.run(
        [sys.executable, "-m", "affuse.cli", "validate", str(tmp_path / "pack")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == "OK"
