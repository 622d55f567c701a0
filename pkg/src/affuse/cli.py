"""Command-line front end.

Subcommands::

    affuse validate <pack>
    affuse train   -c cfg.json
    affuse predict -c cfg.json [-m MODELS_DIR]
    affuse sweep   -c cfg.json
    affuse report  <report.json ...> [-o table.csv]

Exit codes are a stable contract: 0 success, 1 validation or metric-domain
failure, 2 I/O failure, 3 config schema failure.

Every command is deterministic given (inputs, seed): model files, CSVs and
reports are byte-identical across runs; wall-clock time appears only in the
report's ``meta.timestamp`` field.  All randomness flows from the config's
root seed through :func:`affuse.pipeline.derive_seed`.  ``AFFUSE_THREADS``
caps sweep parallelism; results are buffered and written in input order, so
concurrency never changes output bytes.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np

from .featpack import FeaturePack, PackError, read_pack, validate_pack
from .neural import (
    LossSpec,
    MlpModel,
    TrainConfig,
    emotion_weights_from_counts,
    load_logreg,
    load_mlp,
    logreg_train,
    mlp_init,
    save_logreg,
    save_mlp,
    train,
)
from .pipeline import (
    FramePredictions,
    FusionSpec,
    MetricsReport,
    collect_frames,
    collect_gate_data,
    config_digest,
    derive_seed,
    predict_emi,
    run_ah,
    run_expr,
    train_emi_models,
)
from .temporal import FilterSpec, SmoothSpec

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CONFIG = 3

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["task", "pack", "fusion"],
    "additionalProperties": False,
    "properties": {
        "task": {"enum": ["EXPR", "EMI", "AH"]},
        "pack": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "label": {"type": "string"},
        "fusion": {
            "type": "object",
            "required": ["modalities"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["late_blend", "early_concat", "gated"]},
                "modalities": {
                    "type": "array",
                    "items": {"type": "string"},
                    "minItems": 1,
                },
                "modality_weights": {
                    "type": ["array", "null"],
                    "items": {"type": "number", "minimum": 0},
                },
                "smooth_k": {"type": "integer", "minimum": 1},
                "filter_t": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "pretrained_modality": {"type": ["string", "null"]},
                "gate_modality": {"type": ["string", "null"]},
                "descriptor_overrides": {
                    "type": ["object", "null"],
                    "additionalProperties": {"enum": ["mean", "stat"]},
                },
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "l2": {"type": "number", "minimum": 0},
                "early_stop_patience": {"type": ["integer", "null"], "minimum": 0},
                "hidden_dim": {"type": "integer", "minimum": 1},
                "n_classes": {"type": "integer", "minimum": 2},
                "class_weighting": {"type": "boolean"},
                "validation_fraction": {"type": "number", "minimum": 0, "maximum": 0.9},
            },
        },
        "sweep": {
            "type": "object",
            "required": ["axis", "values"],
            "additionalProperties": False,
            "properties": {
                "axis": {"enum": ["k", "t", "w"]},
                "values": {"type": "array", "minItems": 1, "items": {"type": "number"}},
            },
        },
        "train_videos": {"type": ["array", "null"], "items": {"type": "string"}},
        "eval_videos": {"type": ["array", "null"], "items": {"type": "string"}},
    },
}


class ConfigError(Exception):
    """Config rejected; ``pointer`` is a JSON pointer to the offending field."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{message} (at {pointer or '/'})" if pointer else message)
        self.pointer = pointer


@dataclass
class ExperimentConfig:
    task: str
    pack: Path
    fusion: FusionSpec
    training: TrainConfig
    hidden_dim: int
    n_classes: int
    class_weighting: bool
    validation_fraction: float
    seed: int
    output_dir: Path
    label: str
    sweep_axis: str | None
    sweep_values: list[float]
    train_videos: list[str] | None
    eval_videos: list[str] | None
    raw: dict

    def digest(self) -> str:
        return config_digest(self.raw)


def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(exc.message, pointer) from exc

    fusion_doc = doc["fusion"]
    training_doc = doc.get("training", {})
    seed = int(doc.get("seed", 0))
    try:
        fusion = FusionSpec(
            modalities=list(fusion_doc["modalities"]),
            mode=fusion_doc.get("mode", "late_blend"),
            modality_weights=fusion_doc.get("modality_weights"),
            smooth=SmoothSpec(int(fusion_doc.get("smooth_k", 1))),
            filter=(
                FilterSpec(float(fusion_doc["filter_t"]))
                if fusion_doc.get("filter_t") is not None
                else None
            ),
            pretrained_modality=fusion_doc.get("pretrained_modality"),
            gate_modality=fusion_doc.get("gate_modality"),
            descriptor_overrides=fusion_doc.get("descriptor_overrides"),
        )
        training = TrainConfig(
            learning_rate=float(training_doc.get("learning_rate", 0.01)),
            epochs=int(training_doc.get("epochs", 100)),
            batch_size=int(training_doc.get("batch_size", 64)),
            seed=seed,
            l2=float(training_doc.get("l2", 0.0)),
            early_stop_patience=training_doc.get("early_stop_patience"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    cfg = ExperimentConfig(
        task=doc["task"],
        pack=Path(doc["pack"]),
        fusion=fusion,
        training=training,
        hidden_dim=int(training_doc.get("hidden_dim", 128)),
        n_classes=int(training_doc.get("n_classes", 8)),
        class_weighting=bool(training_doc.get("class_weighting", False)),
        validation_fraction=float(training_doc.get("validation_fraction", 0.0)),
        seed=seed,
        output_dir=Path(doc.get("output_dir", "affuse_out")),
        label=doc.get("label", ""),
        sweep_axis=doc.get("sweep", {}).get("axis"),
        sweep_values=[float(v) for v in doc.get("sweep", {}).get("values", [])],
        train_videos=doc.get("train_videos"),
        eval_videos=doc.get("eval_videos"),
        raw=doc,
    )
    _check_sweep_domain(cfg)
    return cfg


def _check_sweep_domain(cfg: ExperimentConfig) -> None:
    if cfg.sweep_axis is None:
        return
    for v in cfg.sweep_values:
        if cfg.sweep_axis == "k":
            if v != int(v) or int(v) < 1 or int(v) % 2 == 0:
                raise ConfigError(
                    f"sweep value {v} outside the kernel domain (odd positive integers)",
                    "/sweep/values",
                )
        else:
            if not 0.0 <= v <= 1.0:
                raise ConfigError(
                    f"sweep value {v} outside [0, 1] for axis {cfg.sweep_axis!r}",
                    "/sweep/values",
                )
    if cfg.sweep_axis == "w" and len(cfg.fusion.modalities) != 2:
        raise ConfigError(
            "sweeping w requires exactly two modalities", "/fusion/modalities"
        )
    if cfg.sweep_axis == "t" and cfg.fusion.pretrained_modality is None:
        raise ConfigError(
            "sweeping t requires fusion.pretrained_modality", "/fusion/pretrained_modality"
        )


def format_float(x: float) -> str:
    """CSV float convention: 9 significant decimal digits."""
    return f"{float(x):.9g}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_predictions_csv(path: Path, predictions: list[FramePredictions]) -> None:
    with_source = any(p.source is not None for p in predictions)
    header = ["video_id", "frame", "label"] + (["source"] if with_source else [])
    rows = []
    for p in predictions:
        for i, label in enumerate(p.labels):
            row = [p.video_id, i, int(label)]
            if with_source:
                row.append(p.source[i] if p.source is not None else "fused")
            rows.append(row)
    _write_csv(path, header, rows)


def write_emi_csv(path: Path, preds: dict[str, np.ndarray]) -> None:
    n = len(next(iter(preds.values())))
    header = ["video_id"] + [f"e{i}" for i in range(n)]
    rows = [[vid] + [format_float(x) for x in vec] for vid, vec in sorted(preds.items())]
    _write_csv(path, header, rows)


def write_report_json(path: Path, report: MetricsReport, cfg: ExperimentConfig) -> None:
    doc = report.to_dict()
    doc["label"] = cfg.label or report.config_digest
    doc["meta"] = {  # the only timestamped field anywhere in the outputs
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- training ------------------------------------------------------------

def _split_videos(cfg: ExperimentConfig, pack: FeaturePack) -> tuple[list[str], list[str]]:
    """Deterministic whole-video holdout for validation-based early stopping."""
    vids = sorted(pack.video_ids()) if cfg.train_videos is None else sorted(cfg.train_videos)
    if cfg.validation_fraction <= 0.0:
        return vids, []
    rng = np.random.default_rng(derive_seed(cfg.seed, "val_split"))
    perm = rng.permutation(len(vids))
    n_val = max(1, int(round(len(vids) * cfg.validation_fraction)))
    val = sorted(vids[i] for i in perm[:n_val])
    trainv = sorted(vids[i] for i in perm[n_val:])
    return trainv, val


def _class_weights(labels: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=n_classes)
    return emotion_weights_from_counts(np.maximum(counts, 1))


def _train_frame_model(
    pack: FeaturePack,
    modality: str,
    cfg: ExperimentConfig,
    output_dim: int,
    head: str,
    loss_kind: str,
    train_vids: list[str],
    val_vids: list[str],
) -> tuple[MlpModel, list[dict]]:
    x, y = collect_frames(pack, modality, train_vids)
    if loss_kind == "bce":
        y = y.astype(np.float64)[:, None]
    weights = None
    if cfg.class_weighting and loss_kind == "cross_entropy":
        weights = _class_weights(y, output_dim)
    validation = None
    if val_vids:
        xv, yv = collect_frames(pack, modality, val_vids)
        if loss_kind == "bce":
            yv = yv.astype(np.float64)[:, None]
        validation = (xv, yv)
    model = mlp_init(
        x.shape[1], cfg.hidden_dim, output_dim, head,
        seed=derive_seed(cfg.seed, f"train:{modality}"),
    )
    train_cfg = replace(cfg.training, seed=derive_seed(cfg.seed, f"shuffle:{modality}"))
    return train(model, x, y, LossSpec(loss_kind, weights), train_cfg, validation)


def train_all_models(pack: FeaturePack, cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Train every model the configured task needs; returns (bundle, history).

    Bundle keys: one per trainable modality ("fused" for early fusion),
    plus "gate" for gated AH.  Probabilities-kind modalities are frozen
    score tracks and are never trained.
    """
    train_vids, val_vids = _split_videos(cfg, pack)
    bundle: dict = {}
    history: dict = {}

    if cfg.task == "EXPR":
        for modality in cfg.fusion.modalities:
            model, hist = _train_frame_model(
                pack, modality, cfg, cfg.n_classes, "softmax", "cross_entropy",
                train_vids, val_vids,
            )
            bundle[modality] = model
            history[modality] = hist
    elif cfg.task == "AH":
        if cfg.fusion.mode == "early_concat":
            x_parts = [collect_frames(pack, m, train_vids) for m in cfg.fusion.modalities]
            x = np.concatenate([p[0] for p in x_parts], axis=1)
            y = x_parts[0][1].astype(np.float64)[:, None]
            model = mlp_init(
                x.shape[1], cfg.hidden_dim, 1, "sigmoid",
                seed=derive_seed(cfg.seed, "train:fused"),
            )
            train_cfg = replace(cfg.training, seed=derive_seed(cfg.seed, "shuffle:fused"))
            bundle["fused"], history["fused"] = train(
                model, x, y, LossSpec("bce"), train_cfg
            )
        else:
            for modality in cfg.fusion.modalities:
                model, hist = _train_frame_model(
                    pack, modality, cfg, 1, "sigmoid", "bce", train_vids, val_vids
                )
                bundle[modality] = model
                history[modality] = hist
        if cfg.fusion.mode == "gated":
            if cfg.fusion.gate_modality is None:
                raise ConfigError("gated mode requires fusion.gate_modality")
            xg, yg = collect_gate_data(pack, cfg.fusion.gate_modality, train_vids)
            gate_cfg = TrainConfig(
                learning_rate=cfg.training.learning_rate,
                epochs=cfg.training.epochs,
                batch_size=min(cfg.training.batch_size, len(yg)),
                seed=derive_seed(cfg.seed, "train:gate"),
                l2=cfg.training.l2,
            )
            bundle["gate"] = logreg_train(xg, yg, gate_cfg)
    else:  # EMI
        train_cfg = replace(cfg.training, seed=cfg.seed)
        models = train_emi_models(
            pack, cfg.fusion, train_cfg, cfg.train_videos, cfg.hidden_dim
        )
        if isinstance(models, MlpModel):
            bundle["fused"] = models
        else:
            bundle.update(models)
    return bundle, history


def save_bundle(bundle: dict, directory: Path, digest: str) -> None:
    for name, model in sorted(bundle.items()):
        if isinstance(model, MlpModel):
            save_mlp(model, directory / name, config_digest=digest)
        else:
            save_logreg(model, directory / name, config_digest=digest)


def load_bundle(pack: FeaturePack, cfg: ExperimentConfig, directory: Path) -> dict:
    bundle: dict = {}
    if cfg.task == "EXPR":
        names = list(cfg.fusion.modalities)
    elif cfg.task == "AH":
        names = (
            ["fused"] if cfg.fusion.mode == "early_concat" else list(cfg.fusion.modalities)
        )
        if cfg.fusion.mode == "gated":
            bundle["gate"] = load_logreg(directory / "gate")
    else:
        names = (
            ["fused"] if cfg.fusion.mode == "early_concat" else list(cfg.fusion.modalities)
        )
    for name in names:
        path = directory / name
        if not (path / "model.json").is_file():
            raise FileNotFoundError(f"missing model directory: {path}")
        bundle[name] = load_mlp(path)
    return bundle


def evaluate(
    pack: FeaturePack, cfg: ExperimentConfig, fusion: FusionSpec, bundle: dict
) -> tuple[list[FramePredictions] | dict, MetricsReport]:
    """Dispatch one configured evaluation; pure given (pack, fusion, bundle)."""
    if cfg.task == "EXPR":
        face = bundle[fusion.modalities[0]]
        audio = bundle.get(fusion.modalities[1]) if len(fusion.modalities) > 1 else None
        dims = {m.name: m.dim for m in pack.manifest.modalities}
        if face.input_dim != dims[fusion.modalities[0]]:
            raise ValueError(
                f"model input dim {face.input_dim} does not match manifest dim "
                f"{dims[fusion.modalities[0]]} for {fusion.modalities[0]!r}"
            )
        return run_expr(pack, fusion, face, audio, videos=cfg.eval_videos)
    if cfg.task == "AH":
        if fusion.mode == "gated" and fusion.gate is None:
            fusion = replace(fusion, gate=bundle["gate"])
        models = bundle["fused"] if fusion.mode == "early_concat" else {
            m: bundle[m] for m in fusion.modalities
        }
        return run_ah(pack, fusion, models, videos=cfg.eval_videos)
    models = bundle["fused"] if fusion.mode == "early_concat" else {
        m: bundle[m] for m in fusion.modalities
    }
    return predict_emi(pack, fusion, models, cfg.eval_videos)


# --- subcommands -----------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    root = Path(args.pack)
    if not root.exists():
        print(f"error: path does not exist: {root}", file=sys.stderr)
        return EXIT_IO
    pack = read_pack(root)
    violations = validate_pack(pack)
    if not violations:
        print("OK")
        return EXIT_OK
    for v in violations:
        print(str(v))
    print(f"{len(violations)} violation(s)")
    return EXIT_VALIDATION


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pack = read_pack(cfg.pack)
    bundle, history = train_all_models(pack, cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, cfg.output_dir, cfg.digest())
    with open(cfg.output_dir / "history.json", "w", encoding="utf-8") as fh:
        json.dump(history, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained {len(bundle)} model(s) -> {cfg.output_dir}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pack = read_pack(cfg.pack)
    models_dir = Path(args.models) if args.models else cfg.output_dir
    bundle = load_bundle(pack, cfg, models_dir)
    result, report = evaluate(pack, cfg, cfg.fusion, bundle)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.task == "EMI":
        write_emi_csv(cfg.output_dir / "predictions.csv", result)
    else:
        write_predictions_csv(cfg.output_dir / "predictions.csv", result)
    write_report_json(cfg.output_dir / "report.json", report, cfg)
    name, value = report.headline_metric()
    print(f"{cfg.task} {name}={format_float(value)} -> {cfg.output_dir}")
    return EXIT_OK


def _sweep_fusion(fusion: FusionSpec, axis: str, value: float) -> FusionSpec:
    if axis == "k":
        return replace(fusion, smooth=SmoothSpec(int(value)))
    if axis == "t":
        return replace(fusion, filter=FilterSpec(float(value)))
    return replace(fusion, modality_weights=[float(value), 1.0 - float(value)])


def _sweep_metrics(report: MetricsReport) -> list[tuple[str, float]]:
    if report.task == "EXPR":
        return [("macro_f1", report.macro_f1), ("accuracy", report.accuracy)]
    if report.task == "EMI":
        return [("mean_pcc", report.mean_pcc)]
    return [("binary_f1", report.binary_f1)]


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if cfg.sweep_axis is None:
        raise ConfigError("sweep command requires a sweep section", "/sweep")
    pack = read_pack(cfg.pack)
    # Post-processing parameters (k, t, w) do not require retraining:
    # models are trained once and reused across every sweep point.
    bundle, _ = train_all_models(pack, cfg)

    def point(value: float) -> MetricsReport:
        _, report = evaluate(pack, cfg, _sweep_fusion(cfg.fusion, cfg.sweep_axis, value), bundle)
        return report

    threads = int(os.environ.get("AFFUSE_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(point, cfg.sweep_values))
    else:
        reports = [point(v) for v in cfg.sweep_values]

    metric_names = [name for name, _ in _sweep_metrics(reports[0])]
    rows = []
    for value, report in zip(cfg.sweep_values, reports):
        rows.append(
            [cfg.sweep_axis, format_float(value)]
            + [format_float(v) for _, v in _sweep_metrics(report)]
        )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.output_dir / "sweep.csv", ["param", "value"] + metric_names, rows)

    headline = [report.headline_metric()[1] for report in reports]
    best_idx = int(np.argmax(headline))
    summary = {
        "axis": cfg.sweep_axis,
        "best_value": cfg.sweep_values[best_idx],
        "best_metric": metric_names[0],
        "best_metric_value": headline[best_idx],
        "config_digest": cfg.digest(),
    }
    with open(cfg.output_dir / "sweep_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"best {cfg.sweep_axis}={format_float(cfg.sweep_values[best_idx])} "
        f"{metric_names[0]}={format_float(headline[best_idx])}"
    )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        reports.append((doc.get("label", doc["config_digest"]), MetricsReport.from_dict(doc)))
    tasks = {r.task for _, r in reports}
    if len(tasks) > 1:
        print(f"error: mixed-task reports: {sorted(tasks)}", file=sys.stderr)
        return EXIT_VALIDATION

    metric_names = [name for name, _ in _sweep_metrics(reports[0][1])]
    rows = [
        [label, r.task] + [format_float(getattr(r, m)) for m in metric_names] + [r.config_digest]
        for label, r in reports
    ]
    rows.sort(key=lambda row: (-float(row[2]), row[-1]))
    header = ["method", "task"] + metric_names + ["config_digest"]

    widths = [max(len(str(x)) for x in [h] + [row[i] for row in rows]) for i, h in enumerate(header)]
    out = io.StringIO()
    out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    for row in rows:
        out.write("  ".join(str(x).ljust(w) for x, w in zip(row, widths)).rstrip() + "\n")
    print(out.getvalue(), end="")
    if args.output:
        _write_csv(Path(args.output), header, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affuse",
        description="Multimodal late-fusion engine for affect prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a feature pack against every format invariant")
    p.add_argument("pack")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train the configured task's models")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run the task pipeline and write predictions + report")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-m", "--models", help="model directory (default: config output_dir)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="evaluate one hyperparameter axis, models trained once")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="consolidate report JSONs into a comparison table")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--output", help="also write the table as CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PackError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
