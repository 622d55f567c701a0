"""Task-level orchestration: EXPR, EMI and AH runs plus their evaluation metrics.

Per-video computation is independent; metric reduction is an ordered fold
over video ids sorted lexicographically, so parallel and serial execution
produce identical reports.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .featpack import FeaturePack, FeatureSequence, resample_linear
from .neural import (
    LogRegModel,
    LossSpec,
    MlpModel,
    TrainConfig,
    emotion_weights_from_counts,
    logreg_predict,
    mlp_forward,
    mlp_init,
    train,
)
from .temporal import (
    FilterSpec,
    ProbTrack,
    SmoothSpec,
    blend_n,
    filter_select,
    mean_aggregate,
    smooth,
    stat_aggregate,
)

FUSION_MODES = ("late_blend", "early_concat", "gated")


def derive_seed(root_seed: int, component: str) -> int:
    """Expand one root seed into per-component seeds: root XOR sha256(name)."""
    h = int.from_bytes(hashlib.sha256(component.encode("utf-8")).digest()[:4], "little")
    return (int(root_seed) ^ h) & 0x7FFFFFFF


def config_digest(payload: Any) -> str:
    """Short stable digest of a JSON-serializable config payload."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass
class FusionSpec:
    """Hyperparameter bundle for one pipeline run.

    ``modalities`` lists pack modality names in blending (or concatenation)
    order; the first entry drives the frame clock for frame-level tasks.
    ``modality_weights`` default to uniform.  ``pretrained_modality`` names
    the probabilities-kind track used by confidence filtering, and ``gate``
    / ``gate_modality`` configure the video-level logistic gate (AH only).
    """

    modalities: list[str]
    mode: str = "late_blend"
    modality_weights: list[float] | None = None
    smooth: SmoothSpec = field(default_factory=SmoothSpec)
    filter: FilterSpec | None = None
    pretrained_modality: str | None = None
    gate: LogRegModel | None = None
    gate_modality: str | None = None
    descriptor_overrides: dict[str, str] | None = None

    def __post_init__(self) -> None:
        if self.mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}; expected one of {FUSION_MODES}")
        if not self.modalities:
            raise ValueError("at least one modality required")
        if self.filter is not None and self.pretrained_modality is None:
            raise ValueError("filtering requires pretrained_modality")
        if self.descriptor_overrides:
            bad = {v for v in self.descriptor_overrides.values()} - {"mean", "stat"}
            if bad:
                raise ValueError(f"descriptor overrides must be 'mean' or 'stat', got {bad}")

    def weights(self) -> np.ndarray:
        n = len(self.modalities)
        if self.modality_weights is None:
            return np.full(n, 1.0 / n)
        w = np.asarray(self.modality_weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValueError(f"{w.size} weights for {n} modalities")
        return w

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "modalities": list(self.modalities),
            "modality_weights": None
            if self.modality_weights is None
            else [float(x) for x in self.modality_weights],
            "smooth_k": self.smooth.k,
            "filter_t": None if self.filter is None else self.filter.t,
            "pretrained_modality": self.pretrained_modality,
            "gate_modality": self.gate_modality,
            "gated": self.gate is not None,
            "descriptor_overrides": self.descriptor_overrides,
        }


@dataclass
class FramePredictions:
    """Per-frame predicted labels for one video, with their provenance."""

    video_id: str
    labels: np.ndarray
    source: np.ndarray | None = None  # e.g. "pretrained"/"fused"/"gated" per frame


@dataclass
class MetricsReport:
    """Evaluation output; only the metrics relevant to the task are set."""

    task: str
    config_digest: str
    macro_f1: float | None = None
    accuracy: float | None = None
    per_emotion_pcc: list[float | None] | None = None
    mean_pcc: float | None = None
    binary_f1: float | None = None
    per_video: dict[str, dict] = field(default_factory=dict)

    def headline_metric(self) -> tuple[str, float]:
        if self.task == "EXPR":
            return "macro_f1", self.macro_f1
        if self.task == "EMI":
            return "mean_pcc", self.mean_pcc
        return "binary_f1", self.binary_f1

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"task": self.task, "config_digest": self.config_digest}
        for name in ("macro_f1", "accuracy", "mean_pcc", "binary_f1"):
            value = getattr(self, name)
            if value is not None:
                out[name] = float(value)
        if self.per_emotion_pcc is not None:
            out["per_emotion_pcc"] = [
                None if v is None or not np.isfinite(v) else float(v)
                for v in self.per_emotion_pcc
            ]
        out["per_video"] = self.per_video
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            task=d["task"],
            config_digest=d["config_digest"],
            macro_f1=d.get("macro_f1"),
            accuracy=d.get("accuracy"),
            per_emotion_pcc=d.get("per_emotion_pcc"),
            mean_pcc=d.get("mean_pcc"),
            binary_f1=d.get("binary_f1"),
            per_video=d.get("per_video", {}),
        )


# --- metrics ------------------------------------------------------------

def metric_macro_f1(preds: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    """Unweighted mean over classes of per-class F1 = 2TP / (2TP + FP + FN).

    Classes absent from both predictions and labels contribute F1 = 0.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.size == 0:
        raise ValueError("empty input")
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    if preds.min() < 0 or preds.max() >= n_classes or labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"values must lie in [0, {n_classes})")
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        tp = np.count_nonzero((preds == c) & (labels == c))
        fp = np.count_nonzero((preds == c) & (labels != c))
        fn = np.count_nonzero((preds != c) & (labels == c))
        denom = 2 * tp + fp + fn
        f1[c] = 2.0 * tp / denom if denom else 0.0
    return float(f1.mean())


def metric_accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of exact matches."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.size == 0:
        raise ValueError("empty input")
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    return float((preds == labels).mean())


def metric_pearson(preds: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-column sample Pearson correlation and its unweighted mean.

    Columns with constant targets (or constant predictions) have undefined
    correlation; they are reported as NaN, excluded from the mean, and
    flagged with a warning so evaluation never silently deflates.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 2:
        raise ValueError(f"shape mismatch: preds {preds.shape} vs targets {targets.shape}")
    if preds.shape[0] < 2:
        raise ValueError(f"Pearson correlation needs N >= 2, got {preds.shape[0]}")
    pc = preds - preds.mean(axis=0)
    tc = targets - targets.mean(axis=0)
    sp = (pc * pc).sum(axis=0)
    st = (tc * tc).sum(axis=0)
    degenerate = (np.ptp(preds, axis=0) == 0) | (np.ptp(targets, axis=0) == 0)
    degenerate |= (sp == 0) | (st == 0)
    denom = np.sqrt(np.where(degenerate, 1.0, sp * st))
    rho = np.where(degenerate, np.nan, (pc * tc).sum(axis=0) / denom)
    if degenerate.any():
        warnings.warn(
            f"Pearson undefined for columns {np.flatnonzero(degenerate).tolist()} "
            "(constant within the evaluation set); excluded from the mean",
            stacklevel=2,
        )
    defined = rho[~degenerate]
    mean = float(defined.mean()) if defined.size else float("nan")
    return rho, mean


def metric_binary_f1(preds: np.ndarray, labels: np.ndarray) -> float:
    """F1 of the positive class; 0 when precision + recall degenerate to 0."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.size == 0:
        raise ValueError("empty input")
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    tp = np.count_nonzero((preds == 1) & (labels == 1))
    fp = np.count_nonzero((preds == 1) & (labels == 0))
    fn = np.count_nonzero((preds == 0) & (labels == 1))
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


# --- shared plumbing ----------------------------------------------------

def early_fuse(sequences: list[FeatureSequence]) -> FeatureSequence:
    """Column-wise concatenation of frame-aligned tracks, in the given order."""
    if not sequences:
        raise ValueError("early_fuse needs at least one sequence")
    t = sequences[0].data.shape[0]
    for seq in sequences[1:]:
        if seq.data.shape[0] != t:
            raise ValueError(
                f"length mismatch: {seq.modality} has {seq.data.shape[0]} rows, expected {t} "
                "(align tracks to the frame clock first)"
            )
    return FeatureSequence(
        video_id=sequences[0].video_id,
        modality="+".join(s.modality for s in sequences),
        data=np.concatenate([s.data for s in sequences], axis=1),
    )


def _prob_track(model: MlpModel, data: np.ndarray, video_id: str) -> ProbTrack:
    """Run an MLP over a track; sigmoid C=1 heads expand to (1-p, p) columns."""
    out, _ = mlp_forward(model, data)
    if model.head == "sigmoid" and model.output_dim == 1:
        p = out[:, 0]
        out = np.column_stack([1.0 - p, p])
    return ProbTrack(video_id, out)


def _align_track(track: ProbTrack, target_len: int) -> ProbTrack:
    if track.data.shape[0] == target_len:
        return track
    return ProbTrack(track.video_id, resample_linear(track.data, target_len))


def _pretrained_track(pack: FeaturePack, video_id: str, spec: FusionSpec, t: int) -> ProbTrack:
    decl = pack.manifest.modality(spec.pretrained_modality)
    if decl.kind != "probabilities":
        raise ValueError(
            f"pretrained modality {decl.name!r} must have kind 'probabilities', got {decl.kind!r}"
        )
    seq = pack.load(video_id, decl.name)
    return _align_track(ProbTrack(video_id, seq.data), t)


def _require_task(pack: FeaturePack, task: str) -> None:
    if pack.manifest.task != task:
        raise ValueError(f"pack task is {pack.manifest.task}, expected {task}")


def _frame_labels(pack: FeaturePack, video_id: str) -> np.ndarray:
    track = pack.load_labels(video_id)
    if track is None or track.granularity != "frame":
        raise ValueError(f"video {video_id}: frame-granularity labels required")
    return track.payload


def collect_frames(
    pack: FeaturePack, modality: str, videos: list[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-frame features and labels across videos for training.

    Tracks running at a different rate than the frame clock are aligned
    with the same linear interpolation the prediction path uses.
    """
    vids = sorted(videos) if videos is not None else sorted(pack.video_ids())
    xs, ys = [], []
    for vid in vids:
        frames = next(v.frames for v in pack.manifest.videos if v.id == vid)
        data = pack.load(vid, modality).data
        if data.shape[0] != frames:
            data = resample_linear(data, frames)
        xs.append(data)
        ys.append(_frame_labels(pack, vid))
    return np.concatenate(xs), np.concatenate(ys)


def collect_gate_data(
    pack: FeaturePack, text_modality: str, videos: list[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Mean text features per video and the video-level positive flag
    (1 when any frame of the video is labeled positive)."""
    vids = sorted(videos) if videos is not None else sorted(pack.video_ids())
    xs, ys = [], []
    for vid in vids:
        xs.append(mean_aggregate(pack.load(vid, text_modality).data))
        ys.append(int(_frame_labels(pack, vid).max() > 0))
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


# --- EXPR ----------------------------------------------------------------

def run_expr(
    pack: FeaturePack,
    spec: FusionSpec,
    face_model: MlpModel,
    audio_model: MlpModel | None = None,
    videos: list[str] | None = None,
) -> tuple[list[FramePredictions], MetricsReport]:
    """Frame-wise expression recognition: per-modality MLPs, blending,
    smoothing, then optional confidence filtering against a frozen score track.

    ``spec.modalities[0]`` is the face (frame-clock) modality; an optional
    second entry names the audio modality, whose prediction track is
    interpolated onto the frame clock when rates differ.  ``videos`` limits
    evaluation to a subset (e.g. a held-out split).
    """
    _require_task(pack, "EXPR")
    face_mod = spec.modalities[0]
    audio_mod = spec.modalities[1] if len(spec.modalities) > 1 else None
    if audio_mod is not None and audio_model is None:
        raise ValueError(f"modality {audio_mod!r} listed but no audio model supplied")
    weights = spec.weights()

    predictions: list[FramePredictions] = []
    all_preds: list[np.ndarray] = []
    all_labels: list[np.ndarray] = []
    per_video: dict[str, dict] = {}

    for vid in sorted(videos) if videos is not None else sorted(pack.video_ids()):
        face_seq = pack.load(vid, face_mod)
        t = face_seq.data.shape[0]
        tracks = [_prob_track(face_model, face_seq.data, vid)]
        if audio_mod is not None:
            audio_seq = pack.load(vid, audio_mod)
            tracks.append(_align_track(_prob_track(audio_model, audio_seq.data, vid), t))
        fused = blend_n(tracks, weights) if len(tracks) > 1 else tracks[0]
        smoothed = smooth(fused, spec.smooth)

        if spec.filter is not None:
            pre = _pretrained_track(pack, vid, spec, t)
            labels, mask = filter_select(pre, smoothed, spec.filter.t)
            source = np.where(mask, "pretrained", "fused")
        else:
            labels = np.argmax(smoothed.data, axis=1).astype(np.int64)
            source = None

        truth = _frame_labels(pack, vid)
        predictions.append(FramePredictions(vid, labels, source))
        all_preds.append(labels)
        all_labels.append(truth)
        per_video[vid] = {
            "frames": int(t),
            "accuracy": metric_accuracy(labels, truth),
        }

    preds = np.concatenate(all_preds)
    truths = np.concatenate(all_labels)
    digest = config_digest({"task": "EXPR", "spec": spec.to_dict()})
    report = MetricsReport(
        task="EXPR",
        config_digest=digest,
        macro_f1=metric_macro_f1(preds, truths, face_model.output_dim),
        accuracy=metric_accuracy(preds, truths),
        per_video=per_video,
    )
    return predictions, report


# --- EMI -----------------------------------------------------------------

def descriptor_rule(spec: FusionSpec, modality: str, kind: str) -> str:
    """STAT pooling for score-like tracks, mean for embeddings, unless overridden."""
    if spec.descriptor_overrides and modality in spec.descriptor_overrides:
        return spec.descriptor_overrides[modality]
    return "stat" if kind in ("logits", "probabilities") else "mean"


def video_descriptor(pack: FeaturePack, video_id: str, modality: str, rule: str) -> np.ndarray:
    seq = pack.load(video_id, modality)
    return stat_aggregate(seq.data) if rule == "stat" else mean_aggregate(seq.data)


def emi_targets(pack: FeaturePack, videos: list[str]) -> np.ndarray:
    rows = []
    for vid in videos:
        track = pack.load_labels(vid)
        if track is None or track.granularity != "video":
            raise ValueError(f"video {vid}: video-granularity intensity labels required")
        rows.append(track.payload)
    return np.stack(rows)


def _emi_descriptor_matrix(
    pack: FeaturePack, spec: FusionSpec, modality: str, videos: list[str]
) -> np.ndarray:
    decl = pack.manifest.modality(modality)
    rule = descriptor_rule(spec, modality, decl.kind)
    return np.stack([video_descriptor(pack, v, modality, rule) for v in videos])


def train_emi_models(
    pack: FeaturePack,
    spec: FusionSpec,
    cfg: TrainConfig,
    train_videos: list[str] | None = None,
    hidden_dim: int = 128,
) -> dict[str, MlpModel] | MlpModel:
    """Train the EMI regressors: one sigmoid-head MLP per modality (late
    fusion) or a single MLP over concatenated descriptors (early fusion).

    The negative weighted-Pearson objective uses emotion weights inverse to
    the per-emotion count of training videos with nonzero intensity.
    """
    _require_task(pack, "EMI")
    train_vids = sorted(train_videos) if train_videos is not None else sorted(pack.video_ids())
    if len(train_vids) < 2:
        raise ValueError("EMI needs at least 2 training videos")
    y_train = emi_targets(pack, train_vids)
    if (np.ptp(y_train, axis=0) == 0).any():
        bad = np.flatnonzero(np.ptp(y_train, axis=0) == 0).tolist()
        raise ValueError(f"all-constant target column(s) {bad} in the training split")
    counts = (y_train > 0).sum(axis=0)
    loss = LossSpec("neg_weighted_pearson", class_weights=emotion_weights_from_counts(counts))
    n_emotions = y_train.shape[1]

    if spec.mode == "early_concat":
        x_train = np.concatenate(
            [_emi_descriptor_matrix(pack, spec, m, train_vids) for m in spec.modalities],
            axis=1,
        )
        model = mlp_init(
            x_train.shape[1], hidden_dim, n_emotions, "sigmoid",
            seed=derive_seed(cfg.seed, "emi:early"),
        )
        model, _ = train(model, x_train, y_train, loss, cfg)
        return model

    models: dict[str, MlpModel] = {}
    for name in spec.modalities:
        x_train = _emi_descriptor_matrix(pack, spec, name, train_vids)
        model = mlp_init(
            x_train.shape[1], hidden_dim, n_emotions, "sigmoid",
            seed=derive_seed(cfg.seed, f"emi:{name}"),
        )
        models[name], _ = train(model, x_train, y_train, loss, cfg)
    return models


def predict_emi(
    pack: FeaturePack,
    spec: FusionSpec,
    models: dict[str, MlpModel] | MlpModel,
    eval_videos: list[str] | None = None,
) -> tuple[dict[str, np.ndarray], MetricsReport]:
    """Fuse per-modality EMI predictions and report Pearson correlations."""
    _require_task(pack, "EMI")
    eval_vids = sorted(eval_videos) if eval_videos is not None else sorted(pack.video_ids())
    if len(eval_vids) < 2:
        raise ValueError("EMI needs at least 2 evaluation videos")
    y_eval = emi_targets(pack, eval_vids)

    if spec.mode == "early_concat":
        if not isinstance(models, MlpModel):
            raise ValueError("early_concat expects a single fused-input model")
        x_eval = np.concatenate(
            [_emi_descriptor_matrix(pack, spec, m, eval_vids) for m in spec.modalities],
            axis=1,
        )
        preds, _ = mlp_forward(models, x_eval)
    else:
        if not isinstance(models, dict):
            raise ValueError(f"{spec.mode} expects one model per modality")
        w = spec.weights()
        preds = np.zeros_like(y_eval, dtype=np.float64)
        for wgt, name in zip(w, spec.modalities):
            out, _ = mlp_forward(models[name], _emi_descriptor_matrix(pack, spec, name, eval_vids))
            preds += wgt * out

    per_emotion, mean_pcc = metric_pearson(preds, y_eval)
    digest = config_digest({"task": "EMI", "spec": spec.to_dict()})
    report = MetricsReport(
        task="EMI",
        config_digest=digest,
        per_emotion_pcc=[None if not np.isfinite(r) else float(r) for r in per_emotion],
        mean_pcc=mean_pcc,
        per_video={
            v: {"pred": [round(float(x), 6) for x in preds[i]]}
            for i, v in enumerate(eval_vids)
        },
    )
    return {v: preds[i] for i, v in enumerate(eval_vids)}, report


def run_emi(
    pack: FeaturePack,
    spec: FusionSpec,
    cfg: TrainConfig,
    train_videos: list[str] | None = None,
    eval_videos: list[str] | None = None,
    hidden_dim: int = 128,
) -> tuple[dict[str, np.ndarray], MetricsReport]:
    """Emotional-mimicry-intensity estimation end to end.

    Builds one video-level descriptor per modality (STAT of score tracks,
    mean of embedding tracks), trains against the negative weighted-Pearson
    objective, fuses, and reports per-emotion and mean correlation.
    Defaults to training and evaluating on all pack videos; pass explicit
    splits to hold out.
    """
    models = train_emi_models(pack, spec, cfg, train_videos, hidden_dim)
    return predict_emi(pack, spec, models, eval_videos)


# --- AH ------------------------------------------------------------------

def run_ah(
    pack: FeaturePack,
    spec: FusionSpec,
    models: dict[str, MlpModel] | MlpModel,
    videos: list[str] | None = None,
) -> tuple[list[FramePredictions], MetricsReport]:
    """Frame-wise ambivalence/hesitancy detection.

    Early mode concatenates frame-aligned features into a single binary MLP;
    late mode blends per-modality probability tracks.  Gated mode adds a
    video-level logistic-regression gate over mean text features: videos the
    gate rejects have every frame forced to label 0.  Both paths smooth the
    fused track and can filter against a pretrained binary score track.
    """
    _require_task(pack, "AH")
    if spec.mode == "early_concat":
        if not isinstance(models, MlpModel):
            raise ValueError("early_concat expects a single fused-input model")
    else:
        if not isinstance(models, dict):
            raise ValueError(f"{spec.mode} expects one model per modality")
        missing = [m for m in spec.modalities if m not in models]
        if missing:
            raise ValueError(f"no model supplied for modalities {missing}")
    gate = spec.gate if spec.mode == "gated" else None
    if spec.mode == "gated":
        if gate is None:
            raise ValueError("gated mode requires spec.gate")
        if spec.gate_modality is None:
            raise ValueError("gated mode requires gate_modality (text features)")
        declared = [m.name for m in pack.manifest.modalities]
        if spec.gate_modality not in declared:
            raise ValueError(
                f"gate modality {spec.gate_modality!r} not in pack modalities {declared}"
            )
    weights = spec.weights()

    predictions: list[FramePredictions] = []
    all_preds: list[np.ndarray] = []
    all_labels: list[np.ndarray] = []
    per_video: dict[str, dict] = {}

    for vid in sorted(videos) if videos is not None else sorted(pack.video_ids()):
        frames = next(v.frames for v in pack.manifest.videos if v.id == vid)
        aligned = {
            name: resample_linear(pack.load(vid, name).data, frames)
            for name in spec.modalities
        }
        if spec.mode == "early_concat":
            fused_features = np.concatenate([aligned[m] for m in spec.modalities], axis=1)
            fused = _prob_track(models, fused_features, vid)
        else:
            tracks = [_prob_track(models[m], aligned[m], vid) for m in spec.modalities]
            fused = blend_n(tracks, weights) if len(tracks) > 1 else tracks[0]
        smoothed = smooth(fused, spec.smooth)

        if spec.filter is not None:
            pre = _pretrained_track(pack, vid, spec, frames)
            labels, mask = filter_select(pre, smoothed, spec.filter.t)
            source = np.where(mask, "pretrained", "fused")
        else:
            labels = np.argmax(smoothed.data, axis=1).astype(np.int64)
            source = np.full(frames, "fused")

        if gate is not None:
            text_mean = mean_aggregate(pack.load(vid, spec.gate_modality).data)
            _, accept = logreg_predict(gate, text_mean[None, :])
            if not bool(accept[0]):
                labels = np.zeros(frames, dtype=np.int64)
                source = np.full(frames, "gated")

        truth = _frame_labels(pack, vid)
        predictions.append(FramePredictions(vid, labels, source))
        all_preds.append(labels)
        all_labels.append(truth)
        per_video[vid] = {
            "frames": int(frames),
            "accuracy": metric_accuracy(labels, truth),
            "gated_out": bool(source[0] == "gated") if source is not None else False,
        }

    preds = np.concatenate(all_preds)
    truths = np.concatenate(all_labels)
    digest = config_digest({"task": "AH", "spec": spec.to_dict()})
    report = MetricsReport(
        task="AH",
        config_digest=digest,
        binary_f1=metric_binary_f1(preds, truths),
        per_video=per_video,
    )
    return predictions, report
