"""Synthetic feature-pack generators with controlled signal structure.

Real affect corpora are gated competition data, so end-to-end behavior is
exercised on constructed packs whose Bayes-optimal behavior is known:

* :func:`build_expr_cluster_pack` -- per-modality Gaussian class clusters
  with independent noise; late fusion of independent views provably beats
  either view alone.
* :func:`build_emi_linear_pack` -- six intensities are a fixed linear map
  of the video descriptor plus noise, so a trained regressor can approach
  correlation 1.
* :func:`build_ah_gating_pack` -- frame events are visible to the face
  track in every video, but count as positive only in videos flagged by a
  hidden variable observable through text features; a text-trained gate
  therefore removes exactly the false positives.

All generators are fully seeded and write normal packs via
:func:`affuse.featpack.write_pack`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featpack import (
    FeatureSequence,
    LabelTrack,
    Manifest,
    ModalityDecl,
    VideoDecl,
    write_pack,
)

# Center scale for 8 one-hot Gaussian clusters with unit noise; calibrated
# so nearest-centroid (Bayes) accuracy lands near 0.70 per modality.
EXPR_CENTER_SCALE_70 = 2.0


@dataclass
class SynthInfo:
    video_ids: list[str]
    train_ids: list[str]
    eval_ids: list[str]


def _video_ids(n: int) -> list[str]:
    return [f"vid{i:04d}" for i in range(n)]


def _split(ids: list[str], train_fraction: float) -> tuple[list[str], list[str]]:
    cut = max(1, int(round(len(ids) * train_fraction)))
    cut = min(cut, len(ids) - 1) if len(ids) > 1 else 1
    return ids[:cut], ids[cut:]


def _markov_labels(rng: np.random.Generator, t: int, n_classes: int, stay: float) -> np.ndarray:
    labels = np.empty(t, dtype=np.int64)
    labels[0] = rng.integers(n_classes)
    for i in range(1, t):
        if rng.random() < stay:
            labels[i] = labels[i - 1]
        else:
            labels[i] = rng.integers(n_classes)
    return labels


def build_expr_cluster_pack(
    root: Path | str,
    n_videos: int = 50,
    frames: int = 200,
    n_classes: int = 8,
    center_scale: float = EXPR_CENTER_SCALE_70,
    noise: tuple[float, float] = (1.0, 1.0),
    label_process: str = "iid",
    stay_prob: float = 0.95,
    include_pretrained: bool = False,
    pretrained_temperature: float = 2.0,
    audio_informative: bool = True,
    train_fraction: float = 0.6,
    seed: int = 0,
) -> SynthInfo:
    """Two-modality EXPR pack: class c maps to one-hot center ``scale * e_c``
    per modality, observed under independent Gaussian noise.

    ``label_process`` is "iid" (uniform per frame) or "markov"
    (stay-probability ``stay_prob``, so labels persist in runs).  With
    ``include_pretrained`` a third probabilities-kind modality carries
    softmaxed noisy scores standing in for a frozen pretrained classifier.
    ``audio_informative=False`` replaces the audio track with pure noise.
    """
    rng = np.random.default_rng(seed)
    ids = _video_ids(n_videos)
    modalities = [
        ModalityDecl("face", n_classes, "embedding", "synth-cluster-face"),
        ModalityDecl("audio", n_classes, "embedding", "synth-cluster-audio"),
    ]
    if include_pretrained:
        modalities.append(
            ModalityDecl("face_scores", n_classes, "probabilities", "synth-pretrained")
        )

    sequences: list[FeatureSequence] = []
    labels: list[LabelTrack] = []
    eye = np.eye(n_classes)
    for vid in ids:
        if label_process == "markov":
            y = _markov_labels(rng, frames, n_classes, stay_prob)
        else:
            y = rng.integers(n_classes, size=frames)
        centers = center_scale * eye[y]
        face = centers + noise[0] * rng.standard_normal((frames, n_classes))
        audio_signal = centers if audio_informative else 0.0
        audio = audio_signal + noise[1] * rng.standard_normal((frames, n_classes))
        sequences.append(FeatureSequence(vid, "face", face.astype(np.float32)))
        sequences.append(FeatureSequence(vid, "audio", audio.astype(np.float32)))
        if include_pretrained:
            scores = centers + rng.standard_normal((frames, n_classes))
            z = pretrained_temperature * scores
            z -= z.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            sequences.append(FeatureSequence(vid, "face_scores", p.astype(np.float32)))
        labels.append(LabelTrack(vid, "frame", y))

    manifest = Manifest(
        task="EXPR",
        modalities=modalities,
        videos=[VideoDecl(v, frames) for v in ids],
    )
    write_pack(root, manifest, sequences, labels)
    train_ids, eval_ids = _split(ids, train_fraction)
    return SynthInfo(ids, train_ids, eval_ids)


def build_emi_linear_pack(
    root: Path | str,
    n_videos: int = 240,
    frames: int = 40,
    dim: int = 6,
    n_emotions: int = 6,
    frame_noise: float = 0.3,
    target_noise: float = 0.02,
    train_fraction: float = 0.75,
    seed: int = 0,
) -> SynthInfo:
    """EMI pack whose intensities are a fixed linear map of the per-video
    latent (recoverable through the descriptor) plus small noise."""
    rng = np.random.default_rng(seed)
    ids = _video_ids(n_videos)
    mix = rng.standard_normal((n_emotions, dim)) / np.sqrt(dim)

    sequences: list[FeatureSequence] = []
    labels: list[LabelTrack] = []
    for vid in ids:
        latent = rng.standard_normal(dim)
        track = latent + frame_noise * rng.standard_normal((frames, dim))
        y = 0.5 + 0.18 * (mix @ latent) + target_noise * rng.standard_normal(n_emotions)
        sequences.append(FeatureSequence(vid, "scores", track.astype(np.float32)))
        labels.append(LabelTrack(vid, "video", np.clip(y, 0.02, 0.98)))

    manifest = Manifest(
        task="EMI",
        modalities=[ModalityDecl("scores", dim, "logits", "synth-linear-map")],
        videos=[VideoDecl(v, frames) for v in ids],
    )
    write_pack(root, manifest, sequences, labels)
    train_ids, eval_ids = _split(ids, train_fraction)
    return SynthInfo(ids, train_ids, eval_ids)


def build_ah_gating_pack(
    root: Path | str,
    n_videos: int = 60,
    frames: int = 150,
    face_dim: int = 6,
    text_dim: int = 8,
    text_rows: int = 8,
    event_stay: float = 0.9,
    face_noise: float = 0.8,
    event_amplitude: float = 2.0,
    distractor_amplitude: float = 1.2,
    text_separation: float = 2.0,
    train_fraction: float = 0.5,
    seed: int = 0,
) -> SynthInfo:
    """AH pack with a hidden per-video flag observable only through text.

    Every video carries a Markov event process.  In flagged videos events
    are the positive frames and appear in the face track at full amplitude;
    unflagged videos have no positive frames but show the same events at
    ``distractor_amplitude``, so a per-frame face classifier inevitably
    fires on some of them.  A gate trained on mean text features (which
    separate flagged from unflagged videos) removes exactly those false
    positives.
    """
    rng = np.random.default_rng(seed)
    ids = _video_ids(n_videos)
    event_dir = rng.standard_normal(face_dim)
    event_dir /= np.linalg.norm(event_dir)
    text_dir = rng.standard_normal(text_dim)
    text_dir /= np.linalg.norm(text_dir)

    sequences: list[FeatureSequence] = []
    labels: list[LabelTrack] = []
    for i, vid in enumerate(ids):
        flagged = i % 2 == 0  # balanced hidden variable
        events = _markov_labels(rng, frames, 2, event_stay)
        y = events * int(flagged)
        amplitude = event_amplitude if flagged else distractor_amplitude
        face = (
            amplitude * events[:, None] * event_dir
            + face_noise * rng.standard_normal((frames, face_dim))
        )
        text = (
            text_separation * (1.0 if flagged else -1.0) * text_dir
            + rng.standard_normal((text_rows, text_dim))
        )
        sequences.append(FeatureSequence(vid, "face", face.astype(np.float32)))
        sequences.append(FeatureSequence(vid, "text", text.astype(np.float32)))
        labels.append(LabelTrack(vid, "frame", y))

    manifest = Manifest(
        task="AH",
        modalities=[
            ModalityDecl("face", face_dim, "embedding", "synth-ah-face"),
            ModalityDecl("text", text_dim, "embedding", "synth-ah-text"),
        ],
        videos=[VideoDecl(v, frames) for v in ids],
    )
    write_pack(root, manifest, sequences, labels)
    train_ids, eval_ids = _split(ids, train_fraction)
    return SynthInfo(ids, train_ids, eval_ids)
