"""Post-processing operators over frame-wise prediction tracks.

Everything here is a pure function over immutable arrays: box smoothing,
convex blending of per-modality tracks, confidence-threshold filtering
against a frozen pretrained score track, and the two video-level pooling
operators (STAT and mean).  All operators preserve the probability simplex
exactly where the math says they should (convex combinations of simplex
points stay on the simplex).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-5
WEIGHT_TOL = 1e-9


@dataclass
class ProbTrack:
    """T x C track of per-frame class posterior estimates for one video."""

    video_id: str
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"track {self.video_id}: expected 2-D data, got {self.data.shape}")


@dataclass(frozen=True)
class SmoothSpec:
    """Box-smoothing kernel size; k=1 is the identity."""

    k: int = 1

    def __post_init__(self) -> None:
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"kernel size must be an odd positive integer, got {self.k}")


@dataclass(frozen=True)
class FilterSpec:
    """Confidence threshold for overriding fused predictions with pretrained ones."""

    t: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"filter threshold must lie in [0, 1], got {self.t}")


@dataclass(frozen=True)
class BlendSpec:
    """Convex blending weights over n tracks (two-track case: (w, 1-w))."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if (w < 0).any():
            raise ValueError(f"weights must be non-negative, got {self.weights}")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 within {WEIGHT_TOL}, got sum {w.sum()!r}")

    @classmethod
    def two(cls, w: float) -> "BlendSpec":
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"two-track weight must lie in [0, 1], got {w}")
        return cls(weights=(float(w), 1.0 - float(w)))


def smooth(track: ProbTrack, spec: SmoothSpec) -> ProbTrack:
    """Replace each row with the unweighted mean over a centered window of k rows.

    Windows shrink at the track boundaries (the mean renormalizes), so the
    output length equals the input length and simplex rows stay simplex.
    """
    k = spec.k
    if k == 1:
        return ProbTrack(track.video_id, track.data.copy())
    data = track.data
    t = data.shape[0]
    half = (k - 1) // 2
    csum = np.vstack([np.zeros((1, data.shape[1])), np.cumsum(data, axis=0)])
    idx = np.arange(t)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, t - 1)
    out = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)[:, None]
    return ProbTrack(track.video_id, out)


def blend2(track_a: ProbTrack, track_b: ProbTrack, w: float) -> ProbTrack:
    """Two-track convex blend ``w * a + (1 - w) * b``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"blend weight must lie in [0, 1], got {w}")
    if track_a.data.shape != track_b.data.shape:
        raise ValueError(
            f"shape mismatch: {track_a.data.shape} vs {track_b.data.shape}"
        )
    return ProbTrack(track_a.video_id, w * track_a.data + (1.0 - w) * track_b.data)


def blend_n(tracks: list[ProbTrack], weights) -> ProbTrack:
    """Convex combination of n equal-shape tracks; uniform weights = plain averaging."""
    if not tracks:
        raise ValueError("blend_n needs at least one track")
    spec = weights if isinstance(weights, BlendSpec) else BlendSpec(tuple(weights))
    if len(spec.weights) != len(tracks):
        raise ValueError(f"{len(spec.weights)} weights for {len(tracks)} tracks")
    shape = tracks[0].data.shape
    for tr in tracks[1:]:
        if tr.data.shape != shape:
            raise ValueError(f"shape mismatch: {tr.data.shape} vs {shape}")
    out = np.zeros(shape, dtype=np.float64)
    for wgt, tr in zip(spec.weights, tracks):
        out += wgt * tr.data
    return ProbTrack(tracks[0].video_id, out)


def filter_select(
    pretrained: ProbTrack, fused: ProbTrack, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame label selection between a frozen score track and the fused track.

    Frames where the pretrained track's maximum probability strictly exceeds
    ``t`` take the pretrained argmax; all others take the fused argmax.
    Returns ``(labels, source_mask)`` where ``source_mask[i]`` is True when
    frame i came from the pretrained track.  Argmax ties break to the lowest
    class index.
    """
    if pretrained.data.shape != fused.data.shape:
        raise ValueError(
            f"shape mismatch: {pretrained.data.shape} vs {fused.data.shape}"
        )
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"filter threshold must lie in [0, 1], got {t}")
    source_mask = pretrained.data.max(axis=1) > t
    labels = np.where(
        source_mask,
        np.argmax(pretrained.data, axis=1),
        np.argmax(fused.data, axis=1),
    )
    return labels.astype(np.int64), source_mask


def stat_aggregate(data: np.ndarray) -> np.ndarray:
    """Video-level STAT descriptor: per-column (mean, std, min, max), concatenated.

    Standard deviation is the population one (divide by T).  A T x D track
    yields a 4*D vector ordered mean_1..D, std_1..D, min_1..D, max_1..D.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"expected non-empty T x D input, got shape {data.shape}")
    return np.concatenate(
        [data.mean(axis=0), data.std(axis=0), data.min(axis=0), data.max(axis=0)]
    )


def mean_aggregate(data: np.ndarray) -> np.ndarray:
    """Video-level descriptor: per-column arithmetic mean of a T x D track."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"expected non-empty T x D input, got shape {data.shape}")
    return data.mean(axis=0)
