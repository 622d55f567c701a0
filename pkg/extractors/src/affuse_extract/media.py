"""Raw media readers: video frames via OpenCV, audio via stdlib wave."""

from __future__ import annotations

import wave
from pathlib import Path

import cv2
import numpy as np


class MediaError(Exception):
    """Input media unreadable or structurally unusable."""


def read_video_frames(path: Path | str) -> np.ndarray:
    """Decode a video file into a (T, H, W, 3) uint8 BGR frame stack.

    ``.npy`` stacks with the same shape are accepted directly, so callers
    can feed pre-cropped face sequences without re-encoding them.
    """
    path = Path(path)
    if not path.is_file():
        raise MediaError(f"video file not found: {path}")
    if path.suffix == ".npy":
        frames = np.load(path)
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise MediaError(f"{path}: expected (T, H, W, 3) array, got {frames.shape}")
        return frames.astype(np.uint8)
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise MediaError(f"cannot open video: {path}")
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(frame)
    cap.release()
    if not frames:
        raise MediaError(f"no decodable frames in {path}")
    return np.stack(frames)


def read_wav(path: Path | str) -> tuple[np.ndarray, int]:
    """Read a PCM wav file as (mono float64 samples in [-1, 1], sample rate)."""
    path = Path(path)
    if not path.is_file():
        raise MediaError(f"audio file not found: {path}")
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise MediaError(f"cannot read wav {path}: {exc}") from exc
    if width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 1:
        samples = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 4:
        samples = np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        raise MediaError(f"{path}: unsupported sample width {width}")
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    if samples.size == 0:
        raise MediaError(f"{path}: empty audio stream")
    return samples, rate
