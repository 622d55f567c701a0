"""Deterministic reference encoder backends.

Heavyweight pretrained networks cannot ship with this package, so each
encoder kind has a lightweight reference backend whose behavior is pinned
entirely by its identifier string: all projections are seeded from a hash
of that id, every operation is deterministic, and re-running an extraction
with the same id is byte-identical.  Real model backends can be added to
the same registries; the id recorded in the manifest's ``source_tag`` is
the version pin either way.

The ASR backend is an explicitly labeled mock: it segments speech-like
energy and emits deterministic pseudo-syllable transcripts derived from the
band spectrum, which keeps the text pathway (segmentation, transcript
audit, embedding) fully exercisable offline.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import cv2
import numpy as np


class EncoderError(Exception):
    """Unknown encoder id or encoder precondition failure."""


class SilentAudioError(EncoderError):
    """Audio carries no usable signal; tracks must not be fabricated."""


def _seed_from(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "little")


def _projection(tag: str, rows: int, cols: int) -> np.ndarray:
    rng = np.random.default_rng(_seed_from(tag))
    return (rng.standard_normal((rows, cols)) / np.sqrt(rows)).astype(np.float32)


def _softmax64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class FaceEncoder:
    """Frame encoder: grayscale thumbnail -> seeded projection.

    ``embed`` yields 1280-d per-frame embeddings; ``scores`` yields softmax
    probabilities over the 8 expression classes (simplex rows).
    """

    name: str = "ref-face-v1"
    patch: int = 32
    embed_dim: int = 1280
    n_classes: int = 8

    def _thumbnails(self, frames: np.ndarray) -> np.ndarray:
        flat = np.empty((frames.shape[0], self.patch * self.patch), dtype=np.float32)
        for i, frame in enumerate(frames):
            gray = cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY)
            small = cv2.resize(gray, (self.patch, self.patch), interpolation=cv2.INTER_AREA)
            flat[i] = small.reshape(-1).astype(np.float32) / 255.0
        return flat

    def embed(self, frames: np.ndarray) -> np.ndarray:
        flat = self._thumbnails(frames)
        proj = _projection(f"{self.name}:embed", flat.shape[1], self.embed_dim)
        return np.tanh(flat @ proj)

    def scores(self, frames: np.ndarray) -> np.ndarray:
        flat = self._thumbnails(frames)
        proj = _projection(f"{self.name}:scores", flat.shape[1], self.n_classes)
        logits = 4.0 * (flat @ proj)
        return _softmax64(logits).astype(np.float32)


@dataclass(frozen=True)
class AudioEncoder:
    """Windowed log-band spectral energies at a fixed native rate (50 Hz)."""

    name: str = "ref-audio-v1"
    dim: int = 64
    window_s: float = 0.025
    hop_s: float = 0.020
    silence_peak: float = 1e-4

    def embed(self, samples: np.ndarray, rate: int) -> np.ndarray:
        if np.abs(samples).max() < self.silence_peak:
            raise SilentAudioError("audio is silent; refusing to fabricate a track")
        win = max(2, int(round(self.window_s * rate)))
        hop = max(1, int(round(self.hop_s * rate)))
        if samples.size < win:
            raise SilentAudioError(
                f"audio too short for one {self.window_s * 1000:.0f} ms window"
            )
        n = 1 + (samples.size - win) // hop
        idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
        windows = samples[idx] * np.hanning(win)
        spectrum = np.abs(np.fft.rfft(windows, axis=1))
        # Pool rfft bins into `dim` bands; pad bins so the split is even.
        bins = spectrum.shape[1]
        pad = (-bins) % self.dim
        pooled = np.pad(spectrum, ((0, 0), (0, pad))).reshape(n, self.dim, -1).sum(axis=2)
        return np.log1p(pooled).astype(np.float32)


# Pseudo-syllables for the mock transcripts: deterministic and obviously
# synthetic, keyed by the dominant spectral band of each chunk.
_SYLLABLES = ("da", "po", "mi", "ke", "ra", "su", "lo", "ne")


@dataclass(frozen=True)
class MockAsr:
    """Energy-based segmenter + pseudo-syllable transcriber (mock backend)."""

    name: str = "mock-asr-v1"
    hop_s: float = 0.02
    rms_floor: float = 1e-3
    min_gap_s: float = 0.3
    min_segment_s: float = 0.2

    def segments(self, samples: np.ndarray, rate: int) -> list[tuple[float, float]]:
        hop = max(1, int(round(self.hop_s * rate)))
        n = samples.size // hop
        if n == 0:
            return []
        frames = samples[: n * hop].reshape(n, hop)
        rms = np.sqrt((frames**2).mean(axis=1))
        voiced = rms > self.rms_floor
        out: list[tuple[float, float]] = []
        start = None
        gap = 0
        max_gap = int(round(self.min_gap_s / self.hop_s))
        for i, v in enumerate(voiced):
            if v:
                if start is None:
                    start = i
                gap = 0
            elif start is not None:
                gap += 1
                if gap >= max_gap:
                    out.append((start * self.hop_s, (i - gap + 1) * self.hop_s))
                    start, gap = None, 0
        if start is not None:
            out.append((start * self.hop_s, n * self.hop_s))
        return [(a, b) for a, b in out if b - a >= self.min_segment_s]

    def transcribe(self, samples: np.ndarray, rate: int, segment: tuple[float, float]) -> str:
        lo = int(segment[0] * rate)
        hi = int(segment[1] * rate)
        chunk_len = max(1, int(0.1 * rate))
        words = []
        for c0 in range(lo, hi, chunk_len):
            chunk = samples[c0 : min(c0 + chunk_len, hi)]
            if chunk.size < 2:
                continue
            spectrum = np.abs(np.fft.rfft(chunk))
            freq = np.argmax(spectrum) * rate / chunk.size
            # log-frequency syllable bins: ~100 Hz doublings cover speech pitch
            band = int(np.log2(1.0 + freq / 100.0))
            words.append(_SYLLABLES[min(band, len(_SYLLABLES) - 1)])
        return "-".join(words) if words else ""


@dataclass(frozen=True)
class TextEncoder:
    """Character-trigram hashing embeddings, L2-normalized."""

    name: str = "ref-text-v1"
    dim: int = 128

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        padded = f"^^{text.lower()}$$"
        for i in range(len(padded) - 2):
            digest = hashlib.sha256(padded[i : i + 3].encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] % 2 else -1.0
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec.astype(np.float32)


FACE_ENCODERS = {"ref-face-v1": FaceEncoder()}
AUDIO_ENCODERS = {"ref-audio-v1": AudioEncoder()}
ASR_BACKENDS = {"mock-asr-v1": MockAsr()}
TEXT_ENCODERS = {"ref-text-v1": TextEncoder()}

_REGISTRIES = {
    "face": FACE_ENCODERS,
    "audio": AUDIO_ENCODERS,
    "asr": ASR_BACKENDS,
    "text": TEXT_ENCODERS,
}


def get_encoder(kind: str, name: str):
    registry = _REGISTRIES.get(kind)
    if registry is None:
        raise EncoderError(f"unknown encoder kind {kind!r}")
    if name not in registry:
        raise EncoderError(
            f"unknown {kind} encoder {name!r}; available: {sorted(registry)}"
        )
    return registry[name]
