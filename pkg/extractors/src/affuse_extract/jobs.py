"""Extraction jobs: run encoders over media lists and assemble feature packs.

Per-video work is independent and runs on a bounded worker pool.  Each
worker writes its matrices into a private temp directory and the finished
files are atomically renamed into the pack, so a crashed or failed video
never leaves partial matrices behind.  A video that fails any requested
modality is dropped from the manifest entirely (a pack with holes would
fail validation) and the failure is recorded in the job report.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import EncoderError, get_encoder
from .media import MediaError, read_video_frames, read_wav
from .packio import matrix_filename, write_manifest, write_matrix

# Canonical declaration order; the first requested modality becomes the
# pack's frame clock.
MODALITIES = ("face_embeddings", "face_scores", "audio_embeddings", "text_embeddings")

_EMITTED_NAME = {
    "face_embeddings": "face",
    "face_scores": "face_scores",
    "audio_embeddings": "audio",
    "text_embeddings": "text",
}

DEFAULT_ENCODERS = {
    "face": "ref-face-v1",
    "audio": "ref-audio-v1",
    "asr": "mock-asr-v1",
    "text": "ref-text-v1",
}


class JobError(Exception):
    """Job description invalid."""


@dataclass(frozen=True)
class MediaItem:
    id: str
    video: Path | None = None
    audio: Path | None = None


@dataclass
class ExtractorJob:
    output_pack: Path
    modalities: list[str]
    videos: list[MediaItem]
    encoders: dict[str, str] = field(default_factory=dict)
    task: str = "EXPR"
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.modalities:
            raise JobError("at least one target modality required")
        unknown = set(self.modalities) - set(MODALITIES)
        if unknown:
            raise JobError(f"unknown modalities {sorted(unknown)}; expected subset of {MODALITIES}")
        if not self.videos:
            raise JobError("job lists no input media")
        ids = [v.id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise JobError("duplicate video ids in job")
        self.modalities = [m for m in MODALITIES if m in self.modalities]
        self.encoders = {**DEFAULT_ENCODERS, **self.encoders}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExtractorJob":
        try:
            videos = [
                MediaItem(
                    id=str(v["id"]),
                    video=Path(v["video"]) if v.get("video") else None,
                    audio=Path(v["audio"]) if v.get("audio") else None,
                )
                for v in doc["videos"]
            ]
            return cls(
                output_pack=Path(doc["output_pack"]),
                modalities=list(doc["modalities"]),
                videos=videos,
                encoders=dict(doc.get("encoders", {})),
                task=str(doc.get("task", "EXPR")),
                workers=int(doc.get("workers", 1)),
            )
        except (KeyError, TypeError) as exc:
            raise JobError(f"malformed job description: {exc}") from exc

    @classmethod
    def from_file(cls, path: Path | str) -> "ExtractorJob":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise JobError(f"job file is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


@dataclass
class VideoResult:
    video_id: str
    matrices: dict[str, np.ndarray] = field(default_factory=dict)
    transcript: list[dict] | None = None
    empty_transcript: bool = False
    failures: list[tuple[str, str]] = field(default_factory=list)  # (modality, reason)


def extract_face(
    item: MediaItem, encoder, want_embeddings: bool, want_scores: bool
) -> dict[str, np.ndarray]:
    """Frame-wise face matrices: embeddings (T x 1280) and/or score tracks (T x 8)."""
    if item.video is None:
        raise MediaError(f"{item.id}: face extraction requested but no video given")
    frames = read_video_frames(item.video)
    out = {}
    if want_embeddings:
        out["face"] = encoder.embed(frames)
    if want_scores:
        out["face_scores"] = encoder.scores(frames)
    return out


def extract_audio(item: MediaItem, encoder) -> np.ndarray:
    """Acoustic track at the encoder's native rate (S x D; S recorded as-is)."""
    if item.audio is None:
        raise MediaError(f"{item.id}: audio extraction requested but no audio given")
    samples, rate = read_wav(item.audio)
    return encoder.embed(samples, rate)


def extract_text(item: MediaItem, asr, encoder) -> tuple[np.ndarray, list[dict], bool]:
    """Segment-level text embeddings plus the transcript for audit.

    With no voiced segments the track is a single zero row and the
    ``empty_transcript`` flag is set (recorded in the manifest source_tag).
    """
    if item.audio is None:
        raise MediaError(f"{item.id}: text extraction requested but no audio given")
    samples, rate = read_wav(item.audio)
    segments = asr.segments(samples, rate)
    if not segments:
        return np.zeros((1, encoder.dim), dtype=np.float32), [], True
    transcript = []
    rows = []
    for start, end in segments:
        text = asr.transcribe(samples, rate, (start, end))
        transcript.append({"start": round(start, 3), "end": round(end, 3), "text": text})
        rows.append(encoder.embed(text))
    return np.stack(rows), transcript, False


def _process_video(job: ExtractorJob, item: MediaItem) -> VideoResult:
    result = VideoResult(item.id)
    want_face = "face_embeddings" in job.modalities
    want_scores = "face_scores" in job.modalities
    if want_face or want_scores:
        try:
            result.matrices.update(
                extract_face(item, get_encoder("face", job.encoders["face"]), want_face, want_scores)
            )
        except (MediaError, EncoderError) as exc:
            result.failures.append(("face", str(exc)))
    if "audio_embeddings" in job.modalities:
        try:
            result.matrices["audio"] = extract_audio(
                item, get_encoder("audio", job.encoders["audio"])
            )
        except (MediaError, EncoderError) as exc:
            result.failures.append(("audio", str(exc)))
    if "text_embeddings" in job.modalities:
        try:
            track, transcript, empty = extract_text(
                item,
                get_encoder("asr", job.encoders["asr"]),
                get_encoder("text", job.encoders["text"]),
            )
            result.matrices["text"] = track
            result.transcript = transcript
            result.empty_transcript = empty
        except (MediaError, EncoderError) as exc:
            result.failures.append(("text", str(exc)))
    return result


def _modality_decls(job: ExtractorJob, empty_transcript_ids: list[str]) -> list[dict]:
    decls = []
    for target in job.modalities:
        name = _EMITTED_NAME[target]
        if target == "face_embeddings":
            enc = get_encoder("face", job.encoders["face"])
            decls.append({"name": name, "dim": enc.embed_dim, "kind": "embedding",
                          "source_tag": f"face={enc.name}"})
        elif target == "face_scores":
            enc = get_encoder("face", job.encoders["face"])
            decls.append({"name": name, "dim": enc.n_classes, "kind": "probabilities",
                          "source_tag": f"face={enc.name}"})
        elif target == "audio_embeddings":
            enc = get_encoder("audio", job.encoders["audio"])
            decls.append({"name": name, "dim": enc.dim, "kind": "embedding",
                          "source_tag": f"audio={enc.name}"})
        else:
            asr = get_encoder("asr", job.encoders["asr"])
            enc = get_encoder("text", job.encoders["text"])
            tag = f"asr={asr.name};text={enc.name}"
            if empty_transcript_ids:
                tag += ";empty_transcript=" + ",".join(sorted(empty_transcript_ids))
            decls.append({"name": name, "dim": enc.dim, "kind": "embedding", "source_tag": tag})
    return decls


def run_job(job: ExtractorJob) -> dict:
    """Execute an extraction job; returns the job report (also written to disk).

    The report lists per-video outcomes; the pack only declares videos whose
    every requested modality succeeded.
    """
    # Validate encoder ids up front so a typo fails before any decoding work.
    for target in job.modalities:
        kind = "audio" if target == "audio_embeddings" else target.split("_")[0]
        if target == "text_embeddings":
            get_encoder("asr", job.encoders["asr"])
            get_encoder("text", job.encoders["text"])
        else:
            get_encoder(kind, job.encoders[kind])

    root = job.output_pack
    root.mkdir(parents=True, exist_ok=True)
    workers = max(1, job.workers)
    if workers == 1:
        results = [_process_video(job, item) for item in job.videos]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda item: _process_video(job, item), job.videos))

    emitted = [_EMITTED_NAME[m] for m in job.modalities]
    ok_results = [r for r in results if not r.failures]
    failures = [
        {"video": r.video_id, "modality": mod, "reason": reason}
        for r in results
        for mod, reason in r.failures
    ]

    for result in ok_results:
        # Private temp dir, then atomic rename of each finished matrix.
        with tempfile.TemporaryDirectory(dir=root, prefix=f".tmp-{result.video_id}-") as tmp:
            staged = []
            for name in emitted:
                fname = matrix_filename(result.video_id, name)
                write_matrix(Path(tmp) / fname, result.matrices[name])
                staged.append(fname)
            for fname in staged:
                os.replace(Path(tmp) / fname, root / fname)
        if result.transcript is not None:
            with open(root / f"{result.video_id}__transcript.json", "w", encoding="utf-8") as fh:
                json.dump(result.transcript, fh, indent=2, sort_keys=True)
                fh.write("\n")

    clock = emitted[0]
    empty_ids = [r.video_id for r in ok_results if r.empty_transcript]
    write_manifest(
        root / "manifest.json",
        task=job.task,
        modalities=_modality_decls(job, empty_ids),
        videos=[
            {"id": r.video_id, "frames": int(r.matrices[clock].shape[0])}
            for r in sorted(ok_results, key=lambda r: r.video_id)
        ],
    )

    report = {
        "pack": str(root),
        "modalities": emitted,
        "videos_ok": [r.video_id for r in sorted(ok_results, key=lambda r: r.video_id)],
        "failures": sorted(failures, key=lambda f: (f["video"], f["modality"])),
    }
    with open(root / "extraction_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
