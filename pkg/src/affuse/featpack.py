"""Feature-pack storage: on-disk interchange between feature extractors and the fusion engine.

A pack is a directory holding

* ``manifest.json`` -- format version, task name, modality declarations and
  the video list,
* one matrix file ``<video>__<modality>.fpk`` per (video, modality) pair,
* optionally one label file ``<video>__labels.json`` per video.

Matrix framing (``FPK1``): a 24-byte header -- magic ``b"FPK1"`` (4 bytes),
4 reserved zero bytes, row count and column count as unsigned 64-bit
little-endian -- followed by ``rows * cols`` IEEE-754 32-bit little-endian
floats in row-major order.  The framing is byte-reproducible: writing the
same matrix twice yields identical files.

The first modality declared in the manifest is the reference frame clock:
its row count must equal the ``frames`` field of every video, and
frame-granularity label tracks must have exactly ``frames`` entries.
Tracks of other modalities may run at their own rate and are brought onto
the frame clock with :func:`align_to_frames`.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FPK1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4s4xQQ")

TASKS = ("EXPR", "EMI", "AH")
KINDS = ("embedding", "logits", "probabilities")
SIMPLEX_TOL = 1e-5

# Names become file-name components; "__" is the video/modality separator.
_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class PackError(Exception):
    """Base class for feature-pack I/O failures."""


class ManifestError(PackError):
    """Manifest missing, unparseable, or structurally invalid."""


class MatrixFormatError(PackError):
    """Matrix file violates the FPK1 framing or disagrees with the manifest."""


@dataclass(frozen=True)
class ModalityDecl:
    """One modality column-space declaration."""

    name: str
    dim: int
    kind: str
    source_tag: str = ""


@dataclass(frozen=True)
class VideoDecl:
    id: str
    frames: int
    labels_file: str | None = None


@dataclass
class Manifest:
    """Pack-level metadata; validated before any matrix I/O happens."""

    task: str
    modalities: list[ModalityDecl]
    videos: list[VideoDecl]
    format_version: int = FORMAT_VERSION

    def modality(self, name: str) -> ModalityDecl:
        for m in self.modalities:
            if m.name == name:
                return m
        raise KeyError(f"modality {name!r} not declared")

    @property
    def clock_modality(self) -> ModalityDecl:
        """First declared modality; defines the per-video frame count."""
        return self.modalities[0]

    def validate(self) -> None:
        if self.format_version != FORMAT_VERSION:
            raise ManifestError(
                f"unsupported format_version {self.format_version} (expected {FORMAT_VERSION})"
            )
        if self.task not in TASKS:
            raise ManifestError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if not self.modalities:
            raise ManifestError("manifest declares no modalities")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ManifestError(f"duplicate modality names in {names}")
        ids = [v.id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate video ids")
        for m in self.modalities:
            if not _NAME_RE.match(m.name) or "__" in m.name:
                raise ManifestError(f"illegal modality name {m.name!r}")
            if m.dim < 1:
                raise ManifestError(f"modality {m.name!r} has dim {m.dim} < 1")
            if m.kind not in KINDS:
                raise ManifestError(f"modality {m.name!r} has unknown kind {m.kind!r}")
        for v in self.videos:
            if not _NAME_RE.match(v.id) or "__" in v.id:
                raise ManifestError(f"illegal video id {v.id!r}")
            if v.frames < 1:
                raise ManifestError(f"video {v.id!r} declares frames {v.frames} < 1")

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "task": self.task,
            "modalities": [
                {"name": m.name, "dim": m.dim, "kind": m.kind, "source_tag": m.source_tag}
                for m in self.modalities
            ],
            "videos": [
                {"id": v.id, "frames": v.frames}
                | ({"labels_file": v.labels_file} if v.labels_file else {})
                for v in self.videos
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        try:
            manifest = cls(
                format_version=int(d["format_version"]),
                task=str(d["task"]),
                modalities=[
                    ModalityDecl(
                        name=str(m["name"]),
                        dim=int(m["dim"]),
                        kind=str(m["kind"]),
                        source_tag=str(m.get("source_tag", "")),
                    )
                    for m in d["modalities"]
                ],
                videos=[
                    VideoDecl(
                        id=str(v["id"]),
                        frames=int(v["frames"]),
                        labels_file=v.get("labels_file"),
                    )
                    for v in d["videos"]
                ],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc
        manifest.validate()
        return manifest


@dataclass
class FeatureSequence:
    """T x D track of frame-aligned features or logits for one (video, modality)."""

    video_id: str
    modality: str
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(
                f"sequence {self.video_id}/{self.modality}: expected 2-D data, "
                f"got shape {self.data.shape}"
            )
        if self.data.shape[0] < 1:
            raise ValueError(f"sequence {self.video_id}/{self.modality}: T must be >= 1")


@dataclass
class LabelTrack:
    """Ground truth for one video: per-frame ids/flags or one intensity vector."""

    video_id: str
    granularity: str  # "frame" | "video"
    payload: np.ndarray

    def __post_init__(self) -> None:
        if self.granularity not in ("frame", "video"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        dtype = np.int64 if self.granularity == "frame" else np.float64
        self.payload = np.asarray(self.payload, dtype=dtype)

    def to_dict(self) -> dict:
        return {"granularity": self.granularity, "payload": self.payload.tolist()}

    @classmethod
    def from_dict(cls, video_id: str, d: dict) -> "LabelTrack":
        return cls(video_id=video_id, granularity=d["granularity"], payload=d["payload"])


@dataclass
class Violation:
    """One invariant failure found by :func:`validate_pack`."""

    video_id: str
    modality: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        msg = f"({self.video_id}, {self.modality}, {self.rule})"
        return f"{msg}: {self.detail}" if self.detail else msg


def matrix_filename(video_id: str, modality: str) -> str:
    return f"{video_id}__{modality}.fpk"


def labels_filename(video_id: str) -> str:
    return f"{video_id}__labels.json"


def write_matrix(path: Path, data: np.ndarray) -> None:
    """Write one FPK1 matrix file; ``data`` is cast to little-endian float32."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_matrix_header(path: Path) -> tuple[int, int]:
    """Validate the FPK1 header and byte length of ``path``; return (rows, cols)."""
    try:
        size = path.stat().st_size
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
    except OSError as exc:
        raise MatrixFormatError(f"cannot read matrix file {path}: {exc}") from exc
    if len(head) < _HEADER.size:
        raise MatrixFormatError(f"corrupt matrix file {path}: short header ({len(head)} bytes)")
    magic, rows, cols = _HEADER.unpack(head)
    if magic != MAGIC:
        raise MatrixFormatError(f"header magic mismatch in {path}: {magic!r} != {MAGIC!r}")
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"corrupt matrix file {path}: declared shape {rows}x{cols}")
    expected = _HEADER.size + rows * cols * 4
    if size != expected:
        raise MatrixFormatError(
            f"corrupt matrix file {path}: {size} bytes on disk, header implies {expected}"
        )
    return rows, cols


def read_matrix(path: Path) -> np.ndarray:
    rows, cols = read_matrix_header(path)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        raw = fh.read(rows * cols * 4)
    return np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float32, copy=False)


@dataclass
class FeaturePack:
    """A validated pack; matrices load lazily through :meth:`load`.

    Read-only after construction, so one instance may be shared across
    concurrent workers without locking.
    """

    root: Path
    manifest: Manifest
    missing: list[tuple[str, str]] = field(default_factory=list)

    def matrix_path(self, video_id: str, modality: str) -> Path:
        return self.root / matrix_filename(video_id, modality)

    def load(self, video_id: str, modality: str) -> FeatureSequence:
        decl = self.manifest.modality(modality)
        data = read_matrix(self.matrix_path(video_id, modality))
        if data.shape[1] != decl.dim:
            raise MatrixFormatError(
                f"{video_id}/{modality}: file has {data.shape[1]} cols, manifest says {decl.dim}"
            )
        return FeatureSequence(video_id=video_id, modality=modality, data=data)

    def load_labels(self, video_id: str) -> LabelTrack | None:
        decl = next(v for v in self.manifest.videos if v.id == video_id)
        if decl.labels_file is None:
            return None
        path = self.root / decl.labels_file
        with open(path, encoding="utf-8") as fh:
            return LabelTrack.from_dict(video_id, json.load(fh))

    def video_ids(self) -> list[str]:
        return [v.id for v in self.manifest.videos]


def write_pack(
    root: Path | str,
    manifest: Manifest,
    sequences: list[FeatureSequence],
    labels: list[LabelTrack] | None = None,
) -> None:
    """Write a complete pack under ``root``; re-reading is bit-identical.

    Every (video, modality) pair declared in the manifest must be covered by
    exactly one sequence with the declared dimensionality.  Non-finite
    entries are rejected here so NaNs can never poison downstream math.
    """
    manifest.validate()
    root = Path(root)

    table: dict[tuple[str, str], FeatureSequence] = {}
    for seq in sequences:
        key = (seq.video_id, seq.modality)
        if key in table:
            raise ValueError(f"duplicate sequence for (video, modality) {key}")
        table[key] = seq

    declared = {(v.id, m.name) for v in manifest.videos for m in manifest.modalities}
    for key in table:
        if key not in declared:
            raise ValueError(f"sequence {key} not declared in manifest")
    for key in sorted(declared):
        if key not in table:
            raise ValueError(f"missing matrix for (video, modality) {key}")

    clock = manifest.clock_modality.name
    for v in manifest.videos:
        for m in manifest.modalities:
            seq = table[(v.id, m.name)]
            if seq.data.shape[1] != m.dim:
                raise ValueError(
                    f"{v.id}/{m.name}: sequence has dim {seq.data.shape[1]}, "
                    f"manifest declares {m.dim}"
                )
            if not np.isfinite(seq.data).all():
                raise ValueError(f"{v.id}/{m.name}: non-finite entries rejected at ingestion")
        if table[(v.id, clock)].data.shape[0] != v.frames:
            raise ValueError(
                f"{v.id}: clock modality {clock!r} has "
                f"{table[(v.id, clock)].data.shape[0]} rows, manifest declares {v.frames} frames"
            )

    label_map = {t.video_id: t for t in (labels or [])}
    unknown = set(label_map) - {v.id for v in manifest.videos}
    if unknown:
        raise ValueError(f"labels for undeclared videos: {sorted(unknown)}")

    # Fill in labels_file references for videos that got a label track.
    videos_out = [
        VideoDecl(
            id=v.id,
            frames=v.frames,
            labels_file=v.labels_file or (labels_filename(v.id) if v.id in label_map else None),
        )
        for v in manifest.videos
    ]
    manifest_out = Manifest(
        task=manifest.task,
        modalities=manifest.modalities,
        videos=videos_out,
        format_version=manifest.format_version,
    )

    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest_out.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for (vid, mod), seq in sorted(table.items()):
        write_matrix(root / matrix_filename(vid, mod), seq.data)
    for v in videos_out:
        if v.labels_file and v.id in label_map:
            with open(root / v.labels_file, "w", encoding="utf-8") as fh:
                json.dump(label_map[v.id].to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")


def read_pack(root: Path | str) -> FeaturePack:
    """Load and eagerly header-validate a pack written by :func:`write_pack`.

    Matrix payloads stay on disk until :meth:`FeaturePack.load`; headers
    (magic, byte length, dims vs manifest) are checked now.  Missing matrix
    files are recorded on the pack and reported by :func:`validate_pack`.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ManifestError(f"missing manifest: {manifest_path}")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = Manifest.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"corrupt manifest {manifest_path}: {exc}") from exc

    missing: list[tuple[str, str]] = []
    for v in manifest.videos:
        for m in manifest.modalities:
            path = root / matrix_filename(v.id, m.name)
            if not path.is_file():
                missing.append((v.id, m.name))
                continue
            rows, cols = read_matrix_header(path)
            if cols != m.dim:
                raise MatrixFormatError(
                    f"{v.id}/{m.name}: file header declares dim {cols}, manifest says {m.dim}"
                )
    return FeaturePack(root=root, manifest=manifest, missing=missing)


def _expected_label_shape(task: str, frames: int) -> str:
    if task == "EMI":
        return "video-granularity 6-vector in [0,1]"
    return f"frame-granularity track of length {frames}"


def validate_pack(pack: FeaturePack) -> list[Violation]:
    """Check every data invariant; an empty report means the pack is valid.

    Violations are data, not exceptions: a single report covers all broken
    (video, modality, rule) triples instead of stopping at the first.
    """
    out: list[Violation] = []
    man = pack.manifest
    for vid, mod in pack.missing:
        out.append(Violation(vid, mod, "missing matrix"))
    missing = set(pack.missing)

    for v in man.videos:
        for m in man.modalities:
            if (v.id, m.name) in missing:
                continue
            seq = pack.load(v.id, m.name)
            data = seq.data
            if not np.isfinite(data).all():
                out.append(Violation(v.id, m.name, "non-finite", "NaN/Inf entries present"))
                continue
            if m.kind == "probabilities":
                sums = data.sum(axis=1, dtype=np.float64)
                bad = np.flatnonzero(
                    (np.abs(sums - 1.0) > SIMPLEX_TOL) | (data < 0).any(axis=1)
                )
                if bad.size:
                    out.append(
                        Violation(
                            v.id, m.name, "simplex",
                            f"{bad.size} rows off the probability simplex (first at {bad[0]})",
                        )
                    )
            if m.name == man.clock_modality.name and data.shape[0] != v.frames:
                out.append(
                    Violation(
                        v.id, m.name, "frame count",
                        f"{data.shape[0]} rows vs {v.frames} declared frames",
                    )
                )

        if v.labels_file is None:
            continue
        labels_path = pack.root / v.labels_file
        if not labels_path.is_file():
            out.append(Violation(v.id, "labels", "missing labels", str(labels_path)))
            continue
        track = pack.load_labels(v.id)
        if track.granularity == "frame":
            if len(track.payload) != v.frames:
                out.append(
                    Violation(
                        v.id, "labels", "label length",
                        f"{len(track.payload)} labels vs {v.frames} frames",
                    )
                )
            if man.task == "EXPR" and not np.isin(track.payload, np.arange(8)).all():
                out.append(Violation(v.id, "labels", "label range", "class ids outside [0, 8)"))
            if man.task == "AH" and not np.isin(track.payload, (0, 1)).all():
                out.append(Violation(v.id, "labels", "label range", "flags outside {0, 1}"))
        else:
            if man.task == "EMI":
                if track.payload.shape != (6,):
                    out.append(
                        Violation(
                            v.id, "labels", "label shape",
                            f"payload shape {track.payload.shape}, expected (6,)",
                        )
                    )
                elif ((track.payload < 0) | (track.payload > 1)).any():
                    out.append(
                        Violation(v.id, "labels", "intensity range", "values outside [0, 1]")
                    )
        if man.task == "EMI" and track.granularity != "video":
            out.append(
                Violation(
                    v.id, "labels", "granularity",
                    f"got {track.granularity!r}, EMI expects {_expected_label_shape('EMI', v.frames)}",
                )
            )
    return out


def resample_linear(data: np.ndarray, target_len: int) -> np.ndarray:
    """Piecewise-linear column-wise resampling of ``data`` (S x D) to ``target_len`` rows.

    Sample i of the input sits at position ``i * (T-1) / (S-1)`` so both
    endpoints are preserved; the output is evaluated at integer positions
    0..T-1.  S == T returns the input unchanged; S == 1 repeats the row.
    """
    if target_len < 1:
        raise ValueError(f"target_len must be >= 1, got {target_len}")
    data = np.asarray(data)
    s = data.shape[0]
    if s == target_len:
        return data.copy()
    if s == 1:
        return np.repeat(data, target_len, axis=0)
    if target_len == 1:
        # All knots collapse onto position 0; keep the left endpoint.
        return data[:1].copy()
    src = np.arange(s, dtype=np.float64) * ((target_len - 1) / (s - 1))
    src[-1] = target_len - 1  # guard rounding at the right endpoint
    dst = np.arange(target_len, dtype=np.float64)

    seg = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, s - 2)
    frac = (dst - src[seg]) / (src[seg + 1] - src[seg])
    lo = data[seg].astype(np.float64)
    hi = data[seg + 1].astype(np.float64)
    out = lo + frac[:, None] * (hi - lo)
    # Rounding must never push a value past its segment's knots; clipping
    # keeps the convexity and monotonicity guarantees exact.
    np.clip(out, np.minimum(lo, hi), np.maximum(lo, hi), out=out)
    out = out.astype(data.dtype, copy=False)
    out[0] = data[0]
    out[-1] = data[-1]
    return out


def align_to_frames(seq: FeatureSequence, target_len: int) -> FeatureSequence:
    """Resample a variable-rate track onto the frame clock (see :func:`resample_linear`)."""
    return FeatureSequence(
        video_id=seq.video_id,
        modality=seq.modality,
        data=resample_linear(seq.data, target_len),
    )
