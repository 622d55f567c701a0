"""Writer for the feature-pack interchange format.

This is an independent implementation of the pack byte format: the format
is the boundary between the extraction side and the fusion engine, so this
package writes the bytes itself and the engine's ``affuse validate`` is the
compatibility check.

Layout per pack directory:

* ``manifest.json`` -- format_version (=1), task, modality declarations
  ``{name, dim, kind, source_tag}``, video declarations ``{id, frames}``.
* ``<video>__<modality>.fpk`` -- 24-byte header: magic ``b"FPK1"``,
  4 reserved zero bytes, rows then cols as unsigned 64-bit little-endian;
  followed by rows*cols float32 little-endian values, row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FPK1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4s4xQQ")


def matrix_filename(video_id: str, modality: str) -> str:
    return f"{video_id}__{modality}.fpk"


def write_matrix(path: Path, data: np.ndarray) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"matrix must be non-empty and 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def write_manifest(
    path: Path,
    task: str,
    modalities: list[dict],
    videos: list[dict],
) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "task": task,
        "modalities": modalities,
        "videos": videos,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
