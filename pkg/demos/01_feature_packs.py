#!/usr/bin/env python3
# Feature packs: the on-disk boundary between feature extractors and the
# fusion engine.  This walkthrough builds a tiny pack by hand, round-trips
# it, breaks it on purpose, and aligns a slow track onto the frame clock.

import tempfile
from pathlib import Path

import numpy as np

from affuse import (
    FeatureSequence,
    LabelTrack,
    Manifest,
    ModalityDecl,
    VideoDecl,
    align_to_frames,
    read_pack,
    validate_pack,
    write_pack,
)

rng = np.random.default_rng(0)
root = Path(tempfile.mkdtemp(prefix="affuse_demo_"))

# One video, 12 frames.  The face track defines the frame clock (it is
# declared first); audio runs at its own, slower rate.
manifest = Manifest(
    task="EXPR",
    modalities=[
        ModalityDecl("face", 4, "embedding", source_tag="demo-face-encoder"),
        ModalityDecl("audio", 3, "embedding", source_tag="demo-audio-encoder"),
    ],
    videos=[VideoDecl("clip", 12)],
)
face = rng.standard_normal((12, 4)).astype(np.float32)
audio = rng.standard_normal((5, 3)).astype(np.float32)  # 5 samples for 12 frames
labels = LabelTrack("clip", "frame", rng.integers(8, size=12))

write_pack(
    root,
    manifest,
    [FeatureSequence("clip", "face", face), FeatureSequence("clip", "audio", audio)],
    [labels],
)
print(f"wrote pack to {root}:")
for p in sorted(root.iterdir()):
    print(f"  {p.name}  ({p.stat().st_size} bytes)")

# Reading back is bit-exact: matrices are float32 little-endian behind a
# fixed 24-byte header, so the same bytes come out that went in.
pack = read_pack(root)
assert np.array_equal(pack.load("clip", "face").data, face)
print("\nround trip is bit-exact; validation report:", validate_pack(pack) or "clean")

# The audio track runs at 5 samples per clip; piecewise-linear alignment
# puts it on the 12-frame clock with both endpoints preserved.
aligned = align_to_frames(pack.load("clip", "audio"), 12)
print(f"\naudio aligned {audio.shape} -> {aligned.data.shape}")
print("first input row :", np.round(audio[0], 3))
print("first output row:", np.round(aligned.data[0], 3))

# Now break the pack: probabilities-kind rows must lie on the simplex.
bad_manifest = Manifest(
    task="EXPR",
    modalities=[ModalityDecl("scores", 2, "probabilities")],
    videos=[VideoDecl("clip", 2)],
)
bad_rows = np.array([[0.7, 0.3], [0.9, 0.4]], dtype=np.float32)  # second row sums 1.3
bad_root = Path(tempfile.mkdtemp(prefix="affuse_demo_bad_"))
write_pack(bad_root, bad_manifest, [FeatureSequence("clip", "scores", bad_rows)])
report = validate_pack(read_pack(bad_root))
print("\nviolations in the broken pack:")
for violation in report:
    print("  ", violation)
