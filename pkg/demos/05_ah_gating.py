#!/usr/bin/env python3
# Ambivalence/hesitancy detection with a video-level gate.  The synthetic
# pack hides the per-video flag inside the text features: the face track
# shows candidate events in every video, but only flagged videos have true
# positives.  A logistic-regression gate on mean text features rejects the
# unflagged videos and removes the face classifier's false positives.

import tempfile

import numpy as np

from affuse import (
    FusionSpec,
    LossSpec,
    TrainConfig,
    collect_frames,
    collect_gate_data,
    derive_seed,
    logreg_predict,
    logreg_train,
    mlp_init,
    read_pack,
    run_ah,
    train,
)
from affuse.synth import build_ah_gating_pack

root = tempfile.mkdtemp(prefix="affuse_ah_")
info = build_ah_gating_pack(root, n_videos=60, frames=150, seed=1)
pack = read_pack(root)

# Frame-level binary classifier on face features (sigmoid head + BCE).
cfg = TrainConfig(learning_rate=0.5, epochs=30, batch_size=64, seed=0)
x, y = collect_frames(pack, "face", info.train_ids)
model = mlp_init(x.shape[1], 64, 1, "sigmoid", seed=derive_seed(0, "face"))
face, _ = train(model, x, y.astype(float)[:, None], LossSpec("bce"), cfg)

# Video-level gate: logistic regression on the mean of the text track,
# trained to predict "does this video contain any positive frame at all".
xg, yg = collect_gate_data(pack, "text", info.train_ids)
gate = logreg_train(xg, yg, TrainConfig(learning_rate=0.5, epochs=100, batch_size=16, seed=1))
probs, decisions = logreg_predict(gate, xg)
print(f"gate training accuracy: {(decisions.astype(int) == yg).mean():.3f}")

_, ungated = run_ah(pack, FusionSpec(modalities=["face"]), {"face": face}, videos=info.eval_ids)
gated_spec = FusionSpec(modalities=["face"], mode="gated", gate=gate, gate_modality="text")
preds, gated = run_ah(pack, gated_spec, {"face": face}, videos=info.eval_ids)

print(f"\nframe-level F1, ungated: {ungated.binary_f1:.4f}")
print(f"frame-level F1, gated:   {gated.binary_f1:.4f}")

rejected = [vid for vid, row in gated.per_video.items() if row["gated_out"]]
print(f"\ngate rejected {len(rejected)} of {len(info.eval_ids)} eval videos")
fp_removed = sum(
    int(np.sum(run_ah(pack, FusionSpec(modalities=['face']), {'face': face}, videos=[vid])[0][0].labels))
    for vid in rejected
)
print(f"false-positive frames zeroed by the gate: {fp_removed}")
