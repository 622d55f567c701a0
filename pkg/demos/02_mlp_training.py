#!/usr/bin/env python3
# The trainable pieces: one-hidden-layer MLPs, the three losses, and the
# deterministic optimizer.  Gradient checks against central finite
# differences are the ground truth for every analytic gradient here.

import numpy as np

from affuse import (
    LossSpec,
    TrainConfig,
    emotion_weights_from_counts,
    gradient_check,
    loss_weighted_pearson,
    mlp_forward,
    mlp_init,
    train,
)

rng = np.random.default_rng(42)

# 1. Gradient fidelity.  Tiny probe models, every parameter perturbed both
#    ways with eps = 1e-4; relative error should sit far below 1e-4.
print("gradient checks (max relative error vs finite differences):")
for kind, head in [
    ("cross_entropy", "softmax"),
    ("bce", "sigmoid"),
    ("neg_weighted_pearson", "sigmoid"),
]:
    model = mlp_init(3, 4, 3, head, seed=1)
    model.b1 = rng.standard_normal(4) * 0.3  # move pre-activations off zero
    x = rng.standard_normal((6, 3))
    targets = rng.integers(3, size=6) if kind == "cross_entropy" else rng.random((6, 3))
    err = gradient_check(model, LossSpec(kind), (x, targets))
    print(f"  {kind:22s} {err:.2e}")

# 2. Training on separable blobs.  Same seed in, same weights out -- the
#    whole loop is deterministic.
y = rng.integers(2, size=400)
x = np.array([[2.0] * 4, [-2.0] * 4])[y] + 0.6 * rng.standard_normal((400, 4))
cfg = TrainConfig(learning_rate=0.05, epochs=40, batch_size=64, seed=0)
model = mlp_init(4, 32, 2, "softmax", seed=0)
trained, history = train(model, x, y, LossSpec("cross_entropy"), cfg)
out, _ = mlp_forward(trained, x)
print(f"\nblob training accuracy: {(out.argmax(axis=1) == y).mean():.3f}")
print(f"loss curve: {history[0]['train_loss']:.3f} -> {history[-1]['train_loss']:.3f}")

again, _ = train(mlp_init(4, 32, 2, "softmax", seed=0), x, y, LossSpec("cross_entropy"), cfg)
print("bitwise-identical rerun:", all(
    np.array_equal(p, q) for p, q in zip(trained.params().values(), again.params().values())
))

# 3. The concordance objective.  A sigmoid-head MLP trained with the
#    negative weighted-Pearson loss learns to *correlate* with its targets;
#    the loss ignores scale and offset entirely.
latent = rng.standard_normal((200, 5))
mix = rng.standard_normal((6, 5)) / np.sqrt(5)
targets = np.clip(0.5 + 0.2 * latent @ mix.T + 0.02 * rng.standard_normal((200, 6)), 0, 1)
counts = (targets > 0.5).sum(axis=0)  # toy emotion counts
weights = emotion_weights_from_counts(np.maximum(counts, 1))
print("\nemotion weights (inverse counts, sum = C):", np.round(weights, 3))

model = mlp_init(5, 64, 6, "sigmoid", seed=3)
cfg = TrainConfig(learning_rate=0.5, epochs=120, batch_size=50, seed=3)
trained, _ = train(model, latent, targets, LossSpec("neg_weighted_pearson", weights), cfg)
preds, _ = mlp_forward(trained, latent)
loss, _ = loss_weighted_pearson(preds, targets, None)
print(f"mean Pearson correlation after training: {-loss:.3f}")
scaled_loss, _ = loss_weighted_pearson(preds * 3.7 + 0.4, targets, None)
print(f"same predictions, scaled and shifted:    {-scaled_loss:.3f} (unchanged)")
