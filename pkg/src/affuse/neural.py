"""One-hidden-layer feed-forward networks trained from scratch with numpy.

Covers the trainable pieces of the engine: seeded MLP initialization,
forward passes for softmax/sigmoid/linear heads, the three losses
(softmax cross-entropy, binary cross-entropy, negative weighted Pearson),
a deterministic mini-batch gradient-descent loop, central finite-difference
gradient checking, and a logistic-regression classifier used for
video-level gating.

All training math runs in float64; serialized weights use the same FPK1
float32 framing as feature packs, so model files are byte-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featpack import read_matrix, write_matrix

HEADS = ("softmax", "sigmoid", "linear")
LOSS_KINDS = ("cross_entropy", "bce", "neg_weighted_pearson")

# Relative-error guard for gradient checks: components this small are
# compared absolutely (finite differences bottom out near 1e-8 anyway).
_GRAD_CHECK_FLOOR = 1e-3
_FD_EPS = 1e-4


class TrainingDivergedError(RuntimeError):
    """Raised when a loss turns non-finite during training."""


@dataclass
class MlpModel:
    """Weights of a one-hidden-layer ReLU network plus its output head.

    Immutable by convention once trained: forward passes on a shared model
    are safe to run concurrently.
    """

    W1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (C, H)
    b2: np.ndarray  # (C,)
    head: str
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def output_dim(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def assert_finite(self) -> None:
        for name, p in self.params().items():
            if not np.isfinite(p).all():
                raise TrainingDivergedError(f"non-finite values in parameter {name}")

    def copy(self) -> "MlpModel":
        return MlpModel(
            W1=self.W1.copy(), b1=self.b1.copy(),
            W2=self.W2.copy(), b2=self.b2.copy(),
            head=self.head, seed=self.seed,
        )


@dataclass
class LossSpec:
    """Training objective selector; ``class_weights`` rescale per class/emotion."""

    kind: str
    class_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=np.float64)
            if (w <= 0).any():
                raise ValueError("class_weights must be strictly positive")
            # Normalize so the weights sum to C.
            self.class_weights = w * (w.size / w.sum())


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    l2: float = 0.0
    early_stop_patience: int | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass
class LogRegModel:
    """Binary logistic-regression classifier with a fixed decision threshold."""

    w: np.ndarray  # (D,)
    b: float
    decision_threshold: float = 0.5

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError(
                f"decision_threshold must lie in (0, 1), got {self.decision_threshold}"
            )


def mlp_init(
    input_dim: int,
    hidden_dim: int = 128,
    output_dim: int = 1,
    head: str = "softmax",
    seed: int = 0,
) -> MlpModel:
    """Seeded uniform init scaled by 1/sqrt(fan_in); biases zero.

    The same seed yields bitwise-identical parameters.  Draw order is fixed
    (W1 then W2) so adding layers elsewhere cannot silently shift streams.
    """
    if input_dim < 1 or hidden_dim < 1 or output_dim < 1:
        raise ValueError(
            f"dimensions must be >= 1, got D={input_dim}, H={hidden_dim}, C={output_dim}"
        )
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}; expected one of {HEADS}")
    rng = np.random.default_rng(seed)
    lim1 = 1.0 / np.sqrt(input_dim)
    lim2 = 1.0 / np.sqrt(hidden_dim)
    return MlpModel(
        W1=rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim)),
        b1=np.zeros(hidden_dim),
        W2=rng.uniform(-lim2, lim2, size=(output_dim, hidden_dim)),
        b2=np.zeros(output_dim),
        head=head,
        seed=seed,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cache(model: MlpModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z1 = batch @ model.W1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ model.W2.T + model.b2
    return z1, a1, logits


def mlp_forward(model: MlpModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the network on an N x D batch; returns (head outputs, pre-head logits)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.input_dim:
        raise ValueError(
            f"batch shape {batch.shape} incompatible with input_dim {model.input_dim}"
        )
    if not np.isfinite(batch).all():
        raise ValueError("batch contains non-finite entries")
    _, _, logits = _forward_cache(model, batch)
    if model.head == "softmax":
        return softmax(logits), logits
    if model.head == "sigmoid":
        return sigmoid(logits), logits
    return logits.copy(), logits


def loss_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy; returns (weighted mean loss, gradient wrt logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    p = softmax(logits)
    zmax = logits.max(axis=1)
    logsumexp = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
    nll = logsumexp - logits[np.arange(n), labels]

    if class_weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(class_weights, dtype=np.float64)[labels]
    wsum = w.sum()
    loss = float((w * nll).sum() / wsum)

    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    grad *= (w / wsum)[:, None]
    return loss, grad


def loss_bce(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over all entries of an N x C sigmoid output.

    The returned gradient is taken with respect to the pre-sigmoid logits:
    ``(probs - targets) / (N * C)``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape} vs targets {targets.shape}")
    if ((targets < 0) | (targets > 1)).any():
        raise ValueError("targets must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        term = targets * np.log(probs) + (1.0 - targets) * np.log1p(-probs)
        # 0 * log(0) counts as 0 so exact-limit cases stay finite.
        term = np.where((targets == 0.0) & (probs == 0.0), 0.0, term)
        term = np.where((targets == 1.0) & (probs == 1.0), 0.0, term)
    loss = float(-term.mean())
    grad = (probs - targets) / probs.size
    return loss, grad


def loss_weighted_pearson(
    preds: np.ndarray,
    targets: np.ndarray,
    emotion_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Negative weighted mean of per-column Pearson correlations.

    ``loss = -sum_c w_c * rho_c / sum_c w_c``.  Columns whose targets (or
    predictions) are constant within the batch have undefined correlation;
    they contribute rho = 0 with a zero gradient so degenerate mini-batches
    stay finite.  The loss is invariant under per-column positive affine
    transforms of the predictions.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch: preds {preds.shape} vs targets {targets.shape}")
    n, c = preds.shape
    if n < 2:
        raise ValueError(f"Pearson correlation needs N >= 2 samples, got {n}")
    w = np.ones(c) if emotion_weights is None else np.asarray(emotion_weights, dtype=np.float64)
    if w.shape != (c,):
        raise ValueError(f"emotion_weights shape {w.shape} does not match C={c}")

    pc = preds - preds.mean(axis=0)
    tc = targets - targets.mean(axis=0)
    sp = (pc * pc).sum(axis=0)
    st = (tc * tc).sum(axis=0)
    spt = (pc * tc).sum(axis=0)
    # Exact-constancy detection: rounding residue in the centering would
    # otherwise turn 0/0 into garbage correlations.
    degenerate = (np.ptp(preds, axis=0) == 0) | (np.ptp(targets, axis=0) == 0)
    degenerate |= (sp == 0) | (st == 0)

    denom = np.sqrt(np.where(degenerate, 1.0, sp * st))
    rho = np.where(degenerate, 0.0, spt / denom)
    wsum = w.sum()
    loss = float(-(w * rho).sum() / wsum)

    # d rho_c / d preds[i, c] = tc/denom - rho * pc / sp
    scale = np.where(degenerate, 0.0, w / wsum)
    sp_safe = np.where(degenerate, 1.0, sp)
    grad = -scale * (tc / denom - rho * pc / sp_safe)
    return loss, grad


def emotion_weights_from_counts(counts: np.ndarray) -> np.ndarray:
    """Inverse-count weights normalized to sum to C: w_c = (1/n_c) * C / sum_j (1/n_j)."""
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a non-empty vector")
    if (counts < 1).any():
        raise ValueError(f"all counts must be >= 1, got {counts.tolist()}")
    inv = 1.0 / counts.astype(np.float64)
    return inv * (counts.size / inv.sum())


def _loss_and_logit_grad(
    model: MlpModel, logits: np.ndarray, targets: np.ndarray, loss: LossSpec
) -> tuple[float, np.ndarray]:
    """Dispatch a LossSpec into (loss value, gradient wrt pre-head logits)."""
    if loss.kind == "cross_entropy":
        return loss_cross_entropy(logits, targets, loss.class_weights)
    if loss.kind == "bce":
        if model.head != "sigmoid":
            raise ValueError(f"bce loss requires a sigmoid head, model has {model.head!r}")
        probs = sigmoid(logits)
        return loss_bce(probs, targets)
    # neg_weighted_pearson: computed on head outputs, chained back to logits.
    if model.head == "sigmoid":
        preds = sigmoid(logits)
        value, dpreds = loss_weighted_pearson(preds, targets, loss.class_weights)
        return value, dpreds * preds * (1.0 - preds)
    if model.head == "linear":
        value, dpreds = loss_weighted_pearson(logits, targets, loss.class_weights)
        return value, dpreds
    raise ValueError("neg_weighted_pearson supports sigmoid or linear heads only")


def _objective(
    model: MlpModel, batch: np.ndarray, targets: np.ndarray, loss: LossSpec
) -> tuple[float, dict[str, np.ndarray]]:
    """Data loss and its analytic gradients for every parameter tensor."""
    z1, a1, logits = _forward_cache(model, batch)
    value, dlogits = _loss_and_logit_grad(model, logits, targets, loss)
    da1 = dlogits @ model.W2
    dz1 = da1 * (z1 > 0)
    grads = {
        "W1": dz1.T @ batch,
        "b1": dz1.sum(axis=0),
        "W2": dlogits.T @ a1,
        "b2": dlogits.sum(axis=0),
    }
    return value, grads


def gradient_check(
    model: MlpModel, loss: LossSpec, probe_batch: tuple[np.ndarray, np.ndarray]
) -> float:
    """Worst relative disagreement between analytic and central-difference gradients.

    Central differences use eps = 1e-4 on every parameter.  The relative
    error is ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-3)``; the floor keeps
    vanishing components from amplifying finite-difference noise.
    """
    batch, targets = probe_batch
    batch = np.asarray(batch, dtype=np.float64)
    _, analytic = _objective(model, batch, targets, loss)

    probe = model.copy()
    worst = 0.0
    for name, tensor in probe.params().items():
        flat = tensor.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + _FD_EPS
            up, _ = _objective(probe, batch, targets, loss)
            flat[i] = orig - _FD_EPS
            down, _ = _objective(probe, batch, targets, loss)
            flat[i] = orig
            gn = (up - down) / (2.0 * _FD_EPS)
            rel = abs(ga[i] - gn) / max(abs(ga[i]) + abs(gn), _GRAD_CHECK_FLOOR)
            worst = max(worst, rel)
    return worst


def _epoch_batches(rng: np.random.Generator, n: int, batch_size: int, min_size: int):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        if idx.size >= min_size:
            yield idx


def _validation_metric(model: MlpModel, out: np.ndarray, targets: np.ndarray, kind: str) -> float:
    if kind == "cross_entropy":
        return float((out.argmax(axis=1) == targets).mean())
    if kind == "bce":
        return float(((out > 0.5).astype(int) == np.asarray(targets)).mean())
    # Unweighted mean Pearson over non-degenerate columns.
    value, _ = loss_weighted_pearson(out, targets, None)
    return -value


def train(
    model: MlpModel,
    features: np.ndarray,
    targets: np.ndarray,
    loss: LossSpec,
    cfg: TrainConfig,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[MlpModel, list[dict]]:
    """Deterministic mini-batch gradient descent.

    Shuffling derives from ``cfg.seed`` only, so identical inputs yield
    bitwise-identical parameters.  With ``early_stop_patience`` set (and a
    validation split supplied) the returned model is the snapshot from the
    best validation epoch.  Raises :class:`TrainingDivergedError` naming the
    epoch and batch if the loss turns non-finite.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"features shape {x.shape} incompatible with input_dim {model.input_dim}")
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds sample count {n}")
    min_batch = 2 if loss.kind == "neg_weighted_pearson" else 1
    if loss.kind == "neg_weighted_pearson" and cfg.batch_size < 2:
        raise ValueError("neg_weighted_pearson needs batch_size >= 2")
    if cfg.early_stop_patience is not None and validation is None:
        raise ValueError("early_stop_patience requires a validation split")
    if loss.kind == "cross_entropy":
        targets = np.asarray(targets, dtype=np.int64)
    else:
        targets = np.asarray(targets, dtype=np.float64)

    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    history: list[dict] = []
    best: tuple[float, MlpModel] | None = None
    stale = 0

    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        seen = 0
        for batch_no, idx in enumerate(_epoch_batches(rng, n, cfg.batch_size, min_batch)):
            value, grads = _objective(model, x[idx], targets[idx], loss)
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            if cfg.l2 > 0.0:
                value += 0.5 * cfg.l2 * (np.sum(model.W1**2) + np.sum(model.W2**2))
                grads["W1"] = grads["W1"] + cfg.l2 * model.W1
                grads["W2"] = grads["W2"] + cfg.l2 * model.W2
            for name, tensor in model.params().items():
                tensor -= cfg.learning_rate * grads[name]
            try:
                model.assert_finite()
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(
                    f"{exc} (epoch {epoch}, batch {batch_no})"
                ) from None
            epoch_loss += value * idx.size
            seen += idx.size

        record = {"epoch": epoch, "train_loss": epoch_loss / max(seen, 1)}
        if validation is not None:
            xv, yv = validation
            out, logits = mlp_forward(model, xv)
            if loss.kind == "cross_entropy":
                val_loss, _ = loss_cross_entropy(logits, yv, loss.class_weights)
            else:
                val_loss, _ = _loss_and_logit_grad(model, logits, np.asarray(yv, float), loss)
            record["val_loss"] = val_loss
            record["val_metric"] = _validation_metric(model, out, yv, loss.kind)
            if best is None or val_loss < best[0]:
                best = (val_loss, model.copy())
                stale = 0
            else:
                stale += 1
        history.append(record)
        if (
            cfg.early_stop_patience is not None
            and stale > cfg.early_stop_patience
        ):
            break

    if cfg.early_stop_patience is not None and best is not None:
        model = best[1]
    return model, history


def logreg_train(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig) -> LogRegModel:
    """Binary logistic regression via the same deterministic mini-batch loop.

    Zero-initialized (the objective is convex), BCE loss with optional l2 on
    the weight vector.  Both classes must be present.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"incompatible shapes: features {x.shape}, labels {y.shape}")
    classes = np.unique(y)
    if not np.isin(classes, (0.0, 1.0)).all():
        raise ValueError("labels must be binary (0/1)")
    if classes.size < 2:
        raise ValueError(f"both classes must be present, got only class {classes[0]:g}")
    n, d = x.shape
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds sample count {n}")

    w = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        for batch_no, idx in enumerate(_epoch_batches(rng, n, cfg.batch_size, 1)):
            z = x[idx] @ w + b
            p = sigmoid(z)
            with np.errstate(divide="ignore"):
                term = y[idx] * np.log(p) + (1.0 - y[idx]) * np.log1p(-p)
            value = float(-term.mean())
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            dz = (p - y[idx]) / idx.size
            w -= cfg.learning_rate * (x[idx].T @ dz + cfg.l2 * w)
            b -= cfg.learning_rate * float(dz.sum())
    model = LogRegModel(w=w, b=b)
    if not (np.isfinite(model.w).all() and np.isfinite(model.b)):
        raise TrainingDivergedError("non-finite logistic-regression parameters")
    return model


def logreg_predict(model: LogRegModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities ``sigmoid(w.x + b)`` and strict-threshold decisions ``p > thr``."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.w.size:
        raise ValueError(f"features shape {x.shape} incompatible with weight dim {model.w.size}")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite entries")
    p = sigmoid(x @ model.w + model.b)
    return p, p > model.decision_threshold


# --- serialization ------------------------------------------------------

def save_mlp(model: MlpModel, directory: Path | str, config_digest: str = "") -> None:
    """Write model.json plus one FPK1 matrix file per parameter tensor.

    Weights are stored as float32 (the shared framing), so a save/load
    round trip quantizes float64 training precision to float32.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": "mlp",
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "output_dim": model.output_dim,
        "head": model.head,
        "seed": model.seed,
        "config_digest": config_digest,
    }
    with open(directory / "model.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_matrix(directory / "W1.fpk", model.W1)
    write_matrix(directory / "b1.fpk", model.b1.reshape(1, -1))
    write_matrix(directory / "W2.fpk", model.W2)
    write_matrix(directory / "b2.fpk", model.b2.reshape(1, -1))


def load_mlp(directory: Path | str) -> MlpModel:
    directory = Path(directory)
    with open(directory / "model.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("kind") != "mlp":
        raise ValueError(f"{directory} does not hold an MLP model")
    model = MlpModel(
        W1=read_matrix(directory / "W1.fpk").astype(np.float64),
        b1=read_matrix(directory / "b1.fpk").astype(np.float64).reshape(-1),
        W2=read_matrix(directory / "W2.fpk").astype(np.float64),
        b2=read_matrix(directory / "b2.fpk").astype(np.float64).reshape(-1),
        head=meta["head"],
        seed=int(meta["seed"]),
    )
    expect = (meta["hidden_dim"], meta["input_dim"])
    if model.W1.shape != expect:
        raise ValueError(f"W1 shape {model.W1.shape} disagrees with metadata {expect}")
    return model


def save_logreg(model: LogRegModel, directory: Path | str, config_digest: str = "") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": "logreg",
        "input_dim": int(model.w.size),
        "decision_threshold": model.decision_threshold,
        "config_digest": config_digest,
    }
    with open(directory / "model.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_matrix(directory / "w.fpk", model.w.reshape(1, -1))
    write_matrix(directory / "b.fpk", np.array([[model.b]]))


def load_logreg(directory: Path | str) -> LogRegModel:
    directory = Path(directory)
    with open(directory / "model.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("kind") != "logreg":
        raise ValueError(f"{directory} does not hold a logistic-regression model")
    return LogRegModel(
        w=read_matrix(directory / "w.fpk").astype(np.float64).reshape(-1),
        b=float(read_matrix(directory / "b.fpk")[0, 0]),
        decision_threshold=float(meta["decision_threshold"]),
    )
