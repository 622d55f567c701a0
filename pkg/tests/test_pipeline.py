"""Metric oracles and task-pipeline behavior tests."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from affuse.featpack import (
    FeatureSequence,
    LabelTrack,
    Manifest,
    ModalityDecl,
    VideoDecl,
    read_pack,
    write_pack,
)
from affuse.neural import LogRegModel, LossSpec, MlpModel, TrainConfig, mlp_forward, mlp_init, train
from affuse.pipeline import (
    FusionSpec,
    collect_frames,
    collect_gate_data,
    config_digest,
    derive_seed,
    early_fuse,
    metric_accuracy,
    metric_binary_f1,
    metric_macro_f1,
    metric_pearson,
    run_ah,
    run_emi,
    run_expr,
)
from affuse.synth import build_emi_linear_pack, build_expr_cluster_pack
from affuse.temporal import FilterSpec, SmoothSpec


def macro_f1_oracle(preds, labels, n_classes):
    """Brute-force confusion counts + exact rational per-class F1."""
    per_class = []
    for c in range(n_classes):
        tp = sum(1 for p, l in zip(preds, labels) if p == c and l == c)
        fp = sum(1 for p, l in zip(preds, labels) if p == c and l != c)
        fn = sum(1 for p, l in zip(preds, labels) if p != c and l == c)
        denom = 2 * tp + fp + fn
        per_class.append(float(Fraction(2 * tp, denom)) if denom else 0.0)
    return np.asarray(per_class).mean()


class TestMacroF1:
    def test_perfect(self):
        preds = np.arange(8).repeat(3)
        assert metric_macro_f1(preds, preds, 8) == 1.0

    def test_all_wrong_balanced(self):
        preds = np.array([0, 0, 1, 1])
        labels = np.array([1, 1, 0, 0])
        assert metric_macro_f1(preds, labels, 2) == 0.0

    def test_hand_confusion(self):
        got = metric_macro_f1(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1]), 2)
        assert abs(got - 11 / 15) < 1e-15  # class0 F1=2/3, class1 F1=4/5

    def test_exhaustive_small_instances(self):
        for t in range(1, 5):
            for preds in itertools.product(range(2), repeat=t):
                for labels in itertools.product(range(2), repeat=t):
                    got = metric_macro_f1(np.array(preds), np.array(labels), 2)
                    assert got == macro_f1_oracle(preds, labels, 2)
        for preds in itertools.product(range(3), repeat=2):
            for labels in itertools.product(range(3), repeat=2):
                got = metric_macro_f1(np.array(preds), np.array(labels), 3)
                assert got == macro_f1_oracle(preds, labels, 3)

    def test_random_instances_match_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            t = int(rng.integers(1, 13))
            c = int(rng.integers(2, 5))
            preds = rng.integers(c, size=t)
            labels = rng.integers(c, size=t)
            assert metric_macro_f1(preds, labels, c) == macro_f1_oracle(preds, labels, c)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            metric_macro_f1(np.array([]), np.array([]), 2)


class TestAccuracy:
    def test_cases(self):
        assert metric_accuracy(np.array([1, 2, 3]), np.array([1, 2, 3])) == 1.0
        assert metric_accuracy(np.array([1, 1]), np.array([2, 2])) == 0.0
        assert metric_accuracy(np.array([1, 2, 3, 4]), np.array([1, 2, 3, 0])) == 0.75


class TestPearsonMetric:
    def test_identity_and_negation(self):
        rng = np.random.default_rng(1)
        t = rng.random((10, 6))
        rho, mean = metric_pearson(t, t)
        assert np.allclose(rho, 1.0) and abs(mean - 1.0) < 1e-12
        rho, mean = metric_pearson(-t, t)
        assert np.allclose(rho, -1.0) and abs(mean + 1.0) < 1e-12

    def test_hand_value(self):
        preds = np.array([[1.0], [2.0], [3.0]])
        targets = np.array([[1.0], [2.0], [4.0]])
        rho, mean = metric_pearson(preds, targets)
        assert abs(rho[0] - 0.9819805060619659) < 1e-9
        assert abs(mean - rho[0]) < 1e-15

    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(3, 40))
            preds = rng.standard_normal((n, 4))
            targets = rng.standard_normal((n, 4))
            rho, _ = metric_pearson(preds, targets)
            for c in range(4):
                want = stats.pearsonr(preds[:, c], targets[:, c]).statistic
                assert abs(rho[c] - want) < 1e-9

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        preds = rng.random((15, 6))
        targets = rng.random((15, 6))
        base, _ = metric_pearson(preds, targets)
        for _ in range(20):
            a = rng.uniform(0.1, 10.0, 6)
            b = rng.uniform(-5.0, 5.0, 6)
            shifted, _ = metric_pearson(preds * a + b, targets)
            assert np.abs(shifted - base).max() <= 1e-9

    def test_constant_column_excluded_with_warning(self):
        rng = np.random.default_rng(4)
        preds = rng.random((8, 3))
        targets = rng.random((8, 3))
        targets[:, 1] = 0.5
        with pytest.warns(UserWarning, match="columns \\[1\\]"):
            rho, mean = metric_pearson(preds, targets)
        assert np.isnan(rho[1])
        defined = [rho[0], rho[2]]
        assert abs(mean - np.mean(defined)) < 1e-12


class TestBinaryF1:
    def test_perfect(self):
        labels = np.array([1, 0, 1, 0])
        assert metric_binary_f1(labels, labels) == 1.0

    def test_no_positive_predictions(self):
        assert metric_binary_f1(np.zeros(4, int), np.array([1, 0, 1, 0])) == 0.0

    def test_hand_case(self):
        got = metric_binary_f1(np.array([1, 1, 0]), np.array([1, 0, 0]))
        assert abs(got - 2 / 3) < 1e-15  # P=0.5, R=1

    def test_degenerate_all_negative(self):
        assert metric_binary_f1(np.zeros(3, int), np.zeros(3, int)) == 0.0


class TestEarlyFuse:
    def test_single_identity(self):
        seq = FeatureSequence("v", "a", np.ones((3, 2), dtype=np.float32))
        out = early_fuse([seq])
        assert np.array_equal(out.data, seq.data)

    def test_concat_and_slice_round_trip(self):
        rng = np.random.default_rng(5)
        a = FeatureSequence("v", "a", rng.random((4, 2)).astype(np.float32))
        b = FeatureSequence("v", "b", rng.random((4, 3)).astype(np.float32))
        out = early_fuse([a, b])
        assert out.data.shape == (4, 5)
        assert out.modality == "a+b"
        assert np.array_equal(out.data[:, :2], a.data)
        assert np.array_equal(out.data[:, 2:], b.data)

    def test_length_mismatch(self):
        a = FeatureSequence("v", "a", np.ones((4, 2), dtype=np.float32))
        b = FeatureSequence("v", "b", np.ones((3, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="align"):
            early_fuse([a, b])


class TestSeedsAndDigests:
    def test_derive_seed_stable_and_distinct(self):
        assert derive_seed(7, "train:face") == derive_seed(7, "train:face")
        assert derive_seed(7, "train:face") != derive_seed(7, "train:audio")
        assert derive_seed(7, "x") != derive_seed(8, "x")

    def test_config_digest_stable(self):
        a = config_digest({"b": 1, "a": [1, 2]})
        b = config_digest({"a": [1, 2], "b": 1})
        assert a == b and len(a) == 12


@pytest.fixture(scope="module")
def expr_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("expr_pack")
    info = build_expr_cluster_pack(
        root, n_videos=6, frames=40, include_pretrained=True, seed=11
    )
    pack = read_pack(root)
    cfg = TrainConfig(learning_rate=0.1, epochs=12, batch_size=32, seed=0)
    xf, yf = collect_frames(pack, "face", info.train_ids)
    face = mlp_init(8, 32, 8, "softmax", seed=derive_seed(0, "face"))
    face, _ = train(face, xf, yf, LossSpec("cross_entropy"), cfg)
    xa, ya = collect_frames(pack, "audio", info.train_ids)
    audio = mlp_init(8, 32, 8, "softmax", seed=derive_seed(0, "audio"))
    audio, _ = train(audio, xa, ya, LossSpec("cross_entropy"), cfg)
    return pack, info, face, audio


class TestRunExpr:
    def test_degenerate_config_equals_face_argmax(self, expr_setup):
        pack, info, face, audio = expr_setup
        spec = FusionSpec(
            modalities=["face", "audio"],
            modality_weights=[1.0, 0.0],
            smooth=SmoothSpec(1),
        )
        preds, report = run_expr(pack, spec, face, audio)
        for fp in preds:
            direct, _ = mlp_forward(face, pack.load(fp.video_id, "face").data)
            assert np.array_equal(fp.labels, direct.argmax(axis=1))
        assert report.macro_f1 is not None and report.accuracy is not None
        assert report.per_emotion_pcc is None and report.binary_f1 is None

    def test_filter_t1_equals_no_filter(self, expr_setup):
        pack, info, face, audio = expr_setup
        base = FusionSpec(modalities=["face", "audio"], smooth=SmoothSpec(3))
        filtered = FusionSpec(
            modalities=["face", "audio"],
            smooth=SmoothSpec(3),
            filter=FilterSpec(1.0),
            pretrained_modality="face_scores",
        )
        preds_a, _ = run_expr(pack, base, face, audio)
        preds_b, _ = run_expr(pack, filtered, face, audio)
        for a, b in zip(preds_a, preds_b):
            assert np.array_equal(a.labels, b.labels)
            assert (b.source == "fused").all()

    def test_filter_t0_equals_pretrained_argmax(self, expr_setup):
        pack, info, face, audio = expr_setup
        spec = FusionSpec(
            modalities=["face", "audio"],
            filter=FilterSpec(0.0),
            pretrained_modality="face_scores",
        )
        preds, _ = run_expr(pack, spec, face, audio)
        for fp in preds:
            scores = pack.load(fp.video_id, "face_scores").data
            assert np.array_equal(fp.labels, scores.argmax(axis=1))
            assert (fp.source == "pretrained").all()

    def test_missing_audio_model_rejected(self, expr_setup):
        pack, info, face, _ = expr_setup
        spec = FusionSpec(modalities=["face", "audio"])
        with pytest.raises(ValueError, match="no audio model"):
            run_expr(pack, spec, face, None)

    def test_report_digest_stable(self, expr_setup):
        pack, info, face, audio = expr_setup
        spec = FusionSpec(modalities=["face", "audio"], smooth=SmoothSpec(3))
        _, r1 = run_expr(pack, spec, face, audio)
        _, r2 = run_expr(pack, spec, face, audio)
        assert r1.config_digest == r2.config_digest
        assert r1.to_dict() == r2.to_dict()


class TestRunEmi:
    def test_linear_map_recoverable(self, tmp_path):
        build_emi_linear_pack(tmp_path, n_videos=80, frames=20, seed=3)
        pack = read_pack(tmp_path)
        spec = FusionSpec(modalities=["scores"])
        cfg = TrainConfig(learning_rate=0.5, epochs=120, batch_size=40, seed=0)
        preds, report = run_emi(pack, spec, cfg)
        assert report.task == "EMI"
        assert report.mean_pcc > 0.8
        assert len(preds) == 80
        assert report.macro_f1 is None and report.binary_f1 is None

    def test_blend_of_identical_predictions_same_pcc(self, tmp_path):
        rng = np.random.default_rng(6)
        preds = rng.random((30, 6))
        targets = rng.random((30, 6))
        _, solo = metric_pearson(preds, targets)
        _, blended = metric_pearson(0.5 * preds + 0.5 * preds, targets)
        assert abs(solo - blended) < 1e-12

    def test_too_few_videos(self, tmp_path):
        build_emi_linear_pack(tmp_path, n_videos=2, frames=5, seed=0)
        pack = read_pack(tmp_path)
        with pytest.raises(ValueError, match="at least 2"):
            run_emi(
                pack,
                FusionSpec(modalities=["scores"]),
                TrainConfig(batch_size=2),
                train_videos=["vid0000"],
            )

    def test_constant_target_column_rejected(self, tmp_path):
        manifest = Manifest(
            task="EMI",
            modalities=[ModalityDecl("scores", 2, "logits")],
            videos=[VideoDecl(f"v{i}", 3) for i in range(4)],
        )
        rng = np.random.default_rng(7)
        seqs = [
            FeatureSequence(f"v{i}", "scores", rng.random((3, 2)).astype(np.float32))
            for i in range(4)
        ]
        labels = [
            LabelTrack(f"v{i}", "video", [0.5, 0.1 * i + 0.1, 0.2, 0.3, 0.4, 0.5])
            for i in range(4)
        ]
        write_pack(tmp_path, manifest, seqs, labels)
        pack = read_pack(tmp_path)
        with pytest.raises(ValueError, match="all-constant target column"):
            run_emi(pack, FusionSpec(modalities=["scores"]), TrainConfig(batch_size=4))


def build_tiny_ah_pack(root):
    """Two videos: 'a' flagged (frames 1,1,0,0), 'b' unflagged all-zero.

    Face features are +-5 aligned with the frame label of 'a'; video 'b'
    is uniformly negative.  Text means are +3 / -3 so a hand-built gate
    separates the videos perfectly.
    """
    manifest = Manifest(
        task="AH",
        modalities=[
            ModalityDecl("face", 1, "embedding"),
            ModalityDecl("text", 1, "embedding"),
        ],
        videos=[VideoDecl("a", 4), VideoDecl("b", 4)],
    )
    seqs = [
        FeatureSequence("a", "face", np.array([[5.0], [5.0], [-5.0], [-5.0]], dtype=np.float32)),
        FeatureSequence("b", "face", np.full((4, 1), -5.0, dtype=np.float32)),
        FeatureSequence("a", "text", np.array([[3.0]], dtype=np.float32)),
        FeatureSequence("b", "text", np.array([[-3.0]], dtype=np.float32)),
    ]
    labels = [
        LabelTrack("a", "frame", [1, 1, 0, 0]),
        LabelTrack("b", "frame", [0, 0, 0, 0]),
    ]
    write_pack(root, manifest, seqs, labels)
    return read_pack(root)


def sign_mlp():
    """Sigmoid C=1 network computing p = sigmoid(x): ReLU shifted past the data."""
    return MlpModel(
        W1=np.array([[1.0]]),
        b1=np.array([10.0]),
        W2=np.array([[1.0]]),
        b2=np.array([-10.0]),
        head="sigmoid",
    )


class TestRunAh:
    def test_always_accept_gate_equals_ungated(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        models = {"face": sign_mlp()}
        ungated = FusionSpec(modalities=["face"], mode="late_blend")
        gated = FusionSpec(
            modalities=["face"],
            mode="gated",
            gate=LogRegModel(w=np.zeros(1), b=50.0),
            gate_modality="text",
        )
        preds_u, report_u = run_ah(pack, ungated, models)
        preds_g, report_g = run_ah(pack, gated, models)
        for u, g in zip(preds_u, preds_g):
            assert np.array_equal(u.labels, g.labels)
        assert report_u.binary_f1 == report_g.binary_f1

    def test_gate_rejecting_allzero_video_keeps_f1(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        models = {"face": sign_mlp()}
        ungated = FusionSpec(modalities=["face"])
        gated = FusionSpec(
            modalities=["face"],
            mode="gated",
            gate=LogRegModel(w=np.array([2.0]), b=0.0),  # rejects video 'b'
            gate_modality="text",
        )
        preds_u, report_u = run_ah(pack, ungated, models)
        preds_g, report_g = run_ah(pack, gated, models)
        assert report_g.per_video["b"]["gated_out"]
        for u, g in zip(preds_u, preds_g):
            assert np.array_equal(u.labels, g.labels)  # 'b' predicted 0 anyway
        assert report_u.binary_f1 == report_g.binary_f1 == 1.0

    def test_expected_labels_and_report(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        preds, report = run_ah(pack, FusionSpec(modalities=["face"]), {"face": sign_mlp()})
        assert report.task == "AH"
        by_vid = {p.video_id: p.labels.tolist() for p in preds}
        assert by_vid == {"a": [1, 1, 0, 0], "b": [0, 0, 0, 0]}
        assert report.binary_f1 == 1.0

    def test_early_mode_concatenates(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        # fused input (face, text); weights read the face column only
        model = MlpModel(
            W1=np.array([[1.0, 0.0]]),
            b1=np.array([20.0]),
            W2=np.array([[1.0]]),
            b2=np.array([-20.0]),
            head="sigmoid",
        )
        preds, report = run_ah(
            pack, FusionSpec(modalities=["face", "text"], mode="early_concat"), model
        )
        assert report.binary_f1 == 1.0

    def test_gate_without_text_modality(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        spec = FusionSpec(
            modalities=["face"],
            mode="gated",
            gate=LogRegModel(w=np.zeros(1), b=0.0),
            gate_modality="transcript",
        )
        with pytest.raises((ValueError, KeyError), match="transcript"):
            run_ah(pack, spec, {"face": sign_mlp()})

    def test_gate_model_required(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        spec = FusionSpec(modalities=["face"], mode="gated", gate_modality="text")
        with pytest.raises(ValueError, match="gate"):
            run_ah(pack, spec, {"face": sign_mlp()})

    def test_trained_gate_improves_f1(self, tmp_path):
        # hidden flag observable only through text: the trained gate removes
        # the face classifier's false positives on unflagged videos
        from affuse.neural import logreg_train
        from affuse.pipeline import derive_seed
        from affuse.synth import build_ah_gating_pack

        gains = []
        for seed in range(3):
            root = tmp_path / f"ah{seed}"
            info = build_ah_gating_pack(root, n_videos=60, frames=150, seed=seed)
            pack = read_pack(root)
            cfg = TrainConfig(learning_rate=0.5, epochs=30, batch_size=64, seed=0)
            x, y = collect_frames(pack, "face", info.train_ids)
            model = mlp_init(x.shape[1], 64, 1, "sigmoid", seed=derive_seed(0, "face"))
            face, _ = train(model, x, y.astype(float)[:, None], LossSpec("bce"), cfg)
            xg, yg = collect_gate_data(pack, "text", info.train_ids)
            gate = logreg_train(
                xg, yg, TrainConfig(learning_rate=0.5, epochs=100, batch_size=16, seed=1)
            )
            _, ungated = run_ah(
                pack, FusionSpec(modalities=["face"]), {"face": face}, videos=info.eval_ids
            )
            gated_spec = FusionSpec(
                modalities=["face"], mode="gated", gate=gate, gate_modality="text"
            )
            _, gated = run_ah(pack, gated_spec, {"face": face}, videos=info.eval_ids)
            assert gated.binary_f1 >= ungated.binary_f1
            gains.append(gated.binary_f1 - ungated.binary_f1)
        assert np.mean(gains) > 0.02


class TestCollectors:
    def test_collect_frames_aligns_to_clock(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        x, y = collect_frames(pack, "text")
        assert x.shape == (8, 1)  # 1-row text tracks repeated to 4 frames
        assert np.array_equal(x[:4, 0], np.full(4, 3.0))
        assert np.array_equal(y, [1, 1, 0, 0, 0, 0, 0, 0])

    def test_collect_gate_data(self, tmp_path):
        pack = build_tiny_ah_pack(tmp_path)
        x, y = collect_gate_data(pack, "text")
        assert np.array_equal(x[:, 0], [3.0, -3.0])
        assert np.array_equal(y, [1, 0])
