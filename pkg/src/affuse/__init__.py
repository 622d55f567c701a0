"""affuse: multimodal late-fusion engine for frame- and video-level affect prediction.

The package turns precomputed per-modality feature tracks (stored as
feature packs) into task predictions: frame-wise expression classes,
video-level emotional-mimicry intensities, and frame-wise
ambivalence/hesitancy flags.
"""

from .featpack import (
    FeaturePack,
    FeatureSequence,
    LabelTrack,
    Manifest,
    ManifestError,
    MatrixFormatError,
    ModalityDecl,
    PackError,
    VideoDecl,
    Violation,
    align_to_frames,
    read_pack,
    resample_linear,
    validate_pack,
    write_pack,
)
from .neural import (
    LogRegModel,
    LossSpec,
    MlpModel,
    TrainConfig,
    TrainingDivergedError,
    emotion_weights_from_counts,
    gradient_check,
    load_logreg,
    load_mlp,
    logreg_predict,
    logreg_train,
    loss_bce,
    loss_cross_entropy,
    loss_weighted_pearson,
    mlp_forward,
    mlp_init,
    save_logreg,
    save_mlp,
    train,
)
from .pipeline import (
    FramePredictions,
    FusionSpec,
    MetricsReport,
    collect_frames,
    collect_gate_data,
    config_digest,
    derive_seed,
    early_fuse,
    metric_accuracy,
    metric_binary_f1,
    metric_macro_f1,
    metric_pearson,
    predict_emi,
    run_ah,
    run_emi,
    run_expr,
    train_emi_models,
)
from .temporal import (
    BlendSpec,
    FilterSpec,
    ProbTrack,
    SmoothSpec,
    blend2,
    blend_n,
    filter_select,
    mean_aggregate,
    smooth,
    stat_aggregate,
)

__version__ = "0.1.0"
