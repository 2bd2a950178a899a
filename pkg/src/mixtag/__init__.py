"""mixtag: sample-mixed data augmentation toolkit for multi-label audio tagging.

Pipeline pieces: WAV/manifest ingestion and synthetic data (``dataset``),
the 124x128 log-mel front end (``features``), the four minibatch mixing
operators (``augment``), a from-scratch conv net with attention pooling
(``nn``), EER evaluation (``metrics``), and the cross-validation harness
plus CLI (``harness``, ``cli``).
"""

from .augment import (
    Batch,
    MixPolicy,
    apply_policy,
    extrapolate_batch,
    mixup_batch,
    mixup_lp_batch,
    sample_beta,
    sample_pairing_batch,
)
from .dataset import (
    CLASS_NAMES,
    CLIP_SAMPLES,
    NUM_CLASSES,
    SAMPLE_RATE,
    AudioClip,
    DatasetManifest,
    FoldSplit,
    SynthSpec,
    encode_labels,
    make_folds,
    parse_manifest,
    read_wav,
    synth_dataset,
    write_wav,
)
from .features import (
    FeatureSet,
    FeatureStats,
    MelFilterbank,
    Spectrogram,
    clip_features,
    compute_stats,
    extract_features,
    hamming_window,
    log_mel,
    mel_filterbank,
    normalize,
    read_features,
    stft,
    write_features,
)
from .harness import (
    EarlyStopping,
    ExperimentReport,
    TrainConfig,
    TrainingHistory,
    alpha_sweep,
    cross_validate,
    export_history,
    load_config,
    train_fold,
)
from .metrics import EerReport, eer, per_class_report, roc_points
from .nn import (
    ModelParams,
    TrainState,
    adam_step,
    attention_pool,
    bce_loss,
    conv_block_forward,
    derive_depth,
    grad_check,
    init_model,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)

__version__ = "0.1.0"
