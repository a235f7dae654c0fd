"""cladlab: contrastive background debiasing of small conv classifiers,
with the synthetic benchmark, metrics, and ablations needed to study it.
"""

from .compose import (
    AugmentParams,
    DonorBank,
    IDENTITY_AUGMENT,
    augment,
    replace_background,
    resize_bilinear,
    swap_background,
    swap_texture,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (
    ChecksumError,
    CheckpointError,
    CladError,
    ConfigurationError,
    ContractViolation,
    DatasetLoadError,
    InvariantViolation,
    ManifestError,
    MissingFileError,
    NumericFault,
    UndefinedMetric,
)
from .evalkit import (
    MetricsReport,
    SweepRow,
    ablation_sweep,
    accuracy,
    aligned_pairs,
    bg_gap,
    bg_gap_eval,
    corner_crop_drop,
    decision_consistency,
    encoder_grad_fn,
    evaluate_model,
    feature_similarity,
    five_crops,
    smoothgrad,
)
from .negdict import FeatureEntry, NegativeDictionary
from .netcore import (
    Encoder,
    LossConfig,
    LossVariant,
    cosine_sim,
    cross_entropy,
    info_nce,
    input_gradient,
    total_loss,
)
from .rng import stream
from .synthgen import (
    ALL_VARIANTS,
    gen_base,
    generate_benchmark,
    make_variant,
    stratified_split,
)
from .storage import read_dataset, variant_sets_equal, write_dataset
from .trainer import AdamState, RunConfig, Seeds, TrainLog, adam_step, train
from .types import DatasetSpec, Sample, VariantKind, VariantSet, validate_variant_set

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
