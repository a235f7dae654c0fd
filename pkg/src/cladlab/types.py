"""Core dataset types: samples, dataset specs, and variant sets.

A :class:`Sample` carries an image, an exact binary foreground mask, and two
labels: ``fg_label`` is the class of the drawn foreground shape, ``bg_label``
the class whose texture family produced the background.  The five dataset
variants alter foreground/background content; their semantics are
machine-checkable from the stored fields via :func:`validate_variant_set`.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ConfigurationError, InvariantViolation

# Families available for class<->family bijections (see procedural module).
MAX_CLASSES = 9


class VariantKind(str, Enum):
    ORIGINAL = "Original"
    ONLY_FG = "OnlyFG"
    ONLY_BGT = "OnlyBGT"
    MIXED_SAME = "MixedSame"
    MIXED_RAND = "MixedRand"


#: Variants in which samples contain a foreground shape (nonempty mask).
FOREGROUND_VARIANTS = frozenset(
    {VariantKind.ORIGINAL, VariantKind.ONLY_FG, VariantKind.MIXED_SAME, VariantKind.MIXED_RAND}
)


@dataclass
class Sample:
    """One image with its exact foreground mask and class labels.

    image: (H, W, 3) float32 in [0, 1], quantized to the 8-bit grid.
    mask:  (H, W) bool, True on foreground pixels.  All-False for samples
           without a foreground (OnlyBGT).
    """

    image: np.ndarray
    mask: np.ndarray
    fg_label: int
    bg_label: int
    id: int

    def __post_init__(self):
        self.image = np.ascontiguousarray(self.image, dtype=np.float32)
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise InvariantViolation(f"sample {self.id}: image must be (H, W, 3)")
        if self.mask.shape != self.image.shape[:2]:
            raise InvariantViolation(f"sample {self.id}: mask/image shape mismatch")
        self.image.setflags(write=False)
        self.mask.setflags(write=False)

    @property
    def size(self) -> int:
        return self.image.shape[0]


@dataclass(frozen=True)
class DatasetSpec:
    """Everything that determines a generated base dataset, including the seed.

    Class ``k`` is assigned shape family ``k`` and texture family ``k``
    (bijections, so the label is decodable from either cue alone).  The
    remaining knobs control how easy each cue is:

    - ``fg_radius``: polygon outer radius range as a fraction of image size.
    - ``fg_hue_spread``: half-width of the foreground fill hue distribution
      around the class hue; wide spreads make color a weak foreground cue,
      which pushes a plain classifier toward the background.
    - ``bg_hue_jitter``: half-width of the background hue distribution.
    - ``bg_saturation``: background tone saturation range; muted backgrounds
      keep the background cue decodable without letting it drown the
      foreground in pooled features.
    """

    num_classes: int = 9
    image_size: int = 32
    samples_per_class: int = 200
    seed: int = 7
    fg_radius: tuple[float, float] = (0.24, 0.32)
    fg_center_span: tuple[float, float] = (0.35, 0.65)
    fg_hue_spread: float = 0.03
    bg_hue_jitter: float = 0.10
    bg_saturation: tuple[float, float] = (0.20, 0.40)
    bg_contrast: float = 0.5

    def validate(self) -> None:
        if not 2 <= self.num_classes <= MAX_CLASSES:
            raise ConfigurationError(
                f"num_classes must be in [2, {MAX_CLASSES}], got {self.num_classes}"
            )
        if self.image_size < 8:
            raise ConfigurationError(f"image_size must be >= 8, got {self.image_size}")
        if self.image_size % 4 != 0:
            raise ConfigurationError("image_size must be divisible by 4 (two 2x2 pool stages)")
        if self.samples_per_class < 1:
            raise ConfigurationError("samples_per_class must be >= 1")
        if _unordered(self.fg_radius) or self.fg_radius[1] > 0.32:
            raise ConfigurationError("fg_radius must be an increasing pair with max <= 0.32")
        if _unordered(self.fg_center_span):
            raise ConfigurationError("fg_center_span must be an increasing pair")


def _unordered(pair) -> bool:
    return not (0 < pair[0] <= pair[1])


@dataclass
class VariantSet:
    """A labeled dataset in one of the five variant modes."""

    variant: VariantKind
    samples: list[Sample]
    num_classes: int
    image_size: int

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self) -> dict[int, Sample]:
        return {s.id: s for s in self.samples}


def validate_sample(sample: Sample, variant: VariantKind, num_classes: int) -> None:
    """Check the Table-of-variants semantics for one sample; raise on violation."""
    sid = sample.id
    for name, label in (("fg_label", sample.fg_label), ("bg_label", sample.bg_label)):
        if not 0 <= label < num_classes:
            raise InvariantViolation(f"sample {sid}: {name}={label} out of range")
    img = sample.image
    if img.min() < 0.0 or img.max() > 1.0:
        raise InvariantViolation(f"sample {sid}: pixel values outside [0, 1]")
    n_fg = int(sample.mask.sum())
    n_px = sample.mask.size
    if variant in FOREGROUND_VARIANTS:
        if not 1 <= n_fg <= n_px - 1:
            raise InvariantViolation(
                f"sample {sid}: foreground mask must be a nonempty proper subset, got {n_fg} px"
            )
    else:  # OnlyBGT: foreground removed
        if n_fg != 0:
            raise InvariantViolation(f"sample {sid}: OnlyBGT sample has {n_fg} foreground px")
    if variant in (VariantKind.ORIGINAL, VariantKind.ONLY_BGT, VariantKind.MIXED_SAME):
        if sample.fg_label != sample.bg_label:
            raise InvariantViolation(
                f"sample {sid}: variant {variant.value} requires fg_label == bg_label, "
                f"got {sample.fg_label} != {sample.bg_label}"
            )
    if variant is VariantKind.ONLY_FG and n_fg < n_px:
        background = img[~sample.mask]
        if background.size and background.max() > 0.0:
            raise InvariantViolation(f"sample {sid}: OnlyFG background pixels must be black")


def validate_variant_set(vset: VariantSet) -> None:
    """Validate every sample of a set against its variant semantics."""
    seen: set[int] = set()
    for sample in vset.samples:
        if sample.id in seen:
            raise InvariantViolation(f"duplicate sample id {sample.id}")
        seen.add(sample.id)
        if sample.size != vset.image_size:
            raise InvariantViolation(f"sample {sample.id}: size != set image_size")
        validate_sample(sample, vset.variant, vset.num_classes)


def with_fields(sample: Sample, **kwargs) -> Sample:
    """Copy a sample with replaced fields (arrays are shared, not copied)."""
    return replace(sample, **kwargs)
