"""Synthetic 9-class benchmark with exact masks and all five dataset variants.

The base set pairs each class's polygon family with the same class's texture
family (foreground and background labels coincide, mirroring the
foreground/background correlation of natural photo datasets).  Variants then
black out the background, remove the foreground, or transplant backgrounds
within or across classes.  Generation is a pure function of the
:class:`~cladlab.types.DatasetSpec`, including its seed.
"""

import numpy as np

from . import procedural
from .compose import fill_foreground_from_background, replace_background
from .errors import InvariantViolation
from .rng import stream
from .types import (
    DatasetSpec,
    Sample,
    VariantKind,
    VariantSet,
    validate_variant_set,
)


def _quantize(image: np.ndarray) -> np.ndarray:
    """Snap float pixels to the 8-bit grid so disk round-trips are exact."""
    return (np.round(np.clip(image, 0.0, 1.0) * 255.0) / np.float32(255.0)).astype(np.float32)


def _render_sample(spec: DatasetSpec, class_index: int, index_in_class: int) -> Sample:
    rng = stream(spec.seed, "sample", class_index, index_in_class)
    size = spec.image_size
    background = procedural.render_texture(
        class_index,
        spec.num_classes,
        size,
        rng,
        hue_jitter=spec.bg_hue_jitter,
        saturation=spec.bg_saturation,
        contrast=spec.bg_contrast,
    )

    center = rng.uniform(spec.fg_center_span[0], spec.fg_center_span[1], size=2) * size
    radius = rng.uniform(spec.fg_radius[0], spec.fg_radius[1]) * size
    rotation = rng.uniform(0.0, 2.0 * np.pi)
    vertices = procedural.polygon_vertices(class_index, (center[0], center[1]), radius, rotation)
    mask = procedural.rasterize_polygon(vertices, size)

    hue = procedural.class_fg_hue(class_index, spec.num_classes) + rng.uniform(
        -spec.fg_hue_spread, spec.fg_hue_spread
    )
    fill = procedural.hsv_to_rgb(hue, rng.uniform(0.55, 1.0), rng.uniform(0.55, 1.0))
    image = np.where(mask[..., None], fill, background)
    return Sample(
        image=_quantize(image),
        mask=mask,
        fg_label=class_index,
        bg_label=class_index,
        id=class_index * spec.samples_per_class + index_in_class,
    )


def gen_base(spec: DatasetSpec) -> VariantSet:
    """Generate the Original variant: class shape on the same class's texture."""
    spec.validate()
    samples = [
        _render_sample(spec, k, i)
        for k in range(spec.num_classes)
        for i in range(spec.samples_per_class)
    ]
    vset = VariantSet(
        variant=VariantKind.ORIGINAL,
        samples=samples,
        num_classes=spec.num_classes,
        image_size=spec.image_size,
    )
    validate_variant_set(vset)
    return vset


def _donor_index(
    ids_by_class: list[np.ndarray], donor_class: int, own_id: int, rng: np.random.Generator
) -> int:
    """Uniform donor id within a class, never the sample itself."""
    pool = ids_by_class[donor_class]
    pool = pool[pool != own_id]
    if pool.size == 0:
        raise InvariantViolation(f"no donor available in class {donor_class}")
    return int(pool[rng.integers(0, pool.size)])


def make_variant(base: VariantSet, kind: VariantKind, seed: int = 0) -> VariantSet:
    """Derive one of the five variants from an Original set with masks.

    OnlyFG blacks out the background; OnlyBGT removes the foreground by
    tiling the image's own background; MixedSame / MixedRand transplant a
    background from another image of the same / a uniformly random class.
    Sample ids are preserved, so variant sets stay aligned pairwise.
    """
    kind = VariantKind(kind)
    if base.variant is not VariantKind.ORIGINAL:
        raise InvariantViolation("make_variant requires an Original base set")
    for s in base.samples:
        if not s.mask.any():
            raise InvariantViolation(f"sample {s.id}: missing foreground mask")

    by_id = base.by_id()
    ids_by_class = [
        np.array(sorted(s.id for s in base.samples if s.fg_label == k))
        for k in range(base.num_classes)
    ]

    out: list[Sample] = []
    for s in base.samples:
        rng = stream(seed, "variant", kind.value, s.id)
        if kind is VariantKind.ORIGINAL:
            out.append(s)
        elif kind is VariantKind.ONLY_FG:
            image = np.where(s.mask[..., None], s.image, np.float32(0.0))
            out.append(Sample(image, s.mask, s.fg_label, s.bg_label, s.id))
        elif kind is VariantKind.ONLY_BGT:
            image = fill_foreground_from_background(s.image, s.mask, rng)
            out.append(Sample(image, np.zeros_like(s.mask), s.fg_label, s.bg_label, s.id))
        elif kind is VariantKind.MIXED_SAME:
            donor = by_id[_donor_index(ids_by_class, s.fg_label, s.id, rng)]
            out.append(replace_background(s, donor, rng))
        elif kind is VariantKind.MIXED_RAND:
            donor_class = int(rng.integers(0, base.num_classes))
            donor = by_id[_donor_index(ids_by_class, donor_class, s.id, rng)]
            out.append(replace_background(s, donor, rng))
    vset = VariantSet(kind, out, base.num_classes, base.image_size)
    validate_variant_set(vset)
    return vset


def stratified_split(
    base: VariantSet, test_fraction: float = 0.2, seed: int | None = None
) -> tuple[VariantSet, VariantSet]:
    """Class-stratified train/test split of an Original set.

    Run before variant construction so every variant of a split shares the
    same underlying foregrounds (paired metrics rely on this alignment).
    """
    if seed is None:
        seed = 0
    train: list[Sample] = []
    test: list[Sample] = []
    for k in range(base.num_classes):
        members = [s for s in base.samples if s.fg_label == k]
        members.sort(key=lambda s: s.id)
        order = stream(seed, "split", k).permutation(len(members))
        n_test = int(round(len(members) * test_fraction))
        chosen = set(order[:n_test].tolist())
        for i, s in enumerate(members):
            (test if i in chosen else train).append(s)
    train.sort(key=lambda s: s.id)
    test.sort(key=lambda s: s.id)
    mk = lambda samples: VariantSet(VariantKind.ORIGINAL, samples, base.num_classes, base.image_size)
    return mk(train), mk(test)


ALL_VARIANTS = (
    VariantKind.ORIGINAL,
    VariantKind.ONLY_FG,
    VariantKind.ONLY_BGT,
    VariantKind.MIXED_SAME,
    VariantKind.MIXED_RAND,
)


def generate_benchmark(spec: DatasetSpec) -> dict[str, dict[VariantKind, VariantSet]]:
    """Base set, split 80/20, then all five variants per split.

    Returns ``{"train": {variant: set}, "test": {variant: set}}``.  Variant
    seeds are derived from the spec seed, so the whole benchmark is a pure
    function of the spec.
    """
    base = gen_base(spec)
    train, test = stratified_split(base, 0.2, seed=spec.seed)
    result: dict[str, dict[VariantKind, VariantSet]] = {}
    for split_name, split_set in (("train", train), ("test", test)):
        variant_seed = stream(spec.seed, "variants", split_name).integers(0, 2**62)
        result[split_name] = {
            kind: make_variant(split_set, kind, int(variant_seed) + i)
            for i, kind in enumerate(ALL_VARIANTS)
        }
    return result
