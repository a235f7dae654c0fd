import numpy as np
import pytest

import cladlab as cl
from cladlab.errors import ConfigurationError, InvariantViolation
from cladlab.types import validate_sample

from util import probe_accuracy


def test_base_set_counts_and_label_equality(small_base, small_spec):
    assert len(small_base) == small_spec.num_classes * small_spec.samples_per_class
    assert all(s.fg_label == s.bg_label for s in small_base.samples)
    assert sorted(s.id for s in small_base.samples) == list(range(len(small_base)))


def test_generation_is_deterministic(small_spec, small_base):
    again = cl.gen_base(small_spec)
    assert cl.variant_sets_equal(small_base, again)


def test_masks_are_proper_subsets(small_base):
    for s in small_base.samples:
        n = int(s.mask.sum())
        assert 1 <= n <= s.mask.size - 1


def test_invalid_specs_rejected():
    with pytest.raises(ConfigurationError):
        cl.gen_base(cl.DatasetSpec(num_classes=1))
    with pytest.raises(ConfigurationError):
        cl.gen_base(cl.DatasetSpec(image_size=4))
    with pytest.raises(ConfigurationError):
        cl.gen_base(cl.DatasetSpec(num_classes=30))


def _mean_color(image, where):
    return image[where].mean(axis=0)


def test_background_mean_color_probe_beats_chance(small_base, small_spec):
    # the independent oracle for "backgrounds are class-informative"
    feats = np.stack([_mean_color(s.image, ~s.mask) for s in small_base.samples])
    labels = np.array([s.bg_label for s in small_base.samples])
    half = len(feats) // 2
    order = np.random.default_rng(0).permutation(len(feats))
    acc = probe_accuracy(
        feats[order[:half]], labels[order[:half]],
        feats[order[half:]], labels[order[half:]],
        small_spec.num_classes,
    )
    assert acc > 1.0 / small_spec.num_classes


def test_foreground_probe_beats_chance(small_base, small_spec):
    only_fg = cl.make_variant(small_base, cl.VariantKind.ONLY_FG, seed=1)
    feats = np.stack([s.image[::4, ::4].reshape(-1) for s in only_fg.samples])
    labels = np.array([s.fg_label for s in only_fg.samples])
    half = len(feats) // 2
    order = np.random.default_rng(0).permutation(len(feats))
    acc = probe_accuracy(
        feats[order[:half]], labels[order[:half]],
        feats[order[half:]], labels[order[half:]],
        small_spec.num_classes,
    )
    assert acc > 1.0 / small_spec.num_classes


def test_variant_original_is_identity(small_base):
    same = cl.make_variant(small_base, cl.VariantKind.ORIGINAL, seed=99)
    assert cl.variant_sets_equal(small_base, same)


def test_only_fg_blacks_out_background(small_variants):
    for s in small_variants[cl.VariantKind.ONLY_FG].samples:
        assert s.image[~s.mask].max() == 0.0
        assert s.mask.any()


def test_only_bgt_removes_foreground_and_keeps_background(small_base, small_variants):
    originals = small_base.by_id()
    for s in small_variants[cl.VariantKind.ONLY_BGT].samples:
        orig = originals[s.id]
        assert not s.mask.any()
        assert np.array_equal(s.image[~orig.mask], orig.image[~orig.mask])
        # filled pixels must reuse colors present in this image's own background
        bg_colors = {tuple(px) for px in orig.image[~orig.mask].tolist()}
        filled = {tuple(px) for px in s.image[orig.mask].tolist()}
        assert filled <= bg_colors


def test_mixed_same_keeps_foreground_and_class_background(small_base, small_variants):
    originals = small_base.by_id()
    changed = 0
    for s in small_variants[cl.VariantKind.MIXED_SAME].samples:
        orig = originals[s.id]
        assert s.fg_label == s.bg_label == orig.fg_label
        assert np.array_equal(s.image[s.mask], orig.image[orig.mask])
        if not np.array_equal(s.image[~s.mask], orig.image[~orig.mask]):
            changed += 1
    assert changed == len(small_base)


def test_mixed_rand_bg_labels_roughly_uniform(default_base):
    # frequency-count oracle against the multinomial +-3 sigma band, at the
    # full 1800-sample scale
    mixed = cl.make_variant(default_base, cl.VariantKind.MIXED_RAND, seed=2)
    counts = np.bincount([s.bg_label for s in mixed.samples], minlength=9)
    n = len(mixed)
    expected = n / 9.0
    sigma = np.sqrt(n * (1 / 9) * (8 / 9))
    assert (np.abs(counts - expected) <= 3 * sigma).all(), counts
    originals = default_base.by_id()
    for s in mixed.samples:
        assert s.fg_label == originals[s.id].fg_label


def test_make_variant_requires_masks(small_base):
    broken = cl.VariantSet(
        cl.VariantKind.ORIGINAL,
        [
            cl.Sample(
                image=np.zeros((32, 32, 3), dtype=np.float32),
                mask=np.zeros((32, 32), dtype=bool),
                fg_label=0,
                bg_label=0,
                id=1,
            )
        ],
        num_classes=9,
        image_size=32,
    )
    with pytest.raises(InvariantViolation):
        cl.make_variant(broken, cl.VariantKind.ONLY_FG, seed=0)


def test_make_variant_rejects_non_original_base(small_variants):
    with pytest.raises(InvariantViolation):
        cl.make_variant(small_variants[cl.VariantKind.ONLY_FG], cl.VariantKind.ONLY_BGT)


def test_validate_sample_rejects_label_out_of_range():
    sample = cl.Sample(
        image=np.zeros((8, 8, 3), dtype=np.float32),
        mask=np.eye(8, dtype=bool),
        fg_label=11,
        bg_label=0,
        id=0,
    )
    with pytest.raises(InvariantViolation):
        validate_sample(sample, cl.VariantKind.MIXED_RAND, num_classes=9)


def test_stratified_split_is_aligned_and_stratified(small_base, small_spec):
    train, test = cl.stratified_split(small_base, 0.2, seed=3)
    assert len(train) + len(test) == len(small_base)
    train_ids = {s.id for s in train.samples}
    assert train_ids.isdisjoint({s.id for s in test.samples})
    for k in range(small_spec.num_classes):
        n_test = sum(1 for s in test.samples if s.fg_label == k)
        assert n_test == round(small_spec.samples_per_class * 0.2)


def test_benchmark_variants_share_foregrounds_per_split(small_spec):
    bench = cl.generate_benchmark(small_spec)
    for split in ("train", "test"):
        ids = {s.id for s in bench[split][cl.VariantKind.ORIGINAL].samples}
        for kind in cl.ALL_VARIANTS:
            assert {s.id for s in bench[split][kind].samples} == ids
        origs = bench[split][cl.VariantKind.ORIGINAL].by_id()
        for s in bench[split][cl.VariantKind.MIXED_RAND].samples:
            orig = origs[s.id]
            assert np.array_equal(s.image[s.mask], orig.image[orig.mask])
