"""Measurements: per-variant accuracy, background gap, pair consistency
metrics, corner-crop positional check, SmoothGrad saliency, and sweeps.

All metrics are read-only over the model and deterministic given model,
dataset, and seed.  The background gap is always accuracy(MixedSame) minus
accuracy(MixedRand), in the units of its inputs.
"""

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CladError, ContractViolation, UndefinedMetric
from .netcore import Encoder, cosine_sim
from .rng import stream
from .types import Sample, VariantKind, VariantSet

_EVAL_BATCH = 256


def thread_cap(default: int = 1) -> int:
    """Worker parallelism cap from the CLAD_THREADS environment variable."""
    raw = os.environ.get("CLAD_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, default)


def predict(encoder: Encoder, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward pass; returns (features, logits) for an image stack."""
    feats = []
    logits = []
    for start in range(0, len(images), _EVAL_BATCH):
        f, l = encoder.forward(images[start : start + _EVAL_BATCH])
        feats.append(f)
        logits.append(l)
    return np.concatenate(feats), np.concatenate(logits)


def _set_images(vset: VariantSet) -> np.ndarray:
    return np.stack([s.image for s in vset.samples])


def accuracy(encoder: Encoder, vset: VariantSet) -> float:
    """Fraction of samples whose argmax logit equals fg_label, in [0, 1].

    OnlyBGT is scored against fg_label like every other variant; for that
    variant lower is better since the foreground is absent.
    """
    if len(vset) == 0:
        raise UndefinedMetric("accuracy of an empty set is undefined")
    if encoder.num_classes != vset.num_classes:
        raise ContractViolation("model and dataset class counts differ")
    _, logits = predict(encoder, _set_images(vset))
    labels = np.array([s.fg_label for s in vset.samples])
    return float((logits.argmax(axis=1) == labels).mean())


def bg_gap(acc_mixed_same: float, acc_mixed_rand: float) -> float:
    """Accuracy gained purely from background class signal (input units)."""
    return acc_mixed_same - acc_mixed_rand


def bg_gap_eval(encoder: Encoder, mixed_same: VariantSet, mixed_rand: VariantSet) -> float:
    """Evaluate both sets and return their accuracy gap, as a fraction."""
    if mixed_same.variant is not VariantKind.MIXED_SAME:
        raise ContractViolation("first set must be MixedSame")
    if mixed_rand.variant is not VariantKind.MIXED_RAND:
        raise ContractViolation("second set must be MixedRand")
    if {s.id for s in mixed_same.samples} != {s.id for s in mixed_rand.samples}:
        raise ContractViolation("MixedSame/MixedRand sets derive from different base splits")
    return bg_gap(accuracy(encoder, mixed_same), accuracy(encoder, mixed_rand))


def aligned_pairs(a: VariantSet, b: VariantSet) -> list[tuple[Sample, Sample]]:
    """Pair samples of two sets by id; the sets must cover identical ids."""
    by_id = b.by_id()
    if {s.id for s in a.samples} != set(by_id):
        raise ContractViolation("sets do not cover the same sample ids")
    return [(s, by_id[s.id]) for s in sorted(a.samples, key=lambda s: s.id)]


def _pair_features(encoder, pairs):
    first = np.stack([p[0].image for p in pairs])
    second = np.stack([p[1].image for p in pairs])
    feats_a, logits_a = predict(encoder, first)
    feats_b, logits_b = predict(encoder, second)
    return feats_a, feats_b, logits_a, logits_b


def feature_similarity_with_count(encoder, pairs) -> tuple[float, int]:
    """Mean pairwise feature cosine similarity and the zero-norm-excluded count."""
    if not pairs:
        raise UndefinedMetric("feature similarity of no pairs is undefined")
    feats_a, feats_b, _, _ = _pair_features(encoder, pairs)
    norms_a = np.linalg.norm(feats_a, axis=1)
    norms_b = np.linalg.norm(feats_b, axis=1)
    keep = (norms_a > 0) & (norms_b > 0)
    excluded = int((~keep).sum())
    if keep.sum() == 0:
        raise UndefinedMetric("all pairs excluded: zero-norm features")
    sims = (feats_a[keep] * feats_b[keep]).sum(axis=1) / (norms_a[keep] * norms_b[keep])
    return float(sims.mean()), excluded


def feature_similarity(encoder: Encoder, pairs) -> float:
    """Mean cosine similarity of features across aligned image pairs."""
    value, excluded = feature_similarity_with_count(encoder, pairs)
    if excluded:
        warnings.warn(f"feature_similarity: excluded {excluded} zero-norm pair(s)")
    return value


def decision_consistency(encoder: Encoder, pairs) -> float:
    """Fraction of pairs receiving the same argmax prediction (right or wrong)."""
    if not pairs:
        raise UndefinedMetric("decision consistency of no pairs is undefined")
    _, _, logits_a, logits_b = _pair_features(encoder, pairs)
    return float((logits_a.argmax(axis=1) == logits_b.argmax(axis=1)).mean())


# --------------------------------------------------------------------------
# metrics report


_VARIANT_COLUMNS = (
    ("acc_original", VariantKind.ORIGINAL),
    ("acc_only_fg", VariantKind.ONLY_FG),
    ("acc_only_bgt", VariantKind.ONLY_BGT),
    ("acc_mixed_same", VariantKind.MIXED_SAME),
    ("acc_mixed_rand", VariantKind.MIXED_RAND),
)

REPORT_COLUMNS = (
    "config_fingerprint",
    "seed_init",
    "seed_data",
    "seed_augment",
    *(name for name, _ in _VARIANT_COLUMNS),
    "bg_gap",
    "feature_similarity",
    "decision_consistency",
)


@dataclass
class MetricsReport:
    """Per-variant accuracy plus pair metrics for one trained model."""

    accuracies: dict[str, float]
    bg_gap: float
    feature_similarity: float
    decision_consistency: float
    config_fingerprint: str = ""
    seeds: dict[str, int] = field(default_factory=dict)
    excluded_pairs: int = 0

    def __post_init__(self):
        expected = self.accuracies[VariantKind.MIXED_SAME.value] - self.accuracies[
            VariantKind.MIXED_RAND.value
        ]
        if self.bg_gap != expected:
            raise ContractViolation("bg_gap does not equal acc(MixedSame) - acc(MixedRand)")
        for name, value in self.accuracies.items():
            if not 0.0 <= value <= 1.0:
                raise ContractViolation(f"accuracy[{name}]={value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "accuracies": dict(self.accuracies),
            "bg_gap": self.bg_gap,
            "feature_similarity": self.feature_similarity,
            "decision_consistency": self.decision_consistency,
            "config_fingerprint": self.config_fingerprint,
            "seeds": dict(self.seeds),
            "excluded_pairs": self.excluded_pairs,
        }

    def csv_row(self) -> list[str]:
        values = [
            self.config_fingerprint,
            str(self.seeds.get("init", "")),
            str(self.seeds.get("data", "")),
            str(self.seeds.get("augment", "")),
        ]
        values += [f"{self.accuracies[v.value]:.10g}" for _, v in _VARIANT_COLUMNS]
        values += [
            f"{self.bg_gap:.10g}",
            f"{self.feature_similarity:.10g}",
            f"{self.decision_consistency:.10g}",
        ]
        return values


def evaluate_model(
    encoder: Encoder,
    eval_sets: dict[VariantKind, VariantSet],
    config_fingerprint: str = "",
    seeds: dict[str, int] | None = None,
) -> MetricsReport:
    """Compute the full report over the five variants of one test split."""
    missing = [kind.value for _, kind in _VARIANT_COLUMNS if kind not in eval_sets]
    if missing:
        raise ContractViolation(f"evaluate_model needs all five variants, missing {missing}")
    accuracies = {
        kind.value: accuracy(encoder, eval_sets[kind]) for _, kind in _VARIANT_COLUMNS
    }
    pairs = aligned_pairs(eval_sets[VariantKind.ORIGINAL], eval_sets[VariantKind.MIXED_RAND])
    similarity, excluded = feature_similarity_with_count(encoder, pairs)
    return MetricsReport(
        accuracies=accuracies,
        bg_gap=bg_gap(
            accuracies[VariantKind.MIXED_SAME.value], accuracies[VariantKind.MIXED_RAND.value]
        ),
        feature_similarity=similarity,
        decision_consistency=decision_consistency(encoder, pairs),
        config_fingerprint=config_fingerprint,
        seeds=dict(seeds or {}),
        excluded_pairs=excluded,
    )


def write_report_csv(path, reports: list[MetricsReport]) -> None:
    lines = [",".join(REPORT_COLUMNS)]
    lines += [",".join(r.csv_row()) for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# corner crops


def five_crops(image: np.ndarray, side: int) -> list[np.ndarray]:
    """Four corner crops plus the center crop, each resized back to full size."""
    from .compose import resize_bilinear

    h, w = image.shape[:2]
    tops = {(0, 0), (0, w - side), (h - side, 0), (h - side, w - side)}
    corners = sorted(tops)
    center = ((h - side) // 2, (w - side) // 2)
    crops = []
    for top, left in corners + [center]:
        crops.append(resize_bilinear(image[top : top + side, left : left + side], h, w))
    return crops


def corner_crop_drop(encoder: Encoder, original_set: VariantSet, crop_fraction: float = 0.75) -> float:
    """Mean accuracy drop over the five crops, in accuracy points (x100)."""
    if len(original_set) == 0:
        raise UndefinedMetric("corner_crop_drop of an empty set is undefined")
    side = int(np.floor(crop_fraction * original_set.image_size))
    if side < 4:
        raise ContractViolation("crop side too small")
    labels = np.array([s.fg_label for s in original_set.samples])
    full_images = _set_images(original_set)
    _, logits = predict(encoder, full_images)
    acc_full = float((logits.argmax(axis=1) == labels).mean())
    per_image_crops = [five_crops(img, side) for img in full_images]
    drops = []
    for crop_index in range(5):
        cropped = np.stack([crops[crop_index] for crops in per_image_crops])
        _, logits_c = predict(encoder, cropped)
        acc_crop = float((logits_c.argmax(axis=1) == labels).mean())
        drops.append(acc_full - acc_crop)
    return float(np.mean(drops) * 100.0)


# --------------------------------------------------------------------------
# SmoothGrad


def smoothgrad(
    grad_fn,
    image: np.ndarray,
    target_class: int,
    n_samples: int = 25,
    sigma: float = 0.1,
    rng: np.random.Generator | int | None = None,
    normalize: bool = True,
) -> np.ndarray:
    """Noise-averaged absolute input gradient of the target-class logit.

    ``grad_fn(image, target_class)`` must return the (H, W, 3) input
    gradient.  Gaussian pixel noise with std ``sigma`` is added to each of
    ``n_samples`` copies; the channel-summed absolute gradients are averaged
    and, unless ``normalize=False``, min-max scaled to [0, 1].
    """
    if n_samples < 1 or sigma < 0.0:
        raise ContractViolation("need n_samples >= 1 and sigma >= 0")
    if isinstance(rng, (int, np.integer)):
        rng = stream(int(rng), "smoothgrad")
    elif rng is None:
        rng = stream(0, "smoothgrad")
    total = np.zeros(image.shape[:2], dtype=np.float64)
    for _ in range(n_samples):
        noisy = image if sigma == 0.0 else image + rng.normal(0.0, sigma, size=image.shape)
        grad = np.asarray(grad_fn(noisy.astype(np.float32), target_class), dtype=np.float64)
        if not np.isfinite(grad).all():
            raise CladError("non-finite input gradient in smoothgrad")
        total += np.abs(grad).sum(axis=2)
    saliency = total / n_samples
    if not normalize:
        return saliency
    low = saliency.min()
    high = saliency.max()
    if high > low:
        saliency = (saliency - low) / (high - low)
    else:
        saliency = np.zeros_like(saliency)
    return saliency


def encoder_grad_fn(encoder: Encoder):
    """Adapt an encoder to the grad_fn interface used by :func:`smoothgrad`."""
    from .netcore import input_gradient

    def grad_fn(image: np.ndarray, target_class: int) -> np.ndarray:
        return input_gradient(encoder, image[None], target_class)[0]

    return grad_fn


# --------------------------------------------------------------------------
# ablation sweeps


SWEEP_AXES = ("lambda", "queue_size", "negative_mode")

SWEEP_COLUMNS = (
    "axis",
    "value",
    "n_seeds",
    "status",
    *(name for name, _ in _VARIANT_COLUMNS),
    "bg_gap",
    "feature_similarity",
    "decision_consistency",
)


@dataclass
class SweepRow:
    axis: str
    value: object
    n_seeds: int
    status: str  # "ok" or "failed"
    means: dict[str, float] = field(default_factory=dict)

    def csv_row(self) -> list[str]:
        values = [self.axis, str(self.value), str(self.n_seeds), self.status]
        for column in SWEEP_COLUMNS[4:]:
            value = self.means.get(column)
            values.append("" if value is None else f"{value:.10g}")
        return values


def _config_with_axis_value(base_config, axis: str, value):
    from dataclasses import replace

    if axis == "lambda":
        return replace(base_config, loss=replace(base_config.loss, contrast_weight=float(value)))
    if axis == "queue_size":
        return replace(base_config, queue_size=int(value))
    if axis == "negative_mode":
        return replace(base_config, negative_mode=str(value))
    raise ContractViolation(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _run_cell(args):
    """Train + evaluate one (value, seed) cell; module-level for pickling."""
    base_config, axis, value, master_seed, train_set, eval_sets = args
    from .trainer import train

    config = _config_with_axis_value(base_config, axis, value).with_master_seed(master_seed)
    encoder, log = train(config, train_set)
    report = evaluate_model(
        encoder,
        eval_sets,
        seeds={"init": log.seeds.init, "data": log.seeds.data, "augment": log.seeds.augment},
    )
    return report


def ablation_sweep(
    base_config,
    axis: str,
    values,
    seeds,
    train_set: VariantSet,
    eval_sets: dict[VariantKind, VariantSet],
    out_csv=None,
    max_workers: int | None = None,
) -> list[SweepRow]:
    """Train per value x seed and report seed-mean metrics, one row per value.

    A failed cell marks its whole value row "failed"; the sweep continues.
    ``seeds`` are master seeds, expanded like the CLI does.
    """
    if not values:
        raise ContractViolation("sweep needs at least one value")
    seeds = list(seeds)
    if not seeds:
        raise ContractViolation("sweep needs at least one seed")
    if max_workers is None:
        max_workers = thread_cap(1)

    cells = [(value, seed) for value in values for seed in seeds]
    args = [(base_config, axis, value, seed, train_set, eval_sets) for value, seed in cells]
    results: dict[tuple, object] = {}
    if max_workers > 1 and len(cells) > 1:
        import multiprocessing as mp

        with ProcessPoolExecutor(
            max_workers=max_workers, mp_context=mp.get_context("spawn")
        ) as pool:
            for cell, outcome in zip(cells, pool.map(_run_cell_safe, args)):
                results[cell] = outcome
    else:
        for cell, arg in zip(cells, args):
            results[cell] = _run_cell_safe(arg)

    rows = []
    metric_names = SWEEP_COLUMNS[4:]
    for value in values:
        outcomes = [results[(value, seed)] for seed in seeds]
        failures = [o for o in outcomes if isinstance(o, str)]
        if failures:
            rows.append(SweepRow(axis, value, len(seeds), "failed"))
            continue
        means = {}
        for name, kind in _VARIANT_COLUMNS:
            means[name] = float(np.mean([o.accuracies[kind.value] for o in outcomes]))
        means["bg_gap"] = float(np.mean([o.bg_gap for o in outcomes]))
        means["feature_similarity"] = float(np.mean([o.feature_similarity for o in outcomes]))
        means["decision_consistency"] = float(
            np.mean([o.decision_consistency for o in outcomes])
        )
        assert set(means) == set(metric_names)
        rows.append(SweepRow(axis, value, len(seeds), "ok", means))

    if out_csv is not None:
        write_sweep_csv(out_csv, rows)
    return rows


def _run_cell_safe(args):
    try:
        return _run_cell(args)
    except CladError as exc:
        return f"failed: {exc}"


def write_sweep_csv(path, rows: list[SweepRow], config_fingerprint: str | None = None) -> None:
    lines = []
    if config_fingerprint is not None:
        lines.append(f"# config_fingerprint={config_fingerprint}")
    lines.append(",".join(SWEEP_COLUMNS))
    lines += [",".join(r.csv_row()) for r in rows]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
