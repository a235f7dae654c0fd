"""Image operators for contrastive pair construction.

Positives are built by keeping the anchor's foreground and replacing the
background with one from a different class (``swap_background``).  The
texture-bias analog replaces the foreground fill instead
(``swap_texture``).  Stochastic augmentation (``augment``) is applied after
background augmentation, never before.
"""

from dataclasses import dataclass

import numpy as np

from . import procedural
from .errors import ConfigurationError, ContractViolation, InvariantViolation
from .rng import stream
from .types import Sample, with_fields


def _require_mask(sample: Sample, op: str) -> None:
    if not sample.mask.any():
        raise InvariantViolation(f"{op}: sample {sample.id} has no foreground mask")


def fill_foreground_from_background(
    image: np.ndarray, mask: np.ndarray, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Fill masked pixels by tiling a patch sampled from the image's own background.

    Scans square patches from large to small and uses the first one that is
    free of foreground; a 1x1 background patch always exists since masks are
    proper subsets.  The optional rng only rotates the scan start, so donor
    banks refreshed with different seeds pick different patches.
    """
    if not mask.any():
        return image
    size = mask.shape[0]
    for patch_size in (8, 6, 4, 3, 2, 1):
        if patch_size > size:
            continue
        step = max(1, patch_size // 2)
        starts = np.arange(0, size - patch_size + 1, step)
        positions = [(t, l) for t in starts for l in starts]
        if rng is not None and len(positions) > 1:
            offset = int(rng.integers(0, len(positions)))
            positions = positions[offset:] + positions[:offset]
        for top, left in positions:
            window = mask[top : top + patch_size, left : left + patch_size]
            if not window.any():
                patch = image[top : top + patch_size, left : left + patch_size]
                reps = -(-size // patch_size)  # ceil
                tiled = np.tile(patch, (reps, reps, 1))[:size, :size]
                out = image.copy()
                out[mask] = tiled[mask]
                return out
    raise InvariantViolation("mask covers every candidate patch")  # unreachable


def replace_background(anchor: Sample, donor: Sample, rng: np.random.Generator | None = None) -> Sample:
    """Anchor foreground composited over the donor's background (no class contract).

    If the donor still contains a foreground, its region is first filled by
    the donor's own-background tiling rule.
    """
    _require_mask(anchor, "replace_background")
    if anchor.image.shape != donor.image.shape:
        raise ContractViolation("replace_background: anchor/donor size mismatch")
    donor_bg = fill_foreground_from_background(donor.image, donor.mask, rng)
    image = np.where(anchor.mask[..., None], anchor.image, donor_bg)
    return Sample(
        image=image,
        mask=anchor.mask,
        fg_label=anchor.fg_label,
        bg_label=donor.bg_label,
        id=anchor.id,
    )


def swap_background(anchor: Sample, donor: Sample, rng: np.random.Generator | None = None) -> Sample:
    """Build a positive sample: anchor foreground over a different-class background."""
    if donor.fg_label == anchor.fg_label:
        raise ContractViolation(
            f"swap_background: donor class {donor.fg_label} equals anchor class"
        )
    return replace_background(anchor, donor, rng)


def swap_texture(
    anchor: Sample,
    donor_texture_class: int,
    num_classes: int,
    rng: np.random.Generator,
) -> Sample:
    """Re-fill the anchor's foreground with another class's procedural texture.

    Shape (mask) and background are unchanged; this is the cue-conflict
    construction for the texture-bias variant of the method.
    """
    _require_mask(anchor, "swap_texture")
    if not 0 <= donor_texture_class < num_classes:
        raise ConfigurationError(f"unknown texture class {donor_texture_class}")
    texture = procedural.render_texture(
        donor_texture_class, num_classes, anchor.size, rng
    ).astype(np.float32)
    texture = np.round(texture * 255.0).astype(np.float32) / np.float32(255.0)
    image = np.where(anchor.mask[..., None], texture, anchor.image)
    return with_fields(anchor, image=image)


# --------------------------------------------------------------------------
# stochastic augmentation


@dataclass(frozen=True)
class AugmentParams:
    """Crop/flip/jitter magnitudes.  Defaults are declared values, not claims."""

    crop_scale: tuple[float, float] = (0.7, 1.0)  # area fraction
    flip_prob: float = 0.5
    jitter: float = 0.2  # brightness/contrast/saturation half-range


#: Degenerate parameters under which augment() is an exact identity.
IDENTITY_AUGMENT = AugmentParams(crop_scale=(1.0, 1.0), flip_prob=0.0, jitter=0.0)

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-aligned bilinear resize; exact passthrough when sizes match."""
    in_h, in_w = image.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return image.copy()
    out = image
    for axis, in_n, out_n in ((0, in_h, out_h), (1, in_w, out_w)):
        coords = (np.arange(out_n) + 0.5) * (in_n / out_n) - 0.5
        lo = np.clip(np.floor(coords).astype(int), 0, in_n - 1)
        hi = np.clip(lo + 1, 0, in_n - 1)
        frac = np.clip(coords - lo, 0.0, 1.0).astype(np.float32)
        shape = [1, 1, 1]
        shape[axis] = out_n
        w = frac.reshape(shape)
        out = np.take(out, lo, axis=axis) * (1.0 - w) + np.take(out, hi, axis=axis) * w
    return out.astype(np.float32)


def augment(
    image: np.ndarray,
    seed: int | np.random.Generator,
    params: AugmentParams = AugmentParams(),
) -> np.ndarray:
    """Random resized crop, horizontal flip, then color jitter, clipped to [0, 1].

    Deterministic for a fixed seed.  Degenerate parameters
    (``IDENTITY_AUGMENT``) reproduce the input exactly.
    """
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "augment")
    h, w = image.shape[:2]
    out = np.asarray(image, dtype=np.float32)

    area = rng.uniform(params.crop_scale[0], params.crop_scale[1])
    side_h = max(1, int(round(h * float(np.sqrt(area)))))
    side_w = max(1, int(round(w * float(np.sqrt(area)))))
    top = int(rng.integers(0, h - side_h + 1))
    left = int(rng.integers(0, w - side_w + 1))
    if (side_h, side_w) != (h, w):
        out = resize_bilinear(out[top : top + side_h, left : left + side_w], h, w)

    if rng.random() < params.flip_prob:
        out = out[:, ::-1]

    j = params.jitter
    brightness, contrast, saturation = 1.0 + j * rng.uniform(-1.0, 1.0, size=3)
    if brightness != 1.0:
        out = out * np.float32(brightness)
    if contrast != 1.0:
        mean = (out @ _LUMA).mean(dtype=np.float64)
        out = np.float32(mean) + np.float32(contrast) * (out - np.float32(mean))
    if saturation != 1.0:
        gray = (out @ _LUMA)[..., None]
        out = gray + np.float32(saturation) * (out - gray)
    return np.ascontiguousarray(np.clip(out, 0.0, 1.0), dtype=np.float32)


# --------------------------------------------------------------------------
# donor backgrounds for positive construction


class DonorBank:
    """Per-epoch bank of background-only donors built from a training split.

    One donor per training image: its foreground is removed by the
    own-background tiling rule, with patch choice re-seeded each refresh.
    """

    def __init__(self, samples: list[Sample], seed: int):
        if not samples:
            raise ContractViolation("DonorBank needs at least one sample")
        self._source = samples
        self._seed = seed
        self.donors: list[Sample] = []
        self._class_of: np.ndarray = np.array([], dtype=int)
        self.refresh(0)

    def refresh(self, epoch: int) -> None:
        donors = []
        for s in self._source:
            rng = stream(self._seed, "donor_bank", epoch, s.id)
            image = fill_foreground_from_background(s.image, s.mask, rng)
            donors.append(
                Sample(
                    image=image,
                    mask=np.zeros_like(s.mask),
                    fg_label=s.fg_label,
                    bg_label=s.bg_label,
                    id=s.id,
                )
            )
        self.donors = donors
        self._class_of = np.array([d.bg_label for d in donors])

    def draw(self, anchor_fg_label: int, rng: np.random.Generator) -> Sample:
        """Uniform donor among entries whose class differs from the anchor's."""
        eligible = np.flatnonzero(self._class_of != anchor_fg_label)
        if eligible.size == 0:
            raise ContractViolation("no donor with a different class available")
        return self.donors[int(eligible[rng.integers(0, eligible.size)])]
