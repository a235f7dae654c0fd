"""Dataset directory format: ``manifest.json`` + ``images/`` + ``masks/``.

Images are 8-bit RGB PNGs, masks 8-bit gray PNGs with values strictly in
{0, 255}; in-memory pixel values are ``png_value / 255``.  The manifest
records ``{format_version: 1, variant, num_classes, image_size, records}``
with one ``{id, image_file, mask_file|null, fg_label, bg_label}`` per
sample.  A ``checksums`` map (file name -> sha256) and an optional
``config_fingerprint`` are written alongside for integrity and provenance;
both are verified when present but tolerated when absent.
"""

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ChecksumError, InvariantViolation, ManifestError, MissingFileError
from .types import Sample, VariantKind, VariantSet, validate_variant_set

FORMAT_VERSION = 1
_REQUIRED_KEYS = {"format_version", "variant", "num_classes", "image_size", "records"}
_RECORD_KEYS = {"id", "image_file", "mask_file", "fg_label", "bg_label"}


def _to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(image, dtype=np.float64) * 255.0).astype(np.uint8)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_dataset(vset: VariantSet, directory: str | Path, config_fingerprint: str | None = None) -> Path:
    """Write a variant set; returns the directory path.  Round-trips exactly."""
    validate_variant_set(vset)
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)

    records = []
    checksums: dict[str, str] = {}
    for s in sorted(vset.samples, key=lambda s: s.id):
        image_file = f"images/{s.id:06d}.png"
        Image.fromarray(_to_uint8(s.image), mode="RGB").save(root / image_file)
        checksums[image_file] = _sha256(root / image_file)
        mask_file = None
        if s.mask.any():
            mask_file = f"masks/{s.id:06d}.png"
            Image.fromarray(s.mask.astype(np.uint8) * 255, mode="L").save(root / mask_file)
            checksums[mask_file] = _sha256(root / mask_file)
        records.append(
            {
                "id": s.id,
                "image_file": image_file,
                "mask_file": mask_file,
                "fg_label": s.fg_label,
                "bg_label": s.bg_label,
            }
        )

    manifest = {
        "format_version": FORMAT_VERSION,
        "variant": vset.variant.value,
        "num_classes": vset.num_classes,
        "image_size": vset.image_size,
        "records": records,
        "checksums": checksums,
    }
    if config_fingerprint is not None:
        manifest["config_fingerprint"] = config_fingerprint
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8"
    )
    return root


def _load_manifest(root: Path) -> dict:
    path = root / "manifest.json"
    if not path.is_file():
        raise ManifestError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest.json is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or not _REQUIRED_KEYS.issubset(manifest):
        missing = _REQUIRED_KEYS - set(manifest) if isinstance(manifest, dict) else _REQUIRED_KEYS
        raise ManifestError(f"manifest missing keys: {sorted(missing)}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise ManifestError(f"unsupported format_version {manifest['format_version']}")
    try:
        VariantKind(manifest["variant"])
    except ValueError:
        raise ManifestError(f"unknown variant {manifest['variant']!r}") from None
    return manifest


def _read_png(path: Path, checksums: dict[str, str], rel: str, sample_id) -> np.ndarray:
    if not path.is_file():
        raise MissingFileError(f"sample {sample_id}: {rel} referenced by manifest does not exist")
    if rel in checksums and _sha256(path) != checksums[rel]:
        raise ChecksumError(f"sample {sample_id}: {rel} does not match its recorded sha256")
    with Image.open(path) as img:
        return np.asarray(img)


def read_dataset(directory: str | Path) -> VariantSet:
    """Load and validate a dataset directory written by :func:`write_dataset`."""
    root = Path(directory)
    manifest = _load_manifest(root)
    variant = VariantKind(manifest["variant"])
    num_classes = int(manifest["num_classes"])
    image_size = int(manifest["image_size"])
    checksums = manifest.get("checksums", {})

    samples = []
    for rec in manifest["records"]:
        if not isinstance(rec, dict) or not _RECORD_KEYS.issubset(rec):
            raise ManifestError(f"record missing keys: {rec!r}")
        sid = rec["id"]
        raw = _read_png(root / rec["image_file"], checksums, rec["image_file"], sid)
        if raw.ndim != 3 or raw.shape != (image_size, image_size, 3):
            raise ManifestError(f"sample {sid}: image is not {image_size}x{image_size} RGB")
        image = raw.astype(np.float32) / np.float32(255.0)
        if rec["mask_file"] is None:
            mask = np.zeros((image_size, image_size), dtype=bool)
        else:
            raw_mask = _read_png(root / rec["mask_file"], checksums, rec["mask_file"], sid)
            if raw_mask.shape != (image_size, image_size):
                raise ManifestError(f"sample {sid}: mask is not {image_size}x{image_size} gray")
            values = np.unique(raw_mask)
            if not np.isin(values, (0, 255)).all():
                raise InvariantViolation(
                    f"sample {sid}: mask values must be in {{0, 255}}, got {values[:8].tolist()}"
                )
            mask = raw_mask == 255
        samples.append(Sample(image, mask, int(rec["fg_label"]), int(rec["bg_label"]), int(sid)))

    vset = VariantSet(variant, samples, num_classes, image_size)
    validate_variant_set(vset)
    return vset


def variant_sets_equal(a: VariantSet, b: VariantSet) -> bool:
    """Field-for-field equality of two variant sets (exact pixel comparison)."""
    if (a.variant, a.num_classes, a.image_size, len(a)) != (
        b.variant,
        b.num_classes,
        b.image_size,
        len(b),
    ):
        return False
    for sa, sb in zip(
        sorted(a.samples, key=lambda s: s.id), sorted(b.samples, key=lambda s: s.id)
    ):
        if (sa.id, sa.fg_label, sa.bg_label) != (sb.id, sb.fg_label, sb.bg_label):
            return False
        if not np.array_equal(sa.image, sb.image) or not np.array_equal(sa.mask, sb.mask):
            return False
    return True
