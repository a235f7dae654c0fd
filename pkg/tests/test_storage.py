import hashlib
import json

import numpy as np
import pytest
from PIL import Image

import cladlab as cl
from cladlab.errors import (
    ChecksumError,
    InvariantViolation,
    ManifestError,
    MissingFileError,
)


@pytest.fixture()
def written(tmp_path, small_variants):
    vset = small_variants[cl.VariantKind.MIXED_SAME]
    root = cl.write_dataset(vset, tmp_path / "ds", config_fingerprint="cafe00112233")
    return root, vset


def _manifest(root):
    return json.loads((root / "manifest.json").read_text())


def _rewrite(root, manifest):
    (root / "manifest.json").write_text(json.dumps(manifest))


def test_round_trip_identity(written):
    root, vset = written
    again = cl.read_dataset(root)
    assert cl.variant_sets_equal(vset, again)


def test_round_trip_only_bgt_null_masks(tmp_path, small_variants):
    vset = small_variants[cl.VariantKind.ONLY_BGT]
    root = cl.write_dataset(vset, tmp_path / "bgt")
    manifest = _manifest(root)
    assert all(rec["mask_file"] is None for rec in manifest["records"])
    assert cl.variant_sets_equal(vset, cl.read_dataset(root))


def test_manifest_carries_fingerprint(written):
    root, _ = written
    assert _manifest(root)["config_fingerprint"] == "cafe00112233"


def test_missing_image_file_error_names_id(written):
    root, vset = written
    victim = vset.samples[3].id
    (root / "images" / f"{victim:06d}.png").unlink()
    with pytest.raises(MissingFileError, match=str(victim)):
        cl.read_dataset(root)


def test_corrupted_file_raises_checksum_error(written):
    root, vset = written
    victim = root / "images" / f"{vset.samples[0].id:06d}.png"
    blob = bytearray(victim.read_bytes())
    blob[-1] ^= 0xFF
    victim.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        cl.read_dataset(root)


def test_malformed_manifest_raises(written):
    root, _ = written
    (root / "manifest.json").write_text("{not json")
    with pytest.raises(ManifestError):
        cl.read_dataset(root)


def test_missing_manifest_keys_raises(written):
    root, _ = written
    manifest = _manifest(root)
    del manifest["records"]
    _rewrite(root, manifest)
    with pytest.raises(ManifestError, match="records"):
        cl.read_dataset(root)


def test_unknown_variant_raises(written):
    root, _ = written
    manifest = _manifest(root)
    manifest["variant"] = "MostlyCloudy"
    _rewrite(root, manifest)
    with pytest.raises(ManifestError, match="MostlyCloudy"):
        cl.read_dataset(root)


def test_mixed_same_label_mismatch_is_validation_error(written):
    root, _ = written
    manifest = _manifest(root)
    rec = manifest["records"][0]
    rec["bg_label"] = (rec["bg_label"] + 1) % manifest["num_classes"]
    _rewrite(root, manifest)
    with pytest.raises(InvariantViolation, match="MixedSame"):
        cl.read_dataset(root)


def test_gray_mask_values_rejected(written):
    root, vset = written
    victim = vset.samples[1].id
    rel = f"masks/{victim:06d}.png"
    arr = np.full((32, 32), 128, dtype=np.uint8)
    Image.fromarray(arr, "L").save(root / rel)
    manifest = _manifest(root)
    manifest["checksums"][rel] = hashlib.sha256((root / rel).read_bytes()).hexdigest()
    _rewrite(root, manifest)
    with pytest.raises(InvariantViolation, match="mask values"):
        cl.read_dataset(root)


def test_reader_tolerates_absent_checksums(written):
    root, vset = written
    manifest = _manifest(root)
    del manifest["checksums"]
    _rewrite(root, manifest)
    assert cl.variant_sets_equal(vset, cl.read_dataset(root))


def test_written_bytes_are_deterministic(tmp_path, small_variants):
    vset = small_variants[cl.VariantKind.ORIGINAL]
    a = cl.write_dataset(vset, tmp_path / "a")
    b = cl.write_dataset(vset, tmp_path / "b")
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    for rec in _manifest(a)["records"]:
        assert (a / rec["image_file"]).read_bytes() == (b / rec["image_file"]).read_bytes()
