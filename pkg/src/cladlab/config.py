"""JSON run/spec configuration: defaults, file merge, overrides, fingerprint.

A resolved config is a plain dict with every knob present.  Its fingerprint
is the first 12 hex digits of the sha256 of the canonical JSON encoding;
every artifact a run writes embeds this value so reports are traceable.
Paths are never part of a resolved config.
"""

import hashlib
import json
from pathlib import Path

from .compose import AugmentParams
from .errors import ConfigurationError
from .netcore import LossConfig, LossVariant
from .trainer import RunConfig, Seeds
from .types import DatasetSpec


def config_fingerprint(resolved: dict) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | Path | None, defaults: dict, overrides: list[str] = ()) -> dict:
    """defaults <- file <- key=value overrides; unknown keys are rejected."""
    resolved = dict(defaults)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config {path} must be a JSON object")
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(loaded)
    for override in overrides:
        key, value = _parse_override(override)
        if key not in defaults:
            raise ConfigurationError(f"unknown config key {key!r}")
        resolved[key] = value
    return resolved


# --------------------------------------------------------------------------
# dataset spec


SPEC_DEFAULTS = {
    "num_classes": 9,
    "image_size": 32,
    "samples_per_class": 200,
    "seed": 7,
    "fg_radius": [0.24, 0.32],
    "fg_center_span": [0.35, 0.65],
    "fg_hue_spread": 0.03,
    "bg_hue_jitter": 0.10,
    "bg_saturation": [0.20, 0.40],
    "bg_contrast": 0.5,
}


def dataset_spec_from_dict(resolved: dict) -> DatasetSpec:
    spec = DatasetSpec(
        num_classes=int(resolved["num_classes"]),
        image_size=int(resolved["image_size"]),
        samples_per_class=int(resolved["samples_per_class"]),
        seed=int(resolved["seed"]),
        fg_radius=tuple(resolved["fg_radius"]),
        fg_center_span=tuple(resolved["fg_center_span"]),
        fg_hue_spread=float(resolved["fg_hue_spread"]),
        bg_hue_jitter=float(resolved["bg_hue_jitter"]),
        bg_saturation=tuple(resolved["bg_saturation"]),
        bg_contrast=float(resolved["bg_contrast"]),
    )
    spec.validate()
    return spec


def dataset_spec_to_dict(spec: DatasetSpec) -> dict:
    return {
        "num_classes": spec.num_classes,
        "image_size": spec.image_size,
        "samples_per_class": spec.samples_per_class,
        "seed": spec.seed,
        "fg_radius": list(spec.fg_radius),
        "fg_center_span": list(spec.fg_center_span),
        "fg_hue_spread": spec.fg_hue_spread,
        "bg_hue_jitter": spec.bg_hue_jitter,
        "bg_saturation": list(spec.bg_saturation),
        "bg_contrast": spec.bg_contrast,
    }


# --------------------------------------------------------------------------
# run config


RUN_DEFAULTS = {
    "variant": "clad",
    "contrast_weight": 1.0,
    "temperature": 0.2,
    "queue_size": 32,
    "batch_size": 64,
    "epochs": 20,
    "lr": 1e-3,
    "lr_decayed": 1e-4,
    "lr_decay_epoch": 10,
    "seed": 0,  # master seed; expanded into init/data/augment streams
    "donor_mode": "bank",
    "negative_mode": "keyed",
    "crop_scale": [0.7, 1.0],
    "flip_prob": 0.5,
    "jitter": 0.2,
    "channels": [16, 32, 64],
}


def run_config_from_dict(resolved: dict) -> RunConfig:
    try:
        variant = LossVariant(resolved["variant"])
    except ValueError:
        raise ConfigurationError(f"unknown loss variant {resolved['variant']!r}") from None
    config = RunConfig(
        loss=LossConfig(
            variant=variant,
            contrast_weight=float(resolved["contrast_weight"]),
            temperature=float(resolved["temperature"]),
        ),
        queue_size=int(resolved["queue_size"]),
        batch_size=int(resolved["batch_size"]),
        epochs=int(resolved["epochs"]),
        lr=float(resolved["lr"]),
        lr_decayed=float(resolved["lr_decayed"]),
        lr_decay_epoch=int(resolved["lr_decay_epoch"]),
        donor_mode=str(resolved["donor_mode"]),
        negative_mode=str(resolved["negative_mode"]),
        augment_params=AugmentParams(
            crop_scale=tuple(resolved["crop_scale"]),
            flip_prob=float(resolved["flip_prob"]),
            jitter=float(resolved["jitter"]),
        ),
        channels=tuple(int(c) for c in resolved["channels"]),
    ).with_master_seed(int(resolved["seed"]))
    config.validate()
    return config


def run_config_to_dict(config: RunConfig, master_seed: int) -> dict:
    return {
        "variant": config.loss.variant.value,
        "contrast_weight": config.loss.contrast_weight,
        "temperature": config.loss.temperature,
        "queue_size": config.queue_size,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "lr": config.lr,
        "lr_decayed": config.lr_decayed,
        "lr_decay_epoch": config.lr_decay_epoch,
        "seed": master_seed,
        "donor_mode": config.donor_mode,
        "negative_mode": config.negative_mode,
        "crop_scale": list(config.augment_params.crop_scale),
        "flip_prob": config.augment_params.flip_prob,
        "jitter": config.augment_params.jitter,
        "channels": list(config.channels),
    }


def seeds_to_dict(seeds: Seeds) -> dict:
    return {"init": seeds.init, "data": seeds.data, "augment": seeds.augment}
