"""Training loop: positives, dictionary negatives, combined loss, Adam.

Per batch, in this fixed order: build one positive per anchor (background
swap, then stochastic augmentation), augment anchors, forward both, draw
negatives keyed by each anchor's foreground class, compute the combined
loss, apply one Adam step, and only then enqueue the batch's positive
features into the dictionary.  Drawing strictly before enqueueing keeps an
anchor's own same-batch positive out of its negative set.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .compose import AugmentParams, DonorBank, augment, swap_background
from .errors import ConfigurationError, ContractViolation, InvariantViolation, NumericFault
from .negdict import NegativeDictionary
from .netcore import (
    DEFAULT_CHANNELS,
    Encoder,
    LossConfig,
    LossVariant,
    contrastive_batch,
    cross_entropy_batch,
)
from .rng import stream
from .types import VariantKind, VariantSet


@dataclass(frozen=True)
class Seeds:
    init: int = 0
    data: int = 1
    augment: int = 2


@dataclass(frozen=True)
class RunConfig:
    """All knobs of one training run; a pure function input together with data."""

    loss: LossConfig = LossConfig()
    queue_size: int = 32
    batch_size: int = 64
    epochs: int = 20
    lr: float = 1e-3
    lr_decayed: float = 1e-4
    lr_decay_epoch: int = 10
    seeds: Seeds = Seeds()
    donor_mode: str = "bank"  # or "in_batch"
    negative_mode: str = "keyed"  # or "trivial"
    augment_params: AugmentParams = AugmentParams()
    channels: tuple[int, int, int] = DEFAULT_CHANNELS

    def validate(self) -> None:
        self.loss.validate()
        if self.queue_size < 1:
            raise ConfigurationError("queue_size must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size must be >= 1 and epochs >= 0")
        if self.lr_decay_epoch > self.epochs:
            raise ConfigurationError("lr_decay_epoch must be <= epochs")
        if self.donor_mode not in ("bank", "in_batch"):
            raise ConfigurationError(f"unknown donor_mode {self.donor_mode!r}")
        if self.negative_mode not in ("keyed", "trivial"):
            raise ConfigurationError(f"unknown negative_mode {self.negative_mode!r}")

    def with_master_seed(self, master: int) -> "RunConfig":
        """Expand one master seed into independent init/data/augment seeds."""
        derived = stream(master, "run_seeds").integers(0, 2**62, size=3)
        return replace(
            self,
            seeds=Seeds(init=int(derived[0]), data=int(derived[1]), augment=int(derived[2])),
        )


@dataclass
class EpochStats:
    epoch: int
    mean_class_loss: float
    mean_con_loss: float
    lr: float
    dict_occupancy: float


@dataclass
class TrainLog:
    """Per-epoch statistics plus instrumentation counters for the whole run."""

    epochs: list[EpochStats] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    seeds: Seeds = Seeds()
    wall_time: float = 0.0

    CSV_HEADER = "epoch,mean_class_loss,mean_con_loss,lr,dict_occupancy"

    def write_csv(self, path, config_fingerprint: str | None = None) -> None:
        lines = []
        if config_fingerprint is not None:
            lines.append(f"# config_fingerprint={config_fingerprint}")
        lines.append(self.CSV_HEADER)
        for row in self.epochs:
            lines.append(
                f"{row.epoch},{row.mean_class_loss:.10g},{row.mean_con_loss:.10g},"
                f"{row.lr:.10g},{row.dict_occupancy:.6g}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    correct1 = 1.0 - state.beta1**state.t
    correct2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractViolation(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        update = (lr / correct1) * m / (np.sqrt(v / correct2) + state.eps)
        if not np.isfinite(update).all():
            raise NumericFault(f"non-finite Adam update for parameter {name}")
        p -= update


# --------------------------------------------------------------------------
# training


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def _pick_in_batch_donor(batch, i, rng):
    eligible = [j for j, s in enumerate(batch) if s.fg_label != batch[i].fg_label]
    if not eligible:
        raise ContractViolation("in_batch donor mode found no different-class donor")
    return batch[eligible[int(rng.integers(0, len(eligible)))]]


def train(
    config: RunConfig,
    train_set: VariantSet,
    donor_bank: DonorBank | None = None,
) -> tuple[Encoder, TrainLog]:
    """Train an encoder on an Original split; deterministic given config + data."""
    config.validate()
    if train_set.variant is not VariantKind.ORIGINAL:
        raise InvariantViolation("training requires the Original variant")
    for s in train_set.samples:
        if not s.mask.any():
            raise InvariantViolation(f"sample {s.id}: training set sample lacks a mask")

    seeds = config.seeds
    variant = config.loss.variant
    contrastive = variant is not LossVariant.BASELINE
    lam = config.loss.contrast_weight

    encoder = Encoder.init(train_set.num_classes, config.channels, seed=seeds.init)
    adam = AdamState.for_params(encoder.params)
    negdict = NegativeDictionary(train_set.num_classes, config.queue_size)
    if contrastive and config.donor_mode == "bank" and donor_bank is None:
        donor_bank = DonorBank(train_set.samples, seeds.data)

    log = TrainLog(seeds=seeds)
    counters = {
        "batches": 0,
        "contrastive_calls": 0,
        "pos_class_calls": 0,
        "enqueues": 0,
        "draws": 0,
        "warmup_anchors": 0,
    }
    samples = train_set.samples
    started = time.perf_counter()

    for epoch in range(config.epochs):
        lr = config.lr if epoch < config.lr_decay_epoch else config.lr_decayed
        if contrastive and config.donor_mode == "bank":
            donor_bank.refresh(epoch)
        order = stream(seeds.data, "shuffle", epoch).permutation(len(samples))
        class_loss_sum = 0.0
        con_loss_sum = 0.0
        n_batches = 0

        for batch_index, chosen in enumerate(_batches(order, config.batch_size)):
            batch = [samples[int(i)] for i in chosen]
            labels = np.array([s.fg_label for s in batch])
            anchor_images = np.stack(
                [
                    augment(
                        s.image,
                        stream(seeds.augment, "anchor", epoch, s.id),
                        config.augment_params,
                    )
                    for s in batch
                ]
            )

            positives = None
            pos_bg_labels = None
            if contrastive:
                pos_images = []
                pos_bg_labels = []
                for i, s in enumerate(batch):
                    donor_rng = stream(seeds.data, "donor", epoch, s.id)
                    if config.donor_mode == "bank":
                        donor = donor_bank.draw(s.fg_label, donor_rng)
                    else:
                        donor = _pick_in_batch_donor(batch, i, donor_rng)
                    positive = swap_background(s, donor, donor_rng)
                    pos_bg_labels.append(positive.bg_label)
                    pos_images.append(
                        augment(
                            positive.image,
                            stream(seeds.augment, "positive", epoch, s.id),
                            config.augment_params,
                        )
                    )
                positives = np.stack(pos_images)

            try:
                feats_a, logits_a, cache_a = encoder.forward(anchor_images, want_cache=True)
                class_loss, d_logits_a = cross_entropy_batch(logits_a, labels)
                con_loss = 0.0
                grads = None

                if contrastive:
                    feats_p, logits_p, cache_p = encoder.forward(positives, want_cache=True)

                    if config.negative_mode == "trivial":
                        shared = negdict.draw(
                            batch[0].fg_label,
                            "trivial",
                            rng=stream(seeds.data, "negdraw", epoch, batch_index),
                        )
                        drawn = [shared] * len(batch)
                        counters["draws"] += 1
                    else:
                        drawn = [negdict.draw(s.fg_label, "keyed") for s in batch]
                        counters["draws"] += len(batch)
                    negs = [
                        np.stack([e.embedding for e in entries])
                        if entries
                        else np.zeros((0, encoder.feature_dim), dtype=np.float32)
                        for entries in drawn
                    ]

                    con_loss, d_feat_a, d_feat_p, n_warmup = contrastive_batch(
                        feats_a, feats_p, negs, config.loss.temperature
                    )
                    counters["contrastive_calls"] += 1
                    counters["warmup_anchors"] += n_warmup

                    d_logits_p = None
                    if variant is LossVariant.CLAD_PLUS:
                        pos_class_loss, d_logits_p = cross_entropy_batch(logits_p, labels)
                        class_loss += pos_class_loss
                        counters["pos_class_calls"] += 1

                    grads = encoder.backward(cache_a, d_features=lam * d_feat_a, d_logits=d_logits_a)
                    grads_p = encoder.backward(
                        cache_p, d_features=lam * d_feat_p, d_logits=d_logits_p
                    )
                    for name in grads:
                        grads[name] += grads_p[name]
                else:
                    grads = encoder.backward(cache_a, d_logits=d_logits_a)

                adam_step(encoder.params, grads, adam, lr)

                if contrastive:
                    for i, s in enumerate(batch):
                        negdict.enqueue(feats_p[i], s.fg_label, pos_bg_labels[i])
                        counters["enqueues"] += 1
            except NumericFault as fault:
                raise NumericFault(f"epoch {epoch} batch {batch_index}: {fault}") from fault

            class_loss_sum += class_loss
            con_loss_sum += con_loss
            n_batches += 1
            counters["batches"] += 1

        log.epochs.append(
            EpochStats(
                epoch=epoch,
                mean_class_loss=class_loss_sum / max(1, n_batches),
                mean_con_loss=con_loss_sum / max(1, n_batches),
                lr=lr,
                dict_occupancy=negdict.occupancy(),
            )
        )

    log.counters = counters
    log.wall_time = time.perf_counter() - started
    return encoder, log
