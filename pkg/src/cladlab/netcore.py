"""Convolutional encoder/classifier and training losses with exact gradients.

Architecture (fixed up to channel widths): Conv3x3 + ReLU + MaxPool2,
Conv3x3 + ReLU + MaxPool2, Conv3x3 + ReLU + GlobalAvgPool, then a linear
classifier on the pooled feature vector.  The pooled features are the
representations used by the contrastive loss; there is no projection head.

The backward pass is hand-derived reverse mode for this fixed graph and is
verified against central finite differences in the test suite.  Loss values
and loss gradients are computed in double precision regardless of the
parameter dtype; log-sum-exps are max-shifted.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractViolation, NumericFault, UndefinedMetric

DEFAULT_CHANNELS = (16, 32, 64)


class LossVariant(str, Enum):
    BASELINE = "baseline"
    CLAD = "clad"
    CLAD_PLUS = "clad_plus"


@dataclass(frozen=True)
class LossConfig:
    """Objective selection: contrastive weight, temperature, and variant."""

    variant: LossVariant = LossVariant.CLAD
    contrast_weight: float = 1.0
    temperature: float = 0.2

    def validate(self) -> None:
        if self.temperature <= 0.0:
            raise ContractViolation("temperature must be positive")
        if self.contrast_weight < 0.0:
            raise ContractViolation("contrast_weight must be nonnegative")


# --------------------------------------------------------------------------
# encoder


def _im2col(x: np.ndarray) -> np.ndarray:
    """3x3 same-padding patch matrix, (B, H, W, C) -> (B, H, W, 9C).

    The last axis is ordered (ky, kx, channel) to match the (3, 3, Cin,
    Cout) weight layout.
    """
    b, h, w, c = x.shape
    padded = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    padded[:, 1:-1, 1:-1] = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    return windows.transpose(0, 1, 2, 4, 5, 3).reshape(b, h, w, 9 * c)


def _conv_forward(x, weight, bias):
    b, h, w, _ = x.shape
    cols = _im2col(x)
    out = cols.reshape(b * h * w, -1) @ weight.reshape(-1, weight.shape[3])
    out += bias
    return out.reshape(b, h, w, -1), cols


def _conv_backward(d_out, cols, weight, want_dx: bool):
    b, h, w, co = d_out.shape
    d_flat = d_out.reshape(b * h * w, co)
    d_weight = (cols.reshape(b * h * w, -1).T @ d_flat).reshape(weight.shape)
    d_bias = d_flat.sum(axis=0)
    d_x = None
    if want_dx:
        rotated = weight[::-1, ::-1].transpose(0, 1, 3, 2).reshape(9 * co, weight.shape[2])
        d_x = (_im2col(d_out).reshape(b * h * w, -1) @ rotated).reshape(b, h, w, -1)
    return d_weight, d_bias, d_x


def _maxpool_forward(x):
    b, h, w, c = x.shape
    grouped = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    grouped = grouped.reshape(b, h // 2, w // 2, 4, c)
    idx = grouped.argmax(axis=3)
    pooled = np.take_along_axis(grouped, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return pooled, idx


def _maxpool_backward(d_pooled, idx, in_shape):
    b, h, w, c = in_shape
    grouped = np.zeros((b, h // 2, w // 2, 4, c), dtype=d_pooled.dtype)
    np.put_along_axis(grouped, idx[:, :, :, None, :], d_pooled[:, :, :, None, :], axis=3)
    return (
        grouped.reshape(b, h // 2, w // 2, 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, h, w, c)
    )


_PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b", "fc_w", "fc_b")


class Encoder:
    """The fixed conv encoder; parameters live in a name -> array dict."""

    def __init__(self, params: dict[str, np.ndarray]):
        missing = [name for name in _PARAM_ORDER if name not in params]
        if missing:
            raise ContractViolation(f"encoder params missing {missing}")
        self.params = {name: params[name] for name in _PARAM_ORDER}
        self.dtype = self.params["conv1_w"].dtype
        self.channels = tuple(self.params[f"conv{i}_w"].shape[3] for i in (1, 2, 3))
        self.num_classes = self.params["fc_w"].shape[1]

    @classmethod
    def init(
        cls,
        num_classes: int,
        channels: tuple[int, int, int] = DEFAULT_CHANNELS,
        seed: int | np.random.Generator = 0,
        dtype=np.float32,
    ) -> "Encoder":
        """He-uniform weights, zero biases, deterministic per seed."""
        from .rng import stream

        rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "encoder_init")
        c1, c2, c3 = channels

        def he_uniform(shape, fan_in):
            limit = np.sqrt(6.0 / fan_in)
            return rng.uniform(-limit, limit, size=shape).astype(dtype)

        params = {
            "conv1_w": he_uniform((3, 3, 3, c1), 9 * 3),
            "conv1_b": np.zeros(c1, dtype=dtype),
            "conv2_w": he_uniform((3, 3, c1, c2), 9 * c1),
            "conv2_b": np.zeros(c2, dtype=dtype),
            "conv3_w": he_uniform((3, 3, c2, c3), 9 * c2),
            "conv3_b": np.zeros(c3, dtype=dtype),
            "fc_w": he_uniform((c3, num_classes), c3),
            "fc_b": np.zeros(num_classes, dtype=dtype),
        }
        return cls(params)

    @property
    def feature_dim(self) -> int:
        return self.channels[2]

    def forward(self, images: np.ndarray, want_cache: bool = False):
        """Run the net; returns (features (B, D), logits (B, C)[, cache]).

        Raises :class:`NumericFault` naming the first layer whose
        activations go non-finite.
        """
        x = np.ascontiguousarray(images, dtype=self.dtype)
        if x.ndim != 4 or x.shape[3] != 3:
            raise ContractViolation("forward expects a (B, H, W, 3) batch")
        if x.shape[1] % 4 or x.shape[2] % 4:
            raise ContractViolation("input height/width must be divisible by 4")
        p = self.params
        cache: dict = {"in_shape": x.shape}
        if want_cache:
            cache["images"] = x

        def check(name, arr):
            if not np.isfinite(arr).all():
                raise NumericFault(f"non-finite activation after layer {name}")

        z1, cols1 = _conv_forward(x, p["conv1_w"], p["conv1_b"])
        check("conv1", z1)
        a1 = np.maximum(z1, 0)
        p1, idx1 = _maxpool_forward(a1)

        z2, cols2 = _conv_forward(p1, p["conv2_w"], p["conv2_b"])
        check("conv2", z2)
        a2 = np.maximum(z2, 0)
        p2, idx2 = _maxpool_forward(a2)

        z3, cols3 = _conv_forward(p2, p["conv3_w"], p["conv3_b"])
        check("conv3", z3)
        a3 = np.maximum(z3, 0)
        features = a3.mean(axis=(1, 2))

        logits = features @ p["fc_w"] + p["fc_b"]
        check("fc", logits)

        if not want_cache:
            return features, logits
        cache.update(
            z1=z1, cols1=cols1, idx1=idx1, a1_shape=a1.shape, p1_shape=p1.shape,
            z2=z2, cols2=cols2, idx2=idx2, a2_shape=a2.shape, p2_shape=p2.shape,
            z3=z3, cols3=cols3, a3_shape=a3.shape, features=features,
        )
        return features, logits, cache

    def backward(
        self,
        cache: dict,
        d_features: np.ndarray | None = None,
        d_logits: np.ndarray | None = None,
        want_input_grad: bool = False,
    ):
        """Reverse-mode gradients for all parameters given output cotangents.

        ``d_features``/``d_logits`` are the loss gradients w.r.t. the pooled
        features and the logits (either may be None).  Returns a dict keyed
        like ``params``; with ``want_input_grad`` also returns d(images).
        """
        if d_features is None and d_logits is None:
            raise ContractViolation("backward needs at least one output gradient")
        p = self.params
        features = cache["features"]
        grads: dict[str, np.ndarray] = {}

        d_feat = np.zeros_like(features)
        if d_logits is not None:
            d_logits = d_logits.astype(self.dtype, copy=False)
            grads["fc_w"] = features.T @ d_logits
            grads["fc_b"] = d_logits.sum(axis=0)
            d_feat += d_logits @ p["fc_w"].T
        else:
            grads["fc_w"] = np.zeros_like(p["fc_w"])
            grads["fc_b"] = np.zeros_like(p["fc_b"])
        if d_features is not None:
            d_feat += d_features.astype(self.dtype, copy=False)

        bsz, hh, ww, _ = cache["a3_shape"]
        d_a3 = np.broadcast_to(d_feat[:, None, None, :], cache["a3_shape"]) / self.dtype.type(
            hh * ww
        )
        d_z3 = np.where(cache["z3"] > 0, d_a3, 0)
        grads["conv3_w"], grads["conv3_b"], d_p2 = _conv_backward(
            d_z3, cache["cols3"], p["conv3_w"], want_dx=True
        )

        d_a2 = _maxpool_backward(d_p2, cache["idx2"], cache["a2_shape"])
        d_z2 = np.where(cache["z2"] > 0, d_a2, 0)
        grads["conv2_w"], grads["conv2_b"], d_p1 = _conv_backward(
            d_z2, cache["cols2"], p["conv2_w"], want_dx=True
        )

        d_a1 = _maxpool_backward(d_p1, cache["idx1"], cache["a1_shape"])
        d_z1 = np.where(cache["z1"] > 0, d_a1, 0)
        grads["conv1_w"], grads["conv1_b"], d_images = _conv_backward(
            d_z1, cache["cols1"], p["conv1_w"], want_dx=want_input_grad
        )

        for name in _PARAM_ORDER:
            if not np.isfinite(grads[name]).all():
                raise NumericFault(f"non-finite gradient for parameter {name}")
        if want_input_grad:
            return grads, d_images
        return grads

    def copy(self) -> "Encoder":
        return Encoder({k: v.copy() for k, v in self.params.items()})


def input_gradient(encoder: Encoder, images: np.ndarray, target_class: int) -> np.ndarray:
    """Gradient of the target-class logit sum w.r.t. the input pixels."""
    _, logits, cache = encoder.forward(images, want_cache=True)
    d_logits = np.zeros_like(logits)
    d_logits[:, target_class] = 1.0
    _, d_images = encoder.backward(cache, d_logits=d_logits, want_input_grad=True)
    return d_images


# --------------------------------------------------------------------------
# losses


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two nonzero vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedMetric("cosine similarity is undefined for zero-norm input")
    return float(np.dot(a, b) / (na * nb))


def _unit(v: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise UndefinedMetric(f"zero-norm {what} in contrastive loss")
    return v / norm, norm


def info_nce_with_grads(x, x_pos, x_negs, temperature: float):
    """InfoNCE value and gradients w.r.t. the anchor and positive features.

    The (N+1)-way softmax treats the positive as class 0.  Negatives are
    constants: no gradient is produced for them.  With no negatives the loss
    is 0 (dictionary warmup) and the gradients are zero.
    """
    if temperature <= 0.0:
        raise ContractViolation("temperature must be positive")
    x = np.asarray(x, dtype=np.float64)
    pos = np.asarray(x_pos, dtype=np.float64)
    negs = np.asarray(x_negs, dtype=np.float64)
    if negs.size == 0:
        negs = negs.reshape(0, x.shape[0])
    n_negs = negs.shape[0]
    if n_negs == 0:
        return 0.0, np.zeros_like(x), np.zeros_like(pos)

    u, norm_x = _unit(x, "anchor feature")
    v, norm_p = _unit(pos, "positive feature")
    neg_norms = np.linalg.norm(negs, axis=1)
    if (neg_norms == 0.0).any():
        raise UndefinedMetric("zero-norm negative embedding in contrastive loss")
    nu = negs / neg_norms[:, None]

    sims = np.empty(n_negs + 1)
    sims[0] = u @ v
    sims[1:] = nu @ u
    z = sims / temperature
    shift = z.max()
    log_denom = shift + np.log(np.exp(z - shift).sum())
    loss = float(log_denom - z[0])

    softmax = np.exp(z - log_denom)
    d_sim = softmax / temperature
    d_sim[0] -= 1.0 / temperature
    # d s(x, y) / dx = (y_hat - s * x_hat) / ||x||
    d_x = d_sim[0] * (v - sims[0] * u)
    d_x += d_sim[1:] @ (nu - np.outer(sims[1:], u))
    d_x /= norm_x
    d_pos = d_sim[0] * (u - sims[0] * v) / norm_p
    return loss, d_x, d_pos


def info_nce(x, x_pos, x_negs, temperature: float) -> float:
    """InfoNCE loss value (see :func:`info_nce_with_grads`)."""
    loss, _, _ = info_nce_with_grads(x, x_pos, x_negs, temperature)
    return loss


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shift = z.max(axis=-1, keepdims=True)
    return z - shift - np.log(np.exp(z - shift).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """Negative log softmax probability of the true class."""
    logits = np.asarray(logits)
    if logits.ndim != 1:
        raise ContractViolation("cross_entropy expects a single logit vector")
    if not 0 <= label < logits.shape[0]:
        raise ContractViolation(f"label {label} out of range")
    return float(-log_softmax(logits)[label])


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,) or labels.min() < 0 or labels.max() >= c:
        raise ContractViolation("labels must be in-range, one per row")
    logp = log_softmax(logits)
    rows = np.arange(b)
    loss = float(-logp[rows, labels].mean())
    d_logits = np.exp(logp)
    d_logits[rows, labels] -= 1.0
    d_logits /= b
    return loss, d_logits


def contrastive_batch(feats_anchor, feats_pos, negs_per_anchor, temperature: float):
    """Mean InfoNCE over a batch plus feature gradients of that mean.

    ``negs_per_anchor`` is one (N_i, D) array per anchor; anchors with no
    negatives contribute zero loss (warmup) and are counted.
    """
    b = feats_anchor.shape[0]
    losses = np.zeros(b)
    d_anchor = np.zeros(feats_anchor.shape, dtype=np.float64)
    d_pos = np.zeros(feats_pos.shape, dtype=np.float64)
    n_warmup = 0
    for i in range(b):
        loss_i, dx, dp = info_nce_with_grads(
            feats_anchor[i], feats_pos[i], negs_per_anchor[i], temperature
        )
        if len(negs_per_anchor[i]) == 0:
            n_warmup += 1
        losses[i] = loss_i
        d_anchor[i] = dx
        d_pos[i] = dp
    return float(losses.mean()), d_anchor / b, d_pos / b, n_warmup


def total_loss(
    cfg: LossConfig,
    anchor_out: tuple[np.ndarray, np.ndarray],
    pos_out: tuple[np.ndarray, np.ndarray] | None,
    negs_per_anchor,
    labels: np.ndarray,
) -> float:
    """Batch objective value: mean classification loss plus weighted contrast.

    baseline: anchor cross-entropy only.  clad: adds contrast_weight times
    the mean InfoNCE.  clad_plus: additionally applies the classification
    loss to the positives (their logits are then required).
    """
    cfg.validate()
    feats_a, logits_a = anchor_out
    labels = np.asarray(labels)
    class_loss, _ = cross_entropy_batch(logits_a, labels)
    if cfg.variant is LossVariant.BASELINE:
        return class_loss
    if pos_out is None:
        raise ContractViolation(f"{cfg.variant.value} needs positive outputs")
    feats_p, logits_p = pos_out
    con_loss, _, _, _ = contrastive_batch(feats_a, feats_p, negs_per_anchor, cfg.temperature)
    total = class_loss + cfg.contrast_weight * con_loss
    if cfg.variant is LossVariant.CLAD_PLUS:
        if logits_p is None:
            raise ContractViolation("clad_plus needs positive logits")
        pos_class_loss, _ = cross_entropy_batch(logits_p, labels)
        total += pos_class_loss
    return total
