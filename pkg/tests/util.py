"""Shared test helpers: independent oracles kept deliberately naive."""

import numpy as np

from cladlab.netcore import Encoder, contrastive_batch, cross_entropy_batch


def fit_linear_probe(features: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Least-squares one-vs-all linear probe; returns (d+1, C) weights."""
    design = np.hstack([features, np.ones((len(features), 1))])
    targets = np.eye(num_classes)[labels]
    weights, *_ = np.linalg.lstsq(design, targets, rcond=None)
    return weights


def probe_predict(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    design = np.hstack([features, np.ones((len(features), 1))])
    return (design @ weights).argmax(axis=1)


def probe_accuracy(train_x, train_y, test_x, test_y, num_classes) -> float:
    weights = fit_linear_probe(np.asarray(train_x), np.asarray(train_y), num_classes)
    return float((probe_predict(weights, np.asarray(test_x)) == np.asarray(test_y)).mean())


def clad_plus_loss_value(params, anchors, positives, labels, negs, lam, tau):
    """Full combined objective recomputed from scratch (for finite differences)."""
    encoder = Encoder(params)
    feats_a, logits_a = encoder.forward(anchors)
    feats_p, logits_p = encoder.forward(positives)
    class_loss, _ = cross_entropy_batch(logits_a, labels)
    pos_class_loss, _ = cross_entropy_batch(logits_p, labels)
    con_loss, _, _, _ = contrastive_batch(feats_a, feats_p, negs, tau)
    return class_loss + pos_class_loss + lam * con_loss


def clad_plus_param_grads(encoder, anchors, positives, labels, negs, lam, tau):
    """Analytic parameter gradients of the full combined objective."""
    feats_a, logits_a, cache_a = encoder.forward(anchors, want_cache=True)
    feats_p, logits_p, cache_p = encoder.forward(positives, want_cache=True)
    _, d_logits_a = cross_entropy_batch(logits_a, labels)
    _, d_logits_p = cross_entropy_batch(logits_p, labels)
    _, d_feat_a, d_feat_p, _ = contrastive_batch(feats_a, feats_p, negs, tau)
    grads_a = encoder.backward(cache_a, d_features=lam * d_feat_a, d_logits=d_logits_a)
    grads_p = encoder.backward(cache_p, d_features=lam * d_feat_p, d_logits=d_logits_p)
    return {name: grads_a[name] + grads_p[name] for name in grads_a}


def finite_diff_param_grads(loss_fn, params, step):
    """Central finite differences of loss_fn over every parameter element."""
    grads = {}
    for name, param in params.items():
        grad = np.zeros_like(param, dtype=np.float64)
        flat = param.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = loss_fn(params)
            flat[i] = original - step
            minus = loss_fn(params)
            flat[i] = original
            grad_flat[i] = (plus - minus) / (2.0 * step)
        grads[name] = grad
    return grads


def max_rel_error(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for name in analytic:
        denom = max(np.abs(numeric[name]).max(), 1e-8)
        worst = max(worst, float(np.abs(analytic[name] - numeric[name]).max() / denom))
    return worst


def randomize_biases(encoder, rng, scale=0.05):
    """Move biases off zero so no ReLU pre-activation sits exactly on a kink.

    Zero-initialized biases plus dead ReLU regions produce pre-activations
    that are exactly 0, where central differences and the subgradient
    legitimately disagree; gradient checks therefore run at a generic point.
    """
    for name, param in encoder.params.items():
        if name.endswith("_b"):
            param += rng.uniform(0.01, scale, size=param.shape).astype(param.dtype)


def min_kink_distance(encoder, batches) -> float:
    """Smallest |pre-activation| over all ReLU layers and batches."""
    smallest = np.inf
    for batch in batches:
        _, _, cache = encoder.forward(batch, want_cache=True)
        for key in ("z1", "z2", "z3"):
            smallest = min(smallest, float(np.abs(cache[key]).min()))
    return smallest
