"""Training losses. Batched terms average over the batch dimension."""

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, Tensor, ops
from .proto_head import classify, similarity_maps

PROB_FLOOR = 1e-7
_MASK_BIG = 1e6


@dataclass
class LossWeights:
    alpha1: float = 0.02
    alpha2: float = 0.5
    alpha3: float = 0.5
    alpha4: float = 0.5
    tau: float = 2.0

    def __post_init__(self):
        for k in ("alpha1", "alpha2", "alpha3", "alpha4", "tau"):
            if getattr(self, k) < 0:
                raise ValueError(f"loss weight {k} must be non-negative")


def _targets(y, dtype):
    y = np.atleast_2d(np.asarray(y))
    t = np.zeros(y.shape + (2,), dtype=dtype)
    t[..., 0] = y
    t[..., 1] = 1 - y
    return t


def ce_multilabel(pred, y):
    """Mean two-way cross-entropy over samples and disease tasks.

    Probabilities are clamped to [1e-7, 1-1e-7] before the log.
    """
    probs = pred.binary_probs
    t = _targets(y, probs.dtype)
    if t.shape != probs.dims:
        raise ShapeError(f"labels {t.shape[:-1]} vs predictions {probs.dims[:-1]}")
    logp = ops.log(ops.clip(probs, PROB_FLOOR, 1 - PROB_FLOOR))
    b, c, _ = probs.dims
    return ops.scale(ops.sum(ops.mul(logp, Tensor(t))), -1.0 / (b * c))


def own_class_mask(y, class_of):
    """[B,N] indicator of prototypes in each sample's own-class set.

    All-negative samples own the no-findings prototypes.
    """
    y = np.atleast_2d(np.asarray(y))
    c = y.shape[1]
    ext = np.concatenate([y, (y.sum(axis=1, keepdims=True) == 0)], axis=1).astype(bool)
    return ext[:, class_of]


def _patch_min(features, bank, dists):
    if dists is None:
        b, h, w, d = features.dims
        dists = ops.sqdist(ops.reshape(features, (b, h * w, d)), bank.prototypes)
    return ops.min(dists, axis=1)  # [B,N]


def _masked_min(md, mask):
    pen = Tensor(np.where(mask, 0.0, _MASK_BIG).astype(md.dtype))
    return ops.min(ops.add(md, pen), axis=1)


def cluster_loss(features, bank, y, dists=None):
    """Squared distance from the closest patch to the closest own-class prototype."""
    md = _patch_min(features, bank, dists)
    own = own_class_mask(y, bank.class_of)
    return ops.mean(_masked_min(md, own))


def separation_loss(features, bank, y, tau, dists=None):
    """Hinge ``max(0, tau - d_min)`` against the closest other-class prototype."""
    md = _patch_min(features, bank, dists)
    other = ~own_class_mask(y, bank.class_of)
    if not other.any(axis=1).all():
        raise ValueError("separation_loss needs at least one other-class prototype")
    closest = _masked_min(md, other)
    return ops.mean(ops.relu(ops.sub(float(tau), closest)))


def common_labels(y_a, y_b):
    return (np.asarray(y_a).astype(bool) & np.asarray(y_b).astype(bool)).astype(np.int64)


def cross_loss(fab_a, fab_b, y_a, y_b, bank, last_layer):
    """Cross-entropy of both co-attentive maps against the common labels."""
    target = common_labels(y_a, y_b)
    pa = classify(similarity_maps(fab_a, bank).scores, last_layer)
    pb = classify(similarity_maps(fab_b, bank).scores, last_layer)
    return ops.add(ce_multilabel(pa, target), ce_multilabel(pb, target))


def interp_align_loss(maps, maps_other):
    """Negative mean per-position cosine between two [B,H,W,N] similarity stacks."""
    if maps.dims != maps_other.dims:
        raise ShapeError(f"similarity stacks {maps.dims} vs {maps_other.dims}")
    return ops.neg(ops.mean(ops.cosine(maps, maps_other, axis=-1)))


def gram(probs):
    """Class-wise Gram matrices [C,B,B] from [B,C,2] predictions."""
    yc = ops.transpose(probs, (1, 0, 2))
    return ops.matmul(yc, ops.transpose(yc, (0, 2, 1)))


def pred_align_loss(probs, probs_other):
    """Batch-level alignment of class-wise prediction Gram matrices."""
    if probs.dims != probs_other.dims:
        raise ShapeError(f"batch predictions {probs.dims} vs {probs_other.dims}")
    b, c, _ = probs.dims
    diff = ops.sub(gram(probs), gram(probs_other))
    return ops.scale(ops.sum(ops.square(diff)), 1.0 / (c * b * b))


def pred_kl_loss(probs, target_probs):
    """Sample-level KL(target || probs), averaged over samples and tasks (ablation variant)."""
    if probs.dims != target_probs.dims:
        raise ShapeError(f"batch predictions {probs.dims} vs {target_probs.dims}")
    t = np.clip(target_probs.values, PROB_FLOOR, 1 - PROB_FLOOR)
    logq = ops.log(ops.clip(probs, PROB_FLOOR, 1 - PROB_FLOOR))
    b, c, _ = probs.dims
    const = float((t * np.log(t)).sum())
    return ops.scale(ops.sub(const, ops.sum(ops.mul(logq, Tensor(t.astype(probs.dtype))))), 1.0 / (b * c))


def basic_loss(ce_a, ce_b, cst, sep, w):
    return ops.add(ops.add(ce_a, ce_b), ops.scale(ops.add(cst, sep), w.alpha1))


def total_loss(basic, cross=None, inte=None, pred=None, w=None, warmup=False):
    """``basic + a2*cross + a3*inte + a4*pred``; only ``basic`` counts during warm-up.

    Missing (``None``) terms contribute nothing, which is how ablations switch a
    term off.
    """
    w = w or LossWeights()
    out = basic
    if warmup:
        return out
    for term, alpha in ((cross, w.alpha2), (inte, w.alpha3), (pred, w.alpha4)):
        if term is not None and alpha != 0:
            out = ops.add(out, ops.scale(term, alpha))
    return out
