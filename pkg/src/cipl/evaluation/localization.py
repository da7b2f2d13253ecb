"""Weakly-supervised localisation from prototype similarity maps."""

from dataclasses import dataclass

import numpy as np


@dataclass
class LocalizationCase:
    class_id: int
    pred: np.ndarray  # [H,W] bool
    gt: np.ndarray    # [H,W] bool
    degenerate: bool = False

    def __post_init__(self):
        if self.pred.shape != self.gt.shape:
            raise ValueError(f"mask extents differ: {self.pred.shape} vs {self.gt.shape}")


def _interp_matrix(n_in, n_out):
    # half-pixel-centre bilinear resampling, edge clamped
    x = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    x = np.clip(x, 0, n_in - 1)
    i0 = np.floor(x).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = x - i0
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), i0] += 1 - f
    m[np.arange(n_out), i1] += f
    return m


def upsample_bilinear(a, out_h, out_w):
    return _interp_matrix(a.shape[0], out_h) @ a @ _interp_matrix(a.shape[1], out_w).T


def mask_from_maps(maps, out_shape=None, threshold=0.5):
    """Average [H,W,K] maps, min-max normalise, upsample, threshold. Returns (mask, degenerate)."""
    maps = np.asarray(maps, dtype=np.float64)
    avg = maps.mean(axis=-1) if maps.ndim == 3 else maps
    lo, hi = avg.min(), avg.max()
    out_shape = out_shape or avg.shape
    if hi == lo:
        return np.zeros(out_shape, dtype=bool), True
    norm = (avg - lo) / (hi - lo)
    if tuple(out_shape) != avg.shape:
        norm = upsample_bilinear(norm, *out_shape)
    return norm >= threshold, False


def class_maps(maps, class_of, c, scores=None, top_k=None):
    """The class-c slices of an [H,W,N] stack; ``top_k`` keeps the highest-scoring ones."""
    idx = np.flatnonzero(np.asarray(class_of) == c)
    if top_k is not None:
        if scores is None:
            raise ValueError("top_k averaging needs pooled scores")
        idx = idx[np.argsort(-scores[idx], kind="stable")[:top_k]]
    return maps[..., idx]


def localization_mask(model, image, c, top_k=None, gt=None):
    """Predicted mask for class ``c`` on one float image [H,W,ch]."""
    _, stack, _ = model.forward(image[None])
    maps = stack.maps.values[0]
    sel = class_maps(maps, model.bank.class_of, c, stack.scores.values[0], top_k)
    mask, degenerate = mask_from_maps(sel, image.shape[:2])
    if gt is None:
        gt = np.zeros(image.shape[:2], dtype=bool)
    return LocalizationCase(int(c), mask, gt, degenerate)


def rasterize_boxes(boxes, c, h, w):
    m = np.zeros((h, w), dtype=bool)
    for cls, x, y, bw, bh in boxes:
        if cls == c:
            m[max(0, y):y + bh, max(0, x):x + bw] = True
    return m


def iou(a, b):
    union = np.sum(a | b)
    return float(np.sum(a & b) / union) if union else 0.0


def iou_accuracy(cases, t):
    """Per-class fraction of cases with IoU strictly above ``t``; classes without cases are absent."""
    if not 0.0 < t < 1.0:
        raise ValueError("IoU threshold must lie in (0, 1)")
    hits, totals = {}, {}
    for case in cases:
        totals[case.class_id] = totals.get(case.class_id, 0) + 1
        hits[case.class_id] = hits.get(case.class_id, 0) + (iou(case.pred, case.gt) > t)
    return {c: hits[c] / totals[c] for c in sorted(totals)}


def localization_cases(model, dataset, top_k=None, batch_size=64):
    """One case per (test image, boxed class)."""
    images = dataset.float_images()
    h, w = images.shape[1:3]
    cases = []
    for s in range(0, len(images), batch_size):
        _, stack, _ = model.forward(images[s:s + batch_size])
        maps, scores = stack.maps.values, stack.scores.values
        for j in range(len(maps)):
            boxes = dataset.boxes[s + j]
            for c in sorted({b[0] for b in boxes}):
                sel = class_maps(maps[j], model.bank.class_of, c, scores[j], top_k)
                mask, degenerate = mask_from_maps(sel, (h, w))
                cases.append(LocalizationCase(int(c), mask, rasterize_boxes(boxes, c, h, w), degenerate))
    return cases
