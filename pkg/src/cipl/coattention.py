"""Parameter-free co-attention between the feature maps of an image pair."""

from .numerics import ShapeError, ops


def affinity(fa, fb):
    """Negative squared distances ``A[i, j] = -||fa_i - fb_j||^2`` for [B,P,D] inputs."""
    if fa.dims != fb.dims:
        raise ShapeError(f"affinity: dims {fa.dims} vs {fb.dims}")
    return ops.neg(ops.sqdist(fa, fb))


def coattend(fa, fb, return_weights=False):
    """Co-attentive summaries of two [B,H,W,D] feature maps.

    The summary for a position of image a is a convex combination of image b's
    feature vectors (weights from a column softmax of the transposed affinity),
    and vice versa. Both outputs keep the [B,H,W,D] layout.
    """
    if fa.dims != fb.dims:
        raise ShapeError(f"coattend: dims {fa.dims} vs {fb.dims}")
    b, h, w, d = fa.dims
    ra = ops.reshape(fa, (b, h * w, d))
    rb = ops.reshape(fb, (b, h * w, d))
    a = affinity(ra, rb)                                   # rows: a positions, cols: b positions
    w_a = ops.softmax_cols(a)                              # column j: weights over a positions
    w_b = ops.softmax_cols(ops.transpose(a, (0, 2, 1)))    # column i: weights over b positions
    # row form of F_b^T W_b: summary_a[i] = sum_j W_b[j, i] F_b[j]
    sum_a = ops.matmul(ops.transpose(w_b, (0, 2, 1)), rb)
    sum_b = ops.matmul(ops.transpose(w_a, (0, 2, 1)), ra)
    out = (ops.reshape(sum_a, (b, h, w, d)), ops.reshape(sum_b, (b, h, w, d)))
    if return_weights:
        return out, (w_a, w_b)
    return out
