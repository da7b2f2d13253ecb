"""Prototype layer, shared FC classifier and prototype projection."""

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, Tensor, kernels, ops

UNPROJECTED = -1


class ProjectionError(RuntimeError):
    pass


@dataclass
class PrototypeBank:
    """``N = M*(C+1)`` prototypes; the last class tag is no-findings.

    ``source`` rows are (image id, patch row, patch col), ``UNPROJECTED`` until
    a projection fills them.
    """

    prototypes: Tensor
    class_of: np.ndarray
    source: np.ndarray

    @property
    def n_prototypes(self):
        return len(self.class_of)

    @property
    def n_classes(self):
        """Number of disease classes C (no-findings excluded)."""
        return int(self.class_of.max())

    @property
    def per_class(self):
        return self.n_prototypes // (self.n_classes + 1)

    @property
    def depth(self):
        return self.prototypes.dims[1]

    @property
    def projected(self):
        return bool(np.all(self.source >= 0))

    def indices(self, k):
        return np.flatnonzero(self.class_of == k)


def init_bank(n_classes, per_class, depth, rng, dtype=np.float32):
    n = per_class * (n_classes + 1)
    protos = Tensor(rng.random((n, depth)).astype(dtype), requires_grad=True, name="prototypes")
    class_of = np.repeat(np.arange(n_classes + 1), per_class)
    return PrototypeBank(protos, class_of, np.full((n, 3), UNPROJECTED, dtype=np.int64))


def init_last_layer(bank, dtype=np.float32, neg=-0.5):
    """+1 from each prototype to its own class logit, ``neg`` to every other logit."""
    n, c1 = bank.n_prototypes, bank.n_classes + 1
    w = np.full((n, c1), neg, dtype=dtype)
    w[np.arange(n), bank.class_of] = 1.0
    return Tensor(w, requires_grad=True, name="last_layer")


@dataclass
class SimilarityStack:
    maps: Tensor       # [B,H,W,N], entries in (0,1]
    scores: Tensor     # [B,N]
    argmax: np.ndarray  # [B,N,2] (row, col) of each score
    dists: Tensor      # [B,H*W,N] squared distances behind the maps


@dataclass
class BinaryPrediction:
    logits: Tensor        # [B,C+1]
    binary_probs: Tensor  # [B,C,2]; slot 0 = disease, slot 1 = no-findings


def similarity_maps(features, bank):
    """``exp(-||f - p||^2 / D)`` for every position and prototype, plus max-pooled scores."""
    b, h, w, d = features.dims
    if d != bank.depth:
        raise ShapeError(f"feature depth {d} != prototype depth {bank.depth}")
    dists = ops.sqdist(ops.reshape(features, (b, h * w, d)), bank.prototypes)
    sim = ops.exp(ops.scale(dists, -1.0 / d))
    maps = ops.reshape(sim, (b, h, w, bank.n_prototypes))
    scores, pos = ops.reduce_max_spatial(maps)
    return SimilarityStack(maps, scores, pos, dists)


def _contrast_matrix(n_classes, dtype):
    r = np.zeros((n_classes + 1, n_classes), dtype=dtype)
    r[np.arange(n_classes), np.arange(n_classes)] = 1.0
    r[n_classes, :] = -1.0
    return Tensor(r)


def classify(scores, last_layer):
    """Logits ``scores @ W`` and the C disease-vs-no-findings softmaxes."""
    logits = ops.matmul(scores, last_layer)
    b, c1 = logits.dims
    c = c1 - 1
    # softmax over (logit_c, logit_nf) == sigmoid(logit_c - logit_nf)
    p = ops.sigmoid(ops.matmul(logits, _contrast_matrix(c, logits.dtype)))
    p = ops.reshape(p, (b, c, 1))
    probs = ops.concat([p, ops.sub(1.0, p)], axis=-1)
    return BinaryPrediction(logits, probs)


def multilabel_decision(pred):
    """Disease sets with probability strictly above 0.5, one set per sample."""
    probs = pred.binary_probs.values[..., 0]
    return [set(np.flatnonzero(row > 0.5).tolist()) for row in np.atleast_2d(probs)]


def _eligible(labels, k, n_classes):
    if k < n_classes:
        return np.flatnonzero(labels[:, k] == 1)
    return np.flatnonzero(labels.sum(axis=1) == 0)


def project_prototypes(bank, features, labels, image_ids=None):
    """Replace each prototype by its nearest same-class training patch.

    ``features`` is [n,H,W,D] (numpy) for the un-augmented training images and
    ``labels`` their [n,C] label bits. Within a class, prototypes are visited in
    index order and each takes its best patch from the nearest image not already
    used by an earlier prototype of that class. Returns a new bank; the old one
    is untouched.
    """
    feats = np.asarray(features)
    n, h, w, d = feats.shape
    if n == 0:
        raise ProjectionError("empty dataset")
    if d != bank.depth:
        raise ShapeError(f"feature depth {d} != prototype depth {bank.depth}")
    ids = np.arange(n) if image_ids is None else np.asarray(image_ids)
    c = bank.n_classes
    m = bank.per_class
    old = bank.prototypes.values
    new = old.copy()
    source = np.full((bank.n_prototypes, 3), UNPROJECTED, dtype=np.int64)
    flat = feats.reshape(n, h * w, d).astype(old.dtype, copy=False)

    for k in range(c + 1):
        rows = _eligible(labels, k, c)
        if len(rows) < m:
            name = "no-findings" if k == c else f"class {k}"
            raise ProjectionError(f"{name}: only {len(rows)} distinct source images for {m} prototypes")
        pidx = bank.indices(k)
        dist = kernels.sqdist(np.ascontiguousarray(flat[rows]), np.ascontiguousarray(old[pidx]))  # [r,HW,M]
        best_patch = dist.argmin(axis=1)  # [r,M]
        best_dist = np.take_along_axis(dist, best_patch[:, None, :], axis=1)[:, 0, :]
        used = set()
        for j, pn in enumerate(pidx):
            order = np.lexsort((rows, best_dist[:, j]))
            pick = next(r for r in order if rows[r] not in used)
            used.add(rows[pick])
            patch = best_patch[pick, j]
            new[pn] = flat[rows[pick], patch]
            source[pn] = (ids[rows[pick]], patch // w, patch % w)
    protos = Tensor(new, requires_grad=bank.prototypes.requires_grad, name=bank.prototypes.name)
    return PrototypeBank(protos, bank.class_of.copy(), source)
