"""Sampling image pairs that share at least one label."""

import numpy as np


class PairSamplingError(RuntimeError):
    pass


class PairSampler:
    """Uniform draws over ordered pairs ``(a, b)``, ``a != b``, with a common label.

    A class bucket is chosen with probability proportional to its number of
    ordered pairs, a pair is drawn inside it, and the draw is kept with
    probability ``1 / #shared labels`` so pairs living in several buckets are
    not over-counted.
    """

    def __init__(self, labels):
        self.labels = np.asarray(labels).astype(bool)
        self.buckets = [np.flatnonzero(self.labels[:, c]) for c in range(self.labels.shape[1])]
        sizes = np.array([len(b) for b in self.buckets], dtype=np.float64)
        weight = sizes * (sizes - 1)
        if weight.sum() == 0:
            raise PairSamplingError("no two samples share a label")
        self.bucket_p = weight / weight.sum()

    def sample(self, rng):
        while True:
            c = rng.choice(len(self.buckets), p=self.bucket_p)
            members = self.buckets[c]
            i, j = rng.choice(len(members), size=2, replace=False)
            a, b = int(members[i]), int(members[j])
            shared = int((self.labels[a] & self.labels[b]).sum())
            if shared == 1 or rng.random() < 1.0 / shared:
                return a, b

    def sample_batch(self, rng, n):
        return np.array([self.sample(rng) for _ in range(n)], dtype=np.int64).reshape(n, 2)


def sample_pair(labels, rng):
    return PairSampler(labels).sample(rng)
