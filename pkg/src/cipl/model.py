"""The full network: backbone, prototype bank and last layer bundled together."""

import numpy as np

from .backbone import BackboneConfig, extract_features, init_backbone
from .numerics import Tensor
from .proto_head import PrototypeBank, classify, init_bank, init_last_layer, similarity_maps


class CIPLNet:
    def __init__(self, cfg, params, bank):
        self.cfg = cfg
        self.params = params
        self.bank = bank

    @classmethod
    def create(cls, cfg, n_classes, per_class, seed, dtype=np.float32):
        rng = np.random.default_rng([seed, 0])
        params = init_backbone(cfg, rng, dtype)
        bank = init_bank(n_classes, per_class, cfg.feature_dim, rng, dtype)
        params["prototypes"] = bank.prototypes
        params["last_layer"] = init_last_layer(bank, dtype)
        return cls(cfg, params, bank)

    @property
    def n_classes(self):
        return self.bank.n_classes

    @property
    def last_layer(self):
        return self.params["last_layer"]

    def features(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        return extract_features(x, self.params, self.cfg)

    @property
    def dtype(self):
        return self.params["prototypes"].dtype

    def forward(self, x):
        f = self.features(x)
        stack = similarity_maps(f, self.bank)
        return f, stack, classify(stack.scores, self.last_layer)

    def predict(self, images, batch_size=64):
        """Disease probabilities [n,C] for float images [n,H,W,ch] (inference mode)."""
        out = []
        for i in range(0, len(images), batch_size):
            _, _, pred = self.forward(images[i:i + batch_size])
            out.append(pred.binary_probs.values[..., 0])
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))

    def features_exact(self, images):
        """Per-image feature extraction; the reference path for projection and provenance checks."""
        return np.stack([self.features(images[i:i + 1]).values[0] for i in range(len(images))])

    def copy(self, trainable=False):
        params = {}
        for k, t in self.params.items():
            params[k] = Tensor(t.values.copy(), requires_grad=trainable, name=k)
        bank = PrototypeBank(params["prototypes"], self.bank.class_of.copy(), self.bank.source.copy())
        return CIPLNet(BackboneConfig(**vars(self.cfg)), params, bank)

    def set_prototypes(self, bank):
        """Copy a projected bank's vectors and provenance into this model in place."""
        self.params["prototypes"].values[...] = bank.prototypes.values
        self.bank.source = bank.source.copy()
