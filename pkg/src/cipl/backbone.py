"""Convolutional feature extractor plus the two trailing 1x1 layers."""

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, Tensor, ops


@dataclass
class BackboneConfig:
    input_size: int = 64
    in_channels: int = 1
    channels: tuple = (16, 32, 64)
    feature_dim: int = 64

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.feature_dim <= 0:
            raise ValueError("feature_dim must be positive")
        if self.in_channels not in (1, 3):
            raise ValueError("in_channels must be 1 or 3")
        if self.input_size % self.stride:
            raise ValueError(f"input_size {self.input_size} not divisible by total stride {self.stride}")

    @property
    def stride(self):
        return 2 ** len(self.channels)

    @property
    def feature_size(self):
        return self.input_size // self.stride


def init_backbone(cfg, rng, dtype=np.float32):
    """He-normal conv weights, zero biases. Returns an ordered name -> Tensor dict."""
    params = {}
    cin = cfg.in_channels
    for i, cout in enumerate(cfg.channels):
        std = np.sqrt(2.0 / (9 * cin))
        params[f"backbone.conv{i}.w"] = Tensor(rng.normal(0.0, std, (3, 3, cin, cout)).astype(dtype))
        params[f"backbone.conv{i}.b"] = Tensor(np.zeros(cout, dtype=dtype))
        cin = cout
    d = cfg.feature_dim
    params["addon.0.w"] = Tensor(rng.normal(0.0, np.sqrt(2.0 / cin), (1, 1, cin, d)).astype(dtype))
    params["addon.0.b"] = Tensor(np.zeros(d, dtype=dtype))
    params["addon.1.w"] = Tensor(rng.normal(0.0, np.sqrt(1.0 / d), (1, 1, d, d)).astype(dtype))
    params["addon.1.b"] = Tensor(np.zeros(d, dtype=dtype))
    for name, t in params.items():
        t.name = name
        t.requires_grad = True
    return params


def extract_features(x, params, cfg):
    """Map images [B,H,W,ch] to features [B,H/stride,W/stride,D], every entry in (0,1)."""
    dims = x.dims[-3:]
    want = (cfg.input_size, cfg.input_size, cfg.in_channels)
    if dims != want:
        raise ShapeError(f"image extent {dims} does not match backbone config {want}")
    h = x
    for i in range(len(cfg.channels)):
        h = ops.conv2d(h, params[f"backbone.conv{i}.w"], params[f"backbone.conv{i}.b"], pad=1)
        h = ops.maxpool2d(ops.relu(h), 2)
    h = ops.relu(ops.conv2d(h, params["addon.0.w"], params["addon.0.b"]))
    return ops.sigmoid(ops.conv2d(h, params["addon.1.w"], params["addon.1.b"]))
