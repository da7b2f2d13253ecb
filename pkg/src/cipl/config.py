"""Flat JSON run configuration shared by every CLI command."""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .backbone import BackboneConfig
from .data.augment import AugmentConfig
from .objectives import LossWeights
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    # data generation
    n_samples: int = 2000
    n_classes: int = 4
    label_probs: float = 0.35
    image_size: int = 64
    image_channels: int = 1
    glyph_size: tuple = (12, 18)
    single_label: bool = False
    # architecture
    channels: tuple = (16, 32, 64)
    feature_dim: int = 64
    per_class: int = 8
    # optimisation
    batch_size: int = 8
    lr: float = 1e-4
    lr_decay: float = 0.5
    decay_every: int = 5
    plateau_tol: float = 0.01
    plateau_patience: int = 2
    warmup_epochs: int = 3
    main_epochs: int = 12
    steps_per_epoch: int = 0
    ema_momentum: float = 0.999
    alpha1: float = 0.02
    alpha2: float = 0.5
    alpha3: float = 0.5
    alpha4: float = 0.5
    tau: float = 2.0
    augment: bool = True
    # ablation / mode switches
    use_cross: bool = True
    use_inte: bool = True
    use_pred: bool = True
    pred_kl: bool = False
    symmetric_views: bool = False
    project_during_warmup: bool = False
    keep_ema: bool = False
    # evaluation
    iou_thresholds: tuple = (0.1, 0.3)
    top_k: int = 0  # 0 averages all of a class's prototype maps

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def override(self, key, raw):
        known = {f.name for f in fields(self)}
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        d = asdict(self)
        d[key] = value
        return RunConfig.from_dict(d)

    def validate(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "tau"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("n_samples", "n_classes", "per_class", "batch_size", "feature_dim"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if len(self.glyph_size) != 2 or not 0 < self.glyph_size[0] <= self.glyph_size[1] < self.image_size:
            raise ConfigError("glyph_size must be [min, max] with 0 < min <= max < image_size")
        if any(not 0 < t < 1 for t in self.iou_thresholds):
            raise ConfigError("iou_thresholds must lie in (0, 1)")
        try:
            self.backbone()
            self.train()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def backbone(self):
        return BackboneConfig(input_size=self.image_size, in_channels=self.image_channels,
                              channels=tuple(self.channels), feature_dim=self.feature_dim)

    def weights(self):
        return LossWeights(self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.tau)

    def train(self):
        return TrainConfig(
            batch_size=self.batch_size, lr=self.lr, lr_decay=self.lr_decay, decay_every=self.decay_every,
            plateau_tol=self.plateau_tol, plateau_patience=self.plateau_patience,
            warmup_epochs=self.warmup_epochs, main_epochs=self.main_epochs,
            steps_per_epoch=self.steps_per_epoch, ema_momentum=self.ema_momentum, seed=self.seed,
            weights=self.weights(), augment=AugmentConfig() if self.augment else AugmentConfig.identity(),
            use_cross=self.use_cross, use_inte=self.use_inte, use_pred=self.use_pred, pred_kl=self.pred_kl,
            symmetric_views=self.symmetric_views, project_during_warmup=self.project_during_warmup)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)
