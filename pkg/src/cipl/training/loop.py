"""Optimisation loop: Adam, EMA teacher, warm-up schedule, per-epoch projection."""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..backbone import BackboneConfig
from ..coattention import coattend
from ..data.augment import AugmentConfig, single_view_augment, two_view_augment
from ..data.pairs import PairSampler
from ..model import CIPLNet
from ..numerics import Graph, Tensor, ops
from ..objectives import (LossWeights, basic_loss, ce_multilabel, cluster_loss, cross_loss,
                          interp_align_loss, pred_align_loss, pred_kl_loss, separation_loss,
                          total_loss)
from ..proto_head import classify, project_prototypes, similarity_maps
from . import state as state_io

log = logging.getLogger(__name__)

TERMS = ("ce", "cluster", "separation", "basic", "cross", "inte", "pred", "total")


class TrainingError(RuntimeError):
    def __init__(self, msg, record=None):
        super().__init__(msg)
        self.record = record


@dataclass
class TrainConfig:
    batch_size: int = 8
    lr: float = 1e-4
    lr_decay: float = 0.5
    decay_every: int = 5
    plateau_tol: float = 0.01
    plateau_patience: int = 2
    warmup_epochs: int = 3
    main_epochs: int = 12
    steps_per_epoch: int = 0  # 0: len(dataset) // batch_size pair batches
    ema_momentum: float = 0.999
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    use_cross: bool = True
    use_inte: bool = True
    use_pred: bool = True
    pred_kl: bool = False
    symmetric_views: bool = False
    project_during_warmup: bool = False

    def __post_init__(self):
        if self.batch_size <= 0 or self.lr < 0 or self.warmup_epochs < 0 or self.main_epochs < 0:
            raise ValueError("batch_size must be positive; lr and epoch counts non-negative")
        if not 0.0 < self.ema_momentum < 1.0:
            raise ValueError("ema_momentum must lie in (0, 1)")

    @property
    def epochs(self):
        return self.warmup_epochs + self.main_epochs


class Adam:
    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.values) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in params.items()}

    def step(self, params, lr):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = p.grad
            if g is None:
                continue
            dt = p.dtype.type
            m, v = self.m[k], self.v[k]
            m *= dt(self.b1)
            m += dt(1.0 - self.b1) * g
            v *= dt(self.b2)
            v += dt(1.0 - self.b2) * (g * g)
            step = dt(lr / bc1) * m / (np.sqrt(v / dt(bc2)) + dt(self.eps))
            p.values -= step


def ema_update(ema_params, params, momentum):
    """``ema <- momentum*ema + (1-momentum)*theta``, written as ``ema + (1-momentum)*(theta-ema)``."""
    for k, e in ema_params.items():
        p = params[k]
        if e.values.shape != p.values.shape:
            raise ValueError(f"EMA shape mismatch for {k}: {e.values.shape} vs {p.values.shape}")
        e.values += e.dtype.type(1.0 - momentum) * (p.values - e.values)


@dataclass
class TrainState:
    model: CIPLNet
    ema: CIPLNet
    adam: Adam
    epoch: int = 0
    step: int = 0
    lr_level: int = 0
    loss_history: list = field(default_factory=list)  # float32 epoch means, main phase only
    metrics_lines: int = 0

    def lr(self, cfg):
        return cfg.lr * cfg.lr_decay ** self.lr_level


def init_state(n_classes, cfg, backbone_cfg=None, per_class=8):
    backbone_cfg = backbone_cfg or BackboneConfig()
    model = CIPLNet.create(backbone_cfg, n_classes, per_class, cfg.seed)
    ema = model.copy(trainable=False)
    return TrainState(model, ema, Adam(model.params, cfg.adam_betas, cfg.adam_eps))


@dataclass
class Batch:
    xa: np.ndarray
    xb: np.ndarray
    xb2: np.ndarray
    ya: np.ndarray
    yb: np.ndarray
    xa2: np.ndarray = None


def build_batch(images, labels, pairs, rng, aug, symmetric=False):
    """Augment a [B,2] array of (a, b) indices; b gets two views sharing step-1 geometry."""
    xa, xa2, xb, xb2 = [], [], [], []
    for a, b in pairs:
        if symmetric:
            v, v2, _ = two_view_augment(images[a], rng, aug)
            xa.append(v)
            xa2.append(v2)
        else:
            xa.append(single_view_augment(images[a], rng, aug))
        v, v2, _ = two_view_augment(images[b], rng, aug)
        xb.append(v)
        xb2.append(v2)
    return Batch(np.stack(xa), np.stack(xb), np.stack(xb2), labels[pairs[:, 0]], labels[pairs[:, 1]],
                 np.stack(xa2) if symmetric else None)


def _finite_or_raise(rec):
    bad = [k for k in TERMS if not np.isfinite(rec[k])]
    if bad:
        raise TrainingError(f"non-finite loss term(s) {bad} at step {rec['step']}", rec)


def teacher_targets(ema, batch, cfg):
    """Constant EMA-branch maps and predictions for the alignment terms."""
    x = np.concatenate([batch.xa2, batch.xb2]) if cfg.symmetric_views else batch.xb2
    _, t_stack, t_pred = ema.forward(x)
    return t_stack.maps.values, t_pred.binary_probs.values


def objective(model, batch, cfg, warm, targets=None):
    """Loss terms (name -> Tensor or None) and the total for one batch of pairs.

    ``targets`` are the EMA-branch (maps, probs) arrays; they enter as constants.
    """
    w = cfg.weights
    b = len(batch.ya)
    y = np.concatenate([batch.ya, batch.yb])
    f = model.features(np.concatenate([batch.xa, batch.xb]))
    stack = similarity_maps(f, model.bank)
    pred = classify(stack.scores, model.last_layer)
    # per-image terms over the stacked pair are batch means; x2 gives the pair sums
    ce = ops.scale(ce_multilabel(pred, y), 2.0)
    cst = ops.scale(cluster_loss(f, model.bank, y, dists=stack.dists), 2.0)
    sep = ops.scale(separation_loss(f, model.bank, y, w.tau, dists=stack.dists), 2.0)
    basic = ops.add(ce, ops.scale(ops.add(cst, sep), w.alpha1))
    cross = inte = pred_term = None
    if not warm:
        if cfg.use_cross:
            fab_a, fab_b = coattend(f[0:b], f[b:2 * b])
            cross = cross_loss(fab_a, fab_b, batch.ya, batch.yb, model.bank, model.last_layer)
        if targets is not None:
            if cfg.symmetric_views:
                s_maps, s_probs = stack.maps, pred.binary_probs
            else:
                s_maps, s_probs = stack.maps[b:2 * b], pred.binary_probs[b:2 * b]
            t_maps, t_probs = (Tensor(np.asarray(t, dtype=model.dtype)) for t in targets)
            if cfg.use_inte:
                inte = interp_align_loss(s_maps, t_maps)
            if cfg.pred_kl:
                pred_term = pred_kl_loss(s_probs, t_probs)
            elif cfg.use_pred:
                pred_term = pred_align_loss(s_probs, t_probs)
    total = total_loss(basic, cross, inte, pred_term, w, warmup=warm)
    terms = {"ce": ce, "cluster": cst, "separation": sep, "basic": basic, "cross": cross, "inte": inte,
             "pred": pred_term, "total": total}
    return terms, total


def train_step(state, batch, cfg):
    """One Adam step on the current phase's objective followed by the EMA update."""
    model, ema = state.model, state.ema
    warm = state.epoch < cfg.warmup_epochs
    rec = {"kind": "step", "step": state.step, "epoch": state.epoch, "phase": "warmup" if warm else "main"}
    targets = None
    if not warm and (cfg.use_inte or cfg.use_pred or cfg.pred_kl):
        targets = teacher_targets(ema, batch, cfg)
    for p in model.params.values():
        p.zero_grad()
    with Graph() as g:
        terms, total = objective(model, batch, cfg, warm, targets)
        for k in TERMS:
            rec[k] = 0.0 if terms[k] is None else float(terms[k].values)
        _finite_or_raise(rec)
        g.backward(total)
    state.adam.step(model.params, state.lr(cfg))
    ema_update(ema.params, model.params, cfg.ema_momentum)
    state.step += 1
    return rec


def project(state, images, labels, ids=None):
    feats = state.model.features_exact(images)
    bank = project_prototypes(state.model.bank, feats, labels, ids)
    state.model.set_prototypes(bank)
    return bank


def _maybe_decay(state, cfg):
    """Halve the lr when the epoch-mean loss improved < tol for ``patience`` epochs, checked every few epochs."""
    hist = state.loss_history
    if not hist or len(hist) % cfg.decay_every or len(hist) <= cfg.plateau_patience:
        return False
    recent = hist[-(cfg.plateau_patience + 1):]
    stalled = all((prev - cur) / max(abs(prev), 1e-12) < cfg.plateau_tol for prev, cur in zip(recent, recent[1:]))
    if stalled:
        state.lr_level += 1
    return stalled


class JsonlWriter:
    def __init__(self, path, keep_lines=0):
        self.path = Path(path) if path else None
        self.lines = keep_lines
        if self.path is None:
            return
        if keep_lines and self.path.exists():
            kept = self.path.read_text().splitlines(keepends=True)[:keep_lines]
            self.path.write_text("".join(kept))
        else:
            self.path.write_text("")

    def write(self, rec):
        self.lines += 1
        if self.path is not None:
            with open(self.path, "a") as f:
                f.write(json.dumps(rec) + "\n")


def epoch_rng(seed, epoch):
    return np.random.default_rng([seed, 1, epoch])


def fit(dataset, cfg, backbone_cfg=None, per_class=8, out_dir=None, resume=False, keep_ema=False,
        on_epoch=None):
    """Warm-up epochs on the basic objective, then the full objective with projection after each epoch.

    With ``out_dir`` set, writes ``metrics.jsonl``, a resumable ``state.ckpt``
    after every epoch and the final ``model.ckpt``. Returns ``(state, history)``
    where history holds the per-epoch summary records.
    """
    images = dataset.float_images()
    labels = dataset.labels.astype(np.int64)
    if backbone_cfg is None:
        backbone_cfg = BackboneConfig(input_size=images.shape[1], in_channels=images.shape[3])
    out = Path(out_dir) if out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if resume and out is not None and (out / "state.ckpt").exists():
        state = state_io.load_state(out / "state.ckpt", cfg)
        log.info("resuming at epoch %d", state.epoch)
    else:
        state = init_state(dataset.n_classes, cfg, backbone_cfg, per_class)
    writer = JsonlWriter(out / "metrics.jsonl" if out else None, keep_lines=state.metrics_lines)
    sampler = PairSampler(labels)
    steps = cfg.steps_per_epoch or max(1, len(dataset) // cfg.batch_size)
    history = []
    projected_last = False
    while state.epoch < cfg.epochs:
        rng = epoch_rng(cfg.seed, state.epoch)
        totals = []
        for _ in range(steps):
            pairs = sampler.sample_batch(rng, cfg.batch_size)
            batch = build_batch(images, labels, pairs, rng, cfg.augment, cfg.symmetric_views)
            rec = train_step(state, batch, cfg)
            rec["lr"] = state.lr(cfg)
            writer.write(rec)
            totals.append(rec["total"])
        warm = state.epoch < cfg.warmup_epochs
        mean_total = float(np.float32(np.mean(totals)))
        projected_last = not warm or cfg.project_during_warmup
        if projected_last:
            project(state, images, labels, dataset.ids)
        summary = {"kind": "epoch", "epoch": state.epoch, "phase": "warmup" if warm else "main",
                   "mean_total": mean_total, "lr": state.lr(cfg), "projected": projected_last}
        if not warm:
            state.loss_history.append(mean_total)
            summary["lr_decayed"] = _maybe_decay(state, cfg)
        writer.write(summary)
        history.append(summary)
        state.epoch += 1
        state.metrics_lines = writer.lines
        if out is not None:
            state_io.save_state(out / "state.ckpt", state)
        if on_epoch is not None:
            on_epoch(state, summary)
    if not projected_last:
        project(state, images, labels, dataset.ids)
        rec = {"kind": "final_projection", "epoch": state.epoch}
        writer.write(rec)
        history.append(rec)
        state.metrics_lines = writer.lines
    if out is not None:
        state_io.save_model(out / "model.ckpt", state.model, ema=state.ema if keep_ema else None)
    return state, history


def config_dict(cfg):
    return asdict(cfg)
