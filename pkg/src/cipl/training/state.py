"""Model and training-state (de)serialisation on top of the tensor checkpoint format."""

import numpy as np

from ..backbone import BackboneConfig
from ..model import CIPLNet
from ..numerics import Tensor
from ..proto_head import PrototypeBank
from . import checkpoint
from .checkpoint import CheckpointError


def _arch(cfg):
    return np.array([cfg.input_size, cfg.in_channels, cfg.feature_dim, *cfg.channels], dtype=np.float32)


def _parse_arch(v):
    v = [int(x) for x in v]
    if len(v) < 3:
        raise CheckpointError("meta/arch record is truncated")
    return BackboneConfig(input_size=v[0], in_channels=v[1], feature_dim=v[2], channels=tuple(v[3:]))


def model_tensors(model, prefix="param/"):
    out = {prefix + k: t.values for k, t in model.params.items()}
    return out


def _bank_tensors(bank):
    return {"bank/class_of": bank.class_of.astype(np.float32), "bank/source": bank.source.astype(np.float32)}


def _rebuild(cfg, tensors, prefix, trainable):
    names = [k[len(prefix):] for k in tensors if k.startswith(prefix)]
    if "prototypes" not in names or "last_layer" not in names:
        raise CheckpointError(f"checkpoint lacks {prefix}prototypes / {prefix}last_layer")
    params = {n: Tensor(tensors[prefix + n].copy(), requires_grad=trainable, name=n) for n in names}
    class_of = tensors["bank/class_of"].astype(np.int64)
    source = tensors["bank/source"].astype(np.int64)
    bank = PrototypeBank(params["prototypes"], class_of, source)
    return CIPLNet(cfg, params, bank)


def save_model(path, model, ema=None):
    """Inference checkpoint: parameters, bank provenance, architecture; EMA only if given."""
    t = {"meta/arch": _arch(model.cfg)}
    t.update(model_tensors(model))
    t.update(_bank_tensors(model.bank))
    if ema is not None:
        t.update(model_tensors(ema, "ema/"))
    checkpoint.save(path, t)


def load_model(path, with_ema=False):
    t = checkpoint.load(path)
    if "meta/arch" not in t:
        raise CheckpointError("checkpoint lacks meta/arch")
    cfg = _parse_arch(t["meta/arch"])
    model = _rebuild(cfg, t, "param/", trainable=True)
    if not with_ema:
        return model
    ema = _rebuild(cfg, t, "ema/", trainable=False) if any(k.startswith("ema/") for k in t) else None
    return model, ema


def save_state(path, state):
    """Everything needed to continue bit-identically: EMA and Adam moments always included."""
    t = {"meta/arch": _arch(state.model.cfg),
         "meta/counters": np.array([state.epoch, state.step, state.lr_level, state.adam.t,
                                    state.metrics_lines], dtype=np.float32),
         "meta/loss_history": np.asarray(state.loss_history, dtype=np.float32)}
    t.update(model_tensors(state.model))
    t.update(_bank_tensors(state.model.bank))
    t.update(model_tensors(state.ema, "ema/"))
    for k in state.model.params:
        t["adam/m/" + k] = state.adam.m[k]
        t["adam/v/" + k] = state.adam.v[k]
    checkpoint.save(path, t)


def load_state(path, cfg):
    from .loop import Adam, TrainState

    t = checkpoint.load(path)
    for key in ("meta/arch", "meta/counters", "meta/loss_history"):
        if key not in t:
            raise CheckpointError(f"not a training-state checkpoint (missing {key})")
    arch = _parse_arch(t["meta/arch"])
    model = _rebuild(arch, t, "param/", trainable=True)
    ema = _rebuild(arch, t, "ema/", trainable=False)
    ema.bank.source = model.bank.source.copy()
    adam = Adam(model.params, cfg.adam_betas, cfg.adam_eps)
    for k in model.params:
        adam.m[k] = t["adam/m/" + k].copy()
        adam.v[k] = t["adam/v/" + k].copy()
    epoch, step, lr_level, adam_t, lines = (int(x) for x in t["meta/counters"])
    adam.t = adam_t
    return TrainState(model, ema, adam, epoch=epoch, step=step, lr_level=lr_level,
                      loss_history=[float(x) for x in t["meta/loss_history"]], metrics_lines=lines)
