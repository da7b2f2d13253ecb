"""Explanation bundle: top-k similarity maps per class, scores, decision and prototype provenance."""

import json
from pathlib import Path

import numpy as np

from ..data.io import write_pnm
from ..proto_head import multilabel_decision


class UnprojectedBankError(RuntimeError):
    pass


def quantize(m):
    """8-bit min-max quantisation; returns (uint8 map, min, max)."""
    lo, hi = float(m.min()), float(m.max())
    if hi == lo:
        return np.zeros(m.shape, dtype=np.uint8), lo, hi
    q = np.rint((m.astype(np.float64) - lo) / (hi - lo) * 255.0)
    return q.astype(np.uint8), lo, hi


def dequantize(q, lo, hi):
    return lo + q.astype(np.float64) / 255.0 * (hi - lo)


def export_explanation(model, image, out_dir, k=1, name="explanation"):
    """Write ``k*(C+1)`` PGM maps plus ``{name}.json`` for one float image [H,W,ch]."""
    if k < 1:
        raise ValueError("k must be at least 1")
    bank = model.bank
    if not bank.projected:
        raise UnprojectedBankError("prototype bank is not projected; train with projection "
                                   "(or call cipl.training.project) before exporting explanations")
    k = min(k, bank.per_class)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, stack, pred = model.forward(image[None])
    maps = stack.maps.values[0]
    scores = stack.scores.values[0]
    classes = []
    for c in range(bank.n_classes + 1):
        idx = bank.indices(c)
        top = idx[np.argsort(-scores[idx], kind="stable")[:k]]
        entries = []
        for rank, j in enumerate(top):
            q, lo, hi = quantize(maps[..., j])
            fname = f"{name}_class{c}_top{rank}.pgm"
            write_pnm(out / fname, q[..., None])
            img_id, row, col = (int(v) for v in bank.source[j])
            entries.append({"prototype": int(j), "score": float(scores[j]), "map": fname,
                            "min": lo, "max": hi,
                            "source": {"image_id": img_id, "row": row, "col": col}})
        classes.append({"class": c, "no_findings": c == bank.n_classes, "top": entries})
    doc = {
        "scores": [float(s) for s in scores],
        "logits": [float(v) for v in pred.logits.values[0]],
        "disease_probs": [float(v) for v in pred.binary_probs.values[0, :, 0]],
        "decision": sorted(int(c) for c in multilabel_decision(pred)[0]),
        "classes": classes,
    }
    path = out / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path
