"""Assemble the JSON metrics and localisation reports."""

import numpy as np

from .localization import iou_accuracy, localization_cases
from .metrics import ScoreTable, choose_thresholds, f1_acc, mean_auc, per_class_auc

DEFAULT_T = (0.1, 0.3)


def score_table(model, dataset):
    return ScoreTable(model.predict(dataset.float_images()), dataset.labels)


def classification_report(model, test, threshold_set=None):
    """AUC on ``test``; F1/accuracy thresholds are chosen on ``threshold_set`` (defaults to 0.5)."""
    table = score_table(model, test)
    if threshold_set is not None:
        thr = choose_thresholds(score_table(model, threshold_set))
    else:
        thr = np.full(table.n_classes, 0.5)
    mf1, macc = f1_acc(table, thr)
    return {"per_class_auc": per_class_auc(table), "mauc": mean_auc(table), "mf1": mf1, "macc": macc,
            "thresholds": [float(t) for t in thr], "n_samples": int(len(table.probs))}


def localization_report(model, dataset, ts=DEFAULT_T, top_k=None):
    cases = localization_cases(model, dataset, top_k=top_k)
    counts = {}
    for case in cases:
        counts[case.class_id] = counts.get(case.class_id, 0) + 1
    by_t = {}
    for t in sorted(ts):
        acc = iou_accuracy(cases, t)
        by_t[f"{t:g}"] = {"per_class": {str(c): a for c, a in acc.items()},
                          "mean": float(np.mean(list(acc.values()))) if acc else None}
    means = [by_t[f"{t:g}"]["mean"] for t in sorted(ts)]
    present = [m for m in means if m is not None]
    return {
        "n_cases": len(cases),
        "cases_per_class": {str(c): n for c, n in sorted(counts.items())},
        "degenerate_maps": int(sum(c.degenerate for c in cases)),
        "accuracy": by_t,
        "monotone_in_t": all(a >= b for a, b in zip(present, present[1:])),
    }


def full_report(model, test, threshold_set=None, ts=DEFAULT_T, top_k=None):
    rep = classification_report(model, test, threshold_set)
    rep["localization"] = localization_report(model, test, ts, top_k)
    return rep
