from .explain import UnprojectedBankError, dequantize, export_explanation, quantize
from .localization import (LocalizationCase, class_maps, iou, iou_accuracy, localization_cases,
                           localization_mask, mask_from_maps, rasterize_boxes, upsample_bilinear)
from .metrics import ScoreTable, auc, choose_thresholds, f1_acc, mean_auc, per_class_auc
from .report import classification_report, full_report, localization_report, score_table

__all__ = [
    "LocalizationCase", "ScoreTable", "UnprojectedBankError", "auc", "choose_thresholds", "class_maps",
    "classification_report", "dequantize", "export_explanation", "f1_acc", "full_report", "iou",
    "iou_accuracy", "localization_cases", "localization_mask", "localization_report", "mask_from_maps",
    "mean_auc", "per_class_auc", "quantize", "rasterize_boxes", "score_table", "upsample_bilinear",
]
