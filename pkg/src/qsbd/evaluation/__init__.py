"""Metrics, threshold selection, splits and fold aggregation."""
from .metrics import (METRIC_KEYS, EvalReport, auroc, cohen_kappa, confusion, evaluate, pr_best_f1_threshold,
                      pr_curve, precision_recall_f1)
from .splits import aggregate_folds, leave_one_city_out, stratified_holdout, stratified_kfold

__all__ = [
    "EvalReport", "METRIC_KEYS", "aggregate_folds", "auroc", "cohen_kappa", "confusion", "evaluate",
    "leave_one_city_out", "pr_best_f1_threshold", "pr_curve", "precision_recall_f1", "stratified_holdout",
    "stratified_kfold",
]
