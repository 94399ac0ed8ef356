"""Growth classifier: features, sampling, random forest and evaluation."""

from .features import FEATURE_NAMES, N_FEATURES, build_dataset, extract_features
from .forest import DecisionTree, ForestModel, fit_tree, train_forest
from .metrics import (DEFAULT_DEPTHS, LABELS, EvalReport, confusion_matrix, depth_sweep, evaluate,
                      report_from_predictions, write_sweep_csv)
from .sampling import (OversamplingError, StratificationError, smote, split_train_test,
                       stratified_split_indices)

__all__ = [
    "FEATURE_NAMES", "N_FEATURES", "build_dataset", "extract_features",
    "DecisionTree", "ForestModel", "fit_tree", "train_forest",
    "DEFAULT_DEPTHS", "LABELS", "EvalReport", "confusion_matrix", "depth_sweep", "evaluate",
    "report_from_predictions", "write_sweep_csv",
    "OversamplingError", "StratificationError", "smote", "split_train_test", "stratified_split_indices",
]
