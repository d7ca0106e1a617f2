"""Tasks, fold plans, metrics, cross-validated experiments and reports."""
from .audit import FitAudit
from .folds import FoldError, FoldPlan, plan_folds, stratified_holdout
from .metrics import (MetricError, accuracy, confusion_matrix, misclassification_table,
                      per_class_prf, sensitivity, specificity, weighted_f1,
                      weighted_f1_from_predictions)
from .tasks import CLASS_NAMES, TASK_KINDS, LabeledSet, TaskError, TaskSpec, build_task

_LAZY = {"ExperimentConfig", "ExperimentResult", "EvalReport", "ConfigError", "grid_search",
         "run_experiment", "load_config", "epochs_from_trials", "load_epochs"}


def __getattr__(name):
    # experiment pulls in the CNN engine, which itself imports the metrics above
    if name in _LAZY:
        from . import experiment
        return getattr(experiment, name)
    raise AttributeError(name)
