"""
Scalarizers, Novelty Scorers, Surrogate, and Assessment
"""

from .scalarize import loop_area, scalarize_grid
from .novelty import (
    NoveltyConfig,
    NoveltyMethod,
    dtc_scores,
    fit_one_class_svm,
    iforest_scores,
    knn_scores,
    lof_scores,
    novelty_map,
    ocsvm_scores,
    score,
)
from .surrogate import (
    DKLModel,
    FeatureNet,
    FitConfig,
    GPHyper,
    build_model,
    dump_model,
    fit,
    kernel,
    latent,
    load_model,
    log_marginal_likelihood,
    predict,
)
from .metrics import (
    anomaly_hits,
    eval_nme,
    nme,
    random_baseline,
    random_baseline_curve,
    variability,
)
from .exports import export_map_csv, export_map_pgm, export_trace_csv, load_trace

__all__ = [
    "loop_area",
    "scalarize_grid",
    "NoveltyConfig",
    "NoveltyMethod",
    "dtc_scores",
    "fit_one_class_svm",
    "iforest_scores",
    "knn_scores",
    "lof_scores",
    "novelty_map",
    "ocsvm_scores",
    "score",
    "DKLModel",
    "FeatureNet",
    "FitConfig",
    "GPHyper",
    "build_model",
    "dump_model",
    "fit",
    "kernel",
    "latent",
    "load_model",
    "log_marginal_likelihood",
    "predict",
    "anomaly_hits",
    "eval_nme",
    "nme",
    "random_baseline",
    "random_baseline_curve",
    "variability",
    "export_map_csv",
    "export_map_pgm",
    "export_trace_csv",
    "load_trace",
]
