"""Texture-descriptor classification of glial-cell micrographs with late fusion."""

from .data import CLASSES, POSITIVE, LabeledDataset, ProbabilityMatrix, read_proba_csv, write_proba_csv
from .descriptors import FeatureVector, LbpParams, LpqParams, describe, lbp, lpq, rlbp
from .evaluation import (
    ExperimentConfig,
    FoldPlan,
    MetricsRecord,
    f_measure,
    run_experiment,
    stratified_kfold,
)
from .fusion import FusionEnsemble, Member, Rule, enumerate_combinations, fuse, sweep
from .imaging import EdgeFilter, EdgeKind, ImageBuffer, apply_chain, edge_enhance, load_image, pseudo_color_hsv, to_grayscale
from .selection import Chi2Selector, chi2_scores, select_top_n
from .stats import ScoreTable, friedman_avg_ranks, wilcoxon_signed_rank

__version__ = "0.1.0"

__all__ = [
    "CLASSES", "POSITIVE", "Chi2Selector", "EdgeFilter", "EdgeKind", "ExperimentConfig", "FeatureVector",
    "FoldPlan", "FusionEnsemble", "ImageBuffer", "LabeledDataset", "LbpParams", "LpqParams", "Member",
    "MetricsRecord", "ProbabilityMatrix", "Rule", "ScoreTable", "apply_chain", "chi2_scores", "describe",
    "edge_enhance", "enumerate_combinations", "f_measure", "friedman_avg_ranks", "fuse", "lbp", "load_image",
    "lpq", "pseudo_color_hsv", "read_proba_csv", "rlbp", "run_experiment", "select_top_n", "stratified_kfold",
    "sweep", "to_grayscale", "wilcoxon_signed_rank", "write_proba_csv",
]
