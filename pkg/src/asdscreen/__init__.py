"""Screening-pipeline toolkit: instrument encoding, forest feature selection,
age-siloed training, inconclusive bands, augmentation and score fusion."""

__version__ = "0.1.0"

from .dataset import (Dataset, GroundTruth, ScoreSheet, SyntheticSpec, generate_synthetic, load_csv,
                      split_holdout, write_csv)
from .encoding import (EncodingSpec, FeatureMatrix, QuestionEncoding, aggregates, encode,
                       encode_responses, one_hot_encode, presence_encode, severity_encode)
from .errors import ScreeningError
from .evaluation import (CVConfig, balance_weights, bootstrapped_cv, grid_search, roc,
                         stratified_folds, tune_threshold)
from .learners import (ForestModel, ForestParams, LogisticModel, feature_importance, predict_score,
                       train_forest, train_logistic)
from .pipeline import (CombinedScreener, DecisionBand, InjectionConfig, PipelineConfig,
                       ScreenerArtifact, SiloConfig, calibrate_band, combine, inject_missing,
                       meta_inconclusive, screen, silo_split, train_combined, train_ladder,
                       train_variant)
from .selection import SelectionConfig, naive_select, progressive_sampling, robust_select

__all__ = [
    "CVConfig", "CombinedScreener", "Dataset", "DecisionBand", "EncodingSpec", "FeatureMatrix",
    "ForestModel", "ForestParams", "GroundTruth", "InjectionConfig", "LogisticModel",
    "PipelineConfig", "QuestionEncoding", "ScoreSheet", "ScreenerArtifact", "ScreeningError",
    "SelectionConfig", "SiloConfig", "SyntheticSpec", "aggregates", "balance_weights",
    "bootstrapped_cv", "calibrate_band", "combine", "encode", "encode_responses",
    "feature_importance", "generate_synthetic", "grid_search", "inject_missing", "load_csv",
    "meta_inconclusive", "naive_select", "one_hot_encode", "predict_score", "presence_encode",
    "progressive_sampling", "robust_select", "roc", "screen", "severity_encode", "silo_split",
    "split_holdout", "stratified_folds", "train_combined", "train_forest", "train_ladder",
    "train_logistic", "train_variant", "tune_threshold", "write_csv",
]
