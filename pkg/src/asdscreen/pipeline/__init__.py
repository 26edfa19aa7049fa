from .artifacts import ScreenerArtifact
from .bands import INCONCLUSIVE, NEGATIVE, POSITIVE, DecisionBand, band_metrics, calibrate_band
from .fusion import CombinedScreener, Combination, SiloScreener, combine, screen, train_combined
from .injection import InjectionConfig, inject_missing, zero_balance, zero_share
from .meta import MetaInconclusive, meta_inconclusive
from .variants import (LADDER, VARIANTS, VIDEO_RECIPE, PipelineConfig, Recipe, ScreenerResult,
                       SiloConfig, VariantResult, make_trainer, route_silo, silo_split, train_ladder,
                       train_screener, train_variant)

__all__ = [
    "INCONCLUSIVE", "LADDER", "NEGATIVE", "POSITIVE", "VARIANTS", "VIDEO_RECIPE", "Combination",
    "CombinedScreener", "DecisionBand", "InjectionConfig", "MetaInconclusive", "PipelineConfig",
    "Recipe", "ScreenerArtifact", "ScreenerResult", "SiloConfig", "SiloScreener", "VariantResult",
    "band_metrics", "calibrate_band", "combine", "inject_missing", "make_trainer", "meta_inconclusive",
    "route_silo", "screen", "silo_split", "train_combined", "train_ladder", "train_screener",
    "train_variant", "zero_balance", "zero_share",
]
