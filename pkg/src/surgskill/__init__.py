"""Entropy and baseline motion features for surgical skill assessment."""

__version__ = "0.1.0"

from .core import (
    CriterionDataset,
    EntropyParams,
    FeatureTag,
    FeatureVector,
    MultiTimeSeries,
    validate,
    zscore_normalize,
)
from .entropy import apen, apen_features, embed, fused_entropy_features, xapen, xapen_features
from .baselines import SmtParams, SpectralParams, dct_features, dft_features, smt_features
from .learn import Pipeline, Scheme, cross_validate, evaluate_osats, nn_classify, sffs

__all__ = [
    "CriterionDataset", "EntropyParams", "FeatureTag", "FeatureVector", "MultiTimeSeries",
    "validate", "zscore_normalize", "apen", "apen_features", "embed", "fused_entropy_features",
    "xapen", "xapen_features", "SmtParams", "SpectralParams", "dct_features", "dft_features",
    "smt_features", "Pipeline", "Scheme", "cross_validate", "evaluate_osats", "nn_classify", "sffs",
]
