"""Synthetic biometric feature sets, exact and out-of-core EER, and the
population-size experiments built on them."""

from eerscale.errors import DataError
from eerscale.features import FeatureMatrix, SubsetRequest, load, store
from eerscale.synthgen import BandSpec, SynthSpec, generate, generate_band
from eerscale.scoring import ScoreModel, similarity, stream_counts, all_scores
from eerscale.eer import EerResult, binary_search_eer, exact_eer, roc_curve
from eerscale.stats import GroupSummary, WelchResult, estimate_icc, welch_t

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "FeatureMatrix",
    "SubsetRequest",
    "load",
    "store",
    "SynthSpec",
    "BandSpec",
    "generate",
    "generate_band",
    "ScoreModel",
    "similarity",
    "stream_counts",
    "all_scores",
    "EerResult",
    "exact_eer",
    "binary_search_eer",
    "roc_curve",
    "GroupSummary",
    "WelchResult",
    "estimate_icc",
    "welch_t",
]
