"""Cloud projection, corner features and robust 2D scan alignment."""

from .features import DETECTORS, DetectorParams, FeatureSet, detect_features, harris_response
from .matcher import FeatureCache, MatchResult, match_scans
from .overlap import scan_overlap
from .projection import ProjectionConfig, project_cloud
from .registration import (
    MatchSet,
    MatcherConfig,
    estimate_transform,
    least_squares_transform,
    match_features,
    residuals,
)

__all__ = [
    "DETECTORS",
    "DetectorParams",
    "FeatureCache",
    "FeatureSet",
    "MatchResult",
    "MatchSet",
    "MatcherConfig",
    "ProjectionConfig",
    "detect_features",
    "estimate_transform",
    "harris_response",
    "least_squares_transform",
    "match_features",
    "match_scans",
    "project_cloud",
    "residuals",
    "scan_overlap",
]
