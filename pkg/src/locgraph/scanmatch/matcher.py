"""End-to-end pairwise scan alignment with acceptance scoring."""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

from ..geometry import Scan2D, Transform2
from .features import FeatureSet, detect_features
from .overlap import scan_overlap
from .registration import EstimateTrace, MatcherConfig, estimate_transform, match_features


@dataclass(frozen=True)
class MatchResult:
    transform: Transform2 | None
    inliers: int
    score: float
    accepted: bool
    matches: int = 0

    @property
    def reason(self) -> str:
        if self.accepted:
            return "accepted"
        if self.transform is None:
            return "too_few_matches"
        return "low_overlap"


class FeatureCache:
    """LRU cache of feature sets keyed by scan content and detector tag."""

    def __init__(self, maxsize: int = 4096):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, scan: Scan2D, detector: str) -> FeatureSet:
        key = (scan.digest, detector)
        with self._lock:
            feats = self._data.get(key)
            if feats is not None:
                self._data.move_to_end(key)
                self.hits += 1
                return feats
            self.misses += 1
        # detection is pure, so a concurrent duplicate computation is harmless
        feats = detect_features(scan, detector)
        with self._lock:
            self._data[key] = feats
            if len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return feats

    def __len__(self) -> int:
        return len(self._data)


def match_scans(
    a: Scan2D,
    b: Scan2D,
    guess: Transform2 | None = None,
    cfg: MatcherConfig = MatcherConfig(),
    detector: str = "orb",
    cache: FeatureCache | None = None,
) -> MatchResult:
    """Align ``b`` to ``a``; the returned transform is ``a_from_b``.

    ``guess``, when given, is also ``a_from_b``.
    """
    if cache is not None:
        fa, fb = cache.get(a, detector), cache.get(b, detector)
    else:
        fa, fb = detect_features(a, detector), detect_features(b, detector)
    # correspondences run b -> a so the fitted transform maps b into a
    pairs = match_features(fb, fa, guess, cfg)
    trace = EstimateTrace()
    t = estimate_transform(pairs, cfg, guess=guess, trace=trace)
    if t is None:
        return MatchResult(None, 0, 0.0, False, len(pairs))
    inliers = len(trace.final) if trace.final is not None else 0
    score = scan_overlap(a, b, t, cfg.overlap_tolerance)
    accepted = inliers >= cfg.min_matches and score >= cfg.accept_iou
    return MatchResult(t, inliers, score, accepted, len(pairs))
