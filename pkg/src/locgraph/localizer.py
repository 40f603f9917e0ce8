"""Retrieval followed by scan-matching verification of the retrieved locations."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .geometry import Scan2D, Transform2
from .placerec import DEFAULT_K, Descriptor, PlaceIndex
from .scanmatch import FeatureCache, MatcherConfig, match_scans
from .topograph import TopoGraph


@dataclass(frozen=True)
class LocalizerConfig:
    k: int = DEFAULT_K
    detector: str = "orb"
    # localise every ``stride`` frames when running eagerly
    stride: int = 1
    workers: int = 1
    matcher: MatcherConfig = field(default_factory=MatcherConfig)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class LocalizedNode:
    node_id: int
    t_loc: Transform2  # node observation point <- robot
    score: float
    inliers: int = 0


@dataclass
class Localization:
    """Verified candidates computed for one frame."""

    frame_id: int
    nodes: list[LocalizedNode]
    records: list[dict] = field(default_factory=list)

    def debug_line(self) -> str:
        return json.dumps({"frame": self.frame_id, "candidates": self.records}, sort_keys=True)


def localize(
    scan: Scan2D,
    descriptor: Descriptor,
    g: TopoGraph,
    index: PlaceIndex,
    exclude=(),
    cfg: LocalizerConfig = LocalizerConfig(),
    cache: FeatureCache | None = None,
    records: list | None = None,
) -> list[LocalizedNode]:
    """Top-k retrieval minus ``exclude``, each survivor verified by guess-free scan matching.

    Returns accepted candidates by descending score (ties by node id). When
    ``records`` is a list, one dict per retrieved candidate is appended to it.
    """
    if len(index) == 0:
        return []
    excluded = set(exclude)
    candidates = [c for c in index.query(descriptor, cfg.k + len(excluded)) if c.node_id not in excluded][: cfg.k]

    def verify(c):
        return match_scans(g.nodes[c.node_id].scan, scan, None, cfg.matcher, cfg.detector, cache)

    if cfg.workers > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(verify, candidates))
    else:
        results = [verify(c) for c in candidates]

    out = []
    for c, r in zip(candidates, results):
        if records is not None:
            records.append({
                "node": c.node_id,
                "distance": c.distance,
                "score": r.score,
                "inliers": r.inliers,
                "matches": r.matches,
                "reason": r.reason,
            })
        if r.accepted:
            out.append(LocalizedNode(c.node_id, r.transform, r.score, r.inliers))
    out.sort(key=lambda n: (-n.score, n.node_id))
    return out
