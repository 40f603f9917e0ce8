"""Descriptor correspondences and robust rigid alignment in SE(2)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Transform2, apply
from .features import N_HYPOTHESES, FeatureSet


@dataclass(frozen=True)
class MatcherConfig:
    max_iter: int = 10
    delta: float = 0.5
    min_matches: int = 8
    ratio_test: float = 0.8
    guess_gate_radius: float = 2.0
    accept_iou: float = 0.3
    # occupied cells within this many cells count as overlapping when scoring
    overlap_tolerance: int = 2
    # "graduated" prunes above max(delta, half the worst residual); "literal" prunes above delta
    prune: str = "graduated"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.min_matches < 3:
            raise ValueError("min_matches must be >= 3")
        if not 0 < self.ratio_test <= 1:
            raise ValueError("ratio_test must be in (0, 1]")
        if self.prune not in ("graduated", "literal"):
            raise ValueError(f"unknown prune rule {self.prune!r}")


@dataclass(frozen=True, eq=False)
class MatchSet:
    """Paired metric points: ``p`` from the source set, ``q`` from the target."""

    p: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    q: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(-1, 2)
        q = np.asarray(self.q, dtype=float).reshape(-1, 2)
        if p.shape != q.shape:
            raise ValueError("p and q must pair up")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("match coordinates must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def __len__(self) -> int:
        return len(self.p)

    @property
    def pairs(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        return [((a[0], a[1]), (b[0], b[1])) for a, b in zip(self.p, self.q)]

    def subset(self, mask) -> "MatchSet":
        return MatchSet(self.p[mask], self.q[mask])


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.bitwise_xor(a[:, None, :], b[None, :, :])
    return np.bitwise_count(x).sum(axis=2, dtype=np.int32)


def _mutual_ratio_pairs(da: np.ndarray, db: np.ndarray, ratio: float) -> tuple[np.ndarray, np.ndarray]:
    dist = hamming_matrix(da, db)
    # argmin returns the lowest index among equal distances
    best_ab = np.argmin(dist, axis=1)
    best_ba = np.argmin(dist, axis=0)
    ia = np.arange(len(da))
    mutual = best_ba[best_ab] == ia
    d1 = dist[ia, best_ab].astype(float)
    if len(db) > 1:
        d2 = np.partition(dist, 1, axis=1)[:, 1].astype(float)
    else:
        d2 = np.full(len(da), np.inf)
    keep = mutual & (d1 <= ratio * d2)
    return ia[keep], best_ab[keep]


def quarter_turn(a: FeatureSet, b: FeatureSet, rotation: float) -> int:
    """Descriptor slot of ``b`` whose steering lines up with slot 0 of ``a``.

    ``rotation`` is the angle taking directions in ``a``'s frame to ``b``'s.
    """
    return int(round((a.orientation + rotation - b.orientation) / (math.pi / 2))) % N_HYPOTHESES


def match_features(
    a: FeatureSet,
    b: FeatureSet,
    guess: Transform2 | None = None,
    cfg: MatcherConfig = MatcherConfig(),
    hypothesis: int | None = None,
) -> MatchSet:
    """Mutual nearest neighbours under Hamming distance with a ratio test.

    With a ``guess`` (mapping ``a`` coordinates into ``b``) the descriptor
    steering follows the guessed rotation, and pairs landing farther than
    ``guess_gate_radius`` from their partner are dropped. Without one, every
    quarter-turn hypothesis is tried and the one yielding most pairs is kept
    (lowest hypothesis on ties).
    """
    if len(a) == 0 or len(b) == 0:
        return MatchSet()
    da = a.descriptors[:, 0]
    if hypothesis is not None:
        candidates = [hypothesis]
    elif guess is not None:
        candidates = [quarter_turn(a, b, guess.dtheta)]
    else:
        candidates = range(N_HYPOTHESES)
    best = None
    for k in candidates:
        ia, ib = _mutual_ratio_pairs(da, b.descriptors[:, k], cfg.ratio_test)
        if best is None or len(ia) > len(best[0]):
            best = (ia, ib)
    ia, ib = best
    p, q = a.keypoints[ia], b.keypoints[ib]
    if guess is not None and len(p):
        err = np.hypot(*(apply(guess, p) - q).T)
        gate = err <= cfg.guess_gate_radius
        p, q = p[gate], q[gate]
    return MatchSet(p, q)


def least_squares_transform(m: MatchSet, guess: Transform2 | None = None) -> Transform2:
    """Closed-form minimiser of sum ||T p_i - q_i||^2 over SE(2).

    When the source points collapse to a single location the rotation is
    unobservable; the guess angle (or zero) is used and only translation is fit.
    """
    p, q = m.p, m.q
    pc, qc = p.mean(axis=0), q.mean(axis=0)
    p0, q0 = p - pc, q - qc
    spread = float(np.abs(p0).max()) if len(p0) else 0.0
    if spread <= 1e-12:
        theta = guess.dtheta if guess is not None else 0.0
    else:
        dot = float(np.sum(p0[:, 0] * q0[:, 0] + p0[:, 1] * q0[:, 1]))
        cross = float(np.sum(p0[:, 0] * q0[:, 1] - p0[:, 1] * q0[:, 0]))
        theta = math.atan2(cross, dot)
    c, s = math.cos(theta), math.sin(theta)
    tx = qc[0] - (c * pc[0] - s * pc[1])
    ty = qc[1] - (s * pc[0] + c * pc[1])
    return Transform2(tx, ty, theta)


def residuals(t: Transform2, m: MatchSet) -> np.ndarray:
    if len(m) == 0:
        return np.zeros(0)
    d = apply(t, m.p) - m.q
    return np.hypot(d[:, 0], d[:, 1])


@dataclass
class EstimateTrace:
    """Per-iteration pair counts, kept for diagnostics and property checks."""

    sizes: list[int] = field(default_factory=list)
    fits: list[Transform2] = field(default_factory=list)
    thresholds: list[float] = field(default_factory=list)
    final: MatchSet | None = None


def estimate_transform(
    m: MatchSet,
    cfg: MatcherConfig = MatcherConfig(),
    guess: Transform2 | None = None,
    trace: EstimateTrace | None = None,
) -> Transform2 | None:
    """Iterative least-squares fit with outlier removal; ``None`` if too few pairs survive."""
    current = m
    for _ in range(cfg.max_iter):
        if trace is not None:
            trace.sizes.append(len(current))
        if len(current) < cfg.min_matches:
            return None
        t = least_squares_transform(current, guess)
        res = residuals(t, current)
        threshold = cfg.delta
        if cfg.prune == "graduated" and len(res):
            threshold = max(cfg.delta, 0.5 * float(res.max()))
        if trace is not None:
            trace.fits.append(t)
            trace.thresholds.append(threshold)
        current = current.subset(res <= threshold)
    if trace is not None:
        trace.final = current
    if len(current) == 0:
        return None
    return least_squares_transform(current, guess)
