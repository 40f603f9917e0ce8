"""Harris corners with steered binary patch descriptors on occupancy scans.

Descriptors are sampled from a clipped distance-to-obstacle field around each
corner. Sampling is steered by one canonical orientation per scan (the
dominant edge direction folded modulo a quarter turn), and each keypoint
carries four descriptors, one per quarter-turn offset. Matching two scans
then reduces to picking the quarter-turn hypothesis that pairs up best.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geometry import Scan2D

N_HYPOTHESES = 4


@dataclass(frozen=True)
class DetectorParams:
    smooth_sigma: float = 1.0
    window_sigma: float = 1.5
    harris_k: float = 0.04
    nms_size: int = 5
    rel_threshold: float = 0.005
    abs_threshold: float = 1e-4
    max_keypoints: int = 300
    # descriptor geometry, in cells
    patch_radius: int = 32
    field_clip: float = 20.0
    n_bits: int = 256


DETECTORS: dict[str, DetectorParams] = {
    "orb": DetectorParams(),
    # edge transitions come with a pose guess, so weaker corners are worth keeping
    "harris": DetectorParams(rel_threshold=0.003, max_keypoints=400),
}


def _pattern(params: DetectorParams) -> np.ndarray:
    rng = np.random.default_rng(0x5EED)
    r = params.patch_radius
    pts = rng.normal(0.0, r / 2.5, size=(params.n_bits * 4, 2))
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= r][: params.n_bits * 2]
    if len(pts) < params.n_bits * 2:
        raise RuntimeError("descriptor pattern sampling fell short")
    return pts.reshape(params.n_bits, 2, 2)


_PATTERNS: dict[DetectorParams, np.ndarray] = {}


def _get_pattern(params: DetectorParams) -> np.ndarray:
    if params not in _PATTERNS:
        _PATTERNS[params] = _pattern(params)
    return _PATTERNS[params]


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Keypoints in metric sensor coordinates with packed binary descriptors.

    ``descriptors[i, k]`` describes keypoint ``i`` with the sampling pattern
    turned by ``orientation + k * pi / 2``.
    """

    keypoints: np.ndarray      # (N, 2) metric x, y
    cells: np.ndarray          # (N, 2) float row, col
    descriptors: np.ndarray    # (N, 4, n_bits / 8) uint8
    orientation: float = 0.0
    detector: str = "orb"

    def __len__(self) -> int:
        return len(self.keypoints)

    @classmethod
    def empty(cls, detector: str = "orb", n_bytes: int = 32) -> "FeatureSet":
        return cls(
            np.zeros((0, 2)), np.zeros((0, 2)),
            np.zeros((0, N_HYPOTHESES, n_bytes), dtype=np.uint8), 0.0, detector,
        )

    def identical(self, other: "FeatureSet") -> bool:
        return (
            self.detector == other.detector
            and self.orientation == other.orientation
            and np.array_equal(self.keypoints, other.keypoints)
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.descriptors, other.descriptors)
        )


def _smooth_gradients(image: np.ndarray, params: DetectorParams):
    img = ndimage.gaussian_filter(image.astype(np.float32), params.smooth_sigma, mode="constant")
    ix = ndimage.sobel(img, axis=1, mode="constant")
    iy = ndimage.sobel(img, axis=0, mode="constant")
    return ix, iy


def harris_response(image: np.ndarray, params: DetectorParams = DetectorParams(), gradients=None) -> np.ndarray:
    ix, iy = gradients if gradients is not None else _smooth_gradients(image, params)
    sxx = ndimage.gaussian_filter(ix * ix, params.window_sigma, mode="constant")
    syy = ndimage.gaussian_filter(iy * iy, params.window_sigma, mode="constant")
    sxy = ndimage.gaussian_filter(ix * iy, params.window_sigma, mode="constant")
    return sxx * syy - sxy * sxy - params.harris_k * (sxx + syy) ** 2


def dominant_orientation(ix: np.ndarray, iy: np.ndarray) -> float:
    """Edge direction folded into [-pi/4, pi/4) by quadrupling gradient angles."""
    w = ix * ix + iy * iy
    phi = np.arctan2(iy, ix)
    s = float((w * np.sin(4 * phi)).sum())
    c = float((w * np.cos(4 * phi)).sum())
    if s == 0.0 and c == 0.0:
        return 0.0
    return math.atan2(s, c) / 4.0


def _subpixel(resp: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = resp.shape
    rm, rp = np.clip(rows - 1, 0, h - 1), np.clip(rows + 1, 0, h - 1)
    cm, cp = np.clip(cols - 1, 0, w - 1), np.clip(cols + 1, 0, w - 1)
    c = resp[rows, cols]

    def offset(minus, plus):
        denom = minus - 2.0 * c + plus
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(denom < 0, 0.5 * (minus - plus) / denom, 0.0)
        return np.clip(off, -0.5, 0.5)

    return rows + offset(resp[rm, cols], resp[rp, cols]), cols + offset(resp[rows, cm], resp[rows, cp])


def _crop_box(scan: Scan2D, margin: int) -> tuple[int, int, int, int]:
    cells = scan.occupied_cells
    r0, c0 = cells.min(axis=0) - margin
    r1, c1 = cells.max(axis=0) + margin + 1
    return max(0, r0), max(0, c0), min(scan.height, r1), min(scan.width, c1)


def detect_features(scan: Scan2D, detector: str = "orb") -> FeatureSet:
    if detector not in DETECTORS:
        raise ValueError(f"unknown detector tag {detector!r}")
    params = DETECTORS[detector]
    n_bytes = params.n_bits // 8
    if scan.occupied_count == 0:
        return FeatureSet.empty(detector, n_bytes)

    # Work on the occupied bounding box. The margin covers the filter supports,
    # and descriptor samples falling outside the crop read ``field_clip``, which
    # is what the clipped distance field holds there anyway.
    margin = int(math.ceil(params.field_clip)) + 12
    r0, c0, r1, c1 = _crop_box(scan, margin)
    occ = scan.occupancy[r0:r1, c0:c1]

    ix, iy = _smooth_gradients(occ, params)
    resp = harris_response(occ, params, (ix, iy))
    orientation = dominant_orientation(ix, iy)

    peak = float(resp.max())
    thr = max(params.abs_threshold, params.rel_threshold * peak)
    local_max = ndimage.maximum_filter(resp, size=params.nms_size, mode="constant", cval=-np.inf)
    rows, cols = np.nonzero((resp == local_max) & (resp > thr))
    if len(rows) == 0:
        return FeatureSet.empty(detector, n_bytes)
    # strongest first; ties resolved by raster order for determinism
    order = np.lexsort((cols, rows, -resp[rows, cols]))[: params.max_keypoints]
    rows, cols = rows[order], cols[order]
    fr, fc = _subpixel(resp, rows, cols)

    field = ndimage.distance_transform_edt(~occ)
    np.minimum(field, params.field_clip, out=field)

    pattern = _get_pattern(params)  # (bits, 2, 2) as (dx, dy) offsets in cells
    px, py = pattern[..., 0], pattern[..., 1]
    descriptors = np.empty((len(rows), N_HYPOTHESES, n_bytes), dtype=np.uint8)
    for k in range(N_HYPOTHESES):
        ang = orientation + k * math.pi / 2
        c, s = math.cos(ang), math.sin(ang)
        sr = fr[:, None, None] + (s * px + c * py)[None]
        sc = fc[:, None, None] + (c * px - s * py)[None]
        vals = ndimage.map_coordinates(
            field, [sr.ravel(), sc.ravel()], order=1, mode="constant", cval=params.field_clip
        ).reshape(sr.shape)
        descriptors[:, k] = np.packbits(vals[:, :, 0] < vals[:, :, 1], axis=1, bitorder="little")

    cells = np.column_stack((fr + r0, fc + c0))
    # report the canonical orientation in the metric sensor frame
    metric_orientation = orientation + scan.origin.dtheta
    return FeatureSet(scan.cells_to_metric(cells), cells, descriptors, metric_orientation, detector)
