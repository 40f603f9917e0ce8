"""Pairwise overlap of occupancy scans under a rigid transform."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..geometry import Scan2D, Transform2, apply, invert

_DILATION_CACHE_ATTR = "_dilated"


def _disk(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return (xx * xx + yy * yy) <= radius * radius


def dilated(scan: Scan2D, tolerance: int) -> np.ndarray:
    """Occupancy grown by a disk of ``tolerance`` cells (memoised on the scan)."""
    if tolerance <= 0:
        return scan.occupancy
    cache = scan.__dict__.setdefault(_DILATION_CACHE_ATTR, {})
    if tolerance not in cache:
        cache[tolerance] = ndimage.binary_dilation(scan.occupancy, structure=_disk(tolerance))
    return cache[tolerance]


def _lookup(target: Scan2D, target_from_source: Transform2, source: Scan2D, tolerance: int):
    """Map source cells into ``target``; return (inside mask, hit mask) over source cells."""
    pts = apply(target_from_source, source.occupied_points)
    cells = np.rint(target.metric_to_cells(pts)).astype(np.int64)
    r, c = cells[:, 0], cells[:, 1]
    inside = (r >= 0) & (r < target.height) & (c >= 0) & (c < target.width)
    hit = np.zeros(len(cells), dtype=bool)
    mask = dilated(target, tolerance)
    hit[inside] = mask[r[inside], c[inside]]
    return inside, hit


def scan_overlap(a: Scan2D, b: Scan2D, t: Transform2, tolerance: int = 0) -> float:
    """IoU of occupied cells once ``b`` is moved into ``a``'s frame by ``t`` (``a_from_b``).

    Only cells that land inside the other scan's window take part, which keeps
    ``scan_overlap(a, b, t) == scan_overlap(b, a, invert(t))`` up to rasterisation.
    ``tolerance`` > 0 lets a cell match any occupied cell within that radius.
    """
    if a.occupied_count == 0 or b.occupied_count == 0:
        return 0.0
    b_inside, b_hit = _lookup(a, t, b, tolerance)
    a_inside, a_hit = _lookup(b, invert(t), a, tolerance)
    n_a, n_b = int(a_inside.sum()), int(b_inside.sum())
    if n_a + n_b == 0:
        return 0.0
    inter = 0.5 * (int(a_hit.sum()) + int(b_hit.sum()))
    union = n_a + n_b - inter
    return float(min(1.0, inter / union)) if union > 0 else 0.0
