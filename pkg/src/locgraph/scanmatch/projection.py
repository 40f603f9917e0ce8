"""Point cloud to 2D occupancy projection with floor and ceiling bands removed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import PointCloud, Scan2D, centered_origin


@dataclass(frozen=True)
class ProjectionConfig:
    """Height band and grid used to flatten a cloud into a ``Scan2D``.

    Points lower than ``floor_height_max`` or higher than
    ``ceiling_height_min`` are removed before projection.
    """

    floor_height_min: float = -0.5
    floor_height_max: float = 0.2
    ceiling_height_min: float = 2.5
    scan_size: int = 360
    resolution: float = 0.1
    occupancy_threshold: int = 1

    def __post_init__(self):
        if not self.floor_height_min <= self.floor_height_max < self.ceiling_height_min:
            raise ValueError("floor cut must lie below ceiling cut")
        if self.scan_size <= 0 or self.resolution <= 0:
            raise ValueError("scan_size and resolution must be positive")
        if self.occupancy_threshold < 1:
            raise ValueError("occupancy_threshold must be >= 1")


def project_cloud(cloud: PointCloud, cfg: ProjectionConfig = ProjectionConfig()) -> Scan2D:
    size = cfg.scan_size
    origin = centered_origin(size, cfg.resolution)
    pts = cloud.points
    keep = (pts[:, 2] >= cfg.floor_height_max) & (pts[:, 2] <= cfg.ceiling_height_min)
    pts = pts[keep]
    occ = np.zeros(size * size, dtype=bool)
    if len(pts):
        # origin has zero rotation, so cell lookup is a shift and a floor
        cols = np.floor((pts[:, 0] - origin.dx) / cfg.resolution).astype(np.int64)
        rows = np.floor((pts[:, 1] - origin.dy) / cfg.resolution).astype(np.int64)
        inside = (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
        flat = rows[inside] * size + cols[inside]
        counts = np.bincount(flat, minlength=size * size)
        occ = counts >= cfg.occupancy_threshold
    return Scan2D(occ.reshape(size, size), cfg.resolution, origin)
