"""Fixed-length place descriptors and exact top-k retrieval by Euclidean distance.

The built-in ``polar-hist`` encoder is a rotation-robust geometric baseline.
Learned descriptors can be supplied per frame through a CSV file and tagged
with any encoder name.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .geometry import Scan2D

DEFAULT_K = 5


@dataclass(frozen=True, eq=False)
class Descriptor:
    values: np.ndarray
    encoder: str = "polar-hist"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("descriptor entries must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return len(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, Descriptor):
            return NotImplemented
        return self.encoder == other.encoder and np.array_equal(self.values, other.values)

    __hash__ = None

    def distance(self, other: "Descriptor") -> float:
        return float(np.sqrt(np.sum((self.values - other.values) ** 2)))


@dataclass(frozen=True)
class PolarHistParams:
    radial_bins: int = 16
    angular_bins: int = 32
    max_range: float = 18.0

    @property
    def length(self) -> int:
        return self.radial_bins * (self.angular_bins // 2 + 1)


def polar_hist(scan: Scan2D, params: PolarHistParams = PolarHistParams()) -> np.ndarray:
    """Occupied cells binned by (range, bearing) around the sensor.

    Each ring is normalised to unit mass, then replaced by the magnitude of its
    DFT along the bearing axis, which discards the absolute heading.
    """
    out = np.zeros((params.radial_bins, params.angular_bins // 2 + 1))
    if scan.occupied_count == 0:
        return out.ravel()
    pts = scan.occupied_points
    r = np.hypot(pts[:, 0], pts[:, 1])
    keep = r < params.max_range
    r, pts = r[keep], pts[keep]
    ri = np.minimum((r / params.max_range * params.radial_bins).astype(np.int64), params.radial_bins - 1)
    a = np.arctan2(pts[:, 1], pts[:, 0])
    ai = np.floor((a + math.pi) / (2 * math.pi) * params.angular_bins).astype(np.int64) % params.angular_bins
    hist = np.zeros((params.radial_bins, params.angular_bins))
    np.add.at(hist, (ri, ai), 1.0)
    mass = hist.sum(axis=1, keepdims=True)
    np.divide(hist, mass, out=hist, where=mass > 0)
    out[:] = np.abs(np.fft.rfft(hist, axis=1))
    return out.ravel()


ENCODERS = {"polar-hist": polar_hist}


def describe(scan: Scan2D, images=None, encoder: str = "polar-hist") -> Descriptor:
    """Descriptor of one observation. ``images`` is accepted for interface parity and unused."""
    if encoder not in ENCODERS:
        raise ConfigError(f"unknown encoder {encoder!r}; built-ins: {sorted(ENCODERS)}")
    return Descriptor(ENCODERS[encoder](scan), encoder)


def concat_descriptors(d_img: Descriptor | None, d_cloud: Descriptor) -> Descriptor:
    """Image part followed by cloud part; an absent or empty image part passes the cloud through."""
    if d_img is None or d_img.length == 0:
        return d_cloud
    return Descriptor(np.concatenate((d_img.values, d_cloud.values)), f"{d_img.encoder}+{d_cloud.encoder}")


@dataclass(frozen=True)
class Candidate:
    node_id: int
    distance: float


@dataclass
class PlaceIndex:
    """Linear-scan index; one descriptor per node, all the same length."""

    encoder: str | None = None
    entries: dict[int, Descriptor] = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()
        self._ids = np.zeros(0, dtype=np.int64)
        self._matrix: np.ndarray | None = None
        entries, self.entries = self.entries, {}
        for node_id, d in entries.items():
            self.insert(node_id, d)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def length(self) -> int | None:
        return None if self._matrix is None else self._matrix.shape[1]

    def insert(self, node_id: int, d: Descriptor) -> "PlaceIndex":
        with self._lock:
            if node_id in self.entries:
                raise KeyError(f"node {node_id} already indexed")
            if self._matrix is not None and d.length != self._matrix.shape[1]:
                raise ValueError(f"descriptor length {d.length} != index length {self._matrix.shape[1]}")
            if self.encoder is None:
                self.encoder = d.encoder
            row = d.values[None, :]
            # rebuild rather than grow in place so concurrent readers keep a consistent snapshot
            matrix = row.copy() if self._matrix is None else np.vstack((self._matrix, row))
            ids = np.append(self._ids, np.int64(node_id))
            self.entries[node_id] = d
            self._matrix, self._ids = matrix, ids
        return self

    def query(self, q: Descriptor, k: int = DEFAULT_K) -> list[Candidate]:
        matrix, ids = self._matrix, self._ids
        if matrix is None or k <= 0:
            return []
        if q.length != matrix.shape[1]:
            raise ValueError(f"query length {q.length} != index length {matrix.shape[1]}")
        dist = np.sqrt(np.sum((matrix - q.values[None, :]) ** 2, axis=1))
        order = np.lexsort((ids, dist))[:k]
        return [Candidate(int(ids[i]), float(dist[i])) for i in order]


def index_insert(index: PlaceIndex, node_id: int, d: Descriptor) -> PlaceIndex:
    return index.insert(node_id, d)


def query_top_k(index: PlaceIndex, q: Descriptor, k: int = DEFAULT_K) -> list[Candidate]:
    return index.query(q, k)


# ---- external descriptors: rows "frame_id, v_0, ..., v_{L-1}" ----

def load_descriptor_csv(path) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    length = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                frame_id = int(row[0])
                values = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                if lineno == 1:
                    continue  # header row
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if length is None:
                length = len(values)
            elif len(values) != length:
                raise DataError(f"{path}:{lineno}: descriptor length {len(values)} != {length}")
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}:{lineno}: non-finite descriptor entry")
            out[frame_id] = values
    return out


def write_descriptor_csv(path, rows: dict[int, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for frame_id in sorted(rows):
            w.writerow([frame_id, *(repr(float(v)) for v in rows[frame_id])])
