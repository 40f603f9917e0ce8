"""SE(2) transforms, point clouds and packed 2D occupancy scans.

Frame convention: a ``Transform2`` named ``a_from_b`` maps coordinates
expressed in frame ``b`` into frame ``a``. ``compose(a_from_b, b_from_c)``
yields ``a_from_c``. See ``docs/frames.md``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def angle_diff(a: float, b: float) -> float:
    return normalize_angle(a - b)


@dataclass(frozen=True)
class Transform2:
    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "dtheta", normalize_angle(float(self.dtheta)))

    @classmethod
    def identity(cls) -> "Transform2":
        return cls(0.0, 0.0, 0.0)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.dx, self.dy])

    @property
    def norm(self) -> float:
        return math.hypot(self.dx, self.dy)

    def rotation_matrix(self) -> np.ndarray:
        c, s = math.cos(self.dtheta), math.sin(self.dtheta)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation_matrix()
        m[:2, 2] = (self.dx, self.dy)
        return m

    def __matmul__(self, other: "Transform2") -> "Transform2":
        return compose(self, other)

    def inverse(self) -> "Transform2":
        return invert(self)

    def apply(self, points):
        return apply(self, points)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dtheta)

    def is_close(self, other: "Transform2", tol: float = 1e-9) -> bool:
        return (
            abs(self.dx - other.dx) <= tol
            and abs(self.dy - other.dy) <= tol
            and abs(angle_diff(self.dtheta, other.dtheta)) <= tol
        )


def compose(a: Transform2, b: Transform2) -> Transform2:
    """Return ``a * b``: apply ``b`` first, then ``a``."""
    c, s = math.cos(a.dtheta), math.sin(a.dtheta)
    return Transform2(
        a.dx + c * b.dx - s * b.dy,
        a.dy + s * b.dx + c * b.dy,
        a.dtheta + b.dtheta,
    )


def invert(t: Transform2) -> Transform2:
    c, s = math.cos(t.dtheta), math.sin(t.dtheta)
    return Transform2(-(c * t.dx + s * t.dy), -(-s * t.dx + c * t.dy), -t.dtheta)


def apply(t: Transform2, points):
    """Rotate by ``dtheta`` then translate by ``(dx, dy)``.

    Accepts a single ``(x, y)`` pair or an ``(N, 2)`` array; returns the same
    shape (a tuple for a single pair given as tuple).
    """
    c, s = math.cos(t.dtheta), math.sin(t.dtheta)
    if isinstance(points, tuple) and len(points) == 2 and np.isscalar(points[0]):
        x, y = points
        return (c * x - s * y + t.dx, s * x + c * y + t.dy)
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        return np.array([c * arr[0] - s * arr[1] + t.dx, s * arr[0] + c * arr[1] + t.dy])
    out = np.empty_like(arr)
    out[:, 0] = c * arr[:, 0] - s * arr[:, 1] + t.dx
    out[:, 1] = s * arr[:, 0] + c * arr[:, 1] + t.dy
    return out


@dataclass(frozen=True)
class PointCloud:
    """An (N, 3) array of finite points in the sensor frame."""

    points: np.ndarray
    sensor_frame: str = "base"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def to_bytes(self) -> bytes:
        return self.points.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, sensor_frame: str = "base") -> "PointCloud":
        if len(data) % 12:
            raise ValueError("cloud blob length is not a multiple of 12 bytes")
        return cls(np.frombuffer(data, dtype="<f4").reshape(-1, 3).astype(np.float64), sensor_frame)


SCAN_MAGIC = b"SC2D"
# magic, u16 width, u16 height, f32 resolution, f32 x3 origin
_SCAN_HEADER = struct.Struct("<4sHHffff")
SCAN_HEADER_SIZE = _SCAN_HEADER.size


@dataclass(frozen=True, eq=False)
class Scan2D:
    """Binary occupancy image in a sensor-centred window.

    ``occupancy[row, col]`` covers the cell whose centre sits at
    ``apply(origin, ((col + 0.5) * res, (row + 0.5) * res))`` in the sensor frame.
    """

    occupancy: np.ndarray
    resolution: float = 0.1
    origin: Transform2 = field(default_factory=Transform2.identity)

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancy, dtype=bool)
        if occ.ndim != 2:
            raise ValueError("occupancy must be a 2D array")
        occ.flags.writeable = False
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "resolution", float(np.float32(self.resolution)))
        # origin is stored as f32 on disk; keep the in-memory value identical
        o = self.origin
        object.__setattr__(
            self,
            "origin",
            Transform2(float(np.float32(o.dx)), float(np.float32(o.dy)), float(np.float32(o.dtheta))),
        )

    @classmethod
    def empty(cls, size: int = 360, resolution: float = 0.1) -> "Scan2D":
        return cls(np.zeros((size, size), dtype=bool), resolution, centered_origin(size, resolution))

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    @cached_property
    def occupied_cells(self) -> np.ndarray:
        """(N, 2) int array of (row, col) occupied indices, row-major order."""
        return np.argwhere(self.occupancy)

    @cached_property
    def occupied_points(self) -> np.ndarray:
        return self.cells_to_metric(self.occupied_cells)

    @property
    def occupied_count(self) -> int:
        return int(len(self.occupied_cells))

    def cells_to_metric(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=float).reshape(-1, 2)
        local = np.column_stack(((cells[:, 1] + 0.5) * self.resolution, (cells[:, 0] + 0.5) * self.resolution))
        return apply(self.origin, local)

    def metric_to_cells(self, points) -> np.ndarray:
        """Float (row, col) coordinates of metric sensor-frame points."""
        local = apply(invert(self.origin), np.asarray(points, dtype=float).reshape(-1, 2))
        return np.column_stack((local[:, 1] / self.resolution - 0.5, local[:, 0] / self.resolution - 0.5))

    def __eq__(self, other):
        if not isinstance(other, Scan2D):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and self.occupancy.shape == other.occupancy.shape
            and bool(np.array_equal(self.occupancy, other.occupancy))
        )

    __hash__ = None

    @cached_property
    def digest(self) -> bytes:
        import hashlib

        return hashlib.blake2b(self.to_bytes(), digest_size=16).digest()

    def to_bytes(self) -> bytes:
        header = _SCAN_HEADER.pack(
            SCAN_MAGIC, self.width, self.height, self.resolution,
            self.origin.dx, self.origin.dy, self.origin.dtheta,
        )
        bits = np.packbits(self.occupancy.ravel(), bitorder="little")
        return header + bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Scan2D":
        if len(data) < SCAN_HEADER_SIZE:
            raise ValueError("scan blob shorter than header")
        magic, w, h, res, ox, oy, ot = _SCAN_HEADER.unpack_from(data)
        if magic != SCAN_MAGIC:
            raise ValueError(f"bad scan magic {magic!r}")
        nbytes = (w * h + 7) // 8
        body = np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=SCAN_HEADER_SIZE)
        if len(body) != nbytes:
            raise ValueError("truncated scan body")
        occ = np.unpackbits(body, count=w * h, bitorder="little").astype(bool).reshape(h, w)
        return cls(occ, res, Transform2(ox, oy, ot))

    @property
    def serialized_size(self) -> int:
        return SCAN_HEADER_SIZE + (self.width * self.height + 7) // 8

    def to_byte_image(self) -> np.ndarray:
        """One byte per cell, 255 for occupied, as in an 8-bit black/white image."""
        return np.where(self.occupancy, 255, 0).astype(np.uint8)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Scan2D":
        return cls.from_bytes(Path(path).read_bytes())


def centered_origin(size: int, resolution: float) -> Transform2:
    half = size * resolution / 2.0
    return Transform2(-half, -half, 0.0)


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval separated by whitespace, '#' comments allowed
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError("only binary PGM (P5) is supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("16-bit PGM not supported")
    body = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return body.reshape(h, w).copy()
