"""Ground-truth occupancy world: storage, ray casting, visibility and grid paths."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml
from scipy import sparse
from scipy.sparse import csgraph

from ..errors import DataError
from ..geometry import read_pgm, write_pgm

FREE, OBSTACLE, UNKNOWN = 0, 1, -1
SQRT2 = math.sqrt(2.0)


class WorldError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class WorldModel:
    """Labelled grid; ``labels[row, col]`` covers ``origin + (col, row) * resolution``."""

    labels: np.ndarray
    resolution: float = 0.1
    origin: tuple[float, float] = (0.0, 0.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @cached_property
    def free(self) -> np.ndarray:
        return self.labels == FREE

    @cached_property
    def obstacle(self) -> np.ndarray:
        return self.labels == OBSTACLE

    @property
    def free_area(self) -> float:
        return float(self.free.sum()) * self.resolution ** 2

    def to_cell(self, xy) -> tuple[int, int]:
        x, y = xy
        return (int(math.floor((y - self.origin[1]) / self.resolution)),
                int(math.floor((x - self.origin[0]) / self.resolution)))

    def to_cells(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return np.column_stack((np.floor((xy[:, 1] - self.origin[1]) / self.resolution),
                                np.floor((xy[:, 0] - self.origin[0]) / self.resolution))).astype(np.int64)

    def cell_center(self, cell) -> tuple[float, float]:
        r, c = cell
        return (self.origin[0] + (c + 0.5) * self.resolution, self.origin[1] + (r + 0.5) * self.resolution)

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.shape[0] and 0 <= c < self.shape[1]

    def is_free(self, xy) -> bool:
        cell = self.to_cell(xy)
        return self.in_bounds(cell) and bool(self.free[cell])

    def __eq__(self, other):
        if not isinstance(other, WorldModel):
            return NotImplemented
        return (self.resolution == other.resolution and self.origin == other.origin
                and np.array_equal(self.labels, other.labels))

    __hash__ = None

    # ---- persistence: PGM + YAML sidecar, map_server style ----

    def save(self, pgm_path) -> Path:
        pgm_path = Path(pgm_path)
        img = np.full(self.shape, 205, dtype=np.uint8)
        img[self.free] = 254
        img[self.obstacle] = 0
        write_pgm(pgm_path, img[::-1])
        meta = {
            "image": pgm_path.name,
            "resolution": self.resolution,
            "origin": [self.origin[0], self.origin[1], 0.0],
            "occupied_thresh": 0.65,
            "free_thresh": 0.196,
            "negate": 0,
        }
        if self.meta:
            meta["extra"] = self.meta
        yaml_path = pgm_path.with_suffix(".yaml")
        yaml_path.write_text(yaml.safe_dump(meta, sort_keys=True))
        return yaml_path

    @classmethod
    def load(cls, yaml_path) -> "WorldModel":
        yaml_path = Path(yaml_path)
        try:
            meta = yaml.safe_load(yaml_path.read_text())
            img = read_pgm(yaml_path.parent / meta["image"])[::-1].astype(np.float64)
        except (OSError, KeyError, TypeError, yaml.YAMLError, ValueError) as exc:
            raise WorldError(f"cannot read world {yaml_path}: {exc}") from exc
        if meta.get("negate", 0):
            occ = img / 255.0
        else:
            occ = (255.0 - img) / 255.0
        labels = np.full(img.shape, UNKNOWN, dtype=np.int8)
        labels[occ > meta.get("occupied_thresh", 0.65)] = OBSTACLE
        labels[occ < meta.get("free_thresh", 0.196)] = FREE
        origin = meta.get("origin", [0.0, 0.0, 0.0])
        return cls(labels, float(meta["resolution"]), (origin[0], origin[1]), meta.get("extra", {}))

    # ---- ray casting ----

    def raycast(self, x: float, y: float, angles: np.ndarray, max_range: float) -> np.ndarray:
        """Distance to the first obstacle cell along each ray, ``inf`` when none within range."""
        step = 0.5 * self.resolution
        n = int(math.ceil(max_range / step))
        radii = (np.arange(1, n + 1) * step)
        dx, dy = np.cos(angles), np.sin(angles)
        px = x + dx[:, None] * radii[None]
        py = y + dy[:, None] * radii[None]
        rows = np.floor((py - self.origin[1]) / self.resolution).astype(np.int64)
        cols = np.floor((px - self.origin[0]) / self.resolution).astype(np.int64)
        inside = (rows >= 0) & (rows < self.shape[0]) & (cols >= 0) & (cols < self.shape[1])
        hit = np.zeros(rows.shape, dtype=bool)
        hit[inside] = self.obstacle[rows[inside], cols[inside]]
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        dist = np.where(any_hit, radii[first], np.inf)
        return dist

    # ---- grid graph for shortest paths ----

    @cached_property
    def _graph(self):
        """Sparse 8-connected graph over free cells; diagonals may not cut obstacle corners."""
        free = self.free
        h, w = free.shape
        index = -np.ones((h, w), dtype=np.int64)
        cells = np.argwhere(free)
        index[free] = np.arange(len(cells))
        rows, cols, costs = [], [], []
        for dr, dc, cost in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, SQRT2), (1, -1, SQRT2)):
            # source cells (r0, c0) step to (r1, c1) = (r0 + dr, c0 + dc); dr >= 0 always
            r0, r1 = slice(0, h - dr), slice(dr, h)
            c0, c1 = slice(max(0, -dc), w - max(0, dc)), slice(max(0, dc), w - max(0, -dc))
            a = free[r0, c0]
            b = free[r1, c1]
            ok = a & b
            if dr and dc:
                # both orthogonal neighbours must be free
                ok &= free[r1, c0] & free[r0, c1]
            ia = index[r0, c0][ok]
            ib = index[r1, c1][ok]
            rows.append(ia)
            cols.append(ib)
            costs.append(np.full(len(ia), cost))
        n = len(cells)
        mat = sparse.coo_matrix(
            (np.concatenate(costs), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        return mat, index

    def free_index(self, cell) -> int:
        _, index = self._graph
        if not self.in_bounds(cell):
            return -1
        return int(index[cell])

    def distance_fields(self, cells) -> np.ndarray:
        """Geodesic distance in metres from each source cell to every free cell.

        Returns an array of shape (len(cells), n_free); unreachable is ``inf``.
        """
        mat, index = self._graph
        idx = []
        for cell in cells:
            i = self.free_index(tuple(cell))
            if i < 0:
                raise WorldError(f"cell {tuple(cell)} is not free")
            idx.append(i)
        if not idx:
            return np.zeros((0, mat.shape[0]))
        dist = csgraph.dijkstra(mat, directed=False, indices=idx)
        return dist * self.resolution


def grid_shortest_path(world: WorldModel, s, g) -> tuple[list[tuple[int, int]], float] | None:
    """8-connected shortest path between two free cells, returned as (cells, metres).

    ``s`` and ``g`` are (row, col) cells. Diagonal steps cost sqrt(2) cells and
    may not cut an obstacle corner. Returns ``None`` when ``g`` is unreachable.
    """
    s, g = tuple(map(int, s)), tuple(map(int, g))
    for cell in (s, g):
        if not world.in_bounds(cell) or not world.free[cell]:
            raise WorldError(f"endpoint {cell} is not in free space")
    if s == g:
        return [s], 0.0
    mat, index = world._graph
    si, gi = world.free_index(s), world.free_index(g)
    dist, pred = csgraph.dijkstra(mat, directed=False, indices=si, return_predecessors=True)
    if not np.isfinite(dist[gi]):
        return None
    cells = np.argwhere(world.free)
    path = [gi]
    while path[-1] != si:
        path.append(int(pred[path[-1]]))
    path.reverse()
    return [tuple(map(int, cells[i])) for i in path], float(dist[gi]) * world.resolution


def dijkstra_reference(free: np.ndarray, s, g) -> float | None:
    """Plain heap-based Dijkstra on a boolean grid (cells units); used as an oracle."""
    h, w = free.shape
    best = {s: 0.0}
    heap = [(0.0, s)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if (r, c) == g:
            return d
        if d > best.get((r, c), math.inf):
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if not dr and not dc:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or not free[nr, nc]:
                    continue
                if dr and dc and not (free[r + dr, c] and free[r, c + dc]):
                    continue
                nd = d + (SQRT2 if dr and dc else 1.0)
                if nd < best.get((nr, nc), math.inf):
                    best[(nr, nc)] = nd
                    heapq.heappush(heap, (nd, (nr, nc)))
    return None


@dataclass(frozen=True, eq=False)
class LocationFootprint:
    node_id: int
    cells: np.ndarray  # flat indices into the world grid, sorted

    def __len__(self) -> int:
        return len(self.cells)

    def contains(self, world: WorldModel, xy) -> bool:
        cell = world.to_cell(xy)
        if not world.in_bounds(cell):
            return False
        flat = cell[0] * world.shape[1] + cell[1]
        i = np.searchsorted(self.cells, flat)
        return bool(i < len(self.cells) and self.cells[i] == flat)


def footprint(world: WorldModel, pose, radius: float, node_id: int = -1) -> LocationFootprint:
    """Free cells visible in straight lines from ``pose`` within ``radius``."""
    x, y = pose[0], pose[1]
    cell = world.to_cell((x, y))
    if not world.in_bounds(cell) or world.obstacle[cell]:
        raise WorldError(f"pose {(x, y)} is inside an obstacle or off the map")
    w = world.shape[1]
    flat = [np.array([cell[0] * w + cell[1]], dtype=np.int64)]
    if radius > 0:
        step = 0.5 * world.resolution
        n_rays = max(64, int(math.ceil(2 * math.pi * radius / (0.5 * world.resolution))))
        angles = np.linspace(-math.pi, math.pi, n_rays, endpoint=False)
        n = int(math.ceil(radius / step))
        radii = np.arange(1, n + 1) * step
        px = x + np.cos(angles)[:, None] * radii[None]
        py = y + np.sin(angles)[:, None] * radii[None]
        rows = np.floor((py - world.origin[1]) / world.resolution).astype(np.int64)
        cols = np.floor((px - world.origin[0]) / world.resolution).astype(np.int64)
        inside = (rows >= 0) & (rows < world.shape[0]) & (cols >= 0) & (cols < w)
        blocked = np.ones(rows.shape, dtype=bool)
        blocked[inside] = ~world.free[rows[inside], cols[inside]]
        # a ray stops at the first non-free sample
        visible = np.cumsum(blocked, axis=1) == 0
        flat.append(rows[visible] * w + cols[visible])
    cells = np.unique(np.concatenate(flat))
    cells = cells[world.free.ravel()[cells]]
    return LocationFootprint(node_id, cells)
