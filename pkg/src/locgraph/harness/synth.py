"""Procedural floorplans (rooms joined by doors) and exploration trajectories."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from ..errors import ConfigError
from ..evaluation.world import FREE, OBSTACLE, UNKNOWN, WorldModel, grid_shortest_path
from ..geometry import normalize_angle


class SynthError(ConfigError):
    pass


@dataclass(frozen=True)
class SynthParams:
    n_rooms: int = 4
    area: float = 200.0
    loop: bool = True
    door_width: float = 1.2
    wall: float = 0.2
    room_jitter: float = 0.2
    furniture_per_room: int = 4
    resolution: float = 0.1
    margin: float = 1.0
    frame_spacing: float = 0.5
    speed: float = 1.0          # m/s
    turn_rate: float = 1.0      # rad/s while turning in place
    max_turn_step: float = math.radians(30)
    clearance: float = 0.35
    laps: int = 1               # times around the ring before the revisit

    def validate(self):
        if self.n_rooms < 1:
            raise SynthError("need at least one room")
        if self.loop and (self.n_rooms < 4 or self.n_rooms % 2):
            raise SynthError("a loop layout needs an even room count >= 4")
        per_room = self.area / self.n_rooms
        if per_room < 9.0:
            raise SynthError(f"rooms of {per_room:.1f} m^2 are too small to traverse")
        if self.door_width < 2 * self.clearance + 0.2:
            raise SynthError("door too narrow for the clearance")
        if self.laps < 1:
            raise SynthError("laps must be >= 1")
        if self.frame_spacing <= 0:
            raise SynthError("frame_spacing must be positive")


@dataclass(frozen=True)
class Room:
    index: int
    row: int
    col: int
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class Door:
    a: int
    b: int
    x: float
    y: float
    vertical_wall: bool  # True when the wall separating a and b runs along y


@dataclass
class Floorplan:
    world: WorldModel
    rooms: list[Room]
    doors: list[Door]
    ring: list[int]

    def room_of(self, x: float, y: float) -> int:
        for room in self.rooms:
            if room.contains(x, y):
                return room.index
        return -1


def _split(total: float, n: int, jitter: float, rng) -> np.ndarray:
    raw = 1.0 + rng.uniform(-jitter, jitter, size=n)
    return total * raw / raw.sum()


def build_floorplan(seed: int, params: SynthParams = SynthParams()) -> Floorplan:
    params.validate()
    rng = np.random.default_rng(seed)
    n = params.n_rooms
    n_rows = 2 if params.loop else 1
    n_cols = n // n_rows if params.loop else n
    # interior area slightly above target to absorb furniture footprint
    side = math.sqrt(params.area * 1.04 / n)
    widths = _split(side * n_cols, n_cols, params.room_jitter, rng)
    heights = _split(side * n_rows, n_rows, params.room_jitter, rng)

    res, wall, margin = params.resolution, params.wall, params.margin
    total_w = widths.sum() + wall * (n_cols + 1)
    total_h = heights.sum() + wall * (n_rows + 1)
    shape = (int(math.ceil((total_h + 2 * margin) / res)), int(math.ceil((total_w + 2 * margin) / res)))
    labels = np.full(shape, UNKNOWN, dtype=np.int8)
    origin = (-margin, -margin)

    def cells(x0, y0, x1, y1):
        c0 = int(round((x0 - origin[0]) / res))
        c1 = int(round((x1 - origin[0]) / res))
        r0 = int(round((y0 - origin[1]) / res))
        r1 = int(round((y1 - origin[1]) / res))
        return slice(r0, r1), slice(c0, c1)

    labels[cells(0.0, 0.0, total_w, total_h)] = OBSTACLE
    rooms: list[Room] = []
    xs = np.concatenate(([wall], wall + np.cumsum(widths + wall)))
    ys = np.concatenate(([wall], wall + np.cumsum(heights + wall)))
    for r in range(n_rows):
        for c in range(n_cols):
            room = Room(len(rooms), r, c, xs[c], ys[r], xs[c] + widths[c], ys[r] + heights[r])
            rooms.append(room)
            labels[cells(room.x0, room.y0, room.x1, room.y1)] = FREE

    def room_at(r, c):
        return rooms[r * n_cols + c]

    doors: list[Door] = []
    half = params.door_width / 2
    pad = half + 0.6

    def add_door(ra: Room, rb: Room, vertical_wall: bool):
        if vertical_wall:
            lo, hi = max(ra.y0, rb.y0) + pad, min(ra.y1, rb.y1) - pad
            y = rng.uniform(lo, hi)
            x = 0.5 * (ra.x1 + rb.x0)
            labels[cells(x - wall, y - half, x + wall, y + half)] = FREE
        else:
            lo, hi = max(ra.x0, rb.x0) + pad, min(ra.x1, rb.x1) - pad
            x = rng.uniform(lo, hi)
            y = 0.5 * (ra.y1 + rb.y0)
            labels[cells(x - half, y - wall, x + half, y + wall)] = FREE
        doors.append(Door(ra.index, rb.index, x, y, vertical_wall))

    for r in range(n_rows):
        for c in range(n_cols - 1):
            add_door(room_at(r, c), room_at(r, c + 1), True)
    if params.loop:
        add_door(room_at(0, 0), room_at(1, 0), False)
        add_door(room_at(0, n_cols - 1), room_at(1, n_cols - 1), False)
        ring = [room_at(0, c).index for c in range(n_cols)] + [room_at(1, c).index for c in reversed(range(n_cols))]
    else:
        ring = [room.index for room in rooms]

    # furniture: boxes hugging the walls, clear of doors and of the room core
    for room in rooms:
        placed = 0
        attempts = 0
        while placed < params.furniture_per_room and attempts < 200:
            attempts += 1
            w, h = rng.uniform(0.4, 1.3, size=2)
            side_pick = rng.integers(4)
            gap = rng.uniform(0.0, 0.3)
            if side_pick == 0:
                x0, y0 = rng.uniform(room.x0, room.x1 - w), room.y0 + gap
            elif side_pick == 1:
                x0, y0 = rng.uniform(room.x0, room.x1 - w), room.y1 - gap - h
            elif side_pick == 2:
                x0, y0 = room.x0 + gap, rng.uniform(room.y0, room.y1 - h)
            else:
                x0, y0 = room.x1 - gap - w, rng.uniform(room.y0, room.y1 - h)
            cx, cy = x0 + w / 2, y0 + h / 2
            if any(math.hypot(cx - d.x, cy - d.y) < 1.6 + max(w, h) / 2 for d in doors):
                continue
            rc = room.center
            if abs(cx - rc[0]) < 1.6 and abs(cy - rc[1]) < 1.6:
                continue
            labels[cells(x0, y0, x0 + w, y0 + h)] = OBSTACLE
            placed += 1

    world = WorldModel(labels, res, origin, {"seed": int(seed), "params": asdict(params)})
    return Floorplan(world, rooms, doors, ring)


def _inflated(world: WorldModel, clearance: float) -> WorldModel:
    radius = int(math.ceil(clearance / world.resolution))
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    disk = xx * xx + yy * yy <= radius * radius
    blocked = ndimage.binary_dilation(~world.free, structure=disk)
    labels = np.where(blocked, OBSTACLE, FREE).astype(np.int8)
    return WorldModel(labels, world.resolution, world.origin)


def _snap(world: WorldModel, pt, max_shift: float = 1.5):
    """Nearest free cell centre to ``pt``; furniture may cover a nominal waypoint."""
    cell = world.to_cell(pt)
    if world.in_bounds(cell) and world.free[cell]:
        return pt
    dist, (rows, cols) = ndimage.distance_transform_edt(~world.free, return_indices=True)
    if not world.in_bounds(cell) or dist[cell] * world.resolution > max_shift:
        raise SynthError(f"waypoint {tuple(map(float, pt))} lacks clearance")
    return world.cell_center((int(rows[cell]), int(cols[cell])))


def _line_free(world: WorldModel, a, b) -> bool:
    dist = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(2, int(dist / (0.5 * world.resolution)) + 1)
    xs = np.linspace(a[0], b[0], n)
    ys = np.linspace(a[1], b[1], n)
    cells = world.to_cells(np.column_stack((xs, ys)))
    return bool(world.free[cells[:, 0], cells[:, 1]].all())


def _string_pull(world: WorldModel, pts: list) -> list:
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not _line_free(world, pts[i], pts[j]):
            j -= 1
        out.append(pts[j])
        i = j
    return out


def _waypoints(plan: Floorplan, params: SynthParams, rng) -> list[tuple[float, float]]:
    rooms = {r.index: r for r in plan.rooms}
    door_of = {}
    for d in plan.doors:
        door_of[(d.a, d.b)] = d
        door_of[(d.b, d.a)] = d

    def coverage_point(room: Room):
        cx, cy = room.center
        sx = rng.choice([-1.0, 1.0])
        sy = rng.choice([-1.0, 1.0])
        ox = max(0.0, min((room.x1 - room.x0) / 4, (room.x1 - room.x0) / 2 - 1.8))
        oy = max(0.0, min((room.y1 - room.y0) / 4, (room.y1 - room.y0) / 2 - 1.8))
        return (cx + sx * ox, cy + sy * oy)

    def door_points(a: Room, b: Room):
        d = door_of[(a.index, b.index)]
        step = 0.9
        if d.vertical_wall:
            sgn = 1.0 if b.x0 > a.x0 else -1.0
            return [(d.x - sgn * step, d.y), (d.x, d.y), (d.x + sgn * step, d.y)]
        sgn = 1.0 if b.y0 > a.y0 else -1.0
        return [(d.x, d.y - sgn * step), (d.x, d.y), (d.x, d.y + sgn * step)]

    ring = plan.ring
    order = list(ring)
    if params.loop:
        for _ in range(params.laps - 1):
            order += ring
        # close the loop and revisit the first two rooms
        order += [ring[0], ring[1]]
    pts = [rooms[order[0]].center, coverage_point(rooms[order[0]])]
    for prev, nxt in zip(order[:-1], order[1:]):
        pts += door_points(rooms[prev], rooms[nxt])
        pts.append(rooms[nxt].center)
        pts.append(coverage_point(rooms[nxt]))
    return pts


def plan_trajectory(plan: Floorplan, params: SynthParams, rng) -> np.ndarray:
    """Collision-free (N, 4) array of ``t, x, y, theta`` samples along the tour."""
    world = plan.world
    inflated = _inflated(world, params.clearance)
    wps = [_snap(inflated, p) for p in _waypoints(plan, params, rng)]
    polyline: list[tuple[float, float]] = [wps[0]]
    for a, b in zip(wps[:-1], wps[1:]):
        ca, cb = inflated.to_cell(a), inflated.to_cell(b)
        if not inflated.free[ca] or not inflated.free[cb]:
            raise SynthError(f"waypoint {a if not inflated.free[ca] else b} lacks clearance")
        found = grid_shortest_path(inflated, ca, cb)
        if found is None:
            raise SynthError("trajectory leg is blocked")
        leg = [inflated.cell_center(c) for c in found[0]]
        leg[0], leg[-1] = a, b
        polyline += _string_pull(inflated, leg)[1:]

    # resample at fixed spacing, headings follow the direction of travel
    samples = [polyline[0]]
    carry = 0.0
    for a, b in zip(polyline[:-1], polyline[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        if seg < 1e-9:
            continue
        s = params.frame_spacing - carry
        while s <= seg + 1e-12:
            f = s / seg
            samples.append((a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])))
            s += params.frame_spacing
        carry = seg - (s - params.frame_spacing)
    pts = np.array(samples)
    heading = np.zeros(len(pts))
    d = np.diff(pts, axis=0)
    heading[1:] = np.arctan2(d[:, 1], d[:, 0])
    heading[0] = heading[1] if len(pts) > 1 else 0.0

    out = [(0.0, pts[0, 0], pts[0, 1], heading[0])]
    t = 0.0
    for i in range(1, len(pts)):
        prev_t, px, py, pth = out[-1]
        turn = normalize_angle(heading[i] - pth)
        # rotate in place in bounded steps before driving on
        n_turn = max(0, int(math.ceil(abs(turn) / params.max_turn_step)) - 1)
        for k in range(1, n_turn + 1):
            th = normalize_angle(pth + turn * k / (n_turn + 1))
            t += abs(turn) / (n_turn + 1) / params.turn_rate
            out.append((t, px, py, th))
        t += math.hypot(pts[i, 0] - px, pts[i, 1] - py) / params.speed
        t += abs(turn) / (n_turn + 1) / params.turn_rate
        out.append((t, pts[i, 0], pts[i, 1], heading[i]))
    traj = np.array(out)
    cells = world.to_cells(traj[:, 1:3])
    if not world.free[cells[:, 0], cells[:, 1]].all():
        raise SynthError("trajectory left free space")
    return traj


def synth_world(seed: int, params: SynthParams = SynthParams()) -> tuple[Floorplan, np.ndarray]:
    plan = build_floorplan(seed, params)
    rng = np.random.default_rng([seed, 1])
    traj = plan_trajectory(plan, params, rng)
    return plan, traj
