"""Ray-cast point clouds and noisy odometry along a ground-truth trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..evaluation.world import WorldModel
from ..geometry import PointCloud, Scan2D, Transform2, compose, invert


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian odometry noise redrawn every ``cadence`` seconds.

    Both stds are fractions: the translation of each increment is scaled by
    ``1 + linear_bias + e_lin`` and its rotation by ``1 + angular_bias + e_ang``.
    """

    linear_std: float = 0.0
    angular_std: float = 0.0
    cadence: float = 1.0
    seed: int = 0
    linear_bias: float = 0.0
    angular_bias: float = 0.0

    def __post_init__(self):
        if self.linear_std < 0 or self.angular_std < 0:
            raise ValueError("noise stds must be non-negative")
        if self.cadence <= 0:
            raise ValueError("cadence must be positive")

    @property
    def is_zero(self) -> bool:
        return not (self.linear_std or self.angular_std or self.linear_bias or self.angular_bias)


NOISE_LEVELS = {
    "zero": NoiseModel(0.0, 0.0),
    "medium": NoiseModel(0.003, 0.0075),
    "large": NoiseModel(0.0075, 0.025),
}


@dataclass(frozen=True)
class SensorConfig:
    n_rays: int = 360
    max_range: float = 18.0
    wall_heights: tuple[float, ...] = (0.4, 0.9, 1.4, 1.9)
    floor_z: float = 0.0
    ceiling_z: float = 2.8
    floor_step: float = 1.0
    range_std: float = 0.0
    seed: int = 0


@dataclass(frozen=True, eq=False)
class SequenceFrame:
    frame_id: int
    timestamp: float
    odom: Transform2
    gt_pose: Transform2 | None = None
    cloud: PointCloud | None = None
    scan: Scan2D | None = None
    descriptor: np.ndarray | None = None


def pose_of(row) -> Transform2:
    return Transform2(row[1], row[2], row[3])


def ray_cloud(world: WorldModel, pose: Transform2, cfg: SensorConfig = SensorConfig(), rng=None) -> PointCloud:
    """Points on obstacle surfaces seen from ``pose``, in the robot frame, with floor/ceiling bands."""
    angles = np.linspace(-math.pi, math.pi, cfg.n_rays, endpoint=False) + pose.dtheta
    dist = world.raycast(pose.dx, pose.dy, angles, cfg.max_range)
    hit = np.isfinite(dist)
    if cfg.range_std > 0 and rng is not None:
        dist = dist + rng.normal(0.0, cfg.range_std, size=dist.shape)
    local_angles = angles - pose.dtheta
    parts = []
    if hit.any():
        d, a = dist[hit], local_angles[hit]
        xy = np.column_stack((d * np.cos(a), d * np.sin(a)))
        for z in cfg.wall_heights:
            parts.append(np.column_stack((xy, np.full(len(xy), z))))
    # floor and ceiling returns along every ray up to its hit range
    reach = np.where(hit, dist, cfg.max_range)
    steps = np.arange(cfg.floor_step, cfg.max_range, cfg.floor_step)
    if len(steps) and hit.any():
        rr, aa = np.meshgrid(steps, local_angles, indexing="xy")
        valid = rr < reach[:, None]
        valid &= hit[:, None]
        fx, fy = (rr * np.cos(aa))[valid], (rr * np.sin(aa))[valid]
        parts.append(np.column_stack((fx, fy, np.full(len(fx), cfg.floor_z))))
        parts.append(np.column_stack((fx, fy, np.full(len(fx), cfg.ceiling_z))))
    if not parts:
        return PointCloud.empty()
    return PointCloud(np.concatenate(parts))


def true_increments(traj: np.ndarray) -> list[Transform2]:
    poses = [pose_of(r) for r in traj]
    out = [Transform2.identity()]
    for a, b in zip(poses[:-1], poses[1:]):
        out.append(compose(invert(a), b))
    return out


def perturb_odometry(increments: list[Transform2], timestamps, noise: NoiseModel) -> list[Transform2]:
    """Apply the noise model; frames inside one cadence window share a perturbation."""
    if noise.is_zero:
        return list(increments)
    rng = np.random.default_rng(noise.seed)
    windows = np.floor(np.asarray(timestamps) / noise.cadence).astype(np.int64)
    n_windows = int(windows.max()) + 1 if len(windows) else 0
    e_lin = rng.normal(0.0, noise.linear_std, size=n_windows) if noise.linear_std else np.zeros(n_windows)
    e_ang = rng.normal(0.0, noise.angular_std, size=n_windows) if noise.angular_std else np.zeros(n_windows)
    out = []
    for inc, w in zip(increments, windows):
        s_lin = 1.0 + noise.linear_bias + e_lin[w]
        s_ang = 1.0 + noise.angular_bias + e_ang[w]
        out.append(Transform2(inc.dx * s_lin, inc.dy * s_lin, inc.dtheta * s_ang))
    return out


def integrate(increments: list[Transform2], start: Transform2 | None = None) -> list[Transform2]:
    pose = start or Transform2.identity()
    out = []
    for i, inc in enumerate(increments):
        pose = pose if i == 0 else compose(pose, inc)
        out.append(pose)
    return out


def simulate_sensors(
    world: WorldModel,
    traj: np.ndarray,
    noise: NoiseModel = NoiseModel(),
    sensor: SensorConfig = SensorConfig(),
) -> list[SequenceFrame]:
    rng = np.random.default_rng(sensor.seed)
    incs = perturb_odometry(true_increments(traj), traj[:, 0], noise)
    frames = []
    for i, row in enumerate(traj):
        pose = pose_of(row)
        frames.append(SequenceFrame(i, float(row[0]), incs[i], pose, ray_cloud(world, pose, sensor, rng)))
    return frames


def with_noise(frames: list[SequenceFrame], noise: NoiseModel) -> list[SequenceFrame]:
    """Re-derive odometry from ground-truth poses under a different noise model."""
    traj = np.array([[f.timestamp, *f.gt_pose.as_tuple()] for f in frames])
    incs = perturb_odometry(true_increments(traj), traj[:, 0], noise)
    return [replace(f, odom=inc) for f, inc in zip(frames, incs)]
