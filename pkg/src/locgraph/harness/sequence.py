"""On-disk sequences: one directory per run.

    frames.jsonl        one JSON object per frame (id, timestamp, odometry, optional pose)
    clouds/NNNN.bin     float32 little-endian x, y, z triples
    scans/NNNN.sc2d     optional precomputed scans, used instead of a cloud
    descriptors.csv     optional external descriptors, "frame_id, v_0, ..."
    world.pgm/.yaml     optional ground-truth world
    trajectory.csv      optional ground-truth trajectory "t,x,y,theta"
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np

from ..errors import DataError
from ..evaluation.world import WorldModel
from ..geometry import PointCloud, Scan2D, Transform2
from ..placerec import load_descriptor_csv, write_descriptor_csv
from .sensors import SequenceFrame


def write_sequence(root, frames: list[SequenceFrame], world: WorldModel | None = None,
                   trajectory: np.ndarray | None = None) -> Path:
    root = Path(root)
    (root / "clouds").mkdir(parents=True, exist_ok=True)
    descriptors = {}
    with open(root / "frames.jsonl", "w") as fh:
        for f in frames:
            rec = {
                "frame_id": f.frame_id,
                "timestamp": f.timestamp,
                "odom": list(f.odom.as_tuple()),
                "gt_pose": list(f.gt_pose.as_tuple()) if f.gt_pose is not None else None,
                "cloud": None,
                "scan": None,
            }
            if f.cloud is not None:
                rel = f"clouds/{f.frame_id:04d}.bin"
                (root / rel).write_bytes(f.cloud.to_bytes())
                rec["cloud"] = rel
            if f.scan is not None:
                (root / "scans").mkdir(exist_ok=True)
                rel = f"scans/{f.frame_id:04d}.sc2d"
                (root / rel).write_bytes(f.scan.to_bytes())
                rec["scan"] = rel
            if f.descriptor is not None:
                descriptors[f.frame_id] = np.asarray(f.descriptor, dtype=float)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if descriptors:
        write_descriptor_csv(root / "descriptors.csv", descriptors)
    if world is not None:
        world.save(root / "world.pgm")
    if trajectory is not None:
        np.savetxt(root / "trajectory.csv", np.asarray(trajectory), delimiter=",",
                   header="t,x,y,theta", comments="", fmt="%.17g")
    return root


def iter_sequence(root) -> Iterator[SequenceFrame]:
    """Stream frames in id order, loading each cloud or scan only when its frame is reached."""
    root = Path(root)
    path = root / "frames.jsonl"
    if not path.exists():
        raise DataError(f"{path} not found")
    descriptors = load_descriptor_csv(root / "descriptors.csv") if (root / "descriptors.csv").exists() else {}
    last = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            frame_id = None
            try:
                rec = json.loads(line)
                frame_id = int(rec["frame_id"])
                if last is not None and frame_id <= last:
                    raise DataError(f"frame ids must increase (got {frame_id} after {last})")
                odom = Transform2(*rec["odom"])
                if not np.all(np.isfinite(odom.as_tuple())):
                    raise DataError("non-finite odometry")
                gt = Transform2(*rec["gt_pose"]) if rec.get("gt_pose") is not None else None
                cloud = PointCloud.from_bytes((root / rec["cloud"]).read_bytes()) if rec.get("cloud") else None
                scan = Scan2D.from_bytes((root / rec["scan"]).read_bytes()) if rec.get("scan") else None
            except DataError as exc:
                raise DataError(f"frame {frame_id if frame_id is not None else '?'} (line {lineno}): {exc}") from exc
            except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(
                    f"frame {frame_id if frame_id is not None else '?'} (line {lineno}): "
                    f"{type(exc).__name__}: {exc}"
                ) from exc
            last = frame_id
            yield SequenceFrame(frame_id, float(rec["timestamp"]), odom, gt, cloud, scan, descriptors.get(frame_id))


def read_sequence(root) -> list[SequenceFrame]:
    return list(iter_sequence(root))


def read_world(root) -> WorldModel | None:
    path = Path(root) / "world.yaml"
    return WorldModel.load(path) if path.exists() else None


def read_trajectory(root) -> np.ndarray | None:
    path = Path(root) / "trajectory.csv"
    if not path.exists():
        return None
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
