"""Pairwise scan-matching benchmark: suite generation and precision/recall scoring.

A pair is correct when it is accepted and the estimated translation lies
within 0.5 m of the ground truth. Pairs without ground truth (disjoint scans)
can only be false accepts.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..geometry import PointCloud, Scan2D, Transform2, apply, compose, invert
from ..scanmatch import MatcherConfig, match_scans, project_cloud, scan_overlap
from ..scanmatch.projection import ProjectionConfig
from .sensors import SensorConfig, pose_of, ray_cloud
from .synth import SynthParams, synth_world

CORRECT_TRANSLATION = 0.5
PAIR_FIELDS = ["scan_a", "scan_b", "dx", "dy", "dtheta", "iou", "kind"]


@dataclass(frozen=True)
class BenchPair:
    scan_a: str
    scan_b: str
    gt: Transform2 | None  # a_from_b
    iou: float
    kind: str = ""


def read_pairs(path) -> tuple[list[BenchPair], int]:
    """Parse a pairs CSV; malformed rows are skipped and counted."""
    pairs, skipped = [], 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"scan_a", "scan_b", "iou"} - set(reader.fieldnames or [])
        if reader.fieldnames and missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                gt = None
                if row.get("dx") not in (None, "") and row.get("dy") not in (None, ""):
                    gt = Transform2(float(row["dx"]), float(row["dy"]), float(row.get("dtheta") or 0.0))
                    if not all(math.isfinite(v) for v in gt.as_tuple()):
                        raise ValueError("non-finite transform")
                iou = float(row["iou"])
                if not (0.0 <= iou <= 1.0) or not row["scan_a"] or not row["scan_b"]:
                    raise ValueError("bad iou or scan path")
                pairs.append(BenchPair(row["scan_a"], row["scan_b"], gt, iou, row.get("kind") or ""))
            except (TypeError, ValueError, KeyError):
                skipped += 1
    if skipped:
        warnings.warn(f"{path}: skipped {skipped} malformed row(s)")
    return pairs, skipped


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def benchmark_matching(pairs_file, cfg: MatcherConfig = MatcherConfig(), detector: str = "orb") -> dict:
    """Precision, recall at IoU 0.5 and 0.25, and mean runtime over a pairs CSV.

    Runtime covers feature extraction for both scans plus matching; scans are
    decoded before the clock starts.
    """
    pairs_file = Path(pairs_file)
    pairs, skipped = read_pairs(pairs_file)
    root = pairs_file.parent
    loaded: dict[str, Scan2D] = {}

    def scan(name):
        if name not in loaded:
            try:
                loaded[name] = Scan2D.load(root / name)
            except (OSError, ValueError) as exc:
                raise DataError(f"cannot read scan {name}: {exc}") from exc
        return loaded[name]

    rows = []
    for p in pairs:
        a, b = scan(p.scan_a), scan(p.scan_b)
        t0 = time.perf_counter()
        r = match_scans(a, b, None, cfg, detector)
        dt = time.perf_counter() - t0
        err = None
        if r.transform is not None and p.gt is not None:
            err = float(np.hypot(r.transform.dx - p.gt.dx, r.transform.dy - p.gt.dy))
        correct = bool(r.accepted and err is not None and err < CORRECT_TRANSLATION)
        rows.append({
            "scan_a": p.scan_a, "scan_b": p.scan_b, "kind": p.kind, "iou": p.iou,
            "accepted": r.accepted, "correct": correct, "error_m": err,
            "score": r.score, "inliers": r.inliers, "matches": r.matches, "runtime_s": dt,
        })
    return summarize(rows, skipped)


def summarize(rows: list[dict], skipped: int = 0) -> dict:
    if not rows:
        return {"n_pairs": 0, "skipped": skipped, "precision": None, "recall_iou_0.5": None,
                "recall_iou_0.25": None, "mean_runtime_s": None, "n_accepted": 0, "false_accepts": 0,
                "pairs": []}
    accepted = [r for r in rows if r["accepted"]]
    correct = [r for r in accepted if r["correct"]]
    hi = [r for r in rows if r["iou"] >= 0.5]
    mid = [r for r in rows if r["iou"] >= 0.25]
    return {
        "n_pairs": len(rows),
        "skipped": skipped,
        "precision": _ratio(len(correct), len(accepted)),
        "recall_iou_0.5": _ratio(sum(r["correct"] for r in hi), len(hi)),
        "recall_iou_0.25": _ratio(sum(r["correct"] for r in mid), len(mid)),
        "n_iou_0.5": len(hi),
        "n_iou_0.25": len(mid),
        "mean_runtime_s": float(np.mean([r["runtime_s"] for r in rows])),
        "n_accepted": len(accepted),
        "false_accepts": len(accepted) - len(correct),
        "pairs": rows,
    }


# ---- suite generation ----

def _perturbed_cloud(cloud: PointCloud, t: Transform2, rng, jitter: float) -> PointCloud:
    """Cloud as seen from a sensor displaced by ``t`` (``old_from_new``), with point jitter."""
    pts = cloud.points.copy()
    pts[:, :2] = apply(invert(t), pts[:, :2])
    if jitter > 0:
        pts[:, :2] += rng.normal(0.0, jitter, size=(len(pts), 2))
    return PointCloud(pts)


def generate_suite(out_dir, n_pairs: int = 500, seed: int = 0, tolerance: int = 2,
                   projection: ProjectionConfig = ProjectionConfig(),
                   sensor: SensorConfig = SensorConfig()) -> Path:
    """Write scans and ``pairs.csv`` with a 2 : 2 : 1 mix of perturbed, revisit and disjoint pairs.

    * perturbed: a scan against its own cloud re-projected after a random rigid
      motion (up to 3 m, any heading) with 2 cm point jitter;
    * revisit: two frames of one trajectory less than 4 m apart;
    * disjoint: scans from two different worlds, which share no structure.

    The listed IoU is the overlap under the true transform with the same cell
    tolerance the matcher uses for acceptance.
    """
    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    worlds = []
    for k, params in enumerate((SynthParams(n_rooms=4, area=200), SynthParams(n_rooms=6, area=300))):
        plan, traj = synth_world(seed * 10 + k + 1, params)
        worlds.append((plan, traj))

    names: dict[tuple[int, int], str] = {}
    scans: dict[str, Scan2D] = {}
    clouds: dict[tuple[int, int], PointCloud] = {}

    def frame_scan(w: int, i: int) -> tuple[str, Scan2D]:
        key = (w, i)
        if key not in names:
            plan, traj = worlds[w]
            clouds[key] = ray_cloud(plan.world, pose_of(traj[i]), sensor)
            name = f"scans/w{w}_f{i:04d}.sc2d"
            s = project_cloud(clouds[key], projection)
            s.save(out / name)
            names[key], scans[name] = name, s
        return names[key], scans[names[key]]

    n_perturbed = int(round(0.4 * n_pairs))
    n_revisit = int(round(0.4 * n_pairs))
    n_disjoint = n_pairs - n_perturbed - n_revisit
    rows = []

    for k in range(n_perturbed):
        w = int(rng.integers(len(worlds)))
        i = int(rng.integers(len(worlds[w][1])))
        name_a, a = frame_scan(w, i)
        r, phi = 3.0 * math.sqrt(rng.uniform()), rng.uniform(-math.pi, math.pi)
        t = Transform2(r * math.cos(phi), r * math.sin(phi), rng.uniform(-math.pi, math.pi))
        b = project_cloud(_perturbed_cloud(clouds[(w, i)], t, rng, 0.02), projection)
        name_b = f"scans/perturbed_{k:04d}.sc2d"
        b.save(out / name_b)
        rows.append([name_a, name_b, t.dx, t.dy, t.dtheta, scan_overlap(a, b, t, tolerance), "perturbed"])

    made = 0
    while made < n_revisit:
        w = int(rng.integers(len(worlds)))
        traj = worlds[w][1]
        i, j = (int(x) for x in rng.integers(len(traj), size=2))
        t = compose(invert(pose_of(traj[i])), pose_of(traj[j]))
        if i == j or t.norm >= 4.0:
            continue
        (name_a, a), (name_b, b) = frame_scan(w, i), frame_scan(w, j)
        rows.append([name_a, name_b, t.dx, t.dy, t.dtheta, scan_overlap(a, b, t, tolerance), "revisit"])
        made += 1

    for _ in range(n_disjoint):
        i = int(rng.integers(len(worlds[0][1])))
        j = int(rng.integers(len(worlds[1][1])))
        name_a, _ = frame_scan(0, i)
        name_b, _ = frame_scan(1, j)
        rows.append([name_a, name_b, "", "", "", 0.0, "disjoint"])

    with open(out / "pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PAIR_FIELDS)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return out / "pairs.csv"
