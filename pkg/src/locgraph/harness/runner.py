"""Frame-by-frame replay of a sequence through localisation and graph maintenance."""

from __future__ import annotations

import resource
import sys
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..errors import DataError
from ..geometry import Scan2D
from ..localizer import Localization, localize
from ..maintainer import LOOP_CLOSURE, Maintainer, StepInput, StepOutcome
from ..placerec import Descriptor, concat_descriptors, describe
from ..scanmatch import FeatureCache, project_cloud
from ..topograph import TopoGraph
from .config import EXTERNAL, RunConfig
from .sensors import SequenceFrame


@dataclass
class PerfStats:
    update_times: list[float] = field(default_factory=list)
    loop_closure_times: list[float] = field(default_factory=list)
    peak_rss_mb: float = 0.0
    map_size_bytes: int = 0

    def summary(self) -> dict:
        upd = np.array(self.update_times) if self.update_times else np.zeros(1)
        loc = np.array(self.loop_closure_times) if self.loop_closure_times else np.zeros(1)
        return {
            "frames": len(self.update_times),
            "update_time_mean_s": float(upd.mean()),
            "update_time_max_s": float(upd.max()),
            "loop_closure_calls": len(self.loop_closure_times),
            "loop_closure_time_mean_s": float(loc.mean()),
            "peak_rss_mb": self.peak_rss_mb,
            "map_size_mb": self.map_size_bytes / 1e6,
        }


@dataclass
class RunResult:
    graph: TopoGraph
    outcomes: list[StepOutcome]
    perf: PerfStats
    localizations: list[Localization] = field(default_factory=list)

    def step_log(self) -> str:
        return "".join(o.to_json() + "\n" for o in self.outcomes)

    def case_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for o in self.outcomes:
            counts[o.case] = counts.get(o.case, 0) + 1
        return counts


def _peak_rss_mb() -> float:
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # Linux reports kilobytes, macOS bytes
    return rss / (1024.0 * 1024.0) if sys.platform == "darwin" else rss / 1024.0


def frame_descriptor(frame: SequenceFrame, scan: Scan2D, encoder: str) -> Descriptor:
    parts = encoder.split("+")
    ext = None
    if parts[0] == EXTERNAL:
        if frame.descriptor is None:
            raise DataError(f"frame {frame.frame_id}: encoder {encoder!r} needs an external descriptor row")
        ext = Descriptor(frame.descriptor, EXTERNAL)
        if len(parts) == 1:
            return ext
    return concat_descriptors(ext, describe(scan, None, parts[-1]))


def run_mapping(frames: Iterable[SequenceFrame], cfg: RunConfig = RunConfig(),
                cache: FeatureCache | None = None) -> RunResult:
    mcfg = cfg.maintainer_config()
    lcfg = cfg.localizer_config()
    m = Maintainer(mcfg, cache)
    perf = PerfStats()
    localizations: list[Localization] = []
    last_loc: Localization | None = None

    for frame in frames:
        t0 = time.perf_counter()
        try:
            scan = frame.scan if frame.scan is not None else (
                project_cloud(frame.cloud, cfg.projection) if frame.cloud is not None else None)
            if scan is None:
                raise DataError("frame has neither a scan nor a cloud")
            desc = frame_descriptor(frame, scan, cfg.encoder)
        except (DataError, ValueError) as exc:
            raise DataError(f"frame {frame.frame_id}: {exc}") from exc

        def run_localizer(exclude, scan=scan, desc=desc, frame_id=frame.frame_id):
            t = time.perf_counter()
            records: list = []
            nodes = localize(scan, desc, m.graph, m.index, exclude, lcfg, m.cache, records)
            perf.loop_closure_times.append(time.perf_counter() - t)
            loc = Localization(frame_id, nodes, records)
            localizations.append(loc)
            return loc

        if cfg.localizer.mode == "eager":
            if m.state is not None and frame.frame_id % lcfg.stride == 0:
                last_loc = run_localizer(m.exclusion())
            loc_in = last_loc
        else:
            loc_in = run_localizer

        inp = StepInput(frame.frame_id, frame.odom, scan, desc, loc_in, None, frame.timestamp, frame.gt_pose)
        m.process(inp)
        perf.update_times.append(time.perf_counter() - t0)

    perf.map_size_bytes = len(m.graph.to_bytes())
    perf.peak_rss_mb = _peak_rss_mb()
    return RunResult(m.graph, m.outcomes, perf, localizations)


def loop_closure_edges(outcomes: Iterable[StepOutcome]) -> set[tuple[int, int]]:
    out = set()
    for o in outcomes:
        if o.case == LOOP_CLOSURE:
            for a, b, _, _ in o.edges_added:
                out.add((min(a, b), max(a, b)))
    return out
