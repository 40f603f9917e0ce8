"""Per-frame graph maintenance: stay, move along an edge, close a loop, or add a location.

The four cases are tried strictly in that order and exactly one fires per
frame. ``t_cur`` is ``v_cur_from_robot``; odometry increments are
``previous_robot_from_current_robot``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

from .errors import DataError
from .geometry import PointCloud, Scan2D, Transform2, compose, invert
from .localizer import Localization, LocalizedNode
from .placerec import Descriptor, PlaceIndex
from .scanmatch import FeatureCache, MatcherConfig, ProjectionConfig, match_scans, project_cloud, scan_overlap
from .topograph import LocationNode, TopoGraph

STAY, EDGE_TRANSITION, LOOP_CLOSURE, NEW_NODE = "stay", "edge_transition", "loop_closure", "new_node"
CASES = (STAY, EDGE_TRANSITION, LOOP_CLOSURE, NEW_NODE)


class MaintainerError(RuntimeError):
    """The robot state no longer refers to the graph; mapping cannot continue."""


@dataclass(frozen=True)
class MaintainerConfig:
    location_radius: float = 6.0
    stay_threshold: float = 0.2
    loop_threshold: float = 0.2
    # cells of slack when scoring overlap, as for match acceptance
    overlap_tolerance: int = 2
    max_step: float = 2.0
    edge_detector: str = "harris"
    # localisation results older than this many frames are ignored
    max_staleness: int = 1
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)

    def __post_init__(self):
        if self.location_radius <= 0 or self.max_step <= 0:
            raise ValueError("location_radius and max_step must be positive")
        for name in ("stay_threshold", "loop_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.max_staleness < 0:
            raise ValueError("max_staleness must be >= 0")


@dataclass(frozen=True)
class RobotState:
    v_cur: int
    t_cur: Transform2  # v_cur observation point <- robot


# a provider receives the exclusion set and returns the verified candidates
LocProvider = Callable[[set], "Localization | list[LocalizedNode]"]


@dataclass(frozen=True, eq=False)
class StepInput:
    frame_id: int
    odom: Transform2
    scan: Scan2D | None = None
    descriptor: Descriptor | None = None
    loc_results: "Localization | list[LocalizedNode] | LocProvider | None" = None
    cloud: PointCloud | None = None
    timestamp: float = 0.0
    # stored with new nodes for evaluation only; never read by the mapper
    debug_pose: Transform2 | None = None


@dataclass(frozen=True)
class StepOutcome:
    frame_id: int
    case: str
    state: RobotState
    edges_added: tuple = ()   # (from, to, Transform2, kind)
    nodes_added: tuple = ()
    loc_frame: int | None = None
    localized: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "frame": self.frame_id,
            "case": self.case,
            "v_cur": self.state.v_cur,
            "t_cur": list(self.state.t_cur.as_tuple()),
            "edges_added": [[a, b, list(t.as_tuple()), k] for a, b, t, k in self.edges_added],
            "nodes_added": list(self.nodes_added),
            "loc_frame": self.loc_frame,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "StepOutcome":
        try:
            rec = json.loads(line)
            edges = tuple((a, b, Transform2(*t), k) for a, b, t, k in rec["edges_added"])
            state = RobotState(int(rec["v_cur"]), Transform2(*rec["t_cur"]))
            if rec["case"] not in CASES:
                raise ValueError(f"unknown case {rec['case']!r}")
            return cls(int(rec["frame"]), rec["case"], state, edges, tuple(rec["nodes_added"]), rec.get("loc_frame"))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad step log line: {exc}") from exc


def read_step_log(path) -> list[StepOutcome]:
    with open(path) as fh:
        return [StepOutcome.from_json(line) for line in fh if line.strip()]


def inside_check(t_cur: Transform2, scan: Scan2D, node: LocationNode, cfg: MaintainerConfig = MaintainerConfig(),
                 threshold: float | None = None) -> bool:
    """Robot within ``location_radius`` of the node and its scan overlapping the node's enough."""
    thr = cfg.stay_threshold if threshold is None else threshold
    if t_cur.norm > cfg.location_radius:
        return False
    return scan_overlap(node.scan, scan, t_cur, cfg.overlap_tolerance) >= thr


def _resolve_localization(inp: StepInput, exclude: set, cfg: MaintainerConfig):
    """Candidates re-expressed against the current robot pose, plus the frame they came from."""
    loc = inp.loc_results
    if callable(loc):
        loc = loc(exclude)
    if loc is None:
        return [], None
    if isinstance(loc, Localization):
        age = inp.frame_id - loc.frame_id
        if age < 0 or age > cfg.max_staleness:
            return [], loc.frame_id
        nodes = loc.nodes
        if age == 1:
            # results describe the previous robot pose; carry them forward by this frame's odometry
            nodes = [LocalizedNode(n.node_id, compose(n.t_loc, inp.odom), n.score, n.inliers) for n in nodes]
        elif age > 1:
            raise ValueError("max_staleness above 1 is not supported")
        return list(nodes), loc.frame_id
    return list(loc), inp.frame_id


def _scan_of(inp: StepInput, cfg: MaintainerConfig) -> Scan2D:
    if inp.scan is not None:
        return inp.scan
    if inp.cloud is None:
        raise DataError(f"frame {inp.frame_id} has neither a scan nor a cloud")
    return project_cloud(inp.cloud, cfg.projection)


def step(
    g: TopoGraph,
    s: RobotState | None,
    inp: StepInput,
    cfg: MaintainerConfig = MaintainerConfig(),
    index: PlaceIndex | None = None,
    cache: FeatureCache | None = None,
) -> tuple[TopoGraph, RobotState, StepOutcome]:
    """Advance the map by one frame. ``g`` and ``index`` are updated in place.

    With ``s`` set to ``None`` the first location is created from this frame.
    """
    scan = _scan_of(inp, cfg)
    if inp.descriptor is None:
        raise DataError(f"frame {inp.frame_id} has no descriptor")
    if not all(map(_finite, inp.odom.as_tuple())):
        raise DataError(f"frame {inp.frame_id}: non-finite odometry")
    if inp.odom.norm > cfg.max_step:
        raise DataError(f"frame {inp.frame_id}: odometry step {inp.odom.norm:.2f} m exceeds max_step")

    if s is None:
        node = _add_location(g, index, scan, inp)
        state = RobotState(node, Transform2.identity())
        return g, state, StepOutcome(inp.frame_id, NEW_NODE, state, (), (node,))

    if s.v_cur not in g.nodes:
        raise MaintainerError(f"current location {s.v_cur} is not in the graph")
    prev = s.v_cur
    t_pred = compose(s.t_cur, inp.odom)

    # (1) still inside the current location
    if inside_check(t_pred, scan, g.nodes[prev], cfg):
        state = RobotState(prev, t_pred)
        return g, state, StepOutcome(inp.frame_id, STAY, state)

    # (2) moved into an adjacent location; the edge gives the initial guess
    neighbors = g.neighbors(prev)
    best = None
    for n, prev_from_n in neighbors:
        guess = compose(invert(prev_from_n), t_pred)
        r = match_scans(g.nodes[n].scan, scan, guess, cfg.matcher, cfg.edge_detector, cache)
        if not r.accepted or r.transform.norm > cfg.location_radius:
            continue
        key = (r.transform.norm, n)
        if best is None or key < best[0]:
            best = (key, n, r.transform)
    if best is not None:
        state = RobotState(best[1], best[2])
        return g, state, StepOutcome(inp.frame_id, EDGE_TRANSITION, state)

    # (3) recognised a mapped location that is not adjacent
    exclude = {prev, *(n for n, _ in neighbors)}
    v_loc, loc_frame = _resolve_localization(inp, exclude, cfg)
    v_loc = [c for c in v_loc if c.node_id in g.nodes and c.node_id not in exclude]
    v_loc.sort(key=lambda c: (-c.score, c.node_id))
    for c in v_loc:
        if inside_check(c.t_loc, scan, g.nodes[c.node_id], cfg, cfg.loop_threshold):
            rel = compose(t_pred, invert(c.t_loc))
            g.add_edge(prev, c.node_id, rel, "loop")
            state = RobotState(c.node_id, c.t_loc)
            return g, state, StepOutcome(inp.frame_id, LOOP_CLOSURE, state,
                                         ((prev, c.node_id, rel, "loop"),), (), loc_frame, True)

    # (4) new location at the current pose
    node = _add_location(g, index, scan, inp)
    added = [(prev, node, t_pred, "odom")]
    g.add_edge(prev, node, t_pred, "odom")
    for c in v_loc:
        g.add_edge(c.node_id, node, c.t_loc, "loc")
        added.append((c.node_id, node, c.t_loc, "loc"))
    state = RobotState(node, Transform2.identity())
    return g, state, StepOutcome(inp.frame_id, NEW_NODE, state, tuple(added), (node,), loc_frame, bool(v_loc))


def _finite(x: float) -> bool:
    return x == x and abs(x) != float("inf")


def _add_location(g: TopoGraph, index: PlaceIndex | None, scan: Scan2D, inp: StepInput) -> int:
    node = g.add_node(scan, inp.descriptor, inp.timestamp, inp.debug_pose)
    if index is not None:
        index.insert(node, inp.descriptor)
    return node


class Maintainer:
    """Owns one graph, its place index and the robot state; feed it frames in order."""

    def __init__(self, cfg: MaintainerConfig = MaintainerConfig(), cache: FeatureCache | None = None):
        self.cfg = cfg
        self.graph = TopoGraph()
        self.index = PlaceIndex()
        self.state: RobotState | None = None
        self.cache = cache if cache is not None else FeatureCache()
        self.outcomes: list[StepOutcome] = []
        self._last_frame: int | None = None

    def exclusion(self) -> set:
        if self.state is None:
            return set()
        return {self.state.v_cur, *(n for n, _ in self.graph.neighbors(self.state.v_cur))}

    def process(self, inp: StepInput) -> StepOutcome:
        if self._last_frame is not None and inp.frame_id <= self._last_frame:
            raise DataError(f"frame {inp.frame_id} arrived after frame {self._last_frame}")
        _, self.state, outcome = step(self.graph, self.state, inp, self.cfg, self.index, self.cache)
        self._last_frame = inp.frame_id
        self.outcomes.append(outcome)
        return outcome

    def step_log(self) -> str:
        return "".join(o.to_json() + "\n" for o in self.outcomes)
