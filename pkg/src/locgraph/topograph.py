"""The graph of locations: nodes carry a scan and a descriptor, edges carry relative poses.

No node holds a global pose. Ground-truth observation poses may be attached
for evaluation, but they live in a separate ``debug_poses`` table that the
mapping code never reads.

Container layout (all integers little-endian)::

    b"LGRF"  u32 header_length  header (UTF-8 JSON)  scan blocks ...

Each node's header entry records the offset and length of its scan block,
counted from the first byte after the header.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import DataError
from .geometry import Scan2D, Transform2, invert
from .placerec import Descriptor

MAGIC = b"LGRF"
FORMAT_VERSION = 1


class GraphFormatError(DataError):
    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True, eq=False)
class LocationNode:
    id: int
    scan: Scan2D
    descriptor: Descriptor
    timestamp: float = 0.0


@dataclass(frozen=True)
class TopoEdge:
    from_id: int
    to_id: int
    rel: Transform2  # from_obs <- to_obs, i.e. from_from_to
    kind: str = "link"

    def __post_init__(self):
        if self.from_id == self.to_id:
            raise ValueError("self-loops are not allowed")

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.from_id, self.to_id), max(self.from_id, self.to_id))

    def oriented(self, start: int) -> Transform2:
        """Transform taking ``other`` observation-point coordinates into ``start``'s."""
        if start == self.from_id:
            return self.rel
        if start == self.to_id:
            return invert(self.rel)
        raise KeyError(f"node {start} is not an endpoint of {self.key}")


@dataclass
class TopoGraph:
    nodes: dict[int, LocationNode] = field(default_factory=dict)
    edges: dict[tuple[int, int], TopoEdge] = field(default_factory=dict)
    next_id: int = 0
    # evaluation-only ground truth, keyed by node id
    debug_poses: dict[int, Transform2] = field(default_factory=dict)

    def __post_init__(self):
        self._adj: dict[int, set[int]] = {i: set() for i in self.nodes}
        for a, b in self.edges:
            self._adj[a].add(b)
            self._adj[b].add(a)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def add_node(self, scan: Scan2D, descriptor: Descriptor, timestamp: float = 0.0,
                 debug_pose: Transform2 | None = None) -> int:
        node_id = self.next_id
        self.next_id += 1
        self.nodes[node_id] = LocationNode(node_id, scan, descriptor, float(timestamp))
        self._adj[node_id] = set()
        if debug_pose is not None:
            self.debug_poses[node_id] = debug_pose
        return node_id

    def add_edge(self, from_id: int, to_id: int, rel: Transform2, kind: str = "link") -> TopoEdge:
        """Insert or replace the edge between two nodes; ``rel`` is ``from_from_to``."""
        for n in (from_id, to_id):
            if n not in self.nodes:
                raise KeyError(f"unknown node {n}")
        edge = TopoEdge(from_id, to_id, rel, kind)
        self.edges[edge.key] = edge
        self._adj[from_id].add(to_id)
        self._adj[to_id].add(from_id)
        return edge

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def edge(self, a: int, b: int) -> TopoEdge:
        return self.edges[(min(a, b), max(a, b))]

    def relative(self, a: int, b: int) -> Transform2:
        """``a_from_b`` along the stored edge."""
        return self.edge(a, b).oriented(a)

    def neighbors(self, node_id: int) -> list[tuple[int, Transform2]]:
        if node_id not in self.nodes:
            raise KeyError(f"unknown node {node_id}")
        return [(n, self.relative(node_id, n)) for n in sorted(self._adj[node_id])]

    def degree(self, node_id: int) -> int:
        return len(self._adj[node_id])

    def components(self) -> list[list[int]]:
        """Connected components as sorted id lists, ordered by their smallest id."""
        seen: set[int] = set()
        out = []
        for start in sorted(self.nodes):
            if start in seen:
                continue
            comp = []
            queue = deque([start])
            seen.add(start)
            while queue:
                n = queue.popleft()
                comp.append(n)
                for m in self._adj[n]:
                    if m not in seen:
                        seen.add(m)
                        queue.append(m)
            out.append(sorted(comp))
        return out

    def snapshot(self) -> "TopoGraph":
        """Copy whose containers are independent; node payloads are immutable and shared."""
        g = TopoGraph(dict(self.nodes), dict(self.edges), self.next_id, dict(self.debug_poses))
        return g

    def same_as(self, other: "TopoGraph") -> bool:
        if sorted(self.nodes) != sorted(other.nodes) or self.next_id != other.next_id:
            return False
        for i, n in self.nodes.items():
            m = other.nodes[i]
            if n.timestamp != m.timestamp or n.scan != m.scan or n.descriptor != m.descriptor:
                return False
        return self.edges == other.edges and self.debug_poses == other.debug_poses

    # ---- persistence ----

    def to_bytes(self) -> bytes:
        blobs = []
        offset = 0
        nodes = []
        for i in sorted(self.nodes):
            n = self.nodes[i]
            blob = n.scan.to_bytes()
            nodes.append({
                "id": i,
                "timestamp": n.timestamp,
                "encoder": n.descriptor.encoder,
                "descriptor": [float(v) for v in n.descriptor.values],
                "scan": [offset, len(blob)],
            })
            blobs.append(blob)
            offset += len(blob)
        edges = [
            {"from": e.from_id, "to": e.to_id, "rel": list(e.rel.as_tuple()), "kind": e.kind}
            for _, e in sorted(self.edges.items())
        ]
        header = {
            "format": FORMAT_VERSION,
            "next_id": self.next_id,
            "nodes": nodes,
            "edges": edges,
            "debug": {"poses": {str(i): list(self.debug_poses[i].as_tuple()) for i in sorted(self.debug_poses)}},
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<I", len(head)) + head + b"".join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TopoGraph":
        if len(data) < 8 or data[:4] != MAGIC:
            raise GraphFormatError("bad magic", "header")
        (hlen,) = struct.unpack_from("<I", data, 4)
        if 8 + hlen > len(data):
            raise GraphFormatError(f"header length {hlen} exceeds file size {len(data)}", "header")
        try:
            header = json.loads(data[8:8 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise GraphFormatError(str(exc), "header") from exc
        if header.get("format") != FORMAT_VERSION:
            raise GraphFormatError(f"unsupported format {header.get('format')!r}", "header")
        body = memoryview(data)[8 + hlen:]
        g = cls(next_id=int(header.get("next_id", 0)))
        try:
            for entry in header["nodes"]:
                off, length = entry["scan"]
                if off < 0 or off + length > len(body):
                    raise GraphFormatError("scan block out of range", f"node {entry['id']}")
                scan = Scan2D.from_bytes(bytes(body[off:off + length]))
                desc = Descriptor(entry["descriptor"], entry["encoder"])
                i = int(entry["id"])
                g.nodes[i] = LocationNode(i, scan, desc, float(entry["timestamp"]))
                g._adj[i] = set()
            for entry in header["edges"]:
                a, b = int(entry["from"]), int(entry["to"])
                if a not in g.nodes or b not in g.nodes:
                    raise GraphFormatError("edge references a missing node", f"edge {a}-{b}")
                g.add_edge(a, b, Transform2(*entry["rel"]), entry.get("kind", "link"))
            for key, pose in header.get("debug", {}).get("poses", {}).items():
                g.debug_poses[int(key)] = Transform2(*pose)
        except GraphFormatError:
            raise
        except (KeyError, TypeError, ValueError, struct.error) as exc:
            raise GraphFormatError(f"{type(exc).__name__}: {exc}", "payload") from exc
        if g.nodes and g.next_id <= max(g.nodes):
            raise GraphFormatError("next_id would reuse an existing id", "header")
        return g

    def save(self, path) -> int:
        data = self.to_bytes()
        Path(path).write_bytes(data)
        return len(data)

    @classmethod
    def load(cls, path) -> "TopoGraph":
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise GraphFormatError(str(exc), str(path)) from exc
        return cls.from_bytes(data)

    # ---- exporters ----

    def to_networkx(self):
        import networkx as nx

        G = nx.Graph()
        for i in sorted(self.nodes):
            attrs = {"timestamp": self.nodes[i].timestamp, "occupied": self.nodes[i].scan.occupied_count}
            if i in self.debug_poses:
                p = self.debug_poses[i]
                attrs.update(debug_x=p.dx, debug_y=p.dy, debug_theta=p.dtheta)
            G.add_node(i, **attrs)
        for _, e in sorted(self.edges.items()):
            G.add_edge(e.from_id, e.to_id, source_id=e.from_id, target_id=e.to_id,
                       dx=e.rel.dx, dy=e.rel.dy, dtheta=e.rel.dtheta, kind=e.kind)
        return G

    def write_graphml(self, path) -> None:
        import networkx as nx

        nx.write_graphml(self.to_networkx(), str(path))

    def to_dot(self) -> str:
        lines = ["graph locations {", "  node [shape=circle];"]
        for i in sorted(self.nodes):
            lines.append(f'  n{i} [label="{i}"];')
        for _, e in sorted(self.edges.items()):
            label = escape(f"{e.rel.dx:.2f},{e.rel.dy:.2f},{e.rel.dtheta:.3f}")
            style = ', style=dashed' if e.kind == "loop" else ""
            lines.append(f'  n{e.from_id} -- n{e.to_id} [label="{label}"{style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


# functional aliases mirroring the operation names used elsewhere in the package

def add_node(g: TopoGraph, scan: Scan2D, descriptor: Descriptor, timestamp: float = 0.0,
             debug_pose: Transform2 | None = None) -> tuple[TopoGraph, int]:
    return g, g.add_node(scan, descriptor, timestamp, debug_pose)


def add_edge(g: TopoGraph, from_id: int, to_id: int, rel: Transform2, kind: str = "link") -> TopoGraph:
    g.add_edge(from_id, to_id, rel, kind)
    return g


def neighbors(g: TopoGraph, node_id: int) -> list[tuple[int, Transform2]]:
    return g.neighbors(node_id)


def serialize(g: TopoGraph, path) -> int:
    return g.save(path)


def deserialize(path) -> TopoGraph:
    return TopoGraph.load(path)
