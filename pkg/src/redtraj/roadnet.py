"""Road network: directed segment graph, static segment features, virtual START node.

Graph file layout (UTF-8, comma separated, ``#`` starts a comment)::

    [nodes]
    id,length_m,max_speed_kmh,avg_tt_s,direction_deg,seg_type[,x,y]
    0,120.5,50,14.2,90,residential,60.2,0.0
    ...
    [edges]
    src,dst
    0,1

The column-name row after each section tag is optional. ``x,y`` are the
planar coordinates (meters) of the segment midpoint and may be omitted.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import IntegrityError, ParseError, ValidationError

SEG_TYPES = (
    "living_street",
    "motorway",
    "primary",
    "residential",
    "secondary",
    "tertiary",
    "trunk",
    "unclassified",
)
SEG_TYPE_INDEX = {name: i for i, name in enumerate(SEG_TYPES)}

# min-max normalised continuous attributes, in feature-vector order
CONTINUOUS_FIELDS = ("max_speed", "avg_travel_time", "direction", "out_degree", "in_degree", "length")
FEATURE_DIM = len(CONTINUOUS_FIELDS) + len(SEG_TYPES)


@dataclass(frozen=True)
class SegmentFeatures:
    max_speed: float
    avg_travel_time: float
    direction: float
    out_degree: int
    in_degree: int
    length: float
    seg_type: str


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class RoadNetwork:
    """Immutable road network over dense segment ids ``0..n-1``.

    ``virtual_start`` is the extra node id ``n`` with a directed edge to every
    real segment. Those virtual edges are kept out of ``edges`` so that
    real-hop queries never see them.
    """

    def __init__(self, length, max_speed, avg_travel_time, direction, seg_type, edges, coords=None):
        n = len(length)
        self.n_segments = n
        self.length = _frozen(np.asarray(length, dtype=np.float64))
        self.max_speed = _frozen(np.asarray(max_speed, dtype=np.float64))
        self.avg_travel_time = _frozen(np.asarray(avg_travel_time, dtype=np.float64))
        self.direction = _frozen(np.asarray(direction, dtype=np.float64))
        self.seg_type = _frozen(np.asarray(seg_type, dtype=np.int64))
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self._validate(edges)
        edges = np.unique(edges, axis=0) if len(edges) else edges
        self.edges = _frozen(edges)
        self.out_degree = _frozen(np.bincount(edges[:, 0], minlength=n).astype(np.int64))
        self.in_degree = _frozen(np.bincount(edges[:, 1], minlength=n).astype(np.int64))
        self.coords = None if coords is None else _frozen(np.asarray(coords, dtype=np.float64).reshape(n, 2))
        self._succ = [[] for _ in range(n)]
        for s, d in edges:
            self._succ[s].append(int(d))
        self._features = self._build_features()

    def _validate(self, edges):
        n = self.n_segments
        if n == 0:
            raise ValidationError("road network has no segments")
        for name in ("length", "max_speed", "avg_travel_time", "direction"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"non-finite {name}")
        if np.any(self.length <= 0):
            bad = int(np.flatnonzero(self.length <= 0)[0])
            raise ValidationError(f"segment {bad} has non-positive length")
        if np.any(self.max_speed < 0) or np.any(self.avg_travel_time < 0):
            raise ValidationError("speed and travel time must be non-negative")
        if np.any((self.direction < 0) | (self.direction >= 360)):
            raise ValidationError("direction must lie in [0, 360)")
        if np.any((self.seg_type < 0) | (self.seg_type >= len(SEG_TYPES))):
            raise ValidationError("unknown segment type code")
        if len(edges):
            if edges.min() < 0 or edges.max() >= n:
                bad = edges[(edges < 0).any(1) | (edges >= n).any(1)][0]
                raise IntegrityError(f"edge ({bad[0]}, {bad[1]}) references a segment outside 0..{n - 1}")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValidationError("self-loop edges are not allowed")

    @property
    def virtual_start(self):
        return self.n_segments

    @property
    def has_coordinates(self):
        return self.coords is not None

    def segment(self, i):
        self._check_id(i)
        return SegmentFeatures(
            max_speed=float(self.max_speed[i]),
            avg_travel_time=float(self.avg_travel_time[i]),
            direction=float(self.direction[i]),
            out_degree=int(self.out_degree[i]),
            in_degree=int(self.in_degree[i]),
            length=float(self.length[i]),
            seg_type=SEG_TYPES[self.seg_type[i]],
        )

    def successors(self, i):
        self._check_id(i)
        return list(self._succ[i])

    def virtual_edges(self):
        """Edges ``(virtual_start, i)`` for every real segment ``i``."""
        ids = np.arange(self.n_segments)
        return np.stack([np.full_like(ids, self.n_segments), ids], axis=1)

    def _check_id(self, i):
        if not 0 <= i < self.n_segments:
            raise IndexError(f"segment id {i} out of range 0..{self.n_segments - 1}")

    def _build_features(self):
        n = self.n_segments
        cont = np.stack(
            [self.max_speed, self.avg_travel_time, self.direction,
             self.out_degree.astype(np.float64), self.in_degree.astype(np.float64), self.length],
            axis=1,
        )
        lo, hi = cont.min(0), cont.max(0)
        span = hi - lo
        norm = np.where(span > 0, (cont - lo) / np.where(span > 0, span, 1.0), 0.0)
        feats = np.zeros((n + 1, FEATURE_DIM))
        feats[:n, : len(CONTINUOUS_FIELDS)] = norm
        feats[np.arange(n), len(CONTINUOUS_FIELDS) + self.seg_type] = 1.0
        return _frozen(feats)

    def feature_matrix(self):
        """Initial features for all segments plus the all-zero virtual START row."""
        return self._features

    def __eq__(self, other):
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        same_coords = (self.coords is None and other.coords is None) or (
            self.coords is not None and other.coords is not None and np.array_equal(self.coords, other.coords)
        )
        return (
            self.n_segments == other.n_segments
            and same_coords
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("length", "max_speed", "avg_travel_time", "direction", "seg_type", "edges")
            )
        )

    __hash__ = None


def initial_feature_vector(net, seg_id):
    """Input features of one node; ``seg_id == net.virtual_start`` is allowed."""
    if not 0 <= seg_id <= net.n_segments:
        raise IndexError(f"segment id {seg_id} out of range")
    return net.feature_matrix()[seg_id].copy()


def neighbors(net, seg_id, hops):
    """Segments reachable from ``seg_id`` in 1..hops real out-edges."""
    net._check_id(seg_id)
    if hops < 1:
        raise ValidationError("hops must be at least 1")
    found = set()
    frontier = deque([(seg_id, 0)])
    visited = {seg_id: 0}
    while frontier:
        node, d = frontier.popleft()
        if d == hops:
            continue
        for nxt in net._succ[node]:
            found.add(nxt)
            if nxt not in visited:
                visited[nxt] = d + 1
                frontier.append((nxt, d + 1))
    return found


def mean_segment_length(net):
    return float(net.length.mean())


def _parse_float(tok, lineno, what):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None


def _parse_int(tok, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None


def parse_network(text):
    section = None
    nodes = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("nodes", "edges"):
                raise ParseError(f"unknown section [{section}]", lineno)
            continue
        cols = [c.strip() for c in line.split(",")]
        if section is None:
            raise ParseError("row outside of a [nodes] or [edges] section", lineno)
        if section == "nodes":
            if cols[0] == "id":
                continue
            if len(cols) not in (6, 8):
                raise ParseError(f"node row needs 6 or 8 columns, got {len(cols)}", lineno)
            sid = _parse_int(cols[0], lineno, "segment id")
            if sid in nodes:
                raise ParseError(f"duplicate segment id {sid}", lineno)
            if cols[5] not in SEG_TYPE_INDEX:
                raise ParseError(f"unknown seg_type {cols[5]!r}", lineno)
            row = [
                _parse_float(cols[1], lineno, "length"),
                _parse_float(cols[2], lineno, "max speed"),
                _parse_float(cols[3], lineno, "travel time"),
                _parse_float(cols[4], lineno, "direction"),
                SEG_TYPE_INDEX[cols[5]],
            ]
            xy = None
            if len(cols) == 8:
                xy = (_parse_float(cols[6], lineno, "x"), _parse_float(cols[7], lineno, "y"))
            nodes[sid] = (row, xy, lineno)
        else:
            if cols[0] == "src":
                continue
            if len(cols) != 2:
                raise ParseError(f"edge row needs 2 columns, got {len(cols)}", lineno)
            edges.append((_parse_int(cols[0], lineno, "src"), _parse_int(cols[1], lineno, "dst")))
    n = len(nodes)
    if n == 0:
        raise ValidationError("graph file declares no segments")
    if sorted(nodes) != list(range(n)):
        raise IntegrityError("segment ids must be dense 0..n-1")
    rows = [nodes[i][0] for i in range(n)]
    xys = [nodes[i][1] for i in range(n)]
    if any(xy is None for xy in xys) and any(xy is not None for xy in xys):
        raise ValidationError("either all or no node rows may carry coordinates")
    for i in range(n):
        if rows[i][0] <= 0:
            raise ValidationError(f"segment {i} has non-positive length (line {nodes[i][2]})")
    arr = np.array(rows, dtype=np.float64)
    coords = None if xys[0] is None else np.array(xys, dtype=np.float64)
    return RoadNetwork(
        length=arr[:, 0],
        max_speed=arr[:, 1],
        avg_travel_time=arr[:, 2],
        direction=arr[:, 3],
        seg_type=arr[:, 4].astype(np.int64),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        coords=coords,
    )


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def format_network(net):
    out = ["[nodes]"]
    if net.has_coordinates:
        out.append("id,length_m,max_speed_kmh,avg_tt_s,direction_deg,seg_type,x,y")
    else:
        out.append("id,length_m,max_speed_kmh,avg_tt_s,direction_deg,seg_type")
    for i in range(net.n_segments):
        cells = [str(i)] + [repr(float(v)) for v in (net.length[i], net.max_speed[i], net.avg_travel_time[i], net.direction[i])]
        cells.append(SEG_TYPES[net.seg_type[i]])
        if net.has_coordinates:
            cells += [repr(float(net.coords[i, 0])), repr(float(net.coords[i, 1]))]
        out.append(",".join(cells))
    out.append("[edges]")
    out.append("src,dst")
    out.extend(f"{s},{d}" for s, d in net.edges)
    return "\n".join(out) + "\n"


def save_network(net, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_network(net))
