"""Path trajectories: loading, validation, dataset splits and a synthetic grid generator.

Trajectory file: one JSON object per line::

    {"user": 17, "steps": [[segment_id, timestamp_s, gps_points], ...]}
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .roadnet import SEG_TYPES, SEG_TYPE_INDEX, RoadNetwork

log = logging.getLogger(__name__)

MIN_STEPS = 6
MAX_STEPS = 256


@dataclass(frozen=True)
class PathStep:
    segment: int
    timestamp: int
    gps_point_count: int


class PathTrajectory:
    """Time-ordered segment sequence of one user, stored column-wise."""

    __slots__ = ("user", "segments", "timestamps", "gps_counts")

    def __init__(self, user, segments, timestamps, gps_counts=None):
        self.user = int(user)
        self.segments = np.asarray(segments, dtype=np.int64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        if gps_counts is None:
            gps_counts = np.zeros(len(self.segments), dtype=np.int64)
        self.gps_counts = np.asarray(gps_counts, dtype=np.int64)
        if not (len(self.segments) == len(self.timestamps) == len(self.gps_counts)):
            raise ValidationError("segments, timestamps and gps counts differ in length")

    def __len__(self):
        return len(self.segments)

    @property
    def steps(self):
        return [PathStep(int(s), int(t), int(g)) for s, t, g in zip(self.segments, self.timestamps, self.gps_counts)]

    @classmethod
    def from_steps(cls, user, steps):
        steps = list(steps)
        return cls(
            user,
            [s.segment for s in steps],
            [s.timestamp for s in steps],
            [s.gps_point_count for s in steps],
        )

    def subset(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return PathTrajectory(self.user, self.segments[positions], self.timestamps[positions], self.gps_counts[positions])

    def duration(self):
        return int(self.timestamps[-1] - self.timestamps[0])

    def __eq__(self, other):
        if not isinstance(other, PathTrajectory):
            return NotImplemented
        return (
            self.user == other.user
            and np.array_equal(self.segments, other.segments)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.gps_counts, other.gps_counts)
        )

    __hash__ = None

    def __repr__(self):
        return f"PathTrajectory(user={self.user}, len={len(self)})"


def validate_trajectory(traj, net, check_length=True):
    """Raise ValidationError if ``traj`` breaks a PathTrajectory invariant."""
    n = len(traj)
    if check_length and not MIN_STEPS <= n <= MAX_STEPS:
        raise ValidationError(f"trajectory has {n} steps, expected {MIN_STEPS}..{MAX_STEPS}")
    if n == 0:
        raise ValidationError("empty trajectory")
    if traj.segments.min() < 0 or traj.segments.max() >= net.n_segments:
        raise ValidationError("trajectory references an unknown segment")
    if np.any(np.diff(traj.timestamps) < 0):
        raise ValidationError("timestamps decrease")
    if np.any(traj.gps_counts < 0):
        raise ValidationError("negative gps point count")
    if traj.user < 0:
        raise ValidationError("negative user id")


@dataclass
class LoadReport:
    loaded: int = 0
    too_short: int = 0
    truncated: int = 0
    unknown_segment: int = 0
    decreasing_time: int = 0
    malformed: int = 0
    user_ids: list = field(default_factory=list)

    @property
    def skipped(self):
        return self.too_short + self.unknown_segment + self.decreasing_time + self.malformed


def _parse_record(line):
    rec = json.loads(line)
    if not isinstance(rec, dict) or "user" not in rec or "steps" not in rec:
        raise ValueError("record needs 'user' and 'steps'")
    user = rec["user"]
    if isinstance(user, bool) or not isinstance(user, (int, str)):
        raise ValueError("user must be an integer or string")
    steps = rec["steps"]
    if not isinstance(steps, list):
        raise ValueError("steps must be a list")
    seg, ts, gps = [], [], []
    for st in steps:
        if not isinstance(st, list) or len(st) != 3:
            raise ValueError("each step is [segment, timestamp, gps_points]")
        for v in st:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValueError("step fields must be integers")
        if st[2] < 0 or st[1] < 0:
            raise ValueError("negative timestamp or gps count")
        seg.append(st[0])
        ts.append(st[1])
        gps.append(st[2])
    return user, seg, ts, gps


def parse_trajectories(lines, net, user_ids=None):
    """Parse trajectory records, filtering per the dataset rules.

    ``user_ids`` is an existing raw-id vocabulary (list) to extend; raw user
    ids are re-indexed densely in order of first appearance.
    """
    report = LoadReport(user_ids=list(user_ids or []))
    index = {u: i for i, u in enumerate(report.user_ids)}
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw_user, seg, ts, gps = _parse_record(line)
        except (ValueError, TypeError) as exc:
            report.malformed += 1
            log.warning("line %d: malformed record (%s)", lineno, exc)
            continue
        if any(s < 0 or s >= net.n_segments for s in seg):
            report.unknown_segment += 1
            continue
        if any(b < a for a, b in zip(ts, ts[1:])):
            report.decreasing_time += 1
            continue
        if len(seg) > MAX_STEPS:
            seg, ts, gps = seg[:MAX_STEPS], ts[:MAX_STEPS], gps[:MAX_STEPS]
            report.truncated += 1
        if len(seg) < MIN_STEPS:
            report.too_short += 1
            continue
        if raw_user not in index:
            index[raw_user] = len(report.user_ids)
            report.user_ids.append(raw_user)
        out.append(PathTrajectory(index[raw_user], seg, ts, gps))
    report.loaded = len(out)
    if report.skipped:
        log.info("skipped %d of %d records", report.skipped, report.skipped + report.loaded)
    return out, report


def load_trajectories(path, net, user_ids=None):
    with open(path, encoding="utf-8") as fh:
        return parse_trajectories(fh, net, user_ids)


def format_trajectory(traj, raw_user=None):
    user = traj.user if raw_user is None else raw_user
    steps = [[int(s), int(t), int(g)] for s, t, g in zip(traj.segments, traj.timestamps, traj.gps_counts)]
    return json.dumps({"user": user, "steps": steps}, separators=(",", ":"))


def save_trajectories(trajs, path, user_ids=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in trajs:
            fh.write(format_trajectory(t, None if user_ids is None else user_ids[t.user]) + "\n")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    validation: tuple
    test: tuple
    ratios: tuple

    def sizes(self):
        return len(self.train), len(self.validation), len(self.test)


def split_sizes(n, ratios):
    """Floor each share, then hand the remainder to the largest fractional
    parts, ties going left to right."""
    exact = [n * r for r in ratios]
    sizes = [int(math.floor(x + 1e-9)) for x in exact]
    frac = [x - s for x, s in zip(exact, sizes)]
    order = sorted(range(len(sizes)), key=lambda i: (-round(frac[i], 9), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(n, ratios=(0.6, 0.2, 0.2), seed=0):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValidationError("need exactly three ratios")
    if any(r < 0 for r in ratios):
        raise ValidationError(f"negative split ratio in {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"split ratios sum to {sum(ratios)}, expected 1")
    if n < 0:
        raise ValidationError("negative dataset size")
    perm = np.random.default_rng(seed).permutation(n)
    a, b, _ = split_sizes(n, ratios)
    return DatasetSplit(
        train=tuple(int(i) for i in perm[:a]),
        validation=tuple(int(i) for i in perm[a : a + b]),
        test=tuple(int(i) for i in perm[a + b :]),
        ratios=ratios,
    )


# ---------------------------------------------------------------- generator

SAMPLING_INTERVAL_S = 15.0
SPEED_BY_TYPE = {
    "living_street": 20.0,
    "motorway": 100.0,
    "primary": 60.0,
    "residential": 30.0,
    "secondary": 50.0,
    "tertiary": 40.0,
    "trunk": 80.0,
    "unclassified": 30.0,
}
# street-line type frequencies, indexed like SEG_TYPES
_TYPE_WEIGHTS = np.array([0.08, 0.04, 0.12, 0.30, 0.14, 0.16, 0.06, 0.10])
_BASE_EPOCH = 1435708800  # 2015-07-01T00:00:00Z
ZERO_GPS_PROB = 0.2


def expected_gps_points(travel_time_s, interval_s=SAMPLING_INTERVAL_S):
    return travel_time_s / interval_s


def _grid_network(rows, cols, rng):
    xs = np.concatenate([[0.0], np.cumsum(rng.uniform(40.0, 250.0, cols - 1))])
    ys = np.concatenate([[0.0], np.cumsum(rng.uniform(40.0, 250.0, rows - 1))])
    row_type = rng.choice(len(SEG_TYPES), size=rows, p=_TYPE_WEIGHTS)
    col_type = rng.choice(len(SEG_TYPES), size=cols, p=_TYPE_WEIGHTS)

    def node(r, c):
        return r * cols + c

    pos = {node(r, c): (xs[c], ys[r]) for r in range(rows) for c in range(cols)}
    segs = []  # (from_node, to_node, type)
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                segs.append((node(r, c), node(r, c + 1), row_type[r]))
                segs.append((node(r, c + 1), node(r, c), row_type[r]))
            if r + 1 < rows:
                segs.append((node(r, c), node(r + 1, c), col_type[c]))
                segs.append((node(r + 1, c), node(r, c), col_type[c]))
    n = len(segs)
    types = np.array([t for _, _, t in segs], dtype=np.int64)
    override = rng.random(n) < 0.1
    types[override] = rng.integers(0, len(SEG_TYPES), override.sum())
    length = np.empty(n)
    direction = np.empty(n)
    coords = np.empty((n, 2))
    for i, (a, b, _) in enumerate(segs):
        (x0, y0), (x1, y1) = pos[a], pos[b]
        dx, dy = x1 - x0, y1 - y0
        length[i] = np.clip(math.hypot(dx, dy) * rng.uniform(1.0, 1.2), 20.0, 300.0)
        direction[i] = math.degrees(math.atan2(dx, dy)) % 360.0
        coords[i] = ((x0 + x1) / 2, (y0 + y1) / 2)
    speed = np.array([SPEED_BY_TYPE[SEG_TYPES[t]] for t in types])
    avg_tt = length / (speed / 3.6 * 0.7)
    out_of = {}
    for i, (a, _, _) in enumerate(segs):
        out_of.setdefault(a, []).append(i)
    edges = [(i, j) for i, (a, b, _) in enumerate(segs) for j in out_of[b] if segs[j][1] != a]
    net = RoadNetwork(length, speed, avg_tt, direction, types, np.array(edges), coords)
    tail = np.array([a for a, _, _ in segs])
    head = np.array([b for _, b, _ in segs])
    node_rc = {node(r, c): (r, c) for r in range(rows) for c in range(cols)}
    return net, tail, head, node_rc


def generate_synthetic(rows, cols, n_traj, n_users, seed=0, min_len=MIN_STEPS, max_len=40):
    """Grid road network plus random-walk trajectories with per-user habits.

    Each user has a home and a work intersection, a preferred departure hour
    and a driving-speed factor. Trips start near home and mostly head toward
    work (or, less often, a random target), so user identity is learnable.
    """
    if rows < 2 or cols < 2:
        raise ValidationError("grid must be at least 2x2")
    if n_users <= 0:
        raise ValidationError("n_users must be positive")
    if n_traj < 0:
        raise ValidationError("n_traj must be non-negative")
    rng = np.random.default_rng(seed)
    net, tail, head, node_rc = _grid_network(rows, cols, rng)
    n_nodes = rows * cols
    rc = np.array([node_rc[i] for i in range(n_nodes)])
    seg_tail = {}
    for s, d in net.edges:
        seg_tail.setdefault(int(s), []).append(int(d))
    starts_at = [[] for _ in range(n_nodes)]
    for j in range(net.n_segments):
        starts_at[tail[j]].append(j)

    home = rng.integers(0, n_nodes, n_users)
    work = rng.integers(0, n_nodes, n_users)
    hour = rng.uniform(6.0, 20.0, n_users)
    pace = rng.uniform(0.8, 1.25, n_users)

    def dist(a, b):
        return abs(rc[a, 0] - rc[b, 0]) + abs(rc[a, 1] - rc[b, 1])

    trajs = []
    for _ in range(n_traj):
        u = int(rng.integers(n_users))
        hr, hc = rc[home[u]]
        r = int(np.clip(round(hr + rng.normal(0, 0.8)), 0, rows - 1))
        c = int(np.clip(round(hc + rng.normal(0, 0.8)), 0, cols - 1))
        origin = r * cols + c
        target = int(work[u]) if rng.random() < 0.7 else int(rng.integers(n_nodes))
        length = int(rng.integers(min_len, max_len + 1))
        seg = int(rng.choice(starts_at[origin]))
        path = [seg]
        while len(path) < length:
            nxt = seg_tail.get(seg, [])
            if not nxt:
                break
            if head[seg] == target:
                target = int(rng.integers(n_nodes))
            closer = [j for j in nxt if dist(head[j], target) < dist(head[seg], target)]
            if closer and rng.random() < 0.8:
                seg = int(closer[rng.integers(len(closer))])
            else:
                seg = int(nxt[rng.integers(len(nxt))])
            path.append(seg)
        if len(path) < min_len:
            continue
        depart_hour = float(np.clip(hour[u] + rng.normal(0, 1.0), 0.0, 23.99))
        t = _BASE_EPOCH + int(rng.integers(0, 60)) * 86400 + int(depart_hour * 3600)
        stamps, counts = [], []
        for s in path:
            tt = net.avg_travel_time[s] * pace[u] * rng.lognormal(0.0, 0.25)
            stamps.append(t)
            g = int(rng.poisson(expected_gps_points(tt)))
            counts.append(0 if rng.random() < ZERO_GPS_PROB else g)
            t += int(round(tt))
        trajs.append(PathTrajectory(u, path, stamps, counts))
    return net, trajs
