"""Classical trajectory distances as O(|a||b|) dynamic programs.

All measures take ``(n, 2)`` float arrays of planar points (meters). The DP
kernels are compiled with numba; LCSS and EDR match two points when both
coordinate differences are within ``eps``.
"""

import numba
import numpy as np

from .errors import UnsupportedOperation, ValidationError

DEFAULT_EPS = 100.0


def as_points(a):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"point sequence must have shape (n, 2), got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValidationError("point sequence is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("point sequence has non-finite coordinates")
    return arr


def _check_eps(eps):
    if not eps > 0:
        raise ValidationError(f"eps must be positive, got {eps}")


@numba.njit(cache=True)
def _dist(a, i, b, j):
    dx = a[i, 0] - b[j, 0]
    dy = a[i, 1] - b[j, 1]
    return np.sqrt(dx * dx + dy * dy)


@numba.njit(cache=True)
def _dtw(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    cur = np.empty(m + 1)
    for i in range(1, n + 1):
        cur[0] = np.inf
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = _dist(a, i - 1, b, j - 1) + best
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True)
def _frechet(a, b):
    n, m = a.shape[0], b.shape[0]
    ca = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            d = _dist(a, i, b, j)
            if i == 0 and j == 0:
                ca[i, j] = d
            elif i == 0:
                ca[i, j] = max(ca[i, j - 1], d)
            elif j == 0:
                ca[i, j] = max(ca[i - 1, j], d)
            else:
                best = min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1])
                ca[i, j] = max(best, d)
    return ca[n - 1, m - 1]


@numba.njit(cache=True)
def _hausdorff(a, b):
    n, m = a.shape[0], b.shape[0]
    worst = 0.0
    for i in range(n):
        best = np.inf
        for j in range(m):
            d = _dist(a, i, b, j)
            if d < best:
                best = d
        if best > worst:
            worst = best
    for j in range(m):
        best = np.inf
        for i in range(n):
            d = _dist(a, i, b, j)
            if d < best:
                best = d
        if best > worst:
            worst = best
    return worst


@numba.njit(cache=True)
def _close(a, i, b, j, eps):
    return abs(a[i, 0] - b[j, 0]) <= eps and abs(a[i, 1] - b[j, 1]) <= eps


@numba.njit(cache=True)
def _lcss(a, b, eps):
    n, m = a.shape[0], b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = 0
        for j in range(1, m + 1):
            if _close(a, i - 1, b, j - 1, eps):
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True)
def _edr(a, b, eps):
    n, m = a.shape[0], b.shape[0]
    prev = np.arange(m + 1).astype(np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            sub = 0 if _close(a, i - 1, b, j - 1, eps) else 1
            cur[j] = min(prev[j - 1] + sub, prev[j] + 1, cur[j - 1] + 1)
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True)
def _erp(a, b, gx, gy):
    n, m = a.shape[0], b.shape[0]
    ga = np.empty(n)
    gb = np.empty(m)
    for i in range(n):
        ga[i] = np.sqrt((a[i, 0] - gx) ** 2 + (a[i, 1] - gy) ** 2)
    for j in range(m):
        gb[j] = np.sqrt((b[j, 0] - gx) ** 2 + (b[j, 1] - gy) ** 2)
    prev = np.empty(m + 1)
    cur = np.empty(m + 1)
    prev[0] = 0.0
    for j in range(1, m + 1):
        prev[j] = prev[j - 1] + gb[j - 1]
    for i in range(1, n + 1):
        cur[0] = prev[0] + ga[i - 1]
        for j in range(1, m + 1):
            cur[j] = min(prev[j - 1] + _dist(a, i - 1, b, j - 1), prev[j] + ga[i - 1], cur[j - 1] + gb[j - 1])
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True)
def _point_segment(px, py, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    den = dx * dx + dy * dy
    if den == 0.0:
        return np.sqrt((px - x0) ** 2 + (py - y0) ** 2)
    t = ((px - x0) * dx + (py - y0) * dy) / den
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx, qy = x0 + t * dx, y0 + t * dy
    return np.sqrt((px - qx) ** 2 + (py - qy) ** 2)


@numba.njit(cache=True)
def _spd(a, b):
    n, m = a.shape[0], b.shape[0]
    total = 0.0
    for i in range(n):
        if m == 1:
            best = _dist(a, i, b, 0)
        else:
            best = np.inf
            for j in range(m - 1):
                d = _point_segment(a[i, 0], a[i, 1], b[j, 0], b[j, 1], b[j + 1, 0], b[j + 1, 1])
                if d < best:
                    best = d
        total += best
    return total / n


def dtw(a, b):
    return float(_dtw(as_points(a), as_points(b)))


def discrete_frechet(a, b):
    return float(_frechet(as_points(a), as_points(b)))


def hausdorff(a, b):
    return float(_hausdorff(as_points(a), as_points(b)))


def lcss(a, b, eps=DEFAULT_EPS):
    """Length of the longest common subsequence under eps-matching."""
    _check_eps(eps)
    return int(_lcss(as_points(a), as_points(b), float(eps)))


def edr(a, b, eps=DEFAULT_EPS):
    """Edit distance on real sequences: unit cost per insert, delete or mismatch."""
    _check_eps(eps)
    return int(_edr(as_points(a), as_points(b), float(eps)))


def erp(a, b, gap=(0.0, 0.0)):
    """Edit distance with real penalty; gaps cost the distance to ``gap``."""
    gx, gy = (float(v) for v in gap)
    if not (np.isfinite(gx) and np.isfinite(gy)):
        raise ValidationError("gap point must be finite")
    return float(_erp(as_points(a), as_points(b), gx, gy))


def directed_spd(a, b):
    """Mean distance from the points of ``a`` to the polyline ``b``."""
    return float(_spd(as_points(a), as_points(b)))


def sspd(a, b):
    a, b = as_points(a), as_points(b)
    return float((_spd(a, b) + _spd(b, a)) / 2.0)


MEASURES = {
    "dtw": dtw,
    "frechet": discrete_frechet,
    "hausdorff": hausdorff,
    "lcss": lcss,
    "edr": edr,
    "erp": erp,
    "sspd": sspd,
}
# larger is more similar only for lcss
SIMILARITY_MEASURES = frozenset({"lcss"})


def measure_fn(name, eps=DEFAULT_EPS, gap=(0.0, 0.0)):
    if name not in MEASURES:
        raise ValidationError(f"unknown measure {name!r}; choose from {sorted(MEASURES)}")
    if name in ("lcss", "edr"):
        _check_eps(eps)
        return lambda a, b: MEASURES[name](a, b, eps)
    if name == "erp":
        return lambda a, b: erp(a, b, gap)
    return MEASURES[name]


def traj_to_pointseq(traj, net):
    """Segment midpoints along the trajectory, shape (len(traj), 2)."""
    if not net.has_coordinates:
        raise UnsupportedOperation("road network has no segment coordinates")
    return net.coords[traj.segments].copy()


def pairwise(seqs_a, seqs_b, name, eps=DEFAULT_EPS, gap=(0.0, 0.0), threads=1):
    """Distance matrix between two lists of point sequences.

    Work is split across ``threads`` workers by row; the kernels release the
    GIL, and results land in fixed positions so ordering is deterministic.
    """
    fn = measure_fn(name, eps, gap)
    seqs_a = [as_points(s) for s in seqs_a]
    seqs_b = [as_points(s) for s in seqs_b]
    out = np.empty((len(seqs_a), len(seqs_b)))

    def row(i):
        for j, sb in enumerate(seqs_b):
            out[i, j] = fn(seqs_a[i], sb)

    if threads <= 1:
        for i in range(len(seqs_a)):
            row(i)
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(row, range(len(seqs_a))))
    return out
