import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redtraj.errors import UnsupportedOperation, ValidationError
from redtraj.roadnet import RoadNetwork
from redtraj.simbaselines import (
    MEASURES,
    directed_spd,
    discrete_frechet,
    dtw,
    edr,
    erp,
    hausdorff,
    lcss,
    measure_fn,
    pairwise,
    sspd,
    traj_to_pointseq,
)
from redtraj.trajdata import PathTrajectory

from helpers import micro_network


def d(p, q):
    return math.hypot(p[0] - q[0], p[1] - q[1])


def couplings(n, m):
    """All monotone warping paths over cells (0,0) -> (n-1, m-1)."""
    if n == 1 and m == 1:
        yield [(0, 0)]
        return
    for di, dj in ((1, 0), (0, 1), (1, 1)):
        pi, pj = n - di, m - dj
        if pi >= 1 and pj >= 1:
            for path in couplings(pi, pj):
                yield path + [(n - 1, m - 1)]


def alignments(n, m):
    """All edit scripts turning a[:n] into b[:m]: 'd' pairs, 'a' gaps a, 'b' gaps b."""
    if n == 0 and m == 0:
        yield []
        return
    if n and m:
        for s in alignments(n - 1, m - 1):
            yield s + [("d", n - 1, m - 1)]
    if n:
        for s in alignments(n - 1, m):
            yield s + [("a", n - 1, None)]
    if m:
        for s in alignments(n, m - 1):
            yield s + [("b", None, m - 1)]


def brute_dtw(a, b):
    return min(sum(d(a[i], b[j]) for i, j in p) for p in couplings(len(a), len(b)))


def brute_frechet(a, b):
    return min(max(d(a[i], b[j]) for i, j in p) for p in couplings(len(a), len(b)))


def brute_hausdorff(a, b):
    return max(max(min(d(p, q) for q in b) for p in a), max(min(d(p, q) for p in a) for q in b))


def close(p, q, eps):
    return abs(p[0] - q[0]) <= eps and abs(p[1] - q[1]) <= eps


def brute_lcss(a, b, eps):
    best = 0
    for k in range(1, min(len(a), len(b)) + 1):
        for ia in itertools.combinations(range(len(a)), k):
            for ib in itertools.combinations(range(len(b)), k):
                if all(close(a[i], b[j], eps) for i, j in zip(ia, ib)):
                    best = k
    return best


def brute_edr(a, b, eps):
    return min(sum(0 if k == "d" and close(a[i], b[j], eps) else 1 for k, i, j in s)
               for s in alignments(len(a), len(b)))


def brute_erp(a, b, g):
    def cost(step):
        k, i, j = step
        return d(a[i], b[j]) if k == "d" else d(a[i], g) if k == "a" else d(b[j], g)

    return min(sum(cost(s) for s in script) for script in alignments(len(a), len(b)))


def point_to_segment(p, s0, s1):
    """Perpendicular distance when the foot lands on the segment, else nearest endpoint."""
    vx, vy = s1[0] - s0[0], s1[1] - s0[1]
    seg = math.hypot(vx, vy)
    ends = min(d(p, s0), d(p, s1))
    if seg == 0:
        return ends
    along0 = (p[0] - s0[0]) * vx + (p[1] - s0[1]) * vy
    along1 = (p[0] - s1[0]) * -vx + (p[1] - s1[1]) * -vy
    if along0 >= 0 and along1 >= 0:
        return abs((p[0] - s0[0]) * vy - (p[1] - s0[1]) * vx) / seg
    return ends


def brute_directed_spd(a, b):
    if len(b) == 1:
        return sum(d(p, b[0]) for p in a) / len(a)
    return sum(min(point_to_segment(p, b[k], b[k + 1]) for k in range(len(b) - 1)) for p in a) / len(a)


points = st.lists(st.tuples(st.integers(0, 400), st.integers(0, 400)), min_size=1, max_size=6)
small_points = st.lists(st.tuples(st.integers(0, 400), st.integers(0, 400)), min_size=1, max_size=5)


def arr(p):
    return np.array(p, dtype=np.float64)


def test_examples():
    a = arr([(0, 0), (10, 5), (20, 0)])
    for f in (dtw, discrete_frechet, hausdorff, sspd, erp):
        assert f(a, a) == 0.0
    assert lcss(a, a, 1.0) == 3 and edr(a, a, 1.0) == 0
    p, q = arr([(0, 0)]), arr([(3, 4)])
    assert dtw(p, q) == 5.0 and discrete_frechet(p, q) == 5.0 and hausdorff(p, q) == 5.0
    far = arr([(1000, 1000)])
    assert lcss(p, far, 1.0) == 0 and edr(p, far, 1.0) == 1
    assert directed_spd(arr([(0, 1)]), arr([(0, 0), (2, 0)])) == 1.0


def test_errors():
    a = arr([(0, 0)])
    for f in (dtw, discrete_frechet, hausdorff, sspd, erp):
        with pytest.raises(ValidationError):
            f(np.zeros((0, 2)), a)
    with pytest.raises(ValidationError):
        lcss(a, a, 0.0)
    with pytest.raises(ValidationError):
        edr(a, a, -1.0)
    with pytest.raises(ValidationError):
        erp(a, a, gap=(float("nan"), 0.0))
    with pytest.raises(ValidationError):
        dtw(arr([(0, float("inf"))]), a)
    with pytest.raises(ValidationError):
        measure_fn("cosine")


@settings(max_examples=150, deadline=None)
@given(points, points)
def test_warping_measures_match_enumeration(a, b):
    assert abs(dtw(arr(a), arr(b)) - brute_dtw(a, b)) < 1e-9
    assert abs(discrete_frechet(arr(a), arr(b)) - brute_frechet(a, b)) < 1e-12
    assert abs(hausdorff(arr(a), arr(b)) - brute_hausdorff(a, b)) < 1e-12


@settings(max_examples=150, deadline=None)
@given(points, points, st.sampled_from([1.0, 50.0, 100.0, 250.0]))
def test_lcss_matches_enumeration(a, b, eps):
    assert lcss(arr(a), arr(b), eps) == brute_lcss(a, b, eps)


@settings(max_examples=100, deadline=None)
@given(small_points, small_points, st.sampled_from([1.0, 100.0, 250.0]),
       st.tuples(st.integers(-50, 50), st.integers(-50, 50)))
def test_edit_measures_match_enumeration(a, b, eps, g):
    assert edr(arr(a), arr(b), eps) == brute_edr(a, b, eps)
    assert abs(erp(arr(a), arr(b), gap=g) - brute_erp(a, b, g)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(points, points)
def test_sspd_matches_geometry(a, b):
    assert abs(directed_spd(arr(a), arr(b)) - brute_directed_spd(a, b)) < 1e-9
    assert abs(sspd(arr(a), arr(b)) - (brute_directed_spd(a, b) + brute_directed_spd(b, a)) / 2) < 1e-9


coords = st.floats(-1e4, 1e4, allow_nan=False)
fpoints = st.lists(st.tuples(coords, coords), min_size=1, max_size=12)


@settings(max_examples=1000, deadline=None)
@given(fpoints, fpoints)
def test_symmetry_and_hausdorff_below_frechet(a, b):
    a, b = arr(a), arr(b)
    for f in (dtw, discrete_frechet, hausdorff, sspd, erp):
        assert f(a, b) == f(b, a) and f(a, b) >= 0.0
    assert hausdorff(a, b) <= discrete_frechet(a, b)


def test_pairwise_matches_loops_and_threads():
    rng = np.random.default_rng(0)
    seqs = [rng.uniform(0, 500, (int(rng.integers(1, 9)), 2)) for _ in range(7)]
    for name in sorted(MEASURES):
        f = measure_fn(name, eps=80.0)
        ref = np.array([[f(x, y) for y in seqs[2:]] for x in seqs[:3]])
        assert np.array_equal(pairwise(seqs[:3], seqs[2:], name, eps=80.0), ref)
        assert np.array_equal(pairwise(seqs[:3], seqs[2:], name, eps=80.0, threads=3), ref)


def test_traj_to_pointseq():
    net = micro_network()
    pts = traj_to_pointseq(PathTrajectory(0, [4, 0, 3], [0, 1, 2]), net)
    assert pts.tolist() == [[50.0, 50.0], [0.0, 0.0], [0.0, 100.0]]
    bare = RoadNetwork([10.0, 20.0], [5.0, 5.0], [1.0, 1.0], [0.0, 0.0], [0, 0], [(0, 1)])
    with pytest.raises(UnsupportedOperation):
        traj_to_pointseq(PathTrajectory(0, [0, 1], [0, 1]), bare)
