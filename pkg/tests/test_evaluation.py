import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redtraj.errors import ValidationError
from redtraj.evaluation import (
    build_retrieval,
    classification_metrics,
    downsample,
    embed_dataset,
    evaluate_retrieval,
    hit_ratio,
    mean_rank,
    rank_by_score,
    regression_metrics,
    retrieval_mean_rank,
    similarity_hit_ratios,
    topk_by_measure,
    topk_by_vectors,
)
from redtraj.seq2seq import RedModel
from redtraj.simbaselines import hausdorff, lcss, traj_to_pointseq
from redtraj.trajdata import PathTrajectory, generate_synthetic

from helpers import micro_config, micro_network, micro_trajectories


def test_regression_examples():
    m = regression_metrics([10, 20], [8, 25])
    assert abs(m["mae"] - 3.5) < 1e-15
    assert abs(m["rmse"] - math.sqrt(14.5)) < 1e-15
    assert abs(m["mape"] - 22.5) < 1e-12
    same = regression_metrics([3.0, 4.0], [3.0, 4.0])
    assert same == {"mae": 0.0, "mape": 0.0, "rmse": 0.0}
    off = regression_metrics([4.0, 3.0, 6.0], [3.0, 4.0, 5.0])
    assert off["mae"] == 1.0 and off["rmse"] == 1.0


def test_zero_target_excluded_from_mape_only(caplog):
    with caplog.at_level(logging.WARNING):
        m = regression_metrics([1.0, 12.0], [0.0, 10.0])
    assert abs(m["mape"] - 20.0) < 1e-12 and m["mae"] == 1.5
    assert "excluded from MAPE" in caplog.text


def test_classification_binary_and_multiclass():
    s = np.array([[0.9, 0.1], [0.2, 0.8], [0.3, 0.7], [0.6, 0.4]])
    m = classification_metrics(s, [0, 1, 0, 1])
    assert m == {"accuracy": 0.5, "precision": 0.5, "f1": 0.5}
    scores = np.eye(6)[[0, 1, 2, 2, 4, 5]] + 0.01 * np.arange(6)
    labels = [0, 1, 2, 3, 4, 5]
    m = classification_metrics(scores, labels)
    assert abs(m["micro_f1"] - 5 / 6) < 1e-15
    # classes 0,1,4,5 perfect; class 2 has f1 2/3, class 3 f1 0
    assert abs(m["macro_f1"] - (4 + 2 / 3) / 6) < 1e-15
    assert m["recall@5"] == 1.0


def test_hit_ratio_examples():
    assert hit_ratio([[1, 2, 3]], [[1, 2, 3]], 3) == 1.0
    assert hit_ratio([[1, 2, 3]], [[4, 5, 6]], 3) == 0.0
    assert abs(hit_ratio([["a", "b", "c"]], [["a", "c", "d"]], 3) - 2 / 3) < 1e-15
    with pytest.raises(ValidationError):
        hit_ratio([[1, 2]], [[1, 2]], 3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.permutations(range(8)), min_size=1, max_size=5), st.integers(1, 8), st.randoms())
def test_hit_ratio_in_unit_range(truth, k, rnd):
    pred = [rnd.sample(range(12), 8) for _ in truth]
    hr = hit_ratio(truth, pred, k)
    assert 0.0 <= hr <= 1.0
    assert hit_ratio(truth, truth, k) == 1.0


def test_mean_rank_examples(caplog):
    assert mean_rank([0, 1], [[0, 1], [1, 0]]).mean_rank == 1.0
    assert mean_rank([7, 8, 9], [[7, 1], [1, 8], [1, 2, 9]]).mean_rank == 2.0
    # equal scores: the larger id ranks second
    assert mean_rank([3], [rank_by_score([0.5, 0.5], [3, 1])]).ranks == [2]
    with caplog.at_level(logging.WARNING):
        res = mean_rank([5, 1], [[1, 2], [1, 2]])
    assert res.missing == 1 and res.mean_rank == 1.0


def test_downsample_examples():
    t = PathTrajectory(0, list(range(10)), list(range(0, 100, 10)))
    out = downsample(t, 0.2, seed=4)
    assert len(out) == 8 and out.segments[0] == 0 and out.segments[-1] == 9
    assert downsample(t, 0.2, seed=4) == out
    assert downsample(t, 0.01, seed=0) == t
    with pytest.raises(ValidationError):
        downsample(t, 1.0)


def test_downsample_warns_and_keeps_endpoints(caplog):
    t = PathTrajectory(0, [0, 1, 2], [0, 1, 2])
    with caplog.at_level(logging.WARNING):
        out = downsample(t, 0.9)
    assert list(out.segments) == [0, 2] and "endpoints only" in caplog.text


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 40), st.floats(0.01, 0.99), st.integers(0, 1000))
def test_downsample_is_subsequence(n, p, seed):
    t = PathTrajectory(0, np.arange(n) % 7, np.arange(n) * 5, np.arange(n) % 3)
    out = downsample(t, p, seed)
    pos = [int(x) // 5 for x in out.timestamps]
    assert pos == sorted(set(pos)) and pos[0] == 0 and pos[-1] == n - 1
    assert np.array_equal(out.segments, t.segments[pos]) and np.array_equal(out.gps_counts, t.gps_counts[pos])
    assert len(out) == max(n - round(p * n), 2)


def test_vector_topk_matches_scan():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(10, 6))
    dvecs = rng.normal(size=(100, 6))
    dvecs[7] = dvecs[3]
    got = topk_by_vectors(q, dvecs, 10)
    for row, ids in zip(q, got):
        scored = sorted(range(100), key=lambda j: (-float(row @ dvecs[j]), j))
        assert list(ids) == scored[:10]


def test_measure_topk_direction():
    pts = [np.array([[0.0, 0.0], [10.0, 0.0]]), np.array([[0.0, 5.0], [10.0, 5.0]]),
           np.array([[0.0, 500.0], [10.0, 500.0]]), np.array([[0.0, 1.0], [10.0, 1.0]])]
    assert list(topk_by_measure(pts[:1], pts, "hausdorff", 2, exclude=[0])[0]) == [3, 1]
    assert [hausdorff(pts[0], p) for p in pts[1:]] == [5.0, 500.0, 1.0]
    # lcss is a similarity: more matches rank first
    assert list(topk_by_measure(pts[:1], pts, "lcss", 3, exclude=[0], eps=6.0)[0]) == [1, 3, 2]
    assert lcss(pts[0], pts[2], 6.0) == 0


def micro_model():
    net = micro_network()
    return net, RedModel(net, 2, micro_config())


def test_embed_unit_norm_and_duplicates():
    _, model = micro_model()
    t = micro_trajectories()
    vecs = embed_dataset(model, [t[0], t[1], t[0]])
    assert np.allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-15)
    assert abs(vecs[0] @ vecs[0] - 1.0) < 1e-15
    assert vecs[0] @ vecs[1] == vecs[2] @ vecs[1]


def test_self_retrieval_is_rank_one():
    net, trajs = generate_synthetic(4, 4, 30, 3, seed=0)
    model = RedModel(net, 3, micro_config())
    setup = build_retrieval(trajs[:10], trajs[10:], 0.01)
    assert all(a == b for a, b in zip(setup.queries, setup.database[:10]))
    res = evaluate_retrieval(model, setup)
    assert res.mean_rank == 1.0 and res.missing == 0


def test_retrieval_mean_rank_identical_vectors():
    v = np.ones((3, 4))
    # all scores tie; twins at ids 0..2 win only for query 0 (lowest id)
    assert retrieval_mean_rank(v, v, np.arange(3)).ranks == [1, 2, 3]


def test_similarity_hit_ratios_shape():
    net, trajs = generate_synthetic(4, 4, 30, 3, seed=1)
    model = RedModel(net, 3, micro_config())
    hr = similarity_hit_ratios(model, trajs, 5, ks=(1, 5))
    assert set(hr) == {"hr@1", "hr@5"} and all(0.0 <= v <= 1.0 for v in hr.values())
    with pytest.raises(ValidationError):
        similarity_hit_ratios(model, trajs[:5], 2, ks=(5,))
    assert traj_to_pointseq(trajs[0], net).shape == (len(trajs[0]), 2)
