"""One test per acceptance criterion; each prints a PASS/FAIL line in the terminal summary."""

import gc
import math
import time

import numpy as np
import pytest

from redtraj.config import RedConfig
from redtraj.evaluation import (
    build_retrieval,
    embed_dataset,
    evaluate_retrieval,
    hit_ratio,
    mean_rank,
    rank_by_score,
    regression_metrics,
)
from redtraj.masking import (
    MaskThresholds,
    compute_thresholds,
    road_aware_split,
    split_dataset_masks,
)
from redtraj.numcore import grad_check
from redtraj.roadnet import RoadNetwork
from redtraj.seq2seq import RedModel, build_batch, f_dist, f_time
from redtraj.simbaselines import discrete_frechet, dtw, edr, erp, hausdorff, lcss
from redtraj.trajdata import PathTrajectory, generate_synthetic
from redtraj.training import evaluate_pretrain, load_model, pretrain, save_model, total_loss

from helpers import jitter, micro_config, micro_network, micro_trajectories
from test_masking import seven_step_instance
from test_simbaselines import brute_dtw, brute_edr, brute_erp, brute_frechet, brute_lcss

SMOKE_CFG = RedConfig(dim=32, enc_layers=2, dec_layers=2, heads=4, epochs=10, batch_size=32, lr=3e-3, seed=0)


@pytest.fixture(scope="module")
def smoke_data():
    return generate_synthetic(8, 8, 2000, 10, seed=1)


@pytest.fixture(scope="module")
def smoke_run(smoke_data):
    net, trajs = smoke_data
    t0 = time.perf_counter()
    res = pretrain(trajs, net, SMOKE_CFG)
    return res, time.perf_counter() - t0


# 1 -----------------------------------------------------------------------


def test_c01_gradient_check(criterion):
    with criterion(1, "micro-config autodiff vs central differences, max rel err < 1e-4, < 30 s") as note:
        t0 = time.perf_counter()
        net, trajs = micro_network(), micro_trajectories()
        model = RedModel(net, 2, micro_config())
        jitter(model, 0.1, 0)
        th = compute_thresholds(trajs, net)
        batch = build_batch(trajs, net, split_dataset_masks(trajs, net, "road-aware", th))
        params = dict(model.named_parameters())
        err, per = grad_check(lambda: total_loss(model, batch, 0.3)[0], params, h=1e-3)
        dt = time.perf_counter() - t0
        note(f"max rel err {err:.2e} over {len(params)} tensors / {sum(p.data.size for p in params.values())} scalars")
        note(f"{dt:.1f}s")
        assert err < 1e-4, max(per, key=per.get)
        assert dt < 30


# 2 -----------------------------------------------------------------------


def test_c02_similarity_exactness(criterion):
    with criterion(2, "DP measures equal enumeration oracles on 200 pairs; Hausdorff <= Frechet on 1000") as note:
        t0 = time.perf_counter()
        rng = np.random.default_rng(2)
        for _ in range(200):
            a = [tuple(p) for p in rng.integers(0, 400, (int(rng.integers(1, 7)), 2)).tolist()]
            b = [tuple(p) for p in rng.integers(0, 400, (int(rng.integers(1, 7)), 2)).tolist()]
            eps = float(rng.choice([1.0, 60.0, 150.0]))
            g = tuple(rng.integers(-50, 50, 2).tolist())
            A, B = np.array(a, float), np.array(b, float)
            assert lcss(A, B, eps) == brute_lcss(a, b, eps)
            assert edr(A, B, eps) == brute_edr(a, b, eps)
            assert abs(dtw(A, B) - brute_dtw(a, b)) < 1e-9
            assert abs(erp(A, B, gap=g) - brute_erp(a, b, g)) < 1e-9
            assert abs(discrete_frechet(A, B) - brute_frechet(a, b)) < 1e-9
        for _ in range(1000):
            A = rng.normal(0, 500, (int(rng.integers(1, 30)), 2))
            B = rng.normal(0, 500, (int(rng.integers(1, 30)), 2))
            assert hausdorff(A, B) <= discrete_frechet(A, B)
        dt = time.perf_counter() - t0
        note(f"{dt:.1f}s")
        assert dt < 60


# 3 -----------------------------------------------------------------------


def chain(lengths):
    n = len(lengths)
    return RoadNetwork(lengths, [50.0] * n, [10.0] * n, [0.0] * n, [0] * n, [(i, i + 1) for i in range(n - 1)])


def test_c03_masking_invariants(criterion):
    with criterion(3, "masking partition/fallback/monotonicity on 10k fuzzed trajectories + seven-step hot-or-long pattern") as note:
        t0 = time.perf_counter()
        net, traj, th = seven_step_instance()
        seven = road_aware_split(traj, net, th)
        assert seven.key_indices == (0, 3, 4, 6) and seven.mask_indices == (1, 2, 5)
        rng = np.random.default_rng(3)
        fallbacks = 0
        for _ in range(10_000):
            n = int(rng.integers(1, 40))
            counts = rng.integers(0, 10, n)
            lengths = rng.uniform(10, 400, n)
            net = chain(lengths.tolist())
            t = PathTrajectory(0, np.arange(n), np.arange(n) * 10, counts)
            lo = (float(rng.uniform(0, 8)), float(rng.uniform(0, 400)))
            hi = (lo[0] + float(rng.uniform(0, 4)), lo[1] + float(rng.uniform(0, 200)))
            s_lo = road_aware_split(t, net, MaskThresholds(*lo))
            s_hi = road_aware_split(t, net, MaskThresholds(*hi))
            raw_lo = (counts > lo[0]) | (lengths > lo[1])
            raw_hi = (counts > hi[0]) | (lengths > hi[1])
            for s, raw in ((s_lo, raw_lo), (s_hi, raw_hi)):
                assert s.is_partition_of(n) and len(s.key_indices) >= 1
                assert n == 1 or len(s.mask_indices) >= 1
                if n == 1:
                    assert s.key_indices == (0,)
                elif not raw.any() and n > 2:
                    fallbacks += 1
                    assert s.key_indices == (0, n - 1)
                elif raw.all() or not raw.any():
                    # two quiet steps: endpoints promote both, then one is demoted
                    fallbacks += 1
                    worst = min(range(n), key=lambda i: (counts[i], lengths[i], i))
                    assert s.mask_indices == (worst,)
                else:
                    assert s.key_indices == tuple(np.flatnonzero(raw).tolist())
            assert not np.any(raw_hi & ~raw_lo)
            if n > 1 and 0 < raw_lo.sum() < n and 0 < raw_hi.sum() < n:
                assert set(s_hi.key_indices) <= set(s_lo.key_indices)
        dt = time.perf_counter() - t0
        note(f"{fallbacks} fallback splits exercised")
        note(f"{dt:.1f}s")
        assert dt < 10


# 4 -----------------------------------------------------------------------


def test_c04_bias_function_values(criterion):
    with criterion(4, "f_time(0)=1, f_time(60)=1/ln(e+1) within 1e-12, strict monotonicity on 1000 args") as note:
        assert abs(f_time(0) - 1.0) < 1e-12
        assert abs(f_time(60) - 1.0 / math.log(math.e + 1.0)) < 1e-12
        note(f"f_time(60) = {f_time(60):.10f}")
        rng = np.random.default_rng(4)
        for f in (f_time, f_dist):
            m = np.sort(rng.uniform(0, 1e6, 1000))
            m = np.unique(m)
            v = f(m)
            assert np.all(np.diff(v) < 0) and np.all((v > 0) & (v <= 1))


# 5 -----------------------------------------------------------------------


def test_c05_vanilla_reduction(criterion):
    with criterion(5, "zeroed bias projections give bit-identical encoder/decoder outputs to a bias-free run"):
        net = micro_network()
        model = RedModel(net, 2, micro_config(enc_layers=2, dec_layers=2))
        jitter(model, 0.1, 5)
        trajs = micro_trajectories()
        th = compute_thresholds(trajs, net)
        batch = build_batch(trajs, net, split_dataset_masks(trajs, net, "road-aware", th))
        model.zero_bias_projections()
        spatial = model.embed.spatial()
        enc_a, _ = model.encode(batch, spatial, use_bias=True)
        enc_b, _ = model.encode(batch, spatial, use_bias=False)
        dec_a, _ = model.decode(batch, enc_a, spatial, use_bias=True)
        dec_b, _ = model.decode(batch, enc_b, spatial, use_bias=False)
        assert enc_a.data.tobytes() == enc_b.data.tobytes()
        assert dec_a.data.tobytes() == dec_b.data.tobytes()


# 6 -----------------------------------------------------------------------


def test_c06_training_smoke(criterion, smoke_data, smoke_run):
    with criterion(6, "smoke: val total -30%, held-out NSP acc >= 5x uniform, road-aware TR <= random@0.9, < 8 min") as note:
        net, trajs = smoke_data
        res, dt_main = smoke_run
        v0, v1 = res.history[0]["val"].total, res.history[-1]["val"].total
        drop = 1.0 - v1 / v0
        note(f"(a) val total {v0:.3f} -> {v1:.3f} ({100 * drop:.1f}% drop)")
        test = [trajs[i] for i in res.split.test]
        masks = split_dataset_masks(test, net, "road-aware", res.thresholds)
        _, acc = evaluate_pretrain(res.model, test, masks, net, SMOKE_CFG.lambda1)
        uniform = 1.0 / (net.n_segments + 3)
        note(f"(b) test NSP acc {acc:.4f} vs 5x uniform {5 * uniform:.4f}")
        t0 = time.perf_counter()
        rnd = pretrain(trajs, net, SMOKE_CFG.replace(mask_strategy="random", mask_ratio=0.9))
        dt = dt_main + time.perf_counter() - t0
        tr_road, tr_rand = res.history[-1]["val"].tr, rnd.history[-1]["val"].tr
        note(f"(c) val TR road-aware {tr_road:.3f} vs random@0.9 {tr_rand:.3f}")
        note(f"{dt:.0f}s for both runs")
        assert drop >= 0.30
        assert acc >= 5 * uniform
        assert tr_road <= tr_rand
        assert dt < 480


# 7 -----------------------------------------------------------------------


def test_c07_retrieval(criterion, smoke_data, smoke_run):
    with criterion(7, "duplicate queries MR = 1.0 exactly; at p=0.1 trained MR < untrained MR, < 2 min") as note:
        t0 = time.perf_counter()
        net, trajs = smoke_data
        res, _ = smoke_run
        pick = np.random.default_rng(7).permutation(len(trajs))[:1100]
        queries = [trajs[i] for i in pick[:100]]
        database = [trajs[i] for i in pick[100:]]
        exact = build_retrieval(queries, database, 0.001)
        assert len(exact.database) == 1100 and all(a == b for a, b in zip(exact.queries, exact.database))
        mr_dup = evaluate_retrieval(res.model, exact)
        note(f"duplicates MR {mr_dup.mean_rank}")
        down = build_retrieval(queries, database, 0.1, seed=7)
        trained = evaluate_retrieval(res.model, down).mean_rank
        fresh = RedModel(net, res.model.embed.n_users, SMOKE_CFG)
        fresh.eval()
        untrained = evaluate_retrieval(fresh, down).mean_rank
        dt = time.perf_counter() - t0
        note(f"p=0.1 MR trained {trained:.2f} vs untrained {untrained:.2f}")
        note(f"{dt:.1f}s")
        assert mr_dup.mean_rank == 1.0 and mr_dup.missing == 0
        assert trained < untrained
        assert dt < 120


# 8 -----------------------------------------------------------------------


def test_c08_metric_arithmetic(criterion):
    with criterion(8, "MAE/MAPE/RMSE, HR@k and MR unit examples"):
        m = regression_metrics([10, 20], [8, 25])
        assert m["mae"] == 3.5 and abs(m["mape"] - 22.5) < 1e-12 and m["rmse"] == math.sqrt(14.5)
        assert regression_metrics([5.0, 7.0], [5.0, 7.0]) == {"mae": 0.0, "mape": 0.0, "rmse": 0.0}
        one = regression_metrics([2.0, 4.0, 7.0], [1.0, 5.0, 6.0])
        assert one["mae"] == 1.0 and one["rmse"] == 1.0
        assert hit_ratio([[1, 2, 3]], [[1, 2, 3]], 3) == 1.0
        assert hit_ratio([[1, 2, 3]], [[4, 5, 6]], 3) == 0.0
        assert hit_ratio([["a", "b", "c"]], [["a", "c", "d"]], 3) == 2 / 3
        assert mean_rank([0, 1], [[0, 1], [1, 0]]).mean_rank == 1.0
        assert mean_rank([1, 2, 3], [[1, 0], [0, 2], [0, 4, 3]]).mean_rank == 2.0
        assert mean_rank([9], [rank_by_score([0.3, 0.3], [9, 2])]).mean_rank == 2.0


# 9 -----------------------------------------------------------------------


def test_c09_checkpoint_round_trip(criterion, smoke_data, smoke_run, tmp_path):
    with criterion(9, "save -> load -> embed is bit-identical on 100 trajectories"):
        net, trajs = smoke_data
        res, _ = smoke_run
        sample = trajs[:100]
        before = embed_dataset(res.model, sample)
        path = str(tmp_path / "smoke.ckpt.npz")
        save_model(path, res.model)
        back, _ = load_model(path, net)
        assert embed_dataset(back, sample).tobytes() == before.tobytes()
        assert embed_dataset(back, sample, normalize=False).tobytes() == \
            embed_dataset(res.model, sample, normalize=False).tobytes()


# 10 ----------------------------------------------------------------------


def _best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_c10_complexity(criterion, smoke_data):
    with criterion(10, "masking time linear in steps (R^2 > 0.98, 4 sizes); DP time quadratic (factor-2 band)") as note:
        net, trajs = smoke_data
        datas = [trajs * mult for mult in (1, 2, 3, 4)]
        ths = [compute_thresholds(d, net) for d in datas]
        steps = [sum(len(t) for t in d) for d in datas]
        times = [float("inf")] * len(datas)
        split_dataset_masks(datas[0], net, "road-aware", ths[0])
        # sizes are timed round-robin so machine noise hits all of them alike
        gc.collect()
        gc.disable()
        try:
            for _ in range(15):
                for i, (d, th) in enumerate(zip(datas, ths)):
                    t0 = time.perf_counter()
                    split_dataset_masks(d, net, "road-aware", th)
                    times[i] = min(times[i], time.perf_counter() - t0)
        finally:
            gc.enable()
        slope, icpt = np.polyfit(steps, times, 1)
        pred = slope * np.asarray(steps) + icpt
        r2 = 1.0 - np.sum((np.asarray(times) - pred) ** 2) / np.sum((np.asarray(times) - np.mean(times)) ** 2)
        note(f"masking R^2 {r2:.4f}")
        rng = np.random.default_rng(10)
        ratios = {}
        for name, fn in (("dtw", dtw), ("frechet", discrete_frechet), ("lcss", lambda a, b: lcss(a, b, 50.0)),
                         ("edr", lambda a, b: edr(a, b, 50.0)), ("erp", erp)):
            pairs = [(rng.uniform(0, 1000, (n, 2)), rng.uniform(0, 1000, (n, 2))) for n in (400, 800, 1600)]
            fn(pairs[0][0][:4], pairs[0][1][:4])
            times_n = [float("inf")] * 3
            for _ in range(9):
                for i, (a, b) in enumerate(pairs):
                    times_n[i] = min(times_n[i], _best_time(lambda: fn(a, b), 1))
            # doubling both lengths multiplies the cell count by 4
            ratios[name] = [times_n[i + 1] / times_n[i] for i in range(2)]
        note("DP x2-length time ratios " + ", ".join(f"{k} {v[0]:.2f}/{v[1]:.2f}" for k, v in ratios.items()))
        assert r2 > 0.98
        for name, rs in ratios.items():
            assert all(2.0 <= r <= 8.0 for r in rs), name
