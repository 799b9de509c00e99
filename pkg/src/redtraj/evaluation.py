"""Metrics and the retrieval / top-k similarity protocols."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .simbaselines import SIMILARITY_MEASURES, pairwise, traj_to_pointseq

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ metrics


def regression_metrics(pred, truth):
    """MAE, MAPE (%) and RMSE. Zero targets are left out of MAPE only."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValidationError(f"prediction shape {pred.shape} vs target shape {truth.shape}")
    err = pred - truth
    nz = truth != 0
    if not nz.all():
        log.warning("%d zero-valued targets excluded from MAPE", int((~nz).sum()))
    mape = float(np.mean(np.abs(err[nz]) / np.abs(truth[nz])) * 100.0) if nz.any() else float("nan")
    return {
        "mae": float(np.mean(np.abs(err))),
        "mape": mape,
        "rmse": float(np.sqrt(np.mean(err * err))),
    }


def _f1(tp, fp, fn):
    den = 2 * tp + fp + fn
    return 2 * tp / den if den else 0.0


def classification_metrics(scores, labels, n_classes=None, k=5):
    """Mi-F1, Ma-F1 and Recall@k; accuracy/precision/F1 when there are two classes.

    ``scores`` is ``[n, C]``. Macro-F1 averages over classes that occur in
    the labels or the predictions.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != len(labels):
        raise ValidationError(f"scores {scores.shape} do not match {len(labels)} labels")
    n_classes = scores.shape[1] if n_classes is None else n_classes
    pred = scores.argmax(1)
    if n_classes == 2:
        tp = int(((pred == 1) & (labels == 1)).sum())
        fp = int(((pred == 1) & (labels == 0)).sum())
        fn = int(((pred == 0) & (labels == 1)).sum())
        return {
            "accuracy": float((pred == labels).mean()),
            "precision": tp / (tp + fp) if tp + fp else 0.0,
            "f1": _f1(tp, fp, fn),
        }
    present = np.union1d(labels, pred)
    f1s = []
    for c in present:
        tp = int(((pred == c) & (labels == c)).sum())
        fp = int(((pred == c) & (labels != c)).sum())
        fn = int(((pred != c) & (labels == c)).sum())
        f1s.append(_f1(tp, fp, fn))
    kk = min(k, scores.shape[1])
    # stable sort on negated scores: ties go to the lower class id
    topk = np.argsort(-scores, axis=1, kind="stable")[:, :kk]
    return {
        "micro_f1": float((pred == labels).mean()),
        "macro_f1": float(np.mean(f1s)),
        f"recall@{k}": float((topk == labels[:, None]).any(1).mean()),
    }


def hit_ratio(truth_topk, pred_topk, k):
    """Mean overlap |pred[:k] & truth[:k]| / k over queries."""
    if k <= 0:
        raise ValidationError("k must be positive")
    if len(truth_topk) != len(pred_topk) or not len(truth_topk):
        raise ValidationError("need the same, non-zero number of truth and prediction lists")
    total = 0.0
    for t, p in zip(truth_topk, pred_topk):
        if len(t) < k or len(p) < k:
            raise ValidationError(f"k={k} exceeds a candidate list of length {min(len(t), len(p))}")
        total += len(set(list(t)[:k]) & set(list(p)[:k])) / k
    return total / len(truth_topk)


def rank_by_score(scores, candidate_ids=None):
    """Candidate order for one query: descending score, then ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.arange(len(scores)) if candidate_ids is None else np.asarray(candidate_ids)
    order = np.lexsort((ids, -scores))
    return ids[order]


@dataclass
class RankResult:
    mean_rank: float
    ranks: list
    missing: int


def mean_rank(targets, ranked_lists):
    """Mean 1-based rank of each target in its ranked list.

    Queries whose target is absent are logged, excluded, and counted in
    ``RankResult.missing``.
    """
    ranks = []
    missing = 0
    for q, (target, ranked) in enumerate(zip(targets, ranked_lists)):
        hits = np.flatnonzero(np.asarray(ranked) == target)
        if not len(hits):
            log.warning("query %d: target %r not among candidates", q, target)
            missing += 1
            continue
        ranks.append(int(hits[0]) + 1)
    mr = float(np.mean(ranks)) if ranks else float("nan")
    return RankResult(mr, ranks, missing)


# ---------------------------------------------------------------- retrieval


def downsample(traj, p, seed=0):
    """Drop round(p * n) interior steps at random; endpoints always survive."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"downsampling rate must lie in (0, 1), got {p}")
    n = len(traj)
    drop = int(round(p * n))
    interior = max(n - 2, 0)
    if drop > interior:
        log.warning("downsampling %d of %d steps would leave fewer than 2; keeping endpoints only", drop, n)
        drop = interior
    if drop == 0:
        return traj.subset(np.arange(n))
    rng = np.random.default_rng(seed)
    removed = rng.choice(np.arange(1, n - 1), size=drop, replace=False)
    keep = np.setdiff1d(np.arange(n), removed)
    return traj.subset(keep)


@dataclass
class RetrievalSetup:
    """Queries Q and the expanded database D' = Q' + D.

    Twins occupy ids ``0..|Q|-1`` of D' so that, under the tie rule, an exact
    duplicate wins every tie.
    """

    queries: list
    database: list
    targets: np.ndarray
    p: float


def build_retrieval(queries, database, p, seed=0):
    twins = [downsample(q, p, seed + i) for i, q in enumerate(queries)]
    return RetrievalSetup(list(queries), twins + list(database), np.arange(len(queries)), p)


def embed_dataset(model, trajs, normalize=True, batch_size=64, strip_time=False):
    """Trajectory vectors in input order; rows are unit-norm when ``normalize``."""
    from .seq2seq import infer_representation

    vecs = infer_representation(model, trajs, batch_size, strip_time)
    if normalize:
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        vecs = vecs / np.where(norms > 0, norms, 1.0)
    return vecs


def retrieval_mean_rank(q_vecs, d_vecs, targets):
    scores = q_vecs @ d_vecs.T
    ranked = [rank_by_score(row) for row in scores]
    return mean_rank(targets, ranked)


def evaluate_retrieval(model, setup, normalize=True):
    q = embed_dataset(model, setup.queries, normalize)
    d = embed_dataset(model, setup.database, normalize)
    return retrieval_mean_rank(q, d, setup.targets)


def topk_by_vectors(q_vecs, d_vecs, k, exclude=None):
    """Top-k candidate ids per query by inner product (ties to lower id).

    ``exclude[i]`` is a candidate id to skip for query ``i`` (itself).
    """
    scores = q_vecs @ d_vecs.T
    out = []
    for i, row in enumerate(scores):
        ranked = rank_by_score(row)
        if exclude is not None:
            ranked = ranked[ranked != exclude[i]]
        out.append(ranked[:k])
    return out


def topk_by_measure(q_points, d_points, measure, k, exclude=None, eps=100.0, threads=1):
    """Ground-truth top-k under a heuristic measure (ascending distance, ties to lower id)."""
    dist = pairwise(q_points, d_points, measure, eps=eps, threads=threads)
    if measure in SIMILARITY_MEASURES:
        dist = -dist
    out = []
    for i, row in enumerate(dist):
        ranked = rank_by_score(-row)
        if exclude is not None:
            ranked = ranked[ranked != exclude[i]]
        out.append(ranked[:k])
    return out


def similarity_hit_ratios(model, trajs, n_queries, ks=(1, 5, 10), measure="hausdorff", normalize=True,
                          threads=1):
    """HR@k of learned inner-product neighbors against a heuristic measure.

    The first ``n_queries`` trajectories query the whole set, self excluded.
    """
    net = model.net
    kmax = max(ks)
    if len(trajs) <= kmax:
        raise ValidationError(f"need more than {kmax} trajectories for HR@{kmax}")
    points = [traj_to_pointseq(t, net) for t in trajs]
    exclude = np.arange(n_queries)
    truth = topk_by_measure(points[:n_queries], points, measure, kmax, exclude, threads=threads)
    vecs = embed_dataset(model, trajs, normalize)
    pred = topk_by_vectors(vecs[:n_queries], vecs, kmax, exclude)
    return {f"hr@{k}": hit_ratio(truth, pred, k) for k in ks}
