"""Key-path / mask-path partitions of trajectories.

Road-aware masking keeps a step as a key step when its segment is *hot*
(more matched GPS points than the dataset average) or *long* (longer than
the network's average segment). Everything else is masked and must be
reconstructed by the decoder.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ValidationError


@dataclass(frozen=True)
class MaskThresholds:
    mean_gps_points: float
    mean_length: float


@dataclass(frozen=True)
class MaskSplit:
    key_indices: tuple
    mask_indices: tuple

    def __post_init__(self):
        k, m = self.key_indices, self.mask_indices
        if any(b <= a for a, b in zip(k, k[1:])) or any(b <= a for a, b in zip(m, m[1:])):
            raise ContractViolation("split indices must be strictly increasing")
        if set(k) & set(m):
            raise ContractViolation("key and mask positions overlap")

    def __len__(self):
        return len(self.key_indices) + len(self.mask_indices)

    def is_partition_of(self, n):
        return sorted(self.key_indices + self.mask_indices) == list(range(n))


def compute_thresholds(dataset, net):
    """Dataset-wide mean GPS count per step and network-wide mean segment length.

    Pass the training split only, so the thresholds never see test data.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("cannot compute masking thresholds on an empty dataset")
    total = sum(int(t.gps_counts.sum()) for t in dataset)
    steps = sum(len(t) for t in dataset)
    if steps == 0:
        raise ValidationError("dataset has no steps")
    return MaskThresholds(mean_gps_points=total / steps, mean_length=float(np.mean(net.length)))


def _with_fallbacks(is_key, gps, length):
    n = len(is_key)
    if n == 1:
        # a single step cannot be split into two non-empty sets; keep it
        return MaskSplit((0,), ())
    if not is_key.any():
        is_key[0] = is_key[-1] = True
    if is_key.all():
        # also reached from the endpoint rule on two-step trajectories
        # demote the least informative step: smallest (gps count, length), earliest on ties
        order = np.lexsort((np.arange(n), length, gps))
        is_key[order[0]] = False
    key = np.flatnonzero(is_key)
    mask = np.flatnonzero(~is_key)
    return MaskSplit(tuple(int(i) for i in key), tuple(int(i) for i in mask))


def road_aware_split(traj, net, th):
    gps = traj.gps_counts
    length = net.length[traj.segments]
    is_key = (gps > th.mean_gps_points) | (length > th.mean_length)
    return _with_fallbacks(is_key.copy(), gps, length)


def random_split(traj, ratio, seed, net=None):
    """Mask ``round(ratio * n)`` uniformly chosen steps.

    ``net`` is only needed to break ties for the all-key fallback by segment
    length; without it the tie-break uses GPS counts alone.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"mask ratio must lie in [0, 1], got {ratio}")
    n = len(traj)
    n_mask = int(round(ratio * n))
    rng = np.random.default_rng(seed)
    is_key = np.ones(n, dtype=bool)
    is_key[rng.choice(n, size=n_mask, replace=False)] = False
    length = net.length[traj.segments] if net is not None else np.zeros(n)
    return _with_fallbacks(is_key, traj.gps_counts, length)


def unshuffle_order(split):
    """Permutation sending ``key_indices + mask_indices`` back to original order.

    ``combined[order]`` restores the trajectory order when ``combined`` is the
    concatenation of key rows followed by mask rows.
    """
    concat = np.array(split.key_indices + split.mask_indices, dtype=np.int64)
    order = np.empty_like(concat)
    order[concat] = np.arange(len(concat))
    return order


def split_dataset_masks(trajs, net, strategy="road-aware", th=None, ratio=0.5, seed=0):
    """Fixed per-trajectory splits for a whole dataset."""
    if strategy == "road-aware":
        if th is None:
            raise ValidationError("road-aware masking needs thresholds")
        return [road_aware_split(t, net, th) for t in trajs]
    if strategy == "random":
        rng = np.random.default_rng(seed)
        seeds = rng.integers(0, 2**63 - 1, size=len(trajs))
        return [random_split(t, ratio, int(s), net) for t, s in zip(trajs, seeds)]
    raise ValidationError(f"unknown mask strategy {strategy!r}")
