import numpy as np

from redtraj.config import RedConfig
from redtraj.roadnet import RoadNetwork
from redtraj.trajdata import PathTrajectory

T0 = 1436000000


def micro_network():
    """Five segments, a ring plus two chords, with coordinates."""
    return RoadNetwork(
        length=[100.0, 250.0, 80.0, 300.0, 120.0],
        max_speed=[50.0, 60.0, 40.0, 80.0, 30.0],
        avg_travel_time=[7.0, 15.0, 7.0, 13.0, 14.0],
        direction=[0.0, 90.0, 180.0, 270.0, 45.0],
        seg_type=[0, 1, 2, 3, 4],
        edges=[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3), (2, 0)],
        coords=[(0, 0), (100, 0), (100, 100), (0, 100), (50, 50)],
    )


def micro_trajectories():
    return [
        PathTrajectory(0, [0, 1, 2, 3, 4, 0], [T0 + 30 * i for i in range(6)], [3, 0, 1, 5, 0, 2]),
        PathTrajectory(1, [1, 3, 4, 0, 1, 2, 3], [T0 + 50000 + 45 * i for i in range(7)], [0, 4, 1, 1, 2, 0, 3]),
        PathTrajectory(0, [2, 0, 1, 3, 4, 0], [T0 + 100000 + 20 * i for i in range(6)], [1, 1, 6, 0, 0, 2]),
    ]


def micro_config(**kw):
    base = dict(dim=8, enc_layers=1, dec_layers=1, heads=2, gat_heads=(2, 2, 1), dropout=0.0, seed=3)
    base.update(kw)
    return RedConfig(**base)


def jitter(model, scale=0.1, seed=0):
    """Move every parameter off its init (zeros, ones) so no gradient vanishes by symmetry."""
    rng = np.random.default_rng(seed)
    for _, p in model.named_parameters():
        p.data = p.data + rng.normal(0.0, scale, p.data.shape)
