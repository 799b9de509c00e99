# %% [markdown]
# Road-aware masking keeps hot segments (many GPS fixes) and long segments as
# encoder input and hides the rest for the decoder to reconstruct.

# %%
import numpy as np

from redtraj.masking import MaskThresholds, random_split, road_aware_split
from redtraj.roadnet import RoadNetwork
from redtraj.trajdata import PathTrajectory

lengths = [60.0, 50.0, 40.0, 70.0, 80.0, 45.0, 260.0]
gps = [6, 0, 0, 5, 4, 1, 2]
n = len(lengths)
net = RoadNetwork(lengths, [50.0] * n, [10.0] * n, [0.0] * n, [0] * n, [(i, i + 1) for i in range(n - 1)])
traj = PathTrajectory(0, range(n), range(0, 10 * n, 10), gps)
th = MaskThresholds(mean_gps_points=float(np.mean(gps)), mean_length=float(np.mean(lengths)))
print(f"thresholds: gps > {th.mean_gps_points:.2f} or length > {th.mean_length:.1f}")

# %%
split = road_aware_split(traj, net, th)
for i in range(n):
    role = "key " if i in split.key_indices else "mask"
    print(f"s{i + 1}  {role}  gps={gps[i]}  length={lengths[i]:.0f}")

# %% [markdown]
# Random masking at the same ratio ignores the road attributes.

# %%
print("random:", random_split(traj, len(split.mask_indices) / n, seed=0))
