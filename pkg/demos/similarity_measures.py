# %% [markdown]
# The seven heuristic distances on two short polylines, and how their cost
# grows with sequence length.

# %%
import time

import numpy as np

from redtraj.simbaselines import MEASURES, measure_fn

a = np.array([[0, 0], [100, 0], [200, 0], [300, 50]], dtype=float)
b = np.array([[0, 30], [150, 30], [300, 80]], dtype=float)
for name in sorted(MEASURES):
    print(f"{name:10s} {measure_fn(name, eps=50.0)(a, b):10.3f}")

# %%
rng = np.random.default_rng(0)
dtw = measure_fn("dtw")
for n in (250, 500, 1000, 2000):
    x, y = rng.uniform(0, 1000, (n, 2)), rng.uniform(0, 1000, (n, 2))
    dtw(x[:3], y[:3])
    t0 = time.perf_counter()
    dtw(x, y)
    print(f"n={n:5d}  {1000 * (time.perf_counter() - t0):7.2f} ms")
