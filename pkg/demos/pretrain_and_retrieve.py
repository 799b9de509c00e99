# %% [markdown]
# Pretrain a small model on a synthetic grid city, then check that it finds
# each trajectory's downsampled twin in a database.

# %%
import numpy as np

from redtraj import RedConfig, generate_synthetic
from redtraj.evaluation import build_retrieval, evaluate_retrieval
from redtraj.seq2seq import RedModel
from redtraj.training import pretrain

net, trajs = generate_synthetic(6, 6, 600, 5, seed=0)
print(net.n_segments, "segments,", len(trajs), "trajectories,", int(np.mean([len(t) for t in trajs])), "steps on average")

# %%
cfg = RedConfig(dim=32, enc_layers=2, dec_layers=2, heads=4, epochs=4, batch_size=32, lr=3e-3, seed=0)
res = pretrain(trajs, net, cfg, progress=lambda e: print(f"epoch {e['epoch']}  val total {e['val'].total:.3f}"))

# %% [markdown]
# Queries keep 90% of their steps; their twins sit at ids 0..99 of the database.

# %%
pick = np.random.default_rng(1).permutation(len(trajs))
setup = build_retrieval([trajs[i] for i in pick[:100]], [trajs[i] for i in pick[100:500]], p=0.1, seed=1)
fresh = RedModel(net, res.model.embed.n_users, cfg)
print("mean rank, trained  :", evaluate_retrieval(res.model, setup).mean_rank)
print("mean rank, untrained:", evaluate_retrieval(fresh, setup).mean_rank)
