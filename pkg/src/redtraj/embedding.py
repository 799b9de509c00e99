"""Spatial (graph attention), time and user encodings summed per trajectory step."""

import numpy as np

from .errors import ContractViolation, ValidationError
from .numcore import ops
from .numcore.nn import Embedding, Linear, Module, xavier_uniform
from .numcore.tensor import Parameter, Tensor
from .roadnet import FEATURE_DIM, SEG_TYPES


class GatLayer(Module):
    """Multi-head graph attention; heads are concatenated or averaged."""

    def __init__(self, d_in, d_out, heads, rng, concat=True):
        if concat and d_out % heads:
            raise ContractViolation(f"output dim {d_out} not divisible by {heads} heads")
        self.heads = heads
        self.concat = concat
        self.d_head = d_out // heads if concat else d_out
        self.weight = Parameter(xavier_uniform(rng, d_in, heads * self.d_head))
        self.att_src = Parameter(xavier_uniform(rng, heads, self.d_head))
        self.att_dst = Parameter(xavier_uniform(rng, heads, self.d_head))
        self.bias = Parameter(np.zeros(d_out))

    def __call__(self, x, src, dst):
        n = x.shape[0]
        z = ops.reshape(ops.matmul(x, self.weight), (n, self.heads, self.d_head))
        s_src = ops.tsum(z * self.att_src, axis=-1)
        s_dst = ops.tsum(z * self.att_dst, axis=-1)
        logits = ops.leaky_relu(ops.take(s_src, src) + ops.take(s_dst, dst), 0.2)
        # per-destination max shift keeps exp bounded; it cancels in the ratio
        shift = np.full((n, self.heads), -np.inf)
        np.maximum.at(shift, dst, logits.data)
        ex = ops.exp(logits - shift[dst])
        alpha = ex / ops.take(ops.segment_sum(ex, dst, n), dst)
        msg = ops.take(z, src) * ops.reshape(alpha, (len(src), self.heads, 1))
        out = ops.segment_sum(msg, dst, n)
        if self.concat:
            out = ops.reshape(out, (n, self.heads * self.d_head))
        else:
            out = ops.tmean(out, axis=1)
        return out + self.bias


def message_edges(net):
    """(src, dst) pairs for neighbor aggregation, self-loops included.

    A real segment aggregates over its real in-neighbors; the virtual START
    node aggregates over every real segment.
    """
    n = net.n_segments
    nodes = np.arange(n + 1)
    real = np.arange(n)
    src = np.concatenate([net.edges[:, 0], real, nodes])
    dst = np.concatenate([net.edges[:, 1], np.full(n, n), nodes])
    return src, dst


class GatStack(Module):
    def __init__(self, dim, heads=(8, 16, 1), rng=None, d_in=FEATURE_DIM):
        rng = rng or np.random.default_rng(0)
        self.heads = tuple(heads)
        self.layers = []
        d = d_in
        for i, h in enumerate(self.heads):
            last = i == len(self.heads) - 1
            self.layers.append(GatLayer(d, dim, h, rng, concat=not last))
            d = dim

    def __call__(self, features, src, dst):
        x = features if isinstance(features, Tensor) else Tensor(features)
        for i, layer in enumerate(self.layers):
            x = layer(x, src, dst)
            if i < len(self.layers) - 1:
                x = ops.elu(x)
        return x


def spatial_encode(net, gat):
    """Embeddings for all ``|V| + 1`` nodes (virtual START last)."""
    src, dst = message_edges(net)
    return gat(net.feature_matrix(), src, dst)


def time_vector(t):
    """[hour, minute, second, year, month, day] of UTC timestamps, scaled to ~[0, 1].

    Accepts a scalar or an array; returns shape ``(..., 6)``.
    """
    t = np.asarray(t, dtype=np.int64)
    if np.any(t < 0):
        raise ValidationError("timestamps must be non-negative")
    sec = t % 60
    minute = (t // 60) % 60
    hour = (t // 3600) % 24
    dt = t.astype("datetime64[s]")
    months = dt.astype("datetime64[M]")
    year = months.astype("datetime64[Y]").astype(np.int64) + 1970
    month = months.astype(np.int64) % 12 + 1
    day = (dt.astype("datetime64[D]") - months.astype("datetime64[D]")).astype(np.int64) + 1
    return np.stack(
        [hour / 23.0, minute / 59.0, sec / 59.0, (year - 2000) / 100.0, (month - 1) / 11.0, (day - 1) / 30.0],
        axis=-1,
    )


class TimeEncoder(Module):
    """``FC(FC1(v) || sin(FC2(v)) || E_type[type])`` for a time vector ``v``."""

    def __init__(self, dim, rng):
        if dim % 4:
            raise ContractViolation(f"embedding dim {dim} must be divisible by 4")
        self.dim = dim
        self.fc1 = Linear(6, dim // 4, rng)
        self.fc2 = Linear(6, dim // 4, rng)
        self.type_table = Embedding(len(SEG_TYPES), dim // 2, rng)
        self.fc = Linear(dim, dim, rng)

    def __call__(self, tvec, seg_type, time_keep=None, type_keep=None):
        """``time_keep`` / ``type_keep`` (bool per row) zero the time or type half."""
        tv = Tensor(tvec)
        et = ops.concat([self.fc1(tv), ops.sin(self.fc2(tv))], axis=-1)
        if time_keep is not None:
            et = et * np.asarray(time_keep, dtype=np.float64)[:, None]
        seg_type = np.asarray(seg_type, dtype=np.int64)
        if seg_type.size and (seg_type.min() < 0 or seg_type.max() >= len(SEG_TYPES)):
            raise ValidationError("unknown segment type")
        ep = self.type_table(seg_type)
        if type_keep is not None:
            ep = ep * np.asarray(type_keep, dtype=np.float64)[:, None]
        return self.fc(ops.concat([et, ep], axis=-1))


def time_encode(t, seg_type, enc):
    if isinstance(seg_type, str):
        if seg_type not in SEG_TYPES:
            raise ValidationError(f"unknown segment type {seg_type!r}")
        seg_type = SEG_TYPES.index(seg_type)
    out = enc(time_vector(np.atleast_1d(t)), np.atleast_1d(seg_type))
    return out.data[0] if np.ndim(t) == 0 else out


class JointEmbedding(Module):
    """x_i = spatial[v_i] + time(t_i, type(v_i)) + user[u]."""

    def __init__(self, net, dim, n_users, gat_heads=(8, 16, 1), rng=None):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.gat = GatStack(dim, gat_heads, rng)
        self.time = TimeEncoder(dim, rng)
        self.users = Embedding(max(n_users, 1), dim, rng)
        self.n_users = n_users
        self._net = net
        self._edges = message_edges(net)

    @property
    def net(self):
        return self._net

    def spatial(self):
        return self.gat(self._net.feature_matrix(), *self._edges)

    def user_rows(self, users, unseen="error"):
        users = np.asarray(users, dtype=np.int64)
        known = (users >= 0) & (users < self.n_users)
        if not known.all():
            if unseen == "error":
                raise ValidationError(f"user id outside the {self.n_users}-row user table")
            rows = self.users(np.where(known, users, 0))
            return rows * known.astype(np.float64)[:, None]
        return self.users(users)

    def steps(self, spatial, segments, timestamps, users, use_user=True, time_keep=None,
              unseen_user="error", parts=("spatial", "time", "user")):
        """Joint embeddings [N, dim] for flat arrays of N steps.

        ``parts`` selects which of the three additive components to include.
        """
        segments = np.asarray(segments, dtype=np.int64)
        total = None
        if "spatial" in parts:
            total = ops.take(spatial, segments)
        if "time" in parts:
            t = self.time(time_vector(timestamps), self._net.seg_type[segments], time_keep)
            total = t if total is None else total + t
        if use_user and "user" in parts:
            u = self.user_rows(users, unseen_user)
            total = u if total is None else total + u
        if total is None:
            total = Tensor(np.zeros((len(segments), self.dim)))
        return total


def joint_embed(emb, traj, use_user=True, spatial=None, parts=("spatial", "time", "user")):
    """Per-step joint embedding of one trajectory, shape [len(traj), dim]."""
    spatial = emb.spatial() if spatial is None else spatial
    users = np.full(len(traj), traj.user)
    return emb.steps(spatial, traj.segments, traj.timestamps, users, use_user=use_user, parts=parts)
