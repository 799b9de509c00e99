"""Encoder/decoder Transformer with virtual tokens and time-distance attention bias.

Token vocabulary: real segments ``0..|V|-1``, then ``START = |V|`` (shared
with the virtual graph node), ``END = |V|+1`` and ``EXTRACT = |V|+2``.

Encoder input per trajectory is ``<START, key steps..., EXTRACT>`` under a
causal mask. Position ``j`` (START and each key step) predicts the next key
step, the last key step predicts END. The decoder sees every position of the
trajectory in original order: key positions carry encoder outputs, masked
positions carry a learned mask vector plus position and time encodings.
"""

from dataclasses import dataclass

import numpy as np

from .embedding import JointEmbedding, time_vector
from .errors import ContractViolation, ValidationError
from .numcore import ops
from .numcore.nn import Dropout, LayerNorm, Linear, Module
from .numcore.tensor import Parameter, Tensor
from .trajdata import validate_trajectory


def vocab_size(n_segments):
    return n_segments + 3


def special_tokens(n_segments):
    return {"START": n_segments, "END": n_segments + 1, "EXTRACT": n_segments + 2}


# ------------------------------------------------------------ interval bias


def f_time(m):
    """Time-interval correlation ``1 / ln(e + m/60)`` for ``m`` seconds."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ContractViolation("time interval must be non-negative")
    out = 1.0 / np.log(np.e + m / 60.0)
    return float(out) if out.ndim == 0 else out


def f_dist(m):
    """Distance-interval correlation ``1 / ln(e + m/1000)`` for ``m`` meters."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ContractViolation("distance interval must be non-negative")
    out = 1.0 / np.log(np.e + m / 1000.0)
    return float(out) if out.ndim == 0 else out


def step_midpoints(lengths):
    """Travel-distance coordinate of each segment's midpoint along the path."""
    lengths = np.asarray(lengths, dtype=np.float64)
    return np.cumsum(lengths) - lengths / 2.0


def interval_matrices(traj, net, positions=None):
    """Pairwise |time| and travel-distance intervals for a token layout.

    ``positions`` lists, per token, the step index it stands for or ``-1``
    for a virtual token (whose rows and columns are zero). Defaults to the
    plain step sequence.
    """
    if positions is None:
        positions = np.arange(len(traj))
    positions = np.asarray(positions, dtype=np.int64)
    real = positions >= 0
    p = np.where(real, positions, 0)
    ts = traj.timestamps.astype(np.float64)[p]
    mid = step_midpoints(net.length[traj.segments])[p]
    both = real[:, None] & real[None, :]
    mt = np.where(both, np.abs(ts[:, None] - ts[None, :]), 0.0)
    md = np.where(both, np.abs(mid[:, None] - mid[None, :]), 0.0)
    return mt, md


@dataclass
class AttentionBias:
    time: Tensor
    dist: Tensor
    combined: Tensor


class BiasProjection(Module):
    """Lifts each correlation value to a hidden vector and back to a scalar.

    The two maps are affine with no nonlinearity in between, so the pair is
    evaluated through its composed coefficients.
    """

    def __init__(self, dim, rng):
        h = max(dim // 2, 1)
        self.time_in = Linear(1, h, rng)
        self.time_out = Linear(h, 1, rng)
        self.dist_in = Linear(1, h, rng)
        self.dist_out = Linear(h, 1, rng)

    @staticmethod
    def _lift(f, first, second):
        slope = ops.matmul(first.weight, second.weight)
        offset = ops.matmul(ops.reshape(first.bias, (1, -1)), second.weight) + second.bias
        shape = f.shape
        return ops.reshape(ops.mul(Tensor(f.reshape(-1, 1)), slope) + offset, shape)

    def zero_(self):
        for p in self.parameters():
            p.data = np.zeros_like(p.data)

    def __call__(self, f_t, f_d, pair_mask, lambda2, use_time=True):
        if not 0.0 <= lambda2 <= 1.0:
            raise ValidationError(f"lambda2 must lie in [0, 1], got {lambda2}")
        a_d = self._lift(f_d, self.dist_in, self.dist_out) * pair_mask
        if use_time:
            a_t = self._lift(f_t, self.time_in, self.time_out) * pair_mask
            combined = ops.scale(a_t, 1.0 - lambda2) + ops.scale(a_d, lambda2)
        else:
            a_t = Tensor(np.zeros(f_t.shape))
            combined = ops.scale(a_d, lambda2)
        return AttentionBias(a_t, a_d, combined)


def bias_matrix(mt, md, lambda2, projection, use_time=True):
    """Single-sequence attention bias from raw interval matrices."""
    f_t = f_time(mt)
    f_d = f_dist(md)
    mask = np.ones_like(f_t)
    return projection(np.asarray(f_t), np.asarray(f_d), mask, lambda2, use_time)


# -------------------------------------------------------------- transformer


class MultiHeadAttention(Module):
    def __init__(self, dim, heads, rng):
        if dim % heads:
            raise ContractViolation(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)
        self.last_attention = None

    def __call__(self, x, allowed, bias=None):
        b, n, d = x.shape
        h = self.heads
        dh = d // h

        def split(t):
            return ops.transpose(ops.reshape(t, (b, n, h, dh)), (0, 2, 1, 3))

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        if bias is not None:
            scores = scores + ops.reshape(bias, (b, 1, n, n))
        attn = ops.softmax(scores, axis=-1, mask=allowed)
        self.last_attention = attn.data
        out = ops.reshape(ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3)), (b, n, d))
        return self.wo(out)


class TransformerLayer(Module):
    """Post-norm block: attention and feed-forward sublayers with residuals."""

    def __init__(self, dim, heads, ffn_mult, dropout, rng, drop_rng):
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ff1 = Linear(dim, dim * ffn_mult, rng)
        self.ff2 = Linear(dim * ffn_mult, dim, rng)
        self.norm2 = LayerNorm(dim)
        self.drop = Dropout(dropout, drop_rng)

    def __call__(self, x, allowed, bias=None):
        x = self.norm1(x + self.drop(self.attn(x, allowed, bias)))
        return self.norm2(x + self.drop(self.ff2(ops.gelu(self.ff1(x)))))


def positional_encoding(positions, dim):
    positions = np.asarray(positions, dtype=np.float64)
    i = np.arange(dim // 2, dtype=np.float64)
    freq = np.exp(-np.log(10000.0) * (2 * i) / dim)
    ang = positions[..., None] * freq
    pe = np.zeros(positions.shape + (dim,))
    pe[..., 0::2] = np.sin(ang)
    pe[..., 1::2] = np.cos(ang)
    return pe


# ------------------------------------------------------------------ batches


@dataclass
class Batch:
    """Numeric layout of a mini-batch; every field is a numpy array."""

    n_traj: int
    # flat steps of all trajectories in the batch
    seg: np.ndarray
    ts: np.ndarray
    user: np.ndarray
    time_keep: np.ndarray
    # encoder tokens [B, ne]; table rows: steps (N), START, EXTRACT, zero pad
    enc_idx: np.ndarray
    enc_pos: np.ndarray
    enc_valid: np.ndarray
    enc_ft: np.ndarray
    enc_fd: np.ndarray
    enc_pairs: np.ndarray
    extract_col: np.ndarray
    nsp_rows: np.ndarray
    nsp_targets: np.ndarray
    nsp_weights: np.ndarray
    # decoder tokens [B, T]; table rows: encoder outputs (B*ne), mask rows, zero pad
    dec_idx: np.ndarray = None
    dec_valid: np.ndarray = None
    dec_ft: np.ndarray = None
    dec_fd: np.ndarray = None
    dec_pairs: np.ndarray = None
    mask_steps: np.ndarray = None
    mask_pos: np.ndarray = None
    tr_rows: np.ndarray = None
    tr_targets: np.ndarray = None
    tr_weights: np.ndarray = None


def _fill_f(traj, net, tokens, out_t, out_d, out_pairs, b, time_keep_all):
    mt, md = interval_matrices(traj, net, tokens)
    real = np.asarray(tokens) >= 0
    n = len(tokens)
    out_t[b, :n, :n] = f_time(mt)
    out_d[b, :n, :n] = f_dist(md)
    out_pairs[b, :n, :n] = real[:, None] & real[None, :]


def build_batch(trajs, net, splits=None, strip_time=False):
    """Lay out trajectories for the encoder (and the decoder when ``splits``).

    ``splits=None`` encodes every step (inference layout). ``strip_time``
    keeps the time encoding only at each trajectory's first step.
    """
    n_seg = net.n_segments
    tok = special_tokens(n_seg)
    b = len(trajs)
    if b == 0:
        raise ValidationError("empty batch")
    lens = np.array([len(t) for t in trajs])
    offsets = np.concatenate([[0], np.cumsum(lens)])
    n_steps = int(offsets[-1])
    seg = np.concatenate([t.segments for t in trajs])
    ts = np.concatenate([t.timestamps for t in trajs])
    user = np.concatenate([np.full(len(t), t.user) for t in trajs])
    time_keep = np.ones(n_steps)
    if strip_time:
        time_keep[:] = 0.0
        time_keep[offsets[:-1]] = 1.0
    keys = [np.arange(n) if splits is None else np.asarray(s.key_indices, dtype=np.int64) for n, s in
            zip(lens, splits if splits is not None else [None] * b)]
    for k, n in zip(keys, lens):
        if len(k) == 0:
            raise ContractViolation("encoder needs at least one key step")
    ne = max(len(k) for k in keys) + 2
    start_row, extract_row, pad_row = n_steps, n_steps + 1, n_steps + 2
    enc_idx = np.full((b, ne), pad_row)
    enc_pos = np.zeros((b, ne))
    enc_valid = np.zeros((b, ne), dtype=bool)
    enc_ft = np.zeros((b, ne, ne))
    enc_fd = np.zeros((b, ne, ne))
    enc_pairs = np.zeros((b, ne, ne))
    extract_col = np.zeros(b, dtype=np.int64)
    nsp_rows, nsp_targets, nsp_weights = [], [], []
    for i, (t, k) in enumerate(zip(trajs, keys)):
        nk = len(k)
        enc_idx[i, 0] = start_row
        enc_idx[i, 1 : nk + 1] = offsets[i] + k
        enc_idx[i, nk + 1] = extract_row
        enc_pos[i, 1 : nk + 1] = k + 1
        enc_pos[i, nk + 1] = len(t) + 1
        enc_valid[i, : nk + 2] = True
        extract_col[i] = nk + 1
        tokens = np.concatenate([[-1], k, [-1]])
        _fill_f(t, net, tokens, enc_ft, enc_fd, enc_pairs, i, None)
        nsp_rows.extend(i * ne + j for j in range(nk + 1))
        nsp_targets.extend(list(t.segments[k]) + [tok["END"]])
        nsp_weights.extend([1.0 / ((nk + 1) * b)] * (nk + 1))
    if strip_time:
        enc_ft[:] = 0.0
    batch = Batch(
        n_traj=b, seg=seg, ts=ts, user=user, time_keep=time_keep,
        enc_idx=enc_idx, enc_pos=enc_pos, enc_valid=enc_valid, enc_ft=enc_ft, enc_fd=enc_fd,
        enc_pairs=enc_pairs, extract_col=extract_col,
        nsp_rows=np.array(nsp_rows, dtype=np.int64), nsp_targets=np.array(nsp_targets, dtype=np.int64),
        nsp_weights=np.array(nsp_weights),
    )
    if splits is None:
        return batch
    tmax = int(lens.max())
    n_mask = sum(len(s.mask_indices) for s in splits)
    mask_base = b * ne
    dec_idx = np.full((b, tmax), mask_base + n_mask)
    dec_valid = np.zeros((b, tmax), dtype=bool)
    dec_ft = np.zeros((b, tmax, tmax))
    dec_fd = np.zeros((b, tmax, tmax))
    dec_pairs = np.zeros((b, tmax, tmax))
    mask_steps, mask_pos = [], []
    tr_rows, tr_targets, tr_weights = [], [], []
    m = 0
    for i, (t, s) in enumerate(zip(trajs, splits)):
        n = len(t)
        if len(s.key_indices) + len(s.mask_indices) != n:
            raise ContractViolation("key + mask positions do not cover the trajectory")
        for rank, pos in enumerate(s.key_indices):
            dec_idx[i, pos] = i * ne + rank + 1
        for pos in s.mask_indices:
            dec_idx[i, pos] = mask_base + m
            mask_steps.append(offsets[i] + pos)
            mask_pos.append(pos + 1)
            m += 1
        dec_valid[i, :n] = True
        _fill_f(t, net, np.arange(n), dec_ft, dec_fd, dec_pairs, i, None)
        tr_rows.extend(i * tmax + j for j in range(n))
        tr_targets.extend(t.segments)
        tr_weights.extend([1.0 / (n * b)] * n)
    batch.dec_idx = dec_idx
    batch.dec_valid = dec_valid
    batch.dec_ft = dec_ft
    batch.dec_fd = dec_fd
    batch.dec_pairs = dec_pairs
    batch.mask_steps = np.array(mask_steps, dtype=np.int64)
    batch.mask_pos = np.array(mask_pos, dtype=np.float64)
    batch.tr_rows = np.array(tr_rows, dtype=np.int64)
    batch.tr_targets = np.array(tr_targets, dtype=np.int64)
    batch.tr_weights = np.array(tr_weights)
    return batch


def unshuffle(key_rows, mask_rows, split):
    """Interleave key and mask rows back into trajectory order."""
    from .masking import unshuffle_order

    combined = list(key_rows) + list(mask_rows)
    if len(combined) != len(split.key_indices) + len(split.mask_indices):
        raise ContractViolation("row count does not match the split")
    order = unshuffle_order(split)
    return [combined[i] for i in order]


# -------------------------------------------------------------------- model


@dataclass
class ForwardOutput:
    enc_hidden: Tensor
    enc_logits: Tensor
    dec_logits: Tensor = None
    enc_bias: list = None
    dec_bias: list = None


class RedModel(Module):
    def __init__(self, net, n_users, cfg):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.drop_rng = np.random.default_rng(cfg.seed + 1)
        d = cfg.dim
        self.net = net
        self.embed = JointEmbedding(net, d, n_users, cfg.gat_heads, rng)
        self.extract_vec = Parameter(rng.normal(0.0, 0.02, d))
        self.mask_vec = Parameter(rng.normal(0.0, 0.02, d))
        self.encoder = [TransformerLayer(d, cfg.heads, cfg.ffn_mult, cfg.dropout, rng, self.drop_rng)
                        for _ in range(cfg.enc_layers)]
        self.decoder = [TransformerLayer(d, cfg.heads, cfg.ffn_mult, cfg.dropout, rng, self.drop_rng)
                        for _ in range(cfg.dec_layers)]
        self.enc_bias = [BiasProjection(d, rng) for _ in range(cfg.enc_layers)]
        self.dec_bias = [BiasProjection(d, rng) for _ in range(cfg.dec_layers)]
        self.head = Linear(d, vocab_size(net.n_segments), rng)
        self.dec_head = None if cfg.tie_heads else Linear(d, vocab_size(net.n_segments), rng)
        self.emb_drop = Dropout(cfg.dropout, self.drop_rng)
        self.use_user = True

    @property
    def dim(self):
        return self.cfg.dim

    def zero_bias_projections(self):
        for p in self.enc_bias + self.dec_bias:
            p.zero_()

    def _bias(self, proj, f_t, f_d, pairs, use_time, enabled):
        if not enabled:
            return None
        return proj(f_t, f_d, pairs, self.cfg.lambda2, use_time)

    def encode(self, batch, spatial=None, use_bias=None, strip_time=False, unseen_user="error"):
        """Encoder hidden states [B, ne, dim] plus the per-layer bias terms."""
        use_bias = self.cfg.time_distance_bias if use_bias is None else use_bias
        spatial = self.embed.spatial() if spatial is None else spatial
        steps = self.embed.steps(spatial, batch.seg, batch.ts, batch.user, use_user=self.use_user,
                                 time_keep=batch.time_keep, unseen_user=unseen_user)
        d = self.cfg.dim
        start = ops.take(spatial, [self.net.virtual_start])
        table = ops.concat([steps, start, ops.reshape(self.extract_vec, (1, d)), Tensor(np.zeros((1, d)))], axis=0)
        x = ops.take(table, batch.enc_idx) + positional_encoding(batch.enc_pos, d)
        x = self.emb_drop(x)
        ne = batch.enc_idx.shape[1]
        causal = np.tril(np.ones((ne, ne), dtype=bool))
        allowed = batch.enc_valid[:, None, None, :] & causal[None, None]
        biases = []
        for layer, proj in zip(self.encoder, self.enc_bias):
            bias = self._bias(proj, batch.enc_ft, batch.enc_fd, batch.enc_pairs, not strip_time, use_bias)
            biases.append(bias)
            x = layer(x, allowed, None if bias is None else bias.combined)
        return x, biases

    def logits(self, hidden, decoder=False):
        head = self.dec_head if (decoder and self.dec_head is not None) else self.head
        return head(hidden)

    def decode(self, batch, enc_hidden, spatial, use_bias=None):
        use_bias = self.cfg.time_distance_bias if use_bias is None else use_bias
        b, ne, d = enc_hidden.shape
        flat = ops.reshape(enc_hidden, (b * ne, d))
        n_mask = len(batch.mask_steps)
        rows = ops.reshape(self.mask_vec, (1, d)) + positional_encoding(batch.mask_pos, d)
        if n_mask and self.cfg.mask_time_encoding:
            ms = batch.mask_steps
            rows = rows + self.embed.time(time_vector(batch.ts[ms]), self.net.seg_type[batch.seg[ms]],
                                          type_keep=np.zeros(n_mask))
        if n_mask == 0:
            rows = Tensor(np.zeros((0, d)))
        table = ops.concat([flat, rows, Tensor(np.zeros((1, d)))], axis=0)
        y = ops.take(table, batch.dec_idx)
        allowed = batch.dec_valid[:, None, None, :]
        biases = []
        for layer, proj in zip(self.decoder, self.dec_bias):
            bias = self._bias(proj, batch.dec_ft, batch.dec_fd, batch.dec_pairs, True, use_bias)
            biases.append(bias)
            y = layer(y, allowed, None if bias is None else bias.combined)
        return y, biases

    def forward(self, batch, use_bias=None):
        spatial = self.embed.spatial()
        hidden, enc_b = self.encode(batch, spatial, use_bias)
        out = ForwardOutput(hidden, self.logits(hidden), enc_bias=enc_b)
        if batch.dec_idx is not None:
            dec_hidden, dec_b = self.decode(batch, hidden, spatial, use_bias)
            out.dec_logits = self.logits(dec_hidden, decoder=True)
            out.dec_bias = dec_b
        return out

    def representation(self, batch, spatial=None, strip_time=False, unseen_user="zero"):
        """[EXTRACT] hidden state per trajectory, shape [B, dim]."""
        hidden, _ = self.encode(batch, spatial, strip_time=strip_time, unseen_user=unseen_user)
        b, ne, d = hidden.shape
        return ops.take(ops.reshape(hidden, (b * ne, d)), np.arange(b) * ne + batch.extract_col)


def infer_representation(model, trajs, batch_size=64, strip_time=False):
    """Trajectory vectors [n, dim] from the encoder over complete trajectories."""
    was_training = model.training
    model.eval()
    try:
        spatial = model.embed.spatial()
        out = []
        for i in range(0, len(trajs), batch_size):
            chunk = trajs[i : i + batch_size]
            for t in chunk:
                validate_trajectory(t, model.net, check_length=False)
            batch = build_batch(chunk, model.net, strip_time=strip_time)
            out.append(model.representation(batch, spatial, strip_time=strip_time).data)
        return np.concatenate(out, axis=0) if out else np.zeros((0, model.dim))
    finally:
        model.train(was_training)
