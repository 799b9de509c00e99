"""Dual-objective pretraining and fine-tuning heads."""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import evaluation
from .config import RedConfig
from .errors import ContractViolation, TrainingError, ValidationError
from .masking import compute_thresholds, split_dataset_masks
from .numcore import ops
from .numcore.checkpoint import load_checkpoint, save_checkpoint
from .numcore.nn import Linear
from .numcore.optim import AdamW
from .seq2seq import RedModel, build_batch
from .trajdata import split_dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossReport:
    nsp: float
    tr: float
    total: float

    @classmethod
    def combine(cls, nsp, tr, lambda1):
        return cls(nsp, tr, lambda1 * nsp + (1.0 - lambda1) * tr)


def grouped_cross_entropy(logits, targets, groups):
    """Mean cross-entropy per group, then mean over groups.

    ``groups[i]`` names the trajectory that row ``i`` belongs to.
    """
    groups = np.asarray(groups)
    targets = np.asarray(targets)
    if len(groups) != logits.shape[0] or len(targets) != logits.shape[0]:
        raise ContractViolation(
            f"alignment mismatch: {logits.shape[0]} logit rows, {len(targets)} targets, {len(groups)} groups"
        )
    _, inverse, counts = np.unique(groups, return_inverse=True, return_counts=True)
    weights = 1.0 / (counts[inverse] * len(counts))
    return ops.cross_entropy(logits, targets, weights=weights)


def nsp_loss(enc_logits, batch):
    b, ne, c = enc_logits.shape
    rows = ops.take(ops.reshape(enc_logits, (b * ne, c)), batch.nsp_rows)
    return ops.cross_entropy(rows, batch.nsp_targets, weights=batch.nsp_weights)


def tr_loss(dec_logits, batch):
    b, t, c = dec_logits.shape
    rows = ops.take(ops.reshape(dec_logits, (b * t, c)), batch.tr_rows)
    return ops.cross_entropy(rows, batch.tr_targets, weights=batch.tr_weights)


def total_loss(model, batch, lambda1, use_bias=None):
    out = model.forward(batch, use_bias)
    nsp = nsp_loss(out.enc_logits, batch)
    tr = tr_loss(out.dec_logits, batch)
    total = ops.scale(nsp, lambda1) + ops.scale(tr, 1.0 - lambda1)
    return total, nsp, tr, out


def nsp_accuracy(enc_logits, batch):
    b, ne, c = enc_logits.shape
    pred = enc_logits.data.reshape(b * ne, c)[batch.nsp_rows].argmax(1)
    return int((pred == batch.nsp_targets).sum()), len(batch.nsp_targets)


# -------------------------------------------------------------- checkpoints


def model_config_block(model, user_ids=None, extra=None):
    block = {
        "model": model.cfg.to_dict(),
        "n_segments": model.net.n_segments,
        "n_users": model.embed.n_users,
        "user_ids": list(user_ids) if user_ids is not None else list(range(model.embed.n_users)),
    }
    if extra:
        block.update(extra)
    return block


def save_model(path, model, user_ids=None, extra=None):
    save_checkpoint(path, model.state_dict(), model_config_block(model, user_ids, extra))


def load_model(path, net):
    state, block = load_checkpoint(path)
    if block["n_segments"] != net.n_segments:
        raise ValidationError(
            f"checkpoint was trained on {block['n_segments']} segments, network has {net.n_segments}"
        )
    cfg = RedConfig.from_dict(block["model"])
    model = RedModel(net, block["n_users"], cfg)
    model.load_state_dict(state)
    return model, block


# ---------------------------------------------------------------- pretrain


@dataclass
class PretrainResult:
    model: RedModel
    history: list = field(default_factory=list)
    split: object = None
    thresholds: object = None
    checkpoint: str = None


def _batches(indices, size):
    for i in range(0, len(indices), size):
        yield indices[i : i + size]


def evaluate_pretrain(model, trajs, masks, net, lambda1, batch_size=64):
    """Loss report and NSP top-1 accuracy over a dataset, in eval mode."""
    was = model.training
    model.eval()
    try:
        nsp_sum = tr_sum = 0.0
        n = 0
        hits = total = 0
        idx = list(range(len(trajs)))
        for chunk in _batches(idx, batch_size):
            batch = build_batch([trajs[i] for i in chunk], net, [masks[i] for i in chunk])
            _, nsp, tr, out = total_loss(model, batch, lambda1)
            nsp_sum += nsp.item() * len(chunk)
            tr_sum += tr.item() * len(chunk)
            n += len(chunk)
            h, t = nsp_accuracy(out.enc_logits, batch)
            hits += h
            total += t
        report = LossReport.combine(nsp_sum / n, tr_sum / n, lambda1)
        return report, hits / max(total, 1)
    finally:
        model.train(was)


def pretrain(trajs, net, cfg, n_users=None, out_dir=None, user_ids=None, progress=None, split=None):
    """Train the masked autoencoder; returns the model and per-epoch history.

    History entry 0 is the validation report before any update. Each entry
    has ``epoch``, ``train`` (mean LossReport over batches, None at epoch 0),
    ``val`` (LossReport) and ``val_nsp_acc``.
    """
    if not trajs:
        raise ValidationError("no trajectories to train on")
    n_users = n_users if n_users is not None else max(t.user for t in trajs) + 1
    split = split or split_dataset(len(trajs), cfg.split, cfg.seed)
    train = [trajs[i] for i in split.train]
    val = [trajs[i] for i in split.validation] or train
    th = compute_thresholds(train, net)
    masks_train = split_dataset_masks(train, net, cfg.mask_strategy, th, cfg.mask_ratio, cfg.seed)
    masks_val = split_dataset_masks(val, net, cfg.mask_strategy, th, cfg.mask_ratio, cfg.seed + 7919)
    model = RedModel(net, n_users, cfg)
    opt = AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    result = PretrainResult(model, split=split, thresholds=th)

    def record(epoch, train_report):
        val_report, acc = evaluate_pretrain(model, val, masks_val, net, cfg.lambda1, cfg.batch_size)
        entry = {"epoch": epoch, "train": train_report, "val": val_report, "val_nsp_acc": acc}
        result.history.append(entry)
        if progress:
            progress(entry)
        log.info("epoch %d val total %.4f nsp %.4f tr %.4f acc %.4f",
                 epoch, val_report.total, val_report.nsp, val_report.tr, acc)

    record(0, None)
    model.train()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train))
        sums = np.zeros(2)
        nb = 0
        for bi, chunk in enumerate(_batches(order, cfg.batch_size)):
            batch = build_batch([train[i] for i in chunk], net, [masks_train[i] for i in chunk])
            opt.zero_grad()
            loss, nsp, tr, _ = total_loss(model, batch, cfg.lambda1)
            if not np.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}, lr {opt.lr}")
            loss.backward()
            opt.step()
            sums += (nsp.item(), tr.item())
            nb += 1
        train_report = LossReport.combine(sums[0] / nb, sums[1] / nb, cfg.lambda1)
        record(epoch, train_report)
        if out_dir:
            path = os.path.join(out_dir, f"epoch{epoch:03d}.ckpt.npz")
            save_model(path, model, user_ids)
            result.checkpoint = path
    model.eval()
    return result


# -------------------------------------------------------------- fine-tuning


@dataclass
class FinetuneResult:
    head: Linear
    metrics: dict
    history: list


def _finetune(model, trajs, targets, head, loss_fn, epochs, lr, batch_size, seed, freeze_encoder, strip_time):
    params = head.parameters() + ([] if freeze_encoder else model.parameters())
    opt = AdamW(params, lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    model.train()
    for _ in range(epochs):
        order = rng.permutation(len(trajs))
        losses = []
        for chunk in _batches(order, batch_size):
            batch = build_batch([trajs[i] for i in chunk], model.net, strip_time=strip_time)
            opt.zero_grad()
            model.zero_grad()
            if freeze_encoder:
                model.eval()
            rep = model.representation(batch, strip_time=strip_time, unseen_user="error")
            if freeze_encoder:
                rep = rep.detach()
            loss = loss_fn(head(rep), targets[chunk])
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    model.eval()
    return history


def predict_head(model, head, trajs, strip_time=False, batch_size=64):
    model.eval()
    spatial = model.embed.spatial()
    outs = []
    for i in range(0, len(trajs), batch_size):
        batch = build_batch(trajs[i : i + batch_size], model.net, strip_time=strip_time)
        outs.append(head(model.representation(batch, spatial, strip_time=strip_time)).data)
    return np.concatenate(outs, axis=0)


def finetune_classification(model, trajs, labels, n_classes, eval_trajs=None, eval_labels=None,
                            epochs=30, lr=1e-4, batch_size=64, seed=0, labels_are_users=True,
                            freeze_encoder=False):
    """Linear head on the trajectory vector trained with cross-entropy.

    When the labels are user ids the user encoding is switched off for both
    training and evaluation so the label cannot leak through the input.
    """
    if n_classes < 2:
        raise ValidationError("classification needs at least two classes")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValidationError("label outside 0..n_classes-1")
    if len(np.unique(labels)) < 2:
        raise ValidationError("training labels hold a single class")
    if labels_are_users:
        model.use_user = False
    head = Linear(model.dim, n_classes, np.random.default_rng(seed))

    def loss_fn(logits, y):
        return ops.cross_entropy(logits, y)

    history = _finetune(model, trajs, labels, head, loss_fn, epochs, lr, batch_size, seed, freeze_encoder, False)
    et = eval_trajs if eval_trajs is not None else trajs
    el = np.asarray(eval_labels if eval_labels is not None else labels)
    scores = predict_head(model, head, et)
    return FinetuneResult(head, evaluation.classification_metrics(scores, el, n_classes), history)


def travel_time_minutes(traj):
    return (int(traj.timestamps[-1]) - int(traj.timestamps[0])) / 60.0


def finetune_tte(model, trajs, eval_trajs=None, epochs=30, lr=1e-4, batch_size=64, seed=0, freeze_encoder=False):
    """Regress travel time (minutes) from the trajectory vector with MSE.

    Inputs keep the time encoding only at the departure step and drop the
    time-interval attention bias.
    """
    y = np.array([travel_time_minutes(t) for t in trajs])
    head = Linear(model.dim, 1, np.random.default_rng(seed))
    head.bias.data = np.array([y.mean()])

    def loss_fn(pred, target):
        diff = ops.reshape(pred, (-1,)) - target
        return ops.tmean(diff * diff)

    history = _finetune(model, trajs, y, head, loss_fn, epochs, lr, batch_size, seed, freeze_encoder, True)
    et = eval_trajs if eval_trajs is not None else trajs
    pred = predict_head(model, head, et, strip_time=True)[:, 0]
    truth = np.array([travel_time_minutes(t) for t in et])
    return FinetuneResult(head, evaluation.regression_metrics(pred, truth), history)
