"""Command-line entry point: ``redtraj <command> [flags]``.

Exit codes: 0 success, 1 invalid input or arguments, 2 file-system errors.
"""

import argparse
import logging
import os
import struct
import sys

import numpy as np

from . import evaluation, simbaselines
from .config import RedConfig, format_config, load_config, parse_overrides
from .errors import UnsupportedOperation, ValidationError
from .roadnet import load_network, save_network
from .trajdata import generate_synthetic, load_trajectories, save_trajectories, split_dataset

log = logging.getLogger("redtraj")

NETWORK_FILE = "network.txt"
TRAJ_FILE = "trajectories.jsonl"


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


# ------------------------------------------------------------------ helpers


def _data_paths(args):
    net_path = args.network or os.path.join(args.data, NETWORK_FILE)
    traj_path = args.trajectories or os.path.join(args.data, TRAJ_FILE)
    return net_path, traj_path


def _load_data(args, user_ids=None):
    net_path, traj_path = _data_paths(args)
    net = load_network(net_path)
    trajs, report = load_trajectories(traj_path, net, user_ids)
    log.info("loaded %d trajectories (%d skipped) over %d segments", len(trajs), report.skipped, net.n_segments)
    if not trajs:
        raise ValidationError(f"{traj_path}: no usable trajectories")
    return net, trajs, report


def _resolve_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RedConfig()
    pairs = {}
    for key in ("dim", "enc_layers", "dec_layers", "heads", "epochs", "batch_size", "lr", "lambda1",
                "lambda2", "mask_strategy", "mask_ratio", "dropout"):
        v = getattr(args, key, None)
        if v is not None:
            pairs[key] = str(v)
    if getattr(args, "tie_heads", None) is not None:
        pairs["tie_heads"] = str(args.tie_heads)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v
    changes = parse_overrides(pairs)
    changes["seed"] = args.seed
    return cfg.replace(**changes)


def _echo(title, values, stream):
    print(f"[{title}]", file=stream)
    for k, v in values.items():
        print(f"{k} = {v}", file=stream)


def _echo_args(args):
    vals = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    _echo("config", vals, sys.stderr)


def _report(config, metrics, stream=None):
    """Structured text report: a [config] block then a [metrics] block, stable order."""
    stream = stream or sys.stdout
    _echo("config", config, stream)
    print(file=stream)
    _echo("metrics", {k: _fmt(v) for k, v in metrics.items()}, stream)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def parse_report(text):
    """Inverse of the report format: {section: {key: value-string}}."""
    out = {}
    section = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = out.setdefault(line[1:-1], {})
        elif "=" in line and section is not None:
            k, v = line.split("=", 1)
            section[k.strip()] = v.strip()
    return out


def write_embeddings(path, vecs, ids):
    """Binary matrix: uint64 count, uint64 dim, then row-major little-endian float64."""
    vecs = np.ascontiguousarray(vecs, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", vecs.shape[0], vecs.shape[1]))
        fh.write(vecs.tobytes())
    with open(path + ".idx", "w", encoding="utf-8") as fh:
        for i in ids:
            fh.write(f"{i}\n")


def read_embeddings(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16:
            raise ValidationError(f"{path}: truncated header")
        n, d = struct.unpack("<QQ", head)
        body = fh.read()
    if len(body) != n * d * 8:
        raise ValidationError(f"{path}: expected {n}x{d} values, found {len(body) // 8}")
    vecs = np.frombuffer(body, dtype="<f8").reshape(n, d).copy()
    with open(path + ".idx", encoding="utf-8") as fh:
        ids = [int(x) for x in fh.read().split()]
    return vecs, ids


def _pick(trajs, indices):
    return [trajs[i] for i in indices]


# ----------------------------------------------------------------- commands


def cmd_generate(args):
    rows, cols = _parse_grid(args.grid)
    net, trajs = generate_synthetic(rows, cols, args.traj, args.users, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_network(net, os.path.join(args.out, NETWORK_FILE))
    save_trajectories(trajs, os.path.join(args.out, TRAJ_FILE))
    print(f"wrote {net.n_segments} segments and {len(trajs)} trajectories to {args.out}")
    return 0


def _parse_grid(text):
    try:
        r, c = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise ValidationError(f"--grid expects RxC, got {text!r}") from None
    if r < 2 or c < 2:
        raise ValidationError("grid needs at least 2x2 intersections")
    return r, c


def cmd_config(args):
    cfg = _resolve_config(args)
    sys.stdout.write(format_config(cfg))
    return 0


def cmd_pretrain(args):
    from .training import pretrain, save_model

    cfg = _resolve_config(args)
    sys.stderr.write(format_config(cfg))
    net, trajs, report = _load_data(args)
    os.makedirs(args.out, exist_ok=True)

    def progress(entry):
        tr = entry["train"]
        v = entry["val"]
        print(f"epoch {entry['epoch']} train_total {tr.total if tr else float('nan'):.6f} "
              f"val_total {v.total:.6f} val_nsp {v.nsp:.6f} val_tr {v.tr:.6f} "
              f"val_nsp_acc {entry['val_nsp_acc']:.4f}", flush=True)

    result = pretrain(trajs, net, cfg, n_users=len(report.user_ids), out_dir=args.out,
                      user_ids=report.user_ids, progress=progress)
    final = os.path.join(args.out, "model.ckpt.npz")
    save_model(final, result.model, report.user_ids)
    print(f"checkpoint {final}")
    return 0


def _finetune_data(args):
    from .training import load_model

    model, block = load_model(args.checkpoint, load_network(_data_paths(args)[0]))
    net, trajs, report = _load_data(args, block["user_ids"])
    split = split_dataset(len(trajs), model.cfg.split, args.seed)
    return model, trajs, report, split


def cmd_finetune_cls(args):
    from .training import finetune_classification

    model, trajs, report, split = _finetune_data(args)
    train = _pick(trajs, split.train)
    test = _pick(trajs, split.test) or train
    n_classes = len(report.user_ids)
    res = finetune_classification(
        model, train, [t.user for t in train], n_classes, test, [t.user for t in test],
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=args.seed,
        labels_are_users=True, freeze_encoder=args.freeze_encoder,
    )
    _report({"task": "classification", "checkpoint": args.checkpoint, "classes": n_classes,
             "epochs": args.epochs, "lr": args.lr, "freeze_encoder": args.freeze_encoder,
             "seed": args.seed}, res.metrics)
    return 0


def cmd_finetune_tte(args):
    from .training import finetune_tte

    model, trajs, report, split = _finetune_data(args)
    train = _pick(trajs, split.train)
    test = _pick(trajs, split.test) or train
    res = finetune_tte(model, train, test, epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                       seed=args.seed, freeze_encoder=args.freeze_encoder)
    _report({"task": "travel-time", "checkpoint": args.checkpoint, "epochs": args.epochs, "lr": args.lr,
             "freeze_encoder": args.freeze_encoder, "seed": args.seed}, res.metrics)
    return 0


def cmd_embed(args):
    from .training import load_model

    model, block = load_model(args.checkpoint, load_network(_data_paths(args)[0]))
    net, trajs, _ = _load_data(args, block["user_ids"])
    vecs = evaluation.embed_dataset(model, trajs, normalize=args.normalize)
    write_embeddings(args.out, vecs, range(len(trajs)))
    print(f"wrote {vecs.shape[0]}x{vecs.shape[1]} vectors to {args.out}")
    return 0


def cmd_evaluate(args):
    from .training import load_model

    model, block = load_model(args.checkpoint, load_network(_data_paths(args)[0]))
    net, trajs, _ = _load_data(args, block["user_ids"])
    rng = np.random.default_rng(args.seed)
    metrics = {}
    tasks = [t.strip() for t in args.task.split(",") if t.strip()]
    for task in tasks:
        if task == "retrieval":
            need = args.queries + args.database
            if need > len(trajs):
                raise ValidationError(f"retrieval needs {need} trajectories, have {len(trajs)}")
            pick = rng.permutation(len(trajs))[:need]
            setup = evaluation.build_retrieval(_pick(trajs, pick[: args.queries]),
                                               _pick(trajs, pick[args.queries :]), args.p, args.seed)
            res = evaluation.evaluate_retrieval(model, setup)
            metrics["mr"] = res.mean_rank
            metrics["mr_missing"] = res.missing
        elif task == "similarity":
            ks = tuple(int(k) for k in args.k.split(","))
            n = min(args.pool, len(trajs))
            pick = rng.permutation(len(trajs))[:n]
            hr = evaluation.similarity_hit_ratios(model, _pick(trajs, pick), min(args.queries, n), ks,
                                                  args.measure, threads=args.threads)
            metrics.update(hr)
        else:
            raise ValidationError(f"unknown evaluation task {task!r}")
    config = {"checkpoint": args.checkpoint, "task": ",".join(tasks), "queries": args.queries,
              "database": args.database, "p": args.p, "measure": args.measure, "k": args.k,
              "seed": args.seed}
    _report(config, metrics)
    return 0


def _read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'query_id,candidate_id'")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: ids must be integers") from None
    return pairs


def cmd_simbench(args):
    net_path, traj_path = _data_paths(args)
    net = load_network(net_path)
    trajs, _ = load_trajectories(traj_path, net)
    if not net.has_coordinates:
        raise UnsupportedOperation("network file carries no segment coordinates")
    points = [simbaselines.traj_to_pointseq(t, net) for t in trajs]
    if args.pairs_file:
        pairs = _read_pairs(args.pairs_file)
    else:
        nq = min(args.queries, len(trajs))
        pairs = [(q, c) for q in range(nq) for c in range(len(trajs))]
    for q, c in pairs:
        if not (0 <= q < len(trajs) and 0 <= c < len(trajs)):
            raise ValidationError(f"pair ({q}, {c}) outside 0..{len(trajs) - 1}")
    fn = simbaselines.measure_fn(args.measure, args.eps, (args.gap_x, args.gap_y))
    scores = np.empty(len(pairs))

    def run(block):
        for i in block:
            q, c = pairs[i]
            scores[i] = fn(points[q], points[c])

    blocks = np.array_split(np.arange(len(pairs)), max(args.threads, 1))
    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(run, blocks))
    else:
        run(np.arange(len(pairs)))
    out = sys.stdout
    out.write("query_id,candidate_id,score\n")
    for (q, c), s in zip(pairs, scores):
        out.write(f"{q},{c},{float(s)!r}\n")
    return 0


# ------------------------------------------------------------------- parser


def _add_common(p, data=True):
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    p.add_argument("--verbose", "-v", action="store_true")
    if data:
        p.add_argument("--data", help="directory holding network.txt and trajectories.jsonl")
        p.add_argument("--network", help="road network file (overrides --data)")
        p.add_argument("--trajectories", help="trajectory file (overrides --data)")


def _add_model_flags(p):
    p.add_argument("--config", help="key = value config file; flags below win")
    p.add_argument("--dim", type=int)
    p.add_argument("--enc-layers", type=int)
    p.add_argument("--dec-layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--mask-strategy", choices=["road-aware", "random"])
    p.add_argument("--mask-ratio", type=float, help="fraction of steps masked (random strategy)")
    p.add_argument("--tie-heads", dest="tie_heads", action="store_true", default=None)
    p.add_argument("--no-tie-heads", dest="tie_heads", action="store_false")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="any other config key")


def _add_finetune_flags(p):
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--freeze-encoder", action="store_true", help="train only the linear head")


def build_parser():
    parser = _Parser(prog="redtraj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("generate", help="synthetic grid network and trajectories")
    _add_common(p, data=False)
    p.add_argument("--grid", default="8x8", help="intersections as RxC")
    p.add_argument("--traj", type=int, default=2000)
    p.add_argument("--users", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("config", help="print the resolved configuration")
    _add_common(p, data=False)
    _add_model_flags(p)
    p.add_argument("--dump", action="store_true", help="print every key with its value")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("pretrain", help="dual-objective pretraining")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune-cls", help="user classification head")
    _add_common(p)
    _add_finetune_flags(p)
    p.set_defaults(func=cmd_finetune_cls)

    p = sub.add_parser("finetune-tte", help="travel time regression head")
    _add_common(p)
    _add_finetune_flags(p)
    p.set_defaults(func=cmd_finetune_tte)

    p = sub.add_parser("embed", help="write trajectory vectors")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="binary matrix path; ids go to <out>.idx")
    p.add_argument("--no-normalize", dest="normalize", action="store_false")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("evaluate", help="retrieval mean rank and similarity hit ratios")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", default="retrieval", help="comma list of retrieval, similarity")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--database", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.1, help="downsampling rate for retrieval twins")
    p.add_argument("--pool", type=int, default=1000, help="trajectories searched for similarity")
    p.add_argument("--measure", default="hausdorff", choices=sorted(simbaselines.MEASURES))
    p.add_argument("--k", default="1,5,10")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simbench", help="heuristic distances between trajectory pairs")
    _add_common(p)
    p.add_argument("--measure", required=True, choices=sorted(simbaselines.MEASURES))
    p.add_argument("--eps", type=float, default=simbaselines.DEFAULT_EPS, help="match threshold (lcss, edr)")
    p.add_argument("--gap-x", type=float, default=0.0, help="erp gap point")
    p.add_argument("--gap-y", type=float, default=0.0)
    p.add_argument("--pairs-file", help="lines of query_id,candidate_id")
    p.add_argument("--queries", type=int, default=10, help="without a pairs file: first N vs all")
    p.set_defaults(func=cmd_simbench)
    return parser


def _check_data_args(args):
    if not (args.data or (args.network and args.trajectories)):
        raise UsageError(f"redtraj {args.command}: --data (or --network and --trajectories) is required\n"
                         f"usage: redtraj {args.command} --data DIR [options]")


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        if "data" in vars(args):
            _check_data_args(args)
        if args.command != "config":
            _echo_args(args)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except UnsupportedOperation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
