"""Command-line entry point.

Every command writes its artifact plus ``<artifact>.manifest.json`` holding
the command, full configuration, seed, dataset hash, tool version and
timings, so a run can be repeated from its manifest alone.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .sampler import SamplerConfig, Scheme
from .stream import (CsvSchema, StreamError, chronological_split, ingest_csv, inductive_mask,
                     load_stream, save_cache, write_csv, write_id_map)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("nlb")


class CliError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _default_seed() -> int:
    env = os.environ.get("NLB_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"NLB_SEED must be an integer, got {env!r}")


def write_manifest(artifact, command: str, args: argparse.Namespace, started: float,
                   dataset_hash: str | None = None, extra: dict | None = None) -> Path:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    manifest = {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "dataset_hash": dataset_hash,
        "version": __version__,
        "backend": BACKEND,
        "wall_s": time.perf_counter() - started,
        "artifact": str(artifact),
        **(extra or {}),
    }
    path = Path(f"{artifact}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                    encoding="utf-8")
    return path


def _schema(args) -> CsvSchema:
    return CsvSchema(scale=args.scale, bipartite=args.bipartite)


def cmd_ingest(args, t0) -> int:
    if args.scale <= 0:
        raise CliError("--scale must be > 0")
    stream = ingest_csv(args.input, _schema(args))
    save_cache(stream, args.cache_out)
    id_map_path = Path(f"{args.cache_out}.ids.csv")
    write_id_map(stream.id_map, id_map_path)
    write_manifest(args.cache_out, "ingest", args, t0, stream.content_hash(),
                   {"events": len(stream), "nodes": stream.n_nodes, "id_map": str(id_map_path)})
    print(f"{len(stream)} events, {stream.n_nodes} nodes -> {args.cache_out}")
    return 0


def cmd_gen_synthetic(args, t0) -> int:
    from .synthetic import gen_poisson_graph, gen_recency_task
    if args.nodes < 2:
        raise CliError("--nodes must be >= 2")
    if args.lam <= 0 or args.horizon <= 0:
        raise CliError("--lambda and --horizon must be > 0")
    if args.kind == "poisson":
        stream = gen_poisson_graph(args.nodes, args.lam, args.horizon, args.seed)
    else:
        stream = gen_recency_task(args.nodes, args.lam, args.horizon, args.seed,
                                  p_recent=args.p_recent)
    write_csv(stream, args.out)
    # hash what a later ingest of the file will see (ids re-densify on read)
    dhash = ingest_csv(args.out).content_hash()
    write_manifest(args.out, "gen-synthetic", args, t0, dhash,
                   {"events": len(stream)})
    print(f"{len(stream)} events -> {args.out}")
    return 0


def cmd_verify_sampling(args, t0) -> int:
    from .stats import PoissonStreamSpec, measure_retention_edge, measure_retention_node
    scheme = Scheme.parse(args.scheme)
    cfg = SamplerConfig(scheme, args.s, args.alpha, seed=args.seed)
    if args.trials < 1:
        raise CliError("--trials must be >= 1")
    if scheme is Scheme.EDGE:
        spec = PoissonStreamSpec(lam=args.lam)
        curve = measure_retention_edge(cfg, spec, args.trials, args.deltas, threads=args.threads)
    else:
        lams = args.neighbor_lambdas or [args.lam] * args.neighbors
        spec = PoissonStreamSpec(per_neighbor_lambdas=dict(enumerate(lams)))
        curve = measure_retention_node(cfg, spec, args.trials, args.deltas, threads=args.threads)
    curve.to_csv(args.out)
    Path(f"{args.out}.gp").write_text(curve.gnuplot_script(str(args.out)), encoding="utf-8")
    err = curve.max_abs_error()
    write_manifest(args.out, "verify-sampling", args, t0, None,
                   {"max_abs_error": err, "elapsed_s": curve.elapsed_s})
    for b in curve.bins:
        print(f"dt={b.delta_t:g}  empirical={b.empirical:.4f}  theory={b.theory:.4f}  "
              f"ci=[{b.ci_low:.4f}, {b.ci_high:.4f}]")
    print(f"max |empirical - theory| = {err:.4f} ({curve.elapsed_s:.1f}s)")
    return 0


def cmd_bench_update(args, t0) -> int:
    from .stats import bench_oracle_scaling, bench_update_scaling
    cfg = SamplerConfig(Scheme.parse(args.scheme), args.s, args.alpha, seed=args.seed)
    rows = bench_update_scaling(cfg, args.lengths, args.reps)
    oracle = bench_oracle_scaling(args.oracle_lengths, cfg.s) if args.oracle_lengths else []
    lines = ["kind,n,mean_ns,std_ns"]
    lines += [f"forward,{r.n},{r.mean_ns:.3f},{r.std_ns:.3f}" for r in rows]
    lines += [f"oracle_uniform,{r.n},{r.mean_ns:.3f},{r.std_ns:.3f}" for r in oracle]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(args.out, "bench-update", args, t0)
    print(text, end="")
    return 0


def _train_config(args):
    from .train import TrainConfig
    return TrainConfig(batch_size=args.batch_size, epochs=args.epochs, lr=args.lr,
                       negatives_per_positive=args.negatives, eval_negatives=args.eval_negatives,
                       seed=args.seed, scheme=args.scheme, alpha=args.alpha, s=args.s,
                       d_status=args.dim, d_time=args.dim, d_msg=args.dim, d_out=args.dim,
                       dropout=args.dropout, mask_p=args.mask_p)


def _check_report(report) -> None:
    vals = [report.auc, report.ap, report.mrr] if math.isnan(report.f1) else [report.f1]
    if math.isnan(report.auc) and math.isnan(report.f1):
        raise CliError("evaluation produced no finite metric (empty test split?)")
    if any(not math.isfinite(v) for v in vals if not math.isnan(v)):
        raise CliError("non-finite metric in report")


def _write_report(path, report, header: str) -> None:
    from .train import reports_to_csv
    Path(path).write_text(reports_to_csv([("test", report)], "split", header), encoding="utf-8")


def _print_report(report) -> None:
    for k, v in report.row().items():
        print(f"{k:>14}: {v:.4f}" if isinstance(v, float) else f"{k:>14}: {v}")


def cmd_train(args, t0) -> int:
    from .train import (Runner, evaluate_nodes, report_header, run_inductive,
                        run_transductive)
    stream = load_stream(args.data, _schema(args))
    if len(stream) < 3:
        raise CliError("need at least three events to split")
    cfg = _train_config(args)
    if args.task == "node":
        if not stream.labels:
            raise CliError("--task node needs a labelled stream")
        n_classes = max(lab.label for lab in stream.labels) + 1
        runner = Runner(stream, cfg, n_classes=n_classes)
        split = chronological_split(stream)
        runner.fit(stream.take(np.arange(split.train.start, split.train.stop)))
        report = evaluate_nodes(stream, runner, stream.labels, split, n_classes)
    elif args.inductive:
        report, runner, _ = run_inductive(stream, cfg)
    else:
        report, runner = run_transductive(stream, cfg)
    _check_report(report)
    dhash = stream.content_hash()
    if args.ckpt_out:
        runner.save(args.ckpt_out, {"dataset_hash": dhash, "task": args.task})
        write_manifest(args.ckpt_out, "train", args, t0, dhash)
    report_path = args.report_out or f"{args.ckpt_out or args.data}.report.csv"
    _write_report(report_path, report, report_header(cfg, stream, {"task": args.task}))
    write_manifest(report_path, "train", args, t0, dhash, {"losses": report.losses})
    _print_report(report)
    return 0


def cmd_eval(args, t0) -> int:
    from .model import NLBModel
    from .train import Runner, TrainConfig, evaluate_inductive, evaluate_nodes, report_header
    model, meta = NLBModel.load(args.ckpt)
    stream = load_stream(args.data, _schema(args))
    cfg = TrainConfig(**{**meta["train"], "eval_negatives": args.eval_negatives})
    runner = Runner(stream, cfg, n_classes=model.cfg.n_classes)
    if runner.model.cfg != model.cfg:
        raise CliError("checkpoint dimensions do not match this stream")
    runner.model = model
    split = chronological_split(stream)
    if args.task == "node":
        report = evaluate_nodes(stream, runner, stream.labels, split, model.cfg.n_classes)
    else:
        if args.inductive:
            split = inductive_mask(split, stream, cfg.mask_p, cfg.seed)
        report = evaluate_inductive(stream, runner, split)
    _check_report(report)
    out = args.report_out or f"{args.ckpt}.eval.csv"
    _write_report(out, report, report_header(cfg, stream, {"task": args.task, "ckpt": args.ckpt}))
    write_manifest(out, "eval", args, t0, stream.content_hash())
    _print_report(report)
    return 0


def cmd_sweep(args, t0) -> int:
    from .train import report_header, reports_to_csv, sweep
    stream = load_stream(args.data, _schema(args))
    cfg = _train_config(args)
    rows = sweep(stream, args.axis, args.values, cfg)
    for _, rep in rows:
        _check_report(rep)
    text = reports_to_csv(rows, args.axis, report_header(cfg, stream, {"axis": args.axis}))
    Path(args.out).write_text(text, encoding="utf-8")
    write_manifest(args.out, "sweep", args, t0, stream.content_hash())
    print(text, end="")
    return 0


def _add_sampler(p, seed_default):
    p.add_argument("--scheme", choices=["edge", "node"], default="edge")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--s", type=int, default=10)
    p.add_argument("--seed", type=int, default=seed_default)


def _add_csv(p):
    p.add_argument("--scale", type=float, default=1.0, help="timestamp multiplier before rounding")
    p.add_argument("--bipartite", action="store_true",
                   help="source and destination ids live in separate namespaces")


def _add_training(p):
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--negatives", type=int, default=1, help="training negatives per positive")
    p.add_argument("--eval-negatives", type=int, default=500)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--mask-p", type=float, default=0.1)


def build_parser(seed_default: int = 0) -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="nlb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML file with defaults; flags win")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["ingest"] = sub.add_parser("ingest", help="CSV stream -> binary cache + id map")
    p.add_argument("--input", required=True)
    p.add_argument("--cache-out", required=True)
    _add_csv(p)
    p.set_defaults(func=cmd_ingest)

    p = subs["gen-synthetic"] = sub.add_parser("gen-synthetic", help="write a synthetic stream")
    p.add_argument("--kind", choices=["poisson", "recency-task"], required=True)
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--lambda", dest="lam", type=float, default=2000.0)
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--p-recent", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = subs["verify-sampling"] = sub.add_parser("verify-sampling",
                                                 help="Monte-Carlo retention vs closed form")
    _add_sampler(p, seed_default)
    p.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--deltas", type=_floats, default=[1.0, 2.0, 5.0, 10.0])
    p.add_argument("--neighbors", type=int, default=4, help="node scheme: neighbor count")
    p.add_argument("--neighbor-lambdas", type=_floats, default=None,
                   help="node scheme: per-neighbor rates, marked neighbor first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify_sampling)

    p = subs["bench-update"] = sub.add_parser("bench-update", help="per-event update cost")
    _add_sampler(p, seed_default)
    p.add_argument("--lengths", type=_ints, default=[10**4, 10**5, 10**6])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--oracle-lengths", type=_ints, default=[10**4, 10**6])
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_update)

    p = subs["train"] = sub.add_parser("train", help="train and report on the test split")
    p.add_argument("--data", required=True)
    _add_sampler(p, seed_default)
    _add_training(p)
    _add_csv(p)
    p.add_argument("--task", choices=["link", "node"], default="link")
    p.add_argument("--inductive", action="store_true")
    p.add_argument("--ckpt-out")
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_train)

    p = subs["eval"] = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", choices=["link", "node"], default="link")
    p.add_argument("--inductive", action="store_true")
    p.add_argument("--eval-negatives", type=int, default=500)
    p.add_argument("--report-out")
    _add_csv(p)
    p.set_defaults(func=cmd_eval)

    p = subs["sweep"] = sub.add_parser("sweep", help="train once per alpha or s value")
    p.add_argument("--data", required=True)
    p.add_argument("--axis", choices=["alpha", "s"], required=True)
    p.add_argument("--values", type=_floats, required=True)
    _add_sampler(p, seed_default)
    _add_training(p)
    _add_csv(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser, subs


def _apply_config(path: str, parser, subs, command: str | None) -> None:
    with open(path, "rb") as fh:
        conf = tomllib.load(fh)
    top = {k.replace("-", "_"): v for k, v in conf.items() if not isinstance(v, dict)}
    parser.set_defaults(**{k: v for k, v in top.items() if k in ("threads", "verbose")})
    if command in subs:
        section = conf.get(command, {})
        subs[command].set_defaults(**top, **{k.replace("-", "_"): v for k, v in section.items()})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser, subs = build_parser(_default_seed())
        args = parser.parse_args(argv)
        if args.config:
            _apply_config(args.config, parser, subs, args.command)
            args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "threads", 1) < 1:
            raise CliError("--threads must be >= 1")
        return args.func(args, time.perf_counter())
    except (CliError, StreamError, ValueError, KeyError, OSError, FloatingPointError,
            tomllib.TOMLDecodeError) as exc:
        print(f"nlb: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
