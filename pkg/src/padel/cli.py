"""Command-line entry point: ``padel <subcommand> ...``.

Settings come from an optional JSON config (nested sections as in
:class:`padel.pipeline.RunConfig`) and are overridden by flags.  The
position cache lives in ``$PADEL_CACHE_DIR`` (default ``~/.cache/padel``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .graph import DataFormatError, load_dataset
from .pipeline import (ABLATIONS, PipelineError, RunConfig, clean_manifest, evaluate, evaluate_seeds,
                       export_embeddings, load_bundle, run_pipeline, sweep_learning_rate, timing_report)
from .position import default_cache_dir, file_digest, preprocess
from .synthetic import GENERATORS, make_synthetic

# flag -> (section, field)
_OVERRIDES = {
    "edges": ("data", "edge_file"),
    "subgraphs": ("data", "subgraph_file"),
    "train_fraction": ("data", "train_fraction"),
    "max_subgraph_nodes": ("data", "max_subgraph_nodes"),
    "pe_dim": ("model", "dim"),
    "pca_dim": ("model", "pca_dim"),
    "pool_dim": ("model", "pool_dim"),
    "beta": ("vsubgae", "beta"),
    "p_diff": ("vsubgae", "p_diff"),
    "vsubgae_epochs": ("vsubgae", "epochs"),
    "vsubgae_lr": ("vsubgae", "lr"),
    "walk_hop": ("contrast", "walk_hop"),
    "contrast_epochs": ("contrast", "epochs"),
    "contrast_lr": ("contrast", "lr"),
    "batch_size": ("train", "batch_size"),
    "max_epochs": ("train", "max_epochs"),
    "patience": ("train", "patience"),
    "lr": ("train", "lr"),
    "weight_decay": ("train", "weight_decay"),
    "init": ("stages", "init"),
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--edges", help="edge file")
    p.add_argument("--subgraphs", help="subgraph file")
    p.add_argument("--run-dir", type=Path, default=Path("run"), help="output directory (default ./run)")
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", choices=sorted(ABLATIONS), help="stage toggles of an ablation variant")
    for flag in ("ss", "pe", "cl"):
        p.add_argument(f"--no-{flag}", action="store_true", help=f"disable the {flag.upper()} stage")
    p.add_argument("--init", choices=("pretrained", "random"))
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--max-subgraph-nodes", type=int)
    p.add_argument("--pe-dim", type=int, help="node embedding / position dimension d")
    p.add_argument("--pca-dim", type=int, help="PCA dimension d'")
    p.add_argument("--pool-dim", type=int, help="pooling output dimension")
    p.add_argument("--beta", type=float)
    p.add_argument("--p-diff", type=float)
    p.add_argument("--vsubgae-epochs", type=int)
    p.add_argument("--vsubgae-lr", type=float)
    p.add_argument("--walk-hop", type=int, help="random-walk length (0 = mean subgraph size)")
    p.add_argument("--contrast-epochs", type=int)
    p.add_argument("--contrast-lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "ablation", None):
        cfg = cfg.with_ablation(args.ablation)
    for flag in ("ss", "pe", "cl"):
        if getattr(args, f"no_{flag}", False):
            setattr(cfg.stages, flag, False)
    for name, (section, key) in _OVERRIDES.items():
        value = getattr(args, name, None)
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "no_early_stop", False):
        cfg.train.early_stop = False
    if not cfg.data.edge_file or not cfg.data.subgraph_file:
        raise PipelineError("dataset paths missing: pass --edges/--subgraphs or set them in the config")
    return cfg


def _dump(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_preprocess(args) -> int:
    cfg = build_config(args)
    bundle = load_dataset(cfg.data.edge_file, cfg.data.subgraph_file, cfg.data.max_subgraph_nodes)
    pre = preprocess(bundle.graph, cfg.model.pca_dim, default_cache_dir(), key=file_digest(cfg.data.edge_file))
    _dump({"cache_dir": str(pre.cache_dir), "cache_hit": pre.cache_hit, "shape": list(pre.reduced.shape),
           "explained_variance_ratio": [float(x) for x in pre.explained_variance_ratio[:8]]})
    return 0


def _run(args, stop_after, resume) -> int:
    cfg = build_config(args)
    if getattr(args, "sweep_lr", False):
        _dump(sweep_learning_rate(cfg))
        return 0
    args.run_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(args.run_dir / "config.json")
    manifest = run_pipeline(cfg, args.run_dir, stop_after=stop_after, resume=resume)
    _dump(clean_manifest(manifest).get("metrics", {"stages": sorted(manifest["stages"])}))
    return 0


def cmd_pretrain_vsubgae(args) -> int:
    return _run(args, "vsubgae", resume=False)


def cmd_pretrain_contrast(args) -> int:
    return _run(args, "contrast", resume=True)


def cmd_train(args) -> int:
    return _run(args, None, resume=True)


def cmd_eval(args) -> int:
    cfg = build_config(args)
    if args.seeds:
        _dump(evaluate_seeds(cfg, range(args.seeds), args.split, cache_dir=default_cache_dir()))
        return 0
    bundle = load_bundle(cfg)
    _dump(evaluate(args.checkpoint or args.run_dir / "model.ckpt", bundle, args.split, cfg.train.threshold))
    return 0


def cmd_embed(args) -> int:
    cfg = build_config(args)
    bundle = load_dataset(cfg.data.edge_file, cfg.data.subgraph_file, cfg.data.max_subgraph_nodes)
    n = export_embeddings(args.checkpoint or args.run_dir / "model.ckpt", bundle, args.out)
    print(f"wrote {n} rows to {args.out}")
    return 0


def cmd_synth(args) -> int:
    params = json.loads(args.params) if args.params else {}
    e, s = make_synthetic(args.kind, args.out, seed=args.seed, **params)
    print(f"{e}\n{s}")
    return 0


def cmd_report(args) -> int:
    timings = json.loads((args.run_dir / "timings.json").read_text())
    print(timing_report(timings))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="padel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="compute and cache distances, phases and PCA")
    _add_run_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pretrain-vsubgae", help="run preprocessing and autoencoder pretraining")
    _add_run_flags(p)
    p.set_defaults(func=cmd_pretrain_vsubgae)

    p = sub.add_parser("pretrain-contrast", help="run up to contrastive pretraining, reusing checkpoints")
    _add_run_flags(p)
    p.set_defaults(func=cmd_pretrain_contrast)

    p = sub.add_parser("train", help="full pipeline with supervised fine-tuning")
    _add_run_flags(p)
    p.add_argument("--sweep-lr", action="store_true", help="sweep the learning-rate grid instead")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint, or run several seeds")
    _add_run_flags(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--seeds", type=int, default=0, help="run the pipeline for seeds 0..N-1 and report mean±std")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="export per-subgraph (e_np, e_s) rows as TSV")
    _add_run_flags(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("kind", choices=sorted(GENERATORS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help='generator keyword arguments as JSON, e.g. \'{"num_nodes": 100}\'')
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="print the stage timing table of a run")
    p.add_argument("--run-dir", type=Path, default=Path("run"))
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataFormatError, PipelineError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
