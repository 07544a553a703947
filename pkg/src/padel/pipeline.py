"""Four-stage training pipeline, evaluation and run bookkeeping.

Stages, in order (each can be toggled, mirroring the ablation variants):

1. position preprocessing (distances, phases, PCA; cached on disk);
2. autoencoder pretraining of ``X`` and the encoder (``W_P`` frozen);
3. contrastive pretraining of ``W_P`` and the pooling layers (autoencoder frozen);
4. supervised fine-tuning of ``W_P``, pooling, head and ``X`` with early
   stopping on validation micro-F1.

Everything random flows from one seed through named, independent streams,
so toggling a later stage never perturbs an earlier one.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .contrastive import build_batch, contrastive_loss, default_hop
from .graph import DatasetBundle, SubgraphRecord, coverage_stats, induced_adjacency, load_dataset, subsample_train
from .pooling import SubgraphPooling, bce_loss, ce_loss, micro_f1, multi_hot, one_hot, pack_views
from .position import PositionTable, default_cache_dir, file_digest, preprocess
from .tensor import AdamW, Tape, Tensor, load_tensors, save_tensors
from .vsubgae import VSubGAE, decode_logits, diffuse_subgraph, elbo_loss, normalize_adjacency

log = logging.getLogger(__name__)

LR_GRID = (1e-3, 5e-3, 1e-2)


# ---------------------------------------------------------------- config


@dataclass
class DataConfig:
    edge_file: str = ""
    subgraph_file: str = ""
    train_fraction: float = 1.0
    max_subgraph_nodes: int = 128


@dataclass
class StageConfig:
    ss: bool = True       # autoencoder pretraining
    pe: bool = True       # cosine phase position encoding (else a random table)
    cl: bool = True       # contrastive pretraining
    pl: bool = True       # subgraph pooling
    init: str = "pretrained"


@dataclass
class ModelConfig:
    dim: int = 32
    pca_dim: int = 64
    pool_dim: int = 64


@dataclass
class VSubGAEConfig:
    beta: float = 0.2
    p_diff: float = 0.5
    epochs: int = 100
    lr: float = 1e-2


@dataclass
class ContrastConfig:
    epochs: int = 100
    walk_hop: int = 0     # 0: mean subgraph size of the dataset
    lr: float = 1e-3


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 3000
    patience: int = 300
    early_stop: bool = True
    lr: float = 1e-3
    weight_decay: float = 1e-2
    threshold: float = 0.5


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    stages: StageConfig = field(default_factory=StageConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    vsubgae: VSubGAEConfig = field(default_factory=VSubGAEConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _from_dict(cls, d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def with_ablation(self, name: str) -> "RunConfig":
        ss, pe, cl = ABLATIONS[name]
        out = copy.deepcopy(self)
        out.stages = StageConfig(ss=ss, pe=pe, cl=cl, pl=True, init="random" if cl and not ss else "pretrained")
        return out


def _from_dict(cls, d: dict):
    kwargs = {}
    names = {f.name: f for f in fields(cls)}
    for k, v in d.items():
        if k not in names:
            raise ValueError(f"unknown config key {k!r} in section {cls.__name__}")
        default = getattr(cls(), k)
        kwargs[k] = _from_dict(type(default), v) if is_dataclass(default) else v
    return cls(**kwargs)


# (SS, PE, CL); pooling is always on
ABLATIONS = {
    "C0": (False, False, False),
    "C1": (True, False, False),
    "C2": (False, True, False),
    "C3": (False, False, True),
    "C4": (True, True, False),
    "C5": (True, False, True),
    "C6": (False, True, True),
    "C7": (True, True, True),
}

_STREAMS = {"subsample": 0, "pe": 1, "wp": 2, "vsubgae_init": 3, "vsubgae": 4, "pool_init": 5, "contrast": 6,
            "train": 7}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_STREAMS[name],))))


class PipelineError(RuntimeError):
    pass


# ---------------------------------------------------------------- model


class PadelModel:
    def __init__(self, table: PositionTable, vsubgae: VSubGAE, pooling: SubgraphPooling, multi_label: bool):
        self.table = table
        self.vsubgae = vsubgae
        self.pooling = pooling
        self.multi_label = multi_label

    @property
    def X(self) -> Tensor:
        return self.vsubgae.X

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"reduced": self.table.reduced, "W_P": self.table.W_P.data}
        out.update({k: t.data for k, t in self.vsubgae.state().items()})
        out.update({k: t.data for k, t in self.pooling.state().items()})
        out["multi_label"] = np.array([[1.0 if self.multi_label else 0.0]])
        return out

    def save(self, path) -> None:
        save_tensors(path, self.arrays())

    @classmethod
    def load(cls, path) -> "PadelModel":
        a = load_tensors(path)
        dim = a["X"].shape[1]
        rng = np.random.default_rng(0)
        table = PositionTable(a["reduced"], a["W_P"].shape[1], rng)
        table.W_P.data = a["W_P"].copy()
        vs = VSubGAE(a["X"].shape[0], dim, rng)
        vs.load_state(a)
        pooling = SubgraphPooling(dim, a["W_fc"].shape[1], a["W_S"].shape[1], rng)
        pooling.load_state(a)
        return cls(table, vs, pooling, bool(a["multi_label"][0, 0]))

    def encode(self, packed):
        return self.pooling.encode(self.X, self.table, packed)

    def logits(self, packed) -> Tensor:
        e_np, e_s = self.encode(packed)
        return self.pooling.classify(e_np, e_s)


def _record_views(bundle: DatasetBundle, records: Sequence[SubgraphRecord]):
    return [(np.asarray(r.node_ids, dtype=np.int64), induced_adjacency(bundle.graph, r.node_ids)) for r in records]


def _targets(bundle: DatasetBundle, records: Sequence[SubgraphRecord]) -> np.ndarray:
    if bundle.multi_label:
        return multi_hot([r.labels for r in records], bundle.num_classes)
    return one_hot([r.label for r in records], bundle.num_classes)


def _truths(bundle: DatasetBundle, records):
    if bundle.multi_label:
        return multi_hot([r.labels for r in records], bundle.num_classes)
    return np.array([r.label for r in records])


def _batches(n: int, size: int, rng: np.random.Generator, min_size: int = 1) -> list[np.ndarray]:
    order = rng.permutation(n)
    chunks = [order[i:i + size] for i in range(0, n, size)]
    if len(chunks) > 1 and chunks[-1].size < min_size:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


class _Frozen:
    """Temporarily turn off gradients for some tensors."""

    def __init__(self, *tensors: Tensor):
        self.tensors = tensors

    def __enter__(self):
        self.saved = [t.requires_grad for t in self.tensors]
        for t in self.tensors:
            t.requires_grad = False

    def __exit__(self, *exc):
        for t, s in zip(self.tensors, self.saved):
            t.requires_grad = s
        return False


# ---------------------------------------------------------------- stages


def load_bundle(config: RunConfig) -> DatasetBundle:
    bundle = load_dataset(config.data.edge_file, config.data.subgraph_file, config.data.max_subgraph_nodes)
    if config.data.train_fraction < 1.0:
        seed = int(stream(config.seed, "subsample").integers(2**31))
        bundle = subsample_train(bundle, config.data.train_fraction, seed)
    return bundle


def stage_positions(config: RunConfig, bundle: DatasetBundle, cache_dir=None) -> tuple[PositionTable, dict]:
    n = bundle.graph.num_nodes
    info: dict = {}
    if config.stages.pe:
        key = file_digest(config.data.edge_file) if config.data.edge_file else None
        pre = preprocess(bundle.graph, config.model.pca_dim, cache_dir, key=key)
        reduced = pre.reduced
        info = {"cache_hit": pre.cache_hit,
                "explained_variance_ratio": [float(x) for x in pre.explained_variance_ratio[:8]]}
    else:
        reduced = stream(config.seed, "pe").standard_normal((n, min(config.model.pca_dim, n)))
    return PositionTable(reduced, config.model.dim, stream(config.seed, "wp")), info


def vsubgae_step_loss(model: PadelModel, bundle: DatasetBundle, records, beta: float, p_diff: float, cap: int,
                      rng: np.random.Generator) -> Tensor:
    """Mean negated ELBO over ``records`` for one fresh diffusion/noise draw."""
    vs = model.vsubgae
    total = None
    for rec in records:
        nodes, A = diffuse_subgraph(bundle.graph, rec.node_ids, p_diff, rng, cap)
        feats = T.concat_cols(T.gather_rows(vs.X, nodes), model.table.rows_for(nodes))
        eps = rng.standard_normal((nodes.size, 2 * vs.dim))
        sample = vs.encode(feats, normalize_adjacency(A), eps)
        target = A + np.eye(nodes.size)
        loss = elbo_loss(decode_logits(sample.z), target, sample.mu, sample.log_sigma, beta)
        total = loss if total is None else T.add(total, loss)
    return T.scale(total, 1.0 / len(records))


def stage_vsubgae(config: RunConfig, bundle: DatasetBundle, model: PadelModel) -> list[float]:
    vs = model.vsubgae
    rng = stream(config.seed, "vsubgae")
    cfg = config.vsubgae
    opt = AdamW([vs.X] + vs.encoder_params(), lr=cfg.lr, weight_decay=config.train.weight_decay)
    records = list(bundle.subgraphs)
    losses = []
    with _Frozen(model.table.W_P):
        for _ in range(cfg.epochs):
            epoch = []
            for idx in _batches(len(records), config.train.batch_size, rng):
                with Tape() as tape:
                    loss = vsubgae_step_loss(model, bundle, [records[i] for i in idx], cfg.beta, cfg.p_diff,
                                             config.data.max_subgraph_nodes, rng)
                    grads = tape.backward(loss)
                opt.step(grads)
                epoch.append(loss.item())
            losses.append(float(np.mean(epoch)))
    return losses


def stage_contrast(config: RunConfig, bundle: DatasetBundle, model: PadelModel) -> list[float]:
    rng = stream(config.seed, "contrast")
    records = list(bundle.subgraphs)
    if len(records) < 2:
        raise PipelineError("contrastive pretraining needs at least two subgraphs")
    hop = config.contrast.walk_hop or default_hop(records)
    params = [model.table.W_P] + model.pooling.pooling_params()
    opt = AdamW(params, lr=config.contrast.lr, weight_decay=config.train.weight_decay)
    losses = []
    with _Frozen(model.X, *model.vsubgae.encoder_params()):
        for _ in range(config.contrast.epochs):
            epoch = []
            for idx in _batches(len(records), config.train.batch_size, rng, min_size=2):
                batch = [records[i] for i in idx]
                cb = build_batch(bundle.graph, batch, model.vsubgae, model.X, model.table, hop,
                                 config.vsubgae.p_diff, config.data.max_subgraph_nodes, rng)
                with Tape() as tape:
                    loss = contrastive_loss(model.pooling, model.X, model.table, cb)
                    grads = tape.backward(loss)
                opt.step(grads)
                epoch.append(loss.item())
            losses.append(float(np.mean(epoch)))
    return losses


def _snapshot(params: Sequence[Tensor]) -> list[np.ndarray]:
    return [p.data.copy() for p in params]


def _restore(params: Sequence[Tensor], arrays: Sequence[np.ndarray]) -> None:
    for p, a in zip(params, arrays):
        p.data = a.copy()


def predict(model: PadelModel, bundle: DatasetBundle, records: Sequence[SubgraphRecord],
            chunk: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(records), chunk):
        packed = pack_views(_record_views(bundle, records[s:s + chunk]))
        out.append(model.logits(packed).data)
    if not out:
        return np.zeros((0, bundle.num_classes))
    return np.concatenate(out, axis=0)


def score_split(model: PadelModel, bundle: DatasetBundle, records, threshold: float = 0.5) -> float:
    if not records:
        return float("nan")
    return micro_f1(predict(model, bundle, records), _truths(bundle, records), bundle.multi_label, threshold)


def stage_train(config: RunConfig, bundle: DatasetBundle, model: PadelModel) -> dict:
    cfg = config.train
    rng = stream(config.seed, "train")
    train, val = bundle.split("train"), bundle.split("val")
    if not train:
        raise PipelineError("no training records")
    params = [model.table.W_P] + model.pooling.pooling_params() + model.pooling.head_params() + [model.X]
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    views = _record_views(bundle, train)
    Y = _targets(bundle, train)
    loss_fn = bce_loss if bundle.multi_label else ce_loss
    losses, val_scores, val_losses = [], [], []
    Y_val = _targets(bundle, val) if val else None
    truths_val = _truths(bundle, val) if val else None
    best, best_epoch, best_state = (-np.inf, -np.inf), -1, _snapshot(params)
    since = 0
    for epoch in range(cfg.max_epochs):
        epoch_losses = []
        for idx in _batches(len(train), cfg.batch_size, rng):
            packed = pack_views([views[i] for i in idx])
            with Tape() as tape:
                loss = loss_fn(model.logits(packed), Y[idx])
                grads = tape.backward(loss)
            opt.step(grads)
            epoch_losses.append(loss.item())
        losses.append(float(np.mean(epoch_losses)))
        if val:
            logits = predict(model, bundle, val)
            f1 = micro_f1(logits, truths_val, bundle.multi_label, cfg.threshold)
            vloss = loss_fn(Tensor(logits), Y_val).item()
            val_scores.append(f1)
            val_losses.append(vloss)
            # ties on F1 go to the lower validation loss
            if (f1, -vloss) > best:
                best, best_epoch, best_state = (f1, -vloss), epoch, _snapshot(params)
                since = 0
            else:
                since += 1
                if cfg.early_stop and since >= cfg.patience:
                    break
    if val:
        _restore(params, best_state)
    else:
        best_epoch = len(losses) - 1
    return {"losses": losses, "val_micro_f1": val_scores, "val_losses": val_losses, "best_epoch": best_epoch, "epochs_run": len(losses)}


# ---------------------------------------------------------------- orchestration


def _sha256(path) -> str:
    return file_digest(path)


def _write_json_atomic(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _array_digest(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())
    return h.hexdigest()


def build_model(config: RunConfig, bundle: DatasetBundle, table: PositionTable) -> PadelModel:
    vs = VSubGAE(bundle.graph.num_nodes, config.model.dim, stream(config.seed, "vsubgae_init"))
    pooling = SubgraphPooling(config.model.dim, config.model.pool_dim, bundle.num_classes,
                              stream(config.seed, "pool_init"))
    return PadelModel(table, vs, pooling, bundle.multi_label)


def run_pipeline(config: RunConfig, run_dir=None, cache_dir=None, stop_after: str | None = None,
                 resume: bool = False) -> dict:
    """Run the enabled stages and return the run manifest.

    With ``run_dir`` the manifest (``manifest.json``), stage timings
    (``timings.json``) and checkpoints (``vsubgae.ckpt``, ``pooling.ckpt``,
    ``model.ckpt``) are written there.  ``stop_after`` names the last stage
    to run (``preprocess``, ``vsubgae``, ``contrast``, ``train``).  With
    ``resume``, earlier stages are loaded from checkpoints in ``run_dir``
    instead of recomputed.
    """
    st = config.stages
    if not st.pl:
        raise PipelineError("subgraph pooling cannot be disabled")
    if st.init not in ("pretrained", "random"):
        raise PipelineError(f"unknown init mode {st.init!r}")
    if st.cl and not st.ss and st.init != "random":
        raise PipelineError("contrastive learning without autoencoder pretraining needs init='random'")
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    if cache_dir is None:
        cache_dir = default_cache_dir() if run_dir is not None else None

    manifest: dict = {"config": config.to_dict(), "stages": {}}
    previous: dict = {}
    if resume and run_dir is not None and (run_dir / "manifest.json").exists():
        previous = json.loads((run_dir / "manifest.json").read_text()).get("stages", {})
    timings: dict = {}

    def checkpoint(name: str, arrays: dict):
        if run_dir is None:
            return _array_digest(arrays)
        save_tensors(run_dir / name, arrays)
        return _sha256(run_dir / name)

    def flush():
        if run_dir is not None:
            _write_json_atomic(run_dir / "manifest.json", manifest)
            _write_json_atomic(run_dir / "timings.json", timings)

    bundle = load_bundle(config)
    n_cov, cov = coverage_stats(bundle)
    manifest["inputs"] = {"edge_file": _sha256(config.data.edge_file),
                          "subgraph_file": _sha256(config.data.subgraph_file)}
    manifest["dataset"] = {
        "num_nodes": bundle.graph.num_nodes, "num_edges": bundle.graph.num_edges,
        "num_classes": bundle.num_classes, "multi_label": bundle.multi_label,
        "splits": {s: len(bundle.split(s)) for s in ("train", "val", "test")},
        "covered_nodes": n_cov, "coverage": cov,
    }

    t0 = time.perf_counter()
    table, pe_info = stage_positions(config, bundle, cache_dir)
    timings["preprocess"] = {"seconds": time.perf_counter() - t0, "enabled": st.pe,
                             "cache_hit": bool(pe_info.get("cache_hit", False))}
    manifest["stages"]["preprocess"] = {"enabled": st.pe, "reduced_dim": table.reduced_dim,
                                        "explained_variance_ratio": pe_info.get("explained_variance_ratio", [])}
    flush()
    model = build_model(config, bundle, table)
    if stop_after == "preprocess":
        return manifest

    t0 = time.perf_counter()
    if st.ss:
        ck = run_dir / "vsubgae.ckpt" if run_dir is not None else None
        if resume and ck is not None and ck.exists():
            model.vsubgae.load_state(load_tensors(ck))
            losses = previous.get("vsubgae", {}).get("losses")
        else:
            losses = stage_vsubgae(config, bundle, model)
        digest = checkpoint("vsubgae.ckpt", {k: t.data for k, t in model.vsubgae.state().items()})
        manifest["stages"]["vsubgae"] = {"losses": losses, "checkpoint_sha256": digest}
    timings["vsubgae"] = {"seconds": time.perf_counter() - t0, "enabled": st.ss}
    flush()
    if stop_after == "vsubgae":
        return manifest

    t0 = time.perf_counter()
    if st.cl:
        ck = run_dir / "pooling.ckpt" if run_dir is not None else None
        if resume and ck is not None and ck.exists():
            arrays = load_tensors(ck)
            model.pooling.load_state(arrays, head=False)
            model.table.W_P.data = arrays["W_P"].copy()
            losses = previous.get("contrast", {}).get("losses")
        else:
            losses = stage_contrast(config, bundle, model)
        arrays = {k: t.data for k, t in model.pooling.state().items()}
        arrays["W_P"] = model.table.W_P.data
        digest = checkpoint("pooling.ckpt", arrays)
        manifest["stages"]["contrast"] = {"losses": losses, "checkpoint_sha256": digest}
    timings["contrast"] = {"seconds": time.perf_counter() - t0, "enabled": st.cl}
    flush()
    if stop_after == "contrast":
        return manifest

    t0 = time.perf_counter()
    info = stage_train(config, bundle, model)
    timings["train"] = {"seconds": time.perf_counter() - t0, "epochs": info["epochs_run"]}
    info["checkpoint_sha256"] = checkpoint("model.ckpt", model.arrays())
    manifest["stages"]["train"] = info
    manifest["metrics"] = {s: score_split(model, bundle, bundle.split(s), config.train.threshold)
                           for s in ("train", "val", "test")}
    flush()
    manifest["_model"] = model
    return manifest


def clean_manifest(manifest: dict) -> dict:
    return {k: v for k, v in manifest.items() if not k.startswith("_")}


# ---------------------------------------------------------------- evaluation


def per_class_report(logits: np.ndarray, truths, multi_label: bool, num_classes: int,
                     threshold: float = 0.5) -> list[dict]:
    if multi_label:
        pred = T._sigmoid(logits) >= threshold
        Y = np.asarray(truths).astype(bool)
    else:
        pred = np.zeros((len(truths), num_classes), dtype=bool)
        if len(truths):
            pred[np.arange(len(truths)), logits.argmax(axis=1)] = True
        Y = one_hot(list(truths), num_classes).astype(bool)
    rows = []
    for c in range(num_classes):
        tp = int((pred[:, c] & Y[:, c]).sum())
        fp = int((pred[:, c] & ~Y[:, c]).sum())
        fn = int((~pred[:, c] & Y[:, c]).sum())
        denom = 2 * tp + fp + fn
        rows.append({"class": c, "tp": tp, "fp": fp, "fn": fn, "support": int(Y[:, c].sum()),
                     "f1": (2 * tp / denom) if denom else 0.0})
    return rows


def evaluate(checkpoint, bundle: DatasetBundle, split: str = "test", threshold: float = 0.5) -> dict:
    """Micro-F1 and a per-class report of a saved model on one split."""
    model = checkpoint if isinstance(checkpoint, PadelModel) else PadelModel.load(checkpoint)
    if model.X.rows != bundle.graph.num_nodes:
        raise ValueError(f"checkpoint has {model.X.rows} nodes, dataset has {bundle.graph.num_nodes}")
    if model.pooling.W_S.cols != bundle.num_classes:
        raise ValueError(f"checkpoint has {model.pooling.W_S.cols} classes, dataset has {bundle.num_classes}")
    records = bundle.split(split)
    logits = predict(model, bundle, records)
    truths = _truths(bundle, records)
    return {"split": split, "micro_f1": micro_f1(logits, truths, bundle.multi_label, threshold),
            "per_class": per_class_report(logits, truths, bundle.multi_label, bundle.num_classes, threshold)}


def format_mean_std(values: Sequence[float]) -> str:
    """``"44.72±1.34"``: mean and population standard deviation, as percentages."""
    v = 100.0 * np.asarray(values, dtype=np.float64)
    return f"{v.mean():.2f}±{v.std():.2f}"


def evaluate_seeds(config: RunConfig, seeds: Sequence[int] = tuple(range(10)), split: str = "test",
                   cache_dir=None) -> dict:
    """Repeat the pipeline over ``seeds``; report each score and ``mean±std``."""
    scores = []
    for s in seeds:
        cfg = copy.deepcopy(config)
        cfg.seed = int(s)
        scores.append(run_pipeline(cfg, cache_dir=cache_dir)["metrics"][split])
    return {"seeds": list(seeds), "scores": scores, "summary": format_mean_std(scores)}


def sweep_learning_rate(config: RunConfig, grid: Sequence[float] = LR_GRID, cache_dir=None) -> dict:
    """Sequential sweep over the supervised learning rate, selecting by validation micro-F1."""
    results = []
    for lr in grid:
        cfg = copy.deepcopy(config)
        cfg.train.lr = float(lr)
        m = run_pipeline(cfg, cache_dir=cache_dir)
        results.append({"lr": float(lr), "val": m["metrics"]["val"], "test": m["metrics"]["test"]})
    best = max(results, key=lambda r: (r["val"], -r["lr"]))
    return {"results": results, "best_lr": best["lr"]}


def export_embeddings(checkpoint, bundle: DatasetBundle, path) -> int:
    """Write one tab-separated row per subgraph: index, split, labels, e_np..., e_s..."""
    model = checkpoint if isinstance(checkpoint, PadelModel) else PadelModel.load(checkpoint)
    records = list(bundle.subgraphs)
    with open(path, "w") as fh:
        for s in range(0, len(records), 256):
            chunk = records[s:s + 256]
            e_np, e_s = model.encode(pack_views(_record_views(bundle, chunk)))
            for j, rec in enumerate(chunk):
                labels = ",".join(bundle.label_names[c] for c in rec.labels) if bundle.label_names else \
                    ",".join(map(str, rec.labels))
                vals = "\t".join(repr(float(x)) for x in np.concatenate([e_np.data[j], e_s.data[j]]))
                fh.write(f"{s + j}\t{rec.split}\t{labels}\t{vals}\n")
    return len(records)


def timing_report(timings: dict) -> str:
    """Stage wall-clock table laid out as Pretrain/Metrics, Pretrain/Embedding, Train/Subgraph."""
    pre = timings.get("preprocess", {})
    metrics_note = "cache-hit" if pre.get("cache_hit") else ("disabled" if not pre.get("enabled", True) else "")
    emb = timings.get("vsubgae", {}).get("seconds", 0.0) + timings.get("contrast", {}).get("seconds", 0.0)
    tr = timings.get("train", {})
    epochs = tr.get("epochs", 0)
    per100 = tr.get("seconds", 0.0) * 100.0 / epochs if epochs else 0.0
    rows = [
        ("Pretrain", "Metrics", pre.get("seconds", 0.0), metrics_note),
        ("Pretrain", "Embedding", emb,
         f"vsubgae {timings.get('vsubgae', {}).get('seconds', 0.0):.2f}s + "
         f"contrast {timings.get('contrast', {}).get('seconds', 0.0):.2f}s"),
        ("Train", "Subgraph", per100, f"per 100 epochs ({epochs} run)"),
    ]
    lines = [f"{'Phase':<9} {'Step':<10} {'Seconds':>10}  Note"]
    lines += [f"{a:<9} {b:<10} {c:>10.2f}  {d}" for a, b, c, d in rows]
    return "\n".join(lines)
