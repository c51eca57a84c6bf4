"""Training modes: self-supervised pretraining, frozen-encoder fine-tuning,
and joint training, plus few-label subsampling and metrics emission.

A training step is one tape forward/backward over a minibatch followed by
an Adam update; everything is single-threaded and deterministic given
(config, seed, data). Metrics stream as one JSON object per epoch per
phase; in deterministic mode the wall-clock field is written as 0.0 so two
identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import augment
from .autodiff import Tape, Tensor
from .checkpoint import expect_shapes, load_arrays, save_arrays
from .encoders import (DecoderParams, EncoderConfig, ModelParams, decode, fuse,
                       init_params, named_params, scalp_encode, set_param, topo_encode)
from .errors import ConfigError, ContractError, NumericError, TrainingAborted
from .features import N_BANDS, de_features
from .losses import (LossWeights, cross_entropy, cross_view_infonce,
                     inner_view_loss, joint_loss, pretrain_loss)
from .optim import Adam
from .views import Montage, TopologyGraph, build_topology_graph, scalp_view_batch

Array = np.ndarray

MODES = ("pretrain", "finetune", "joint")


@dataclass
class TrainConfig:
    mode: str
    epochs: int
    batch_size: int = 256
    lr: float = 0.01
    n_augments: int = 3
    tau: float = 0.1
    mask_rate: float = 0.25
    seed: int = 0
    label_fraction: float = 1.0
    aug_methods: tuple[str, ...] = augment.METHODS
    center_correlation: bool = False
    first_tensor_denominator: bool = False
    symmetric_negatives: bool = False
    deterministic: bool = False

    def __post_init__(self):
        self.aug_methods = tuple(self.aug_methods)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.mode in ("pretrain", "joint") and self.n_augments < 2:
            raise ConfigError(f"{self.mode} needs n_augments >= 2 for the inner-view "
                              f"correlation, got {self.n_augments}")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ConfigError(f"label_fraction {self.label_fraction} not in (0, 1]")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ConfigError(f"mask_rate {self.mask_rate} not in [0, 1]")


@dataclass
class FeatureSet:
    """Featurized dataset: one (c, 5) matrix per slice plus optional labels."""

    features: Array                 # (N, c, 5)
    labels: Array | None
    class_names: tuple[str, ...]
    channel_names: tuple[str, ...]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 3 or self.features.shape[2] != N_BANDS:
            raise ContractError(f"FeatureSet: features must be (N, c, {N_BANDS}), "
                                f"got {self.features.shape}")
        if self.features.shape[1] != len(self.channel_names):
            raise ContractError("FeatureSet: channel_names do not match feature width")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ContractError("FeatureSet: labels misaligned with features")

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, indices: Array) -> "FeatureSet":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureSet(features=self.features[indices],
                          labels=None if self.labels is None else self.labels[indices],
                          class_names=self.class_names,
                          channel_names=self.channel_names)


def featurize_dataset(slices, labels, class_names, channel_names) -> FeatureSet:
    feats = np.stack([de_features(sl) for sl in slices])
    return FeatureSet(features=feats, labels=labels, class_names=tuple(class_names),
                      channel_names=tuple(channel_names))


def few_label_indices(labels: Array, fraction: float, seed: int) -> Array:
    """Stratified uniform subsample of label indices, at least one per class."""
    if not 0.0 < fraction <= 1.0:
        raise ContractError(f"few_label_indices: fraction {fraction} not in (0, 1]")
    labels = np.asarray(labels)
    if fraction == 1.0:
        return np.arange(len(labels))
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for k in np.unique(labels):
        members = np.flatnonzero(labels == k)
        n_keep = max(1, int(np.floor(fraction * len(members))))
        chosen = rng.choice(len(members), size=n_keep, replace=False)
        keep.extend(members[np.sort(chosen)])
    return np.sort(np.array(keep, dtype=np.int64))


def few_label_subsample(ds, fraction: float, seed: int):
    """LabeledDataset variant of the stratified subsample."""
    present = set(np.unique(ds.labels).tolist())
    for k in range(len(ds.class_names)):
        if k not in present:
            raise ContractError(f"few_label_subsample: class {k} absent from data")
    if fraction == 1.0:
        return ds
    idx = few_label_indices(ds.labels, fraction, seed)
    return ds.subset(idx, split=f"{ds.split}-{fraction:g}")


# ---------------------------------------------------------------------------
# batching and augmentation plumbing

def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches; a trailing batch smaller than 2 is dropped."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        batch = order[start:start + batch_size]
        if len(batch) >= 2:
            yield batch


def _augment_slots(feats: Array, cfg: TrainConfig, rng: np.random.Generator) -> list[Array]:
    """Per-sample augmentation draws regrouped by slot: m arrays of (B, c, 5)."""
    bsz = feats.shape[0]
    slots = [np.empty_like(feats) for _ in range(cfg.n_augments)]
    for b in range(bsz):
        drawn = augment.draw_augmentations(feats[b], cfg.n_augments, rng,
                                           methods=cfg.aug_methods,
                                           mask_rate=cfg.mask_rate)
        for i, sample in enumerate(drawn):
            slots[i][b] = sample.features
    return slots


def _snapshot(params: dict[str, Tensor]) -> dict[str, Array]:
    return {name: np.array(t.data, copy=True) for name, t in params.items()}


def _write_back(model: ModelParams, weights: LossWeights,
                new_params: dict[str, Tensor]) -> None:
    for name, tensor in new_params.items():
        if name.startswith("sigma."):
            weights.set_named(name, tensor)
        else:
            set_param(model, name, tensor)


def _grads_of(params: dict[str, Tensor]) -> dict[str, Array]:
    out = {}
    for name, t in params.items():
        if t.grad is None:
            raise ContractError(f"no gradient for parameter {name!r}")
        out[name] = t.grad
    return out


def encode_features(model: ModelParams, feats: Array, montage: Montage,
                    graph: TopologyGraph, batch_size: int = 256) -> Array:
    """Clean (unaugmented) fused representations for a (N, c, 5) stack."""
    laplacian = Tensor(graph.laplacian)
    chunks = []
    for start in range(0, feats.shape[0], batch_size):
        block = feats[start:start + batch_size]
        sv = scalp_view_batch(block, montage)
        r_s = scalp_encode(Tensor(sv), model.scalp)
        r_t = topo_encode(Tensor(block), laplacian, model.topo)
        chunks.append(fuse(r_s, r_t).data)
    return np.concatenate(chunks, axis=0)


# ---------------------------------------------------------------------------
# metrics

_METRIC_KEYS = ("phase", "epoch", "seed", "fraction", "loss_inner", "loss_cross",
                "loss_pt", "loss_ce", "loss_total", "sigma_s", "sigma_t",
                "sigma_pt", "sigma_ce", "train_acc", "seconds")


def metric_record(phase: str, epoch: int, cfg: TrainConfig, *, seconds: float,
                  loss_inner=None, loss_cross=None, loss_pt=None, loss_ce=None,
                  loss_total=None, weights: LossWeights | None = None,
                  train_acc=None, fraction=None) -> dict:
    sigmas = {"sigma_s": None, "sigma_t": None, "sigma_pt": None, "sigma_ce": None}
    if weights is not None:
        sigmas = {"sigma_s": float(np.exp(weights.log_sigma_s.item())),
                  "sigma_t": float(np.exp(weights.log_sigma_t.item())),
                  "sigma_pt": float(np.exp(weights.log_sigma_pt.item())),
                  "sigma_ce": float(np.exp(weights.log_sigma_ce.item()))}
    rec = {"phase": phase, "epoch": epoch, "seed": cfg.seed, "fraction": fraction,
           "loss_inner": loss_inner, "loss_cross": loss_cross, "loss_pt": loss_pt,
           "loss_ce": loss_ce, "loss_total": loss_total, **sigmas,
           "train_acc": train_acc,
           "seconds": 0.0 if cfg.deterministic else round(seconds, 6)}
    return {k: rec[k] for k in _METRIC_KEYS}


def write_metrics(path: str | Path, records: list[dict], append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_metrics(path: str | Path) -> list[dict]:
    from .errors import ParseError

    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ParseError(f"bad metrics JSON: {e.msg}", offset=lineno) from None
    return records


# ---------------------------------------------------------------------------
# training modes

def pretrain(fs: FeatureSet, montage: Montage, cfg: TrainConfig,
             enc_cfg: EncoderConfig, neighborhood: int = 4,
             model: ModelParams | None = None,
             weights: LossWeights | None = None) -> tuple[ModelParams, LossWeights, list[dict]]:
    """Self-supervised training of both encoders plus the two pretrain sigmas."""
    if cfg.mode != "pretrain":
        raise ConfigError(f"pretrain called with mode {cfg.mode!r}")
    if len(fs) < 2:
        raise ContractError("pretrain: need at least one batch of two samples")
    n_classes = max(len(fs.class_names), 1)
    model = model or init_params(cfg.seed, enc_cfg, montage.n_channels, n_classes)
    weights = weights or LossWeights.unit()
    graph = build_topology_graph(montage, neighborhood)
    laplacian = Tensor(graph.laplacian)
    adam = Adam(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    metrics: list[dict] = []

    def trainables() -> dict[str, Tensor]:
        out = named_params(model, include_decoder=False)
        out["sigma.log_sigma_s"] = weights.log_sigma_s
        out["sigma.log_sigma_t"] = weights.log_sigma_t
        return out

    last_good = _snapshot(trainables())
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        sums = {"inner": 0.0, "cross": 0.0, "pt": 0.0}
        seen = 0
        try:
            for batch in _epoch_batches(len(fs), cfg.batch_size, rng):
                feats_b = fs.features[batch]
                slots = _augment_slots(feats_b, cfg, rng)
                svs = [scalp_view_batch(slot, montage) for slot in slots]
                with Tape() as tape:
                    r_s = [scalp_encode(Tensor(sv), model.scalp) for sv in svs]
                    r_t = [topo_encode(Tensor(slot), laplacian, model.topo) for slot in slots]
                    l_inner = inner_view_loss(r_s, r_t, cfg.center_correlation,
                                              cfg.first_tensor_denominator)
                    l_cross = cross_view_infonce(r_s, r_t, cfg.tau, cfg.symmetric_negatives)
                    l_pt = pretrain_loss(l_inner, l_cross, weights)
                tape.backward(l_pt)
                params = trainables()
                _write_back(model, weights, adam.step(params, _grads_of(params)))
                sums["inner"] += l_inner.item() * len(batch)
                sums["cross"] += l_cross.item() * len(batch)
                sums["pt"] += l_pt.item() * len(batch)
                seen += len(batch)
        except NumericError as e:
            _write_back(model, weights,
                        {name: Tensor(arr, requires_grad=True)
                         for name, arr in last_good.items()})
            raise TrainingAborted(f"pretrain epoch {epoch}: {e}; "
                                  f"parameters restored to last good epoch") from e
        last_good = _snapshot(trainables())
        metrics.append(metric_record(
            "pretrain", epoch, cfg, seconds=time.perf_counter() - started,
            loss_inner=sums["inner"] / seen, loss_cross=sums["cross"] / seen,
            loss_pt=sums["pt"] / seen, loss_total=sums["pt"] / seen, weights=weights))
    return model, weights, metrics


def finetune(model: ModelParams, fs: FeatureSet, montage: Montage, cfg: TrainConfig,
             neighborhood: int = 4) -> list[dict]:
    """Train only the decoder on frozen-encoder representations of clean features."""
    if cfg.mode != "finetune":
        raise ConfigError(f"finetune called with mode {cfg.mode!r}")
    if fs.labels is None:
        raise ContractError("finetune: labels required")
    n_classes = model.decoder.out_b.shape[0]
    if len(fs.class_names) != n_classes:
        raise ContractError(f"finetune: dataset has {len(fs.class_names)} classes, "
                            f"decoder expects {n_classes}")
    graph = build_topology_graph(montage, neighborhood)
    keep = few_label_indices(fs.labels, cfg.label_fraction, cfg.seed)
    sub = fs.take(keep)
    reps = encode_features(model, sub.features, montage, graph, cfg.batch_size)
    labels = sub.labels
    adam = Adam(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    metrics: list[dict] = []
    decoder_names = ("decoder.hidden_w", "decoder.hidden_b", "decoder.out_w", "decoder.out_b")
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        total = 0.0
        seen = 0
        for batch in _epoch_batches(len(labels), cfg.batch_size, rng):
            with Tape() as tape:
                logits = decode(Tensor(reps[batch]), model.decoder)
                loss = cross_entropy(logits, labels[batch])
            tape.backward(loss)
            params = {name: t for name, t in named_params(model).items()
                      if name in decoder_names}
            _write_back(model, LossWeights.unit(), adam.step(params, _grads_of(params)))
            total += loss.item() * len(batch)
            seen += len(batch)
        pred = decode(Tensor(reps), model.decoder).data.argmax(axis=1)
        acc = float((pred == labels).mean())
        fraction = cfg.label_fraction if cfg.label_fraction < 1.0 else None
        metrics.append(metric_record(
            "finetune", epoch, cfg, seconds=time.perf_counter() - started,
            loss_ce=total / seen, loss_total=total / seen, train_acc=acc,
            fraction=fraction))
    return metrics


def joint_train(fs: FeatureSet, montage: Montage, cfg: TrainConfig,
                enc_cfg: EncoderConfig, neighborhood: int = 4,
                model: ModelParams | None = None,
                weights: LossWeights | None = None,
                supervised_only: bool = False) -> tuple[ModelParams, LossWeights, list[dict]]:
    """Optimize encoders, decoder, and all four sigmas against the joint loss.

    ``supervised_only`` zeroes the contrastive terms (plain cross-entropy on
    the same architecture) for ablation baselines.
    """
    if cfg.mode != "joint":
        raise ConfigError(f"joint_train called with mode {cfg.mode!r}")
    if fs.labels is None:
        raise ContractError("joint_train: labels required")
    n_classes = len(fs.class_names)
    model = model or init_params(cfg.seed, enc_cfg, montage.n_channels, n_classes)
    weights = weights or LossWeights.unit()
    graph = build_topology_graph(montage, neighborhood)
    laplacian = Tensor(graph.laplacian)
    adam = Adam(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    metrics: list[dict] = []

    def trainables() -> dict[str, Tensor]:
        out = named_params(model, include_decoder=True)
        if not supervised_only:
            out.update(weights.named())
        return out

    last_good = _snapshot(trainables())
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        sums = {"inner": 0.0, "cross": 0.0, "pt": 0.0, "ce": 0.0, "total": 0.0}
        seen = 0
        try:
            for batch in _epoch_batches(len(fs), cfg.batch_size, rng):
                feats_b = fs.features[batch]
                labels_b = fs.labels[batch]
                with Tape() as tape:
                    clean_sv = scalp_view_batch(feats_b, montage)
                    r_s_clean = scalp_encode(Tensor(clean_sv), model.scalp)
                    r_t_clean = topo_encode(Tensor(feats_b), laplacian, model.topo)
                    logits = decode(fuse(r_s_clean, r_t_clean), model.decoder)
                    l_ce = cross_entropy(logits, labels_b)
                    if supervised_only:
                        total_loss = l_ce
                        l_inner = l_cross = l_pt = None
                    else:
                        slots = _augment_slots(feats_b, cfg, rng)
                        svs = [scalp_view_batch(slot, montage) for slot in slots]
                        r_s = [scalp_encode(Tensor(sv), model.scalp) for sv in svs]
                        r_t = [topo_encode(Tensor(slot), laplacian, model.topo)
                               for slot in slots]
                        l_inner = inner_view_loss(r_s, r_t, cfg.center_correlation,
                                                  cfg.first_tensor_denominator)
                        l_cross = cross_view_infonce(r_s, r_t, cfg.tau,
                                                     cfg.symmetric_negatives)
                        l_pt = pretrain_loss(l_inner, l_cross, weights)
                        total_loss = joint_loss(l_pt, l_ce, weights)
                tape.backward(total_loss)
                params = trainables()
                _write_back(model, weights, adam.step(params, _grads_of(params)))
                sums["ce"] += l_ce.item() * len(batch)
                sums["total"] += total_loss.item() * len(batch)
                if not supervised_only:
                    sums["inner"] += l_inner.item() * len(batch)
                    sums["cross"] += l_cross.item() * len(batch)
                    sums["pt"] += l_pt.item() * len(batch)
                seen += len(batch)
        except NumericError as e:
            _write_back(model, weights,
                        {name: Tensor(arr, requires_grad=True)
                         for name, arr in last_good.items()})
            raise TrainingAborted(f"joint epoch {epoch}: {e}; "
                                  f"parameters restored to last good epoch") from e
        last_good = _snapshot(trainables())
        reps = encode_features(model, fs.features, montage, graph, cfg.batch_size)
        pred = decode(Tensor(reps), model.decoder).data.argmax(axis=1)
        acc = float((pred == fs.labels).mean())
        metrics.append(metric_record(
            "joint", epoch, cfg, seconds=time.perf_counter() - started,
            loss_inner=None if supervised_only else sums["inner"] / seen,
            loss_cross=None if supervised_only else sums["cross"] / seen,
            loss_pt=None if supervised_only else sums["pt"] / seen,
            loss_ce=sums["ce"] / seen, loss_total=sums["total"] / seen,
            weights=None if supervised_only else weights, train_acc=acc))
    return model, weights, metrics


# ---------------------------------------------------------------------------
# checkpoints

def model_arrays(model: ModelParams, weights: LossWeights) -> dict[str, Array]:
    arrays = {name: t.data for name, t in named_params(model).items()}
    arrays.update({name: t.data for name, t in weights.named().items()})
    return arrays


def save_checkpoint(path: str | Path, model: ModelParams, weights: LossWeights) -> None:
    save_arrays(path, model_arrays(model, weights))


def load_checkpoint(path: str | Path, enc_cfg: EncoderConfig, n_channels: int,
                    n_classes: int) -> tuple[ModelParams, LossWeights]:
    arrays = load_arrays(path)
    reference = init_params(0, enc_cfg, n_channels, n_classes)
    expected = {name: t.shape for name, t in named_params(reference).items()}
    expected.update({name: () for name in LossWeights.unit().named()})
    expect_shapes(arrays, expected)
    model = reference
    for name in named_params(model):
        set_param(model, name, Tensor(arrays[name], requires_grad=True))
    weights = LossWeights.unit()
    for name in weights.named():
        weights.set_named(name, Tensor(arrays[name], requires_grad=True))
    return model, weights
