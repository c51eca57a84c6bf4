"""Base encoders for the two views, representation fusion, and the decoder.

The scalp encoder is a shallow CNN over the 9x9x5 grid tensor: two
conv(2x2) -> relu -> maxpool(2x2) blocks, then a fully connected map to the
representation. The topology encoder runs two spectral graph-convolution
layers, g' = relu(L g theta) with L the normalized self-loop adjacency,
then flattens node features through a fully connected map. Fusion is plain
concatenation, scalp first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .features import N_BANDS
from .views import GRID_SIZE, TopologyGraph

Array = np.ndarray


@dataclass(frozen=True)
class EncoderConfig:
    rep_dim: int = 128
    conv_channels: tuple[int, int] = (16, 32)
    gcn_channels: tuple[int, int] = (32, 32)
    decoder_hidden: int = 64

    def __post_init__(self):
        if self.rep_dim < 1 or self.decoder_hidden < 1:
            raise DimensionError("EncoderConfig: dimensions must be positive")
        if len(self.conv_channels) != 2 or len(self.gcn_channels) != 2:
            raise DimensionError("EncoderConfig: exactly two conv and two gcn widths")


@dataclass
class ScalpEncoderParams:
    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    fc_w: Tensor
    fc_b: Tensor


@dataclass
class TopoEncoderParams:
    theta1: Tensor
    theta2: Tensor
    fc_w: Tensor
    fc_b: Tensor


@dataclass
class DecoderParams:
    hidden_w: Tensor
    hidden_b: Tensor
    out_w: Tensor
    out_b: Tensor


@dataclass
class ModelParams:
    scalp: ScalpEncoderParams
    topo: TopoEncoderParams
    decoder: DecoderParams


def _glorot(rng: np.random.Generator, shape: tuple[int, ...],
            fan_in: int, fan_out: int) -> Tensor:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape), requires_grad=True)


def _zeros(shape)-> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_params(seed: int, cfg: EncoderConfig, n_channels: int, n_classes: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    k1, k2 = cfg.conv_channels
    g1, g2 = cfg.gcn_channels
    h = cfg.rep_dim
    scalp = ScalpEncoderParams(
        conv1_w=_glorot(rng, (2, 2, N_BANDS, k1), fan_in=2 * 2 * N_BANDS, fan_out=2 * 2 * k1),
        conv1_b=_zeros(k1),
        conv2_w=_glorot(rng, (2, 2, k1, k2), fan_in=2 * 2 * k1, fan_out=2 * 2 * k2),
        conv2_b=_zeros(k2),
        fc_w=_glorot(rng, (k2, h), fan_in=k2, fan_out=h),
        fc_b=_zeros(h),
    )
    topo = TopoEncoderParams(
        theta1=_glorot(rng, (N_BANDS, g1), fan_in=N_BANDS, fan_out=g1),
        theta2=_glorot(rng, (g1, g2), fan_in=g1, fan_out=g2),
        fc_w=_glorot(rng, (n_channels * g2, h), fan_in=n_channels * g2, fan_out=h),
        fc_b=_zeros(h),
    )
    decoder = DecoderParams(
        hidden_w=_glorot(rng, (2 * h, cfg.decoder_hidden), fan_in=2 * h,
                         fan_out=cfg.decoder_hidden),
        hidden_b=_zeros(cfg.decoder_hidden),
        out_w=_glorot(rng, (cfg.decoder_hidden, n_classes), fan_in=cfg.decoder_hidden,
                      fan_out=n_classes),
        out_b=_zeros(n_classes),
    )
    return ModelParams(scalp=scalp, topo=topo, decoder=decoder)


def scalp_encode(sv_batch: Tensor, p: ScalpEncoderParams) -> Tensor:
    """(B, 9, 9, 5) grid tensors -> (B, h) representations."""
    if sv_batch.ndim != 4 or sv_batch.shape[1:] != (GRID_SIZE, GRID_SIZE, N_BANDS):
        raise DimensionError(f"scalp_encode: expected (B, {GRID_SIZE}, {GRID_SIZE}, {N_BANDS}), "
                             f"got {sv_batch.shape}")
    x = ad.relu(ad.add_chanvec(ad.conv2d(sv_batch, p.conv1_w), p.conv1_b))
    x = ad.maxpool2d(x)
    x = ad.relu(ad.add_chanvec(ad.conv2d(x, p.conv2_w), p.conv2_b))
    x = ad.maxpool2d(x)
    bsz = x.shape[0]
    flat = ad.reshape(x, (bsz, x.shape[1] * x.shape[2] * x.shape[3]))
    return ad.add_rowvec(ad.matmul(flat, p.fc_w), p.fc_b)


def _graph_matmul(laplacian: Tensor, g: Tensor) -> Tensor:
    """Apply the (c, c) operator to each sample of a (B, c, F) feature stack."""
    bsz, c, f = g.shape
    stacked = ad.reshape(ad.permute(g, (1, 0, 2)), (c, bsz * f))
    mixed = ad.matmul(laplacian, stacked)
    return ad.permute(ad.reshape(mixed, (c, bsz, f)), (1, 0, 2))


def _node_linear(g: Tensor, theta: Tensor) -> Tensor:
    """Right-multiply each sample's node features: (B, c, F) x (F, F')."""
    bsz, c, f = g.shape
    out = ad.matmul(ad.reshape(g, (bsz * c, f)), theta)
    return ad.reshape(out, (bsz, c, theta.shape[1]))


def topo_encode(m_batch: Tensor, graph: TopologyGraph | Tensor,
                p: TopoEncoderParams) -> Tensor:
    """(B, c, 5) feature matrices over a fixed graph -> (B, h) representations."""
    laplacian = graph if isinstance(graph, Tensor) else Tensor(graph.laplacian)
    if m_batch.ndim != 3 or m_batch.shape[2] != N_BANDS:
        raise DimensionError(f"topo_encode: expected (B, c, {N_BANDS}), got {m_batch.shape}")
    if m_batch.shape[1] != laplacian.shape[0]:
        raise DimensionError(f"topo_encode: {m_batch.shape[1]} channels vs "
                             f"{laplacian.shape[0]} graph nodes")
    g = ad.relu(_node_linear(_graph_matmul(laplacian, m_batch), p.theta1))
    g = ad.relu(_node_linear(_graph_matmul(laplacian, g), p.theta2))
    bsz = g.shape[0]
    flat = ad.reshape(g, (bsz, g.shape[1] * g.shape[2]))
    return ad.add_rowvec(ad.matmul(flat, p.fc_w), p.fc_b)


def fuse(r_s: Tensor, r_t: Tensor) -> Tensor:
    """Concatenate per-sample representations, scalp first: (B, h)+(B, h) -> (B, 2h)."""
    if r_s.ndim != 2 or r_s.shape != r_t.shape:
        raise DimensionError(f"fuse: shapes {r_s.shape} and {r_t.shape} do not match")
    return ad.concat([r_s, r_t], axis=1)


def decode(r_f: Tensor, p: DecoderParams) -> Tensor:
    """Fused representation -> unnormalized class logits."""
    if r_f.ndim != 2 or r_f.shape[1] != p.hidden_w.shape[0]:
        raise DimensionError(f"decode: input {r_f.shape} vs hidden weight "
                             f"{p.hidden_w.shape}")
    hidden = ad.relu(ad.add_rowvec(ad.matmul(r_f, p.hidden_w), p.hidden_b))
    return ad.add_rowvec(ad.matmul(hidden, p.out_w), p.out_b)


# ---------------------------------------------------------------------------
# parameter bookkeeping

_SCALP_FIELDS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b")
_TOPO_FIELDS = ("theta1", "theta2", "fc_w", "fc_b")
_DECODER_FIELDS = ("hidden_w", "hidden_b", "out_w", "out_b")


def named_params(model: ModelParams, include_decoder: bool = True) -> dict[str, Tensor]:
    """Stable name -> tensor map across encoders (and optionally the decoder)."""
    out: dict[str, Tensor] = {}
    for f in _SCALP_FIELDS:
        out[f"scalp.{f}"] = getattr(model.scalp, f)
    for f in _TOPO_FIELDS:
        out[f"topo.{f}"] = getattr(model.topo, f)
    if include_decoder:
        for f in _DECODER_FIELDS:
            out[f"decoder.{f}"] = getattr(model.decoder, f)
    return out


def set_param(model: ModelParams, name: str, tensor: Tensor) -> None:
    group, fieldname = name.split(".", 1)
    setattr(getattr(model, group), fieldname, tensor)
