"""Contrastive and supervised objectives.

Inner-view: pairwise cross-correlation of augmented representations along
the batch, pushed toward the identity by a Barlow-Twins penalty, averaged
over the two views. Cross-view: InfoNCE where same-augmentation pairs
across views are positives and different-augmentation cross pairs are
negatives. Loss fusion uses learnable log-domain noise scales so the
relative weights are trained rather than tuned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError

NORM_FLOOR = 1e-12


@dataclass
class LossWeights:
    """Learnable log sigmas; sigma = exp(log_sigma) stays positive by construction."""

    log_sigma_s: Tensor
    log_sigma_t: Tensor
    log_sigma_pt: Tensor
    log_sigma_ce: Tensor

    @classmethod
    def unit(cls) -> "LossWeights":
        return cls(log_sigma_s=Tensor(0.0, requires_grad=True),
                   log_sigma_t=Tensor(0.0, requires_grad=True),
                   log_sigma_pt=Tensor(0.0, requires_grad=True),
                   log_sigma_ce=Tensor(0.0, requires_grad=True))

    def named(self) -> dict[str, Tensor]:
        return {"sigma.log_sigma_s": self.log_sigma_s,
                "sigma.log_sigma_t": self.log_sigma_t,
                "sigma.log_sigma_pt": self.log_sigma_pt,
                "sigma.log_sigma_ce": self.log_sigma_ce}

    def set_named(self, name: str, tensor: Tensor) -> None:
        setattr(self, name.split(".", 1)[1], tensor)


def _check_repset(op: str, reps: Sequence[Tensor], min_count: int) -> None:
    if len(reps) < min_count:
        raise ContractError(f"{op}: need >= {min_count} representation tensors, got {len(reps)}")
    first = reps[0].shape
    if len(first) != 2:
        raise DimensionError(f"{op}: representations must be (B, h), got {first}")
    for r in reps:
        if r.shape != first:
            raise DimensionError(f"{op}: mismatched representation shapes {r.shape} vs {first}")


def cross_correlation(reps: Sequence[Tensor], center: bool = False,
                      first_tensor_denominator: bool = False) -> Tensor:
    """Mean pairwise (h, h) correlation matrix of m (B, h) rep tensors.

    Each pair term correlates dimension i of one tensor with dimension j of
    the other along the batch, normalized by the two column norms (floored
    at 1e-12) so entries stay in [-1, 1]; the sum over the m*(m-1)/2 pairs
    is divided by the pair count. Raw second moments by default; ``center``
    subtracts per-dimension batch means first. ``first_tensor_denominator``
    switches the second norm to the first tensor's column (a deliberately
    unusual convention kept behind a flag).
    """
    _check_repset("cross_correlation", reps, min_count=2)
    bsz, h = reps[0].shape
    if bsz < 2:
        raise ContractError(f"cross_correlation: batch of {bsz} has no variance to correlate")
    if center:
        centered = []
        for r in reps:
            mean = ad.mul_scalar(ad.tensor_sum(r, axis=0), 1.0 / bsz)
            centered.append(ad.add_rowvec(r, ad.mul_scalar(mean, -1.0)))
        reps = centered

    def col_norms(r: Tensor) -> Tensor:
        return ad.clip_min(ad.sqrt(ad.tensor_sum(ad.mul(r, r), axis=0)), NORM_FLOOR)

    m = len(reps)
    total: Tensor | None = None
    for p_idx in range(m):
        for q_idx in range(p_idx + 1, m):
            rp, rq = reps[p_idx], reps[q_idx]
            num = ad.matmul(rp.transpose(), rq)
            np_col = col_norms(rp)
            nq_col = col_norms(rp if first_tensor_denominator else rq)
            denom = ad.matmul(ad.reshape(np_col, (h, 1)), ad.reshape(nq_col, (1, h)))
            term = ad.div(num, denom)
            total = term if total is None else ad.add(total, term)
    pairs = m * (m - 1) // 2
    return ad.mul_scalar(total, 1.0 / pairs)


def barlow_twins_loss(c: Tensor) -> Tensor:
    """Identity-matrix penalty: mean squared diagonal shortfall plus mean
    squared off-diagonal leakage of a square correlation matrix."""
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"barlow_twins_loss: expected square matrix, got {c.shape}")
    h = c.shape[0]
    eye = Tensor(np.eye(h))
    diag = ad.tensor_sum(ad.mul(c, eye), axis=1)
    on_term = ad.mul_scalar(ad.tensor_sum(ad.square(ad.add_scalar(ad.mul_scalar(diag, -1.0), 1.0))),
                            1.0 / h)
    if h == 1:
        return on_term
    off = ad.mul(c, Tensor(1.0 - np.eye(h)))
    off_term = ad.mul_scalar(ad.tensor_sum(ad.square(off)), 1.0 / (h * (h - 1)))
    return ad.add(on_term, off_term)


def inner_view_loss(scalp_reps: Sequence[Tensor], topo_reps: Sequence[Tensor],
                    center: bool = False, first_tensor_denominator: bool = False) -> Tensor:
    """Mean of the two per-view Barlow-Twins losses."""
    c_s = cross_correlation(scalp_reps, center, first_tensor_denominator)
    c_t = cross_correlation(topo_reps, center, first_tensor_denominator)
    return ad.mul_scalar(ad.add(barlow_twins_loss(c_s), barlow_twins_loss(c_t)), 0.5)


def cross_view_infonce(scalp_reps: Sequence[Tensor], topo_reps: Sequence[Tensor],
                       tau: float, symmetric_negatives: bool = False) -> Tensor:
    """Same-augmentation cross-view InfoNCE.

    Positives pair representation i of one view with representation i of
    the other; negatives pair i with j > i across views (both directions
    when ``symmetric_negatives``). All similarities are cosine with norms
    floored at 1e-12, scaled by 1/tau, exponentiated and summed over batch
    and indices; the loss is -(1/B) log(pos / (pos + neg)).
    """
    if not tau > 0:
        raise ContractError(f"cross_view_infonce: tau must be positive, got {tau}")
    _check_repset("cross_view_infonce", list(scalp_reps) + list(topo_reps), min_count=1)
    if len(scalp_reps) != len(topo_reps):
        raise ContractError(f"cross_view_infonce: {len(scalp_reps)} scalp vs "
                            f"{len(topo_reps)} topology tensors")
    m = len(scalp_reps)
    bsz = scalp_reps[0].shape[0]

    def heat(a: Tensor, b: Tensor) -> Tensor:
        return ad.tensor_sum(ad.exp(ad.mul_scalar(ad.cosine_rows(a, b, NORM_FLOOR), 1.0 / tau)))

    positive: Tensor | None = None
    for i in range(m):
        term = heat(scalp_reps[i], topo_reps[i])
        positive = term if positive is None else ad.add(positive, term)

    negative: Tensor | None = None
    for i in range(m):
        for j in range(i + 1, m):
            term = heat(scalp_reps[i], topo_reps[j])
            if symmetric_negatives:
                term = ad.add(term, heat(topo_reps[i], scalp_reps[j]))
            negative = term if negative is None else ad.add(negative, term)

    if negative is None:
        return ad.mul_scalar(ad.sub(ad.log(positive), ad.log(positive)), 1.0 / bsz)
    ratio = ad.sub(ad.log(positive), ad.log(ad.add(positive, negative)))
    return ad.mul_scalar(ratio, -1.0 / bsz)


def pretrain_loss(inner: Tensor, cross: Tensor, w: LossWeights) -> Tensor:
    """inner/sigma_s^2 + cross/sigma_t^2 + log sigma_s + log sigma_t."""
    inv_s = ad.exp(ad.mul_scalar(w.log_sigma_s, -2.0))
    inv_t = ad.exp(ad.mul_scalar(w.log_sigma_t, -2.0))
    weighted = ad.add(ad.mul(inner, inv_s), ad.mul(cross, inv_t))
    return ad.add(weighted, ad.add(w.log_sigma_s, w.log_sigma_t))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log softmax probability of the true class.

    Computed as logsumexp(logits) - true logit with a constant row max
    subtracted inside the exp for stability (exact for the gradient).
    """
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy: logits must be (B, K), got {logits.shape}")
    labels = np.asarray(labels)
    bsz, k = logits.shape
    if labels.shape != (bsz,):
        raise DimensionError(f"cross_entropy: {labels.shape} labels for batch {bsz}")
    if labels.min() < 0 or labels.max() >= k:
        raise ContractError(f"cross_entropy: labels outside [0, {k})")
    row_max = Tensor(logits.data.max(axis=1))            # constant shift
    shifted = ad.add_colvec(logits, ad.mul_scalar(row_max, -1.0))
    lse = ad.add(ad.log(ad.tensor_sum(ad.exp(shifted), axis=1)), row_max)
    onehot = Tensor(np.eye(k)[labels])
    true_logit = ad.tensor_sum(ad.mul(logits, onehot), axis=1)
    return ad.mul_scalar(ad.tensor_sum(ad.sub(lse, true_logit)), 1.0 / bsz)


def joint_loss(l_pt: Tensor, l_ce: Tensor, w: LossWeights) -> Tensor:
    """l_pt/sigma_pt^2 + l_ce/sigma_ce^2 + log(sigma_pt * sigma_ce)."""
    inv_pt = ad.exp(ad.mul_scalar(w.log_sigma_pt, -2.0))
    inv_ce = ad.exp(ad.mul_scalar(w.log_sigma_ce, -2.0))
    weighted = ad.add(ad.mul(l_pt, inv_pt), ad.mul(l_ce, inv_ce))
    return ad.add(weighted, ad.add(w.log_sigma_pt, w.log_sigma_ce))
