"""Feature-matrix augmentations and the per-sample augmentation draw.

All four methods map a (c, 5) feature matrix to another (c, 5) matrix.
The structural views are built from the montage, never from the features,
so masking degrades feature content while shuffles misalign features
against the unchanged spatial/topological structure. Every draw records
the seed that produced it, and one draw feeds both views so cross-view
pairs line up by augmentation index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .features import N_BANDS

Array = np.ndarray

METHODS = ("mask", "spatial_shuffle", "frequency_shuffle", "hybrid")
DEFAULT_MASK_RATE = 0.25


def _check_features(op: str, m: Array) -> Array:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != N_BANDS:
        raise DimensionError(f"{op}: features must be (c, {N_BANDS}), got {m.shape}")
    return m


def mask_count(rate: float, n_channels: int) -> int:
    """Channels to mask: rate * c rounded half-up."""
    return int(np.floor(rate * n_channels + 0.5))


def mask_channels(m: Array, rate: float, rng: np.random.Generator) -> Array:
    """Zero all five features of round(rate * c) channels chosen without replacement."""
    m = _check_features("mask_channels", m)
    if not 0.0 <= rate <= 1.0:
        raise ContractError(f"mask_channels: rate {rate} not in [0, 1]")
    k = mask_count(rate, m.shape[0])
    out = m.copy()
    if k > 0:
        rows = rng.choice(m.shape[0], size=k, replace=False)
        out[rows, :] = 0.0
    return out


def spatial_shuffle(m: Array, rng: np.random.Generator) -> Array:
    """Permute the channel rows by one uniform draw over all c! orders."""
    m = _check_features("spatial_shuffle", m)
    return m[rng.permutation(m.shape[0])]


def frequency_shuffle(m: Array, rng: np.random.Generator) -> Array:
    """Permute each channel's five band features by an independent uniform draw."""
    m = _check_features("frequency_shuffle", m)
    out = np.empty_like(m)
    for i in range(m.shape[0]):
        out[i] = m[i, rng.permutation(N_BANDS)]
    return out


def hybrid(m: Array, rng: np.random.Generator, mask_rate: float = DEFAULT_MASK_RATE) -> Array:
    """Spatial shuffle, then frequency shuffle, then mask, in that fixed order."""
    return mask_channels(frequency_shuffle(spatial_shuffle(m, rng), rng), mask_rate, rng)


@dataclass(frozen=True)
class AugmentedSample:
    """One augmented feature matrix destined for both views."""

    features: Array
    aug_id: int           # 1..m within the draw set
    method: str
    rng_seed: int


def apply_seeded(m: Array, seed: int, methods: tuple[str, ...] = METHODS,
                 mask_rate: float = DEFAULT_MASK_RATE) -> tuple[str, Array]:
    """Method choice plus application, fully determined by one child seed.

    The rng consumption depends only on the feature shape, so replaying the
    same seed applies the identical transform to any (c, 5) matrix; that is
    what makes a recorded draw replayable as a fixed linear map.
    """
    m = _check_features("apply_seeded", m)
    child = np.random.default_rng(seed)
    method = methods[int(child.integers(0, len(methods)))]
    if method == "mask":
        feats = mask_channels(m, mask_rate, child)
    elif method == "spatial_shuffle":
        feats = spatial_shuffle(m, child)
    elif method == "frequency_shuffle":
        feats = frequency_shuffle(m, child)
    else:
        feats = hybrid(m, child, mask_rate)
    return method, feats


def draw_augmentations(m: Array, count: int, rng: np.random.Generator,
                       methods: tuple[str, ...] = METHODS,
                       mask_rate: float = DEFAULT_MASK_RATE) -> list[AugmentedSample]:
    """Draw ``count`` augmented copies, each with a method chosen uniformly.

    Each copy gets its own child seed (recorded on the sample) so a draw
    set is reproducible from (features, master seed, count).
    """
    m = _check_features("draw_augmentations", m)
    if count < 1:
        raise ContractError(f"draw_augmentations: count must be >= 1, got {count}")
    if not methods:
        raise ContractError("draw_augmentations: empty method set")
    for meth in methods:
        if meth not in METHODS:
            raise ContractError(f"draw_augmentations: unknown method {meth!r}")
    samples = []
    for aug_id in range(1, count + 1):
        seed = int(rng.integers(0, 2 ** 63 - 1))
        method, feats = apply_seeded(m, seed, methods, mask_rate)
        samples.append(AugmentedSample(features=feats, aug_id=aug_id,
                                       method=method, rng_seed=seed))
    return samples
