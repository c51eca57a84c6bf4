"""Windowing, band decomposition, and differential-entropy features.

A raw multichannel recording is cut into fixed-length windows, each window
is split into the five canonical EEG bands with a zero-phase FFT mask, and
every (channel, band) signal is summarized by its differential entropy
under a Gaussian fit, 0.5 * ln(2*pi*e*variance). The result is a (c, 5)
feature matrix per window that everything downstream consumes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray

BAND_ORDER = ("delta", "theta", "alpha", "beta", "gamma")
BAND_EDGES_HZ = ((0.5, 4.0), (4.0, 8.0), (8.0, 12.0), (12.0, 30.0), (30.0, 80.0))
N_BANDS = len(BAND_ORDER)

VARIANCE_FLOOR = 1e-8  # keeps the log finite on flat channels
GAMMA_FULL_RATE_HZ = 160.0  # below this the gamma band is truncated at Nyquist


@dataclass(frozen=True)
class Recording:
    """Raw c x T signal in microvolts with named channels."""

    channel_names: tuple[str, ...]
    sample_rate_hz: float
    samples: Array

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if samples.ndim != 2:
            raise DimensionError(f"Recording: samples must be 2-D, got shape {samples.shape}")
        if len(self.channel_names) != samples.shape[0]:
            raise ContractError(
                f"Recording: {len(self.channel_names)} names for {samples.shape[0]} channels")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ContractError("Recording: channel names must be unique")
        if samples.shape[1] < 1:
            raise ContractError("Recording: empty signal")
        if not self.sample_rate_hz > 0:
            raise ContractError(f"Recording: bad sample rate {self.sample_rate_hz}")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class EegSlice:
    """One analysis window of a recording."""

    samples: Array
    sample_rate_hz: float
    origin_offset: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 2:
            raise DimensionError(f"EegSlice: samples must be 2-D, got shape {samples.shape}")
        if samples.shape[1] < 2:
            raise ContractError(f"EegSlice: window of {samples.shape[1]} samples is too short")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


def slice_signal(rec: Recording, window_s: float, overlap_frac: float) -> list[EegSlice]:
    """Cut a recording into windows; stride = window * (1 - overlap), floored.

    The final partial window is dropped. A window longer than the recording
    is an error rather than an empty result.
    """
    if not 0.0 <= overlap_frac < 1.0:
        raise ContractError(f"slice_signal: overlap_frac {overlap_frac} not in [0, 1)")
    window = int(round(window_s * rec.sample_rate_hz))
    if window < 2:
        raise ContractError(f"slice_signal: window of {window} samples is too short")
    if window > rec.n_samples:
        raise ContractError(
            f"slice_signal: window {window} exceeds recording length {rec.n_samples}")
    stride = max(1, int(window * (1.0 - overlap_frac)))
    slices = []
    offset = 0
    while offset + window <= rec.n_samples:
        slices.append(EegSlice(samples=rec.samples[:, offset:offset + window],
                               sample_rate_hz=rec.sample_rate_hz,
                               origin_offset=offset))
        offset += stride
    return slices


def band_decompose(sl: EegSlice) -> Array:
    """Split a window into the five bands via zero-phase FFT masking.

    Returns an array of shape (5, c, t). For each band, FFT coefficients
    with frequency outside [lo, hi) are zeroed and the signal inverse
    transformed; the half-open edges keep bands disjoint. Below 160 Hz the
    gamma band is truncated at Nyquist with a warning.
    """
    if sl.n_samples < 4:
        raise ContractError(f"band_decompose: window of {sl.n_samples} samples is too short")
    fs = sl.sample_rate_hz
    nyquist = fs / 2.0
    if fs < GAMMA_FULL_RATE_HZ:
        warnings.warn(
            f"sample rate {fs} Hz < {GAMMA_FULL_RATE_HZ} Hz: gamma band truncated at Nyquist",
            stacklevel=2)
    t = sl.n_samples
    freqs = np.fft.rfftfreq(t, d=1.0 / fs)
    spectrum = np.fft.rfft(sl.samples, axis=1)
    out = np.empty((N_BANDS, sl.n_channels, t))
    for k, (lo, hi) in enumerate(BAND_EDGES_HZ):
        hi_eff = min(hi, nyquist)
        mask = (freqs >= lo) & (freqs < hi_eff)
        out[k] = np.fft.irfft(spectrum * mask[None, :], n=t, axis=1)
    return out


def differential_entropy(x: Array) -> float:
    """0.5 * ln(2*pi*e*var(x)) with the population variance, floored at 1e-8."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ContractError(f"differential_entropy: need a vector of >= 2 samples, got {x.shape}")
    var = float(np.var(x))
    return 0.5 * float(np.log(2.0 * np.pi * np.e * max(var, VARIANCE_FLOOR)))


def de_features(sl: EegSlice) -> Array:
    """Per-channel differential entropy of each band: the (c, 5) feature matrix.

    Column order follows BAND_ORDER. Deterministic and channel-local.
    """
    bands = band_decompose(sl)
    c = sl.n_channels
    out = np.empty((c, N_BANDS))
    for i in range(c):
        for k in range(N_BANDS):
            out[i, k] = differential_entropy(bands[k, i])
    return out
