"""Recording I/O, the synthetic dataset generator, and split utilities.

Recordings travel in a small binary format (little-endian):

    magic  4 bytes b"KREC", version u32 (currently 1),
    c u32, T u64, fs fp64,
    c channel names (u32 length + utf-8),
    c * T fp64 samples, row-major.

Labels live in a plain CSV `slice_index,label` next to the data; the index
is the position of the slice in featurization order.

The synthetic generator plants a band-limited sinusoid on a per-class
channel subset over unit Gaussian background noise, so the differential
entropy of the boosted (channel, band) cells is analytically predictable
and a feature-space centroid classifier serves as an independent oracle.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError
from .features import BAND_EDGES_HZ, EegSlice, N_BANDS, Recording

Array = np.ndarray

REC_MAGIC = b"KREC"
REC_VERSION = 1


# ---------------------------------------------------------------------------
# recording codec

def write_recording(path: str | Path, rec: Recording) -> None:
    c, t = rec.samples.shape
    chunks = [REC_MAGIC, struct.pack("<I", REC_VERSION),
              struct.pack("<I", c), struct.pack("<Q", t),
              struct.pack("<d", rec.sample_rate_hz)]
    for name in rec.channel_names:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
    chunks.append(np.ascontiguousarray(rec.samples).astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_recording(path: str | Path) -> Recording:
    blob = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise ParseError(f"recording truncated while reading {what}", offset=pos)
        piece = blob[pos:pos + n]
        pos += n
        return piece

    if take(4, "magic") != REC_MAGIC:
        raise ParseError(f"bad recording magic, expected {REC_MAGIC!r}", offset=0)
    version = struct.unpack("<I", take(4, "version"))[0]
    if version != REC_VERSION:
        raise ParseError(f"unsupported recording version {version}", offset=4)
    c = struct.unpack("<I", take(4, "channel count"))[0]
    t = struct.unpack("<Q", take(8, "sample count"))[0]
    fs = struct.unpack("<d", take(8, "sample rate"))[0]
    names = []
    for i in range(c):
        name_len = struct.unpack("<I", take(4, f"name length {i}"))[0]
        try:
            names.append(take(name_len, f"name {i}").decode("utf-8"))
        except UnicodeDecodeError as e:
            raise ParseError(f"channel name {i} is not valid utf-8: {e}", offset=pos) from None
    samples = np.frombuffer(take(8 * c * t, "samples"), dtype="<f8").reshape(c, t)
    if pos != len(blob):
        raise ParseError(f"{len(blob) - pos} trailing bytes after samples", offset=pos)
    return Recording(channel_names=tuple(names), sample_rate_hz=fs,
                     samples=samples.astype(np.float64))


# ---------------------------------------------------------------------------
# labels CSV

def write_labels(path: str | Path, labels: Array) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slice_index", "label"])
        for i, label in enumerate(labels):
            writer.writerow([i, int(label)])


def read_labels(path: str | Path) -> Array:
    rows: dict[int, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["slice_index", "label"]:
            raise ParseError(f"labels header {header!r}, expected ['slice_index', 'label']",
                             offset=1)
        for lineno, row in enumerate(reader, start=2):
            try:
                idx, label = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise ParseError(f"bad labels row {row!r}", offset=lineno) from None
            if idx in rows:
                raise ParseError(f"duplicate slice index {idx}", offset=lineno)
            rows[idx] = label
    if sorted(rows) != list(range(len(rows))):
        raise ParseError("labels must cover slice indices 0..N-1 exactly")
    return np.array([rows[i] for i in range(len(rows))], dtype=np.int64)


# ---------------------------------------------------------------------------
# datasets

@dataclass
class LabeledDataset:
    """Aligned slices and class ids with a split tag for bookkeeping."""

    slices: list[EegSlice]
    labels: Array
    class_names: tuple[str, ...]
    split: str = "all"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.slices) != len(self.labels):
            raise ContractError(f"LabeledDataset: {len(self.slices)} slices vs "
                                f"{len(self.labels)} labels")
        k = len(self.class_names)
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= k):
            raise ContractError(f"LabeledDataset: labels outside [0, {k})")

    def __len__(self) -> int:
        return len(self.slices)

    def subset(self, indices: Array, split: str) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(slices=[self.slices[i] for i in indices],
                              labels=self.labels[indices],
                              class_names=self.class_names, split=split)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for the synthetic dataset: per class, one boosted band on a
    channel subset at the given amplitude-to-noise ratio."""

    n_classes: int
    channels: int
    sample_rate_hz: float
    window_s: float
    class_bands: tuple[int, ...]
    class_channels: tuple[tuple[int, ...], ...]
    snr: float
    samples_per_class: int
    seed: int

    def __post_init__(self):
        if self.n_classes < 1 or self.channels < 1 or self.samples_per_class < 1:
            raise ContractError("SynthSpec: counts must be positive")
        if len(self.class_bands) != self.n_classes or len(self.class_channels) != self.n_classes:
            raise ContractError("SynthSpec: per-class settings must match n_classes")
        for band in self.class_bands:
            if not 0 <= band < N_BANDS:
                raise ContractError(f"SynthSpec: band index {band} out of range")
        for subset in self.class_channels:
            for ch in subset:
                if not 0 <= ch < self.channels:
                    raise ContractError(f"SynthSpec: channel {ch} out of range")
        if self.snr < 0:
            raise ContractError("SynthSpec: snr must be >= 0")


def default_synth_spec(n_classes: int = 3, channels: int = 16,
                       sample_rate_hz: float = 200.0, window_s: float = 3.0,
                       snr: float = 3.0, samples_per_class: int = 300,
                       seed: int = 0) -> SynthSpec:
    """Distinct contiguous channel blocks, bands cycling from alpha upward."""
    bands = tuple((2 + k) % N_BANDS for k in range(n_classes))
    blocks = tuple(tuple(range(k * channels // n_classes, (k + 1) * channels // n_classes))
                   for k in range(n_classes))
    return SynthSpec(n_classes=n_classes, channels=channels,
                     sample_rate_hz=sample_rate_hz, window_s=window_s,
                     class_bands=bands, class_channels=blocks, snr=snr,
                     samples_per_class=samples_per_class, seed=seed)


def band_center_hz(band: int, sample_rate_hz: float) -> float:
    lo, hi = BAND_EDGES_HZ[band]
    return (lo + min(hi, sample_rate_hz / 2.0)) / 2.0


def synth_generate(spec: SynthSpec) -> LabeledDataset:
    """Unit Gaussian noise everywhere plus a class-band sinusoid of amplitude
    ``snr`` on the class's channels; balanced, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    t = int(round(spec.window_s * spec.sample_rate_hz))
    if t < 4:
        raise ContractError(f"SynthSpec: window of {t} samples is too short")
    times = np.arange(t) / spec.sample_rate_hz
    slices = []
    labels = []
    for k in range(spec.n_classes):
        freq = band_center_hz(spec.class_bands[k], spec.sample_rate_hz)
        chans = list(spec.class_channels[k])
        for _ in range(spec.samples_per_class):
            x = rng.standard_normal((spec.channels, t))
            if chans and spec.snr > 0:
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x[chans, :] += spec.snr * np.sin(2.0 * np.pi * freq * times + phase)
            slices.append(EegSlice(samples=x, sample_rate_hz=spec.sample_rate_hz))
            labels.append(k)
    class_names = tuple(f"class{k}" for k in range(spec.n_classes))
    return LabeledDataset(slices=slices, labels=np.array(labels), class_names=class_names)


def split_indices(labels: Array, n_classes: int, test_frac: float,
                  seed: int) -> tuple[Array, Array]:
    """Stratified disjoint train/test index sets, deterministic per seed."""
    if not 0.0 < test_frac < 1.0:
        raise ContractError(f"split: test_frac {test_frac} not in (0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for k in range(n_classes):
        members = np.flatnonzero(labels == k)
        if len(members) < 2:
            raise ContractError(f"split: class {k} has {len(members)} samples, need >= 2")
        order = rng.permutation(len(members))
        n_test = int(round(test_frac * len(members)))
        n_test = min(max(n_test, 1), len(members) - 1)
        test_idx.extend(members[order[:n_test]])
        train_idx.extend(members[order[n_test:]])
    return np.sort(np.array(train_idx)), np.sort(np.array(test_idx))


def split(ds: LabeledDataset, test_frac: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified disjoint train/test split, deterministic per seed."""
    train_idx, test_idx = split_indices(ds.labels, len(ds.class_names), test_frac, seed)
    return ds.subset(train_idx, "train"), ds.subset(test_idx, "test")


# ---------------------------------------------------------------------------
# dataset directories (one recording per slice + labels.csv + manifest.json)

def dataset_channel_names(n: int) -> tuple[str, ...]:
    return tuple(f"CH{i + 1:02d}" for i in range(n))


def save_dataset(dirpath: str | Path, ds: LabeledDataset,
                 channel_names: tuple[str, ...]) -> None:
    import json

    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for i, sl in enumerate(ds.slices):
        rec = Recording(channel_names=channel_names, sample_rate_hz=sl.sample_rate_hz,
                        samples=sl.samples)
        write_recording(dirpath / f"rec_{i:05d}.krec", rec)
    write_labels(dirpath / "labels.csv", ds.labels)
    manifest = {
        "n_slices": len(ds.slices),
        "class_names": list(ds.class_names),
        "channel_names": list(channel_names),
        "sample_rate_hz": ds.slices[0].sample_rate_hz if ds.slices else None,
        "window_samples": ds.slices[0].n_samples if ds.slices else None,
    }
    (dirpath / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")


def load_dataset(dirpath: str | Path) -> tuple[LabeledDataset, tuple[str, ...]]:
    import json

    dirpath = Path(dirpath)
    manifest_path = dirpath / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(f"no manifest.json in {dirpath}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    n = int(manifest["n_slices"])
    channel_names = tuple(manifest["channel_names"])
    slices = []
    for i in range(n):
        rec = read_recording(dirpath / f"rec_{i:05d}.krec")
        if rec.channel_names != channel_names:
            raise ParseError(f"rec_{i:05d}.krec channel names disagree with manifest")
        slices.append(EegSlice(samples=rec.samples, sample_rate_hz=rec.sample_rate_hz))
    labels = read_labels(dirpath / "labels.csv")
    if len(labels) != n:
        raise ParseError(f"labels.csv has {len(labels)} rows for {n} slices")
    ds = LabeledDataset(slices=slices, labels=labels,
                        class_names=tuple(manifest["class_names"]))
    return ds, channel_names
