"""The two views built from a feature matrix: scalp grid and electrode graph.

The scalp view drops each channel's five band features into its cell of a
fixed 9x9 grid (top-down head projection); empty cells stay zero. The
topology view connects grid-adjacent channels into an undirected graph and
carries the symmetrically normalized self-loop adjacency used by the graph
encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DimensionError, MontageError, ParseError
from .features import N_BANDS

Array = np.ndarray

GRID_SIZE = 9


@dataclass(frozen=True)
class Montage:
    """Channel name -> grid cell mapping; order matches the recording."""

    name: str
    channel_names: tuple[str, ...]
    positions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "positions", tuple((int(r), int(c)) for r, c in self.positions))
        if len(self.channel_names) != len(self.positions):
            raise MontageError(f"{self.name}: {len(self.channel_names)} names for "
                               f"{len(self.positions)} positions")
        if not self.channel_names:
            raise MontageError(f"{self.name}: empty montage")
        if len(self.channel_names) > GRID_SIZE * GRID_SIZE:
            raise MontageError(f"{self.name}: {len(self.channel_names)} channels exceed the "
                               f"{GRID_SIZE}x{GRID_SIZE} grid")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise MontageError(f"{self.name}: duplicate channel names")
        for name, (r, c) in zip(self.channel_names, self.positions):
            if not (0 <= r < GRID_SIZE and 0 <= c < GRID_SIZE):
                raise MontageError(f"{self.name}: {name} at ({r}, {c}) is off the grid")
        if len(set(self.positions)) != len(self.positions):
            raise MontageError(f"{self.name}: two channels share a grid cell")

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)


@dataclass(frozen=True)
class TopologyGraph:
    """Electrode graph with self-loop adjacency and normalized Laplacian."""

    adjacency: Array        # c x c symmetric 0/1, zero diagonal
    self_loop_adjacency: Array  # adjacency + I
    degree: Array           # row sums of self_loop_adjacency
    laplacian: Array        # D^{-1/2} (A + I) D^{-1/2}

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


def build_scalp_view(features: Array, montage: Montage) -> Array:
    """Place the (c, 5) feature matrix onto the 9x9x5 grid tensor."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != N_BANDS:
        raise DimensionError(f"build_scalp_view: features must be (c, {N_BANDS}), "
                             f"got {features.shape}")
    if features.shape[0] != montage.n_channels:
        raise MontageError(f"build_scalp_view: {features.shape[0]} feature rows for "
                           f"{montage.n_channels} montage channels")
    out = np.zeros((GRID_SIZE, GRID_SIZE, N_BANDS))
    rows = [r for r, _ in montage.positions]
    cols = [c for _, c in montage.positions]
    out[rows, cols, :] = features
    return out


def scalp_view_batch(features_batch: Array, montage: Montage) -> Array:
    """Vectorized build_scalp_view over a (B, c, 5) batch -> (B, 9, 9, 5)."""
    features_batch = np.asarray(features_batch, dtype=np.float64)
    if features_batch.ndim != 3 or features_batch.shape[1] != montage.n_channels \
            or features_batch.shape[2] != N_BANDS:
        raise DimensionError(f"scalp_view_batch: expected (B, {montage.n_channels}, {N_BANDS}), "
                             f"got {features_batch.shape}")
    out = np.zeros((features_batch.shape[0], GRID_SIZE, GRID_SIZE, N_BANDS))
    rows = [r for r, _ in montage.positions]
    cols = [c for _, c in montage.positions]
    out[:, rows, cols, :] = features_batch
    return out


def build_topology_graph(montage: Montage, neighborhood: int = 4) -> TopologyGraph:
    """Connect channels whose grid cells are adjacent (4- or 8-neighborhood).

    Isolated channels are fine: the self loop keeps their degree positive.
    """
    if neighborhood not in (4, 8):
        raise ContractError(f"build_topology_graph: neighborhood must be 4 or 8, "
                            f"got {neighborhood}")
    c = montage.n_channels
    adj = np.zeros((c, c))
    for i in range(c):
        ri, ci = montage.positions[i]
        for j in range(i + 1, c):
            rj, cj = montage.positions[j]
            dr, dc = abs(ri - rj), abs(ci - cj)
            if neighborhood == 4:
                connected = dr + dc == 1
            else:
                connected = max(dr, dc) == 1
            if connected:
                adj[i, j] = adj[j, i] = 1.0
    self_loop = adj + np.eye(c)
    degree = self_loop.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    laplacian = self_loop * inv_sqrt[:, None] * inv_sqrt[None, :]
    return TopologyGraph(adjacency=adj, self_loop_adjacency=self_loop,
                         degree=degree, laplacian=laplacian)


# ---------------------------------------------------------------------------
# shipped montages
#
# The named layouts below are best-effort placements of standard electrode
# sets on the 9x9 grid; exact cap geometry is not preserved. tengrid-62
# follows the common 62-channel emotion-recording cap, tengrid-64 the
# 64-channel motor-imagery cap (inferior electrodes folded onto the bottom
# row), tengrid-23 a 10-20 set extended with inferior temporal electrodes.

def _rowplan(plan: list[tuple[int, list[tuple[str, int]]]]) -> tuple[tuple[str, ...], tuple]:
    names, positions = [], []
    for row, entries in plan:
        for name, col in entries:
            names.append(name)
            positions.append((row, col))
    return tuple(names), tuple(positions)


def _tengrid62() -> Montage:
    plan = [
        (0, [("FP1", 3), ("FPZ", 4), ("FP2", 5)]),
        (1, [("AF3", 3), ("AF4", 5)]),
        (2, [(n, i) for i, n in enumerate(["F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8"])]),
        (3, [(n, i) for i, n in enumerate(["FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8"])]),
        (4, [(n, i) for i, n in enumerate(["T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8"])]),
        (5, [(n, i) for i, n in enumerate(["TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8"])]),
        (6, [(n, i) for i, n in enumerate(["P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8"])]),
        (7, [("PO7", 1), ("PO5", 2), ("PO3", 3), ("POZ", 4), ("PO4", 5), ("PO6", 6), ("PO8", 7)]),
        (8, [("CB1", 2), ("O1", 3), ("OZ", 4), ("O2", 5), ("CB2", 6)]),
    ]
    names, positions = _rowplan([(r, e) for r, e in plan])
    return Montage(name="tengrid-62", channel_names=names, positions=positions)


def _tengrid64() -> Montage:
    plan = [
        (0, [("FP1", 3), ("FPZ", 4), ("FP2", 5)]),
        (1, [("AF7", 1), ("AF3", 3), ("AFZ", 4), ("AF4", 5), ("AF8", 7)]),
        (2, [(n, i) for i, n in enumerate(["F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8"])]),
        (3, [(n, i) for i, n in enumerate(["FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8"])]),
        (4, [(n, i) for i, n in enumerate(["T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8"])]),
        (5, [(n, i) for i, n in enumerate(["TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8"])]),
        (6, [(n, i) for i, n in enumerate(["P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8"])]),
        (7, [("PO7", 1), ("PO3", 3), ("POZ", 4), ("PO4", 5), ("PO8", 7)]),
        (8, [("T9", 0), ("O1", 3), ("OZ", 4), ("O2", 5), ("IZ", 6), ("T10", 8)]),
    ]
    names, positions = _rowplan(plan)
    return Montage(name="tengrid-64", channel_names=names, positions=positions)


def _tengrid23() -> Montage:
    plan = [
        (0, [("FP1", 2), ("FP2", 6)]),
        (2, [("F7", 0), ("F3", 2), ("FZ", 4), ("F4", 6), ("F8", 8)]),
        (3, [("FT9", 0), ("FT10", 8)]),
        (4, [("T7", 0), ("C3", 2), ("CZ", 4), ("C4", 6), ("T8", 8)]),
        (5, [("TP9", 0), ("TP10", 8)]),
        (6, [("P7", 0), ("P3", 2), ("PZ", 4), ("P4", 6), ("P8", 8)]),
        (8, [("O1", 2), ("O2", 6)]),
    ]
    names, positions = _rowplan(plan)
    return Montage(name="tengrid-23", channel_names=names, positions=positions)


def _grid_demo(n: int) -> Montage:
    """n synthetic channels packed row-major into the smallest square block."""
    if not 1 <= n <= GRID_SIZE * GRID_SIZE:
        raise MontageError(f"grid-demo-{n}: channel count out of range")
    side = int(np.ceil(np.sqrt(n)))
    names = tuple(f"CH{i + 1:02d}" for i in range(n))
    positions = tuple((i // side, i % side) for i in range(n))
    return Montage(name=f"grid-demo-{n}", channel_names=names, positions=positions)


_NAMED_MONTAGES = {
    "tengrid-62": _tengrid62,
    "tengrid-64": _tengrid64,
    "tengrid-23": _tengrid23,
}


def default_montage(name: str) -> Montage:
    """Look up a shipped montage: tengrid-62/64/23 or grid-demo-<n>."""
    if name in _NAMED_MONTAGES:
        return _NAMED_MONTAGES[name]()
    if name.startswith("grid-demo-"):
        try:
            n = int(name[len("grid-demo-"):])
        except ValueError:
            raise MontageError(f"unknown montage {name!r}") from None
        return _grid_demo(n)
    raise MontageError(f"unknown montage {name!r}")


def load_montage(path: str | Path, name: str | None = None) -> Montage:
    """Read a montage file: one `<name> <row> <col>` line per channel, # comments."""
    path = Path(path)
    names, positions = [], []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"montage line {lineno!r}: expected '<name> <row> <col>', "
                             f"got {raw!r}", offset=lineno)
        try:
            row, col = int(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError(f"montage line {lineno}: bad coordinates in {raw!r}",
                             offset=lineno) from None
        names.append(parts[0])
        positions.append((row, col))
    return Montage(name=name or path.stem, channel_names=tuple(names),
                   positions=tuple(positions))
