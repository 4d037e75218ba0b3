"""Graph sequences, partitions, and per-snapshot network summaries.

Time indices in the public API are 1-based (``t = 1..T``) to match the way
change points are reported; array storage is 0-based.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class GraphFormatError(ValueError):
    """Raised when a graph-sequence file or array violates the format."""


@dataclass(frozen=True)
class GraphSequence:
    """An ordered series of binary adjacency matrices on a fixed node set.

    Parameters
    ----------
    y : ndarray of shape (T, n, n)
        Adjacency matrices; ``y[t - 1]`` is the graph at time ``t``.
    directed : bool
        If False every matrix must be symmetric.

    Self-loops are not part of the dyad set, so diagonals must be zero.
    """

    y: np.ndarray
    directed: bool = True

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 3 or y.shape[1] != y.shape[2]:
            raise GraphFormatError(f"expected a (T, n, n) array, got shape {y.shape}")
        y = validate_adjacency(y, self.directed)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[1]

    def __len__(self):
        return self.T

    def __getitem__(self, t: int) -> np.ndarray:
        """Adjacency matrix at 1-based time ``t``."""
        return self.y[_check_time(self, t)]

    def subsequence(self, times: Sequence[int]) -> "GraphSequence":
        idx = [_check_time(self, t) for t in times]
        return GraphSequence(self.y[idx], self.directed)

    def __eq__(self, other):
        if not isinstance(other, GraphSequence):
            return NotImplemented
        return self.directed == other.directed and np.array_equal(self.y, other.y)

    __hash__ = None


def validate_adjacency(y: np.ndarray, directed: bool) -> np.ndarray:
    """Check binary entries, zero diagonal and (if undirected) symmetry.

    Returns a fresh ``uint8`` copy. Errors name the first offending time
    index (1-based) and dyad.
    """
    y = np.asarray(y)
    bad = np.argwhere((y != 0) & (y != 1))
    if bad.size:
        t, i, j = bad[0]
        raise GraphFormatError(
            f"non-binary entry {y[t, i, j]!r} at t={t + 1}, dyad ({i}, {j})")
    y = y.astype(np.uint8)
    diag = np.argwhere(np.einsum("tii->ti", y) != 0)
    if diag.size:
        t, i = diag[0]
        raise GraphFormatError(f"self-loop at t={t + 1}, node {i}")
    if not directed:
        asym = np.argwhere(y != y.transpose(0, 2, 1))
        if asym.size:
            t, i, j = asym[0]
            raise GraphFormatError(
                f"asymmetric matrix under undirected flag at t={t + 1}, dyad ({i}, {j})")
    return y


def _check_time(g: GraphSequence, t: int) -> int:
    if not 1 <= t <= g.T:
        raise IndexError(f"time index {t} out of range 1..{g.T}")
    return t - 1


def dyad_mask(n: int, directed: bool) -> np.ndarray:
    """Boolean mask of the dyad set: i != j if directed, i < j otherwise."""
    if directed:
        return ~np.eye(n, dtype=bool)
    return np.triu(np.ones((n, n), dtype=bool), k=1)


# ---------------------------------------------------------------------------
# serialization

def load_graph_sequence(path) -> GraphSequence:
    """Read a graph-sequence JSON file.

    The file holds ``{"directed": bool, "n": int, "T": int, "y": y[t][i][j]}``.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"parse failure in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphFormatError("top-level JSON value must be an object")
    for key in ("directed", "n", "T", "y"):
        if key not in doc:
            raise GraphFormatError(f"missing key {key!r}")
    directed, n, T = doc["directed"], doc["n"], doc["T"]
    if not isinstance(directed, bool):
        raise GraphFormatError("'directed' must be a boolean")
    ys = doc["y"]
    if not isinstance(ys, list) or len(ys) != T:
        raise GraphFormatError(f"'y' must list T={T} matrices")
    for t, mat in enumerate(ys):
        if not isinstance(mat, list) or len(mat) != n or any(
                not isinstance(row, list) or len(row) != n for row in mat):
            raise GraphFormatError(f"shape mismatch at t={t + 1}: matrix is not {n}x{n}")
    try:
        arr = np.array(ys, dtype=float).reshape(T, n, n)
    except (TypeError, ValueError) as exc:
        raise GraphFormatError(f"non-numeric entry: {exc}") from exc
    return GraphSequence(arr, directed)


def save_graph_sequence(g: GraphSequence, path) -> None:
    doc = {"directed": g.directed, "n": g.n, "T": g.T, "y": g.y.tolist()}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# statistics

def network_statistics(g: GraphSequence, t: int) -> tuple[int, int, int]:
    """Edge, mutual-dyad and triangle counts of the graph at time ``t``.

    Triangles are counted on the undirected support.
    """
    y = g[t].astype(np.int64)
    if g.directed:
        edges = int(y.sum())
    else:
        edges = int(np.triu(y, 1).sum())
    mutual = int(np.triu(y * y.T, 1).sum())
    s = np.maximum(y, y.T)
    triangles = int(np.trace(s @ s @ s) // 6)
    return edges, mutual, triangles


def degree_distribution(g: GraphSequence, t: int):
    """Histogram of node degrees over ``0..n-1``.

    Returns a length-``n`` count array for undirected graphs, and a pair
    ``(out_hist, in_hist)`` for directed graphs.
    """
    y = g[t].astype(np.int64)
    n = g.n
    if g.directed:
        return (np.bincount(y.sum(axis=1), minlength=n),
                np.bincount(y.sum(axis=0), minlength=n))
    return np.bincount(y.sum(axis=1), minlength=n)


def esp_distribution(g: GraphSequence, t: int) -> np.ndarray:
    """Edge-wise shared-partner histogram over ``0..n-2``.

    Every edge of the undirected support contributes the number of nodes
    adjacent to both of its endpoints.
    """
    return esp_histogram(g[t])


def esp_histogram(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    s = np.maximum(y, y.T)
    common = s @ s
    iu = np.triu_indices(n, 1)
    on_edge = s[iu] == 1
    return np.bincount(common[iu][on_edge], minlength=max(n - 1, 1))


def degree_histogram(y: np.ndarray, directed: bool):
    n = y.shape[0]
    y = np.asarray(y, dtype=np.int64)
    if directed:
        return (np.bincount(y.sum(axis=1), minlength=n),
                np.bincount(y.sum(axis=0), minlength=n))
    return np.bincount(y.sum(axis=1), minlength=n)


def histogram_dict(counts) -> dict[int, int]:
    """Sparse ``{value: count}`` view of a histogram, dropping zeros."""
    return {int(k): int(c) for k, c in enumerate(counts) if c}


def write_statistics_csv(g: GraphSequence, path) -> None:
    """One row per time point: t, edges, mutual, triangles."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "edges", "mutual", "triangles"])
        for t in range(1, g.T + 1):
            w.writerow([t, *network_statistics(g, t)])


# ---------------------------------------------------------------------------
# change points and partitions

def validate_change_points(points, T: int) -> list[int]:
    pts = [int(p) for p in points]
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise ValueError(f"change points must be strictly increasing: {pts}")
    if pts and (pts[0] < 2 or pts[-1] > T):
        raise ValueError(f"change points must lie in [2, {T}]: {pts}")
    return pts


def points_to_partition(points, T: int) -> list[range]:
    """Split ``1..T`` into contiguous intervals starting at each change point.

    >>> points_to_partition([26, 51, 76], 100)
    [range(1, 26), range(26, 51), range(51, 76), range(76, 101)]
    """
    pts = validate_change_points(points, T)
    edges = [1, *pts, T + 1]
    return [range(a, b) for a, b in zip(edges, edges[1:])]


def partition_to_points(intervals) -> list[int]:
    intervals = list(intervals)
    if not intervals:
        raise ValueError("a partition needs at least one interval")
    if intervals[0].start != 1:
        raise ValueError("partition must start at 1")
    for a, b in zip(intervals, intervals[1:]):
        if len(a) == 0 or a.stop != b.start:
            raise ValueError("intervals must be contiguous and non-empty")
    if len(intervals[-1]) == 0:
        raise ValueError("intervals must be contiguous and non-empty")
    return [iv.start for iv in intervals[1:]]
