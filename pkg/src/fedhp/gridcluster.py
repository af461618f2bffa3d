"""Grid-partitioned federated DBSCAN in plaintext.

Every client discretizes its scaled HP points onto a shared grid.  The
cell-wise sum of the client grids decides which cells are dense.  Clients
then move points out of sparse cells into an adjacent dense cell when
possible, label connected dense regions identically, and report per-cluster
HP sums, accuracy sums and counts.  The server averages them and the most
accurate cluster's mean HP wins.

Cells are indexed row-major with dimension 0 most significant.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .combine import GlobalHP
from .errors import AllNoiseError, ClusterOverflowError, InputError
from .hpdata import HPSpace, ScaledReport, unscale

log = logging.getLogger(__name__)

UNLABELED = -1

# slack so that 1/granularity values like 1/0.2 = 5.000000000000001 do not round up
_EPS = 1e-12
# squared distances closer than this count as ties
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    granularity: float
    d: int

    def __post_init__(self):
        if not 0 < self.granularity <= 1:
            raise InputError(f"granularity must lie in (0, 1], got {self.granularity}")
        if self.d < 1:
            raise InputError("grid needs d >= 1")

    @property
    def cells_per_dim(self) -> int:
        return max(1, math.ceil(1.0 / self.granularity - _EPS))

    @property
    def n_cells(self) -> int:
        return self.cells_per_dim**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_dim,) * self.d

    def cell_of(self, values) -> np.ndarray:
        """Per-dim cell coordinates of points in [0, 1]^d, shape (n, d)."""
        v = np.asarray(values, dtype=np.float64).reshape(-1, self.d)
        idx = np.floor(v / self.granularity + _EPS).astype(np.int64)
        return np.clip(idx, 0, self.cells_per_dim - 1)

    def flat(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        return np.ravel_multi_index(tuple(coords.T), self.shape)

    def unflat(self, index) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(index, dtype=np.int64), self.shape), axis=-1)

    def center(self, coords) -> np.ndarray:
        return (np.asarray(coords, dtype=np.float64) + 0.5) * self.granularity

    def neighbors(self, coord) -> list[int]:
        """Flat indices of the axis-adjacent cells in order -dim0, +dim0, -dim1, ..."""
        coord = np.asarray(coord, dtype=np.int64)
        out = []
        for j in range(self.d):
            for step in (-1, 1):
                c = coord.copy()
                c[j] += step
                if 0 <= c[j] < self.cells_per_dim:
                    out.append(int(self.flat(c)[0]))
        return out

    def check_capacity(self, slots: int) -> None:
        if self.n_cells > slots:
            raise InputError(f"grid of {self.n_cells} cells exceeds {slots} slots")


@dataclass(frozen=True)
class CellGrid:
    spec: GridSpec
    counts: np.ndarray  # int64, length n_cells

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "CellGrid") -> "CellGrid":
        if other.spec != self.spec:
            raise InputError("cannot add grids of different specs")
        return CellGrid(self.spec, self.counts + other.counts)


@dataclass(frozen=True)
class RetainedPoint:
    cell: int
    values: tuple[float, ...]  # scaled units
    accuracy: float


@dataclass(frozen=True)
class ClusterSummary:
    """Per-cluster slot vectors of public length ``k_max``."""

    labels: np.ndarray  # cluster id per cell or UNLABELED
    hp_sums: np.ndarray  # (d, k_max)
    acc_sum: np.ndarray  # (k_max,)
    count: np.ndarray  # (k_max,)

    @property
    def k_max(self) -> int:
        return self.acc_sum.shape[0]

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def __add__(self, other: "ClusterSummary") -> "ClusterSummary":
        if not np.array_equal(self.labels, other.labels):
            raise InputError("summaries disagree on the cluster labelling")
        return ClusterSummary(self.labels, self.hp_sums + other.hp_sums,
                              self.acc_sum + other.acc_sum, self.count + other.count)


def discretize(report: ScaledReport, spec: GridSpec) -> CellGrid:
    vals = report.values_array()
    counts = np.bincount(spec.flat(spec.cell_of(vals)), minlength=spec.n_cells).astype(np.int64)
    return CellGrid(spec, counts)


def aggregate(grids: Sequence[CellGrid]) -> CellGrid:
    if not grids:
        raise InputError("need at least one grid")
    out = grids[0]
    for g in grids[1:]:
        out = out + g
    return out


def closest_cells(report: ScaledReport, spec: GridSpec) -> np.ndarray:
    """Flat index of the nearest axis-adjacent cell for every point.

    Distance is to the neighbor's center; ties (within float rounding) keep
    the first neighbor in the order -dim0, +dim0, -dim1, +dim1, ...
    """
    vals = report.values_array()
    coords = spec.cell_of(vals)
    out = np.empty(len(vals), dtype=np.int64)
    for i, (v, c) in enumerate(zip(vals, coords)):
        best, best_d = -1, math.inf
        for nb in spec.neighbors(c):
            dist = float(np.sum((v - spec.center(spec.unflat(nb))) ** 2))
            if dist < best_d - _TIE_TOL:
                best, best_d = nb, dist
        out[i] = best
    return out


def dense_mask(aggregate_grid: CellGrid, min_pts: int) -> np.ndarray:
    return aggregate_grid.counts >= min_pts


def relocate_points(report: ScaledReport, spec: GridSpec, closest: np.ndarray,
                    mask: np.ndarray) -> list[RetainedPoint]:
    """Keep points of dense cells; move sparse-cell points to a dense neighbor's center or drop them."""
    vals = report.values_array()
    flat = spec.flat(spec.cell_of(vals))
    out = []
    for v, cell, target, rec in zip(vals, flat, closest, report.records):
        if mask[cell]:
            out.append(RetainedPoint(int(cell), tuple(v.tolist()), rec.accuracy))
        elif target >= 0 and mask[target]:
            center = spec.center(spec.unflat(target))
            out.append(RetainedPoint(int(target), tuple(center.tolist()), rec.accuracy))
    return out


def merge_cells(mask: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Label connected dense regions (axis adjacency) 0, 1, ... in row-major discovery order."""
    mask = np.asarray(mask, dtype=bool)
    labels = np.full(spec.n_cells, UNLABELED, dtype=np.int64)
    next_label = 0
    for start in range(spec.n_cells):
        if not mask[start] or labels[start] != UNLABELED:
            continue
        labels[start] = next_label
        queue = deque([start])
        while queue:
            cell = queue.popleft()
            for nb in spec.neighbors(spec.unflat(cell)):
                if mask[nb] and labels[nb] == UNLABELED:
                    labels[nb] = next_label
                    queue.append(nb)
        next_label += 1
    return labels


def summarize(points: Sequence[RetainedPoint], labels: np.ndarray, k_max: int, d: int) -> ClusterSummary:
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    if n_clusters > k_max:
        raise ClusterOverflowError(f"{n_clusters} clusters exceed k_max={k_max}")
    hp_sums = np.zeros((d, k_max))
    acc_sum = np.zeros(k_max)
    count = np.zeros(k_max)
    for p in points:
        c = labels[p.cell]
        if c == UNLABELED:
            raise InputError(f"retained point in unlabeled cell {p.cell}")
        hp_sums[:, c] += p.values
        acc_sum[c] += p.accuracy
        count[c] += 1
    return ClusterSummary(labels, hp_sums, acc_sum, count)


def select_cluster(hp_means: np.ndarray, acc_means: np.ndarray, valid: np.ndarray,
                   space: HPSpace, provenance: str = "grid-dbscan") -> GlobalHP:
    """Most accurate valid cluster (lowest id on ties), mapped to raw units."""
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise AllNoiseError("no non-empty cluster")
    scores = np.where(valid, acc_means, -np.inf)
    best = int(np.argmax(scores))
    hp = np.clip(hp_means[:, best], 0.0, 1.0)
    return GlobalHP(tuple(unscale(hp, space).tolist()), provenance, float(acc_means[best]))


def finalize(summary: ClusterSummary, space: HPSpace) -> GlobalHP:
    valid = summary.count > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        hp_means = np.where(valid, summary.hp_sums / summary.count, 0.0)
        acc_means = np.where(valid, summary.acc_sum / summary.count, 0.0)
    return select_cluster(hp_means, acc_means, valid, space)


@dataclass(frozen=True)
class GridRun:
    """Every intermediate of one plaintext federated run."""

    aggregate: CellGrid
    mask: np.ndarray
    labels: np.ndarray
    retained: list[list[RetainedPoint]]
    summary: ClusterSummary
    result: Optional[GlobalHP]


def federated_grid_dbscan(reports: Sequence[ScaledReport], spec: GridSpec, min_pts: int,
                          k_max: int | None = None, space: HPSpace | None = None) -> GridRun:
    """Compose the plaintext pipeline: discretize, aggregate, mask, relocate, merge, summarize, finalize.

    ``result`` is None when no cell is dense.
    """
    if not reports:
        raise InputError("need at least one client report")
    space = space or reports[0].space
    k_max = spec.n_cells if k_max is None else k_max
    agg = aggregate([discretize(r, spec) for r in reports])
    mask = dense_mask(agg, min_pts)
    labels = merge_cells(mask, spec)
    retained = [relocate_points(r, spec, closest_cells(r, spec), mask) for r in reports]
    parts = [summarize(p, labels, k_max, spec.d) for p in retained]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    result = finalize(total, space) if mask.any() else None
    return GridRun(agg, mask, labels, retained, total, result)
