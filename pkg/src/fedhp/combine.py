"""Plaintext server-side strategies for combining client HP sets.

Mean, median and trimmed mean act on the union of every client's records in
raw units.  The top-k variants first keep each client's best records.  The
DBSCAN strategy clusters the pooled MinMax-scaled points and returns the
centroid of the most accurate cluster.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AllNoiseError, InputError
from .hpdata import ClientReport, HPSpace, minmax_scale, select_top_fraction, unscale

log = logging.getLogger(__name__)

NOISE = -1

# slack for trim_fraction * n products that should be integers
_EPS = 1e-9


@dataclass(frozen=True)
class GlobalHP:
    values: tuple[float, ...]
    provenance: str
    mean_accuracy: Optional[float] = None

    def scaled(self, space: HPSpace) -> np.ndarray:
        return (np.asarray(self.values) - space.lower) / (space.upper - space.lower)

    def to_dict(self, space: HPSpace | None = None) -> dict:
        out = {"values": list(self.values), "provenance": self.provenance,
               "mean_accuracy": self.mean_accuracy}
        if space is not None:
            out["named"] = dict(zip(space.names, self.values))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GlobalHP":
        return cls(tuple(float(v) for v in data["values"]), str(data["provenance"]),
                   None if data.get("mean_accuracy") is None else float(data["mean_accuracy"]))


@dataclass(frozen=True)
class CombineStrategy:
    """One of mean, median, trimmed-mean, top-mean, top-median, dbscan."""

    kind: str
    trim_fraction: float = 0.1
    fraction: float = 0.05
    eps: Optional[float] = None
    min_pts: Optional[int] = None

    KINDS = ("mean", "median", "trimmed-mean", "top-mean", "top-median", "dbscan")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InputError(f"unknown strategy {self.kind!r}; choose from {self.KINDS}")
        if not 0 <= self.trim_fraction < 0.5:
            raise InputError("trim_fraction must lie in [0, 0.5)")
        if not 0 < self.fraction <= 1:
            raise InputError("fraction must lie in (0, 1]")
        if self.eps is not None and self.eps <= 0:
            raise InputError("eps must be > 0")
        if self.min_pts is not None and self.min_pts < 1:
            raise InputError("min_pts must be >= 1")

    def apply(self, reports: Sequence[ClientReport]) -> GlobalHP:
        if self.kind == "mean":
            return combine_mean(reports)
        if self.kind == "median":
            return combine_median(reports)
        if self.kind == "trimmed-mean":
            return combine_trimmed_mean(reports, self.trim_fraction)
        if self.kind == "top-mean":
            return combine_top(reports, self.fraction, "mean")
        if self.kind == "top-median":
            return combine_top(reports, self.fraction, "median")
        eps, min_pts = self.eps, self.min_pts
        if eps is None or min_pts is None:
            pts = pooled_scaled_points(reports, self.fraction)[0]
            s_eps, s_min = suggest_dbscan_params(pts, reports[0].space.d)
            eps = s_eps if eps is None else eps
            min_pts = s_min if min_pts is None else min_pts
        return combine_dbscan(reports, eps, min_pts, self.fraction)


def _union(reports: Sequence[ClientReport]) -> np.ndarray:
    if not reports:
        raise InputError("need at least one client report")
    return np.concatenate([r.values_array() for r in reports], axis=0)


def _union_acc(reports: Sequence[ClientReport]) -> np.ndarray:
    return np.concatenate([r.accuracy_array() for r in reports])


def _fsum_mean(values: np.ndarray) -> np.ndarray:
    # correctly rounded sums make the result independent of record order
    return np.array([math.fsum(col) for col in values.T]) / len(values)


def combine_mean(reports: Sequence[ClientReport]) -> GlobalHP:
    acc = _union_acc(reports)
    return GlobalHP(tuple(_fsum_mean(_union(reports)).tolist()), "mean", math.fsum(acc) / len(acc))


def combine_median(reports: Sequence[ClientReport]) -> GlobalHP:
    return GlobalHP(tuple(np.median(_union(reports), axis=0).tolist()), "median")


def trim_count(n: int, trim_fraction: float) -> int:
    return math.floor(trim_fraction * n + _EPS)


def combine_trimmed_mean(reports: Sequence[ClientReport], trim_fraction: float) -> GlobalHP:
    if not 0 <= trim_fraction < 0.5:
        raise InputError("trim_fraction must lie in [0, 0.5)")
    vals = _union(reports)
    n = len(vals)
    k = trim_count(n, trim_fraction)
    if 2 * k >= n:
        raise InputError(f"trimming {k} per tail leaves nothing of {n} values")
    if k == 0:
        return GlobalHP(combine_mean(reports).values, f"trimmed-mean({trim_fraction})")
    kept = np.sort(vals, axis=0)[k : n - k]
    return GlobalHP(tuple(kept.mean(axis=0).tolist()), f"trimmed-mean({trim_fraction})")


def combine_top(reports: Sequence[ClientReport], fraction: float, center: str = "mean") -> GlobalHP:
    if center not in ("mean", "median"):
        raise InputError(f"center must be 'mean' or 'median', got {center!r}")
    top = [select_top_fraction(r, fraction) for r in reports]
    vals = _union(top)
    acc = float(_union_acc(top).mean())
    agg = vals.mean(axis=0) if center == "mean" else np.median(vals, axis=0)
    return GlobalHP(tuple(agg.tolist()), f"top-{center}({fraction})", acc)


# -- density clustering -------------------------------------------------------


def _pairwise(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def reference_dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Classic DBSCAN; returns a cluster id per point, ``NOISE`` (-1) for noise.

    The neighborhood (distance <= eps) includes the point itself.  A border
    point reachable from several clusters joins the one holding its nearest
    core point.  Cluster ids are numbered by their smallest point index.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    if not np.all(np.isfinite(pts)):
        raise InputError("points must be finite")
    dist = _pairwise(pts)
    near = dist <= eps
    core = near.sum(axis=1) >= min_pts
    # connected components of the core-core neighborhood graph
    comp = np.full(n, NOISE, dtype=np.int64)
    n_comp = 0
    for i in range(n):
        if not core[i] or comp[i] != NOISE:
            continue
        comp[i] = n_comp
        stack = [i]
        while stack:
            j = stack.pop()
            for k in np.nonzero(near[j] & core)[0]:
                if comp[k] == NOISE:
                    comp[k] = n_comp
                    stack.append(k)
        n_comp += 1
    labels[core] = comp[core]
    core_idx = np.nonzero(core)[0]
    for i in np.nonzero(~core)[0]:
        cand = core_idx[near[i, core_idx]]
        if len(cand):
            labels[i] = comp[cand[np.argmin(dist[i, cand])]]
    return canonicalize_labels(labels)


def canonicalize_labels(labels) -> np.ndarray:
    """Renumber clusters 0, 1, ... in order of their smallest point index."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full_like(labels, NOISE)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def pooled_scaled_points(reports: Sequence[ClientReport], fraction: float = 1.0):
    """Scaled HP points and accuracies of every client's top records, pooled."""
    top = [minmax_scale(select_top_fraction(r, fraction)) for r in reports]
    return _union(top), _union_acc(top)


def combine_dbscan(reports: Sequence[ClientReport], eps: float, min_pts: int,
                   fraction: float = 1.0) -> GlobalHP:
    pts, acc = pooled_scaled_points(reports, fraction)
    labels = reference_dbscan(pts, eps, min_pts)
    n_clusters = int(labels.max()) + 1
    if n_clusters == 0:
        raise AllNoiseError(f"DBSCAN(eps={eps}, min_pts={min_pts}) labelled all {len(pts)} points noise")
    mean_acc = np.array([acc[labels == c].mean() for c in range(n_clusters)])
    best = int(np.argmax(mean_acc))
    centroid = pts[labels == best].mean(axis=0)
    log.debug("dbscan: %d clusters, winner %d with mean accuracy %.4f", n_clusters, best, mean_acc[best])
    return GlobalHP(tuple(unscale(centroid, reports[0].space).tolist()),
                    f"dbscan(eps={eps:.6g}, min_pts={min_pts})", float(mean_acc[best]))


def k_distances(points, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point, sorted ascending."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    dist = np.sort(_pairwise(pts), axis=1)
    # column 0 is the point itself
    return np.sort(dist[:, k])


def suggest_dbscan_params(points, d: int) -> tuple[float, int]:
    """``min_pts = 2d``; ``eps`` at the knee of the sorted (min_pts+1)-distance curve.

    The knee is the interior index with the largest discrete second
    difference (first such index on ties).
    """
    if d < 1:
        raise InputError("d must be >= 1")
    min_pts = 2 * d
    k = min_pts + 1
    n = len(points)
    if n < min_pts + 2:
        raise InputError(f"need at least {min_pts + 2} points to suggest DBSCAN parameters, got {n}")
    kd = k_distances(points, min(k, n - 1))
    knee = int(np.argmax(np.diff(kd, 2))) + 1
    return float(kd[knee]), min_pts
