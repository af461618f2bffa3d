"""Hyperparameter spaces, per-client local search results, and a synthetic generator.

A client's local search produces ``(hyperparameter vector, validation
accuracy)`` pairs.  They arrive as one JSON file per client::

    {"client_id": "c0",
     "space": {"dims": [{"name": "lr", "lower": 0.001, "upper": 0.5}, ...]},
     "records": [{"values": [0.1, 0.9], "accuracy": 0.92}, ...]}
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, ReportFormatError

log = logging.getLogger(__name__)

# slack for float products such as 0.05 * 20 that should be integers
_EPS = 1e-9


@dataclass(frozen=True)
class HPDim:
    name: str
    lower: float
    upper: float


@dataclass(frozen=True)
class HPSpace:
    dims: tuple[HPDim, ...]

    def __post_init__(self):
        if not self.dims:
            raise InputError("HP space needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise InputError(f"duplicate HP names: {names}")
        for dim in self.dims:
            if not (math.isfinite(dim.lower) and math.isfinite(dim.upper)):
                raise InputError(f"non-finite bounds for {dim.name!r}")
            if not dim.lower < dim.upper:
                raise InputError(f"{dim.name!r}: lower {dim.lower} must be below upper {dim.upper}")

    @classmethod
    def of(cls, *dims: tuple[str, float, float]) -> "HPSpace":
        return cls(tuple(HPDim(n, float(lo), float(hi)) for n, lo, hi in dims))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [dim.name for dim in self.dims]

    @property
    def lower(self) -> np.ndarray:
        return np.array([dim.lower for dim in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([dim.upper for dim in self.dims])

    def to_dict(self) -> dict:
        return {"dims": [{"name": d.name, "lower": d.lower, "upper": d.upper} for d in self.dims]}

    @classmethod
    def from_dict(cls, data: dict) -> "HPSpace":
        try:
            return cls(tuple(HPDim(str(x["name"]), float(x["lower"]), float(x["upper"]))
                             for x in data["dims"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed HP space: {exc}") from None


DEFAULT_SPACE = HPSpace.of(("lr", 0.001, 0.5), ("momentum", 0.5, 0.99))


@dataclass(frozen=True)
class HPRecord:
    values: tuple[float, ...]
    accuracy: float


@dataclass(frozen=True)
class ClientReport:
    client_id: str
    records: tuple[HPRecord, ...]
    space: HPSpace

    def __len__(self) -> int:
        return len(self.records)

    def values_array(self) -> np.ndarray:
        return np.array([r.values for r in self.records], dtype=np.float64).reshape(-1, self.space.d)

    def accuracy_array(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.records], dtype=np.float64)


@dataclass(frozen=True)
class ScaledReport:
    """A report with every HP mapped into [0, 1] by the space's MinMax map."""

    client_id: str
    records: tuple[HPRecord, ...]
    space: HPSpace

    def __len__(self) -> int:
        return len(self.records)

    def values_array(self) -> np.ndarray:
        return np.array([r.values for r in self.records], dtype=np.float64).reshape(-1, self.space.d)

    def accuracy_array(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.records], dtype=np.float64)


# -- validation and I/O -------------------------------------------------------


def validate_report(report: ClientReport) -> ClientReport:
    cid = report.client_id
    if not report.records:
        raise ReportFormatError("record list is empty", cid, "records")
    space = report.space
    for i, rec in enumerate(report.records):
        if len(rec.values) != space.d:
            raise ReportFormatError(f"record {i} has {len(rec.values)} values, expected {space.d}",
                                    cid, "values")
        for dim, v in zip(space.dims, rec.values):
            if not math.isfinite(v) or not dim.lower <= v <= dim.upper:
                raise ReportFormatError(
                    f"record {i}: {dim.name}={v} outside [{dim.lower}, {dim.upper}]", cid, dim.name)
        if not math.isfinite(rec.accuracy) or not 0.0 <= rec.accuracy <= 1.0:
            raise ReportFormatError(f"record {i}: accuracy={rec.accuracy} outside [0, 1]", cid, "accuracy")
    return report


def report_from_dict(data, space: HPSpace | None = None, source: str = "?") -> ClientReport:
    if not isinstance(data, dict):
        raise ReportFormatError(f"{source}: top level must be a JSON object")
    cid = data.get("client_id")
    if not isinstance(cid, str) or not cid:
        raise ReportFormatError(f"{source}: missing client_id", None, "client_id")
    if "space" not in data:
        raise ReportFormatError("missing space", cid, "space")
    try:
        file_space = HPSpace.from_dict(data["space"])
    except InputError as exc:
        raise ReportFormatError(str(exc), cid, "space") from None
    if space is not None and file_space != space:
        raise ReportFormatError("HP space differs from the configured space", cid, "space")
    raw = data.get("records")
    if not isinstance(raw, list):
        raise ReportFormatError("records must be a list", cid, "records")
    records = []
    for i, item in enumerate(raw):
        try:
            values = tuple(float(v) for v in item["values"])
            acc = float(item["accuracy"])
        except KeyError as exc:
            raise ReportFormatError(f"record {i} lacks {exc.args[0]!r}", cid, str(exc.args[0])) from None
        except (TypeError, ValueError):
            raise ReportFormatError(f"record {i} has non-numeric entries", cid, "values") from None
        records.append(HPRecord(values, acc))
    return validate_report(ClientReport(cid, tuple(records), file_space))


def report_to_dict(report: ClientReport) -> dict:
    return {
        "client_id": report.client_id,
        "space": report.space.to_dict(),
        "records": [{"values": list(r.values), "accuracy": r.accuracy} for r in report.records],
    }


def load_report(path: str | Path, space: HPSpace | None = None) -> ClientReport:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"{path.name}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return report_from_dict(data, space, path.name)


def load_reports(path: str | Path, space: HPSpace | None = None) -> list[ClientReport]:
    """Load every ``*.json`` file in a directory (or a single file).

    Without ``space`` the first file's space is adopted and the rest must match.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input path {path} does not exist")
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise InputError(f"no .json report files in {path}")
    reports: list[ClientReport] = []
    for f in files:
        rep = load_report(f, space)
        space = rep.space
        reports.append(rep)
    ids = [r.client_id for r in reports]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise ReportFormatError(f"duplicate client ids {sorted(dup)}", sorted(dup)[0], "client_id")
    log.info("loaded %d client reports from %s", len(reports), path)
    return reports


def write_reports(reports: Iterable[ClientReport], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out_dir}: {exc.strerror}") from None
    paths = []
    for rep in reports:
        p = out_dir / f"{rep.client_id}.json"
        try:
            p.write_text(json.dumps(report_to_dict(rep), indent=1) + "\n", encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot write {p}: {exc.strerror}") from None
        paths.append(p)
    return paths


# -- transforms ---------------------------------------------------------------


def minmax_scale(report: ClientReport) -> ScaledReport:
    lo, hi = report.space.lower, report.space.upper
    span = hi - lo
    records = tuple(
        HPRecord(tuple(np.clip((np.array(r.values) - lo) / span, 0.0, 1.0).tolist()), r.accuracy)
        for r in report.records
    )
    return ScaledReport(report.client_id, records, report.space)


def unscale(values: Sequence[float], space: HPSpace) -> np.ndarray:
    """Inverse of the MinMax map: scaled [0, 1] values back to raw units."""
    return space.lower + np.asarray(values, dtype=np.float64) * (space.upper - space.lower)


def top_count(n: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise InputError(f"fraction must lie in (0, 1], got {fraction}")
    return max(1, math.ceil(fraction * n - _EPS))


def select_top_fraction(report, fraction: float):
    """Keep the ``ceil(fraction * n)`` most accurate records.

    Ties on accuracy go to the lexicographically smaller HP vector, then to
    input order.  Works for raw and scaled reports alike.
    """
    k = top_count(len(report.records), fraction)
    order = sorted(range(len(report.records)),
                   key=lambda i: (-report.records[i].accuracy, report.records[i].values, i))
    kept = tuple(report.records[i] for i in order[:k])
    return type(report)(report.client_id, kept, report.space)


# -- synthetic local search ---------------------------------------------------


def grid_points(space: HPSpace, points_per_dim: int) -> np.ndarray:
    axes = [np.linspace(dim.lower, dim.upper, points_per_dim) for dim in space.dims]
    return np.array(list(itertools.product(*axes)), dtype=np.float64)


def generate_synthetic_lho(space: HPSpace, n_clients: int, heterogeneity: float, seed: int,
                           points_per_dim: int = 7, width: float = 0.3) -> list[ClientReport]:
    """Grid-search results with a squared-exponential accuracy peak per client.

    The global optimum is drawn uniformly from the central half of the scaled
    space; each client's optimum is the global one plus Gaussian noise with
    standard deviation ``heterogeneity`` (scaled units), clipped to [0, 1].
    """
    if n_clients < 1:
        raise InputError("n_clients must be >= 1")
    if heterogeneity < 0:
        raise InputError("heterogeneity must be >= 0")
    if points_per_dim < 2:
        raise InputError("points_per_dim must be >= 2")
    rng = np.random.default_rng(seed)
    d = space.d
    global_opt = rng.uniform(0.25, 0.75, size=d)
    raw = grid_points(space, points_per_dim)
    scaled = (raw - space.lower) / (space.upper - space.lower)
    reports = []
    for i in range(n_clients):
        opt = np.clip(global_opt + rng.normal(0.0, 1.0, size=d) * heterogeneity, 0.0, 1.0)
        peak = rng.uniform(0.85, 0.95)
        dist2 = np.sum((scaled - opt) ** 2, axis=1)
        acc = 0.1 + (peak - 0.1) * np.exp(-dist2 / (2 * width**2))
        records = tuple(HPRecord(tuple(v.tolist()), float(a)) for v, a in zip(raw, acc))
        reports.append(ClientReport(f"client-{i:03d}", records, space))
    return reports
