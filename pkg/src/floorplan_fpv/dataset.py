"""Tabular property records, graph/table join, feature encoding and k-fold splits."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import AccessGraph

logger = logging.getLogger(__name__)

STRUCTURES: tuple[str, ...] = ("RC", "S", "SRC", "LS", "ALC", "W", "PC", "O", "HPC")
CONTINUOUS: tuple[str, ...] = (
    "land_price", "area", "year", "f_building", "f_dwelling", "distance", "passenger",
)
FEATURE_COLUMNS: tuple[str, ...] = CONTINUOUS + tuple(f"structure_{s}" for s in STRUCTURES)
FEATURE_VERSION = 1

TABULAR_COLUMNS: tuple[str, ...] = (
    "id", "rent", "area", "distance", "f_building", "f_dwelling",
    "land_price", "passenger", "year", "structure",
)


class DatasetError(ValueError):
    code = "DatasetError"


class MissingColumn(DatasetError):
    code = "MissingColumn"


class BadNumber(DatasetError):
    code = "BadNumber"


class DuplicateId(DatasetError):
    code = "DuplicateId"


@dataclass(frozen=True)
class PropertyRecord:
    id: str
    rent: float
    area: float
    distance: float
    f_building: float
    f_dwelling: float
    land_price: float
    passenger: float
    year: float
    structure: str

    def problems(self) -> list[str]:
        out = []
        if not self.rent > 0:
            out.append("rent must be positive")
        if not self.area > 0:
            out.append("area must be positive")
        if not 1900 <= self.year <= 2100:
            out.append("year outside [1900, 2100]")
        if self.structure not in STRUCTURES:
            out.append(f"unknown structure {self.structure!r}")
        for name in CONTINUOUS:
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} is not finite")
        return out


@dataclass
class LoadReport:
    n_rows: int = 0
    n_kept: int = 0
    dropped: list[tuple[int, str, str]] = field(default_factory=list)  # (row, id, reason)


def load_tabular(path: str | Path) -> tuple[list[PropertyRecord], LoadReport]:
    """Parse a tabular CSV; rows that violate record invariants are dropped and reported."""
    report = LoadReport()
    records: list[PropertyRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TABULAR_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        for rowno, row in enumerate(reader, start=2):
            report.n_rows += 1
            values = {}
            for name in TABULAR_COLUMNS:
                raw = row[name].strip()
                if name in ("id", "structure"):
                    values[name] = raw
                    continue
                try:
                    values[name] = float(raw)
                except ValueError:
                    raise BadNumber(f"{path}:{rowno}: column {name!r} is not numeric: {raw!r}") from None
            rec = PropertyRecord(**values)
            problems = rec.problems()
            if problems:
                report.dropped.append((rowno, rec.id, "; ".join(problems)))
                continue
            records.append(rec)
    report.n_kept = len(records)
    if report.dropped:
        logger.info("dropped %d of %d tabular rows", len(report.dropped), report.n_rows)
    return records, report


def write_tabular(records: Sequence[PropertyRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABULAR_COLUMNS)
        for r in records:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in TABULAR_COLUMNS])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if not v.is_integer() else str(int(v))
    return str(v)


# ---------------------------------------------------------------------------
# join
# ---------------------------------------------------------------------------


@dataclass
class JoinReport:
    n_graphs: int
    n_tabular: int
    n_joined: int
    unmatched_graphs: list[str]
    unmatched_tabular: list[str]
    rent_filtered: list[str]

    def summary(self) -> str:
        return (
            f"{self.n_joined} joined, {len(self.unmatched_graphs)} unmatched graph(s), "
            f"{len(self.unmatched_tabular)} unmatched tabular row(s), "
            f"{len(self.rent_filtered)} removed by rent filter"
        )


@dataclass
class Dataset:
    graphs: list[AccessGraph]
    records: list[PropertyRecord]

    def __post_init__(self):
        if len(self.graphs) != len(self.records):
            raise DatasetError("graphs and records must align")
        for g, r in zip(self.graphs, self.records):
            if g.id != r.id:
                raise DatasetError(f"id mismatch {g.id!r} != {r.id!r}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def rent(self) -> np.ndarray:
        return np.array([r.rent for r in self.records], dtype=np.float64)

    def subset(self, idx: Sequence[int]) -> "Dataset":
        return Dataset([self.graphs[i] for i in idx], [self.records[i] for i in idx])


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateId(f"duplicate {what} id {i!r}")
        seen.add(i)


def join(
    graphs: Sequence[AccessGraph],
    tabular: Sequence[PropertyRecord],
    max_rent: float | None = None,
) -> tuple[Dataset, JoinReport]:
    """Inner join on id, in graph order; optionally drop rents above ``max_rent``."""
    _check_unique([g.id for g in graphs], "graph")
    _check_unique([r.id for r in tabular], "tabular")
    by_id = {r.id: r for r in tabular}
    gids = {g.id for g in graphs}
    pairs, filtered = [], []
    for g in graphs:
        r = by_id.get(g.id)
        if r is None:
            continue
        if max_rent is not None and r.rent > max_rent:
            filtered.append(r.id)
            continue
        pairs.append((g, r))
    report = JoinReport(
        n_graphs=len(graphs),
        n_tabular=len(tabular),
        n_joined=len(pairs),
        unmatched_graphs=[g.id for g in graphs if g.id not in by_id],
        unmatched_tabular=[r.id for r in tabular if r.id not in gids],
        rent_filtered=filtered,
    )
    ds = Dataset([g for g, _ in pairs], [r for _, r in pairs])
    return ds, report


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    """Per-column z-scoring of the continuous block."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, records: Sequence[PropertyRecord]) -> "Scaler":
        raw = np.array([[getattr(r, c) for c in CONTINUOUS] for r in records], dtype=np.float64)
        sd = raw.std(axis=0)
        sd[sd == 0] = 1.0
        return cls(raw.mean(axis=0), sd)

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=np.float64, copy=True)
        k = len(CONTINUOUS)
        x[..., :k] = (x[..., :k] - self.mean) / self.sd
        return x

    def inverse(self, z: np.ndarray) -> np.ndarray:
        z = np.array(z, dtype=np.float64, copy=True)
        k = len(CONTINUOUS)
        z[..., :k] = z[..., :k] * self.sd + self.mean
        return z

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["sd"], dtype=np.float64))


def encode_features(r: PropertyRecord, scaler: Scaler | None = None) -> np.ndarray:
    """Fixed-order vector: continuous columns then the 9-way structure one-hot."""
    x = np.zeros(len(FEATURE_COLUMNS))
    for k, name in enumerate(CONTINUOUS):
        x[k] = getattr(r, name)
    x[len(CONTINUOUS) + STRUCTURES.index(r.structure)] = 1.0
    return scaler.transform(x) if scaler is not None else x


def encode_matrix(records: Sequence[PropertyRecord], scaler: Scaler | None = None) -> np.ndarray:
    x = np.zeros((len(records), len(FEATURE_COLUMNS)))
    for i, r in enumerate(records):
        x[i] = encode_features(r)
    return scaler.transform(x) if scaler is not None else x


# columns of the hedonic OLS design (raw units); only the RC dummy is carried
OLS_TABULAR_COLUMNS: tuple[str, ...] = CONTINUOUS + ("structure_RC",)


def ols_tabular(records: Sequence[PropertyRecord]) -> np.ndarray:
    x = encode_matrix(records)
    cols = [FEATURE_COLUMNS.index(c) for c in OLS_TABULAR_COLUMNS]
    return x[:, cols]


# ---------------------------------------------------------------------------
# k-fold
# ---------------------------------------------------------------------------


def split_kfold(n_or_ds: int | Dataset, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Random partition of ``range(n)`` into ``k`` folds whose sizes differ by at most one.

    The first ``n % k`` folds take the extra element.
    """
    n = len(n_or_ds) if isinstance(n_or_ds, Dataset) else int(n_or_ds)
    if k < 2:
        raise DatasetError("k must be at least 2")
    if k > n:
        raise DatasetError(f"k={k} exceeds dataset size {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def save_split_manifest(path: str | Path, ds: Dataset, folds: Sequence[np.ndarray], seed: int) -> None:
    ids = ds.ids
    manifest = {
        "seed": seed,
        "k": len(folds),
        "folds": {str(f): [ids[i] for i in fold] for f, fold in enumerate(folds)},
    }
    Path(path).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def load_split_manifest(path: str | Path, ds: Dataset) -> list[np.ndarray]:
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    pos = {i: p for p, i in enumerate(ds.ids)}
    return [
        np.sort(np.array([pos[i] for i in manifest["folds"][str(f)]], dtype=np.int64))
        for f in range(manifest["k"])
    ]
