"""Integrated-gradients explanations of the FPV and analysis of means over room types."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import autodiff as ad
from .autodiff import Tensor
from .gcn import GcnModel, GraphBatch
from .graph import LABELS, AccessGraph


class ZeroSpread(ValueError):
    code = "ZeroSpread"


class DegenerateGroups(ValueError):
    code = "DegenerateGroups"


# ---------------------------------------------------------------------------
# integrated gradients
# ---------------------------------------------------------------------------


def midpoint_alphas(steps: int) -> np.ndarray:
    return (np.arange(steps) + 0.5) / steps


def riemann_ig(
    grad_batch: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    baseline: np.ndarray | None = None,
    steps: int = 200,
    chunk: int = 250,
) -> np.ndarray:
    """Midpoint-rule integrated gradients of a scalar function.

    ``grad_batch`` maps a ``(m, *x.shape)`` stack of path points to the
    gradients at those points; it is called on at most ``chunk`` points at a
    time to bound memory.
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    alphas = midpoint_alphas(steps).reshape((-1,) + (1,) * x.ndim)
    total = np.zeros_like(x)
    for lo in range(0, steps, chunk):
        a = alphas[lo : lo + chunk]
        points = baseline[None] + a * (x - baseline)[None]
        total += np.asarray(grad_batch(points)).sum(axis=0)
    return (x - baseline) * (total / steps)


@dataclass
class Attribution:
    graph_id: str
    labels: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    node_contrib: np.ndarray
    edge_contrib: np.ndarray
    f_full: float
    f_baseline: float

    @property
    def completeness_gap(self) -> float:
        return abs(float(self.node_contrib.sum() + self.edge_contrib.sum()) - (self.f_full - self.f_baseline))

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "labels": list(self.labels),
            "node_contrib": {str(i): float(v) for i, v in enumerate(self.node_contrib)},
            "edge_contrib": {f"{i}-{j}": float(v) for (i, j), v in zip(self.edges, self.edge_contrib)},
            "f_full": self.f_full,
            "f_baseline": self.f_baseline,
            "completeness_gap": self.completeness_gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Attribution":
        labels = tuple(d["labels"])
        edges, contrib = [], []
        for key, v in d["edge_contrib"].items():
            i, j = (int(t) for t in key.split("-"))
            edges.append((i, j))
            contrib.append(float(v))
        return cls(
            graph_id=d["graph_id"],
            labels=labels,
            edges=tuple(edges),
            node_contrib=np.array([float(d["node_contrib"][str(i)]) for i in range(len(labels))]),
            edge_contrib=np.array(contrib),
            f_full=float(d["f_full"]),
            f_baseline=float(d["f_baseline"]),
        )


def _fpv_grad_fn(model: GcnModel, g: AccessGraph) -> tuple[Callable[[np.ndarray], np.ndarray], int]:
    """Gradient of the FPV w.r.t. the flat vector ``[node one-hot entries, directed edge weights]``."""
    base = GraphBatch.from_graphs([g])
    n, f = base.x.shape
    n_x = n * f
    t = model.tensors()

    def grad_batch(points: np.ndarray) -> np.ndarray:
        steps = len(points)
        rep = base.repeated(steps)
        x = Tensor(points[:, :n_x].reshape(steps * n, f), requires_grad=True)
        w = Tensor(points[:, n_x:].reshape(-1), requires_grad=True)
        out = model.fpv_tensor(rep, t, x, w)
        ad.sum_all(out).backward()
        gx = x.grad.reshape(steps, n_x) if x.grad is not None else np.zeros((steps, n_x))
        gw = w.grad.reshape(steps, -1) if w.grad is not None else np.zeros((steps, len(base.src)))
        return np.concatenate([gx, gw], axis=1)

    return grad_batch, n_x


def fpv_at(model: GcnModel, g: AccessGraph, scale: float) -> float:
    b = GraphBatch.from_graphs([g])
    return float(model.fpv_tensor(b, model.tensors(), Tensor(b.x * scale), Tensor(b.edge_weight * scale)).data[0])


def integrated_gradients(model: GcnModel, g: AccessGraph, steps: int = 200, chunk: int = 250) -> Attribution:
    """Attribute the raw FPV of ``g`` to its rooms and connections.

    The baseline has all node features and all first-layer edge weights at 0;
    the two directions of an edge are summed into one contribution.
    """
    for v in model.params.values():
        if not np.all(np.isfinite(v)):
            raise ValueError("model parameters are not finite")
    grad_batch, n_x = _fpv_grad_fn(model, g)
    x_full = np.concatenate([g.one_hot().ravel(), np.ones(2 * g.n_edges)])
    contrib = riemann_ig(grad_batch, x_full, None, steps, chunk)
    node = contrib[:n_x].reshape(g.n_nodes, len(LABELS)).sum(axis=1)
    m = g.n_edges
    directed = contrib[n_x:]
    edge = directed[:m] + directed[m:]
    return Attribution(
        graph_id=g.id,
        labels=g.labels,
        edges=g.edges,
        node_contrib=node,
        edge_contrib=edge,
        f_full=fpv_at(model, g, 1.0),
        f_baseline=fpv_at(model, g, 0.0),
    )


def write_attributions_jsonl(attrs: Sequence[Attribution], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a in attrs:
            fh.write(json.dumps(a.to_dict(), sort_keys=True) + "\n")


def read_attributions_jsonl(path: str | Path) -> list[Attribution]:
    with open(path, encoding="utf-8") as fh:
        return [Attribution.from_dict(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# standardisation and grouping
# ---------------------------------------------------------------------------


def _z(values: np.ndarray) -> np.ndarray:
    if values.size < 2:
        raise ZeroSpread("need at least two components to standardise")
    sd = values.std()
    if not sd > 1e-15 * max(1.0, float(np.abs(values).max())):
        raise ZeroSpread("contributions have zero spread")
    return (values - values.mean()) / sd


def standardize(a: Attribution, separate: bool = False) -> Attribution:
    """Z-score a plan's contributions (nodes and edges jointly by default)."""
    if separate:
        node, edge = _z(a.node_contrib), _z(a.edge_contrib)
    else:
        z = _z(np.concatenate([a.node_contrib, a.edge_contrib]))
        node, edge = z[: len(a.node_contrib)], z[len(a.node_contrib) :]
    return Attribution(a.graph_id, a.labels, a.edges, node, edge, a.f_full, a.f_baseline)


def edge_type(a: str, b: str) -> str:
    return "-".join(sorted((a, b)))


@dataclass
class TypedContributionTable:
    groups: dict[str, list[float]] = field(default_factory=dict)

    def counts(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.groups.items()}

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.groups.values())


def aggregate_by_type(attrs: Sequence[Attribution]) -> TypedContributionTable:
    table = TypedContributionTable()
    for a in attrs:
        for lab, v in zip(a.labels, a.node_contrib):
            table.groups.setdefault(lab, []).append(float(v))
        for (i, j), v in zip(a.edges, a.edge_contrib):
            table.groups.setdefault(edge_type(a.labels[i], a.labels[j]), []).append(float(v))
    return table


# ---------------------------------------------------------------------------
# analysis of means
# ---------------------------------------------------------------------------


@dataclass
class AnomRow:
    group: str
    n: int
    mean: float
    ldl: float
    udl: float
    significant: bool

    @property
    def direction(self) -> int:
        if not self.significant:
            return 0
        return 1 if self.mean > self.udl else -1


@dataclass
class AnomResult:
    rows: list[AnomRow]
    grand_mean: float
    pooled_sd: float
    critical_value: float
    alpha: float
    n_total: int

    def row(self, group: str) -> AnomRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "n", "mean", "LDL", "UDL", "significant"])
            for r in self.rows:
                w.writerow([r.group, r.n, f"{r.mean:.6f}", f"{r.ldl:.6f}", f"{r.udl:.6f}", int(r.significant)])


def anom_critical_value(alpha: float, k: int, df: int) -> float:
    """Bonferroni approximation of the ANOM critical value ``h(alpha; k, df)``."""
    return float(stats.t.ppf(1.0 - alpha / (2.0 * k), df))


def anom(
    table: TypedContributionTable | dict[str, Sequence[float]],
    alpha: float = 0.05,
    min_n: int = 2,
) -> AnomResult:
    """Decision limits ``grand ± h·s·sqrt((N - n_i) / (N n_i))`` for every group.

    Groups with fewer than ``min_n`` samples are left out.
    """
    groups = table.groups if isinstance(table, TypedContributionTable) else table
    data = {k: np.asarray(v, dtype=np.float64) for k, v in groups.items() if len(v) >= min_n}
    if len(data) < 2:
        raise DegenerateGroups("ANOM needs at least two groups with enough samples")
    k = len(data)
    n_total = sum(len(v) for v in data.values())
    if n_total - k < 1:
        raise DegenerateGroups("no within-group degrees of freedom")
    grand = float(np.concatenate(list(data.values())).mean())
    ss = sum(float(((v - v.mean()) ** 2).sum()) for v in data.values())
    s = (ss / (n_total - k)) ** 0.5
    h = anom_critical_value(alpha, k, n_total - k)
    rows = []
    for name in sorted(data):
        v = data[name]
        half = h * s * ((n_total - len(v)) / (n_total * len(v))) ** 0.5
        m = float(v.mean())
        lo, hi = grand - half, grand + half
        rows.append(AnomRow(name, len(v), m, lo, hi, bool(m < lo or m > hi)))
    return AnomResult(rows, grand, s, h, alpha, n_total)


# ---------------------------------------------------------------------------
# planted-effect scorecard
# ---------------------------------------------------------------------------


@dataclass
class Scorecard:
    sign_agreement: float
    n_motifs: int
    spearman: float
    motif_rows: list[dict]


def planted_effect_report(
    planted: dict[str, float],
    result: AnomResult,
    true_utility: Sequence[float],
    fpv: Sequence[float],
) -> Scorecard:
    """Sign agreement of ANOM group means with planted deltas, plus Spearman(utility, FPV)."""
    rows, agree = [], []
    for motif, delta in sorted(planted.items()):
        try:
            r = result.row(motif)
        except KeyError:
            continue
        ok = np.sign(r.mean - result.grand_mean) == np.sign(delta)
        agree.append(bool(ok))
        rows.append({"motif": motif, "delta": delta, "mean": r.mean, "significant": r.significant, "agree": bool(ok)})
    rho = stats.spearmanr(np.asarray(true_utility), np.asarray(fpv)).statistic
    return Scorecard(
        sign_agreement=float(np.mean(agree)) if agree else float("nan"),
        n_motifs=len(agree),
        spearman=float(rho),
        motif_rows=rows,
    )
