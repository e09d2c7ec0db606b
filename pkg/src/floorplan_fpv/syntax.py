"""Space Syntax measures on access graphs and the explicit graph-feature vector.

RRA uses the Hillier-Hanson diamond value
``D_k = 2 (k log2((k + 2) / 3) + 1) / ((k - 1)(k - 2))`` to normalise RA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .graph import LABELS, AccessGraph

LN2 = math.log(2.0)
LN3 = math.log(3.0)

RRA_LABELS: tuple[str, ...] = tuple(lab for lab in LABELS if lab != "cl")

GF_COLUMNS: tuple[str, ...] = (
    ("num_node", "num_edge")
    + tuple(f"num_{lab}" for lab in LABELS)
    + ("depth",)
    + tuple(f"rra_{lab}" for lab in RRA_LABELS)
    + ("h_star",)
)

# GF model variables kept after backward elimination
GF_MODEL_COLUMNS: tuple[str, ...] = (
    "num_edge", "num_bl", "num_cl", "depth", "rra_bt", "rra_ja", "rra_to", "h_star",
)


class DegenerateGraph(ValueError):
    """Raised when a measure is undefined for the given graph."""


def all_pairs_depth(g: AccessGraph) -> np.ndarray:
    indptr, indices = g.csr()
    return _accel.bfs_all_pairs(indptr, indices, g.n_nodes)


def depth_map(g: AccessGraph, source: int) -> dict[int, int]:
    if not 0 <= source < g.n_nodes:
        raise IndexError(f"source {source} is not a node of {g.id}")
    d = all_pairs_depth(g)[source]
    if (d < 0).any():
        raise DegenerateGraph(f"{g.id}: graph is disconnected")
    return {v: int(d[v]) for v in range(g.n_nodes)}


def _entrance(g: AccessGraph) -> int:
    ens = g.nodes_with("en")
    if len(ens) != 1:
        raise DegenerateGraph(f"{g.id}: expected exactly one entrance, found {len(ens)}")
    return ens[0]


def max_depth_from_entrance(g: AccessGraph) -> int:
    return max(depth_map(g, _entrance(g)).values())


def diamond_value(k: int) -> float:
    return 2.0 * (k * math.log2((k + 2) / 3.0) + 1.0) / ((k - 1) * (k - 2))


def _all_rra(g: AccessGraph, dist: np.ndarray | None = None) -> np.ndarray:
    k = g.n_nodes
    if k < 3:
        raise DegenerateGraph(f"{g.id}: RRA needs at least 3 nodes, got {k}")
    if dist is None:
        dist = all_pairs_depth(g)
    if (dist < 0).any():
        raise DegenerateGraph(f"{g.id}: graph is disconnected")
    md = dist.sum(axis=1) / (k - 1)
    return 2.0 * (md - 1.0) / (k - 2) / diamond_value(k)


def rra(g: AccessGraph, node: int) -> float:
    """Real relative asymmetry of ``node`` (0 = perfectly integrated)."""
    if not 0 <= node < g.n_nodes:
        raise IndexError(f"node {node} is not in {g.id}")
    return float(_all_rra(g)[node])


def rra_by_label(g: AccessGraph, values: np.ndarray | None = None) -> dict[str, float]:
    if values is None:
        values = _all_rra(g)
    out = {}
    for lab in RRA_LABELS:
        nodes = g.nodes_with(lab)
        out[lab] = float(max(values[i] for i in nodes)) if nodes else 0.0
    return out


@dataclass(frozen=True)
class DifferenceFactors:
    h: float
    h_star: float


def difference_factor_from(a: float, b: float, c: float, allow_zero: bool = False) -> DifferenceFactors:
    """Entropy of the (max, mean, min) triple and its [ln 2, ln 3] rescaling.

    With ``allow_zero`` a zero share contributes nothing (``0 log 0 = 0``);
    an all-zero triple is always rejected.
    """
    if min(a, b, c) < 0 or (not allow_zero and min(a, b, c) <= 0):
        raise DegenerateGraph("difference factor needs strictly positive RRA values")
    t = a + b + c
    if t <= 0:
        raise DegenerateGraph("difference factor is undefined when every RRA is zero")
    h = -sum((v / t) * math.log(v / t) for v in (a, b, c) if v > 0)
    return DifferenceFactors(h, (h - LN2) / (LN3 - LN2))


def difference_factor(
    g: AccessGraph, values: np.ndarray | None = None, allow_zero: bool = False
) -> DifferenceFactors:
    if values is None:
        values = _all_rra(g)
    idx = [i for i, lab in enumerate(g.labels) if lab != "cl"]
    if not idx:
        raise DegenerateGraph(f"{g.id}: no non-closet nodes")
    sel = values[idx]
    try:
        return difference_factor_from(float(sel.max()), float(sel.mean()), float(sel.min()), allow_zero)
    except DegenerateGraph as e:
        raise DegenerateGraph(f"{g.id}: {e}") from None


@dataclass(frozen=True)
class GfVector:
    values: dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def as_array(self, columns: tuple[str, ...] = GF_COLUMNS) -> np.ndarray:
        return np.array([self.values[c] for c in columns], dtype=np.float64)


def graph_features(g: AccessGraph) -> GfVector:
    dist = all_pairs_depth(g)
    values = _all_rra(g, dist)
    counts = g.label_counts()
    feats: dict[str, float] = {"num_node": g.n_nodes, "num_edge": g.n_edges}
    for lab in LABELS:
        feats[f"num_{lab}"] = counts[lab]
    feats["depth"] = int(dist[_entrance(g)].max())
    for lab, v in rra_by_label(g, values).items():
        feats[f"rra_{lab}"] = v
    # a node adjacent to every other node has RRA 0; keep the feature defined
    feats["h_star"] = difference_factor(g, values, allow_zero=True).h_star
    return GfVector(feats)


def feature_matrix(graphs, columns: tuple[str, ...] = GF_COLUMNS) -> np.ndarray:
    return np.array([graph_features(g).as_array(columns) for g in graphs]).reshape(-1, len(columns))
