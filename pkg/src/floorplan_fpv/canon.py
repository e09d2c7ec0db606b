"""Label-preserving isomorphism, exact canonical keys and corpus deduplication."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .graph import LABEL_INDEX, AccessGraph


# ---------------------------------------------------------------------------
# pairwise test (backtracking matcher)
# ---------------------------------------------------------------------------


def _match_order(g: AccessGraph) -> list[int]:
    # BFS from the rarest-label, highest-degree node keeps the candidate sets small
    counts = g.label_counts()
    remaining = set(range(g.n_nodes))
    order = []
    while remaining:
        start = min(remaining, key=lambda v: (counts[g.labels[v]], -g.degree(v), v))
        queue = [start]
        remaining.discard(start)
        while queue:
            u = queue.pop(0)
            order.append(u)
            for w in g.neighbors(u):
                if w in remaining:
                    remaining.discard(w)
                    queue.append(w)
    return order


def is_isomorphic(g1: AccessGraph, g2: AccessGraph) -> bool:
    """True iff some node bijection preserves adjacency and room labels."""
    if g1.n_nodes != g2.n_nodes or g1.n_edges != g2.n_edges:
        return False
    if sorted(g1.labels) != sorted(g2.labels):
        return False
    sig1 = sorted((lab, g1.degree(i)) for i, lab in enumerate(g1.labels))
    sig2 = sorted((lab, g2.degree(i)) for i, lab in enumerate(g2.labels))
    if sig1 != sig2:
        return False

    order = _match_order(g1)
    adj2 = [set(g2.neighbors(v)) for v in range(g2.n_nodes)]
    mapping: dict[int, int] = {}
    used = [False] * g2.n_nodes

    def feasible(u: int, v: int) -> bool:
        if g1.labels[u] != g2.labels[v] or g1.degree(u) != g2.degree(v):
            return False
        for w in g1.neighbors(u):
            if w in mapping and mapping[w] not in adj2[v]:
                return False
        # mapped non-neighbours of u must stay non-neighbours of v
        n_mapped_nb = sum(1 for w in g1.neighbors(u) if w in mapping)
        n_mapped_nb2 = sum(1 for x in adj2[v] if used[x])
        return n_mapped_nb == n_mapped_nb2

    def extend(k: int) -> bool:
        if k == len(order):
            return True
        u = order[k]
        for v in range(g2.n_nodes):
            if not used[v] and feasible(u, v):
                mapping[u] = v
                used[v] = True
                if extend(k + 1):
                    return True
                del mapping[u]
                used[v] = False
        return False

    return extend(0)


# ---------------------------------------------------------------------------
# canonical labelling (individualisation / refinement)
# ---------------------------------------------------------------------------


def _rank(keys: list) -> list[int]:
    table = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [table[k] for k in keys]


def _refine(adj: list[tuple[int, ...]], colors: list[int]) -> list[int]:
    n_cells = len(set(colors))
    while True:
        sigs = [(colors[v], tuple(sorted(colors[u] for u in adj[v]))) for v in range(len(adj))]
        new = _rank(sigs)
        n_new = len(set(new))
        if n_new == n_cells:
            return new
        colors, n_cells = new, n_new


def _individualize(colors: list[int], v: int) -> list[int]:
    return [2 * c if u == v else 2 * c + 1 for u, c in enumerate(colors)]


def _target_cell(colors: list[int]) -> list[int] | None:
    cells: dict[int, list[int]] = {}
    for v, c in enumerate(colors):
        cells.setdefault(c, []).append(v)
    for c in sorted(cells):
        if len(cells[c]) > 1:
            return cells[c]
    return None


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass(frozen=True)
class CanonicalKey:
    key: bytes

    def hexdigest(self) -> str:
        return hashlib.sha256(self.key).hexdigest()[:16]


def _encode(g: AccessGraph, pos: list[int]) -> tuple:
    inv = [0] * len(pos)
    for v, p in enumerate(pos):
        inv[p] = v
    labels = tuple(LABEL_INDEX[g.labels[inv[p]]] for p in range(len(pos)))
    edges = tuple(sorted((min(pos[i], pos[j]), max(pos[i], pos[j])) for i, j in g.edges))
    return labels, edges


def canonical_form(g: AccessGraph) -> tuple[tuple, list[int]]:
    """Minimum labelled-adjacency encoding over the search tree and one node order achieving it.

    Exact: refinement and target-cell choice depend only on colours, so the
    set of leaf encodings is an isomorphism invariant; pruning only skips
    children in the same orbit of the stabiliser of the current prefix.
    """
    n = g.n_nodes
    adj = [g.neighbors(v) for v in range(n)]
    if n == 0:
        return ((), ()), []
    start = _refine(adj, _rank([g.labels[v] for v in range(n)]))

    best: list = [None, None]  # encoding, positions
    first_leaf: dict[tuple, list[int]] = {}
    automorphisms: list[list[int]] = []

    def leaf(pos: list[int]) -> None:
        enc = _encode(g, pos)
        seen = first_leaf.get(enc)
        if seen is not None:
            # same encoding => pos^-1 o seen is an automorphism
            inv = [0] * n
            for v, p in enumerate(pos):
                inv[p] = v
            automorphisms.append([inv[seen[v]] for v in range(n)])
        else:
            first_leaf[enc] = pos
        if best[0] is None or enc < best[0]:
            best[0], best[1] = enc, pos

    def same_orbit(v: int, explored: list[int], prefix: list[int]) -> bool:
        if not explored:
            return False
        uf = _UnionFind(n)
        for gamma in automorphisms:
            if all(gamma[p] == p for p in prefix):
                for x in range(n):
                    uf.union(x, gamma[x])
        rv = uf.find(v)
        return any(uf.find(w) == rv for w in explored)

    def search(colors: list[int], prefix: list[int]) -> None:
        cell = _target_cell(colors)
        if cell is None:
            leaf(colors)
            return
        explored: list[int] = []
        for v in cell:
            if same_orbit(v, explored, prefix):
                continue
            explored.append(v)
            search(_refine(adj, _individualize(colors, v)), prefix + [v])

    search(start, [])
    return best[0], best[1]


def canonical_key(g: AccessGraph) -> CanonicalKey:
    (labels, edges), _ = canonical_form(g)
    text = "%d|%s|%s" % (
        len(labels),
        ",".join(map(str, labels)),
        ";".join(f"{i}-{j}" for i, j in edges),
    )
    return CanonicalKey(text.encode("ascii"))


# ---------------------------------------------------------------------------
# deduplication
# ---------------------------------------------------------------------------


@dataclass
class IsoClass:
    key: CanonicalKey
    representative: AccessGraph
    member_ids: list[str]

    @property
    def frequency(self) -> int:
        return len(self.member_ids)


@dataclass
class DedupReport:
    classes: list[IsoClass]

    @property
    def total(self) -> int:
        return sum(c.frequency for c in self.classes)

    def class_of(self) -> dict[str, int]:
        """Member id -> class position."""
        return {mid: k for k, c in enumerate(self.classes) for mid in c.member_ids}

    def to_dict(self) -> dict:
        return {
            "n_graphs": self.total,
            "n_classes": len(self.classes),
            "classes": [
                {
                    "class_key": c.key.hexdigest(),
                    "canonical": c.key.key.decode("ascii"),
                    "frequency": c.frequency,
                    "representative_id": c.representative.id,
                    "member_ids": c.member_ids,
                }
                for c in self.classes
            ],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class_key", "frequency", "representative_id"])
            for c in self.classes:
                w.writerow([c.key.hexdigest(), c.frequency, c.representative.id])


def deduplicate(corpus: Sequence[AccessGraph]) -> DedupReport:
    """Group graphs into isomorphism classes, most frequent first.

    The representative of a class is its first member in input order.
    """
    by_key: dict[bytes, IsoClass] = {}
    order: list[bytes] = []
    for g in corpus:
        k = canonical_key(g)
        cls = by_key.get(k.key)
        if cls is None:
            cls = by_key[k.key] = IsoClass(k, g, [])
            order.append(k.key)
        cls.member_ids.append(g.id)
    classes = [by_key[k] for k in order]
    # stable sort keeps first-seen order among equal frequencies
    classes.sort(key=lambda c: -c.frequency)
    return DedupReport(classes)
