"""Access-graph data model: room labels, parsing, validation and JSONL I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class RoomLabel(str, Enum):
    BL = "bl"  # balcony
    BT = "bt"  # bathroom
    CL = "cl"  # closet
    DK = "dk"  # living / dining / kitchen
    EN = "en"  # entrance
    HW = "hw"  # hallway
    LA = "la"  # lavatory
    JA = "ja"  # japanese room
    TO = "to"  # toilet
    WE = "we"  # western room

    @classmethod
    def parse(cls, text: str) -> "RoomLabel":
        code = str(text).strip().lower()
        code = LABEL_ALIASES.get(code, code)
        try:
            return cls(code)
        except ValueError:
            raise UnknownLabel(f"unknown room label {text!r}") from None


# Later tables in the source material spell two codes differently.
LABEL_ALIASES = {"jp": "ja", "wc": "to"}

LABELS: tuple[str, ...] = tuple(lab.value for lab in RoomLabel)
LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}


class GraphError(ValueError):
    """Structural problem found while building an access graph."""

    code = "GraphError"


class MalformedRecord(GraphError):
    code = "MalformedRecord"


class UnknownLabel(GraphError):
    code = "UnknownLabel"


class DuplicateNode(GraphError):
    code = "DuplicateNode"


class DanglingEdge(GraphError):
    code = "DanglingEdge"


class SelfLoop(GraphError):
    code = "SelfLoop"


class DuplicateEdge(GraphError):
    code = "DuplicateEdge"


@dataclass(frozen=True)
class AccessGraph:
    """Undirected room-adjacency graph with one room label per node.

    Nodes are 0..n-1 in file order; ``edges`` holds each undirected edge once
    as a sorted ``(i, j)`` pair with ``i < j``.
    """

    id: str
    labels: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    _adj: tuple[tuple[int, ...], ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        n = len(self.labels)
        seen = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise SelfLoop(f"{self.id}: self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise DanglingEdge(f"{self.id}: edge ({i}, {j}) references a missing node")
            key = (i, j) if i < j else (j, i)
            if key in seen:
                raise DuplicateEdge(f"{self.id}: duplicate edge {key}")
            seen.add(key)
        for lab in self.labels:
            if lab not in LABEL_INDEX:
                raise UnknownLabel(f"{self.id}: unknown room label {lab!r}")
        edges = tuple(sorted(seen))
        adj = [[] for _ in range(n)]
        for i, j in edges:
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @classmethod
    def build(cls, id: str, labels: Iterable[str], edges: Iterable[tuple[int, int]]) -> "AccessGraph":
        labs = tuple(RoomLabel.parse(lab).value for lab in labels)
        return cls(str(id), labs, tuple((int(i), int(j)) for i, j in edges))

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def nodes_with(self, label: str) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == label]

    def label_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(LABELS, 0)
        for lab in self.labels:
            counts[lab] += 1
        return counts

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in self._adj])
        indices = np.fromiter((j for a in self._adj for j in a), dtype=np.int64, count=int(indptr[-1]))
        return indptr, indices

    def directed_edges(self) -> np.ndarray:
        """(2E, 2) array holding (i, j) and (j, i) for every undirected edge."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        e = np.asarray(self.edges, dtype=np.int64)
        return np.concatenate([e, e[:, ::-1]], axis=0)

    def one_hot(self) -> np.ndarray:
        x = np.zeros((self.n_nodes, len(LABELS)))
        x[np.arange(self.n_nodes), [LABEL_INDEX[lab] for lab in self.labels]] = 1.0
        return x

    def permuted(self, perm: Iterable[int], id: str | None = None) -> "AccessGraph":
        """Copy whose node ``i`` becomes node ``perm[i]``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.n_nodes)):
            raise ValueError("perm must be a permutation of the node indices")
        labels = [None] * self.n_nodes
        for old, new in enumerate(perm):
            labels[new] = self.labels[old]
        edges = tuple((perm[i], perm[j]) for i, j in self.edges)
        return AccessGraph(self.id if id is None else id, tuple(labels), edges)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "nodes": [{"idx": i, "label": lab} for i, lab in enumerate(self.labels)],
            "edges": [[i, j] for i, j in self.edges],
        }


def parse_graph(record: dict | str) -> AccessGraph:
    """Build a graph from a ``{"id", "nodes", "edges"}`` record (dict or JSON text)."""
    if isinstance(record, (str, bytes)):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"invalid JSON: {exc}") from None
    if not isinstance(record, dict):
        raise MalformedRecord("graph record must be a JSON object")
    missing = [k for k in ("id", "nodes", "edges") if k not in record]
    if missing:
        raise MalformedRecord(f"graph record missing fields {missing}")
    gid = str(record["id"])
    nodes = record["nodes"]
    if not isinstance(nodes, list):
        raise MalformedRecord(f"{gid}: nodes must be a list")

    by_idx: dict[int, str] = {}
    order: list[int] = []
    for node in nodes:
        try:
            idx, label = int(node["idx"]), node["label"]
        except (KeyError, TypeError, ValueError):
            raise MalformedRecord(f"{gid}: node entries need integer 'idx' and 'label'") from None
        if idx in by_idx:
            raise DuplicateNode(f"{gid}: duplicate node index {idx}")
        by_idx[idx] = RoomLabel.parse(label).value
        order.append(idx)
    if sorted(order) != list(range(len(order))):
        raise MalformedRecord(f"{gid}: node indices must be 0..n-1")

    edges = []
    for e in record["edges"]:
        try:
            i, j = (int(v) for v in e)
        except (TypeError, ValueError):
            raise MalformedRecord(f"{gid}: edges must be integer pairs") from None
        if i == j:
            raise SelfLoop(f"{gid}: self-loop on node {i}")
        if i not in by_idx or j not in by_idx:
            raise DanglingEdge(f"{gid}: edge ({i}, {j}) references a missing node")
        edges.append((i, j))

    # node sequence stays in file order: position k holds the k-th listed node
    remap = {idx: k for k, idx in enumerate(order)}
    labels = tuple(by_idx[idx] for idx in order)
    return AccessGraph(gid, labels, tuple((remap[i], remap[j]) for i, j in edges))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    graph_id: str
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def to_dict(self) -> dict:
        return {
            "id": self.graph_id,
            "valid": self.ok,
            "findings": [{"code": f.code, "message": f.message} for f in self.findings],
        }


def connected_components(g: AccessGraph) -> list[list[int]]:
    seen = [False] * g.n_nodes
    comps = []
    for s in range(g.n_nodes):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in g.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def validate(g: AccessGraph) -> ValidationReport:
    findings = []
    if g.n_nodes == 0:
        findings.append(Finding("Empty", "graph has no nodes"))
    else:
        comps = connected_components(g)
        if len(comps) > 1:
            findings.append(Finding("Disconnected", f"graph has {len(comps)} connected components"))
    n_en = sum(1 for lab in g.labels if lab == "en")
    if n_en == 0:
        findings.append(Finding("MissingEntrance", "no node labeled 'en'"))
    elif n_en > 1:
        findings.append(Finding("MultipleEntrances", f"{n_en} nodes labeled 'en'; exactly one required"))
    return ValidationReport(g.id, tuple(findings))


# ---------------------------------------------------------------------------
# JSON Lines
# ---------------------------------------------------------------------------


def iter_jsonl(path: str | Path) -> Iterator[AccessGraph]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield parse_graph(line)
            except GraphError as exc:
                raise type(exc)(f"line {lineno}: {exc}") from None


def read_jsonl(path: str | Path) -> list[AccessGraph]:
    return list(iter_jsonl(path))


def write_jsonl(graphs: Iterable[AccessGraph], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in graphs:
            fh.write(json.dumps(g.to_record(), separators=(",", ":")) + "\n")
