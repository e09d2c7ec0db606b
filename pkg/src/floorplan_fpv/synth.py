"""Synthetic 3LDK corpus with a known rent function.

Rent is assembled as ``tabular contribution + graph utility + noise`` where the
graph utility sums per-motif deltas (a motif is a room label such as ``"bl"``
or a sorted label pair such as ``"ja-ja"`` for an edge).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import STRUCTURES, Dataset, PropertyRecord, write_tabular
from .graph import AccessGraph, write_jsonl

# target tabular moments (mean, sd) of a typical rental corpus
TABULAR_MOMENTS = {
    "area": (65.2, 7.3),
    "distance": (865.0, 629.0),
    "f_building": (5.9, 4.0),
    "land_price": (187824.0, 75396.0),
    "passenger": (28447.0, 26638.0),
    "year": (1994.0, 6.8),
}
STRUCTURE_FREQ = {
    "RC": 11327, "S": 1943, "SRC": 1055, "LS": 672, "ALC": 175, "W": 124, "PC": 14, "O": 10, "HPC": 3,
}
# hedonic slopes in yen per unit
TABULAR_SLOPES = {
    "land_price": 0.138,
    "area": 1044.0,
    "year": 929.8,
    "f_building": 1073.0,
    "f_dwelling": 838.3,
    "passenger": 0.071,
    "distance": -2.929,
    "structure_RC": 3032.0,
}
MEAN_RENT = 82973.0
RENT_FLOOR = 20000.0

DEFAULT_PLANTED = {"bl": 6000.0, "ja-ja": -8000.0}


@dataclass
class SynthConfig:
    n_records: int = 2000
    n_templates: int = 120
    seed: int = 0
    noise_sd: float = 8000.0
    planted: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_PLANTED))
    zipf_exponent: float = 1.0
    moments: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(TABULAR_MOMENTS))

    def validate(self) -> None:
        if self.n_records < 1:
            raise ValueError("n_records must be positive")
        if self.n_templates < 1:
            raise ValueError("n_templates must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "moments" in d:
            d["moments"] = {k: tuple(v) for k, v in d["moments"].items()}
        return cls(**d)


@dataclass
class GroundTruth:
    ids: list[str]
    graph_utility: np.ndarray
    tabular: np.ndarray
    noise: np.ndarray
    planted: dict[str, float]
    template: np.ndarray

    def to_dict(self) -> dict:
        return {
            "planted": self.planted,
            "records": [
                {
                    "id": i,
                    "graph_utility": float(u),
                    "tabular": float(t),
                    "noise": float(e),
                    "template": int(k),
                }
                for i, u, t, e, k in zip(self.ids, self.graph_utility, self.tabular, self.noise, self.template)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        recs = d["records"]
        return cls(
            ids=[r["id"] for r in recs],
            graph_utility=np.array([r["graph_utility"] for r in recs]),
            tabular=np.array([r["tabular"] for r in recs]),
            noise=np.array([r["noise"] for r in recs]),
            planted=dict(d["planted"]),
            template=np.array([r["template"] for r in recs], dtype=np.int64),
        )


# ---------------------------------------------------------------------------
# motifs
# ---------------------------------------------------------------------------


def edge_key(a: str, b: str) -> str:
    return "-".join(sorted((a, b)))


def motif_counts(g: AccessGraph) -> dict[str, int]:
    counts: dict[str, int] = {}
    for lab in g.labels:
        counts[lab] = counts.get(lab, 0) + 1
    for i, j in g.edges:
        k = edge_key(g.labels[i], g.labels[j])
        counts[k] = counts.get(k, 0) + 1
    return counts


def graph_utility(g: AccessGraph, planted: dict[str, float]) -> float:
    counts = motif_counts(g)
    return float(sum(delta * counts.get(motif, 0) for motif, delta in planted.items()))


# ---------------------------------------------------------------------------
# plan grammar
# ---------------------------------------------------------------------------


class _Plan:
    def __init__(self):
        self.labels: list[str] = []
        self.edges: set[tuple[int, int]] = set()

    def add(self, label: str, *attach: int) -> int:
        self.labels.append(label)
        v = len(self.labels) - 1
        for u in attach:
            self.link(u, v)
        return v

    def link(self, u: int, v: int) -> None:
        if u != v:
            self.edges.add((min(u, v), max(u, v)))

    def graph(self, gid: str) -> AccessGraph:
        return AccessGraph(gid, tuple(self.labels), tuple(sorted(self.edges)))


def random_plan(rng: np.random.Generator, gid: str = "plan") -> AccessGraph:
    """One 3LDK-style access graph drawn from the plan grammar."""
    p = _Plan()
    en = p.add("en")
    hw = p.add("hw", en)
    dk = p.add("dk", hw)

    n_ja = int(rng.choice(4, p=[0.30, 0.40, 0.25, 0.05]))
    kinds = ["ja"] * n_ja + ["we"] * (3 - n_ja)
    rng.shuffle(kinds)
    rooms = []
    for k, lab in enumerate(kinds):
        u = rng.random()
        if k > 0 and u < 0.2:
            host = rooms[int(rng.integers(len(rooms)))]
        elif u < 0.55:
            host = dk
        else:
            host = hw
        rooms.append(p.add(lab, host))
    ja_rooms = [r for r in rooms if p.labels[r] == "ja"]
    if len(ja_rooms) >= 2 and rng.random() < 0.5:
        p.link(ja_rooms[0], ja_rooms[1])
    if rng.random() < 0.25:
        # second door from the living area into a room
        p.link(dk, rooms[int(rng.integers(3))])

    la = p.add("la", hw if rng.random() < 0.8 else dk)
    p.add("bt", la)
    p.add("to", hw if rng.random() < 0.65 else la)

    for r in rooms:
        for _ in range(int(rng.choice(3, p=[0.15, 0.6, 0.25]))):
            p.add("cl", r)
    if rng.random() < 0.4:
        p.add("cl", hw)
    if rng.random() < 0.3:
        p.add("cl", en)

    n_bl = int(rng.choice(4, p=[0.05, 0.70, 0.20, 0.05]))
    for _ in range(n_bl):
        hosts = [dk] + rooms
        first = hosts[int(rng.integers(len(hosts)))]
        b = p.add("bl", first)
        if rng.random() < 0.4:
            p.link(b, hosts[int(rng.integers(len(hosts)))])
    return p.graph(gid)


# Fixed fixtures for three common layouts: each has a
# japanese room; the second and third differ only by a hallway closet.
def fixture_plans() -> list[AccessGraph]:
    def top(gid: str, hall_closet: bool, ja_hub: bool) -> AccessGraph:
        p = _Plan()
        en = p.add("en")
        hw = p.add("hw", en)
        dk = p.add("dk", hw)
        ja = p.add("ja", dk)
        we1 = p.add("we", hw)
        we2 = p.add("we", dk if ja_hub else hw)
        la = p.add("la", hw)
        p.add("bt", la)
        p.add("to", hw)
        p.add("cl", ja)
        p.add("cl", ja)
        p.add("cl", we1)
        p.add("cl", we2)
        p.add("cl", en)
        if hall_closet:
            p.add("cl", hw)
        bl = p.add("bl", dk)
        p.link(bl, ja)
        return p.graph(gid)

    return [top("common_layout_1", False, True), top("common_layout_2", False, False), top("common_layout_3", True, False)]


# ---------------------------------------------------------------------------
# tabular draws
# ---------------------------------------------------------------------------


def _lognormal(rng, mean, sd, size):
    s2 = np.log1p((sd / mean) ** 2)
    return rng.lognormal(np.log(mean) - s2 / 2.0, np.sqrt(s2), size)


def _draw_tabular(rng: np.random.Generator, n: int, moments: dict) -> dict[str, np.ndarray]:
    m = moments
    area = np.clip(rng.normal(*m["area"], n), 37.0, 159.0)
    distance = np.clip(_lognormal(rng, *m["distance"], n), 10.0, 37600.0)
    f_building = np.clip(np.rint(_lognormal(rng, *m["f_building"], n)), 2, 50)
    f_dwelling = np.floor(rng.random(n) * f_building) + 1.0
    land_price = np.clip(rng.normal(*m["land_price"], n), 20000.0, 557725.0)
    passenger = np.clip(_lognormal(rng, *m["passenger"], n), 0.0, 431007.0)
    year = np.clip(np.rint(rng.normal(*m["year"], n)), 1933, 2015)
    freq = np.array([STRUCTURE_FREQ[s] for s in STRUCTURES], dtype=np.float64)
    structure = rng.choice(len(STRUCTURES), size=n, p=freq / freq.sum())
    return {
        "area": np.round(area, 2),
        "distance": np.round(distance),
        "f_building": f_building,
        "f_dwelling": f_dwelling,
        "land_price": np.round(land_price),
        "passenger": np.round(passenger),
        "year": year,
        "structure": structure,
    }


def tabular_contribution(cols: dict[str, np.ndarray], moments: dict) -> np.ndarray:
    """Linear hedonic part, centred so that average inputs give the mean rent."""
    out = np.full(len(cols["area"]), MEAN_RENT)
    for name, slope in TABULAR_SLOPES.items():
        if name == "structure_RC":
            rc = (cols["structure"] == STRUCTURES.index("RC")).astype(np.float64)
            out += slope * (rc - STRUCTURE_FREQ["RC"] / sum(STRUCTURE_FREQ.values()))
        elif name == "f_dwelling":
            out += slope * (cols[name] - (moments["f_building"][0] + 1.0) / 2.0)
        else:
            out += slope * (cols[name] - moments[name][0])
    return out


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


def generate_corpus(cfg: SynthConfig) -> tuple[Dataset, GroundTruth]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    templates = [random_plan(rng, f"t{k}") for k in range(cfg.n_templates)]
    weights = 1.0 / np.arange(1, cfg.n_templates + 1) ** cfg.zipf_exponent
    which = rng.choice(cfg.n_templates, size=cfg.n_records, p=weights / weights.sum())

    width = len(str(cfg.n_records))
    ids = [f"p{i:0{width}d}" for i in range(cfg.n_records)]
    graphs = []
    for rid, k in zip(ids, which):
        t = templates[k]
        graphs.append(t.permuted(rng.permutation(t.n_nodes), id=rid))

    cols = _draw_tabular(rng, cfg.n_records, cfg.moments)
    tab = tabular_contribution(cols, cfg.moments)
    util = np.array([graph_utility(g, cfg.planted) for g in graphs])
    noise = rng.normal(0.0, cfg.noise_sd, cfg.n_records) if cfg.noise_sd > 0 else np.zeros(cfg.n_records)
    rent = np.maximum(tab + util + noise, RENT_FLOOR)

    records = [
        PropertyRecord(
            id=rid,
            rent=float(rent[i]),
            area=float(cols["area"][i]),
            distance=float(cols["distance"][i]),
            f_building=float(cols["f_building"][i]),
            f_dwelling=float(cols["f_dwelling"][i]),
            land_price=float(cols["land_price"][i]),
            passenger=float(cols["passenger"][i]),
            year=float(cols["year"][i]),
            structure=STRUCTURES[int(cols["structure"][i])],
        )
        for i, rid in enumerate(ids)
    ]
    gt = GroundTruth(ids, util, tab, noise, dict(cfg.planted), which.astype(np.int64))
    return Dataset(graphs, records), gt


def write_corpus(out_dir: str | Path, ds: Dataset, gt: GroundTruth, cfg: SynthConfig) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "graphs": out / "graphs.jsonl",
        "tabular": out / "tabular.csv",
        "truth": out / "ground_truth.json",
    }
    write_jsonl(ds.graphs, paths["graphs"])
    write_tabular(ds.records, paths["tabular"])
    payload = {"config": asdict(cfg), **gt.to_dict()}
    paths["truth"].write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    return paths
