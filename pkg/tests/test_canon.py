import csv
import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floorplan_fpv.canon import canonical_key, deduplicate, is_isomorphic
from floorplan_fpv.synth import random_plan

from conftest import make
from oracles import brute_grouping, brute_isomorphic
from test_graph import graphs


def to_nx(g):
    h = nx.Graph()
    h.add_nodes_from((i, {"label": lab}) for i, lab in enumerate(g.labels))
    h.add_edges_from(g.edges)
    return h


def nx_iso(a, b):
    return nx.is_isomorphic(to_nx(a), to_nx(b), node_match=lambda u, v: u["label"] == v["label"])


def random_graph(rng, n, labels, p):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return make([labels[k] for k in rng.integers(0, len(labels), n)], edges)


class TestIsomorphism:
    def test_permuted_path(self, path3):
        assert is_isomorphic(path3, path3.permuted([1, 2, 0]))

    def test_label_order_matters(self):
        a = make(["en", "hw", "we"], [(0, 1), (1, 2)])
        b = make(["en", "we", "hw"], [(0, 1), (1, 2)])
        assert not brute_isomorphic(a, b)
        assert not is_isomorphic(a, b)

    def test_self(self, plan):
        assert is_isomorphic(plan, plan)

    def test_same_degrees_different_structure(self):
        # two triangles vs a hexagon, all one label
        a = make(["we"] * 6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        b = make(["we"] * 6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)])
        assert not is_isomorphic(a, b)
        assert canonical_key(a) != canonical_key(b)

    def test_agrees_with_networkx(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            a = random_graph(rng, 6, ["we", "ja"], 0.4)
            b = random_graph(rng, 6, ["we", "ja"], 0.4) if rng.random() < 0.5 else a.permuted(rng.permutation(6))
            assert is_isomorphic(a, b) == nx_iso(a, b)


class TestCanonicalKey:
    def test_permuted_copies(self, plan):
        rng = np.random.default_rng(0)
        key = canonical_key(plan)
        for _ in range(20):
            assert canonical_key(plan.permuted(rng.permutation(plan.n_nodes))) == key

    def test_distinct_paths(self):
        a = make(["en", "hw", "we"], [(0, 1), (1, 2)])
        b = make(["en", "we", "hw"], [(0, 1), (1, 2)])
        assert canonical_key(a) != canonical_key(b)

    def test_highly_symmetric_graph_is_fast(self):
        import time

        g = make(["hw"] + ["cl"] * 9, [(0, i) for i in range(1, 10)])
        t0 = time.perf_counter()
        canonical_key(g)
        assert time.perf_counter() - t0 < 2.0

    def test_regular_graph_pair(self):
        # Petersen graph vs its relabelled copy and vs a 3-regular prism on 10 nodes
        pet = nx.petersen_graph()
        prism = nx.circular_ladder_graph(5)
        a = make(["we"] * 10, pet.edges())
        b = make(["we"] * 10, prism.edges())
        rng = np.random.default_rng(3)
        assert canonical_key(a) == canonical_key(a.permuted(rng.permutation(10)))
        assert canonical_key(a) != canonical_key(b)

    def test_hexdigest_stable(self, path3):
        assert canonical_key(path3).hexdigest() == canonical_key(path3.permuted([2, 1, 0])).hexdigest()

    def test_matches_brute_force_on_small_graphs(self):
        rng = np.random.default_rng(7)
        gs = []
        for _ in range(60):
            base = random_graph(rng, int(rng.integers(3, 7)), ["we", "ja", "hw"], 0.5)
            gs.append(base)
            gs.append(base.permuted(rng.permutation(base.n_nodes)))
        truth = brute_grouping(gs)
        keys = [canonical_key(g).key for g in gs]
        for i in range(len(gs)):
            for j in range(i):
                assert (keys[i] == keys[j]) == (truth[i] == truth[j])

    @given(graphs(), st.randoms(use_true_random=False))
    @settings(max_examples=150, deadline=None)
    def test_permutation_invariance(self, g, rnd):
        perm = list(range(g.n_nodes))
        rnd.shuffle(perm)
        assert canonical_key(g.permuted(perm)) == canonical_key(g)

    @given(graphs(max_nodes=6), graphs(max_nodes=6))
    @settings(max_examples=150, deadline=None)
    def test_key_equality_iff_isomorphic(self, a, b):
        assert (canonical_key(a) == canonical_key(b)) == brute_isomorphic(a, b)


class TestDeduplicate:
    def test_three_plus_one(self, path3, star4):
        corpus = [path3, path3.permuted([2, 1, 0]), path3.permuted([1, 0, 2]), star4]
        rep = deduplicate(corpus)
        assert [c.frequency for c in rep.classes] == [3, 1]
        assert rep.classes[0].representative is corpus[0]

    def test_empty(self):
        rep = deduplicate([])
        assert rep.classes == [] and rep.total == 0

    def test_templates_recovered(self):
        rng = np.random.default_rng(11)
        templates = []
        while len(templates) < 40:
            t = random_plan(rng, f"t{len(templates)}")
            if all(not is_isomorphic(t, u) for u in templates):
                templates.append(t)
        corpus = []
        for k in range(500):
            t = templates[k % 40]
            corpus.append(t.permuted(rng.permutation(t.n_nodes), id=f"r{k}"))
        rep = deduplicate(corpus)
        assert len(rep.classes) == 40
        assert sum(c.frequency for c in rep.classes) == 500
        assert sorted(i for c in rep.classes for i in c.member_ids) == sorted(g.id for g in corpus)
        freqs = [c.frequency for c in rep.classes]
        assert freqs == sorted(freqs, reverse=True)

    def test_writers(self, tmp_path, path3, star4):
        rep = deduplicate([star4, path3, path3.permuted([2, 1, 0], id="x")])
        rep.write_csv(tmp_path / "c.csv")
        rows = list(csv.DictReader(open(tmp_path / "c.csv")))
        assert [r["frequency"] for r in rows] == ["2", "1"]
        assert rows[0]["representative_id"] == "path3"
        rep.write_json(tmp_path / "c.json")
        assert json.loads((tmp_path / "c.json").read_text())
        assert rep.class_of()["x"] == rep.class_of()["path3"]

    @given(st.lists(graphs(max_nodes=5), max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_partition(self, gs):
        gs = [make(g.labels, g.edges, f"g{i}") for i, g in enumerate(gs)]
        rep = deduplicate(gs)
        assert sum(c.frequency for c in rep.classes) == len(gs)
        members = [i for c in rep.classes for i in c.member_ids]
        assert sorted(members) == sorted(g.id for g in gs)
