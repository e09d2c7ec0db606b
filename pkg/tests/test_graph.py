import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floorplan_fpv.graph import (
    LABELS,
    AccessGraph,
    DanglingEdge,
    DuplicateEdge,
    DuplicateNode,
    MalformedRecord,
    RoomLabel,
    SelfLoop,
    UnknownLabel,
    connected_components,
    parse_graph,
    read_jsonl,
    validate,
    write_jsonl,
)

from conftest import make


def record(labels, edges, gid="g1"):
    return {"id": gid, "nodes": [{"idx": i, "label": lab} for i, lab in enumerate(labels)], "edges": [list(e) for e in edges]}


class TestLabels:
    def test_ten_codes(self):
        assert LABELS == ("bl", "bt", "cl", "dk", "en", "hw", "la", "ja", "to", "we")

    @pytest.mark.parametrize("alias, code", [("jp", "ja"), ("wc", "to"), ("JA", "ja"), (" we ", "we")])
    def test_aliases_and_case(self, alias, code):
        assert RoomLabel.parse(alias).value == code

    @pytest.mark.parametrize("bad", ["kitchen", "", "l", "ldk"])
    def test_unknown(self, bad):
        with pytest.raises(UnknownLabel):
            RoomLabel.parse(bad)


class TestParse:
    def test_minimal_graph(self):
        g = parse_graph({"id": "g1", "nodes": [{"idx": 0, "label": "en"}, {"idx": 1, "label": "hw"}], "edges": [[0, 1]]})
        assert g.n_nodes == 2 and g.edges == ((0, 1),)

    def test_unknown_label(self):
        with pytest.raises(UnknownLabel):
            parse_graph(record(["en", "kitchen"], [(0, 1)]))

    def test_self_loop(self):
        with pytest.raises(SelfLoop):
            parse_graph(record(["en", "hw"], [(0, 0)]))

    def test_dangling(self):
        with pytest.raises(DanglingEdge):
            parse_graph(record(["en", "hw"], [(0, 5)]))

    def test_duplicate_edge_either_direction(self):
        with pytest.raises(DuplicateEdge):
            parse_graph(record(["en", "hw"], [(0, 1), (1, 0)]))

    def test_duplicate_node(self):
        rec = {"id": "g", "nodes": [{"idx": 0, "label": "en"}, {"idx": 0, "label": "hw"}], "edges": []}
        with pytest.raises(DuplicateNode):
            parse_graph(rec)

    @pytest.mark.parametrize("text", ["{", "[]", '{"id": "x"}', '{"id": "x", "nodes": 3, "edges": []}'])
    def test_malformed(self, text):
        with pytest.raises(MalformedRecord):
            parse_graph(text)

    def test_error_codes(self):
        assert SelfLoop.code == "SelfLoop" and UnknownLabel.code == "UnknownLabel"

    def test_nodes_listed_out_of_order_keep_file_order(self):
        rec = {"id": "g", "nodes": [{"idx": 1, "label": "hw"}, {"idx": 0, "label": "en"}], "edges": [[0, 1]]}
        g = parse_graph(json.dumps(rec))
        assert g.labels == ("hw", "en") and g.edges == ((0, 1),)


class TestStructure:
    def test_edges_canonical(self):
        g = make(["en", "hw", "we"], [(2, 1), (1, 0)])
        assert g.edges == ((0, 1), (1, 2))
        assert g.neighbors(1) == (0, 2)

    def test_directed_edges_symmetric(self, plan):
        d = plan.directed_edges()
        assert len(d) == 2 * plan.n_edges
        assert {tuple(e) for e in d} == {(j, i) for i, j in d}

    def test_one_hot_rows(self, plan):
        x = plan.one_hot()
        assert x.shape == (plan.n_nodes, 10)
        np.testing.assert_array_equal(x.sum(axis=1), 1.0)

    def test_csr(self, plan):
        indptr, indices = plan.csr()
        for i in range(plan.n_nodes):
            assert tuple(indices[indptr[i] : indptr[i + 1]]) == plan.neighbors(i)

    def test_permuted_moves_labels(self, path3):
        p = path3.permuted([2, 0, 1])
        assert p.labels == ("hw", "we", "en")
        assert p.edges == ((0, 1), (0, 2))

    def test_bad_permutation(self, path3):
        with pytest.raises(ValueError):
            path3.permuted([0, 0, 1])

    def test_permuted_accepts_numpy_ints(self, path3):
        p = path3.permuted(np.array([1, 2, 0]))
        assert all(type(i) is int for e in p.edges for i in e)


class TestValidate:
    def test_path_clean(self, path3):
        assert validate(path3).ok

    def test_disconnected(self):
        g = make(["en", "hw", "we", "ja"], [(0, 1), (2, 3)])
        assert "Disconnected" in validate(g).codes()
        assert connected_components(g) == [[0, 1], [2, 3]]

    def test_missing_entrance(self):
        assert "MissingEntrance" in validate(make(["hw", "we"], [(0, 1)])).codes()

    def test_multiple_entrances(self):
        assert validate(make(["en", "en", "hw"], [(0, 2), (1, 2)])).codes() == ["MultipleEntrances"]

    def test_empty(self):
        assert "Empty" in validate(AccessGraph("e", (), ())).codes()


class TestJsonl:
    def test_roundtrip(self, tmp_path, plan, path3):
        p = tmp_path / "g.jsonl"
        write_jsonl([plan, path3], p)
        back = read_jsonl(p)
        assert back == [plan, path3]

    def test_line_number_in_error(self, tmp_path):
        p = tmp_path / "g.jsonl"
        p.write_text(json.dumps(record(["en", "hw"], [(0, 1)])) + "\n" + json.dumps(record(["en", "zz"], [])) + "\n")
        with pytest.raises(UnknownLabel, match="line 2"):
            read_jsonl(p)


@st.composite
def graphs(draw, max_nodes=9):
    n = draw(st.integers(1, max_nodes))
    labels = draw(st.lists(st.sampled_from(LABELS), min_size=n, max_size=n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return make(labels, edges)


class TestProperties:
    @given(graphs(), st.randoms(use_true_random=False))
    @settings(max_examples=100, deadline=None)
    def test_record_roundtrip_under_permutation(self, g, rnd):
        perm = list(range(g.n_nodes))
        rnd.shuffle(perm)
        p = g.permuted(perm)
        assert parse_graph(p.to_record()) == p
        assert sorted(p.label_counts().items()) == sorted(g.label_counts().items())
        assert p.n_edges == g.n_edges
