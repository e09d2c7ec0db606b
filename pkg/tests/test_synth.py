import json

import numpy as np
import pytest

from floorplan_fpv.canon import deduplicate
from floorplan_fpv.dataset import load_tabular, ols_tabular
from floorplan_fpv.graph import read_jsonl, validate
from floorplan_fpv.stats import add_constant, fit_ols
from floorplan_fpv.synth import (
    DEFAULT_PLANTED,
    RENT_FLOOR,
    TABULAR_SLOPES,
    GroundTruth,
    SynthConfig,
    fixture_plans,
    generate_corpus,
    graph_utility,
    motif_counts,
    random_plan,
    write_corpus,
)

from conftest import make


@pytest.fixture(scope="module")
def big():
    return generate_corpus(SynthConfig(n_records=2000, seed=0))


class TestPlans:
    def test_grammar_invariants(self):
        rng = np.random.default_rng(0)
        for i in range(500):
            g = random_plan(rng, f"p{i}")
            assert validate(g).ok, validate(g).codes()
            assert g.label_counts()["en"] == 1
            assert 8 <= g.n_edges <= 25
            counts = g.label_counts()
            assert counts["ja"] + counts["we"] == 3 and counts["dk"] == 1

    def test_fixtures(self):
        plans = fixture_plans()
        assert len(plans) == 3 and all(validate(g).ok for g in plans)
        assert all(g.label_counts()["ja"] >= 1 for g in plans)
        # second and third differ by one hallway closet
        assert plans[2].n_nodes == plans[1].n_nodes + 1
        assert len(deduplicate(plans).classes) == 3


class TestMotifs:
    def test_counts(self):
        g = make(["en", "ja", "ja", "bl"], [(0, 1), (1, 2), (2, 3)])
        c = motif_counts(g)
        assert c["ja"] == 2 and c["ja-ja"] == 1 and c["bl-ja"] == 1 and c["en-ja"] == 1

    def test_one_balcony_adds_delta(self, plan):
        planted = {"bl": 5000.0}
        bl_host = plan.labels.index("dk")
        more = make(list(plan.labels) + ["bl"], list(plan.edges) + [(bl_host, plan.n_nodes)])
        assert graph_utility(more, planted) - graph_utility(plan, planted) == 5000.0


class TestCorpus:
    def test_deterministic(self, tmp_path):
        cfg = SynthConfig(n_records=100, n_templates=10, seed=7)
        a = write_corpus(tmp_path / "a", *generate_corpus(cfg), cfg)
        b = write_corpus(tmp_path / "b", *generate_corpus(cfg), cfg)
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()
        other = write_corpus(tmp_path / "c", *generate_corpus(SynthConfig(n_records=100, n_templates=10, seed=8)), cfg)
        assert other["graphs"].read_bytes() != a["graphs"].read_bytes()

    def test_all_valid_and_templates(self, big):
        ds, gt = big
        assert all(validate(g).ok for g in ds.graphs)
        assert len(deduplicate(ds.graphs).classes) <= 120
        assert len(set(gt.template.tolist())) <= 120

    def test_area_mean(self, big):
        ds, _ = big
        area = np.array([r.area for r in ds.records])
        assert abs(area.mean() - 65.2) <= 0.05 * 65.2

    def test_rent_assembly(self, big):
        ds, gt = big
        np.testing.assert_allclose(ds.rent, np.maximum(gt.tabular + gt.graph_utility + gt.noise, RENT_FLOOR))
        np.testing.assert_allclose(gt.graph_utility, [graph_utility(g, DEFAULT_PLANTED) for g in ds.graphs])

    def test_noise_free_empty_planted_is_linear(self):
        ds, gt = generate_corpus(SynthConfig(n_records=300, n_templates=20, seed=1, noise_sd=0.0, planted={}))
        assert np.all(gt.noise == 0) and np.all(gt.graph_utility == 0)
        fit = fit_ols(add_constant(ols_tabular(ds.records)), ds.rent, compute_vif=False)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)
        for k, name in enumerate(("land_price", "area", "year", "f_building", "f_dwelling", "distance", "passenger")):
            assert fit.coefficients[k] == pytest.approx(TABULAR_SLOPES[name], rel=1e-6)

    def test_oracle_regression_recovers_planted(self, big):
        ds, _ = big
        motifs = sorted(DEFAULT_PLANTED)
        mc = np.array([[motif_counts(g).get(m, 0) for m in motifs] for g in ds.graphs])
        fit = fit_ols(add_constant(np.column_stack([mc, ols_tabular(ds.records)])), ds.rent, compute_vif=False)
        for k, m in enumerate(motifs):
            assert abs(fit.coefficients[k] - DEFAULT_PLANTED[m]) <= 3 * fit.standard_errors[k]

    @pytest.mark.parametrize("bad", [dict(n_records=0), dict(n_templates=0), dict(noise_sd=-1.0)])
    def test_infeasible(self, bad):
        with pytest.raises(ValueError):
            generate_corpus(SynthConfig(**bad))

    def test_write_corpus(self, tmp_path):
        cfg = SynthConfig(n_records=50, n_templates=5, seed=2)
        ds, gt = generate_corpus(cfg)
        paths = write_corpus(tmp_path, ds, gt, cfg)
        assert read_jsonl(paths["graphs"]) == ds.graphs
        records, report = load_tabular(paths["tabular"])
        assert records == ds.records and not report.dropped
        truth = json.loads(paths["truth"].read_text())
        assert truth["config"]["seed"] == 2 and truth["planted"] == DEFAULT_PLANTED
        back = GroundTruth.from_dict(truth)
        np.testing.assert_array_equal(back.graph_utility, gt.graph_utility)
        assert SynthConfig.from_dict(truth["config"]) == cfg
