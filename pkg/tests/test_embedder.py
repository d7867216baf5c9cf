"""Risk-aware embedder: loss reductions, topology effects, normalization."""

import json

import numpy as np
import pytest

from outagegraph import graphbuild, ingest, synthgen
from outagegraph.gnn import EncoderConfig
from outagegraph.riskcluster import risk_targets, train_risk_embedder
from outagegraph.riskcluster.embedder import EmbedConfig, cyclical_lr
from outagegraph.riskcluster.metrics import format_p


@pytest.fixture(scope="module")
def cluster_world():
    cfg = synthgen.scenario_clusters(n_clusters=3, size=20, seed=17)
    data = synthgen.generate(cfg)
    clean = ingest.clean_dataset(data.raw_incidents, data.substations, data.lines)
    graph = graphbuild.build_graph(clean)
    return data, clean, graph


def small_encoder():
    return EncoderConfig(hidden_dim=16, heads=2, dropout_rate=0.0)


class TestRiskRegressionReduction:
    def test_zero_aux_weights_fit_targets(self, cluster_world):
        """w2 = w3 = 0 reduces to supervised risk regression; MSE < 0.01."""
        _, clean, graph = cluster_world
        targets = risk_targets(clean)
        ec = EmbedConfig(seed=0, epochs=250, w_topo=0.0, w_cluster=0.0,
                         lr_high=3e-3, encoder=small_encoder())
        _, history, model = train_risk_embedder(graph, targets, ec)
        assert history[-1]["total"] == pytest.approx(history[-1]["risk"])
        best_mse = min(h["risk"] for h in history)
        assert best_mse < 0.01


class TestTopologicalConsistency:
    def test_connected_pairs_more_similar_than_unconnected(self, cluster_world):
        _, clean, graph = cluster_world
        targets = risk_targets(clean)
        ec = EmbedConfig(seed=1, epochs=150, encoder=small_encoder())
        emb, _, _ = train_risk_embedder(graph, targets, ec)

        connected = {(min(e.u, e.v), max(e.u, e.v))
                     for e in graph.spatial + graph.temporal + graph.causal}
        rng = np.random.default_rng(0)
        n = graph.n_nodes
        unconnected = set()
        while len(unconnected) < len(connected):
            u, v = rng.integers(0, n, 2)
            if u != v and (min(u, v), max(u, v)) not in connected:
                unconnected.add((min(u, v), max(u, v)))

        def mean_cos(pairs):
            return float(np.mean([emb[u] @ emb[v] for u, v in pairs]))

        assert mean_cos(connected) > mean_cos(unconnected)


class TestEmbeddingContracts:
    def test_rows_unit_norm_through_serialization(self, cluster_world, tmp_path):
        _, clean, graph = cluster_world
        targets = risk_targets(clean)
        ec = EmbedConfig(seed=2, epochs=30, encoder=small_encoder())
        emb, _, _ = train_risk_embedder(graph, targets, ec)
        np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-6)

        path = tmp_path / "emb.json"
        path.write_text(json.dumps({"matrix": emb.tolist()}))
        back = np.array(json.loads(path.read_text())["matrix"])
        np.testing.assert_array_equal(back, emb)  # float round trip is exact
        np.testing.assert_allclose(np.linalg.norm(back, axis=1), 1.0, atol=1e-6)

    def test_deterministic_given_seed(self, cluster_world):
        _, clean, graph = cluster_world
        targets = risk_targets(clean)
        ec = EmbedConfig(seed=3, epochs=20, encoder=small_encoder())
        emb1, h1, _ = train_risk_embedder(graph, targets, ec)
        emb2, h2, _ = train_risk_embedder(graph, targets, ec)
        np.testing.assert_array_equal(emb1, emb2)
        assert h1 == h2


class TestCyclicalLearningRate:
    def test_triangular_wave(self):
        ec = EmbedConfig(lr_low=1e-4, lr_high=1e-3, cycle_epochs=20)
        assert cyclical_lr(0, ec) == pytest.approx(1e-4)
        assert cyclical_lr(10, ec) == pytest.approx(1e-3)
        assert cyclical_lr(20, ec) == pytest.approx(1e-4)
        assert cyclical_lr(5, ec) == pytest.approx(5.5e-4)


class TestRiskTargets:
    def test_max_scaled_per_column(self, cluster_world):
        _, clean, _ = cluster_world
        targets = risk_targets(clean)
        assert targets.shape[1] == 4
        assert np.all(targets >= 0.0) and np.all(targets <= 1.0)
        live_cols = targets.max(axis=0) > 0
        np.testing.assert_allclose(targets.max(axis=0)[live_cols], 1.0)


class TestPDisplayConvention:
    def test_small_p_formats_as_bound(self):
        assert format_p(5e-5) == "<0.0001"
        assert format_p(0.0) == "<0.0001"
        assert format_p(0.0213) == "0.0213"
