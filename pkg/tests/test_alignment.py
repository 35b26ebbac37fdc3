import logging

import networkx as nx
import numpy as np
import pytest
from scipy import stats

from netflow_synth import DataError
from netflow_synth.alignment import (
    DESCRIPTOR_WIDTH,
    StructuralDescriptor,
    assign_edges,
    build_targets,
    descriptor_matrix,
    laplacian_centrality,
    node_centralities,
    structural_features,
    train_scorer,
)
from netflow_synth.features import SampledFeatures, fit_encoder
from netflow_synth.flowgraph import DynamicMultigraph, StaticGraph, to_static
from netflow_synth.scorer import LEAF, BoostedScorer, RegressionTree

from conftest import flows_on

ENCODED_WIDTH = 4


def constant_scorer(score):
    return BoostedScorer(base=score, lr=0.1, trees=[])


def src_degree_scorer(low, high, split=1.5):
    """
    Scores <low> for edges whose source degree is <= split, <high> otherwise.
    """
    tree = RegressionTree(
        feature=[ENCODED_WIDTH, LEAF, LEAF],
        threshold=[split, 0.0, 0.0],
        left=[1, LEAF, LEAF],
        right=[2, LEAF, LEAF],
        value=[0.0, low, high],
    )
    return BoostedScorer(base=0.0, lr=1.0, trees=[tree])


def rows(count, seed=0):
    rng = np.random.default_rng(seed)
    return SampledFeatures(
        start_time=rng.uniform(0, 100, count),
        duration=rng.exponential(5, count),
        port_protocol=np.zeros(count, dtype=np.int64),
        vocabulary=("80/tcp",),
        encoded=rng.normal(size=(count, ENCODED_WIDTH)),
    )


class TestStructuralFeatures:
    def test_star_center_betweenness(self):
        nodes, _ = node_centralities(StaticGraph(5, [(0, 1), (0, 2), (0, 3), (0, 4)]))
        assert nodes[0, 1] == 6
        assert nodes[1:, 1].tolist() == [0, 0, 0, 0]

    def test_path_edge_betweenness(self):
        matrix = descriptor_matrix(StaticGraph(3, [(0, 1), (1, 2)]))
        assert matrix[:, 8].tolist() == [2.0, 2.0]

    def test_isolated_edge_eigenvector(self):
        features = structural_features(StaticGraph(2, [(0, 1)]))
        descriptor = features[(0, 1)]
        assert descriptor.src_eigenvector == pytest.approx(descriptor.dst_eigenvector)
        assert descriptor.src_eigenvector > 0

    def test_laplacian_matches_networkx(self):
        graph = nx.gnm_random_graph(15, 30, seed=1)
        ours = laplacian_centrality(graph)
        theirs = nx.laplacian_centrality(graph)
        assert all(ours[v] == pytest.approx(theirs[v]) for v in graph)

    def test_degree_is_directed_in_plus_out(self):
        features = structural_features(StaticGraph(3, [(0, 1), (1, 0), (1, 2)]))
        assert features[(0, 1)].src_degree == 2
        assert features[(1, 2)].src_degree == 3
        assert features[(1, 2)].dst_degree == 1

    def test_rows_follow_edges(self, planted_graph):
        matrix = descriptor_matrix(planted_graph)
        assert matrix.shape == (planted_graph.edge_count, DESCRIPTOR_WIDTH)
        features = structural_features(planted_graph)
        assert list(features) == planted_graph.edge_list()
        assert all(isinstance(d, StructuralDescriptor) for d in features.values())
        assert np.all(np.isfinite(matrix))

    def test_empty_graph(self):
        assert descriptor_matrix(StaticGraph(4)).shape == (0, DESCRIPTOR_WIDTH)


class TestTargets:
    def test_identical_flows(self):
        ref = DynamicMultigraph(2, [0, 0, 0], [1, 1, 1], [3.0] * 3, [2.0] * 3, [0, 0, 0], ("80/tcp",))
        targets = build_targets(ref, fit_encoder(ref, modes=2, seed=0), sample_fraction=1.0, seed=0)
        assert len(targets) == 3
        assert targets.target == pytest.approx(np.ones(3), abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_pairwise_cosine(self, seed):
        rng = np.random.default_rng(seed)
        structure = StaticGraph(6, rng.integers(0, 6, size=(8, 2)))
        ref = flows_on(structure, 30, seed=seed)
        targets = build_targets(ref, fit_encoder(ref, modes=2, seed=seed), sample_fraction=0.5, seed=seed)
        unit = targets.encoded / np.linalg.norm(targets.encoded, axis=1, keepdims=True)
        for edge, feature, target in zip(targets.edge_index, targets.feature_index, targets.target):
            src, dst = targets.edges[edge]
            carried = np.flatnonzero((ref.src == src) & (ref.dst == dst))
            assert target == pytest.approx(np.mean(unit[carried] @ unit[feature]), abs=1e-12)

    def test_pair_budget(self, reference):
        enc = fit_encoder(reference, modes=2, seed=0)
        targets = build_targets(reference, enc, sample_fraction=1.0, seed=0, pair_budget=100)
        assert len(targets) == 100
        assert targets.sample_fraction < 1.0

    def test_fraction_subsamples(self, reference):
        enc = fit_encoder(reference, modes=2, seed=0)
        full = build_targets(reference, enc, sample_fraction=1.0, seed=0, pair_budget=10**9)
        tenth = build_targets(reference, enc, sample_fraction=0.1, seed=0, pair_budget=10**9)
        assert len(full) == to_static(reference).edge_count * len(reference)
        assert len(tenth) == round(len(full) * 0.1)

    def test_bad_fraction(self, reference):
        enc = fit_encoder(reference, modes=2, seed=0)
        with pytest.raises(ValueError):
            build_targets(reference, enc, sample_fraction=0.0)

    def test_empty_reference(self, reference):
        enc = fit_encoder(reference, modes=2, seed=0)
        with pytest.raises(DataError):
            build_targets(DynamicMultigraph(4, [], [], [], [], [], reference.vocabulary), enc)


class TestTraining:
    def test_scorer_learns_targets(self, reference):
        enc = fit_encoder(reference, modes=2, seed=0)
        targets = build_targets(reference, enc, sample_fraction=0.2, seed=0, pair_budget=5000)
        scorer = train_scorer(targets, descriptor_matrix(to_static(reference)), trees=30, depth=3, lr=0.1)
        assert scorer.train_mse[-1] < scorer.train_mse[0]
        assert scorer.n_inputs == enc.width + DESCRIPTOR_WIDTH

    def test_descriptor_count_mismatch(self, reference):
        enc = fit_encoder(reference, modes=2, seed=0)
        targets = build_targets(reference, enc, sample_fraction=0.1, seed=0)
        with pytest.raises(DataError):
            train_scorer(targets, np.zeros((1, DESCRIPTOR_WIDTH)), trees=1)


class TestAssignment:
    def test_single_edge_takes_everything(self):
        g = assign_edges(constant_scorer(0.3), StaticGraph(4, [(2, 3)]), rows(50), threshold=0.1, seed=0)
        assert set(zip(g.src.tolist(), g.dst.tolist())) == {(2, 3)}

    def test_threshold_excludes_low_scores(self):
        # source degrees: node 0 -> 1, node 1 -> 2
        syn = StaticGraph(3, [(0, 1), (1, 2)])
        g = assign_edges(src_degree_scorer(low=0.9, high=0.05), syn, rows(2000), threshold=0.1, seed=1)
        assert g.src.tolist() == [0] * 2000

    def test_equal_scores_split_evenly(self):
        syn = StaticGraph(3, [(0, 1), (1, 2)])
        g = assign_edges(constant_scorer(0.5), syn, rows(10_000), threshold=0.1, seed=2)
        assert abs(int(np.sum(g.src == 0)) - 5000) <= 150

    def test_output_keeps_rows(self, planted_graph):
        features = rows(300, seed=3)
        g = assign_edges(constant_scorer(0.5), planted_graph, features, threshold=0.1, seed=3)
        assert len(g) == 300
        assert np.array_equal(g.start_time, features.start_time)
        assert np.array_equal(g.duration, features.duration)
        assert set(zip(g.src.tolist(), g.dst.tolist())) <= set(planted_graph.edge_list())

    def test_uniform_under_constant_score(self):
        syn = StaticGraph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (1, 3), (2, 4)])
        g = assign_edges(constant_scorer(0.5), syn, rows(8000, seed=4), threshold=0.1, seed=4)
        keys = g.src * 5 + g.dst
        counts = [int(np.sum(keys == u * 5 + v)) for u, v in syn.edge_list()]
        assert stats.chisquare(counts).pvalue > 0.001

    def test_fallback_is_uniform_and_reported(self, caplog):
        syn = StaticGraph(3, [(0, 1), (1, 2)])
        with caplog.at_level(logging.WARNING, logger="netflow_synth"):
            g = assign_edges(constant_scorer(0.01), syn, rows(1000), threshold=0.1, seed=5)
        assert "placed uniformly" in caplog.text
        assert 400 <= int(np.sum(g.src == 0)) <= 600

    def test_negative_scores_count_as_zero(self):
        syn = StaticGraph(3, [(0, 1), (1, 2)])
        g = assign_edges(src_degree_scorer(low=-5.0, high=0.4), syn, rows(500), threshold=0.0, seed=6)
        assert g.src.tolist() == [1] * 500

    def test_edge_subsample(self, planted_graph):
        g = assign_edges(constant_scorer(0.5), planted_graph, rows(200), threshold=0.1, seed=7, edge_sample=5)
        assert set(zip(g.src.tolist(), g.dst.tolist())) <= set(planted_graph.edge_list())

    def test_deterministic(self, planted_graph):
        features = rows(100)
        first = assign_edges(constant_scorer(0.5), planted_graph, features, threshold=0.1, seed=8, chunk_rows=500)
        second = assign_edges(constant_scorer(0.5), planted_graph, features, threshold=0.1, seed=8, chunk_rows=500)
        assert first == second

    def test_no_rows(self, planted_graph):
        assert len(assign_edges(constant_scorer(0.5), planted_graph, rows(0), threshold=0.1, seed=0)) == 0

    def test_no_edges(self):
        with pytest.raises(DataError):
            assign_edges(constant_scorer(0.5), StaticGraph(3), rows(5), threshold=0.1, seed=0)
