import numpy as np
import pytest

from netflow_synth.baselines import (
    BASELINE_KINDS,
    BaselineSpec,
    generate_baseline,
    random_structure,
    rmat2_structure,
    scale_free_structure,
)
from netflow_synth.flowgraph import to_static
from netflow_synth.kronecker import InfeasibleSpecError, InitiatorMatrix
from netflow_synth.metrics import feature_ks


class TestStructures:
    def test_random_can_fill_the_matrix(self):
        g = random_structure(4, 16, np.random.default_rng(0))
        assert g.edge_count == 16
        assert len(set(g.edge_list())) == 16

    def test_scale_free_is_skewed(self):
        g = scale_free_structure(1000, 3000, np.random.default_rng(1))
        degrees = g.degrees()
        assert g.edge_count == 3000
        assert degrees.max() >= 3 * np.median(degrees)

    @pytest.mark.parametrize("edges", [10, 45, 90])
    def test_scale_free_exact_edge_count(self, edges):
        assert scale_free_structure(10, edges, np.random.default_rng(edges)).edge_count == edges

    def test_rmat2_uses_the_given_initiator(self, planted, reference):
        spec = BaselineSpec.like("rmat2", reference, seed=3)
        g = rmat2_structure(spec, reference, planted)
        assert g.edge_count == spec.target_edges
        assert g.node_count == spec.target_nodes

    def test_rmat2_rejects_other_initiator_sizes(self, reference):
        spec = BaselineSpec.like("rmat2", reference, seed=3)
        with pytest.raises(ValueError):
            rmat2_structure(spec, reference, InitiatorMatrix(np.full((3, 3), 0.5)))


class TestGenerate:
    @pytest.mark.parametrize("kind", BASELINE_KINDS)
    def test_matches_reference_size(self, kind, reference, planted):
        spec = BaselineSpec.like(kind, reference, seed=4)
        g = generate_baseline(spec, reference, planted)
        assert (g.node_count, len(g)) == (reference.node_count, len(reference))
        assert to_static(g).edge_count <= spec.target_edges
        assert g.vocabulary == reference.vocabulary

    def test_rmat2_fits_when_no_initiator_is_given(self, reference):
        g = generate_baseline(BaselineSpec.like("rmat2", reference, seed=5), reference)
        assert len(g) == len(reference)

    @pytest.mark.parametrize("kind", ["random", "scale_free"])
    def test_no_flows(self, kind, reference):
        g = generate_baseline(BaselineSpec(kind, reference.node_count, 20, 0, seed=0), reference)
        assert len(g) == 0
        assert g.node_count == reference.node_count

    @pytest.mark.parametrize("kind", ["random", "scale_free"])
    def test_features_follow_the_reference(self, kind, reference):
        g = generate_baseline(BaselineSpec(kind, reference.node_count, 100, 20_000, seed=6), reference)
        distances = feature_ks(g, reference)
        assert max(distances.values()) <= 0.05, distances

    def test_deterministic(self, reference):
        spec = BaselineSpec.like("scale_free", reference, seed=7)
        assert generate_baseline(spec, reference) == generate_baseline(spec, reference)


class TestSpec:
    def test_like(self, reference):
        spec = BaselineSpec.like("random", reference, seed=1)
        assert spec.target_nodes == reference.node_count
        assert spec.target_edges == to_static(reference).edge_count
        assert spec.flow_count == len(reference)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            BaselineSpec("lattice", 4, 4, 4)

    @pytest.mark.parametrize(
        "nodes, edges, flows",
        [(0, 0, 0), (3, 10, 5), (3, 4, -1), (3, 0, 5)],
    )
    def test_infeasible(self, nodes, edges, flows):
        with pytest.raises(InfeasibleSpecError):
            BaselineSpec("random", nodes, edges, flows)
