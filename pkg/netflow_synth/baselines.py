#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Comparison generators: random, scale-free (preferential attachment) and 2x2 Kronecker (R-MAT) structure,
each carrying reference feature rows resampled uniformly and placed on uniformly chosen edges.
"""

from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np

from . import DataError, logger
from .flowgraph import DynamicMultigraph, StaticGraph, to_static
from .kronecker import InfeasibleSpecError, KronSampleSpec, sample_graph
from .kronfit import kronfit

BASELINE_KINDS = ("random", "scale_free", "rmat2")


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    target_nodes: int
    target_edges: int
    flow_count: int
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"Unknown baseline {self.kind}; try one of {', '.join(BASELINE_KINDS)}")
        if self.target_nodes < 1:
            raise InfeasibleSpecError(f"target_nodes should be positive, got {self.target_nodes}")
        if not 0 <= self.target_edges <= self.target_nodes**2:
            raise InfeasibleSpecError(
                f"Can not place {self.target_edges} distinct edges on {self.target_nodes} nodes"
            )
        if self.flow_count < 0:
            raise InfeasibleSpecError(f"flow_count should be >= 0, got {self.flow_count}")
        if self.flow_count and not self.target_edges:
            raise InfeasibleSpecError(f"{self.flow_count} flows need at least one edge")

    @classmethod
    def like(cls, kind, ref, seed=None):
        """
        Spec with N, E and M of the reference dataset.
        """
        return cls(kind, ref.node_count, to_static(ref).edge_count, len(ref), seed)


def random_structure(node_count, edge_count, rng):
    """
    Uniform <edge_count> distinct ordered pairs, self-loops allowed.
    """
    cells = rng.choice(node_count * node_count, size=edge_count, replace=False)
    return StaticGraph(node_count, np.column_stack([cells // node_count, cells % node_count]))


def _match_edge_count(node_count, edges, edge_count, rng):
    """
    Drops uniformly chosen edges, or adds uniform distinct pairs, until exactly <edge_count> are left.
    """
    keys = np.unique(edges[:, 0] * node_count + edges[:, 1])
    if len(keys) > edge_count:
        keys = rng.choice(keys, size=edge_count, replace=False)
    elif len(keys) < edge_count:
        seen, extra = set(keys.tolist()), []
        while len(seen) < edge_count:
            for key in rng.integers(0, node_count * node_count, size=2 * (edge_count - len(seen))).tolist():
                if key not in seen and len(seen) < edge_count:
                    seen.add(key)
                    extra.append(key)
        keys = np.concatenate([keys, np.array(extra, dtype=np.int64)])
    return StaticGraph(node_count, np.column_stack([keys // node_count, keys % node_count]))


def scale_free_structure(node_count, edge_count, rng):
    """
    Barabasi-Albert growth with m = round(E / N) (edges point from the newer node to the older one),
    then trimmed or topped up to <edge_count>.
    """
    if node_count < 2:
        return random_structure(node_count, edge_count, rng)
    attach = int(min(max(round(edge_count / node_count), 1), node_count - 1))
    grown = nx.barabasi_albert_graph(node_count, attach, seed=int(rng.integers(2**31 - 1)))
    edges = np.array([(max(u, v), min(u, v)) for u, v in grown.edges()], dtype=np.int64).reshape(-1, 2)
    logger.debug("Preferential attachment: m=%d, %d edges grown for %d requested", attach, len(edges), edge_count)
    return _match_edge_count(node_count, edges, edge_count, rng)


def rmat2_structure(spec, ref, initiator=None):
    """
    Kronecker sample from a 2x2 initiator, fitted to <ref> unless given.
    """
    if initiator is None:
        initiator = kronfit(to_static(ref), 2, seed=spec.seed)
    elif initiator.n1 != 2:
        raise ValueError(f"rmat2 needs a 2x2 initiator, got {initiator.n1}x{initiator.n1}")
    sample_spec = KronSampleSpec.for_initiator(initiator, spec.target_nodes, spec.target_edges, spec.seed)
    return sample_graph(initiator, sample_spec)


def baseline_structure(spec, ref, initiator=None, rng=None):
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    if spec.kind == "random":
        return random_structure(spec.target_nodes, spec.target_edges, rng)
    if spec.kind == "scale_free":
        return scale_free_structure(spec.target_nodes, spec.target_edges, rng)
    return rmat2_structure(spec, ref, initiator)


def generate_baseline(spec, ref, initiator=None):
    """
    :param initiator: a fitted 2x2 initiator for rmat2 (fitted on <ref> when omitted)
    :rtype: DynamicMultigraph
    """
    flows, _ = baseline_member(spec, ref, initiator)
    return flows


def baseline_member(spec, ref, initiator=None):
    """
    :return: (flows, structure); with no flows requested the structure is all there is
    """
    if not len(ref):
        raise DataError("Baselines resample reference flows; the reference has none")
    rng = np.random.default_rng(spec.seed)
    structure = baseline_structure(spec, ref, initiator, rng)
    rows = rng.integers(0, len(ref), size=spec.flow_count)
    edges = np.empty((0, 2), dtype=np.int64)
    if spec.flow_count:
        edges = structure.edges[rng.integers(0, structure.edge_count, size=spec.flow_count)]
    logger.debug("%s baseline: N=%d, E=%d, M=%d", spec.kind, spec.target_nodes, structure.edge_count, spec.flow_count)
    flows = DynamicMultigraph(
        node_count=spec.target_nodes,
        src=edges[:, 0],
        dst=edges[:, 1],
        start_time=ref.start_time[rows],
        duration=ref.duration[rows],
        port_protocol=ref.port_protocol[rows],
        vocabulary=ref.vocabulary,
    )
    return flows, structure
