#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Graph alignment: places synthetic feature rows onto the edges of a synthetic static graph.

A boosted scorer learns, for a (structural edge, feature row) pair, the mean cosine similarity
between the row and the reference flows carried by that edge. Each synthetic row then picks an
edge with probability proportional to its (thresholded) score.
"""

from dataclasses import dataclass
from typing import NamedTuple

import networkx as nx
import numpy as np
from tqdm import tqdm

from . import CONFIG, DataError, logger
from .features import encode_graph
from .flowgraph import DynamicMultigraph, to_static
from .scorer import fit_boosted


class StructuralDescriptor(NamedTuple):
    src_degree: float
    dst_degree: float
    src_betweenness: float
    dst_betweenness: float
    src_eigenvector: float
    dst_eigenvector: float
    src_laplacian: float
    dst_laplacian: float
    edge_betweenness: float


DESCRIPTOR_WIDTH = len(StructuralDescriptor._fields)


def eigenvector_centrality(graph):
    try:
        return nx.eigenvector_centrality(graph, max_iter=1000, tol=1e-8)
    except nx.PowerIterationFailedConvergence:
        logger.debug("Power iteration has not converged; using the dense eigensolver")
        nodes = list(graph)
        _, vectors = np.linalg.eigh(nx.to_numpy_array(graph, nodelist=nodes))
        leading = np.abs(vectors[:, -1])
        return dict(zip(nodes, (leading / np.linalg.norm(leading)).tolist()))


def laplacian_centrality(graph):
    """
    Relative drop of Laplacian energy (sum d^2 + 2m) on node removal:
        (d_v^2 + d_v + 2 * sum_{u~v} d_u) / (sum d^2 + 2m)
    """
    degree = dict(graph.degree())
    energy = sum(d * d for d in degree.values()) + 2 * graph.number_of_edges()
    if energy == 0:
        return dict.fromkeys(graph, 0.0)
    return {
        v: (degree[v] ** 2 + degree[v] + 2 * sum(degree[u] for u in graph.neighbors(v))) / energy for v in graph
    }


def node_centralities(g):
    """
    :return: ((N, 4) float array, undirected view); columns are directed in+out degree, then
        betweenness, eigenvector and Laplacian centrality on the undirected view without self-loops
    """
    view = g.undirected_view()
    result = np.zeros((g.node_count, 4))
    result[:, 0] = g.degrees()
    if view.number_of_edges():
        for column, values in enumerate(
            (nx.betweenness_centrality(view, normalized=False), eigenvector_centrality(view), laplacian_centrality(view)),
            start=1,
        ):
            result[list(values.keys()), column] = list(values.values())
    return result, view


def descriptor_matrix(g):
    """
    Descriptors of g.edges, row i <-> g.edges[i], columns in StructuralDescriptor order.
    """
    if not g.edge_count:
        return np.empty((0, DESCRIPTOR_WIDTH))
    nodes, view = node_centralities(g)
    edge_betweenness = (
        nx.edge_betweenness_centrality(view, normalized=False) if view.number_of_edges() else {}
    )
    src, dst = g.edges[:, 0], g.edges[:, 1]
    matrix = np.empty((g.edge_count, DESCRIPTOR_WIDTH))
    matrix[:, 0:8:2] = nodes[src]
    matrix[:, 1:8:2] = nodes[dst]
    matrix[:, 8] = [
        edge_betweenness.get((u, v), edge_betweenness.get((v, u), 0.0)) for u, v in g.edge_list()
    ]
    return matrix


def structural_features(g):
    """
    :rtype: dict (src, dst) -> StructuralDescriptor
    """
    return {edge: StructuralDescriptor(*row) for edge, row in zip(g.edge_list(), descriptor_matrix(g).tolist())}


@dataclass(frozen=True, eq=False)
class AlignmentTargets:  # pylint: disable=too-many-instance-attributes
    """
    Training pairs (edges[edge_index[p]], encoded[feature_index[p]]) with target[p] = mean cosine
    similarity of the feature row to the reference flows of that edge.

    feature_sums[i] = sum of f / |f| over the flows of edge i; flow_counts[i] = their number.
    """

    edges: np.ndarray
    encoded: np.ndarray
    feature_sums: np.ndarray
    flow_counts: np.ndarray
    edge_index: np.ndarray
    feature_index: np.ndarray
    target: np.ndarray
    sample_fraction: float

    def __len__(self):
        return len(self.target)


def build_targets(ref, enc, sample_fraction=None, seed=None, pair_budget=None):  # pylint: disable=too-many-locals
    """
    Candidate pairs are the cross product of reference static edges and reference flows,
    subsampled to <sample_fraction>. The fraction is lowered when it would exceed <pair_budget> pairs.

    :rtype: AlignmentTargets
    """
    sample_fraction = CONFIG["ALIGN_SAMPLE_FRACTION"] if sample_fraction is None else sample_fraction
    pair_budget = CONFIG["ALIGN_PAIR_BUDGET"] if pair_budget is None else pair_budget
    if not 0 < sample_fraction <= 1:
        raise ValueError(f"sample_fraction should lie in (0, 1], got {sample_fraction}")
    if not len(ref):
        raise DataError("Can not build alignment targets from a dataset without flows")
    rng = np.random.default_rng(seed)

    encoded = encode_graph(enc, ref, rng)
    norms = np.linalg.norm(encoded, axis=1)
    usable = norms > 0
    if not usable.all():
        logger.warning("Excluded %d flows with zero-norm encoded features", int((~usable).sum()))

    static = to_static(ref)
    edge_keys = static.edges[:, 0] * ref.node_count + static.edges[:, 1]
    flow_edge = np.searchsorted(edge_keys, ref.src * ref.node_count + ref.dst)
    unit = np.zeros_like(encoded)
    unit[usable] = encoded[usable] / norms[usable, None]
    feature_sums = np.zeros((static.edge_count, enc.width))
    np.add.at(feature_sums, flow_edge[usable], unit[usable])
    flow_counts = np.bincount(flow_edge[usable], minlength=static.edge_count)

    edges_ok = np.flatnonzero(flow_counts > 0)
    features_ok = np.flatnonzero(usable)
    total = len(edges_ok) * len(features_ok)
    if not total:
        raise DataError("No usable (edge, flow) pairs for alignment training")
    if total * sample_fraction > pair_budget:
        reduced = pair_budget / total
        logger.info("%d candidate pairs; sample_fraction %.4g -> %.4g", total, sample_fraction, reduced)
        sample_fraction = reduced
    pairs = max(1, int(round(total * sample_fraction)))
    picked = np.arange(total) if pairs == total else np.sort(rng.choice(total, size=pairs, replace=False))
    edge_index = edges_ok[picked // len(features_ok)]
    feature_index = features_ok[picked % len(features_ok)]

    dots = np.einsum("pw,pw->p", encoded[feature_index], feature_sums[edge_index])
    target = dots / (norms[feature_index] * flow_counts[edge_index])
    logger.debug("Alignment targets: %d pairs over %d edges, mean %.4f", len(target), len(edges_ok), target.mean())
    return AlignmentTargets(
        edges=static.edges,
        encoded=encoded,
        feature_sums=feature_sums,
        flow_counts=flow_counts,
        edge_index=edge_index,
        feature_index=feature_index,
        target=target,
        sample_fraction=sample_fraction,
    )


def scorer_inputs(encoded, descriptors):
    """
    Row-wise concat(encoded feature, edge descriptor).
    """
    return np.hstack([np.asarray(encoded, dtype=np.float64), np.asarray(descriptors, dtype=np.float64)])


def train_scorer(targets, descriptors, trees=None, depth=None, lr=None, seed=0):  # pylint: disable=too-many-arguments
    """
    :param descriptors: descriptor_matrix of the reference static graph (rows <-> targets.edges)
    :rtype: BoostedScorer
    """
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if len(descriptors) != len(targets.edges):
        raise DataError(f"{len(descriptors)} descriptors for {len(targets.edges)} reference edges")
    X = scorer_inputs(targets.encoded[targets.feature_index], descriptors[targets.edge_index])
    return fit_boosted(X, targets.target, trees=trees, depth=depth, lr=lr, seed=seed)


def _pick(weights, rng):
    """
    One column per row, with probability proportional to the row's weights.
    """
    cumulative = np.cumsum(weights, axis=1)
    draws = rng.random(len(weights))[:, None] * cumulative[:, -1:]
    return np.minimum((cumulative <= draws).sum(axis=1), weights.shape[1] - 1)


def assign_edges(  # pylint: disable=too-many-arguments,too-many-locals
    scorer, syn_graph, features, threshold=None, seed=None, edge_sample=None, chunk_rows=None
):
    """
    Picks one edge of <syn_graph> per feature row. Negative scores are clamped to 0, scores below
    <threshold> are zeroed; a row with no positive score falls back to a uniform pick.

    :param features: synthetic rows with their encoded form
    :type features: SampledFeatures
    :param edge_sample: score only this many uniformly drawn candidate edges per chunk
    :rtype: DynamicMultigraph
    """
    threshold = CONFIG["ALIGN_THRESHOLD"] if threshold is None else threshold
    edge_sample = CONFIG["ALIGN_EDGE_SAMPLE"] if edge_sample is None else edge_sample
    chunk_rows = CONFIG["ALIGN_SCORING_CHUNK_ROWS"] if chunk_rows is None else chunk_rows
    if threshold < 0:
        raise ValueError(f"threshold should be >= 0, got {threshold}")
    count = len(features)
    if count and not syn_graph.edge_count:
        raise DataError("Can not place flows on a graph without edges")

    rng = np.random.default_rng(seed)
    chosen = np.empty(count, dtype=np.int64)
    fallbacks = 0
    if count:
        descriptors = descriptor_matrix(syn_graph)
        candidates = syn_graph.edge_count if not edge_sample else min(edge_sample, syn_graph.edge_count)
        step = max(1, chunk_rows // candidates)
        chunks = range(0, count, step)
        for begin in tqdm(chunks, desc="Aligning", ascii=True, dynamic_ncols=True, disable=not CONFIG["PROGRESS_BARS"]):
            rows = np.arange(begin, min(begin + step, count))
            if candidates < syn_graph.edge_count:
                edge_ids = np.sort(rng.choice(syn_graph.edge_count, size=candidates, replace=False))
            else:
                edge_ids = np.arange(candidates)
            X = scorer_inputs(
                np.repeat(features.encoded[rows], candidates, axis=0), np.tile(descriptors[edge_ids], (len(rows), 1))
            )
            scores = np.maximum(scorer.predict(X).reshape(len(rows), candidates), 0.0)
            scores[scores < threshold] = 0.0
            empty = ~(scores > 0).any(axis=1)
            scores[empty] = 1.0
            fallbacks += int(empty.sum())
            chosen[rows] = edge_ids[_pick(scores, rng)]
    if fallbacks:
        logger.warning("%d of %d rows had no score above threshold %s; placed uniformly", fallbacks, count, threshold)

    edges = syn_graph.edges[chosen] if count else np.empty((0, 2), dtype=np.int64)
    return DynamicMultigraph(
        node_count=syn_graph.node_count,
        src=edges[:, 0],
        dst=edges[:, 1],
        start_time=features.start_time,
        duration=features.duration,
        port_protocol=features.port_protocol,
        vocabulary=features.vocabulary,
    )
