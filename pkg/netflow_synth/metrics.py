#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Ensemble evaluation over node-aligned dynamic multigraphs and secondary structural / feature measures.

L(G, G') = sum over day blocks t of the entrywise L1 norm of G_t - G'_t (flow counts).
For an ensemble S with member distances d_i = L(G_i, G_ref):
    A = L(G_ref, mean of S)      D = sample std of d      R = sqrt(sum d^2 / (|S| - 1))
    bias = A / R                 variability = D / R      E = bias^2 + variability
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional

import networkx as nx
import numpy as np
import pandas as pd

from . import CONFIG, DataError, logger
from .flowgraph import daily_tensor, day_count

REPORT_FIELDS = ("A", "D", "R", "bias", "variability", "E", "members")
CDF_FEATURES = ("start_time", "duration", "port_protocol")


def _check_correspondence(node_count, other, what):
    if other.node_count != node_count:
        raise DataError(
            f"{what} has {other.node_count} nodes, expected {node_count}: "
            "distances need node correspondence between graphs"
        )


def tensor_distance(a, b):
    """
    Sum of entrywise L1 norms of per-day differences; the shorter tensor is padded with empty days.
    """
    distance = 0.0
    for t in range(max(len(a), len(b))):
        if t >= len(a):
            distance += abs(b[t]).sum()
        elif t >= len(b):
            distance += abs(a[t]).sum()
        else:
            distance += abs(a[t] - b[t]).sum()
    return float(distance)


def edit_distance_sum(g, h, day_length=None):
    """
    :type g: DynamicMultigraph
    :type h: DynamicMultigraph
    """
    day_length = CONFIG["DAY_LENGTH_S"] if day_length is None else day_length
    _check_correspondence(g.node_count, h, "Second graph")
    days = max(day_count(g, day_length), day_count(h, day_length))
    return tensor_distance(daily_tensor(g, day_length, days), daily_tensor(h, day_length, days))


@dataclass(frozen=True)
class Ensemble:
    members: List = field(default_factory=list)
    day_length: float = 86400.0
    node_count: Optional[int] = None

    def __post_init__(self):
        if self.day_length <= 0:
            raise ValueError(f"day_length should be positive, got {self.day_length}")
        if self.node_count is None and self.members:
            object.__setattr__(self, "node_count", self.members[0].node_count)
        for i, member in enumerate(self.members):
            _check_correspondence(self.node_count, member, f"Member {i}")

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class EnsembleReport:
    """
    Undefined quantities (|S| < 2, or R = 0) are None.
    """

    A: float
    D: Optional[float]
    R: Optional[float]
    bias: Optional[float]
    variability: Optional[float]
    E: Optional[float]
    members: List[float]

    def to_dict(self):
        return {name: getattr(self, name) for name in REPORT_FIELDS}


def evaluate_ensemble(ref, ensemble, workers=1):
    """
    :type ref: DynamicMultigraph
    :type ensemble: Ensemble
    :rtype: EnsembleReport
    """
    if not len(ensemble):
        raise DataError("Can not evaluate an empty ensemble")
    _check_correspondence(ensemble.node_count, ref, "Reference")
    day_length = ensemble.day_length
    days = max(day_count(g, day_length) for g in [ref, *ensemble.members])
    ref_tensor = daily_tensor(ref, day_length, days)

    def _member(g):
        tensor = daily_tensor(g, day_length, days)
        return tensor, tensor_distance(tensor, ref_tensor)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        evaluated = list(executor.map(_member, ensemble.members))

    size = len(ensemble)
    mean_tensor = [sum(tensor[t] for tensor, _ in evaluated) / size for t in range(days)]
    distances = np.array([distance for _, distance in evaluated])
    accuracy = tensor_distance(ref_tensor, mean_tensor)

    diversity = radius = bias = variability = error = None
    if size >= 2:
        diversity = float(np.std(distances, ddof=1))
        radius = float(np.sqrt(np.sum(distances**2) / (size - 1)))
        if radius > 0:
            bias, variability = accuracy / radius, diversity / radius
            error = bias**2 + variability
        else:
            logger.warning("Ensemble radius is 0: all members coincide with the reference")
    else:
        logger.warning("Diversity and radius need at least 2 members, got %d", size)
    return EnsembleReport(accuracy, diversity, radius, bias, variability, error, distances.tolist())


@dataclass(frozen=True)
class StructuralReport:
    degree_similarity: float
    avg_path_length: float
    effective_diameter: float
    distinct_edges: int
    density: float
    clustering: float

    def to_dict(self):
        return asdict(self)


def degree_similarity(g, ref):
    """
    Cosine similarity of the descending degree sequences.
    """
    a, b = np.sort(g.degrees())[::-1].astype(float), np.sort(ref.degrees())[::-1].astype(float)
    size = max(len(a), len(b))
    a, b = np.pad(a, (0, size - len(a))), np.pad(b, (0, size - len(b)))
    norms = np.linalg.norm(a) * np.linalg.norm(b)
    if norms == 0:
        return 1.0 if not a.any() and not b.any() else 0.0
    return float(np.dot(a, b) / norms)


def path_lengths(view):
    """
    Shortest path lengths over unordered reachable pairs of distinct nodes.
    """
    lengths = []
    for source, reachable in nx.all_pairs_shortest_path_length(view):
        lengths.extend(length for target, length in reachable.items() if target > source)
    return np.array(lengths, dtype=np.float64)


def structural_report(g, ref):
    """
    :type g: StaticGraph
    :type ref: StaticGraph
    """
    _check_correspondence(ref.node_count, g, "Graph")
    view = g.undirected_view()
    lengths = path_lengths(view) if view.number_of_edges() else np.empty(0)
    return StructuralReport(
        degree_similarity=degree_similarity(g, ref),
        avg_path_length=float(lengths.mean()) if len(lengths) else 0.0,
        effective_diameter=float(np.percentile(lengths, 90)) if len(lengths) else 0.0,
        distinct_edges=int(g.edge_count),
        density=g.edge_count / g.node_count**2,
        clustering=float(nx.average_clustering(view)),
    )


class CdfTable(NamedTuple):
    """
    Empirical CDF: distinct sorted values and the fraction of observations <= each.
    """

    values: np.ndarray
    fractions: np.ndarray

    def at(self, x):
        if not len(self.values):
            return np.zeros(np.shape(x))
        index = np.searchsorted(self.values, x, side="right") - 1
        return np.where(index >= 0, self.fractions[np.maximum(index, 0)], 0.0)


def empirical_cdf(observations):
    values, counts = np.unique(np.asarray(observations, dtype=np.float64), return_counts=True)
    return CdfTable(values, np.cumsum(counts) / counts.sum() if len(counts) else np.empty(0))


def frequency_ranks(g, ref=None):
    """
    Per flow, the rank of its port_protocol label by frequency in <ref> (most frequent = 0).
    Labels unseen in <ref> rank after all of ref's labels, by their frequency in <g>.
    """
    ref = g if ref is None else ref

    def _by_frequency(graph):
        counts = np.bincount(graph.port_protocol, minlength=len(graph.vocabulary))
        return [graph.vocabulary[i] for i in np.argsort(-counts, kind="stable") if counts[i]]

    order = _by_frequency(ref)
    known = set(order)
    order += [label for label in _by_frequency(g) if label not in known]
    rank = {label: i for i, label in enumerate(order)}
    return np.array([rank[label] for label in g.labels()], dtype=np.float64)


def feature_cdfs(g, ref=None):
    """
    :return: feature name -> CdfTable; port_protocol is ranked by frequency in <ref> (or <g>)
    """
    return {
        "start_time": empirical_cdf(g.start_time),
        "duration": empirical_cdf(g.duration),
        "port_protocol": empirical_cdf(frequency_ranks(g, ref)),
    }


def ks_distance(a, b):
    """
    Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|, evaluated on the CDF tables.
    """
    grid = np.union1d(a.values, b.values)
    if not len(grid):
        return 0.0
    return float(np.max(np.abs(a.at(grid) - b.at(grid))))


def feature_ks(g, ref):
    """
    KS distance per feature between <g> and <ref>.
    """
    ours, theirs = feature_cdfs(g, ref), feature_cdfs(ref, ref)
    return {name: ks_distance(ours[name], theirs[name]) for name in CDF_FEATURES}


def write_cdfs(tables, out_dir, prefix):
    """
    One csv per feature: <prefix>_<feature>_cdf.csv with columns value,cumulative_fraction.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, table in tables.items():
        path = os.path.join(out_dir, f"{prefix}_{name}_cdf.csv")
        pd.DataFrame({"value": table.values, "cumulative_fraction": table.fractions}).to_csv(
            path, index=False, lineterminator="\n"
        )
        paths.append(path)
    logger.debug("Has saved %d CDF tables to %s", len(paths), out_dir)
    return paths
