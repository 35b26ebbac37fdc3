#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Netflow data model: flows as a dynamic multigraph over dense integer node ids.

IP strings are kept only in DynamicMultigraph.ip_map; everything written by the package
(datasets, node/edge lists) uses node ids.
"""

import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from scipy import sparse

from . import CONFIG, DataError, NetflowSynthError, logger

SERIALIZED_COLUMNS = ("src", "dst", "start_time", "duration", "port_protocol")
EDGE_LIST_COLUMNS = ("src", "dst", "flow_count")


class SchemaError(NetflowSynthError):
    pass


class NetflowRecord(NamedTuple):
    src: int
    dst: int
    start_time: float
    duration: float
    port_protocol: str

    @property
    def end_time(self):
        return self.start_time + self.duration


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DynamicMultigraph:  # pylint: disable=too-many-instance-attributes
    """
    Columnar storage of M flows between N nodes. Row i of every column is flow i.

    port_protocol holds indices into vocabulary.
    """

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    start_time: np.ndarray
    duration: np.ndarray
    port_protocol: np.ndarray
    vocabulary: Tuple[str, ...]
    ip_map: Optional[Tuple[str, ...]] = None
    epoch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "src", _frozen(self.src, np.int64))
        object.__setattr__(self, "dst", _frozen(self.dst, np.int64))
        object.__setattr__(self, "start_time", _frozen(self.start_time, np.float64))
        object.__setattr__(self, "duration", _frozen(self.duration, np.float64))
        object.__setattr__(self, "port_protocol", _frozen(self.port_protocol, np.int64))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if self.ip_map is not None:
            object.__setattr__(self, "ip_map", tuple(self.ip_map))
        self._validate()

    def _validate(self):
        if self.node_count < 1:
            raise DataError(f"node_count should be positive, got {self.node_count}")
        lengths = {len(col) for col in (self.src, self.dst, self.start_time, self.duration, self.port_protocol)}
        if len(lengths) != 1:
            raise DataError(f"Flow columns have different lengths: {sorted(lengths)}")
        if self.flow_count:
            if min(self.src.min(), self.dst.min()) < 0 or max(self.src.max(), self.dst.max()) >= self.node_count:
                raise DataError(f"Flow endpoints should lie in [0, {self.node_count})")
            if self.duration.min() < 0:
                raise DataError("Flow durations should be non-negative")
            if self.port_protocol.min() < 0 or self.port_protocol.max() >= len(self.vocabulary):
                raise DataError("port_protocol indices lie outside of vocabulary")
        if self.ip_map is not None and len(self.ip_map) != self.node_count:
            raise DataError(f"ip_map has {len(self.ip_map)} entries for {self.node_count} nodes")

    def __len__(self):
        return self.flow_count

    def __eq__(self, other):
        """
        Datasets are equal when they hold the same flows over the same node ids.
        ip_map and epoch are metadata and do not take part.
        """
        if not isinstance(other, DynamicMultigraph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.start_time, other.start_time)
            and np.array_equal(self.duration, other.duration)
            and list(self.labels()) == list(other.labels())
        )

    __hash__ = None

    @property
    def flow_count(self):
        return len(self.src)

    @property
    def end_time(self):
        return self.start_time + self.duration

    def labels(self):
        vocabulary = np.array(self.vocabulary, dtype=object)
        return vocabulary[self.port_protocol] if self.flow_count else np.array([], dtype=object)

    def records(self):
        for src, dst, start, duration, label in zip(
            self.src.tolist(), self.dst.tolist(), self.start_time.tolist(), self.duration.tolist(), self.labels()
        ):
            yield NetflowRecord(src, dst, start, duration, label)

    def node_label(self, node):
        return self.ip_map[node] if self.ip_map is not None else str(node)

    @classmethod
    def from_records(cls, records, node_count, vocabulary=None, ip_map=None, epoch=0.0):
        """
        Builds a dataset from NetflowRecord-like rows. Labels, missing from <vocabulary>,
        are appended to it in first-appearance order.
        """
        records = list(records)
        vocabulary = list(vocabulary or [])
        index = {label: i for i, label in enumerate(vocabulary)}
        codes = []
        for rec in records:
            if rec.port_protocol not in index:
                index[rec.port_protocol] = len(vocabulary)
                vocabulary.append(rec.port_protocol)
            codes.append(index[rec.port_protocol])
        return cls(
            node_count=node_count,
            src=[rec.src for rec in records],
            dst=[rec.dst for rec in records],
            start_time=[rec.start_time for rec in records],
            duration=[rec.duration for rec in records],
            port_protocol=codes,
            vocabulary=vocabulary,
            ip_map=ip_map,
            epoch=epoch,
        )


@dataclass(frozen=True, eq=False)
class StaticGraph:
    """
    Simple graph: distinct node pairs, lexicographically sorted, shape (E, 2).
    Undirected graphs store each pair once as (min, max).
    """

    node_count: int
    edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    directed: bool = True

    def __post_init__(self):
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        if not self.directed:
            edges = np.sort(edges, axis=1)
        edges = np.unique(edges, axis=0) if len(edges) else edges
        if len(edges) and (edges.min() < 0 or edges.max() >= self.node_count):
            raise DataError(f"Edge endpoints should lie in [0, {self.node_count})")
        edges.flags.writeable = False
        object.__setattr__(self, "edges", edges)

    def __eq__(self, other):
        if not isinstance(other, StaticGraph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.directed == other.directed
            and np.array_equal(self.edges, other.edges)
        )

    __hash__ = None

    @property
    def edge_count(self):
        return len(self.edges)

    def edge_list(self):
        return [tuple(edge) for edge in self.edges.tolist()]

    def degrees(self):
        """
        In + out degree per node (a self-loop counts twice).
        """
        return np.bincount(self.edges.ravel(), minlength=self.node_count)

    def undirected_view(self, drop_self_loops=True):
        graph = nx.Graph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(self.edge_list())
        if drop_self_loops:
            graph.remove_edges_from(list(nx.selfloop_edges(graph)))
        return graph


def _resolve_columns(columns, schema):
    """
    Maps logical fields to csv columns. Either <end> or <duration> is required; either
    <port> + <protocol> or a single <port_protocol> column is required.
    """
    resolved = {}

    def _require(name):
        column = schema.get(name)
        if column is None or column not in columns:
            raise SchemaError(f'Required column "{column or name}" ({name}) not found; got {list(columns)}')
        resolved[name] = column

    def _optional(name):
        column = schema.get(name)
        if column is not None and column in columns:
            resolved[name] = column
            return True
        return False

    for name in ("src", "dst", "start"):
        _require(name)
    if not _optional("duration"):
        _require("end")
    if not _optional("port_protocol"):
        _require("port")
        _require("protocol")
    return resolved


def ingest_csv(path, schema=None, node_ids="ip", rebase=True, node_count=None):
    """
    Reads a netflow csv into a DynamicMultigraph.

    node_ids="ip": src/dst are arbitrary strings, node ids are assigned in first-appearance
    order (src before dst within a row). node_ids="index": src/dst already are node ids.
    Rows with negative duration are rejected (counted warning).

    :param schema: logical field -> csv column name; defaults to CONFIG["CSV_SCHEMA"]
    :type schema: dict
    :param rebase: shift start times so that the earliest flow starts at 0
    :param node_count: declared N (for node_ids="index"); inferred from max id if omitted
    """
    schema = dict(CONFIG["CSV_SCHEMA"] if schema is None else schema)
    if not os.path.isfile(path):
        raise DataError(f"Input file not found: {path}")
    logger.debug("Reading flows from %s", path)
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path} is empty!") from e
    if frame.empty:
        raise DataError(f"{path} has no flow rows!")

    columns = _resolve_columns(frame.columns, schema)
    try:
        start = frame[columns["start"]].astype(np.float64).to_numpy()
        if "duration" in columns:
            duration = frame[columns["duration"]].astype(np.float64).to_numpy()
        else:
            duration = frame[columns["end"]].astype(np.float64).to_numpy() - start
    except ValueError as e:
        raise DataError(f"Non-numeric timestamps in {path}: {e}") from e
    if "port_protocol" in columns:
        labels = frame[columns["port_protocol"]].to_numpy()
    else:
        labels = (frame[columns["port"]] + "/" + frame[columns["protocol"]]).to_numpy()

    valid = duration >= 0
    rejected = int((~valid).sum())
    if rejected:
        logger.warning("Rejected %d rows with negative duration (end < start) in %s", rejected, path)
    if not valid.any():
        raise DataError(f"{path} has no valid flow rows!")

    raw_src = frame[columns["src"]].to_numpy()[valid]
    raw_dst = frame[columns["dst"]].to_numpy()[valid]
    start, duration, labels = start[valid], duration[valid], labels[valid]

    if node_ids == "ip":
        interleaved = np.column_stack([raw_src, raw_dst]).ravel()
        uniques, first_seen, inverse = np.unique(interleaved, return_index=True, return_inverse=True)
        order = np.argsort(first_seen, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        ids = rank[inverse].reshape(-1, 2)
        src, dst = ids[:, 0], ids[:, 1]
        ip_map = tuple(uniques[order].tolist())
        node_count = len(ip_map)
    elif node_ids == "index":
        try:
            src, dst = raw_src.astype(np.int64), raw_dst.astype(np.int64)
        except ValueError as e:
            raise DataError(f"Node ids in {path} should be integers: {e}") from e
        inferred = int(max(src.max(), dst.max())) + 1
        if node_count is None:
            node_count = inferred
        elif inferred > node_count:
            raise DataError(f"{path} refers to node {inferred - 1}, but only {node_count} nodes are declared")
        ip_map = None
    else:
        raise ValueError(f"Unsupported node_ids mode: {node_ids}")

    epoch = 0.0
    if rebase:
        epoch = float(start.min())
        start = start - epoch

    vocab_values, vocab_first, codes = np.unique(labels, return_index=True, return_inverse=True)
    vocab_order = np.argsort(vocab_first, kind="stable")
    vocab_rank = np.empty_like(vocab_order)
    vocab_rank[vocab_order] = np.arange(len(vocab_order))

    graph = DynamicMultigraph(
        node_count=node_count,
        src=src,
        dst=dst,
        start_time=start,
        duration=duration,
        port_protocol=vocab_rank[codes],
        vocabulary=tuple(vocab_values[vocab_order].tolist()),
        ip_map=ip_map,
        epoch=epoch,
    )
    logger.info("Loaded %s: N=%d, M=%d, %d port-protocols", path, graph.node_count, len(graph), len(graph.vocabulary))
    return graph


def read_dataset(path, node_count=None):
    """
    Reads a csv, written by write_csv (node ids as-is, no time rebasing).
    """
    schema = {"src": "src", "dst": "dst", "start": "start_time", "duration": "duration"}
    schema["port_protocol"] = "port_protocol"
    return ingest_csv(path, schema, node_ids="index", rebase=False, node_count=node_count)


def write_csv(graph, path):
    """
    Fixed column order: src,dst,start_time,duration,port_protocol.
    """
    frame = pd.DataFrame(
        {
            "src": graph.src,
            "dst": graph.dst,
            "start_time": graph.start_time,
            "duration": graph.duration,
            "port_protocol": graph.labels(),
        },
        columns=list(SERIALIZED_COLUMNS),
    )
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.debug("Has saved %d flows to %s", len(graph), path)


def export_graph(graph, out_dir):
    """
    Writes nodes.csv (node_id, label) and edges.csv (src, dst, flow_count) for external viewers.
    """
    os.makedirs(out_dir, exist_ok=True)
    nodes = pd.DataFrame(
        {"node_id": np.arange(graph.node_count), "label": [graph.node_label(n) for n in range(graph.node_count)]}
    )
    nodes.to_csv(os.path.join(out_dir, "nodes.csv"), index=False, lineterminator="\n")
    structure = to_static(graph)
    write_edge_list(structure, os.path.join(out_dir, "edges.csv"), graph)
    logger.info("Exported %d nodes and %d edges to %s", graph.node_count, structure.edge_count, out_dir)


def flow_counts(structure, graph=None):
    """
    Flows of <graph> per edge of <structure> (flows off the structure are not counted).
    """
    counts = np.zeros(structure.edge_count, dtype=np.int64)
    if graph is None or not len(graph) or not structure.edge_count:
        return counts
    keys = structure.edges[:, 0] * structure.node_count + structure.edges[:, 1]
    flow_keys = graph.src * structure.node_count + graph.dst
    at = np.minimum(np.searchsorted(keys, flow_keys), len(keys) - 1)
    on_structure = keys[at] == flow_keys
    np.add.at(counts, at[on_structure], 1)
    return counts


def write_edge_list(structure, path, graph=None):
    """
    Edge list dialect: src,dst,flow_count; every edge of <structure> is listed, flow-less ones with 0.
    """
    frame = pd.DataFrame(
        {
            "src": structure.edges[:, 0],
            "dst": structure.edges[:, 1],
            "flow_count": flow_counts(structure, graph),
        },
        columns=list(EDGE_LIST_COLUMNS),
    )
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.debug("Has saved %d edges to %s", len(frame), path)


def read_edge_list(path, node_count):
    """
    :rtype: StaticGraph
    """
    if not os.path.isfile(path):
        raise DataError(f"Edge list not found: {path}")
    frame = pd.read_csv(path)
    missing = [column for column in EDGE_LIST_COLUMNS[:2] if column not in frame.columns]
    if missing:
        raise SchemaError(f"{path} has no {missing} columns")
    try:
        edges = frame[["src", "dst"]].to_numpy(dtype=np.int64)
    except (TypeError, ValueError) as e:
        raise DataError(f"Node ids in {path} should be integers: {e}") from e
    return StaticGraph(node_count, edges, directed=True)


def to_static(graph, directed=True):
    """
    Distinct (src, dst) pairs over all flows.
    """
    return StaticGraph(graph.node_count, np.column_stack([graph.src, graph.dst]), directed=directed)


def day_count(graph, day_length):
    """
    Number of day blocks, spanned by flows: blocks 0 .. floor(max end / day_length).
    """
    if day_length <= 0:
        raise ValueError(f"day_length should be positive, got {day_length}")
    if not len(graph):
        return 0
    return int(np.floor(graph.end_time.max() / day_length)) + 1


def daily_tensor(graph, day_length=None, days=None):
    """
    Per day t, an N x N sparse matrix counting flows i -> j active during
    [t * day_length, (t + 1) * day_length). A flow [start, start + duration] counts in every
    block it touches.

    :param days: pad (with empty matrices) to this many blocks
    :rtype: list of scipy.sparse.csr_matrix
    """
    day_length = CONFIG["DAY_LENGTH_S"] if day_length is None else day_length
    total_days = max(day_count(graph, day_length), days or 0)
    shape = (graph.node_count, graph.node_count)
    if not len(graph):
        return [sparse.csr_matrix(shape, dtype=np.float64) for _ in range(total_days)]

    first = np.floor(graph.start_time / day_length).astype(np.int64)
    last = np.floor(graph.end_time / day_length).astype(np.int64)
    spans = last - first + 1
    flow_index = np.repeat(np.arange(len(graph)), spans)
    offsets = np.arange(len(flow_index)) - np.repeat(np.cumsum(spans) - spans, spans)
    day = first[flow_index] + offsets
    src, dst = graph.src[flow_index], graph.dst[flow_index]

    tensor = []
    order = np.argsort(day, kind="stable")
    bounds = np.searchsorted(day[order], np.arange(total_days + 1))
    for t in range(total_days):
        sel = order[bounds[t] : bounds[t + 1]]
        counts = sparse.coo_matrix((np.ones(len(sel)), (src[sel], dst[sel])), shape=shape).tocsr()
        counts.sum_duplicates()
        tensor.append(counts)
    return tensor
