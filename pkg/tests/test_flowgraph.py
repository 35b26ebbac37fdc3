import logging

import numpy as np
import pandas as pd
import pytest

from netflow_synth import DataError
from netflow_synth.flowgraph import (
    DynamicMultigraph,
    NetflowRecord,
    SchemaError,
    StaticGraph,
    daily_tensor,
    day_count,
    export_graph,
    flow_counts,
    ingest_csv,
    read_dataset,
    read_edge_list,
    to_static,
    write_csv,
    write_edge_list,
)

DAY = 86400.0


def write_rows(path, rows, columns=("src", "dst", "start", "end", "port", "protocol")):
    pd.DataFrame(rows, columns=list(columns)).to_csv(path, index=False)
    return str(path)


def graph_of(records, node_count):
    return DynamicMultigraph.from_records([NetflowRecord(*r) for r in records], node_count)


class TestIngest:
    def test_counts_nodes_and_flows(self, tmp_path):
        path = write_rows(
            tmp_path / "flows.csv",
            [
                ("10.0.0.1", "10.0.0.2", 100, 105, 443, "tcp"),
                ("10.0.0.2", "10.0.0.1", 101, 102, 53, "udp"),
                ("10.0.0.1", "10.0.0.2", 103, 110, 443, "tcp"),
            ],
        )
        g = ingest_csv(path)
        assert (g.node_count, len(g)) == (2, 3)
        assert g.ip_map == ("10.0.0.1", "10.0.0.2")
        assert g.src.tolist() == [0, 1, 0]
        assert g.vocabulary == ("443/tcp", "53/udp")
        assert list(g.labels()) == ["443/tcp", "53/udp", "443/tcp"]
        assert g.duration.tolist() == [5.0, 1.0, 7.0]

    def test_ids_follow_first_appearance(self, tmp_path):
        path = write_rows(
            tmp_path / "flows.csv",
            [("b", "a", 0, 1, 80, "tcp"), ("c", "b", 0, 1, 80, "tcp"), ("a", "c", 0, 1, 80, "tcp")],
        )
        g = ingest_csv(path)
        assert g.ip_map == ("b", "a", "c")
        assert g.src.tolist() == [0, 2, 1]
        assert g.dst.tolist() == [1, 0, 2]

    def test_rebases_start_times(self, tmp_path):
        path = write_rows(
            tmp_path / "flows.csv",
            [("a", "b", 1_700_000_000, 1_700_000_010, 80, "tcp"), ("b", "a", 1_700_000_050, 1_700_000_060, 80, "tcp")],
        )
        g = ingest_csv(path)
        assert g.start_time.min() == 0.0
        assert g.epoch == 1_700_000_000.0
        assert g.start_time.tolist() == [0.0, 50.0]

    def test_rejects_negative_durations(self, tmp_path, caplog):
        path = write_rows(
            tmp_path / "flows.csv",
            [("a", "b", 10, 20, 80, "tcp"), ("a", "b", 30, 25, 80, "tcp"), ("b", "a", 40, 41, 80, "tcp")],
        )
        with caplog.at_level(logging.WARNING, logger="netflow_synth"):
            g = ingest_csv(path)
        assert len(g) == 2
        assert "Rejected 1 rows" in caplog.text

    def test_missing_column_is_named(self, tmp_path):
        path = write_rows(tmp_path / "flows.csv", [("a", "b", 0, 1, 80)], columns=("src", "dst", "start", "end", "port"))
        with pytest.raises(SchemaError, match="protocol"):
            ingest_csv(path)

    def test_custom_schema_with_duration(self, tmp_path):
        path = write_rows(
            tmp_path / "flows.csv",
            [("a", "b", 0, 3.5, "443/tcp")],
            columns=("source", "target", "ts", "dur", "service"),
        )
        schema = {"src": "source", "dst": "target", "start": "ts", "duration": "dur", "port_protocol": "service"}
        g = ingest_csv(path, schema)
        assert g.duration.tolist() == [3.5]
        assert g.vocabulary == ("443/tcp",)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(str(tmp_path / "nope.csv"))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("src,dst,start,end,port,protocol\n", encoding="utf-8")
        with pytest.raises(DataError):
            ingest_csv(str(path))


class TestSerialization:
    def test_round_trip(self, reference, tmp_path):
        path = tmp_path / "member.csv"
        write_csv(reference, path)
        again = read_dataset(str(path), node_count=reference.node_count)
        assert again == reference
        write_csv(again, tmp_path / "again.csv")
        assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()

    def test_column_order(self, reference, tmp_path):
        path = tmp_path / "member.csv"
        write_csv(reference, path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "src,dst,start_time,duration,port_protocol"

    def test_node_count_is_checked(self, tmp_path):
        path = tmp_path / "member.csv"
        write_csv(graph_of([(0, 4, 0.0, 1.0, "80/tcp")], 5), path)
        with pytest.raises(DataError):
            read_dataset(str(path), node_count=3)

    def test_export(self, tmp_path):
        g = graph_of([(0, 1, 0.0, 1.0, "80/tcp"), (0, 1, 5.0, 1.0, "80/tcp"), (1, 2, 0.0, 1.0, "53/udp")], 3)
        export_graph(g, tmp_path / "out")
        edges = pd.read_csv(tmp_path / "out" / "edges.csv")
        assert edges.values.tolist() == [[0, 1, 2], [1, 2, 1]]
        assert len(pd.read_csv(tmp_path / "out" / "nodes.csv")) == 3

    def test_edge_list_keeps_flowless_edges(self, tmp_path):
        structure = StaticGraph(3, [(0, 1), (1, 2), (2, 0)])
        g = graph_of([(1, 2, 0.0, 1.0, "80/tcp"), (1, 2, 3.0, 1.0, "80/tcp"), (0, 2, 0.0, 1.0, "80/tcp")], 3)
        assert flow_counts(structure, g).tolist() == [0, 2, 0]
        path = str(tmp_path / "edges.csv")
        write_edge_list(structure, path, g)
        assert pd.read_csv(path).values.tolist() == [[0, 1, 0], [1, 2, 2], [2, 0, 0]]
        assert read_edge_list(path, 3) == structure

    def test_edge_list_without_flows(self, tmp_path):
        path = str(tmp_path / "edges.csv")
        write_edge_list(StaticGraph(4, [(3, 0)]), path)
        assert read_edge_list(path, 4).edge_list() == [(3, 0)]
        with pytest.raises(DataError):
            read_edge_list(path, 3)
        with pytest.raises(DataError):
            read_edge_list(str(tmp_path / "nope.csv"), 4)


class TestStatic:
    def test_dedup(self):
        g = graph_of([(0, 1, float(t), 1.0, "80/tcp") for t in range(5)], 2)
        assert to_static(g).edge_count == 1

    def test_directedness(self):
        g = graph_of([(0, 1, 0.0, 1.0, "80/tcp"), (1, 0, 0.0, 1.0, "80/tcp")], 2)
        assert to_static(g, directed=True).edge_count == 2
        assert to_static(g, directed=False).edge_count == 1

    def test_empty(self):
        g = DynamicMultigraph(3, [], [], [], [], [], ())
        assert to_static(g).edge_count == 0

    def test_duplicated_flows_keep_structure(self, reference):
        doubled = DynamicMultigraph.from_records(list(reference.records()) * 2, reference.node_count)
        assert to_static(doubled) == to_static(reference)

    def test_rejects_out_of_range_nodes(self):
        with pytest.raises(DataError):
            StaticGraph(2, [(0, 2)])

    def test_degrees_count_in_and_out(self):
        assert StaticGraph(3, [(0, 1), (0, 2), (2, 0)]).degrees().tolist() == [3, 1, 2]


class TestDailyTensor:
    def test_point_interval(self):
        tensor = daily_tensor(graph_of([(0, 1, 0.0, 0.0, "80/tcp")], 2), DAY)
        assert len(tensor) == 1
        assert tensor[0][0, 1] == 1

    def test_spanning_flow(self):
        tensor = daily_tensor(graph_of([(0, 1, 0.0, 1.5 * DAY, "80/tcp")], 2), DAY)
        assert len(tensor) == 2
        assert [m[0, 1] for m in tensor] == [1, 1]

    def test_counts_parallel_flows(self):
        flows = [(2, 5, 3 * DAY + 10, 5.0, "80/tcp"), (2, 5, 3 * DAY + 20, 5.0, "80/tcp")]
        tensor = daily_tensor(graph_of(flows, 6), DAY)
        assert len(tensor) == 4
        assert tensor[3][2, 5] == 2
        assert sum(m.sum() for m in tensor[:3]) == 0

    def test_padding(self):
        tensor = daily_tensor(graph_of([(0, 1, 0.0, 1.0, "80/tcp")], 2), DAY, days=5)
        assert len(tensor) == 5

    def test_total_at_least_flow_count(self, reference):
        tensor = daily_tensor(reference, DAY)
        assert len(tensor) == day_count(reference, DAY)
        assert sum(m.sum() for m in tensor) >= len(reference)
        inside = np.floor(reference.start_time / DAY) == np.floor(reference.end_time / DAY)
        assert sum(m.sum() for m in tensor) == len(reference) + int((~inside).sum())
