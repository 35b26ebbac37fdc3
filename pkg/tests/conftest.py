import numpy as np
import pandas as pd
import pytest

from netflow_synth import CONFIG
from netflow_synth.flowgraph import DynamicMultigraph
from netflow_synth.kronecker import InitiatorMatrix, KronSampleSpec, sample_graph

DAY = CONFIG["DAY_LENGTH_S"]
PLANTED = [[0.9, 0.6], [0.6, 0.2]]


def flows_on(structure, flow_count, seed, labels=("443/tcp", "53/udp")):
    """
    Flows spread over the edges of <structure>: start times uniform over 3 days, durations from a
    two-component mixture, labels 80/20.
    """
    rng = np.random.default_rng(seed)
    picked = structure.edges[rng.integers(0, structure.edge_count, size=flow_count)]
    long_lived = rng.random(flow_count) < 0.3
    duration = np.where(long_lived, rng.normal(600.0, 30.0, flow_count), rng.normal(5.0, 1.0, flow_count))
    return DynamicMultigraph(
        node_count=structure.node_count,
        src=picked[:, 0],
        dst=picked[:, 1],
        start_time=rng.uniform(0, 3 * DAY, flow_count),
        duration=np.abs(duration),
        port_protocol=(rng.random(flow_count) < 0.2).astype(np.int64),
        vocabulary=labels[:2],
    )


def write_ip_csv(graph, path, epoch=1_700_000_000.0):
    """
    Writes <graph> in the raw input dialect: ip strings, absolute start/end, separate port and protocol.
    """
    labels = graph.labels()
    pd.DataFrame(
        {
            "src": [f"10.0.{n // 256}.{n % 256}" for n in graph.src],
            "dst": [f"10.0.{n // 256}.{n % 256}" for n in graph.dst],
            "start": graph.start_time + epoch,
            "end": graph.end_time + epoch,
            "port": [label.split("/")[0] for label in labels],
            "protocol": [label.split("/")[1] for label in labels],
        }
    ).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def planted():
    return InitiatorMatrix(np.array(PLANTED))


@pytest.fixture
def planted_graph(planted):
    return sample_graph(planted, KronSampleSpec(target_nodes=32, target_edges=120, k=5, seed=7))


@pytest.fixture
def reference(planted_graph):
    return flows_on(planted_graph, 400, seed=11)


@pytest.fixture
def reference_csv(reference, tmp_path):
    return write_ip_csv(reference, tmp_path / "reference.csv")


@pytest.fixture
def restore_config():
    saved = dict(CONFIG)
    yield CONFIG
    CONFIG.clear()
    CONFIG.update(saved)
