#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Stochastic Kronecker graphs: initiator matrices, their Kronecker powers and the fast
edge-by-edge sampler (k categorical choices over the initiator per edge).
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from . import CONFIG, NetflowSynthError, logger
from .flowgraph import StaticGraph


class FitError(NetflowSynthError):
    pass


class InfeasibleSpecError(NetflowSynthError):
    pass


class KronSizeError(NetflowSynthError):
    pass


@dataclass(frozen=True, eq=False)
class InitiatorMatrix:
    """
    N1 x N1 edge-probability initiator with fit metadata.

    node_positions[u] is the Kronecker position, which KronFit has placed reference node u at;
    it makes sampled graphs node-aligned with the reference.
    """

    matrix: np.ndarray
    log_likelihood: float = 0.0
    bic: Optional[float] = None
    seed: Optional[int] = None
    node_positions: Optional[Tuple[int, ...]] = None
    trace: Tuple[float, ...] = ()

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise FitError(f"Initiator should be a square matrix, got shape {matrix.shape}")
        if matrix.shape[0] < 2:
            raise FitError(f"Initiator side should be >= 2, got {matrix.shape[0]}")
        if not np.all((matrix >= 0) & (matrix <= 1)):
            raise FitError(f"Initiator entries should lie in [0, 1]:\n{matrix}")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        if self.node_positions is not None:
            object.__setattr__(self, "node_positions", tuple(int(p) for p in self.node_positions))
        object.__setattr__(self, "trace", tuple(float(v) for v in self.trace))

    @property
    def n1(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {
            "n1": self.n1,
            "matrix": self.matrix.tolist(),
            "log_likelihood": float(self.log_likelihood),
            "bic": None if self.bic is None else float(self.bic),
            "seed": self.seed,
            "node_positions": None if self.node_positions is None else list(self.node_positions),
        }

    @classmethod
    def from_dict(cls, data):
        matrix = np.array(data["matrix"], dtype=np.float64).reshape(data["n1"], data["n1"])
        return cls(
            matrix=matrix,
            log_likelihood=data["log_likelihood"],
            bic=data.get("bic"),
            seed=data.get("seed"),
            node_positions=data.get("node_positions"),
        )


def kron_power_for(node_count, n1):
    """
    Smallest k >= 1 with n1 ** k >= node_count.
    """
    k = 1
    while n1**k < node_count:
        k += 1
    return k


@dataclass(frozen=True)
class KronSampleSpec:
    target_nodes: int
    target_edges: int
    k: int
    seed: Optional[int] = None
    node_positions: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.target_nodes < 1:
            raise InfeasibleSpecError(f"target_nodes should be positive, got {self.target_nodes}")
        if self.k < 1:
            raise InfeasibleSpecError(f"Kronecker power should be >= 1, got {self.k}")
        if not 0 <= self.target_edges <= self.target_nodes**2:
            raise InfeasibleSpecError(
                f"Can not place {self.target_edges} distinct edges on {self.target_nodes} nodes "
                f"(at most {self.target_nodes ** 2})"
            )
        if self.node_positions is not None and len(self.node_positions) != self.target_nodes:
            raise InfeasibleSpecError(
                f"node_positions has {len(self.node_positions)} entries for {self.target_nodes} nodes"
            )

    @classmethod
    def for_initiator(cls, initiator, target_nodes, target_edges, seed=None, aligned=True):
        """
        Picks k for <target_nodes>; reuses the fitted node placement when it matches the target.
        """
        positions = initiator.node_positions if aligned else None
        if positions is not None and len(positions) != target_nodes:
            logger.info("Target N=%d differs from fitted N=%d; sampling unaligned", target_nodes, len(positions))
            positions = None
        k = kron_power_for(target_nodes, initiator.n1)
        if positions is not None:
            k = max(k, kron_power_for(max(positions) + 1, initiator.n1))
        return cls(target_nodes, target_edges, k, seed, positions)


class SampleStats(NamedTuple):
    draws: int
    collisions: int
    out_of_range: int

    @property
    def collision_rate(self):
        return self.collisions / self.draws if self.draws else 0.0


def kron_power(initiator, k):
    """
    Dense A^{(x)k}; entry (i, j) is the product over levels of A at base-n1 digits of i and j.
    Meant for small instances only.
    """
    matrix = initiator.matrix if isinstance(initiator, InitiatorMatrix) else np.asarray(initiator, float)
    if k < 1:
        raise ValueError(f"Kronecker power should be >= 1, got {k}")
    side = matrix.shape[0] ** k
    if side > CONFIG["KRON_POWER_MAX_SIDE"]:
        raise KronSizeError(
            f"{matrix.shape[0]}^{k} = {side} exceeds KRON_POWER_MAX_SIDE ({CONFIG['KRON_POWER_MAX_SIDE']})"
        )
    result = matrix
    for _ in range(k - 1):
        result = np.kron(result, matrix)
    return result


def _normalized_cells(initiator):
    total = initiator.matrix.sum()
    if total <= 0:
        raise FitError("Initiator has no positive entries; can not normalize it")
    return initiator.matrix.ravel() / total


def draw_positions(initiator, k, count, rng):
    """
    <count> raw draws of Kronecker cells: per level, one categorical choice over the normalized
    initiator; level t contributes its digit with place value n1 ** t, t = 0..k-1.

    :return: (rows, cols) of shape (count,)
    """
    n1 = initiator.n1
    cells = rng.choice(n1 * n1, size=(count, k), p=_normalized_cells(initiator))
    place = n1 ** np.arange(k, dtype=np.int64)
    return (cells // n1) @ place, (cells % n1) @ place


def sample_edges(initiator, spec):
    """
    Draws until spec.target_edges distinct (src, dst) pairs are collected. Duplicate draws and
    positions without a node (index >= N, or unplaced when aligned) are redrawn.

    :return: (edges array (E, 2) in draw order, SampleStats)
    """
    n1, side = initiator.n1, initiator.n1**spec.k
    if side < spec.target_nodes:
        raise InfeasibleSpecError(f"{n1}^{spec.k} = {side} positions can not address {spec.target_nodes} nodes")
    _normalized_cells(initiator)
    node_of = np.full(side, -1, dtype=np.int64)
    if spec.node_positions is not None:
        node_of[np.asarray(spec.node_positions, dtype=np.int64)] = np.arange(spec.target_nodes)
    else:
        node_of[: spec.target_nodes] = np.arange(spec.target_nodes)

    rng = np.random.default_rng(spec.seed)
    target = spec.target_edges
    max_draws = max(CONFIG["KRON_MAX_DRAWS_FACTOR"] * target, 1_000_000)
    seen, edges = set(), []
    draws = collisions = out_of_range = 0
    while len(edges) < target:
        batch = max(64, 2 * (target - len(edges)))
        rows, cols = draw_positions(initiator, spec.k, batch, rng)
        for u, v in zip(node_of[rows].tolist(), node_of[cols].tolist()):
            if u < 0 or v < 0:
                out_of_range += 1
                continue
            draws += 1
            key = u * spec.target_nodes + v
            if key in seen:
                collisions += 1
                continue
            seen.add(key)
            edges.append((u, v))
            if len(edges) == target:
                break
        if draws + out_of_range > max_draws:
            raise InfeasibleSpecError(
                f"Only {len(edges)} of {target} distinct edges after {draws + out_of_range} draws; "
                "initiator support is too small for the requested edge count"
            )
    stats = SampleStats(draws, collisions, out_of_range)
    return np.array(edges, dtype=np.int64).reshape(-1, 2), stats


def sample_graph(initiator, spec):
    """
    Fast Kronecker sampling of a static simple graph with exactly spec.target_edges edges.
    """
    edges, stats = sample_edges(initiator, spec)
    logger.debug(
        "Kronecker sample: E=%d, %d draws, collision rate %.4f, %d out-of-range positions",
        len(edges),
        stats.draws,
        stats.collision_rate,
        stats.out_of_range,
    )
    if stats.collision_rate > CONFIG["KRON_COLLISION_WARN_RATE"]:
        logger.warning(
            "%d of %d Kronecker draws were duplicates (E=%d is dense for this initiator)",
            stats.collisions,
            stats.draws,
            len(edges),
        )
    return StaticGraph(spec.target_nodes, edges, directed=True)
