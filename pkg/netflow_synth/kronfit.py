#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
KronFit: maximum likelihood initiator estimation with sampled node placements.

The graph is padded with isolated nodes up to n1**k positions. Per iteration the node
placement is advanced by Metropolis swaps, then l(A) and its gradient are estimated with
the sparse approximation

    l(A) ~ sum_edges [log p_uv - log(1 - p_uv)] - (sum A)^k - 0.5 * (sum A^2)^k
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from . import CONFIG, logger
from .kronecker import FitError, InitiatorMatrix, kron_power_for


def bic(log_likelihood, n1, node_count):
    """
    BIC(n1) = -l(A) + 0.5 * n1^2 * log(N^2)
    """
    return -log_likelihood + 0.5 * n1 * n1 * math.log(node_count * node_count)


class _NodePlacement:
    """
    Node -> Kronecker position map, advanced by Metropolis swaps.
    """

    def __init__(self, graph, n1, k, rng):  # pylint: disable=too-many-arguments
        self.n1, self.k = n1, k
        self.node_count = graph.node_count
        self.side = n1**k
        self.rng = rng
        self.src = graph.edges[:, 0].copy()
        self.dst = graph.edges[:, 1].copy()
        place = n1 ** np.arange(k, dtype=np.int64)
        self.digits = (np.arange(self.side, dtype=np.int64)[:, None] // place) % n1
        edge_ids = np.arange(len(self.src))
        endpoints = np.concatenate([self.src, self.dst])
        owners = np.concatenate([edge_ids, edge_ids])
        order = np.argsort(endpoints, kind="stable")
        bounds = np.searchsorted(endpoints[order], np.arange(self.node_count + 1))
        self.incident = [np.unique(owners[order[bounds[u] : bounds[u + 1]]]) for u in range(self.node_count)]
        self.degrees = np.array([len(ids) for ids in self.incident])
        self.position = np.arange(self.side, dtype=np.int64)

    def place_by_degree(self, theta):
        """
        Highest-degree nodes go to the positions with the highest expected degree under theta.
        """
        log_rows, log_cols = np.log(theta.sum(axis=1)), np.log(theta.sum(axis=0))
        expected = np.exp(log_rows[self.digits].sum(axis=1)) + np.exp(log_cols[self.digits].sum(axis=1))
        positions = np.argsort(-expected, kind="stable")
        nodes = np.concatenate(
            [np.argsort(-self.degrees, kind="stable"), np.arange(self.node_count, self.side, dtype=np.int64)]
        )
        self.position[nodes] = positions

    def edge_log_odds(self, log_theta, edge_ids=None):
        src, dst = (self.src, self.dst) if edge_ids is None else (self.src[edge_ids], self.dst[edge_ids])
        log_p = log_theta[self.digits[self.position[src]], self.digits[self.position[dst]]].sum(axis=1)
        return log_p, log_p - np.log1p(-np.exp(log_p))

    def sweep(self, log_theta, proposals):
        """
        Metropolis swaps; the no-edge term is placement-invariant, so only incident edges matter.

        :return: accepted swaps count
        """
        if self.node_count < 2 and self.side < 2:
            return 0
        first = self.rng.integers(0, self.node_count, size=proposals)
        second = self.rng.integers(0, self.side - 1, size=proposals)
        second[second >= first] += 1
        log_u = np.log(self.rng.random(proposals))
        accepted = 0
        for u, v, threshold in zip(first.tolist(), second.tolist(), log_u.tolist()):
            if v < self.node_count:
                affected = np.union1d(self.incident[u], self.incident[v])
            else:
                affected = self.incident[u]
            if not len(affected):
                continue
            _, before = self.edge_log_odds(log_theta, affected)
            self.position[u], self.position[v] = self.position[v], self.position[u]
            _, after = self.edge_log_odds(log_theta, affected)
            if threshold < after.sum() - before.sum():
                accepted += 1
            else:
                self.position[u], self.position[v] = self.position[v], self.position[u]
        return accepted

    def estimate(self, theta):
        """
        :return: (log-likelihood estimate, gradient) at the current placement
        """
        k = self.k
        log_theta = np.log(theta)
        log_p, log_odds = self.edge_log_odds(log_theta)
        weights = 1.0 / -np.expm1(log_p)
        digits_src = self.digits[self.position[self.src]]
        digits_dst = self.digits[self.position[self.dst]]
        counts = np.zeros_like(theta)
        np.add.at(counts, (digits_src.ravel(), digits_dst.ravel()), np.repeat(weights, k))
        s1, s2 = theta.sum(), (theta * theta).sum()
        gradient = counts / theta - k * s1 ** (k - 1) - k * theta * s2 ** (k - 1)
        log_likelihood = log_odds.sum() - s1**k - 0.5 * s2**k
        return float(log_likelihood), gradient


def _initial_theta(graph, n1, k, rng):
    """
    Uniform initiator, whose expected edge count matches E, with seeded jitter.
    """
    level = graph.edge_count ** (1.0 / k) / (n1 * n1)
    theta = level * (1.0 + rng.uniform(-0.1, 0.1, size=(n1, n1)))
    eps = CONFIG["KRONFIT_CLAMP_EPS"]
    return np.clip(theta, eps, 1 - eps)


def kronfit(graph, n1, iters=None, lr=None, seed=None, swaps_per_node=None):  # pylint: disable=too-many-arguments
    """
    Stochastic gradient ascent on the estimated log-likelihood of <graph> under an n1 x n1 initiator.
    The step is the gradient, scaled down to max-abs 1, times <lr>; entries stay in [eps, 1 - eps].

    :return: fitted initiator; log_likelihood is the estimate at the final iterate, trace holds
        per-iteration estimates
    :rtype: InitiatorMatrix
    """
    if n1 < 2:
        raise FitError(f"Initiator side should be >= 2, got {n1}")
    if graph.edge_count == 0:
        raise FitError("Can not fit an initiator to a graph without edges")
    iters = CONFIG["KRONFIT_ITERATIONS"] if iters is None else iters
    lr = CONFIG["KRONFIT_LR"] if lr is None else lr
    swaps_per_node = CONFIG["KRONFIT_SWAPS_PER_NODE"] if swaps_per_node is None else swaps_per_node
    eps = CONFIG["KRONFIT_CLAMP_EPS"]

    rng = np.random.default_rng(seed)
    k = kron_power_for(graph.node_count, n1)
    theta = _initial_theta(graph, n1, k, rng)
    placement = _NodePlacement(graph, n1, k, rng)
    placement.place_by_degree(theta)
    proposals = swaps_per_node * graph.node_count
    logger.debug("KronFit n1=%d: N=%d, E=%d, k=%d, %d iterations", n1, graph.node_count, graph.edge_count, k, iters)

    trace = []
    progress = tqdm(
        range(iters), desc=f"KronFit n1={n1}", ascii=True, dynamic_ncols=True, disable=not CONFIG["PROGRESS_BARS"]
    )
    for iteration in progress:
        placement.sweep(np.log(theta), proposals)
        log_likelihood, gradient = placement.estimate(theta)
        if not np.all(np.isfinite(gradient)):
            raise FitError(
                f"Non-finite gradient at iteration {iteration} (n1={n1}):\n"
                f"theta:\n{theta}\ngradient:\n{gradient}\nlog-likelihood: {log_likelihood}"
            )
        trace.append(log_likelihood)
        step = gradient / max(1.0, np.abs(gradient).max())
        theta = np.clip(theta + lr * step, eps, 1 - eps)

    placement.sweep(np.log(theta), proposals)
    log_likelihood, _ = placement.estimate(theta)
    logger.debug("KronFit n1=%d done: l(A)=%.3f\n%s", n1, log_likelihood, theta)
    return InitiatorMatrix(
        matrix=theta,
        log_likelihood=log_likelihood,
        bic=bic(log_likelihood, n1, graph.node_count),
        seed=seed,
        node_positions=placement.position[: graph.node_count].tolist(),
        trace=trace,
    )


def fit_candidates(graph, candidates, iters=None, lr=None, seed=None, workers=1):  # pylint: disable=too-many-arguments
    """
    Fits every candidate initiator size, up to <workers> at once. Failed candidates are logged and skipped.

    :return: fits in ascending n1 order
    """
    candidates = sorted(set(candidates))
    if not candidates:
        raise FitError("No initiator sizes to choose from")
    bad = [n1 for n1 in candidates if n1 < 2]
    if bad:
        raise FitError(f"Initiator sizes should be >= 2, got {bad}")

    def _fit(n1):
        try:
            return kronfit(graph, n1, iters=iters, lr=lr, seed=seed)
        except FitError as e:
            logger.error("KronFit with n1=%d has failed: %s", n1, e)
            return e

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = list(executor.map(_fit, candidates))

    fits = [fit for fit in results if isinstance(fit, InitiatorMatrix)]
    if not fits:
        raise FitError(f"KronFit has failed for every candidate {candidates}") from results[-1]
    for fit in fits:
        logger.info("n1=%d: l(A)=%.3f, BIC=%.3f", fit.n1, fit.log_likelihood, fit.bic)
    return fits


def pick_by_bic(fits):
    """
    Minimum BIC; ties go to the smaller n1.
    """
    best = min(fits, key=lambda fit: (fit.bic, fit.n1))
    logger.info("Selected n1=%d", best.n1)
    return best


def select_n1(graph, candidates, iters=None, lr=None, seed=None, workers=1):  # pylint: disable=too-many-arguments
    return pick_by_bic(fit_candidates(graph, candidates, iters=iters, lr=lr, seed=seed, workers=workers))
