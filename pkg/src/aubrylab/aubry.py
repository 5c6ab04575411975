"""Critical potentials, Aubry nodes and static classes.

The barrier ``h(x, y)`` is approximated by the free-time potential at the
critical level: the cheapest path cost from ``x`` to ``y`` under the
Finsler weights at ``k = alpha``. Shortest paths run Dijkstra on weights
reduced by a Bellman-Ford potential, so negative edges are allowed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .critical import ActionGraph, detect_negative_cycle, finsler_weights
from .errors import MissingSeedError, NegativeCycleAtCritical


@dataclass(frozen=True)
class PotentialField:
    seeds: np.ndarray
    phi: np.ndarray = field(repr=False)
    alpha: float
    node_potential: np.ndarray = field(repr=False)

    def row(self, x) -> np.ndarray:
        hits = np.flatnonzero(self.seeds == int(x))
        if hits.size == 0:
            raise MissingSeedError(f"node {x} is not a seed of this potential")
        return self.phi[hits[0]]


@dataclass(frozen=True, eq=False)
class _Reduced:
    weights: np.ndarray
    reduced: np.ndarray
    potential: np.ndarray
    matrix: sp.csr_matrix


def _reduce(graph: ActionGraph, alpha: float, eps_cycle=None) -> _Reduced:
    w = finsler_weights(graph, alpha)
    found, edges, dist = detect_negative_cycle(graph, w, eps_cycle)
    if found:
        raise NegativeCycleAtCritical(alpha, float(np.sum(w[edges])))
    reduced = np.maximum(w + dist[graph.src] - dist[graph.dst], 0.0)
    # keep the cheapest of parallel edges; self edges never shorten a path
    keep = graph.src != graph.dst
    src, dst, red = graph.src[keep], graph.dst[keep], reduced[keep]
    order = np.lexsort((red, dst, src))
    src, dst, red = src[order], dst[order], red[order]
    first = np.ones(src.size, dtype=bool)
    first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    n = graph.num_nodes
    matrix = sp.csr_matrix((red[first], (src[first], dst[first])), shape=(n, n))
    return _Reduced(w, reduced, dist, matrix)


def _distances(red: _Reduced, seeds) -> np.ndarray:
    seeds = np.asarray(seeds, dtype=np.int64)
    if seeds.size == 0:
        return np.empty((0, red.matrix.shape[0]))
    return dijkstra(red.matrix, directed=True, indices=seeds)


def mane_potential(graph: ActionGraph, alpha: float, seeds, eps_cycle=None) -> PotentialField:
    """Critical potentials ``phi(s, .)`` from each seed ``s``."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.int64))
    if seeds.size == 0:
        raise ValueError("need at least one seed")
    red = _reduce(graph, alpha, eps_cycle)
    dist = _distances(red, seeds)
    p = red.potential
    phi = dist - p[seeds][:, None] + p[None, :]
    return PotentialField(seeds, phi, float(alpha), p)


def mane_potential_retry(graph: ActionGraph, alpha: float, seeds, bump: float = 1e-9,
                         max_tries: int = 8, eps_cycle=None) -> PotentialField:
    """As :func:`mane_potential`, nudging ``alpha`` up while a negative cycle remains."""
    level = alpha
    for _ in range(max_tries):
        try:
            return mane_potential(graph, level, seeds, eps_cycle)
        except NegativeCycleAtCritical:
            level += bump
            bump *= 2.0
    return mane_potential(graph, level, seeds, eps_cycle)


def peierls_barrier(potential: PotentialField, x, y) -> float:
    return float(potential.row(x)[int(y)])


def default_eps_aubry(graph: ActionGraph, eps_cycle=None) -> float:
    """Numerical floor for calling a cycle cost zero."""
    if eps_cycle is None:
        eps_cycle = graph.default_eps_cycle()
    return max(1e-6, 10.0 * eps_cycle)


@dataclass(frozen=True)
class AubryAnalysis:
    nodes: np.ndarray
    cycle_cost: np.ndarray = field(repr=False)
    potential: PotentialField | None = field(repr=False)
    eps_aubry: float


def _closing_edges(graph: ActionGraph, include_rest: bool):
    usable = np.ones(graph.num_edges, dtype=bool) if include_rest else ~graph.rest
    return np.flatnonzero(usable)


def aubry_analysis(graph: ActionGraph, alpha: float, eps_aubry=None, eps_cycle=None) -> AubryAnalysis:
    n = graph.num_nodes
    if eps_aubry is None:
        eps_aubry = default_eps_aubry(graph, eps_cycle)
    if graph.c.is_trivial:
        # every weight vanishes at level 0: each node is its own zero-cost rest loop
        nodes = np.arange(n)
        phi = np.zeros((n, n))
        return AubryAnalysis(nodes, np.zeros(n), PotentialField(nodes, phi, 0.0, np.zeros(n)), eps_aubry)
    red = _reduce(graph, alpha, eps_cycle)
    # rest loops have zero Finsler length but represent time spent still,
    # which costs alpha > 0 per unit time; they are not Aubry cycles here
    closing = _closing_edges(graph, include_rest=alpha == 0)
    cheap = closing[red.reduced[closing] <= eps_aubry]
    # a cycle costing <= eps uses only edges with reduced cost <= eps
    small = sp.csr_matrix(
        (np.ones(cheap.size), (graph.src[cheap], graph.dst[cheap])), shape=(n, n)
    )
    _, labels = connected_components(small, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=labels.max() + 1)
    candidate = sizes[labels] > 1
    loops = cheap[graph.src[cheap] == graph.dst[cheap]]
    candidate[graph.src[loops]] = True
    cand = np.flatnonzero(candidate)
    dist = _distances(red, cand)
    cycle_cost = np.full(n, np.inf)
    if cand.size:
        # cheapest closed walk through x: path x -> u, then edge u -> x
        into = closing[np.isin(graph.dst[closing], cand)]
        pos = np.searchsorted(cand, graph.dst[into])
        through = dist[pos, graph.src[into]] + red.reduced[into]
        best = np.full(cand.size, np.inf)
        np.minimum.at(best, pos, through)
        cycle_cost[cand] = best
    aubry = np.flatnonzero(cycle_cost <= eps_aubry)
    keep = np.isin(cand, aubry)
    p = red.potential
    phi = dist[keep] - p[aubry][:, None] + p[None, :]
    return AubryAnalysis(aubry, cycle_cost, PotentialField(aubry, phi, float(alpha), p), eps_aubry)


def aubry_set(graph: ActionGraph, alpha: float, eps_aubry=None, eps_cycle=None) -> np.ndarray:
    """Sorted node ids lying on a nontrivial cycle of critical cost ``<= eps_aubry``."""
    return aubry_analysis(graph, alpha, eps_aubry, eps_cycle).nodes


@dataclass(frozen=True)
class AubryReport:
    aubry_nodes: np.ndarray
    classes: list
    representatives: np.ndarray
    delta: np.ndarray
    class_count: int
    eps_aubry: float
    delta_nodes: np.ndarray | None = field(default=None, repr=False)


def static_classes(graph: ActionGraph, alpha: float, aubry_nodes=None, eps_aubry=None,
                   eps_cycle=None, potential: PotentialField | None = None) -> AubryReport:
    """Group Aubry nodes whose symmetrized critical potential vanishes."""
    if eps_aubry is None:
        eps_aubry = default_eps_aubry(graph, eps_cycle)
    if aubry_nodes is None:
        analysis = aubry_analysis(graph, alpha, eps_aubry, eps_cycle)
        aubry_nodes, potential = analysis.nodes, analysis.potential
    aubry_nodes = np.asarray(aubry_nodes, dtype=np.int64)
    if potential is None or not np.array_equal(potential.seeds, aubry_nodes):
        if graph.c.is_trivial:
            potential = PotentialField(aubry_nodes, np.zeros((aubry_nodes.size, graph.num_nodes)), 0.0,
                                       np.zeros(graph.num_nodes))
        else:
            potential = mane_potential(graph, alpha, aubry_nodes, eps_cycle)
    if aubry_nodes.size == 0:
        return AubryReport(aubry_nodes, [], aubry_nodes, np.zeros((0, 0)), 0, eps_aubry)
    block = potential.phi[:, aubry_nodes]
    delta = block + block.T
    linked = sp.csr_matrix(delta <= 2.0 * eps_aubry)
    count, labels = connected_components(linked, directed=False)
    # number classes by their smallest node for a canonical order
    firsts = np.array([aubry_nodes[labels == k].min() for k in range(count)])
    rank = np.argsort(firsts)
    relabel = np.empty(count, dtype=np.int64)
    relabel[rank] = np.arange(count)
    labels = relabel[labels]
    classes = [aubry_nodes[labels == k] for k in range(count)]
    reps_idx = np.array([np.flatnonzero(labels == k)[0] for k in range(count)])
    reps = aubry_nodes[reps_idx]
    return AubryReport(aubry_nodes, classes, reps, delta[np.ix_(reps_idx, reps_idx)], count, eps_aubry, delta)
