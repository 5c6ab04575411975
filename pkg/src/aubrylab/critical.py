"""Critical value alpha(c) through the Maupertuis (free-time) reformulation.

At level ``k`` a lattice edge costs ``sqrt(2k) * ell_f(e) - c . dx_e``,
where ``ell_f`` is the edge's conformal length. ``alpha(c)`` is the least
``k`` for which no cycle has negative total cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .action import optimal_speed
from .errors import DomainError, LoopStructureError
from .torus import (
    CohomologyClass,
    ConformalMetric,
    DiscreteLoop,
    VelocityStencil,
    as_class,
    homology_class,
)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ActionGraph:
    """All stencil moves from every grid node, with their geometric data.

    Edge ``node * len(stencil) + s`` leaves ``node`` along ``stencil.offsets[s]``.
    """

    metric: ConformalMetric
    stencil: VelocityStencil
    c: CohomologyClass
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    offset: np.ndarray = field(repr=False)
    dx: np.ndarray = field(repr=False)
    dx2: np.ndarray = field(repr=False)
    log_factor: np.ndarray = field(repr=False)
    finsler_length: np.ndarray = field(repr=False)
    form: np.ndarray = field(repr=False)
    rest: np.ndarray = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)

    @property
    def grid(self):
        return self.metric.grid

    @property
    def num_nodes(self) -> int:
        return self.metric.grid.num_nodes

    @property
    def num_edges(self) -> int:
        return self.src.shape[0]

    def default_eps_cycle(self) -> float:
        return 1e-12 * self.num_edges

    def edge_id(self, node: int, offset) -> int:
        return int(node) * len(self.stencil) + self.stencil.index(offset)

    def edges_of_loop(self, loop: DiscreteLoop) -> np.ndarray:
        if loop.grid != self.grid:
            raise LoopStructureError("loop lives on a different grid")
        return np.array(
            [self.edge_id(self.grid.node_id(i, j), d) for (i, j), d in zip(loop.nodes, loop.displacements)],
            dtype=np.int64,
        )

    def loop_of_edges(self, edges, timestep=None) -> DiscreteLoop:
        edges = np.asarray(edges, dtype=np.int64)
        nodes = tuple(self.grid.node_ij(v) for v in self.src[edges])
        disps = tuple((int(a), int(b)) for a, b in self.offset[edges])
        return DiscreteLoop(self.grid, nodes, disps, self.grid.spacing if timestep is None else timestep)


def build_action_graph(metric: ConformalMetric, stencil: VelocityStencil | int, c) -> ActionGraph:
    if not isinstance(stencil, VelocityStencil):
        stencil = VelocityStencil(stencil)
    c = as_class(c)
    grid = metric.grid
    n = grid.n
    offsets = stencil.as_array()
    s = len(offsets)
    nodes = np.arange(grid.num_nodes, dtype=np.int64)
    i, j = np.divmod(nodes, n)
    src = np.repeat(nodes, s)
    a = np.tile(offsets[:, 0], grid.num_nodes)
    b = np.tile(offsets[:, 1], grid.num_nodes)
    dst = ((np.repeat(i, s) + a) % n) * n + (np.repeat(j, s) + b) % n
    delta = grid.spacing
    dx = np.stack([a * delta, b * delta], axis=1)
    dx2 = (a * a + b * b) * (delta * delta)
    f_flat = metric.f.ravel()
    fbar = 0.5 * (f_flat[src] + f_flat[dst])
    length = np.sqrt(dx2)
    finsler = np.exp(0.5 * fbar) * length
    form = c.c1 * dx[:, 0] + c.c2 * dx[:, 1]
    rest = (a == 0) & (b == 0)
    indptr = np.arange(0, grid.num_nodes * s + 1, s, dtype=np.int64)
    order = np.arange(grid.num_nodes * s, dtype=np.int64)
    return ActionGraph(
        metric, stencil, c,
        _frozen(src), _frozen(dst), _frozen(np.stack([a, b], axis=1)), _frozen(dx), _frozen(dx2),
        _frozen(fbar), _frozen(finsler), _frozen(form), _frozen(rest), _frozen(indptr), _frozen(order),
    )


def finsler_weights(graph: ActionGraph, k: float) -> np.ndarray:
    if not k >= 0:
        raise DomainError(f"energy level must be >= 0, got {k}")
    return math.sqrt(2.0 * k) * graph.finsler_length - graph.form


@dataclass(frozen=True)
class NegativeCycle:
    found: bool
    edges: np.ndarray | None = None
    cost: float | None = None
    witness: DiscreteLoop | None = None

    def __bool__(self):
        return self.found


def detect_negative_cycle(graph, weights, eps_cycle=None, active=None, method="bellman-ford"):
    """Search ``weights`` on ``graph`` for a cycle of negative total cost.

    Returns ``(found, edges, potentials)``. With the Bellman-Ford route a
    negative answer certifies that no simple cycle of m edges costs less
    than ``-m * eps_cycle / num_edges`` (so none below ``-eps_cycle``);
    potentials are the virtual-source distances.
    """
    if eps_cycle is None:
        eps_cycle = graph.default_eps_cycle()
    tau = eps_cycle / graph.num_edges
    if active is None:
        active = np.ones(graph.num_edges, dtype=np.bool_)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if method == "bellman-ford":
        found, edges, dist = _kernels.negative_cycle(
            graph.num_nodes, graph.indptr, graph.order, graph.src, graph.dst, weights, active, tau
        )
        return bool(found), (edges if found else None), dist
    if method == "howard":
        alive = _alive_nodes(graph, active)
        if not alive.any():
            return False, None, None
        ones = np.ones(graph.num_edges)
        eta, policy, _ = _kernels.howard_min_ratio(
            graph.num_nodes, graph.indptr, graph.order, graph.src, graph.dst,
            weights, ones, active, alive, 1e-14, 100000,
        )
        start = int(np.argmin(np.where(alive, eta, np.inf)))
        if eta[start] < -tau:
            return True, _kernels.policy_cycle(policy, graph.dst, start), None
        return False, None, None
    raise ValueError(f"unknown method {method!r}")


def _alive_nodes(graph, active):
    """Nodes that still lie on some cycle once inactive edges are dropped."""
    alive = np.zeros(graph.num_nodes, dtype=bool)
    alive[graph.src[active]] = True
    while True:
        usable = active & alive[graph.src] & alive[graph.dst]
        has_out = np.zeros(graph.num_nodes, dtype=bool)
        has_out[graph.src[usable]] = True
        if np.array_equal(has_out, alive):
            return alive
        alive = has_out


def has_negative_cycle(graph: ActionGraph, k: float, eps_cycle=None, method="bellman-ford") -> NegativeCycle:
    w = finsler_weights(graph, k)
    found, edges, _ = detect_negative_cycle(graph, w, eps_cycle, method=method)
    if not found:
        return NegativeCycle(False)
    return NegativeCycle(True, edges, math.fsum(w[edges]), graph.loop_of_edges(edges))


@dataclass(frozen=True)
class CriticalValueResult:
    alpha: float
    bracket: tuple[float, float]
    witness_cycle: DiscreteLoop | None
    iterations: int
    witness_edges: np.ndarray | None = None
    eps_cycle: float = 0.0


def critical_value(graph: ActionGraph, tolerance: float = 1e-9, eps_cycle=None,
                   max_iter: int = 60, method="bellman-ford") -> CriticalValueResult:
    """Bisect on the level ``k`` for the onset of negative cycles.

    The returned ``alpha`` is the upper bracket end, which is certified
    free of cycles cheaper than ``-eps_cycle``.
    """
    if not tolerance > 0:
        raise DomainError("tolerance must be positive")
    if eps_cycle is None:
        eps_cycle = graph.default_eps_cycle()
    if graph.c.is_trivial:
        return CriticalValueResult(0.0, (0.0, 0.0), None, 0, None, eps_cycle)

    lo_hit = has_negative_cycle(graph, 0.0, eps_cycle, method)
    if not lo_hit:
        # only possible when c pairs to zero with every stencil cycle
        return CriticalValueResult(0.0, (0.0, 0.0), None, 0, None, eps_cycle)
    lo, witness = 0.0, lo_hit
    hi = 1.0
    while True:
        hit = has_negative_cycle(graph, hi, eps_cycle, method)
        if not hit:
            break
        lo, witness = hi, hit
        hi *= 2.0
    iterations = 0
    while hi - lo > tolerance and iterations < max_iter:
        iterations += 1
        mid = 0.5 * (lo + hi)
        hit = has_negative_cycle(graph, mid, eps_cycle, method)
        if hit:
            lo, witness = mid, hit
        else:
            hi = mid
    return CriticalValueResult(hi, (lo, hi), witness.witness, iterations, witness.edges, eps_cycle)


def loop_period_one_action(graph: ActionGraph, loop: DiscreteLoop) -> float:
    """Action of ``loop`` run at constant speed with period one."""
    edges = graph.edges_of_loop(loop)
    lengths = np.sqrt(graph.dx2[edges])
    total_length = math.fsum(lengths)
    return 0.5 * total_length * math.fsum(np.exp(graph.log_factor[edges]) * lengths)


def alpha_lower_bound_from_loop(graph: ActionGraph, loop: DiscreteLoop) -> float:
    """Lower bound on alpha from running one loop at its best speed."""
    z1, z2 = homology_class(loop)
    b = graph.c.c1 * z1 + graph.c.c2 * z2
    if b <= 0:
        return 0.0
    a = loop_period_one_action(graph, loop)
    return optimal_speed(a, b).lower_bound
