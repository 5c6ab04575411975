"""Minimizing measures as minimum cost-to-time ratio cycles.

A discrete holonomic probability is a nonnegative edge-rate vector that is
divergence free and carries unit time-mass. Its extreme points are uniform
measures on simple cycles, so the action minimum over the whole set is the
minimum over cycles of ``sum(cost) / sum(time)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .action import pairing
from .critical import ActionGraph, detect_negative_cycle
from .errors import (
    DegenerateMeasureError,
    DegenerateTimeError,
    LoopStructureError,
    NoSeparationError,
    ValidationError,
)
from .torus import ConformalMetric, DiscreteLoop, homology_class


@dataclass(frozen=True, eq=False)
class TimedActionGraph:
    graph: ActionGraph
    h: np.ndarray = field(repr=False)
    cost: np.ndarray = field(repr=False)
    mode: str
    level: Optional[float] = None
    h_base: float = 0.0

    # the graph arrays are read through the timed graph in most places
    def __getattr__(self, name):
        if name.startswith("__"):
            raise AttributeError(name)
        return getattr(self.graph, name)

    def mean(self, edges) -> float:
        edges = np.asarray(edges, dtype=np.int64)
        return math.fsum(self.cost[edges]) / math.fsum(self.h[edges])


def assign_times(graph: ActionGraph, mode: str = "optimal", alpha: float | None = None,
                 h: float | None = None, h_base: float | None = None) -> TimedActionGraph:
    """Attach traversal times to the edges of ``graph``.

    ``mode="optimal"`` crosses each edge at energy ``alpha``:
    ``h_e = |dx_e| sqrt(e^fbar / (2 alpha))``. ``mode="fixed"`` uses ``h``
    everywhere. Rest edges always take ``h_base`` (default: grid spacing).
    """
    if h_base is None:
        h_base = graph.grid.spacing
    if not h_base > 0:
        raise ValidationError("h_base must be positive")
    moving = ~graph.rest
    if mode == "fixed":
        if h is None or not h > 0:
            raise ValidationError("fixed mode needs a timestep h > 0")
        times = np.full(graph.num_edges, float(h))
        level = None
    elif mode == "optimal":
        if alpha is None or alpha < 0:
            raise ValidationError("optimal mode needs the critical level alpha >= 0")
        if alpha == 0:
            if moving.any():
                raise DegenerateTimeError("zero critical level: moving edges would take infinite time")
        times = np.empty(graph.num_edges)
        with np.errstate(divide="ignore"):
            times[moving] = np.sqrt(graph.dx2[moving]) * np.sqrt(np.exp(graph.log_factor[moving]) / (2.0 * alpha))
        level = float(alpha)
    else:
        raise ValidationError(f"unknown time mode {mode!r}")
    times[graph.rest] = h_base
    kinetic = np.zeros(graph.num_edges)
    kinetic[moving] = 0.5 * np.exp(graph.log_factor[moving]) * graph.dx2[moving] / times[moving]
    cost = kinetic - graph.form
    times.setflags(write=False)
    cost.setflags(write=False)
    return TimedActionGraph(graph, times, cost, mode, level, float(h_base))


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Edge rates ``mu(e)``; ``sum mu(e) h_e`` is the time-mass."""

    graph: TimedActionGraph
    weights: np.ndarray

    def node_masses(self) -> np.ndarray:
        """Time fraction spent leaving each node (projection to the torus)."""
        return np.bincount(self.graph.src, self.weights * self.graph.h, minlength=self.graph.num_nodes)

    def g_masses(self) -> np.ndarray:
        """``int_{p^-1(x)} g(v, v) dmu`` per node, flat background metric."""
        w = self.weights * self.graph.dx2 / self.graph.h
        return np.bincount(self.graph.src, w, minlength=self.graph.num_nodes)

    def divergence(self) -> np.ndarray:
        n = self.graph.num_nodes
        out = np.bincount(self.graph.src, self.weights, minlength=n)
        inn = np.bincount(self.graph.dst, self.weights, minlength=n)
        return inn - out

    def time_mass(self) -> float:
        return math.fsum(self.weights * self.graph.h)

    def check(self, tol: float = 1e-12) -> None:
        if np.any(self.weights < 0):
            raise ValidationError("occupation measure has negative weights")
        div = np.max(np.abs(self.divergence())) if self.weights.size else 0.0
        if div > tol:
            raise ValidationError(f"occupation measure is not divergence free (max {div:.3e})")
        if abs(self.time_mass() - 1.0) > tol:
            raise ValidationError(f"occupation measure has time-mass {self.time_mass()!r}")

    def action(self) -> float:
        """``int (L - omega) dmu``: each traversal of ``e`` costs ``cost_e``."""
        return math.fsum(self.weights * self.graph.cost)

    def charges_rest(self) -> bool:
        return bool(np.any(self.weights[self.graph.rest] > 0))


def cycle_to_measure(tgraph: TimedActionGraph, loop) -> OccupationMeasure:
    """Uniform probability on one period of a cycle of ``tgraph``."""
    if isinstance(loop, DiscreteLoop):
        edges = tgraph.graph.edges_of_loop(loop)
    else:
        edges = np.asarray(loop, dtype=np.int64)
        if edges.size == 0:
            raise LoopStructureError("empty cycle")
        nxt = np.roll(edges, -1)
        if np.any(tgraph.dst[edges] != tgraph.src[nxt]):
            raise LoopStructureError("edge list is not a closed path")
    period = math.fsum(tgraph.h[edges])
    weights = np.zeros(tgraph.num_edges)
    np.add.at(weights, edges, 1.0 / period)
    return OccupationMeasure(tgraph, weights)


# --- min ratio cycles ------------------------------------------------------

def _min_ratio_cycle(tgraph: TimedActionGraph, active=None, eps_cycle=None, method="parametric"):
    """Return ``(value, edges)`` for the least-mean cycle among ``active`` edges."""
    if active is None:
        active = np.ones(tgraph.num_edges, dtype=np.bool_)
    if not active.any():
        return None
    cost, h = tgraph.cost, tgraph.h
    if method == "howard":
        from .critical import _alive_nodes

        alive = _alive_nodes(tgraph.graph, active)
        if not alive.any():
            return None
        g = tgraph.graph
        eta, policy, _ = _kernels.howard_min_ratio(
            g.num_nodes, g.indptr, g.order, g.src, g.dst, cost, h, active, alive, 1e-14, 100000
        )
        start = int(np.argmin(np.where(alive, eta, np.inf)))
        edges = _kernels.policy_cycle(policy, g.dst, start)
        return tgraph.mean(edges), edges
    if method != "parametric":
        raise ValueError(f"unknown method {method!r}")
    # Newton steps on the parametric problem: every cycle found lowers the
    # level to its own mean until no cycle beats it
    lam = float(np.max(cost[active] / h[active])) + 1.0
    best = None
    while True:
        found, edges, _ = detect_negative_cycle(tgraph.graph, cost - lam * h, eps_cycle, active)
        if not found:
            break
        value = tgraph.mean(edges)
        if best is not None and value >= lam:
            break
        lam, best = value, edges
    if best is None:
        return None
    return lam, best


@dataclass(frozen=True)
class MinimizerSet:
    optimal_value: float
    cycles: list
    count_distinct: int
    rotation_vectors: list
    cycle_edges: list = field(repr=False, default_factory=list)
    means: list = field(default_factory=list)
    cluster_tol: float = 0.0
    degenerate: bool = False
    label: str = "observed"


def _summarize(tgraph, value, cycle_edges, cluster_tol=0.0, degenerate=False):
    loops, rotations, means = [], [], []
    for edges in cycle_edges:
        loop = tgraph.graph.loop_of_edges(edges)
        z = homology_class(loop)
        period = math.fsum(tgraph.h[edges])
        loops.append(loop)
        rotations.append((z[0] / period, z[1] / period))
        means.append(tgraph.mean(edges))
    return MinimizerSet(value, loops, len(loops), rotations, list(cycle_edges), means, cluster_tol, degenerate)


def min_mean_cycle(tgraph: TimedActionGraph, eps_cycle=None, method="parametric") -> MinimizerSet:
    """Least time-averaged action over discrete holonomic probabilities."""
    result = _min_ratio_cycle(tgraph, None, eps_cycle, method)
    value, edges = result
    return _summarize(tgraph, value, [edges])


def _offset_footprints(stencil):
    """Lattice points swept by each stencil move (relative to its start)."""
    prints = []
    for a, b in stencil.offsets:
        m = max(abs(a), abs(b))
        pts = {(0, 0)}
        for t in range(1, m + 1):
            xa, xb = a * t / m, b * t / m
            for pa in {math.floor(xa), math.ceil(xa)} if abs(xa - round(xa)) == 0.5 else {round(xa)}:
                for pb in {math.floor(xb), math.ceil(xb)} if abs(xb - round(xb)) == 0.5 else {round(xb)}:
                    pts.add((pa, pb))
        prints.append(sorted(pts))
    return prints


def edge_footprints(graph: ActionGraph):
    """Per edge, the flat node ids its straight segment passes through."""
    n = graph.grid.n
    prints = _offset_footprints(graph.stencil)
    s = len(graph.stencil)
    width = max(len(p) for p in prints)
    table = np.full((graph.num_edges, width), -1, dtype=np.int64)
    i, j = np.divmod(np.arange(graph.num_nodes), n)
    for k, pts in enumerate(prints):
        for col, (pa, pb) in enumerate(pts):
            table[k::s, col] = ((i + pa) % n) * n + (j + pb) % n
    return table


def enumerate_minimizers(tgraph: TimedActionGraph, cluster_tol: float | None = None,
                         max_count: int = 64, eps_cycle=None, method="parametric") -> MinimizerSet:
    """Near-optimal simple cycles, one per grid-resolved ergodic component.

    After each cycle is found, every node its edges sweep across is removed
    and the problem is solved again. Two minimizing cycles whose swept
    nodes meet cannot be told apart at this resolution, so each re-solve
    yields a new component. The count is an observation, not a certificate.
    """
    graph = tgraph.graph
    if graph.c.is_trivial:
        rest = np.flatnonzero(graph.rest)[:max_count]
        return _summarize(tgraph, 0.0, [np.array([e]) for e in rest], cluster_tol or 0.0, degenerate=True)
    first = _min_ratio_cycle(tgraph, None, eps_cycle, method)
    value, edges = first
    if cluster_tol is None:
        cluster_tol = 1e-6 * abs(value) if value != 0 else 1e-12
    if not cluster_tol > 0:
        raise ValidationError("cluster_tol must be positive")
    footprints = edge_footprints(graph)
    excluded = np.zeros(graph.num_nodes + 1, dtype=bool)  # slot -1 pads the footprint table
    found = []
    while True:
        found.append(edges)
        excluded[footprints[edges].ravel()] = True
        excluded[-1] = False
        if len(found) >= max_count:
            break
        active = ~excluded[footprints].any(axis=1)
        nxt = _min_ratio_cycle(tgraph, active, eps_cycle, method)
        if nxt is None or nxt[0] > value + cluster_tol:
            break
        edges = nxt[1]
    return _summarize(tgraph, value, found, cluster_tol)


# --- diagnostics -----------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    max_deviation: float
    per_cycle: list
    energy_tol: float
    flagged: bool


def edge_energy(tgraph: TimedActionGraph) -> np.ndarray:
    return 0.5 * np.exp(tgraph.log_factor) * tgraph.dx2 / (tgraph.h * tgraph.h)


def support_energy_check(metric: ConformalMetric, tgraph: TimedActionGraph, mset: MinimizerSet,
                         alpha: float, energy_tol: float = 1e-9) -> EnergyReport:
    """Largest gap between the energy on minimizing cycles and ``alpha``."""
    if metric.grid != tgraph.grid:
        raise LoopStructureError("metric and graph grids differ")
    energy = edge_energy(tgraph)
    per_cycle = [float(np.max(np.abs(energy[e] - alpha))) for e in mset.cycle_edges]
    worst = max(per_cycle, default=0.0)
    return EnergyReport(worst, per_cycle, energy_tol, worst > energy_tol)


@dataclass(frozen=True)
class SeparationResult:
    u: np.ndarray
    gap: float
    mass_gap: float
    pairing_mu: float
    pairing_nu: float


def separation_test(mu: OccupationMeasure, nu: OccupationMeasure, metric: ConformalMetric | None = None,
                    tol: float = 1e-12) -> SeparationResult:
    """Build ``u >= 0`` whose projected pairing tells ``mu`` from ``nu``.

    ``u`` is the nodal indicator of the set where ``mu`` puts more
    ``g(v, v)``-weighted mass than ``nu``; any smooth bump equal to 1 on
    those nodes and 0 on the others samples to it. On a common energy
    level ``g(v, v) = 2 alpha``, so the gap is ``2 alpha`` times the
    difference of node masses over that set.
    """
    if mu.graph.grid != nu.graph.grid or (metric is not None and metric.grid != mu.graph.grid):
        raise LoopStructureError("measures live on different grids")
    if mu.weights.shape == nu.weights.shape and np.max(np.abs(mu.weights - nu.weights)) <= tol:
        raise NoSeparationError("measures coincide")
    if mu.charges_rest() or nu.charges_rest():
        raise DegenerateMeasureError("measure charges the zero section; pairing cannot see it")
    n = mu.graph.grid.n
    diff = mu.g_masses() - nu.g_masses()
    positive = diff > tol
    if not positive.any():
        positive = diff < -tol
        if not positive.any():
            raise NoSeparationError("measures have equal projections under the pairing")
    u = positive.astype(float).reshape(n, n)
    p_mu = pairing(u, mu)
    p_nu = pairing(u, nu)
    mass_gap = math.fsum(mu.node_masses()[positive] - nu.node_masses()[positive])
    return SeparationResult(u, p_mu - p_nu, mass_gap, p_mu, p_nu)
