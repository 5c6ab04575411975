"""Lagrangian, energy and action for ``L(x, v) = 1/2 e^{f(x)} |v|^2``.

Along a lattice edge the conformal factor is taken as ``e^{fbar}`` with
``fbar`` the mean of ``f`` at the two endpoints; this is symmetric under
edge reversal and is the same factor the graph modules use, which keeps
the Finsler weights and the timed costs exactly dual to each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LoopStructureError, ValidationError
from .torus import ConformalMetric, DiscreteLoop, as_class, homology_class


@dataclass(frozen=True)
class ActionSample:
    kinetic: float
    form_term: float
    total: float
    energy: float


@dataclass(frozen=True)
class SpeedProfile:
    a: float
    b: float
    s_star: float
    lower_bound: float

    def action(self, s):
        """Action ``a s^2 - b s`` of the loop run at speed ``s``."""
        return self.a * s * s - self.b * s


def _node_index(metric: ConformalMetric, node):
    if isinstance(node, (int, np.integer)):
        return metric.grid.node_ij(node)
    i, j = node
    return int(i) % metric.grid.n, int(j) % metric.grid.n


def lagrangian(metric: ConformalMetric, node, velocity, c=(0.0, 0.0)) -> ActionSample:
    v = np.asarray(velocity, dtype=float)
    if v.shape != (2,) or not np.all(np.isfinite(v)):
        raise ValidationError(f"velocity must be a finite 2-vector, got {velocity!r}")
    i, j = _node_index(metric, node)
    conformal = math.exp(metric.f[i, j])
    vv = float(v @ v)
    kinetic = 0.5 * conformal * vv
    form = float(as_class(c).vector @ v)
    # E = (dL/dv) . v - L; for a quadratic form this is exactly the kinetic term
    energy = conformal * vv - kinetic
    return ActionSample(kinetic, form, kinetic - form, energy)


def edge_log_factor(f_flat: np.ndarray, src, dst):
    """Endpoint average of ``f`` along edges ``src -> dst`` (flat node ids)."""
    return 0.5 * (f_flat[src] + f_flat[dst])


def loop_kinetic_action(metric: ConformalMetric, loop: DiscreteLoop) -> float:
    if loop.grid != metric.grid:
        raise LoopStructureError("loop and metric live on different grids")
    h = loop.timestep
    if not h > 0:
        raise ValidationError("timestep must be positive")
    n = metric.grid.n
    delta = metric.grid.spacing
    terms = []
    for (i, j), (a, b) in zip(loop.nodes, loop.displacements):
        fbar = 0.5 * (metric.f[i, j] + metric.f[(i + a) % n, (j + b) % n])
        dx2 = (a * delta) ** 2 + (b * delta) ** 2
        terms.append(h * 0.5 * math.exp(fbar) * dx2 / (h * h))
    return math.fsum(terms)


def loop_action(metric: ConformalMetric, c, loop: DiscreteLoop) -> float:
    """Discrete action of ``L - omega`` over one period of ``loop``."""
    if not loop.timestep > 0:
        raise ValidationError("timestep must be positive")
    c = as_class(c)
    z1, z2 = homology_class(loop)
    return loop_kinetic_action(metric, loop) - (c.c1 * z1 + c.c2 * z2)


def optimal_speed(a: float, b: float) -> SpeedProfile:
    """Best reparametrization speed of a loop with action ``a`` and ``-b`` form integral.

    Running the loop at speed ``s`` costs ``a s^2 - b s``; for ``b > 0`` the
    minimum sits at ``b / 2a`` with value ``-b^2 / 4a``.
    """
    if not a > 0:
        raise DomainError(f"unit-speed action must be positive (loop is not a fixed point), got {a}")
    if b <= 0:
        return SpeedProfile(a, b, 0.0, 0.0)
    return SpeedProfile(a, b, b / (2.0 * a), b * b / (4.0 * a))


def pairing(u, mu) -> float:
    """``<u, pi_g(mu)> = int u(x) g(v, v) dmu`` with the flat background metric.

    ``mu`` is an occupation measure: edge rates ``mu(e)`` with time-mass
    ``sum mu(e) h_e = 1``. The integrand is evaluated at the edge's base
    node, so each edge contributes ``mu(e) h_e u(src) |dx_e / h_e|^2``.
    """
    graph = mu.graph
    u = np.asarray(u, dtype=float)
    n = graph.grid.n
    if u.shape == (n, n):
        u = u.ravel()
    if u.shape != (n * n,):
        raise LoopStructureError(f"field of shape {u.shape} does not match grid n={n}")
    support = np.flatnonzero(mu.weights)
    w = mu.weights[support]
    dx2 = graph.dx2[support]
    h = graph.h[support]
    return math.fsum(w * u[graph.src[support]] * dx2 / h)
