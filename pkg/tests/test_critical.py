import math

import numpy as np
import pytest
from conftest import random_spec, simple_cycles
from hypothesis import given, settings, strategies as st

from aubrylab.critical import (
    alpha_lower_bound_from_loop, build_action_graph, critical_value, detect_negative_cycle,
    finsler_weights, has_negative_cycle,
)
from aubrylab.errors import DomainError
from aubrylab.torus import DiscreteLoop, FieldSpec, TorusGrid, build_metric, homology_class, sine_rows


def alpha_oracle(graph):
    """Largest level at which some simple cycle still has negative Finsler cost.

    A cycle with homology pairing ``b`` and Finsler length ``l`` turns
    nonnegative at ``k = b^2 / (2 l^2)``.
    """
    best = 0.0
    for edges in simple_cycles(graph):
        b = math.fsum(graph.form[edges])
        if b > 0:
            best = max(best, b * b / (2.0 * math.fsum(graph.finsler_length[edges]) ** 2))
    return best


def test_graph_shape_and_symmetry():
    metric = build_metric(TorusGrid(8), random_spec(3))
    graph = build_action_graph(metric, 2, (1, 0))
    assert graph.num_edges == 64 * len(graph.stencil)
    for e in range(0, graph.num_edges, 7):
        back = graph.edge_id(graph.dst[e], tuple(-graph.offset[e]))
        assert graph.dst[back] == graph.src[e]
        assert graph.finsler_length[back] == graph.finsler_length[e]
    assert np.all(graph.finsler_length[graph.rest] == 0)


def test_finsler_weight_examples():
    flat = build_metric(TorusGrid(16))
    g0 = build_action_graph(build_metric(TorusGrid(8), random_spec(1)), 2, (0, 0))
    assert np.all(finsler_weights(g0, 0.0) == 0.0)
    graph = build_action_graph(flat, 2, (1, 0))
    e = graph.edge_id(0, (1, 0))
    delta = flat.grid.spacing
    assert finsler_weights(graph, 0.5)[e] == pytest.approx(0.0, abs=1e-17)
    assert finsler_weights(graph, 0.125)[e] == pytest.approx(-delta / 2, abs=1e-17)
    with pytest.raises(DomainError):
        finsler_weights(graph, -1e-3)


def test_negative_cycle_examples():
    flat = build_metric(TorusGrid(16))
    assert not has_negative_cycle(build_action_graph(build_metric(TorusGrid(8), random_spec(2)), 2, (0, 0)), 3.0)
    graph = build_action_graph(flat, 1, (1, 0))
    hit = has_negative_cycle(graph, 0.125)
    assert hit and hit.cost < 0 and homology_class(hit.witness)[0] >= 1
    row = DiscreteLoop.from_steps(flat.grid, (0, 0), [(1, 0)] * 16)
    assert math.fsum(finsler_weights(graph, 0.125)[graph.edges_of_loop(row)]) == pytest.approx(-0.5, abs=1e-15)
    assert not has_negative_cycle(graph, 0.5 + 1e-6)


def test_no_cycle_above_half_on_flat_n4_by_exhaustion():
    graph = build_action_graph(build_metric(TorusGrid(4)), 1, (1, 0))
    w = finsler_weights(graph, 0.5 + 1e-6)
    assert min(math.fsum(w[c]) for c in simple_cycles(graph)) > 0
    assert not has_negative_cycle(graph, 0.5 + 1e-6)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("method", ["bellman-ford", "howard"])
def test_detector_matches_exhaustive_search(seed, method):
    rng = np.random.default_rng(seed)
    metric = build_metric(TorusGrid(4), random_spec(seed, amplitude=0.6))
    c = tuple(rng.uniform(-1.5, 1.5, size=2))
    graph = build_action_graph(metric, 1, c)
    cycles = list(simple_cycles(graph))
    for k in rng.uniform(0.0, 2.0, size=12):
        w = finsler_weights(graph, k)
        lowest = min(math.fsum(w[e]) for e in cycles)
        if abs(lowest) < 1e-9:
            continue
        found, edges, _ = detect_negative_cycle(graph, w, method=method)
        assert found == (lowest < 0)
        if found:
            assert math.fsum(w[edges]) < 0
            assert np.all(graph.dst[edges] == graph.src[np.roll(edges, -1)])


def test_critical_value_examples():
    flat = build_metric(TorusGrid(16))
    some = build_metric(TorusGrid(16), random_spec(5))
    assert critical_value(build_action_graph(some, 2, (0, 0))).alpha == 0.0
    res = critical_value(build_action_graph(flat, 2, (1, 0)), tolerance=1e-10)
    assert res.alpha == pytest.approx(0.5, abs=1e-10)
    assert res.bracket[1] - res.bracket[0] <= 1e-10 and res.bracket[1] == res.alpha
    assert critical_value(build_action_graph(flat, 3, (1, 1))).alpha == pytest.approx(1.0, rel=0.02)


def test_witness_is_negative_at_lower_bracket():
    graph = build_action_graph(build_metric(TorusGrid(12), random_spec(8)), 2, (0.3, -0.9))
    res = critical_value(graph, tolerance=1e-8)
    w = finsler_weights(graph, res.bracket[0])
    assert math.fsum(w[res.witness_edges]) < 0
    assert not has_negative_cycle(graph, res.alpha)


@pytest.mark.parametrize("seed", range(5))
def test_critical_value_matches_cycle_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    metric = build_metric(TorusGrid(4), random_spec(seed, amplitude=0.5))
    graph = build_action_graph(metric, 1, tuple(rng.uniform(-2, 2, size=2)))
    tol = 1e-10
    assert critical_value(graph, tolerance=tol).alpha == pytest.approx(alpha_oracle(graph), abs=2 * tol)


def test_howard_route_agrees():
    graph = build_action_graph(build_metric(TorusGrid(12), random_spec(9)), 2, (1, 0.5))
    a = critical_value(graph, 1e-9).alpha
    b = critical_value(graph, 1e-9, method="howard").alpha
    assert a == pytest.approx(b, abs=2e-9)


classes = st.tuples(st.floats(-2, 2), st.floats(-2, 2)).filter(lambda c: math.hypot(*c) > 0.05)


@settings(max_examples=15, deadline=None)
@given(classes, classes, st.floats(1.2, 3.0))
def test_alpha_convex_and_homogeneous(c1, c2, t):
    metric = build_metric(TorusGrid(8), random_spec(11))
    tol = 1e-9

    def alpha(c):
        return critical_value(build_action_graph(metric, 2, c), tol).alpha

    a1, a2 = alpha(c1), alpha(c2)
    mid = alpha(((c1[0] + c2[0]) / 2, (c1[1] + c2[1]) / 2))
    assert mid <= (a1 + a2) / 2 + 2 * tol
    assert a1 > 1e-6
    scaled = alpha((t * c1[0], t * c1[1]))
    assert scaled >= t * a1 - 2 * tol
    assert scaled == pytest.approx(t * t * a1, rel=1e-7)


def test_lower_bound_examples():
    g = TorusGrid(16)
    flat = build_metric(g)
    row = DiscreteLoop.from_steps(g, (0, 0), [(1, 0)] * 16)
    assert alpha_lower_bound_from_loop(build_action_graph(flat, 1, (1, 0)), row) == pytest.approx(0.5, abs=1e-15)
    assert alpha_lower_bound_from_loop(build_action_graph(flat, 1, (0, 0)), row) == 0.0
    assert alpha_lower_bound_from_loop(build_action_graph(flat, 1, (-1, 0)), row) == 0.0


def test_lower_bound_on_minimizing_row_is_sharp():
    g = TorusGrid(32)
    metric = build_metric(g, sine_rows(0.1))
    graph = build_action_graph(metric, 3, (1, 0))
    row = DiscreteLoop.from_steps(g, (0, 24), [(1, 0)] * 32)
    exact = 0.5 * math.exp(0.1)  # row x2 = 3/4 where f = -0.1
    bound = alpha_lower_bound_from_loop(graph, row)
    alpha = critical_value(graph, 1e-9).alpha
    assert bound == pytest.approx(exact, rel=1e-14)
    assert bound <= alpha + 1e-9
    assert alpha == pytest.approx(exact, abs=1e-9)


moves = st.lists(st.sampled_from([(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (2, -1)]), min_size=1, max_size=20)


@settings(max_examples=40, deadline=None)
@given(moves, st.integers(0, 50))
def test_lower_bound_never_exceeds_alpha(steps, seed):
    g = TorusGrid(8)
    metric = build_metric(g, random_spec(seed))
    sa = sum(a for a, _ in steps)
    sb = sum(b for _, b in steps)
    steps = steps + [(1, 0)] * ((-sa) % 8 or 8) + [(0, 1)] * ((-sb) % 8)
    loop = DiscreteLoop.from_steps(g, (0, 0), steps)
    graph = build_action_graph(metric, 3, (0.8, 0.3))
    assert alpha_lower_bound_from_loop(graph, loop) <= critical_value(graph, 1e-9).alpha + 1e-9
