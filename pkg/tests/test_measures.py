import math
from itertools import combinations

import numpy as np
import pytest
from conftest import random_spec, simple_cycles

from aubrylab.critical import build_action_graph, critical_value
from aubrylab.errors import (
    DegenerateMeasureError, DegenerateTimeError, LoopStructureError, NoSeparationError, ValidationError,
)
from aubrylab.measures import (
    OccupationMeasure, assign_times, cycle_to_measure, enumerate_minimizers, min_mean_cycle,
    separation_test, support_energy_check,
)
from aubrylab.torus import ConformalMetric, DiscreteLoop, TorusGrid, build_metric, sine_rows, two_wells


def timed(metric, c, radius=2, tol=1e-10):
    graph = build_action_graph(metric, radius, c)
    alpha = critical_value(graph, tol).alpha
    return graph, alpha, assign_times(graph, "optimal", alpha=alpha)


def test_assign_times_examples():
    flat = build_action_graph(build_metric(TorusGrid(8)), 2, (1, 0))
    t = assign_times(flat, "optimal", alpha=0.5)
    moving = ~flat.rest
    np.testing.assert_allclose(t.h[moving], np.sqrt(flat.dx2[moving]), rtol=1e-15)
    heavy = build_action_graph(ConformalMetric(TorusGrid(8), np.full((8, 8), math.log(4))), 2, (1, 0))
    t = assign_times(heavy, "optimal", alpha=0.5, h_base=0.3)
    np.testing.assert_allclose(t.h[moving], 2 * np.sqrt(flat.dx2[moving]), rtol=1e-15)
    assert np.all(t.h[heavy.rest] == 0.3) and np.all(t.cost[heavy.rest] == 0)
    assert np.all(assign_times(flat, "fixed", h=0.01, h_base=0.2).h[flat.rest] == 0.2)


def test_assign_times_errors():
    graph = build_action_graph(build_metric(TorusGrid(8)), 1, (1, 0))
    with pytest.raises(DegenerateTimeError):
        assign_times(graph, "optimal", alpha=0.0)
    with pytest.raises(ValidationError):
        assign_times(graph, "fixed")
    with pytest.raises(ValidationError):
        assign_times(graph, "sometimes", alpha=1.0)


def test_min_mean_trivial_class_is_rest():
    graph = build_action_graph(build_metric(TorusGrid(8), random_spec(4)), 2, (0, 0))
    mset = min_mean_cycle(assign_times(graph, "fixed", h=graph.grid.spacing))
    assert mset.optimal_value == 0.0
    assert graph.rest[mset.cycle_edges[0]].all()


def test_min_mean_flat_and_sine_row():
    _, alpha, t = timed(build_metric(TorusGrid(16)), (1, 0))
    mset = min_mean_cycle(t)
    assert mset.optimal_value == pytest.approx(-0.5, abs=1e-9)
    assert mset.rotation_vectors[0] == pytest.approx((1.0, 0.0))
    _, _, t = timed(build_metric(TorusGrid(32), sine_rows(0.1)), (1, 0), radius=3)
    mset = min_mean_cycle(t)
    assert mset.optimal_value == pytest.approx(-0.5 * math.exp(0.1), abs=1e-9)
    assert {j for _, j in mset.cycles[0].nodes} == {24}


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("c", [(1, 0), (1, 1)])
def test_min_mean_equals_brute_force(seed, c):
    metric = build_metric(TorusGrid(4), random_spec(seed, amplitude=0.5))
    graph, alpha, t = timed(metric, c, radius=1)
    brute = min(t.mean(edges) for edges in simple_cycles(graph))
    brute = min(brute, 0.0)  # rest loops
    assert min_mean_cycle(t).optimal_value == brute


@pytest.mark.parametrize("seed", range(3))
def test_duality_and_howard(seed):
    metric = build_metric(TorusGrid(12), random_spec(seed))
    for c in [(0.5, 0.2), (-1, 1), (0, -2)]:
        graph, alpha, t = timed(metric, c, tol=1e-9)
        value = min_mean_cycle(t).optimal_value
        assert abs(value + alpha) <= 1e-6 + 1e-9
        assert min_mean_cycle(t, method="howard").optimal_value == pytest.approx(value, abs=1e-12)


def test_enumeration_counts():
    _, _, t = timed(build_metric(TorusGrid(16)), (1, 0))
    mset = enumerate_minimizers(t)
    assert mset.count_distinct == 16
    assert sorted({j for loop in mset.cycles for _, j in loop.nodes}) == list(range(16))
    _, _, t = timed(build_metric(TorusGrid(32), sine_rows(0.1)), (1, 0), radius=3)
    assert enumerate_minimizers(t).count_distinct == 1
    _, _, t = timed(build_metric(TorusGrid(32), two_wells(0.1)), (1, 0), radius=3)
    mset = enumerate_minimizers(t)
    assert mset.count_distinct == 2
    assert sorted({j for loop in mset.cycles for _, j in loop.nodes}) == [8, 24]


def test_enumeration_respects_cap_and_tolerance():
    _, _, t = timed(build_metric(TorusGrid(16)), (1, 0))
    mset = enumerate_minimizers(t, max_count=5)
    assert mset.count_distinct == 5
    assert all(m <= mset.optimal_value + mset.cluster_tol for m in mset.means)
    with pytest.raises(ValidationError):
        enumerate_minimizers(t, cluster_tol=-1.0)


@pytest.mark.parametrize("seed", range(4))
def test_minimizer_invariants(seed):
    metric = build_metric(TorusGrid(16), random_spec(seed))
    _, alpha, t = timed(metric, (0.7, -0.4))
    mset = enumerate_minimizers(t)
    seen = []
    for edges, loop in zip(mset.cycle_edges, mset.cycles):
        mu = cycle_to_measure(t, edges)
        mu.check()
        assert mu.action() == pytest.approx(t.mean(edges), rel=1e-12)
        # graph property: a minimizing cycle projects injectively
        assert len(set(loop.nodes)) == len(loop.nodes)
        key = frozenset(edges.tolist())
        assert key not in seen
        seen.append(key)
    report = support_energy_check(metric, t, mset, alpha)
    assert report.max_deviation <= 1e-9 and not report.flagged


def test_cycle_to_measure_examples():
    g = TorusGrid(8)
    graph = build_action_graph(build_metric(g), 1, (1, 0))
    t = assign_times(graph, "optimal", alpha=0.5)
    dirac = cycle_to_measure(t, [graph.edge_id(9, (0, 0))])
    assert dirac.time_mass() == 1.0 and dirac.charges_rest()
    row = cycle_to_measure(t, DiscreteLoop.from_steps(g, (0, 2), [(1, 0)] * 8))
    row.check()
    assert math.fsum(row.weights * t.h) == 1.0
    with pytest.raises(LoopStructureError):
        cycle_to_measure(t, [graph.edge_id(0, (1, 0)), graph.edge_id(0, (0, 1))])
    bad = OccupationMeasure(t, row.weights * 2)
    with pytest.raises(ValidationError):
        bad.check()


def test_energy_check_fixed_times():
    g = TorusGrid(16)
    metric = build_metric(g)
    graph = build_action_graph(metric, 1, (1, 0))
    unit = assign_times(graph, "fixed", h=g.spacing)
    mset = min_mean_cycle(unit)
    assert support_energy_check(metric, unit, mset, 0.5).max_deviation == pytest.approx(0.0, abs=1e-15)
    slow = assign_times(graph, "fixed", h=2 * g.spacing)
    report = support_energy_check(metric, slow, min_mean_cycle(slow), 0.5)
    assert report.flagged and report.max_deviation == pytest.approx(0.375)


def row_pair(n=16, radius=2):
    g = TorusGrid(n)
    _, alpha, t = timed(build_metric(g), (1, 0), radius=radius)
    mu = cycle_to_measure(t, DiscreteLoop.from_steps(g, (0, 1), [(1, 0)] * n))
    nu = cycle_to_measure(t, DiscreteLoop.from_steps(g, (0, 9), [(1, 0)] * n))
    return alpha, t, mu, nu


def test_separation_of_flat_rows():
    alpha, _, mu, nu = row_pair()
    res = separation_test(mu, nu)
    assert res.mass_gap == pytest.approx(1.0, abs=1e-12)
    assert res.gap == pytest.approx(2 * alpha * res.mass_gap, abs=1e-6)
    assert res.gap == pytest.approx(1.0, abs=1e-6)
    assert np.all(res.u >= 0) and res.u[:, 1].all() and not res.u[:, 9].any()


def test_separation_errors():
    _, t, mu, _ = row_pair()
    with pytest.raises(NoSeparationError):
        separation_test(mu, mu)
    rest = cycle_to_measure(t, [t.graph.edge_id(0, (0, 0))])
    with pytest.raises(DegenerateMeasureError):
        separation_test(mu, rest)


def test_separation_of_overlapping_cycles():
    g = TorusGrid(8)
    _, alpha, t = timed(build_metric(g), (1, 0), radius=1)
    row = DiscreteLoop.from_steps(g, (0, 0), [(1, 0)] * 8)
    detour = DiscreteLoop.from_steps(g, (0, 0), [(1, 0)] * 4 + [(0, 1)] + [(1, 0)] * 4 + [(0, -1)])
    shared = set(row.nodes) & set(detour.nodes)
    assert len(shared) == len(detour.nodes) // 2
    mu, nu = cycle_to_measure(t, row), cycle_to_measure(t, detour)
    res = separation_test(mu, nu)
    assert res.gap > 0
    direct = math.fsum(res.u.ravel()[t.src] * mu.weights * t.dx2 / t.h) - math.fsum(
        res.u.ravel()[t.src] * nu.weights * t.dx2 / t.h
    )
    assert res.gap == pytest.approx(direct, rel=1e-12)


def test_separation_positive_for_enumerated_pairs():
    for spec in (None, two_wells(0.1)):
        _, _, t = timed(build_metric(TorusGrid(16), spec), (1, 0), radius=2)
        mset = enumerate_minimizers(t)
        measures = [cycle_to_measure(t, e) for e in mset.cycle_edges]
        for a, b in combinations(measures, 2):
            assert separation_test(a, b).gap > 0
