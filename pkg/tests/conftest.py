import math

import networkx as nx
import numpy as np
import pytest

from aubrylab.torus import FieldSpec, FourierMode, PeriodicBump, TorusGrid, build_metric


def random_spec(seed: int, modes: int = 3, bumps: int = 2, amplitude: float = 0.3) -> FieldSpec:
    """A smooth, seeded log-factor mixing low Fourier modes and bumps."""
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(modes):
        k1, k2 = (int(v) for v in rng.integers(-2, 3, size=2))
        if k1 == 0 and k2 == 0:
            k2 = 1
        terms.append(FourierMode(k1, k2, float(rng.uniform(-amplitude, amplitude)),
                                 float(rng.uniform(0, 2 * math.pi)), str(rng.choice(["sin", "cos"]))))
    blobs = [
        PeriodicBump(tuple(float(x) for x in rng.uniform(0, 1, 2)), float(rng.uniform(0.08, 0.2)),
                     float(rng.uniform(-amplitude, amplitude)))
        for _ in range(bumps)
    ]
    return FieldSpec(modes=tuple(terms), bumps=tuple(blobs))


def simple_cycles(graph):
    """Every simple cycle of ``graph`` as an array of edge ids (no parallel edges assumed)."""
    digraph = nx.DiGraph()
    lookup = {}
    for e in range(graph.num_edges):
        u, v = int(graph.src[e]), int(graph.dst[e])
        if u == v:
            continue
        assert (u, v) not in lookup, "oracle needs a graph without parallel edges"
        lookup[u, v] = e
        digraph.add_edge(u, v)
    for nodes in nx.simple_cycles(digraph):
        yield np.array([lookup[nodes[k], nodes[(k + 1) % len(nodes)]] for k in range(len(nodes))])


@pytest.fixture
def flat16():
    return build_metric(TorusGrid(16), FieldSpec())
