"""Compiled graph kernels: negative-cycle detection and min-ratio cycles.

Graphs are passed as flat edge arrays plus a CSR listing of out-edges:
the out-edges of node ``v`` are ``order[indptr[v]:indptr[v + 1]]``.
``active`` masks edges out of the computation.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _find_parent_cycle(parent, src, num_nodes, stamp):
    # stamp[v] holds the walk id that first reached v, 0 = unvisited
    for v in range(num_nodes):
        stamp[v] = 0
    walk = 0
    for start in range(num_nodes):
        if stamp[start] != 0:
            continue
        walk += 1
        v = start
        while True:
            stamp[v] = walk
            e = parent[v]
            if e < 0:
                break
            u = src[e]
            if stamp[u] == walk:
                return u
            if stamp[u] != 0:
                break
            v = u
    return -1


@njit(cache=True, nogil=True)
def _extract_cycle(parent, src, node):
    count = 0
    v = node
    while True:
        count += 1
        v = src[parent[v]]
        if v == node:
            break
    edges = np.empty(count, dtype=np.int64)
    v = node
    for k in range(count - 1, -1, -1):
        e = parent[v]
        edges[k] = e
        v = src[e]
    return edges


@njit(cache=True, nogil=True)
def negative_cycle(num_nodes, indptr, order, src, dst, weight, active, tau):
    """Queue-based Bellman-Ford from a virtual source joined to every node.

    Relaxes ``d[v] > d[u] + w + tau`` only. Returns ``(found, cycle_edges,
    dist)``. When ``found`` is false every edge satisfies
    ``d[v] <= d[u] + w + tau``, so every simple cycle of m edges costs at
    least ``-m * tau``. When true, the returned parent-graph cycle costs
    less than ``-tau`` (in exact arithmetic).
    """
    dist = np.zeros(num_nodes)
    parent = np.full(num_nodes, -1, dtype=np.int64)
    stamp = np.zeros(num_nodes, dtype=np.int64)
    in_queue = np.ones(num_nodes, dtype=np.bool_)
    queue = np.empty(num_nodes, dtype=np.int64)
    for v in range(num_nodes):
        queue[v] = v
    head = 0
    size = num_nodes
    relaxed = 0
    next_check = num_nodes
    while size > 0:
        u = queue[head]
        head += 1
        if head == num_nodes:
            head = 0
        size -= 1
        in_queue[u] = False
        du = dist[u]
        for k in range(indptr[u], indptr[u + 1]):
            e = order[k]
            if not active[e]:
                continue
            v = dst[e]
            cand = du + weight[e]
            if cand < dist[v] - tau:
                dist[v] = cand
                parent[v] = e
                if not in_queue[v]:
                    in_queue[v] = True
                    tail = head + size
                    if tail >= num_nodes:
                        tail -= num_nodes
                    queue[tail] = v
                    size += 1
                relaxed += 1
                if relaxed >= next_check:
                    next_check += num_nodes
                    node = _find_parent_cycle(parent, src, num_nodes, stamp)
                    if node >= 0:
                        return True, _extract_cycle(parent, src, node), dist
    # a final sweep catches a parent cycle closed by the last relaxations
    node = _find_parent_cycle(parent, src, num_nodes, stamp)
    if node >= 0:
        return True, _extract_cycle(parent, src, node), dist
    return False, np.empty(0, dtype=np.int64), dist


@njit(cache=True, nogil=True)
def howard_min_ratio(num_nodes, indptr, order, src, dst, cost, time, active, node_alive, eps, max_iter):
    """Howard policy iteration for ``min over cycles of sum(cost) / sum(time)``.

    Every alive node must keep at least one active out-edge to an alive
    node. Returns ``(ratio_per_node, policy, iterations)``; the policy cycle
    reached from the minimizing node is a witness.
    """
    policy = np.full(num_nodes, -1, dtype=np.int64)
    for u in range(num_nodes):
        if not node_alive[u]:
            continue
        best = np.inf
        for k in range(indptr[u], indptr[u + 1]):
            e = order[k]
            if active[e] and node_alive[dst[e]]:
                r = cost[e] / time[e]
                if r < best:
                    best = r
                    policy[u] = e
    eta = np.zeros(num_nodes)
    x = np.zeros(num_nodes)
    state = np.zeros(num_nodes, dtype=np.int64)
    path = np.empty(num_nodes, dtype=np.int64)
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        # value determination on the functional graph of the policy
        for v in range(num_nodes):
            state[v] = 0
        for s in range(num_nodes):
            if not node_alive[s] or state[s] != 0:
                continue
            length = 0
            v = s
            while state[v] == 0:
                state[v] = 1
                path[length] = v
                length += 1
                v = dst[policy[v]]
            stop = length
            if state[v] == 1:
                # v closes a new cycle inside the current path
                first = 0
                while path[first] != v:
                    first += 1
                csum = 0.0
                tsum = 0.0
                for k in range(first, length):
                    e = policy[path[k]]
                    csum += cost[e]
                    tsum += time[e]
                ratio = csum / tsum
                x[v] = 0.0
                eta[v] = ratio
                state[v] = 2
                for k in range(length - 1, first, -1):
                    w = path[k]
                    e = policy[w]
                    eta[w] = ratio
                    x[w] = cost[e] - ratio * time[e] + x[dst[e]]
                    state[w] = 2
                stop = first
            for k in range(stop - 1, -1, -1):
                w = path[k]
                e = policy[w]
                eta[w] = eta[dst[e]]
                x[w] = cost[e] - eta[w] * time[e] + x[dst[e]]
                state[w] = 2
        # improvement of the cycle ratios reachable in one step
        changed = False
        for u in range(num_nodes):
            if not node_alive[u]:
                continue
            best = eta[u]
            choice = -1
            for k in range(indptr[u], indptr[u + 1]):
                e = order[k]
                if active[e] and node_alive[dst[e]] and eta[dst[e]] < best - eps:
                    best = eta[dst[e]]
                    choice = e
            if choice >= 0:
                policy[u] = choice
                changed = True
        if changed:
            continue
        # improvement of the relative values at equal ratio
        for u in range(num_nodes):
            if not node_alive[u]:
                continue
            best = x[u]
            choice = -1
            for k in range(indptr[u], indptr[u + 1]):
                e = order[k]
                if not (active[e] and node_alive[dst[e]]):
                    continue
                v = dst[e]
                if abs(eta[v] - eta[u]) > eps:
                    continue
                val = cost[e] - eta[u] * time[e] + x[v]
                if val < best - eps:
                    best = val
                    choice = e
            if choice >= 0:
                policy[u] = choice
                changed = True
        if not changed:
            break
    return eta, policy, iterations


@njit(cache=True, nogil=True)
def policy_cycle(policy, dst, start):
    """Edges of the cycle reached by following ``policy`` from ``start``."""
    n = policy.shape[0]
    seen = np.full(n, -1, dtype=np.int64)
    v = start
    step = 0
    while seen[v] < 0:
        seen[v] = step
        step += 1
        v = dst[policy[v]]
    head = v
    count = 0
    while True:
        count += 1
        v = dst[policy[v]]
        if v == head:
            break
    edges = np.empty(count, dtype=np.int64)
    v = head
    for k in range(count):
        edges[k] = policy[v]
        v = dst[policy[v]]
    return edges
