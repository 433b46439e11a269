"""Exact binary MRF labeling via s-t max-flow (Edmonds-Karp, dense residual).

Energy model: E(x) = sum_i theta_i(x_i) + sum_ij w_ij * [x_i != x_j] with
w_ij >= 0 (submodular), x_i in {0, 1}. Unary costs may be negative or +inf;
they are shifted per node and capped before building capacities, which leaves
the argmin unchanged. Of all minimum-energy labelings the one with the
largest label-0 set is returned, so exact ties resolve to 0.
"""

from __future__ import annotations

from collections import deque

import numpy as np

_TOL = 1e-12


def binary_energy(unary0, unary1, edges, weights, labels) -> float:
    """E(labels) under the model above (+inf allowed in unaries)."""
    unary0 = np.asarray(unary0, dtype=np.float64)
    unary1 = np.asarray(unary1, dtype=np.float64)
    labels = np.asarray(labels)
    e = float(np.where(labels == 0, unary0, unary1).sum())
    if len(edges):
        edges = np.asarray(edges)
        w = np.asarray(weights, dtype=np.float64)
        diff = labels[edges[:, 0]] != labels[edges[:, 1]]
        e += float(w[diff].sum())
    return e


def min_cut_binary(unary0, unary1, edges, weights) -> np.ndarray:
    """Global optimum labels (n,) uint8; ties prefer label 0."""
    unary0 = np.asarray(unary0, dtype=np.float64).reshape(-1)
    unary1 = np.asarray(unary1, dtype=np.float64).reshape(-1)
    n = len(unary0)
    if len(unary1) != n:
        raise ValueError("unary cost arrays must have equal length")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(edges) != len(weights):
        raise ValueError("one weight per edge required")
    if len(weights) and weights.min() < 0:
        raise ValueError(f"negative edge cost at edge {int(np.argmin(weights))}")
    if n == 0:
        return np.zeros(0, dtype=np.uint8)

    # shift per-node so capacities are non-negative; replace inf by a cap
    shift = np.minimum(unary0, unary1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    t0 = unary0 - shift
    t1 = unary1 - shift
    finite_total = (t0[np.isfinite(t0)].sum() + t1[np.isfinite(t1)].sum()
                    + weights.sum() + 1.0)
    t0 = np.where(np.isfinite(t0), t0, finite_total)
    t1 = np.where(np.isfinite(t1), t1, finite_total)

    s, t = n, n + 1
    res = np.zeros((n + 2, n + 2))
    res[s, :n] = t1                 # cut s->i  <=>  x_i = 1 pays theta(1)
    res[:n, t] = t0                 # cut i->t  <=>  x_i = 0 pays theta(0)
    for (a, b), w in zip(edges, weights):
        if a == b:
            continue
        res[a, b] += w
        res[b, a] += w

    while True:
        # BFS for the shortest augmenting path in the residual graph
        parent = np.full(n + 2, -1, dtype=np.int64)
        parent[s] = s
        queue = deque([s])
        while queue and parent[t] < 0:
            u = queue.popleft()
            for v in np.flatnonzero(res[u] > _TOL):
                if parent[v] < 0:
                    parent[v] = u
                    if v == t:
                        break
                    queue.append(v)
        if parent[t] < 0:
            break
        bottleneck = np.inf
        v = t
        while v != s:
            u = parent[v]
            bottleneck = min(bottleneck, res[u, v])
            v = u
        v = t
        while v != s:
            u = parent[v]
            res[u, v] -= bottleneck
            res[v, u] += bottleneck
            v = u

    # nodes that can still reach t get label 1; the rest label 0 (maximal set)
    reach = np.zeros(n + 2, dtype=bool)
    reach[t] = True
    queue = deque([t])
    while queue:
        v = queue.popleft()
        for u in np.flatnonzero(res[:, v] > _TOL):
            if not reach[u]:
                reach[u] = True
                queue.append(u)
    return reach[:n].astype(np.uint8)
