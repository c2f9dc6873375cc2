"""Reference tour and packing heuristics used to seed evolution.

The ``*_core`` functions are deliberately self-contained pure-Python
(plain lists, no package imports, only ``math``/``random`` globals): their
source is lifted verbatim into standalone seed candidate programs, which
guarantees the subprocess evaluation path reproduces in-process results
exactly. Wrappers below add instance types and validation.
"""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass

from .instances import BppInstance, Matrix, TspInstance


@dataclass(frozen=True)
class Tour:
    """Visit order: a permutation of 0..n-1, closed implicitly."""

    order: tuple[int, ...]


@dataclass(frozen=True)
class Packing:
    """Bins as tuples of item indices; every item in exactly one bin."""

    bins: tuple[tuple[int, ...], ...]

    def bin_count(self) -> int:
        return len(self.bins)


# --- extraction-friendly cores -------------------------------------------


def tour_length_core(matrix, order):
    """Cyclic tour length including the closing edge."""
    total = 0
    for k in range(len(order)):
        total = total + matrix[order[k]][order[(k + 1) % len(order)]]
    return total


def nearest_neighbor_core(matrix, start):
    """Greedy tour: repeatedly move to the closest unvisited vertex."""
    n = len(matrix)
    visited = [False] * n
    visited[start] = True
    order = [start]
    for _ in range(n - 1):
        last = order[-1]
        best = -1
        best_d = float("inf")
        for j in range(n):
            if not visited[j] and matrix[last][j] < best_d:
                best = j
                best_d = matrix[last][j]
        visited[best] = True
        order.append(best)
    return order


def insertion_tour_core(matrix, mode, rng):
    """Insertion construction: grow a sub-tour by cheapest insertion.

    mode selects the next city: "nearest" (min distance to the sub-tour),
    "farthest" (max of min distance to the sub-tour), or "random" (shuffle
    via rng). The starting pair is the mutually nearest pair for "nearest",
    the mutually farthest otherwise; all ties break toward lowest index.
    """
    n = len(matrix)
    if n <= 2:
        return list(range(n))
    pick_min = mode == "nearest"
    pair = (0, 1)
    pair_d = matrix[0][1]
    for i in range(n):
        for j in range(i + 1, n):
            d = matrix[i][j]
            if (d < pair_d) if pick_min else (d > pair_d):
                pair = (i, j)
                pair_d = d
    tour = [pair[0], pair[1]]
    in_tour = [False] * n
    in_tour[pair[0]] = True
    in_tour[pair[1]] = True

    if mode == "random":
        rest = [c for c in range(n) if not in_tour[c]]
        rng.shuffle(rest)
    else:
        rest = None

    for step in range(n - 2):
        if mode == "random":
            city = rest[step]
        else:
            city = -1
            city_d = None
            for c in range(n):
                if in_tour[c]:
                    continue
                d = min(matrix[c][t] for t in tour)
                if city_d is None or ((d < city_d) if pick_min else (d > city_d)):
                    city = c
                    city_d = d
        best_pos = 0
        best_inc = None
        for k in range(len(tour)):
            a = tour[k]
            b = tour[(k + 1) % len(tour)]
            inc = matrix[a][city] + matrix[city][b] - matrix[a][b]
            if best_inc is None or inc < best_inc:
                best_inc = inc
                best_pos = k
        tour.insert(best_pos + 1, city)
        in_tour[city] = True
    return tour


def two_opt_core(matrix, order):
    """Best-improvement 2-opt: apply the single best exchange per sweep.

    Each sweep scans every non-adjacent edge pair and applies only the
    globally best length-reducing reconnection; sweeps repeat until no
    exchange improves the tour.
    """
    n = len(order)
    tour = list(order)
    if n < 4:
        return tour
    while True:
        best_delta = -1e-9
        best_p = -1
        best_q = -1
        for p in range(n - 2):
            limit = n if p > 0 else n - 1
            for q in range(p + 2, limit):
                a, b = tour[p], tour[p + 1]
                c, d = tour[q], tour[(q + 1) % n]
                delta = matrix[a][c] + matrix[b][d] - matrix[a][b] - matrix[c][d]
                if delta < best_delta:
                    best_delta = delta
                    best_p = p
                    best_q = q
        if best_p < 0:
            return tour
        tour[best_p + 1 : best_q + 1] = reversed(tour[best_p + 1 : best_q + 1])


def christofides_core(matrix):
    """1.5-approximation pipeline: MST + odd-vertex matching + Euler shortcut.

    The minimum-weight perfect matching on odd-degree vertices is exact
    (subset dynamic programming) up to 16 odd vertices and greedy beyond;
    the 1.5x bound versus the optimum holds in the exact regime on metric
    instances.
    """
    n = len(matrix)
    if n <= 3:
        return list(range(n))

    in_tree = [False] * n
    dist = [float("inf")] * n
    parent = [-1] * n
    dist[0] = 0
    adj = [[] for _ in range(n)]
    for _ in range(n):
        u = -1
        u_d = float("inf")
        for v in range(n):
            if not in_tree[v] and dist[v] < u_d:
                u = v
                u_d = dist[v]
        in_tree[u] = True
        if parent[u] >= 0:
            adj[u].append(parent[u])
            adj[parent[u]].append(u)
        for v in range(n):
            if not in_tree[v] and matrix[u][v] < dist[v]:
                dist[v] = matrix[u][v]
                parent[v] = u

    odd = [v for v in range(n) if len(adj[v]) % 2 == 1]
    m = len(odd)
    if m > 0 and m <= 16:
        full = (1 << m) - 1
        dp = [float("inf")] * (full + 1)
        choice = [(-1, -1)] * (full + 1)
        dp[0] = 0.0
        for mask in range(1, full + 1):
            i = 0
            while not (mask >> i) & 1:
                i += 1
            rest = mask ^ (1 << i)
            j = i + 1
            while j < m:
                if (rest >> j) & 1:
                    prev = rest ^ (1 << j)
                    cand = dp[prev] + matrix[odd[i]][odd[j]]
                    if cand < dp[mask]:
                        dp[mask] = cand
                        choice[mask] = (i, j)
                j += 1
        mask = full
        while mask:
            i, j = choice[mask]
            adj[odd[i]].append(odd[j])
            adj[odd[j]].append(odd[i])
            mask ^= (1 << i) | (1 << j)
    elif m > 0:
        unmatched = list(odd)
        while unmatched:
            best = None
            best_d = float("inf")
            for x in range(len(unmatched)):
                for y in range(x + 1, len(unmatched)):
                    d = matrix[unmatched[x]][unmatched[y]]
                    if d < best_d:
                        best_d = d
                        best = (x, y)
            x, y = best
            u, v = unmatched[x], unmatched[y]
            adj[u].append(v)
            adj[v].append(u)
            unmatched = [w for k, w in enumerate(unmatched) if k not in (x, y)]

    # multigraph edge list from the doubled adjacency entries
    edges = []
    edge_ids = [[] for _ in range(n)]
    counted = {}
    for u in range(n):
        for v in adj[u]:
            if u < v:
                counted[(u, v)] = counted.get((u, v), 0) + 1
    for (u, v), c in sorted(counted.items()):
        for _ in range(c):
            eid = len(edges)
            edges.append((u, v))
            edge_ids[u].append(eid)
            edge_ids[v].append(eid)

    used = [False] * len(edges)
    ptr = [0] * n
    stack = [0]
    circuit = []
    while stack:
        u = stack[-1]
        while ptr[u] < len(edge_ids[u]) and used[edge_ids[u][ptr[u]]]:
            ptr[u] += 1
        if ptr[u] == len(edge_ids[u]):
            circuit.append(stack.pop())
        else:
            eid = edge_ids[u][ptr[u]]
            used[eid] = True
            a, b = edges[eid]
            stack.append(b if a == u else a)

    seen = [False] * n
    order = []
    for v in circuit:
        if not seen[v]:
            seen[v] = True
            order.append(v)
    return order


def fit_packing_core(sizes, capacity, policy):
    """Sequential bin packing under one of four placement policies.

    policy: "first" (lowest-index admissible bin), "best" (least remaining
    space after placement), "worst" (most remaining space), or "next"
    (only the most recently opened bin stays active). Ties break toward
    the lowest bin index; a new bin opens only when no admissible bin
    exists.
    """
    eps = 1e-9 * (capacity if capacity > 1 else 1.0)
    loads = []
    bins = []
    for idx in range(len(sizes)):
        s = sizes[idx]
        chosen = -1
        if policy == "next":
            if loads and loads[-1] + s <= capacity + eps:
                chosen = len(loads) - 1
        else:
            best_key = None
            for b in range(len(loads)):
                if loads[b] + s > capacity + eps:
                    continue
                remaining = capacity - loads[b]
                if policy == "first":
                    chosen = b
                    break
                key = remaining if policy == "best" else -remaining
                if best_key is None or key < best_key:
                    best_key = key
                    chosen = b
        if chosen < 0:
            loads.append(s)
            bins.append([idx])
        else:
            loads[chosen] += s
            bins[chosen].append(idx)
    return bins


# --- instance-typed wrappers ----------------------------------------------


def tour_length(instance: TspInstance, tour: Tour) -> float:
    verdict = validate_tour(instance, tour)
    if verdict is not None:
        raise ValueError(f"invalid tour: {verdict}")
    return tour_length_core(instance.matrix, tour.order)


def nearest_neighbor(instance: TspInstance, start: int = 0) -> Tour:
    if not 0 <= start < instance.n:
        raise ValueError(f"start vertex {start} out of range for n={instance.n}")
    return Tour(tuple(nearest_neighbor_core(instance.matrix, start)))


INSERTION_MODES = ("nearest", "farthest", "random")


def insertion_tour(instance: TspInstance, mode: str, rng: random.Random | None = None) -> Tour:
    if mode not in INSERTION_MODES:
        raise ValueError(f"unknown insertion mode {mode!r}")
    if mode == "random" and rng is None:
        raise ValueError("random insertion requires an rng")
    return Tour(tuple(insertion_tour_core(instance.matrix, mode, rng)))


def two_opt(instance: TspInstance, initial: Tour) -> Tour:
    verdict = validate_tour(instance, initial)
    if verdict is not None:
        raise ValueError(f"invalid initial tour: {verdict}")
    return Tour(tuple(two_opt_core(instance.matrix, list(initial.order))))


def christofides(instance: TspInstance, check_metric: bool = False) -> Tour:
    if check_metric and not is_metric(instance.matrix):
        warnings.warn(
            f"instance {instance.name!r} violates the triangle inequality; "
            "the 1.5x bound does not apply",
            stacklevel=2,
        )
    return Tour(tuple(christofides_core(instance.matrix)))


FIT_POLICIES = ("first", "best", "next", "worst")


def fit_packing(instance: BppInstance, policy: str) -> Packing:
    if policy not in FIT_POLICIES:
        raise ValueError(f"unknown fit policy {policy!r}")
    bins = fit_packing_core(instance.sizes, instance.capacity, policy)
    return Packing(tuple(tuple(b) for b in bins))


def is_metric(matrix: Matrix, tol: float = 1e-9) -> bool:
    n = len(matrix)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if matrix[i][j] > matrix[i][k] + matrix[k][j] + tol:
                    return False
    return True


def capacity_slack(capacity: float) -> float:
    """Shared feasibility tolerance for float bin loads."""
    return 1e-9 * (capacity if capacity > 1 else 1.0)


def validate_tour(instance: TspInstance, tour: Tour) -> str | None:
    """None when valid, else a human-readable violation."""
    order = tour.order
    if len(order) != instance.n:
        return f"tour has {len(order)} vertices, expected {instance.n}"
    seen = [False] * instance.n
    for v in order:
        if not isinstance(v, int) or isinstance(v, bool):
            return f"non-integer vertex {v!r}"
        if not 0 <= v < instance.n:
            return f"vertex {v} out of range"
        if seen[v]:
            return f"duplicate vertex {v}"
        seen[v] = True
    return None


def validate_packing(instance: BppInstance, packing: Packing) -> str | None:
    """None when valid, else a violation naming the offending bin or item."""
    placed = [0] * instance.n
    eps = capacity_slack(instance.capacity)
    for b, items in enumerate(packing.bins):
        load = 0.0
        for idx in items:
            if not isinstance(idx, int) or isinstance(idx, bool):
                return f"non-integer item index {idx!r} in bin {b}"
            if not 0 <= idx < instance.n:
                return f"unknown item {idx} in bin {b}"
            placed[idx] += 1
            if placed[idx] > 1:
                return f"item {idx} appears more than once"
            load += instance.sizes[idx]
        if load > instance.capacity + eps:
            return f"bin {b} over capacity: {load} > {instance.capacity}"
    for idx, count in enumerate(placed):
        if count == 0:
            return f"item {idx} missing"
    return None
