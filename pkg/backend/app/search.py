"""Dijkstra engine shared by the costmap search and the room-graph search."""

from __future__ import annotations

import heapq
from collections.abc import Callable, Hashable, Iterable
from typing import TypeVar

N = TypeVar("N", bound=Hashable)

Neighbors = Callable[[N], Iterable[tuple[N, float]]]


def dijkstra(
    start: N,
    goal: N,
    neighbors: Neighbors,
    lexicographic: bool = False,
) -> tuple[float, list[N]] | None:
    """Minimum-cost path from ``start`` to ``goal``, or None if unreachable.

    With ``lexicographic`` the heap is keyed on (cost, node sequence), so among
    equal-cost paths the one with the smallest node-id sequence wins. Without
    it the heap is keyed on (cost, node) and predecessors are kept per node,
    which is what the grid search needs.
    """
    if start == goal:
        return 0.0, [start]
    if lexicographic:
        return _dijkstra_paths(start, goal, neighbors)

    dist: dict[N, float] = {start: 0.0}
    prev: dict[N, N] = {}
    done: set[N] = set()
    heap: list[tuple[float, N]] = [(0.0, start)]

    while heap:
        cost, node = heapq.heappop(heap)
        if node in done:
            continue
        if node == goal:
            path = [node]
            while node != start:
                node = prev[node]
                path.append(node)
            path.reverse()
            return cost, path
        done.add(node)
        for nxt, weight in neighbors(node):
            if nxt in done:
                continue
            relaxed = cost + weight
            if nxt not in dist or relaxed < dist[nxt]:
                dist[nxt] = relaxed
                prev[nxt] = node
                heapq.heappush(heap, (relaxed, nxt))
    return None


def _dijkstra_paths(start, goal, neighbors):
    best: dict = {start: (0.0, (start,))}
    done: set = set()
    heap = [(0.0, (start,))]

    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        if node == goal:
            return cost, list(path)
        done.add(node)
        for nxt, weight in neighbors(node):
            if nxt in done:
                continue
            key = (cost + weight, path + (nxt,))
            if nxt not in best or key < best[nxt]:
                best[nxt] = key
                heapq.heappush(heap, key)
    return None
