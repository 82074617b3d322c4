"""Shortest 4-connected paths on the obstacle grid (the optimal baseline).

Distances are computed with Dijkstra from the goal.  Paths are then read off
greedily, always taking the first action in (up, left, down, right) order that
lowers the distance, which makes plans deterministic and makes
``next_optimal_action`` agree with the first step of ``shortest_path``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .grid_world import ACTIONS, DELTAS, Action, Cell, in_bounds

UNREACHABLE = -1


class NoPathError(RuntimeError):
    pass


@dataclass
class Plan:
    actions: list[Action]
    cost: int


@dataclass
class WorkCounter:
    """Portable per-episode work tallies.

    A distance field is charged the first time this counter asks for it, even
    if the process-wide memo already holds it, so counts do not depend on what
    ran earlier in the process.
    """
    planner_expansions: int = 0
    forward_passes: int = 0
    cells_observed: int = 0
    train_steps: int = 0
    _fields: set = field(default_factory=set, repr=False)

    def charge_field(self, key, expansions: int) -> None:
        if key not in self._fields:
            self._fields.add(key)
            self.planner_expansions += expansions


@lru_cache(maxsize=256)
def _distance_field(obstacles: frozenset, L: int, goal: Cell) -> tuple[np.ndarray, int]:
    dist = np.full((L, L), UNREACHABLE, dtype=np.int64)
    if goal in obstacles or not in_bounds(goal, L):
        return dist, 0
    best = {goal: 0}
    heap = [(0, goal)]
    expansions = 0
    while heap:
        d, cell = heapq.heappop(heap)
        if dist[cell] != UNREACHABLE:
            continue
        dist[cell] = d
        expansions += 1
        for da, db in DELTAS.values():
            nxt = (cell[0] + da, cell[1] + db)
            if not in_bounds(nxt, L) or nxt in obstacles or dist[nxt] != UNREACHABLE:
                continue
            if d + 1 < best.get(nxt, np.inf):
                best[nxt] = d + 1
                heapq.heappush(heap, (d + 1, nxt))
    dist.setflags(write=False)
    return dist, expansions


def distance_field(obstacles, L: int, goal: Cell, counter: WorkCounter | None = None) -> np.ndarray:
    """Shortest-path distance from every cell to ``goal`` (-1 where unreachable)."""
    key = obstacles if isinstance(obstacles, frozenset) else frozenset(obstacles)
    goal = tuple(goal)
    dist, expansions = _distance_field(key, L, goal)
    if counter is not None:
        counter.charge_field((key, L, goal), expansions)
    return dist


def _greedy_action(dist: np.ndarray, cell: Cell, L: int) -> Action:
    here = dist[cell]
    for a in ACTIONS:
        da, db = DELTAS[a]
        nxt = (cell[0] + da, cell[1] + db)
        if in_bounds(nxt, L) and dist[nxt] == here - 1:
            return a
    raise NoPathError(f"no descending neighbour at {cell}")


def shortest_path(obstacles, L: int, start: Cell, goal: Cell,
                  counter: WorkCounter | None = None) -> Plan:
    dist = distance_field(obstacles, L, goal, counter)
    if dist[start] == UNREACHABLE:
        raise NoPathError(f"{goal} unreachable from {start}")
    actions = []
    cell = tuple(start)
    while cell != tuple(goal):
        a = _greedy_action(dist, cell, L)
        actions.append(a)
        da, db = DELTAS[a]
        cell = (cell[0] + da, cell[1] + db)
    return Plan(actions=actions, cost=len(actions))


def next_optimal_action(obstacles, L: int, src: Cell, goal: Cell,
                        counter: WorkCounter | None = None) -> Action:
    dist = distance_field(obstacles, L, goal, counter)
    if dist[src] == UNREACHABLE:
        raise NoPathError(f"{goal} unreachable from {src}")
    if tuple(src) == tuple(goal):
        raise ValueError("already at goal")
    return _greedy_action(dist, tuple(src), L)
