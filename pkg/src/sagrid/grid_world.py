"""Seedable L x L grid with obstacles, an observing o-agent and a scripted x-agent.

Both agents pick their actions from the same pre-move state; moves are then
resolved jointly.  A collision (same target cell, or a swap) bumps
``collision_count`` but does not block the moves and never ends the episode.
An agent that arrives at its goal leaves the grid on arrival and takes no
part in that step's collision check.
"""
from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

Cell = tuple[int, int]

O_AGENT = "o"
X_AGENT = "x"

MAX_LAYOUT_ATTEMPTS = 1000


class UnsatisfiableConfigError(RuntimeError):
    """No valid layout could be sampled for a configuration."""


class EpisodeDoneError(RuntimeError):
    """An action was submitted to a terminated episode."""


class Action(IntEnum):
    UP = 0
    LEFT = 1
    DOWN = 2
    RIGHT = 3

    @property
    def delta(self) -> Cell:
        return DELTAS[self]

    @property
    def opposite(self) -> "Action":
        return Action((self + 2) % 4)


# (d_alpha, d_beta): alpha is the row index, beta the column index.
DELTAS: dict[Action, Cell] = {
    Action.UP: (-1, 0),
    Action.LEFT: (0, -1),
    Action.DOWN: (1, 0),
    Action.RIGHT: (0, 1),
}
ACTIONS = tuple(Action)


def action_from_delta(delta: Cell) -> Action | None:
    for a, d in DELTAS.items():
        if d == tuple(delta):
            return a
    return None


@dataclass(frozen=True)
class GridConfig:
    L: int = 15
    obstacle_density: float = 0.10
    r_obs: int = 3
    max_steps: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.L < 5:
            raise ValueError(f"L must be >= 5, got {self.L}")
        if not 0.0 <= self.obstacle_density <= 0.3:
            raise ValueError(f"obstacle_density must lie in [0, 0.3], got {self.obstacle_density}")
        if self.r_obs < 0:
            raise ValueError(f"r_obs must be >= 0, got {self.r_obs}")
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", 8 * self.L)
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass
class GridState:
    config: GridConfig
    obstacles: frozenset
    o_pos: Cell
    o_goal: Cell
    x_pos: Cell
    x_goal: Cell
    t: int = 0
    done: bool = False
    collision_count: int = 0
    o_reached: bool = False
    x_active: bool = True
    x_last_action: Action | None = None
    pending: dict = field(default_factory=dict, repr=False)

    @property
    def L(self) -> int:
        return self.config.L

    def copy(self) -> "GridState":
        return copy.deepcopy(self)

    def occupancy_grid(self) -> np.ndarray:
        """Boolean L x L array, True on obstacle cells."""
        return obstacle_grid(self.obstacles, self.L)

    def layout_key(self) -> tuple:
        return (self.L, tuple(sorted(self.obstacles)), self.o_pos, self.o_goal, self.x_pos, self.x_goal)


@dataclass
class StepOutcome:
    new_state: GridState
    collided: bool = False
    reached_goal: bool = False
    blocked: bool = False


def obstacle_grid(obstacles, L: int) -> np.ndarray:
    grid = np.zeros((L, L), dtype=bool)
    if obstacles:
        idx = np.array(sorted(obstacles), dtype=int)
        grid[idx[:, 0], idx[:, 1]] = True
    return grid


def in_bounds(cell: Cell, L: int) -> bool:
    return 0 <= cell[0] < L and 0 <= cell[1] < L


def manhattan_distance(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def attempt_move(pos: Cell, action: Action, L: int, obstacles) -> tuple[Cell, bool]:
    """Target cell of a single move and whether it was blocked by a wall or obstacle."""
    d = DELTAS[Action(action)]
    target = (pos[0] + d[0], pos[1] + d[1])
    if not in_bounds(target, L) or target in obstacles:
        return pos, True
    return target, False


def reachable(grid: np.ndarray, start: Cell, goal: Cell) -> bool:
    """Flood fill over free cells (4-connected)."""
    L = grid.shape[0]
    seen = np.zeros_like(grid)
    seen[start] = True
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            return True
        for d in DELTAS.values():
            nxt = (cell[0] + d[0], cell[1] + d[1])
            if in_bounds(nxt, L) and not grid[nxt] and not seen[nxt]:
                seen[nxt] = True
                queue.append(nxt)
    return False


def generate_episode(config: GridConfig, rng_seed: int | None = None) -> GridState:
    """Sample obstacles and start/goal cells; resample until both goals are reachable."""
    seed = config.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    L = config.L
    n_obstacles = int(np.floor(config.obstacle_density * L * L))
    for _ in range(MAX_LAYOUT_ATTEMPTS):
        flat = rng.choice(L * L, size=n_obstacles, replace=False) if n_obstacles else np.empty(0, int)
        grid = np.zeros(L * L, dtype=bool)
        grid[flat] = True
        free = np.flatnonzero(~grid)
        if free.size < 4:
            continue
        picks = rng.choice(free, size=4, replace=False)
        o_pos, o_goal, x_pos, x_goal = (divmod(int(p), L) for p in picks)
        grid = grid.reshape(L, L)
        if reachable(grid, o_pos, o_goal) and reachable(grid, x_pos, x_goal):
            obstacles = frozenset(divmod(int(p), L) for p in flat)
            return GridState(config=config, obstacles=obstacles, o_pos=o_pos, o_goal=o_goal,
                             x_pos=x_pos, x_goal=x_goal)
    raise UnsatisfiableConfigError(
        f"no layout with reachable goals after {MAX_LAYOUT_ATTEMPTS} attempts for {config}")


def _agents_to_move(state: GridState) -> set[str]:
    agents = {O_AGENT}
    if state.x_active:
        agents.add(X_AGENT)
    return agents


def step_agent(state: GridState, agent: str, action: Action) -> StepOutcome:
    """Submit one agent's action for the current time step.

    The move is staged until every active agent has acted, then all moves are
    resolved together and ``t`` advances.  The returned outcome describes
    ``agent``; ``collided`` and ``reached_goal`` are only known once the step
    resolves, so they stay False for a staged-but-unresolved move.
    """
    if state.done:
        raise EpisodeDoneError("episode already terminated")
    if agent not in (O_AGENT, X_AGENT):
        raise ValueError(f"unknown agent {agent!r}")
    if agent == X_AGENT and not state.x_active:
        raise ValueError("x-agent has left the grid")
    action = Action(action)
    state.pending[agent] = action
    if set(state.pending) != _agents_to_move(state):
        pos = state.o_pos if agent == O_AGENT else state.x_pos
        _, blocked = attempt_move(pos, action, state.L, state.obstacles)
        return StepOutcome(new_state=state, blocked=blocked)
    return _resolve(state)[agent]


def _resolve(state: GridState) -> dict[str, StepOutcome]:
    L, obstacles = state.L, state.obstacles
    o_target, o_blocked = attempt_move(state.o_pos, state.pending[O_AGENT], L, obstacles)
    o_reached = o_target == state.o_goal
    collided = x_reached = x_blocked = False
    if state.x_active:
        x_action = state.pending[X_AGENT]
        x_target, x_blocked = attempt_move(state.x_pos, x_action, L, obstacles)
        x_reached = x_target == state.x_goal
        if not (o_reached or x_reached):
            swap = o_target == state.x_pos and x_target == state.o_pos
            collided = o_target == x_target or swap
        state.x_last_action = x_action
        state.x_pos = x_target
        if x_reached:
            state.x_active = False
    state.pending = {}
    state.o_pos = o_target
    if collided:
        state.collision_count += 1
    state.t += 1
    if o_reached:
        state.o_reached = True
    if o_reached or state.t >= state.config.max_steps:
        state.done = True

    outcomes = {O_AGENT: StepOutcome(state, collided, o_reached, o_blocked)}
    outcomes[X_AGENT] = StepOutcome(state, collided, x_reached, x_blocked)
    return outcomes


def step(state: GridState, o_action: Action, x_action: Action | None = None) -> StepOutcome:
    """Advance one full time step; returns the o-agent's outcome."""
    if state.done:
        raise EpisodeDoneError("episode already terminated")
    if state.x_active:
        if x_action is None:
            raise ValueError("x-agent is active and needs an action")
        step_agent(state, X_AGENT, x_action)
    return step_agent(state, O_AGENT, o_action)
