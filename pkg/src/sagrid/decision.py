"""Decision stack of the o-agent plus the x-agent's scripted policy.

Mode selection: an x-agent in view hands control to the learning strategy
(Q-network or game-theoretic utility); a recently seen x-agent keeps the
estimator in the loop; otherwise the agent follows the shortest path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import nn_core
from .grid_world import ACTIONS, Action, Cell, GridState, attempt_move, step
from .nn_core import Batch, Network, TrainConfig
from .perception import Observation, encode, observe, state_dim
from .planner import WorkCounter, distance_field, next_optimal_action


class Mode(Enum):
    OPTIMAL = "OPTIMAL"
    ESTIMATE = "ESTIMATE"
    LEARN = "LEARN"


class Strategy(Enum):
    RL = "RL"
    GAME = "GAME"
    OPTIMAL = "OPTIMAL"


@dataclass(frozen=True)
class DecisionMode:
    mode: Mode
    strategy: Strategy | None = None


NEVER_SEEN = math.inf


def select_mode(obs: Observation, freshness: float, horizon: int,
                strategy: Strategy = Strategy.RL) -> DecisionMode:
    if obs.x_visible:
        return DecisionMode(Mode.LEARN, strategy)
    if freshness <= horizon:
        return DecisionMode(Mode.ESTIMATE)
    return DecisionMode(Mode.OPTIMAL)


# -- x-agent -----------------------------------------------------------------

def x_policy(state: GridState, rng: np.random.Generator, p_random: float = 0.1,
             counter: WorkCounter | None = None) -> Action | None:
    """Shortest path toward the x goal, except a random non-reversing move with
    probability ``p_random``."""
    if not state.x_active:
        return None
    u = rng.random()
    if u >= p_random:
        return next_optimal_action(state.obstacles, state.L, state.x_pos, state.x_goal, counter)
    choices = [a for a in ACTIONS
               if state.x_last_action is None or a != Action(state.x_last_action).opposite]
    return choices[int(rng.integers(len(choices)))]


# -- game-theoretic agent ----------------------------------------------------

@dataclass
class GameConfig:
    chi: float = 10.0

    def __post_init__(self):
        if self.chi <= 0:
            raise ValueError("chi must be positive")


def game_utilities(state: GridState, predicted_x_cells, cfg: GameConfig,
                   x_move: tuple[Cell, Cell] | None = None,
                   counter: WorkCounter | None = None) -> np.ndarray:
    """u(a) = -(change in path distance to goal) - chi * [predicted collision]."""
    dist = distance_field(state.obstacles, state.L, state.o_goal, counter)
    here = state.o_pos
    predicted = set(predicted_x_cells)
    utils = np.empty(4)
    for a in ACTIONS:
        cell, blocked = attempt_move(here, a, state.L, state.obstacles)
        delta_d = 0 if blocked else int(dist[cell] - dist[here])
        hit = cell in predicted
        if x_move is not None and not blocked:
            hit = hit or (cell == x_move[0] and x_move[1] == here)
        utils[a] = -delta_d - cfg.chi * hit
    return utils


def game_act(state: GridState, obs: Observation | None, predicted_x_cells,
             cfg: GameConfig | None = None, x_move: tuple[Cell, Cell] | None = None,
             counter: WorkCounter | None = None) -> Action:
    """Utility-maximising action against the predicted x cells (lowest index on ties).

    ``x_move`` is the x-agent's (current, predicted next) cell pair; moving
    into its current cell while it moves into ours counts as a collision.
    """
    cfg = cfg or GameConfig()
    utils = game_utilities(state, predicted_x_cells, cfg, x_move, counter)
    return Action(int(np.argmax(utils)))


# -- Q-learning agent --------------------------------------------------------

@dataclass
class RLAgentConfig:
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_decay: float = 0.995
    eps_floor: float = 0.05
    replay_capacity: int = 10_000
    target_update: int = 100
    reward_step: float = -0.01
    reward_collision: float = -1.0
    reward_goal: float = 1.0
    reward_blocked: float = -0.05
    hidden: tuple = (128, 128)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.eps_floor <= self.eps_start <= 1.0:
            raise ValueError("epsilon schedule must satisfy 0 <= floor <= start <= 1")

    def epsilon(self, episode: int) -> float:
        return max(self.eps_floor, self.eps_start * self.eps_decay ** episode)


def make_q_network(r_obs: int, cfg: RLAgentConfig | None = None, seed: int = 0) -> Network:
    cfg = cfg or RLAgentConfig()
    return Network([state_dim(r_obs), *cfg.hidden, 4], head="identity", seed=seed)


def rl_act(net: Network, state_vec, eps: float, rng: np.random.Generator) -> Action:
    if eps > 0 and rng.random() < eps:
        return Action(int(rng.integers(4)))
    return Action(int(np.argmax(net.forward(state_vec))))


class ReplayBuffer:
    def __init__(self, capacity: int, state_size: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_size))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, terminal) -> None:
        i = self._next
        self.states[i] = s
        self.actions[i] = int(a)
        self.rewards[i] = r
        self.next_states[i] = s2
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator):
        idx = rng.integers(self.size, size=n)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminal[idx])

    def n_bytes(self) -> int:
        return self.states.nbytes + self.next_states.nbytes + self.actions.nbytes \
            + self.rewards.nbytes + self.terminal.nbytes


def q_targets(target_net: Network, rewards, next_states, terminal, gamma: float) -> np.ndarray:
    bootstrap = target_net.forward(next_states).max(axis=1)
    return np.where(terminal, rewards, rewards + gamma * bootstrap)


def rl_train_step(net: Network, target_net: Network, replay: ReplayBuffer, cfg: RLAgentConfig,
                  train_cfg: TrainConfig, rng: np.random.Generator) -> float | None:
    """One regression step of Q(s, a) toward the bootstrapped target.

    Returns None when the buffer holds fewer than one batch.  Target-network
    syncing is the caller's job (see :class:`QLearner`).
    """
    if len(replay) < train_cfg.batch_size:
        return None
    s, a, r, s2, term = replay.sample(train_cfg.batch_size, rng)
    y = q_targets(target_net, r, s2, term, cfg.gamma)
    rows = np.arange(len(a))
    targets = np.zeros((len(a), net.n_outputs))
    targets[rows, a] = y
    mask = np.zeros_like(targets)
    mask[rows, a] = 1.0
    return nn_core.backward_and_update(net, Batch(s, targets, mask=mask), train_cfg)


class QLearner:
    """Online network, frozen target copy, replay buffer and step bookkeeping."""

    def __init__(self, net: Network, cfg: RLAgentConfig, train_cfg: TrainConfig, seed: int = 0):
        self.net = net
        self.target = net.copy()
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.replay = ReplayBuffer(cfg.replay_capacity, net.n_inputs)
        self.rng = np.random.default_rng(seed)
        self.train_steps = 0

    def train_step(self) -> float | None:
        value = rl_train_step(self.net, self.target, self.replay, self.cfg, self.train_cfg, self.rng)
        if value is None:
            return None
        self.train_steps += 1
        if self.train_steps % self.cfg.target_update == 0:
            self.target.load_parameters_from(self.net)
        return value


def reward(cfg: RLAgentConfig, collided: bool, reached: bool, blocked: bool) -> float:
    r = cfg.reward_step
    if collided:
        r += cfg.reward_collision
    if blocked:
        r += cfg.reward_blocked
    if reached:
        r += cfg.reward_goal
    return r


@dataclass
class QTrainingLog:
    episodes: int = 0
    train_steps: int = 0
    returns: list = field(default_factory=list)


def train_q_agent(learner: QLearner, episode_factory: Callable[[np.random.Generator], GridState],
                  episodes: int, seed: int = 0, x_random: float = 0.1,
                  max_episode_steps: int | None = None,
                  stop_when: Callable[[int], bool] | None = None,
                  check_every: int = 50) -> QTrainingLog:
    """Epsilon-greedy Q-learning with the o-agent acting at every step.

    ``stop_when(episode)`` is polled every ``check_every`` episodes and ends
    training early when it returns True.
    """
    rng = np.random.default_rng(seed)
    cfg = learner.cfg
    log = QTrainingLog()
    for ep in range(episodes):
        state = episode_factory(rng)
        L, r_obs = state.L, state.config.r_obs
        eps = cfg.epsilon(ep)
        s = encode(observe(state), L)
        total = 0.0
        limit = max_episode_steps or state.config.max_steps
        for _ in range(limit):
            a = rl_act(learner.net, s, eps, rng)
            xa = x_policy(state, rng, x_random)
            out = step(state, a, xa)
            r = reward(cfg, out.collided, out.reached_goal, out.blocked)
            s2 = encode(observe(state), L)
            learner.replay.add(s, a, r, s2, out.reached_goal)
            learner.train_step()
            total += r
            s = s2
            if state.done:
                break
        log.returns.append(total)
        log.episodes = ep + 1
        if stop_when is not None and (ep + 1) % check_every == 0 and stop_when(ep + 1):
            break
    log.train_steps = learner.train_steps
    return log


def greedy_rollout_length(net: Network, state: GridState, limit: int) -> int | None:
    """Steps a purely greedy Q policy needs to reach the goal, x-agent removed."""
    state = state.copy()
    state.x_active = False
    for _ in range(limit):
        a = rl_act(net, encode(observe(state), state.L), 0.0, None)
        out = step(state, a)
        if out.reached_goal:
            return state.t
        if state.done:
            return None
    return None
