"""Next-action prediction for the x-agent from its last k observed states.

Each window entry is the x-agent position scaled by 1/L followed by a one-hot
of the move that brought it there (inferred from the displacement, so a
blocked or unobserved move encodes as all zeros).  Entries are newest first
and zero-padded until k observations exist.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn_core
from .grid_world import (ACTIONS, Action, Cell, GridConfig, action_from_delta, attempt_move,
                         generate_episode)
from .nn_core import Network, TrainConfig

ENTRY_SIZE = 6
DEFAULT_K = 5


def entry_features(pos: Cell, L: int, last_action: Action | None) -> np.ndarray:
    v = np.zeros(ENTRY_SIZE)
    v[0] = pos[0] / L
    v[1] = pos[1] / L
    if last_action is not None:
        v[2 + int(last_action)] = 1.0
    return v


@dataclass
class HistoryWindow:
    L: int
    k: int = DEFAULT_K
    entries: list = field(default_factory=list)     # newest first
    positions: list = field(default_factory=list)   # raw cells, newest first
    freshness: float = 0

    def push(self, pos: Cell, last_action: Action | None = None) -> None:
        """Prepend an observation, dropping the oldest beyond k."""
        pos = tuple(pos)
        self.entries.insert(0, entry_features(pos, self.L, last_action))
        self.positions.insert(0, pos)
        del self.entries[self.k:]
        del self.positions[self.k:]

    def observe(self, pos: Cell, consecutive: bool) -> None:
        """Record a real observation; the move is inferred only from back-to-back sightings."""
        last = None
        if consecutive and self.positions:
            prev = self.positions[0]
            last = action_from_delta((pos[0] - prev[0], pos[1] - prev[1]))
        self.push(pos, last)
        self.freshness = 0

    @property
    def last_pos(self) -> Cell | None:
        return self.positions[0] if self.positions else None

    def features(self) -> np.ndarray:
        out = np.zeros(self.k * ENTRY_SIZE)
        for i, e in enumerate(self.entries):
            out[i * ENTRY_SIZE:(i + 1) * ENTRY_SIZE] = e
        return out

    def copy(self) -> "HistoryWindow":
        return HistoryWindow(self.L, self.k, [e.copy() for e in self.entries],
                             list(self.positions), self.freshness)


@dataclass
class Prediction:
    action_distribution: np.ndarray
    point_action: Action
    horizon_step: int = 1
    position: Cell | None = None   # where the point action takes the x-agent


@dataclass
class Trajectory:
    """Recorded x-agent run: n positions and the n-1 actions taken between them."""
    positions: list
    actions: list
    L: int
    obstacles: frozenset = frozenset()

    def __len__(self):
        return len(self.positions)


def window_at(traj: Trajectory, j: int, k: int) -> HistoryWindow:
    """Window whose newest entry is position ``j`` of the trajectory."""
    w = HistoryWindow(traj.L, k)
    for i in range(max(0, j - k + 1), j + 1):
        prev = traj.positions[i - 1] if i > 0 else None
        last = None
        if prev is not None:
            p = traj.positions[i]
            last = action_from_delta((p[0] - prev[0], p[1] - prev[1]))
        w.push(traj.positions[i], last)
    return w


def build_dataset(episodes, k: int = DEFAULT_K) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows of k states paired with the one-hot next action."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("no trajectories")
    xs, ys = [], []
    for traj in episodes:
        for j in range(k - 1, len(traj) - 1):
            xs.append(window_at(traj, j, k).features())
            y = np.zeros(4)
            y[int(traj.actions[j])] = 1.0
            ys.append(y)
    if not xs:
        raise ValueError(f"no trajectory longer than k={k}")
    return np.array(xs), np.array(ys)


def make_estimator_network(k: int = DEFAULT_K, hidden=(128, 128), seed: int = 0) -> Network:
    return Network([k * ENTRY_SIZE, *hidden, 4], head="softmax", seed=seed)


def successor_targets(episodes, k: int = DEFAULT_K) -> np.ndarray:
    """One-hot vectors of the unblocked actions at each window, shape (N, 4, 4).

    Blocked actions are replaced by copies of an unblocked one so every sample
    has exactly four rows.
    """
    out = []
    eye = np.eye(4)
    for traj in episodes:
        for j in range(k - 1, len(traj) - 1):
            pos = traj.positions[j]
            ok = [a for a in ACTIONS if not attempt_move(pos, a, traj.L, traj.obstacles)[1]]
            ok = ok or list(ACTIONS)
            out.append(np.stack([eye[ok[i % len(ok)]] for i in range(4)]))
    return np.array(out)


def train_estimator(episodes, k: int = DEFAULT_K, cfg: TrainConfig | None = None,
                    hidden=(128, 128)) -> tuple[Network, list[float]]:
    cfg = cfg or TrainConfig()
    episodes = list(episodes)
    X, Y = build_dataset(episodes, k)
    succ = successor_targets(episodes, k) if cfg.zeta > 0 else None
    net = make_estimator_network(k, hidden, seed=cfg.seed)
    history = nn_core.fit(net, X, Y, cfg, successors=succ)
    return net, history


def predict_next(net: Network, window: HistoryWindow, horizon_step: int = 1) -> Prediction:
    dist = np.asarray(net.forward(window.features()), dtype=float)
    return Prediction(dist, Action(int(np.argmax(dist))), horizon_step)


def rollout(net: Network, window: HistoryWindow, n: int, L: int, obstacles,
            return_window: bool = False):
    """Predict n steps ahead, feeding each predicted move back into the window."""
    if n < 1:
        raise ValueError("n must be >= 1")
    window = window.copy()
    preds = []
    for h in range(1, n + 1):
        p = predict_next(net, window, h)
        pos, blocked = attempt_move(window.last_pos, p.point_action, L, obstacles)
        p.position = pos
        window.push(pos, None if blocked else p.point_action)
        preds.append(p)
    return (preds, window) if return_window else preds


def accuracy_by_horizon(net, test_episodes, n_max: int = 10, k: int = DEFAULT_K,
                        return_counts: bool = False):
    """Fraction of rollout point predictions matching the true action, per horizon.

    Every full window of every test trajectory starts a rollout; all windows are
    advanced together so each horizon costs one batched forward pass.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    test_episodes = list(test_episodes)
    starts = [(traj, j) for traj in test_episodes for j in range(k - 1, len(traj) - 1)]
    if not starts:
        raise ValueError("empty test set")
    windows = [window_at(traj, j, k) for traj, j in starts]
    hits = np.zeros(n_max)
    counts = np.zeros(n_max)
    live = list(range(len(starts)))
    for h in range(n_max):
        live = [i for i in live if starts[i][1] + h < len(starts[i][0].actions)]
        if not live:
            break
        feats = np.stack([windows[i].features() for i in live])
        acts = np.argmax(np.atleast_2d(net.forward(feats)), axis=1)
        for i, a in zip(live, acts):
            traj, j = starts[i]
            hits[h] += a == int(traj.actions[j + h])
            counts[h] += 1
            pos, blocked = attempt_move(windows[i].last_pos, Action(int(a)), traj.L, traj.obstacles)
            windows[i].push(pos, None if blocked else Action(int(a)))
    acc = np.divide(hits, counts, out=np.full(n_max, np.nan), where=counts > 0)
    return (acc, counts) if return_counts else acc


# -- corpora -----------------------------------------------------------------

def record_x_trajectories(n_episodes: int, L: int, density: float = 0.10, p_random: float = 0.1,
                          seed: int = 0, min_length: int = DEFAULT_K + 1) -> list[Trajectory]:
    """Run the x-agent alone on fresh layouts and record its paths."""
    from .decision import x_policy

    rng = np.random.default_rng(seed)
    out = []
    i = 0
    while len(out) < n_episodes:
        state = generate_episode(GridConfig(L=L, obstacle_density=density, r_obs=0),
                                 rng_seed=[seed, i])
        i += 1
        positions = [state.x_pos]
        actions = []
        while state.x_active and state.t < state.config.max_steps:
            a = x_policy(state, rng, p_random)
            actions.append(a)
            # o-agent parked: only the x-agent moves in these recordings
            state.pending = {}
            state.x_last_action = a
            pos, _ = attempt_move(state.x_pos, a, L, state.obstacles)
            state.x_pos = pos
            state.t += 1
            positions.append(pos)
            if pos == state.x_goal:
                state.x_active = False
        if len(positions) >= min_length:
            out.append(Trajectory(positions, actions, L, state.obstacles))
    return out


def constant_action_trajectories(action: Action, L: int, length: int, rows=None) -> list[Trajectory]:
    """Empty-grid runs of an agent that repeats ``action`` (used as a learnable toy corpus)."""
    rows = range(L) if rows is None else rows
    out = []
    d = action.delta
    for r in rows:
        start = (r, 0) if d[1] > 0 else (r, L - 1) if d[1] < 0 else (0, r) if d[0] > 0 else (L - 1, r)
        pos = start
        positions, actions = [pos], []
        for _ in range(length - 1):
            pos, _ = attempt_move(pos, action, L, frozenset())
            positions.append(pos)
            actions.append(action)
        out.append(Trajectory(positions, actions, L))
    return out


# -- CSV exchange --------------------------------------------------------------

def export_dataset_csv(path, X: np.ndarray, Y: np.ndarray) -> None:
    X = np.asarray(X)
    labels = np.argmax(np.asarray(Y), axis=1) if np.ndim(Y) == 2 else np.asarray(Y, dtype=int)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(X.shape[1])] + ["target"])
        for row, y in zip(X, labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])


def import_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[-1] != "target" or (len(header) - 1) % ENTRY_SIZE:
        raise ValueError("not an estimator dataset file")
    X = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), len(header) - 1)
    Y = np.zeros((len(body), 4))
    Y[np.arange(len(body)), [int(r[-1]) for r in body]] = 1.0
    return X, Y
