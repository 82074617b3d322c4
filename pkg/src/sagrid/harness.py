"""Experiment orchestration: model training, episode runs, sweeps over grid size
and observation radius, the comparison against shortest paths, and the
estimator accuracy/risk study.

All randomness derives from ``numpy.random.default_rng`` seeded with integer
lists, so every episode is a pure function of (config, strategy, models, seed,
episode index).  Layout seeds do not include the strategy or radius, which
makes the strategies (and radii) face identical environments.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import resource
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, nn_core
from .decision import (NEVER_SEEN, GameConfig, Mode, QLearner, RLAgentConfig, Strategy,
                       game_act, make_q_network, rl_act, select_mode, train_q_agent, x_policy)
from .estimator import (DEFAULT_K, HistoryWindow, accuracy_by_horizon, record_x_trajectories,
                        rollout, train_estimator)
from .grid_world import GridConfig, GridState, UnsatisfiableConfigError, generate_episode, step
from .nn_core import Network, TrainConfig
from .perception import encode, observe
from .planner import WorkCounter, distance_field, next_optimal_action
from .risk import horizon_risk, reliable_horizon

SWEEP_HEADER = ["L", "r_obs", "strategy", "episodes", "mean_steps", "std_steps", "failures",
                "total_collisions", "mean_planner_expansions", "mean_forward_passes",
                "mean_wallclock_ms"]

# stream tags keep training, evaluation and corpus seeds disjoint
_EVAL, _TRAIN_RL, _CORPUS_TRAIN, _CORPUS_TEST, _CORPUS_DET = 0, 1, 2, 3, 4
_MAX_LAYOUT_RETRIES = 100


# -- configuration -------------------------------------------------------------

@dataclass
class SweepSpec:
    grid_sizes: list = field(default_factory=lambda: list(range(15, 101, 5)))
    radii: list = field(default_factory=lambda: list(range(0, 8)))
    runs_per_cell: int = 500
    strategies: list = field(default_factory=lambda: ["RL", "GAME", "OPTIMAL"])
    seed: int = 0
    obstacle_density: float = 0.10
    x_random: float = 0.1
    measure_wallclock: bool = False
    workers: int = 1

    def __post_init__(self):
        self.grid_sizes = [int(L) for L in self.grid_sizes]
        self.radii = [int(r) for r in self.radii]
        self.strategies = [Strategy(s).value if not isinstance(s, Strategy) else s.value
                           for s in self.strategies]
        if not self.grid_sizes or not self.radii or not self.strategies:
            raise ValueError("grid_sizes, radii and strategies must be non-empty")
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be >= 1")


@dataclass
class RLTraining:
    episodes: int = 400
    learning_rate: float = 1e-3
    batch_size: int = 32
    goal_radius: int = 8
    agent: RLAgentConfig = field(default_factory=RLAgentConfig)


@dataclass
class EstimatorSettings:
    enabled: bool = True
    k: int = DEFAULT_K
    corpus_L: int = 30
    train_episodes: int = 300
    test_episodes: int = 100
    n_max: int = 10
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.05, epochs=20))


@dataclass
class RiskSettings:
    threshold: float = 0.5
    severity: float = 1.0


@dataclass
class ExperimentConfig:
    sweep: SweepSpec = field(default_factory=SweepSpec)
    rl: RLTraining = field(default_factory=RLTraining)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    game: GameConfig = field(default_factory=GameConfig)
    risk: RiskSettings = field(default_factory=RiskSettings)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(cls, data):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValueError(f"expected a mapping for {cls.__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    nested = {"agent": RLAgentConfig, "train": TrainConfig}
    kwargs = {}
    for key, value in data.items():
        sub = nested.get(key)
        if sub is not None and isinstance(value, dict):
            value = _build(sub, value)
        if key == "hidden":
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    sections = {"sweep": SweepSpec, "rl": RLTraining, "estimator": EstimatorSettings,
                "game": GameConfig, "risk": RiskSettings}
    unknown = set(data) - set(sections) - {"seed"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    cfg = ExperimentConfig(**{k: _build(cls, data.get(k)) for k, cls in sections.items()})
    if "seed" in data:
        cfg.sweep.seed = int(data["seed"])
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        import yaml
        data = yaml.safe_load(text)
    return config_from_dict(data)


# -- models ------------------------------------------------------------------

@dataclass
class Models:
    q_nets: dict = field(default_factory=dict)     # (L, r_obs) -> Network
    estimator: Network | None = None
    horizon: int = 0
    k: int = DEFAULT_K

    def q_net(self, L: int, r_obs: int) -> Network:
        try:
            return self.q_nets[(L, r_obs)]
        except KeyError:
            raise KeyError(f"no Q-network trained for L={L}, r_obs={r_obs}") from None

    def n_bytes(self) -> int:
        total = sum(n.n_bytes() for n in self.q_nets.values())
        return total + (self.estimator.n_bytes() if self.estimator is not None else 0)


def encounter_factory(L: int, r_obs: int, density: float, goal_radius: int):
    """Training episodes centred on an encounter: the o-agent's goal lies within
    ``goal_radius`` path steps and the x-agent starts inside the view window."""

    def make(rng: np.random.Generator) -> GridState:
        cfg = GridConfig(L=L, obstacle_density=density, r_obs=r_obs,
                         max_steps=4 * goal_radius + 8)
        while True:
            state = generate_episode(cfg, rng_seed=int(rng.integers(2 ** 62)))
            dist = distance_field(state.obstacles, L, state.o_pos)
            near = np.argwhere((dist > 0) & (dist <= goal_radius))
            o_goal = tuple(int(v) for v in near[rng.integers(len(near))]) if len(near) else None
            oa, ob = state.o_pos
            r = max(r_obs, 1)
            window = [(oa + i, ob + j) for i in range(-r, r + 1) for j in range(-r, r + 1)]
            window = [c for c in window if 0 <= c[0] < L and 0 <= c[1] < L and dist[c] > 0
                      and c != o_goal]
            if o_goal is None or not window:
                continue
            x_pos = window[int(rng.integers(len(window)))]
            x_dist = distance_field(state.obstacles, L, state.x_goal)
            if x_dist[x_pos] <= 0 or state.x_goal in (o_goal, state.o_pos):
                continue
            state.o_goal, state.x_pos = o_goal, x_pos
            return state

    return make


def train_q_network(L: int, r_obs: int, settings: RLTraining, density: float, seed: int) -> tuple[Network, int]:
    """Pre-train one Q-network for a (grid size, radius) bucket; returns (net, train steps)."""
    net = make_q_network(r_obs, settings.agent, seed=hash_seed(seed, _TRAIN_RL, L, r_obs))
    learner = QLearner(net, settings.agent,
                       TrainConfig(learning_rate=settings.learning_rate, batch_size=settings.batch_size),
                       seed=hash_seed(seed, _TRAIN_RL, L, r_obs, 1))
    factory = encounter_factory(L, r_obs, density, settings.goal_radius)
    log = train_q_agent(learner, factory, settings.episodes,
                        seed=hash_seed(seed, _TRAIN_RL, L, r_obs, 2))
    return net, log.train_steps


def train_rl_models(cfg: ExperimentConfig, grid_sizes=None, radii=None) -> dict:
    spec = cfg.sweep
    out = {}
    for L in grid_sizes or spec.grid_sizes:
        for r in radii or spec.radii:
            out[(L, r)], _ = train_q_network(L, r, cfg.rl, spec.obstacle_density, spec.seed)
    return out


def estimator_corpora(cfg: ExperimentConfig) -> dict:
    """Training, held-out and fully deterministic x-agent trajectory sets."""
    est, spec = cfg.estimator, cfg.sweep
    return {
        "train": record_x_trajectories(est.train_episodes, est.corpus_L, spec.obstacle_density,
                                       spec.x_random, seed=hash_seed(spec.seed, _CORPUS_TRAIN)),
        "heldout": record_x_trajectories(est.test_episodes, est.corpus_L, spec.obstacle_density,
                                         spec.x_random, seed=hash_seed(spec.seed, _CORPUS_TEST)),
        # no obstacles, no random moves: the next action follows from the history
        "deterministic": record_x_trajectories(est.test_episodes, est.corpus_L, 0.0, 0.0,
                                               seed=hash_seed(spec.seed, _CORPUS_DET)),
    }


def train_estimator_model(cfg: ExperimentConfig, corpora: dict | None = None) -> tuple[Network, int]:
    """Train the estimator and derive the trusted rollout horizon from held-out risk."""
    corpora = corpora or estimator_corpora(cfg)
    est = cfg.estimator
    net, _ = train_estimator(corpora["train"], est.k, est.train)
    acc = accuracy_by_horizon(net, corpora["heldout"], est.n_max, est.k)
    horizon = reliable_horizon(horizon_risk(np.nan_to_num(acc), cfg.risk.severity), cfg.risk.threshold)
    return net, horizon


def prepare_models(cfg: ExperimentConfig, model_dir=None, strategies=None, grid_sizes=None,
                   radii=None) -> Models:
    """Load models from ``model_dir`` when present, otherwise train (and save) them."""
    strategies = strategies or cfg.sweep.strategies
    models = Models(k=cfg.estimator.k)
    model_dir = Path(model_dir) if model_dir is not None else None
    needs_learning = any(s != "OPTIMAL" for s in strategies)
    if cfg.estimator.enabled and needs_learning:
        models.estimator, models.horizon = _load_or_train_estimator(cfg, model_dir)
    if "RL" in strategies:
        for L in grid_sizes or cfg.sweep.grid_sizes:
            for r in radii or cfg.sweep.radii:
                path = model_dir / f"q_L{L}_r{r}.txt" if model_dir else None
                if path is not None and path.exists():
                    models.q_nets[(L, r)] = nn_core.load(path)
                    continue
                net, _ = train_q_network(L, r, cfg.rl, cfg.sweep.obstacle_density, cfg.sweep.seed)
                models.q_nets[(L, r)] = net
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    nn_core.save(net, path)
    return models


def _load_or_train_estimator(cfg: ExperimentConfig, model_dir: Path | None):
    if model_dir is not None:
        path, meta = model_dir / "estimator.txt", model_dir / "estimator.json"
        if path.exists() and meta.exists():
            info = json.loads(meta.read_text(encoding="utf-8"))
            return nn_core.load(path), int(info["horizon"])
    net, horizon = train_estimator_model(cfg)
    if model_dir is not None:
        model_dir.mkdir(parents=True, exist_ok=True)
        nn_core.save(net, model_dir / "estimator.txt")
        (model_dir / "estimator.json").write_text(
            json.dumps({"horizon": horizon, "k": cfg.estimator.k}) + "\n", encoding="utf-8")
    return net, horizon


# -- episodes ------------------------------------------------------------------

def hash_seed(*parts) -> int:
    """Stable 63-bit seed from integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0] >> 1)


@dataclass
class EpisodeRecord:
    episode_id: str
    L: int
    r_obs: int
    strategy: str
    steps: int
    failed: bool
    collisions: int
    steps_optimal_mode: int = 0
    steps_estimate_mode: int = 0
    steps_learn_mode: int = 0
    planner_expansions: int = 0
    forward_passes: int = 0
    cells_observed: int = 0
    train_steps: int = 0
    model_bytes: int = 0
    layout_hash: str = ""
    wallclock_ms: float = math.nan
    peak_rss_kb: float = math.nan


def episode_id(L: int, r_obs: int, index: int) -> str:
    return f"L{L}-r{r_obs}-{index}"


def parse_episode_id(eid: str) -> tuple[int, int, int]:
    try:
        L, r, i = eid.split("-")
        return int(L[1:]), int(r[1:]), int(i)
    except ValueError:
        raise ValueError(f"bad episode id {eid!r}; expected like 'L15-r3-7'") from None


def layout_for(L: int, r_obs: int, density: float, seed: int, index: int) -> GridState:
    """Evaluation layout; independent of strategy and radius."""
    cfg = GridConfig(L=L, obstacle_density=density, r_obs=r_obs)
    for attempt in range(_MAX_LAYOUT_RETRIES):
        try:
            return generate_episode(cfg, rng_seed=[seed, _EVAL, L, index, attempt])
        except UnsatisfiableConfigError:
            continue
    raise UnsatisfiableConfigError(f"no layout for L={L}, density={density}")


def layout_hash(state: GridState) -> str:
    return hashlib.sha256(repr(state.layout_key()).encode()).hexdigest()[:16]


class OAgentController:
    """The o-agent's per-step decision flow (observe, pick mode, act)."""

    def __init__(self, strategy: Strategy, models: Models, L: int, r_obs: int,
                 game_cfg: GameConfig, counter: WorkCounter):
        self.strategy = strategy
        self.models = models
        self.L = L
        self.r_obs = r_obs
        self.game_cfg = game_cfg
        self.counter = counter
        self.window = HistoryWindow(L, models.k)
        self.freshness = NEVER_SEEN
        self._forecast = None
        self.q_net = models.q_net(L, r_obs) if strategy is Strategy.RL and r_obs > 0 else None

    @property
    def horizon(self) -> int:
        return self.models.horizon if self.models.estimator is not None else 0

    def act(self, state: GridState):
        if self.strategy is Strategy.OPTIMAL:
            return self._optimal(state), Mode.OPTIMAL
        obs = observe(state)
        self.counter.cells_observed += obs.occupancy.size
        if obs.x_visible:
            x_cell = (state.o_pos[0] + obs.x_rel[0], state.o_pos[1] + obs.x_rel[1])
            self.window.observe(x_cell, consecutive=self.freshness == 0)
            self.freshness = 0
            self._forecast = None
        elif self.freshness != NEVER_SEEN:
            self.freshness += 1
        mode = select_mode(obs, self.freshness, self.horizon, self.strategy).mode
        if mode is Mode.OPTIMAL:
            return self._optimal(state), mode
        if mode is Mode.ESTIMATE:
            return self._estimate(state), mode
        if self.strategy is Strategy.RL:
            self.counter.forward_passes += 1
            return rl_act(self.q_net, encode(obs, self.L), 0.0, None), mode
        predicted = {x_cell}
        x_move = None
        if self.models.estimator is not None:
            self.counter.forward_passes += 1
            nxt = rollout(self.models.estimator, self.window, 1, self.L, state.obstacles)[0].position
            predicted.add(nxt)
            x_move = (x_cell, nxt)
        return game_act(state, obs, predicted, self.game_cfg, x_move, self.counter), mode

    def _optimal(self, state):
        return next_optimal_action(state.obstacles, self.L, state.o_pos, state.o_goal, self.counter)

    def _estimate(self, state):
        # one rollout per loss of sight, reused until the x-agent is seen again
        if self._forecast is None:
            n = self.horizon + 1
            self._forecast = rollout(self.models.estimator, self.window, n, self.L, state.obstacles)
            self.counter.forward_passes += n
        f = int(self.freshness)
        cur = self._forecast[f - 1].position
        nxt = self._forecast[min(f, len(self._forecast) - 1)].position
        return game_act(state, None, {cur, nxt}, self.game_cfg, (cur, nxt), self.counter)


def run_episode(L: int, r_obs: int, strategy, models: Models | None, seed: int, index: int,
                density: float = 0.10, x_random: float = 0.1, game_cfg: GameConfig | None = None,
                measure_wallclock: bool = False, trace: list | None = None) -> EpisodeRecord:
    """Play one evaluation episode under the o-agent controller.

    ``trace``, when given, receives one dict per time step.
    """
    strategy = Strategy(strategy)
    models = models or Models()
    game_cfg = game_cfg or GameConfig()
    t0 = time.perf_counter()
    state = layout_for(L, r_obs, density, seed, index)
    lhash = layout_hash(state)
    counter = WorkCounter()
    controller = OAgentController(strategy, models, L, r_obs, game_cfg, counter)
    x_rng = np.random.default_rng([seed, _EVAL, L, index, 1_000_003])
    modes = {m: 0 for m in Mode}
    while not state.done:
        a, mode = controller.act(state)
        xa = x_policy(state, x_rng, x_random)
        if trace is not None:
            trace.append({"t": state.t, "o": state.o_pos, "x": state.x_pos if state.x_active else None,
                          "mode": mode.value, "o_action": a.name,
                          "x_action": xa.name if xa is not None else None})
        modes[mode] += 1
        step(state, a, xa)
    failed = not state.o_reached
    rec = EpisodeRecord(
        episode_id=episode_id(L, r_obs, index), L=L, r_obs=r_obs, strategy=strategy.value,
        steps=state.t, failed=failed, collisions=state.collision_count,
        steps_optimal_mode=modes[Mode.OPTIMAL], steps_estimate_mode=modes[Mode.ESTIMATE],
        steps_learn_mode=modes[Mode.LEARN], planner_expansions=counter.planner_expansions,
        forward_passes=counter.forward_passes, cells_observed=counter.cells_observed,
        model_bytes=models.n_bytes(), layout_hash=lhash)
    if measure_wallclock:
        rec.wallclock_ms = (time.perf_counter() - t0) * 1000.0
        rec.peak_rss_kb = float(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)
    return rec


# -- sweeps ------------------------------------------------------------------

@dataclass
class CellAggregate:
    L: int
    r_obs: int
    strategy: str
    episodes: int
    mean_steps: float
    std_steps: float
    failures: int
    total_collisions: int
    mean_planner_expansions: float
    mean_forward_passes: float
    mean_wallclock_ms: float
    mean_cells_observed: float = 0.0

    def row(self) -> list[str]:
        return [str(self.L), str(self.r_obs), self.strategy, str(self.episodes),
                _fmt(self.mean_steps), _fmt(self.std_steps), str(self.failures),
                str(self.total_collisions), _fmt(self.mean_planner_expansions),
                _fmt(self.mean_forward_passes), _fmt(self.mean_wallclock_ms)]


@dataclass
class SweepResult:
    cells: list
    records: list
    provenance: dict

    def cell(self, L: int, r_obs: int, strategy: str) -> CellAggregate:
        for c in self.cells:
            if (c.L, c.r_obs, c.strategy) == (L, r_obs, Strategy(strategy).value):
                return c
        raise KeyError((L, r_obs, strategy))


def _fmt(x: float) -> str:
    return "nan" if x is None or not np.isfinite(x) else f"{x:.6f}"


def aggregate(records) -> list[CellAggregate]:
    """Reduce episode records per (L, r_obs, strategy); failures are excluded
    from the step statistics but counted everywhere else."""
    order = {s.value: i for i, s in enumerate(Strategy)}
    groups: dict = {}
    for rec in sorted(records, key=lambda r: (r.L, r.r_obs, order[r.strategy], r.episode_id)):
        groups.setdefault((rec.L, rec.r_obs, rec.strategy), []).append(rec)
    cells = []
    for (L, r, s), recs in groups.items():
        ok = np.array([x.steps for x in recs if not x.failed], dtype=float)
        wall = np.array([x.wallclock_ms for x in recs], dtype=float)
        cells.append(CellAggregate(
            L=L, r_obs=r, strategy=s, episodes=len(recs),
            mean_steps=float(ok.mean()) if ok.size else math.nan,
            std_steps=float(ok.std()) if ok.size else math.nan,
            failures=sum(x.failed for x in recs),
            total_collisions=sum(x.collisions for x in recs),
            mean_planner_expansions=float(np.mean([x.planner_expansions for x in recs])),
            mean_forward_passes=float(np.mean([x.forward_passes for x in recs])),
            mean_wallclock_ms=float(wall.mean()) if np.isfinite(wall).all() else math.nan,
            mean_cells_observed=float(np.mean([x.cells_observed for x in recs]))))
    return cells


def _run_task(args):
    return run_episode(*args)


def run_records(cfg: ExperimentConfig, models: Models, grid_sizes=None, radii=None,
                strategies=None, runs: int | None = None) -> list[EpisodeRecord]:
    spec = cfg.sweep
    tasks = [(L, r, s, models, spec.seed, i, spec.obstacle_density, spec.x_random, cfg.game,
              spec.measure_wallclock)
             for L in (grid_sizes or spec.grid_sizes)
             for r in (radii or spec.radii)
             for s in (strategies or spec.strategies)
             for i in range(runs or spec.runs_per_cell)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=16))
    else:
        records = [_run_task(t) for t in tasks]
    return sorted(records, key=lambda r: (r.L, r.r_obs, r.strategy, r.episode_id))


def provenance(cfg: ExperimentConfig) -> dict:
    return {"seed": cfg.sweep.seed, "config_hash": cfg.digest(), "version": __version__,
            "obstacle_density": cfg.sweep.obstacle_density}


def run_sweep(cfg: ExperimentConfig, models: Models | None = None, out_dir=None) -> SweepResult:
    """Evaluate every (L, r_obs, strategy) cell; optionally write CSV outputs."""
    if models is None:
        models = prepare_models(cfg, Path(out_dir) / "models" if out_dir else None)
    records = run_records(cfg, models)
    result = SweepResult(aggregate(records), records, provenance(cfg))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(out / "sweep.csv", result.cells)
        write_records_csv(out / "episodes.csv", records)
        write_long_csv(out / "fig4_long.csv", ["L", "r_obs", "strategy"],
                       [((c.L, c.r_obs, c.strategy),
                         {"mean_steps": c.mean_steps, "total_collisions": c.total_collisions,
                          "mean_planner_expansions": c.mean_planner_expansions,
                          "mean_forward_passes": c.mean_forward_passes,
                          "mean_cells_observed": c.mean_cells_observed})
                        for c in result.cells])
        (out / "provenance.json").write_text(json.dumps(result.provenance, sort_keys=True, indent=2)
                                             + "\n", encoding="utf-8")
    return result


def write_sweep_csv(path, cells) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for c in cells:
            w.writerow(c.row())


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_records_csv(path, records) -> None:
    names = [f.name for f in fields(EpisodeRecord)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for rec in records:
            row = []
            for n in names:
                v = getattr(rec, n)
                row.append(_fmt(v) if isinstance(v, float) else int(v) if isinstance(v, bool) else v)
            w.writerow(row)


def write_long_csv(path, key_names, rows) -> None:
    """Long format: key columns, then one (metric, value) pair per line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(key_names) + ["metric", "value"])
        for keys, metrics in rows:
            for name, value in metrics.items():
                w.writerow(list(keys) + [name, _fmt(float(value))])


# -- studies -------------------------------------------------------------------

@dataclass
class ComparisonRow:
    L: int
    r_obs: int
    strategy: str
    paired_episodes: int
    mean_steps: float
    mean_steps_optimal: float
    ratio: float


def compare_to_optimal(cfg: ExperimentConfig, models: Models | None = None, out_dir=None,
                       records=None) -> list[ComparisonRow]:
    """Mean steps of each strategy over mean optimal steps, on shared layouts.

    Only layouts where both runs reached the goal enter a ratio.
    """
    spec = cfg.sweep
    strategies = list(dict.fromkeys(list(spec.strategies) + ["OPTIMAL"]))
    if records is None:
        if models is None:
            models = prepare_models(cfg, Path(out_dir) / "models" if out_dir else None, strategies)
        records = run_records(cfg, models, strategies=strategies)
    by_key = {(r.L, r.r_obs, r.strategy, r.episode_id): r for r in records}
    rows = []
    for L in spec.grid_sizes:
        for r in spec.radii:
            for s in strategies:
                pairs = []
                for i in range(spec.runs_per_cell):
                    eid = episode_id(L, r, i)
                    a, b = by_key.get((L, r, s, eid)), by_key.get((L, r, "OPTIMAL", eid))
                    if a is not None and b is not None and not a.failed and not b.failed:
                        pairs.append((a.steps, b.steps))
                steps = np.array(pairs, dtype=float).reshape(-1, 2)
                m_s = float(steps[:, 0].mean()) if len(steps) else math.nan
                m_o = float(steps[:, 1].mean()) if len(steps) else math.nan
                rows.append(ComparisonRow(L, r, s, len(steps), m_s, m_o, m_s / m_o if len(steps) else math.nan))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["L", "r_obs", "strategy", "paired_episodes", "mean_steps",
                        "mean_steps_optimal", "ratio"])
            for row in rows:
                w.writerow([row.L, row.r_obs, row.strategy, row.paired_episodes, _fmt(row.mean_steps),
                            _fmt(row.mean_steps_optimal), _fmt(row.ratio)])
        write_long_csv(out / "fig6_long.csv", ["L", "r_obs", "strategy"],
                       [((row.L, row.r_obs, row.strategy),
                         {"mean_steps": row.mean_steps, "ratio_to_optimal": row.ratio})
                        for row in rows])
    return rows


@dataclass
class EstimationStudy:
    accuracy: dict        # corpus -> per-horizon accuracy
    samples: dict         # corpus -> per-horizon sample counts
    risk: dict            # corpus -> per-horizon risk
    reliable_horizon: dict
    threshold: float


def estimation_study(cfg: ExperimentConfig, n_max: int | None = None, out_dir=None,
                     corpora: dict | None = None, net: Network | None = None) -> EstimationStudy:
    """Accuracy and risk of iterated predictions, 1..n_max steps ahead."""
    est = cfg.estimator
    n_max = n_max or est.n_max
    corpora = corpora or estimator_corpora(cfg)
    if net is None:
        net, _ = train_estimator(corpora["train"], est.k, est.train)
    acc, counts, risks, horizons = {}, {}, {}, {}
    for name in ("heldout", "deterministic"):
        a, c = accuracy_by_horizon(net, corpora[name], n_max, est.k, return_counts=True)
        acc[name], counts[name] = a, c
        risks[name] = horizon_risk(np.nan_to_num(a), cfg.risk.severity)
        horizons[name] = reliable_horizon(risks[name], cfg.risk.threshold)
    study = EstimationStudy(acc, counts, risks, horizons, cfg.risk.threshold)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "estimation.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["corpus", "horizon", "samples", "accuracy", "risk", "threshold", "within_threshold"])
            for name in acc:
                for h in range(n_max):
                    w.writerow([name, h + 1, int(counts[name][h]), _fmt(acc[name][h]),
                                _fmt(risks[name][h]), _fmt(cfg.risk.threshold),
                                int(h < horizons[name])])
        write_long_csv(out / "fig5_long.csv", ["corpus", "horizon"],
                       [((name, h + 1), {"accuracy": acc[name][h], "risk": risks[name][h]})
                        for name in acc for h in range(n_max)])
        (out / "reliable_horizon.json").write_text(
            json.dumps({"threshold": cfg.risk.threshold, "reliable_horizon": horizons},
                       sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return study


def replay(cfg: ExperimentConfig, eid: str, strategy, models: Models | None = None):
    """Re-run one evaluation episode by id; returns (record, per-step trace)."""
    L, r, i = parse_episode_id(eid)
    strategy = Strategy(strategy)
    if models is None:
        models = prepare_models(cfg, strategies=[strategy.value], grid_sizes=[L], radii=[r])
    trace: list = []
    rec = run_episode(L, r, strategy, models, cfg.sweep.seed, i, cfg.sweep.obstacle_density,
                      cfg.sweep.x_random, cfg.game, trace=trace)
    return rec, trace


def expected_manhattan(L: int) -> float:
    """Mean Manhattan distance between two independent uniform cells of an L x L grid."""
    return 2.0 * (L * L - 1) / (3.0 * L)

