import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bfs_distance, flood_connected
from sagrid.grid_world import (Action, EpisodeDoneError, GridConfig, GridState, O_AGENT, X_AGENT,
                               UnsatisfiableConfigError, attempt_move, generate_episode,
                               manhattan_distance, step, step_agent)


def make_state(o=(3, 3), x=(10, 10), L=15, obstacles=(), o_goal=(14, 14), x_goal=(0, 0), **kw):
    cfg = GridConfig(L=L, obstacle_density=0.0, r_obs=kw.pop("r_obs", 2), max_steps=kw.pop("max_steps", None))
    return GridState(cfg, frozenset(obstacles), o, o_goal, x, x_goal, **kw)


@pytest.mark.parametrize("kw", [dict(L=4), dict(obstacle_density=0.31), dict(obstacle_density=-0.1),
                                dict(r_obs=-1), dict(max_steps=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GridConfig(**kw)


def test_default_max_steps():
    assert GridConfig(L=20).max_steps == 160


def test_action_geometry():
    assert [a.delta for a in Action] == [(-1, 0), (0, -1), (1, 0), (0, 1)]
    assert Action.UP.opposite is Action.DOWN
    assert Action.LEFT.opposite is Action.RIGHT


def test_zero_density_layout():
    s = generate_episode(GridConfig(L=15, obstacle_density=0.0, seed=7), rng_seed=7)
    assert not s.obstacles
    assert len({s.o_pos, s.o_goal, s.x_pos, s.x_goal}) == 4


def test_generation_is_deterministic():
    cfg = GridConfig(L=15, obstacle_density=0.1, seed=7)
    assert generate_episode(cfg, 7) == generate_episode(cfg, 7)
    assert generate_episode(cfg).layout_key() == generate_episode(cfg, 7).layout_key()


@pytest.mark.parametrize("seed", range(25))
def test_generated_layout_valid(seed):
    s = generate_episode(GridConfig(L=15, obstacle_density=0.1), seed)
    assert len(s.obstacles) == int(0.1 * 225)
    for c in (s.o_pos, s.o_goal, s.x_pos, s.x_goal):
        assert c not in s.obstacles
        assert 0 <= c[0] < 15 and 0 <= c[1] < 15
    assert flood_connected(s.obstacles, 15, s.o_pos, s.o_goal)
    assert flood_connected(s.obstacles, 15, s.x_pos, s.x_goal)


def test_unsatisfiable_config(monkeypatch):
    import sagrid.grid_world as gw
    monkeypatch.setattr(gw, "reachable", lambda *a: False)
    with pytest.raises(UnsatisfiableConfigError):
        generate_episode(GridConfig(L=5), 0)


def test_unit_move_right():
    s = make_state()
    out = step(s, Action.RIGHT, Action.UP)
    assert s.o_pos == (3, 4) and not out.blocked and s.t == 1


def test_boundary_clamp():
    s = make_state(o=(0, 0))
    out = step(s, Action.UP, Action.UP)
    assert s.o_pos == (0, 0) and out.blocked


def test_obstacle_blocks():
    assert attempt_move((3, 3), Action.DOWN, 15, {(4, 3)}) == ((3, 3), True)


def test_done_episode_rejects_actions():
    s = make_state(o=(3, 3), o_goal=(3, 4))
    out = step(s, Action.RIGHT, Action.UP)
    assert out.reached_goal and s.done and s.o_reached
    with pytest.raises(EpisodeDoneError):
        step(s, Action.RIGHT, Action.UP)


def test_max_steps_terminates():
    s = make_state(max_steps=3)
    for _ in range(3):
        step(s, Action.UP, Action.UP)
    assert s.done and not s.o_reached


def test_staged_step_resolves_jointly():
    s = make_state()
    first = step_agent(s, X_AGENT, Action.LEFT)
    assert s.t == 0 and s.x_pos == (10, 10) and not first.collided
    step_agent(s, O_AGENT, Action.DOWN)
    assert s.t == 1 and s.x_pos == (10, 9) and s.o_pos == (4, 3)


def test_x_leaves_on_goal():
    s = make_state(x=(5, 5), x_goal=(5, 6))
    out = step_agent(s, X_AGENT, Action.RIGHT)
    step_agent(s, O_AGENT, Action.UP)
    assert not s.x_active
    with pytest.raises(ValueError):
        step_agent(s, X_AGENT, Action.UP)
    step(s, Action.UP)  # o alone from now on
    assert s.t == 2 and not out.collided


def _collision_rule(o, x, ao, ax, L=15):
    """Reference: same target cell or swapped cells, goals not involved."""
    to = (o[0] + ao.delta[0], o[1] + ao.delta[1])
    tx = (x[0] + ax.delta[0], x[1] + ax.delta[1])
    to = to if 0 <= to[0] < L and 0 <= to[1] < L else o
    tx = tx if 0 <= tx[0] < L and 0 <= tx[1] < L else x
    return to == tx or (to == x and tx == o)


@pytest.mark.parametrize("ao,ax", list(itertools.product(Action, Action)))
def test_sixteen_joint_outcomes(ao, ax):
    o, x = (5, 5), (5, 6)
    s = make_state(o=o, x=x)
    out = step(s, ao, ax)
    expected = _collision_rule(o, x, ao, ax)
    assert out.collided == expected
    assert s.collision_count == int(expected)
    # moves go through either way
    assert s.o_pos == (o[0] + ao.delta[0], o[1] + ao.delta[1])
    assert s.x_pos == (x[0] + ax.delta[0], x[1] + ax.delta[1])


def test_sixteen_outcome_table():
    hits = {(ao, ax) for ao in Action for ax in Action
            if step(make_state(o=(5, 5), x=(5, 6)), ao, ax).collided}
    # row neighbours share no free cell one move away, so only the swap collides
    assert hits == {(Action.RIGHT, Action.LEFT)}


def test_moving_into_stationary_x_blocked_by_wall():
    # x pushes against the boundary and stays; o steps into its cell
    s = make_state(o=(1, 0), x=(0, 0), x_goal=(14, 0))
    out = step(s, Action.UP, Action.UP)
    assert out.collided and s.collision_count == 1


def test_goal_arrival_excludes_collision():
    s = make_state(o=(5, 5), o_goal=(5, 6), x=(5, 7))
    out = step(s, Action.RIGHT, Action.LEFT)
    assert out.reached_goal and not out.collided


def test_manhattan_examples():
    assert manhattan_distance((0, 0), (0, 0)) == 0
    assert manhattan_distance((1, 2), (4, 6)) == 7


@given(st.tuples(st.integers(0, 9), st.integers(0, 9)), st.tuples(st.integers(0, 9), st.integers(0, 9)))
def test_manhattan_matches_bfs(a, b):
    assert manhattan_distance(a, b) == bfs_distance(frozenset(), 10, a, b)


cells = st.tuples(st.integers(0, 7), st.integers(0, 7))


@settings(max_examples=200)
@given(cells, cells, st.sampled_from(list(Action)), st.sampled_from(list(Action)))
def test_collision_symmetry(o, x, ao, ax):
    if o == x:
        return
    a = step(make_state(o=o, x=x, L=8, o_goal=(-1, -1), x_goal=(-1, -1)), ao, ax).collided
    b = step(make_state(o=x, x=o, L=8, o_goal=(-1, -1), x_goal=(-1, -1)), ax, ao).collided
    assert a == b


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.sampled_from(list(Action)), min_size=1, max_size=40))
def test_determinism_containment_conservation(seed, actions):
    cfg = GridConfig(L=10, obstacle_density=0.1)
    runs = []
    for _ in range(2):
        s = generate_episode(cfg, seed)
        obstacles = s.obstacles
        path = []
        for i, a in enumerate(actions):
            if s.done:
                break
            step(s, a, actions[-1 - i] if s.x_active else None)
            assert s.obstacles == obstacles
            for c in (s.o_pos, s.x_pos):
                assert 0 <= c[0] < 10 and 0 <= c[1] < 10
                assert c not in obstacles
            assert 0 <= s.t <= cfg.max_steps
            path.append((s.o_pos, s.x_pos, s.collision_count))
        runs.append(path)
    assert runs[0] == runs[1]


def test_occupancy_grid():
    s = make_state(L=6, obstacles=[(1, 2), (4, 4)])
    g = s.occupancy_grid()
    assert g.dtype == bool and g.sum() == 2 and g[1, 2] and g[4, 4]
    assert np.array_equal(g, s.copy().occupancy_grid())
