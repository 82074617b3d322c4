"""The o-agent's bounded, occluded view of the grid and its flat encoding."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid_world import Cell, GridState, in_bounds


@dataclass
class Observation:
    occupancy: np.ndarray          # (2r+1, 2r+1) of {0, 1}
    d_rel: Cell                    # goal minus o-agent position
    x_visible: bool = False
    x_rel: Cell | None = None      # x-agent minus o-agent position, when visible
    t: int = 0

    @property
    def r_obs(self) -> int:
        return (self.occupancy.shape[0] - 1) // 2


@lru_cache(maxsize=4096)
def cells_between(d_alpha: int, d_beta: int) -> tuple[Cell, ...]:
    """Offsets of the cells strictly between (0, 0) and (d_alpha, d_beta).

    A cell counts when the segment joining the two cell centres passes
    through its interior.  Integer-only traversal: the segment crosses the
    i-th row boundary at t = (2i+1) / (2|d_alpha|) and the j-th column
    boundary at t = (2j+1) / (2|d_beta|); equal crossing times are an exact
    corner, which is stepped diagonally.
    """
    na, nb = abs(d_alpha), abs(d_beta)
    sa = 1 if d_alpha > 0 else -1
    sb = 1 if d_beta > 0 else -1
    a = b = 0
    i = j = 0
    out = []
    while i < na or j < nb:
        if i < na and j < nb:
            # compare (2i+1)/(2na) against (2j+1)/(2nb)
            lhs, rhs = (2 * i + 1) * nb, (2 * j + 1) * na
        else:
            lhs, rhs = (0, 1) if i < na else (1, 0)
        if lhs <= rhs:
            a += sa
            i += 1
        if rhs <= lhs:
            b += sb
            j += 1
        out.append((a, b))
    return tuple(out[:-1])


def ray_clear(src: Cell, dst: Cell, obstacles) -> bool:
    """True when no obstacle lies strictly between ``src`` and ``dst``."""
    for da, db in cells_between(dst[0] - src[0], dst[1] - src[1]):
        if (src[0] + da, src[1] + db) in obstacles:
            return False
    return True


def observe(state: GridState, r_obs: int | None = None) -> Observation:
    r = state.config.r_obs if r_obs is None else r_obs
    L = state.L
    oa, ob = state.o_pos
    obstacles = state.obstacles
    occ = np.zeros((2 * r + 1, 2 * r + 1), dtype=np.int8)
    x_visible = False
    x_rel = None
    for i in range(-r, r + 1):
        for j in range(-r, r + 1):
            cell = (oa + i, ob + j)
            if not in_bounds(cell, L):
                occ[i + r, j + r] = 1
                continue
            if (i, j) == (0, 0) or not ray_clear(state.o_pos, cell, obstacles):
                continue
            if cell in obstacles:
                occ[i + r, j + r] = 1
            elif state.x_active and cell == state.x_pos:
                occ[i + r, j + r] = 1
                x_visible = True
                x_rel = (i, j)
    d_rel = (state.o_goal[0] - oa, state.o_goal[1] - ob)
    return Observation(occupancy=occ, d_rel=d_rel, x_visible=x_visible, x_rel=x_rel, t=state.t)


def state_dim(r_obs: int) -> int:
    return (2 * r_obs + 1) ** 2 + 2


def encode(obs: Observation, L: int) -> np.ndarray:
    """Row-major occupancy followed by the goal displacement scaled by 1/L."""
    return np.concatenate([obs.occupancy.astype(float).ravel(),
                           [obs.d_rel[0] / L, obs.d_rel[1] / L]])


def decode(vector: np.ndarray, r_obs: int, L: int) -> tuple[np.ndarray, Cell]:
    """Inverse of :func:`encode` (the visibility flags are not recoverable)."""
    side = 2 * r_obs + 1
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (state_dim(r_obs),):
        raise ValueError(f"expected length {state_dim(r_obs)}, got {vector.shape}")
    occ = vector[: side * side].reshape(side, side).astype(np.int8)
    d_rel = (int(round(vector[-2] * L)), int(round(vector[-1] * L)))
    return occ, d_rel
