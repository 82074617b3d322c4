"""A seeded layout, what the o-agent sees of it, and one joint step.

    python demos/01_grid_and_view.py
"""
from sagrid.grid_world import Action, GridConfig, generate_episode, step
from sagrid.perception import encode, observe


def show(state):
    rows = []
    for a in range(state.L):
        row = ""
        for b in range(state.L):
            c = (a, b)
            row += ("o" if c == state.o_pos else "x" if c == state.x_pos and state.x_active
                    else "G" if c == state.o_goal else "#" if c in state.obstacles else ".")
        rows.append(row)
    print("\n".join(rows))


state = generate_episode(GridConfig(L=12, obstacle_density=0.15, r_obs=3), rng_seed=4)
show(state)
print()

# Put the x-agent two cells to the right of o, so it is in view unless occluded.
state.x_pos = (state.o_pos[0], min(state.o_pos[1] + 2, state.L - 1))
show(state)
obs = observe(state)
print("\nview (1 = wall, obstacle or x; occluded cells read 0):")
print(obs.occupancy)
print("x visible:", obs.x_visible, "at offset", obs.x_rel)
print("goal displacement:", obs.d_rel)
print("state vector length:", encode(obs, state.L).size)

out = step(state, Action.RIGHT, Action.LEFT)
print(f"\nafter one step: o={state.o_pos} x={state.x_pos} collided={out.collided} "
      f"collisions so far={state.collision_count}")
