# %% [markdown]
# A non-linear task: collect every type-0 item before any type-1 item
#
# The reward depends on which items are left, so it is not phi.w for any w.
# A fixed-weight GPI policy cannot switch preference midway; the keyboard can.

# %%
import numpy as np

from okbasis import build_item_grid, evaluate_flat_policy, gpi_policy, okb_run, ok_policy, solve_task
from okbasis import sequential_item_reward, train_meta_policy
from okbasis.geometry import simplex_grid

mcp, phi, layout = build_item_grid(3, 3, 2, toroidal=True, seed=2)
print("items (row, col, type):", layout.items, " start:", layout.start)
res = okb_run(mcp, phi)
reward = sequential_item_reward(mcp, phi, layout, first_type=0)

# %%
v_star = solve_task(mcp, reward.reward).v_mu
meta = train_meta_policy(mcp, phi, res.basis, reward, res.meta.chord_set)
v_ok = evaluate_flat_policy(mcp, reward.reward, ok_policy(res.basis, meta, reward))[1]
gpi = [evaluate_flat_policy(mcp, reward.reward, gpi_policy(res.basis, w))[1] for w in simplex_grid(2, 100)]
print(f"optimum {v_star:.4f}  keyboard {v_ok:.4f}  best fixed-w GPI {max(gpi):.4f}")

# %%
# chords along the greedy rollout: the preference flips once type-0 items are gone
from okbasis.keyboard import chord_trajectory

for step, s, z, pol, a in chord_trajectory(mcp, res.basis, meta, reward):
    cell, mask = layout.decode(s)
    print(f"step {step}: cell {divmod(cell, 3)}, items left {mask:04b}, chord {np.round(z, 3)}, action {a}")
