# %% [markdown]
# Option keyboard: chords over a fixed basis
#
# A meta-policy picks a chord z per state; the agent then acts with GPI for z.
# Training is exact: it solves the MDP restricted to the actions some chord can
# reach. The advantage test then says whether the keyboard could do better.

# %%
import numpy as np

from okbasis import (
    TaskWeight,
    advantage_report,
    build_counterexample,
    build_item_grid,
    counterexample_reward,
    default_chord_grid,
    evaluate_flat_policy,
    gpi_policy,
    ok_policy,
    policy_successor_features,
    solve_task,
    task_reward,
    train_meta_policy,
)
from okbasis.planner import new_policy

mcp, phi, layout = build_item_grid(3, 3, 1, seed=0)
basis = [new_policy(mcp, phi, w) for w in ([1.0, 0.0], [0.0, 1.0])]
Z = default_chord_grid(2)

# %%
w = TaskWeight([0.5, 0.5])
r = task_reward(phi, w)
meta = train_meta_policy(mcp, phi, basis, [w], Z)
v_ok = evaluate_flat_policy(mcp, r, ok_policy(basis, meta, w))[1]
v_gpi = evaluate_flat_policy(mcp, r, gpi_policy(basis, w.vector))[1]
print(f"keyboard {v_ok:.4f}  GPI {v_gpi:.4f}  optimum {solve_task(mcp, r).v_mu:.4f}")

# %%
# the counterexample: a4 is the optimal arm for a state-dependent reward but no chord reaches it
cmcp, cphi = build_counterexample()
arms = []
for a in range(4):
    pol = np.zeros(cmcp.n_states, dtype=int)
    pol[0] = a
    arms.append(policy_successor_features(cmcp, cphi, pol))
reward = counterexample_reward(cmcp, cphi)
m = train_meta_policy(cmcp, cphi, arms, reward, Z)
rep = advantage_report(cmcp, reward, arms, m, reward)
print(f"keyboard value {m.values[0]:.2f} vs optimum {solve_task(cmcp, reward.reward).v_mu:.2f}")
print("witnesses (state, action):", rep.witnesses, " A =", rep.advantages[0, 3])
