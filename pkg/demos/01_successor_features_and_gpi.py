# %% [markdown]
# Successor features and GPI on a tiny MDP
#
# The counterexample MDP has one decision: four arms out of s0, each ending in
# a terminal state with a fixed feature vector. A policy's successor features
# tell us its value on every linear task at once.

# %%
import numpy as np

from okbasis import build_counterexample, gpi_action, policy_successor_features, solve_task, task_reward

mcp, phi = build_counterexample()
print("features on the four arms:\n", phi.features[0, np.arange(4), np.arange(1, 5)])

# %%
# one base policy per arm
basis = []
for a in range(4):
    pol = np.zeros(mcp.n_states, dtype=int)
    pol[0] = a
    basis.append(policy_successor_features(mcp, phi, pol))
for a, rec in enumerate(basis):
    print(f"arm a{a + 1}: psi = {rec.sf_vector}")

# %%
# GPI picks the best (policy, action) pair for a weight; VI agrees.
for w in ([1.0, 0.0], [0.5, 0.5], [0.0, 1.0]):
    a = gpi_action(basis, 0, w)
    v = solve_task(mcp, task_reward(phi, w)).v_mu
    print(f"w={w}: GPI picks a{a + 1}, value {basis[a].sf_vector @ w:.2f}, VI optimum {v:.2f}")

# %%
# a4 sits inside the hull of the other arms, so no direction ever makes it the choice
angles = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
picked = {gpi_action(basis, 0, [np.cos(t), np.sin(t)]) for t in angles}
print("arms GPI ever selects:", sorted(f"a{a + 1}" for a in picked))
