# %% [markdown]
# Corner weights of an SF set
#
# The upper envelope max_psi psi.w over the simplex is piecewise linear. Its
# vertices (corner weights) are where a new policy can help the most.

# %%
import numpy as np

from okbasis import corner_weights, remove_dominated, scalarized_max, simplex_grid

V = np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.6], [0.4, 0.4]])
keep = remove_dominated(V)
print("kept vectors:", keep)
W = corner_weights(V[keep])
print("corner weights:\n", W)

# %%
# a gap function Delta(w) = v*(w) - max psi.w peaks at a corner
v_star = np.array([[0.9, 0.9], [1.1, 0.0]])
full = np.vstack([V, v_star])
grid = simplex_grid(2, 400)
delta = lambda ws: (ws @ full.T).max(axis=1) - (ws @ V.T).max(axis=1)
print(f"max Delta on a 401-point grid: {delta(grid).max():.6f}")
print(f"max Delta over the corners:    {delta(W).max():.6f}")

# %%
for w in W:
    val, idx = scalarized_max(V, w)
    print(f"w = {np.round(w, 4)}: best vector {idx}, value {val:.4f}")
