# %% [markdown]
# Building a behaviour basis: OKB against SFOLS
#
# SFOLS learns a base policy for every vertex of the convex coverage set.
# OKB only learns one when the keyboard provably cannot express a task.

# %%
import numpy as np

from okbasis import build_corridors, build_item_grid, okb_run, sfols_run
from okbasis.basis import optimal_value
from okbasis.geometry import simplex_grid
from okbasis.harness import zero_shot_return

for tor in (False, True):
    for seed in range(3):
        mcp, phi, _ = build_item_grid(3, 3, 2, toroidal=tor, seed=seed)
        okb, sf = okb_run(mcp, phi), sfols_run(mcp, phi)
        gap = max(optimal_value(mcp, phi, w) - zero_shot_return(mcp, phi, okb.basis, okb.meta.chord_set, w)
                  for w in simplex_grid(2, 20))
        print(f"toroidal={tor!s:5} seed={seed}: OKB {len(okb.basis)} policies, "
              f"CCS {len(sf.basis)}, worst zero-shot gap {gap:.1e}")

# %%
# independent corridors: a base policy that never walks a corridor says nothing about it
mcp, phi = build_corridors([[1.0, -1.0], [-1.0, 1.0]])
print("corridors: OKB", len(okb_run(mcp, phi).basis), "CCS", len(sfols_run(mcp, phi).basis))

# %%
# iteration log of one run
mcp, phi, _ = build_item_grid(3, 3, 2, toroidal=False, seed=2)
for entry in okb_run(mcp, phi).log:
    print({k: entry[k] for k in ("iter", "n_policies", "n_support", "selected_w")})
