# %% [markdown]
# Seeded experiments, snapshots and summaries
#
# The same functions back ``python -m okbasis run|eval|compare``.

# %%
import tempfile
from pathlib import Path

from okbasis.harness import compare_report, config_from_dict, eval_snapshot, run_experiment, summary_table

out = Path(tempfile.mkdtemp())
env = {"name": "item_grid", "width": 3, "height": 3, "items_per_type": 2, "toroidal": True}
for method in ("okb", "okb-uniform", "sfols"):
    cfg = config_from_dict({"method": method, "seeds": [0, 1, 2], "test_grid_H": 10, "environment": env})
    run_experiment(cfg, out)
print(sorted(p.name for p in out.iterdir())[:6], "...")

# %%
print(summary_table(compare_report(sorted(out.glob("*.csv")))))

# %%
rows = eval_snapshot(out / "okb_seed0.snapshot.json", H=4)
for r in rows:
    print(r.w, round(r.raw_return, 4), round(r.opt_return, 4))
