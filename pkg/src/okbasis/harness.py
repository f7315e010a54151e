"""Seeded experiment runner: configs, zero-shot evaluation, exports and summaries.

Every (method, seed) cell writes three files into the output directory::

    <method>_seed<k>.csv           eval rows, one per (iteration, test weight)
    <method>_seed<k>.log.jsonl     one JSON object per algorithm iteration
    <method>_seed<k>.snapshot.json final basis as plain text (action tables, SF vectors)
    trajectories/<method>_seed<k>_task<j>.csv   chord rollouts, when trajectory_tasks is set

Floats are written with ``repr`` so files round-trip exactly and two runs of
the same config are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisConfig, BasisResult, okb_run, sfols_run
from .geometry import chord_grid, default_chord_grid, simplex_grid
from .keyboard import ChordSet, advantage_report, chord_trajectory, train_meta_policy, write_chord_trajectory
from .mdp import (
    TaskWeight,
    build_corridors,
    build_counterexample,
    build_item_grid,
    build_random_mcp,
    counterexample_reward,
    task_reward,
)
from .planner import NumericalError, evaluate_flat_policy, gpi_policy, policy_successor_features, solve_task

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

THREADS_ENV = "OKBASIS_THREADS"
SNAPSHOT_VERSION = 1
METHODS = ("okb", "okb-uniform", "sfols")
BOOTSTRAP_SEED = 12345


class ConfigError(ValueError):
    """Bad or inconsistent experiment configuration (CLI exit code 2)."""


def _item_grid(params, seed):
    p = dict(params)
    p.setdefault("seed", seed)
    mcp, phi, _ = build_item_grid(**p)
    return mcp, phi, p


def _random(params, seed):
    p = dict(params)
    p.setdefault("seed", seed)
    return (*build_random_mcp(**p), p)


def _corridors(params, seed):
    p = dict(params)
    return (*build_corridors(**p), p)


def _counterexample(params, seed):
    p = dict(params)
    return (*build_counterexample(**p), p)


# name -> builder(params, run_seed) returning (mcp, phi, resolved params)
ENVIRONMENTS = {
    "item_grid": _item_grid,
    "random": _random,
    "corridors": _corridors,
    "counterexample": _counterexample,
}


def make_environment(name: str, params: dict, seed: int = 0):
    """Build a named environment. Seeded builders use ``seed`` unless params pin one."""
    if name not in ENVIRONMENTS:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    try:
        return ENVIRONMENTS[name](params, seed)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for environment {name!r}: {exc}") from exc


@dataclass
class ExperimentConfig:
    env: str
    env_params: dict = field(default_factory=dict)
    method: str = "okb"
    seeds: list = field(default_factory=lambda: [0])
    d: int | None = None  # optional check against the environment's feature dim
    test_grid_H: int = 20
    chord_H: int | None = None  # None: default_chord_grid(d)
    chord_signed: bool = True
    tol: float = 1e-6
    plan_tol: float = 1e-10
    prune_tol: float = 1e-9
    max_iters: int = 20
    okls_iters: int | None = 5
    output_dir: str = "results"
    trajectory_tasks: list = field(default_factory=list)

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {sorted(ENVIRONMENTS)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if any(not isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be integers")
        if self.test_grid_H < 1 or self.max_iters < 1:
            raise ConfigError("test_grid_H and max_iters must be positive")
        if self.okls_iters is not None and self.okls_iters < 1:
            raise ConfigError("okls_iters must be positive (0 in a config file runs OK-LS to convergence)")

    def chords(self, d: int) -> np.ndarray:
        if self.chord_H is None:
            return default_chord_grid(d)
        return chord_grid(d, self.chord_H, self.chord_signed)

    def basis_config(self, d: int, seed: int) -> BasisConfig:
        return BasisConfig(
            chords=self.chords(d),
            tol=self.tol,
            plan_tol=self.plan_tol,
            prune_tol=self.prune_tol,
            max_iters=self.max_iters,
            okls_iters=self.okls_iters,
            selection="uniform" if self.method == "okb-uniform" else "advantage",
            seed=seed,
        )


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Flatten the TOML layout ([environment], [chords], [tolerances]) into a config."""
    raw = dict(raw)
    env = dict(raw.pop("environment", {}))
    if "name" not in env:
        raise ConfigError("config needs [environment] with a name")
    kw = {"env": env.pop("name"), "env_params": env}
    chords = raw.pop("chords", {})
    if "H" in chords:
        kw["chord_H"] = chords["H"]
    if "signed" in chords:
        kw["chord_signed"] = chords["signed"]
    tols = raw.pop("tolerances", {})
    for src, dst in (("advantage", "tol"), ("plan", "plan_tol"), ("prune", "prune_tol")):
        if src in tols:
            kw[dst] = tols[src]
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw.update(raw)
    if kw.get("okls_iters") == 0:  # TOML has no null
        kw["okls_iters"] = None
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return config_from_dict(raw)


# evaluation

@dataclass(frozen=True)
class EvalRow:
    method: str
    seed: int
    iteration: int
    w: tuple
    raw_return: float
    norm_return: float
    opt_return: float


def csv_header(d: int) -> list[str]:
    return ["method", "seed", "iteration"] + [f"w_{i}" for i in range(d)] + [
        "raw_return", "norm_return", "opt_return"]


def return_range(mcp, phi, w, tol=1e-10) -> tuple[float, float]:
    """(worst, best) return over all deterministic policies for task w, both by exact VI."""
    r = task_reward(phi, w)
    best = solve_task(mcp, r, tol).v_mu
    worst = -solve_task(mcp, -r, tol).v_mu
    return worst, best


def normalise(raw: float, lo: float, hi: float) -> float:
    if hi - lo < 1e-12:
        return 1.0
    return float(min(1.0, max(0.0, (raw - lo) / (hi - lo))))


def zero_shot_return(mcp, phi, basis, chords, w, mode: str = "ok", tol: float = 1e-10) -> float:
    """Return of the keyboard (or plain GPI) on task w without learning any base policy."""
    w = np.asarray(w, dtype=float)
    if mode == "gpi":
        return evaluate_flat_policy(mcp, task_reward(phi, w), gpi_policy(basis, w))[1]
    if mode != "ok":
        raise ValueError(f"unknown evaluation mode {mode!r}")
    meta = train_meta_policy(mcp, phi, basis, [TaskWeight(w)], chords, tol)
    return meta.values[0]


def evaluate_zero_shot(result: BasisResult, test_weights, mcp, phi, method="okb", seed=0,
                       iteration=None, mode=None, ranges=None, tol=1e-10) -> list[EvalRow]:
    """Eval rows for the final basis of ``result`` on every test weight.

    ``mode`` defaults to ``gpi`` for sfols and ``ok`` otherwise. The chord
    set is the result's own (grid plus the directions of its support tasks).
    """
    mode = mode or ("gpi" if method == "sfols" else "ok")
    it = len(result.history) - 1 if iteration is None else iteration
    return _rows(mcp, phi, result.basis, result.meta.chord_set, test_weights, method, seed, it,
                 mode, ranges, tol)


def _rows(mcp, phi, basis, chords, test_weights, method, seed, iteration, mode, ranges, tol):
    rows = []
    for j, w in enumerate(test_weights):
        lo, hi = ranges[j] if ranges is not None else return_range(mcp, phi, w, tol)
        raw = zero_shot_return(mcp, phi, basis, chords, w, mode, tol)
        rows.append(EvalRow(method, seed, iteration, tuple(map(float, w)), raw,
                            normalise(raw, lo, hi), hi))
    return rows


def write_rows(path, rows, d: int) -> None:
    with open(path, "w", newline="") as fh:
        write_rows_to(fh, rows, d)


def write_rows_to(fh, rows, d: int) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(csv_header(d))
    for r in rows:
        out.writerow([r.method, r.seed, r.iteration] + [repr(x) for x in r.w]
                     + [repr(float(r.raw_return)), repr(float(r.norm_return)), repr(float(r.opt_return))])


def read_rows(path) -> list[EvalRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path} is empty") from None
        d = len(header) - 6
        if d < 1 or header != csv_header(d):
            raise ConfigError(f"{path}: unexpected header {header}")
        rows = []
        for line in reader:
            if len(line) != len(header):
                raise ConfigError(f"{path}: row has {len(line)} fields, expected {len(header)}")
            rows.append(EvalRow(line[0], int(line[1]), int(line[2]),
                                tuple(float(x) for x in line[3:3 + d]),
                                float(line[-3]), float(line[-2]), float(line[-1])))
    return rows


# running

def _run_method(cfg: ExperimentConfig, mcp, phi, seed: int) -> BasisResult:
    bc = cfg.basis_config(phi.dim, seed)
    if cfg.method == "sfols":
        return sfols_run(mcp, phi, bc)
    return okb_run(mcp, phi, bc)


def _meta_history(result: BasisResult, cfg: ExperimentConfig, d: int):
    """Chord set in force at every iteration of the run."""
    if result.meta_history:
        return [m.chord_set for m in result.meta_history]
    return [ChordSet(cfg.chords(d))] * len(result.history)


def snapshot_dict(cfg: ExperimentConfig, env_params: dict, seed: int, result: BasisResult) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "method": cfg.method,
        "seed": seed,
        "environment": {"name": cfg.env, "params": env_params},
        "tolerances": {"advantage": cfg.tol, "plan": cfg.plan_tol, "prune": cfg.prune_tol},
        "truncated": result.truncated,
        "n_solves": result.n_solves,
        "chords": [list(map(float, z)) for z in result.meta.chord_set.chords],
        "base_policies": [
            {"actions": [int(a) for a in rec.policy],
             "sf_vector": [float(x) for x in rec.sf_vector],
             "source_task": None if rec.source_task is None else list(rec.source_task.w)}
            for rec in result.basis
        ],
        "weight_support": [list(t.w) for t in result.weight_support],
        "partial_ccs": [[float(x) for x in v] for v in np.atleast_2d(result.partial_ccs)]
        if len(result.partial_ccs) else [],
    }


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def run_cell(cfg: ExperimentConfig, seed: int, out_dir: Path) -> Path:
    mcp, phi, env_params = make_environment(cfg.env, cfg.env_params, seed)
    if cfg.d is not None and cfg.d != phi.dim:
        raise ConfigError(f"config d={cfg.d} but environment {cfg.env!r} has d={phi.dim}")
    result = _run_method(cfg, mcp, phi, seed)
    test = simplex_grid(phi.dim, cfg.test_grid_H)
    ranges = [return_range(mcp, phi, w, cfg.plan_tol) for w in test]
    mode = "gpi" if cfg.method == "sfols" else "ok"
    chord_sets = _meta_history(result, cfg, phi.dim)
    rows = []
    for it, basis in enumerate(result.history):
        rows += _rows(mcp, phi, basis, chord_sets[it], test, cfg.method, seed, it, mode, ranges,
                      cfg.plan_tol)
    stem = out_dir / f"{cfg.method}_seed{seed}"
    write_rows(stem.with_suffix(".csv"), rows, phi.dim)
    with open(f"{stem}.log.jsonl", "w") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry, allow_nan=False) + "\n")
    with open(f"{stem}.snapshot.json", "w") as fh:
        fh.write(_dump(snapshot_dict(cfg, env_params, seed, result)))
    if cfg.trajectory_tasks and cfg.method != "sfols":
        (out_dir / "trajectories").mkdir(exist_ok=True)
        for j, w in enumerate(cfg.trajectory_tasks):
            task = TaskWeight(w)
            meta = train_meta_policy(mcp, phi, result.basis, [task], result.meta.chord_set, cfg.plan_tol)
            write_chord_trajectory(out_dir / "trajectories" / f"{stem.name}_task{j}.csv",
                                   chord_trajectory(mcp, result.basis, meta, task))
    return stem


def n_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> Path:
    """Run every seed of the config; cells run on ``$OKBASIS_THREADS`` worker threads."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = min(n_threads(), len(cfg.seeds))
    if workers == 1:
        for s in cfg.seeds:
            run_cell(cfg, s, out)
    else:
        with ThreadPoolExecutor(workers) as pool:
            # list() re-raises the first failure
            list(pool.map(lambda s: run_cell(cfg, s, out), cfg.seeds))
    return out


# snapshots

def load_snapshot(path):
    """Rebuild (mcp, phi, basis, chords, snapshot) from a snapshot file.

    SFs are recomputed exactly from the stored action tables and checked
    against the stored SF vectors.
    """
    try:
        with open(path) as fh:
            snap = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc}") from exc
    if snap.get("version") != SNAPSHOT_VERSION:
        raise ConfigError(f"snapshot version {snap.get('version')!r} is not supported")
    env = snap["environment"]
    mcp, phi, _ = make_environment(env["name"], env["params"], snap.get("seed", 0))
    basis = []
    for entry in snap["base_policies"]:
        src = entry.get("source_task")
        rec = policy_successor_features(mcp, phi, entry["actions"],
                                        source_task=None if src is None else TaskWeight(src))
        if np.max(np.abs(rec.sf_vector - np.asarray(entry["sf_vector"]))) > 1e-9:
            raise NumericalError("snapshot SF vector does not match its action table")
        basis.append(rec)
    return mcp, phi, basis, ChordSet(np.asarray(snap["chords"])), snap


def eval_snapshot(path, H: int, mode: str | None = None) -> list[EvalRow]:
    mcp, phi, basis, chords, snap = load_snapshot(path)
    mode = mode or ("gpi" if snap["method"] == "sfols" else "ok")
    test = simplex_grid(phi.dim, H)
    return _rows(mcp, phi, basis, chords, test, snap["method"], snap["seed"],
                 len(basis) - 1, mode, None, snap["tolerances"]["plan"])


# comparison

@dataclass(frozen=True)
class SummaryRow:
    method: str
    iteration: int
    n_seeds: int
    mean: float
    ci_low: float
    ci_high: float


def bootstrap_ci(values, n_boot: int = 2000, seed: int = BOOTSTRAP_SEED, level: float = 0.95):
    """Percentile bootstrap CI of the mean; a fresh generator per call keeps it deterministic."""
    values = np.asarray(values, dtype=float)
    if len(values) == 1:
        return float(values[0]), float(values[0])
    rng = np.random.default_rng(seed)
    means = values[rng.integers(0, len(values), size=(n_boot, len(values)))].mean(axis=1)
    a = (1.0 - level) / 2.0
    return float(np.quantile(means, a)), float(np.quantile(means, 1.0 - a))


def compare_report(paths, n_boot: int = 2000) -> list[SummaryRow]:
    """Mean normalised return with a bootstrap 95% CI per (method, iteration).

    A (method, seed) run that stopped early keeps its final basis, so its last
    iteration is carried forward up to the longest run of the same method.
    """
    per_run = {}  # (method, seed) -> {iteration: mean norm return}
    dims = set()
    for p in paths:
        rows = read_rows(p)
        for r in rows:
            dims.add(len(r.w))
            per_run.setdefault((r.method, r.seed), {}).setdefault(r.iteration, []).append(r.norm_return)
    if len(dims) > 1:
        raise ConfigError(f"inputs mix feature dimensions {sorted(dims)}")
    curves = {k: {it: float(np.mean(v)) for it, v in its.items()} for k, its in per_run.items()}
    methods = sorted({m for m, _ in curves})
    out = []
    for m in methods:
        runs = [c for (mm, _), c in sorted(curves.items()) if mm == m]
        last = max(max(c) for c in runs)
        for it in range(last + 1):
            vals = []
            for c in runs:
                upto = [i for i in c if i <= it]
                if upto:
                    vals.append(c[max(upto)])
            if not vals:
                continue
            lo, hi = bootstrap_ci(vals, n_boot)
            out.append(SummaryRow(m, it, len(vals), float(np.mean(vals)), lo, hi))
    return out


def summary_csv(rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["method", "iteration", "n_seeds", "mean", "ci_low", "ci_high"])
    for r in rows:
        out.writerow([r.method, r.iteration, r.n_seeds, repr(r.mean), repr(r.ci_low), repr(r.ci_high)])
    return buf.getvalue()


def summary_table(rows) -> str:
    head = ("method", "iter", "seeds", "mean", "95% CI")
    body = [(r.method, str(r.iteration), str(r.n_seeds), f"{r.mean:.4f}",
             f"[{r.ci_low:.4f}, {r.ci_high:.4f}]") for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(x.ljust(wd) for x, wd in zip(line, widths)).rstrip() for line in (head, *body)]
    return "\n".join(lines) + "\n"


# counterexample

def arm_basis(mcp, phi):
    """One base policy per arm of the counterexample: take a_i at s0."""
    basis = []
    for a in range(mcp.n_actions):
        pol = np.zeros(mcp.n_states, dtype=int)
        pol[0] = a
        basis.append(policy_successor_features(mcp, phi, pol))
    return basis


def counterexample_demo(n_chords: int = 10_000, chords=None) -> dict:
    """Check that arm a4 is never a GPI choice, so no keyboard is optimal on the
    state-dependent task, and that the advantage test points at (s0, a4)."""
    mcp, phi = build_counterexample()
    basis = arm_basis(mcp, phi)
    angles = 2.0 * np.pi * np.arange(n_chords) / n_chords
    Z = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    psi = np.stack([rec.sf_table[0, a] for a, rec in enumerate(basis)])  # (4, d)
    vals = Z @ psi.T
    strict_a4 = (vals[:, 3] > np.delete(vals, 3, axis=1).max(axis=1)).sum()
    gpi_a4 = sum(gpi_policy(basis, z)[0] == 3 for z in Z)
    reward = counterexample_reward(mcp, phi)
    v_star = solve_task(mcp, reward.reward).v_mu
    Zk = chords if chords is not None else default_chord_grid(phi.dim)
    meta = train_meta_policy(mcp, phi, basis, reward, Zk)
    rep = advantage_report(mcp, reward, basis, meta, reward)
    return {
        "n_chords": int(n_chords),
        "strict_a4_chords": int(strict_a4),
        "gpi_a4_chords": int(gpi_a4),
        "v_star": float(v_star),
        "v_ok": float(meta.values[0]),
        "gap": float(v_star - meta.values[0]),
        "witnesses": rep.witnesses,
        "a4_advantage": float(rep.advantages[0, 3]),
        "ok_a": int(strict_a4) == 0 and gpi_a4 == 0,
        "ok_b": float(v_star - meta.values[0]) >= 0.5,
        "ok_c": (0, 3) in rep.witnesses and rep.advantages[0, 3] > 0,
    }


__all__ = [
    "ConfigError", "ENVIRONMENTS", "EvalRow", "ExperimentConfig", "SummaryRow", "THREADS_ENV",
    "bootstrap_ci", "compare_report", "config_from_dict", "counterexample_demo", "eval_snapshot",
    "evaluate_zero_shot", "load_config", "load_snapshot", "make_environment", "read_rows",
    "return_range", "run_experiment", "summary_csv", "summary_table", "zero_shot_return",
]
