"""Option keyboard: meta-policies over chords, their successor features and advantages.

A meta-policy is trained exactly. Chord z in state s induces the action
``gpi_action(basis, s, z)``, so the chord-level MDP is the original MDP with
each state's actions restricted to the set reachable through some chord;
solving that restricted MDP gives the best expressible behaviour.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .mdp import FeatureMap, MDPError, NonlinearReward, TabularMCP, TaskWeight, reachable_states, task_reward
from .planner import (
    TIE_TOL,
    SFRecord,
    evaluate_flat_policy,
    gpi_action,
    gpi_action_table,
    policy_successor_features,
    solve_task,
)

# Advantages below this magnitude are floating-point noise from exact solves.
ADVANTAGE_NOISE = 1e-12
UNIT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ChordSet:
    chords: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.chords, dtype=float))
        if np.any(np.abs(np.linalg.norm(Z, axis=1) - 1.0) > UNIT_TOL):
            raise ValueError("chords must be unit vectors")
        for i in range(len(Z)):
            if np.any(np.max(np.abs(Z[:i] - Z[i]), axis=1) < 1e-9):
                raise ValueError(f"chord {i} duplicates an earlier chord")
        Z.setflags(write=False)
        object.__setattr__(self, "chords", Z)

    def __len__(self):
        return len(self.chords)

    def index_of(self, z) -> int | None:
        hits = np.flatnonzero(np.max(np.abs(self.chords - np.asarray(z)), axis=1) < 1e-9)
        return int(hits[0]) if len(hits) else None

    def with_chord(self, z) -> "ChordSet":
        if self.index_of(z) is not None:
            return self
        return ChordSet(np.vstack([self.chords, z]))


@dataclass(frozen=True, eq=False)
class MetaPolicy:
    """omega(s, task) as a (S, n_tasks) table of chord indices."""

    chord_choice: np.ndarray
    tasks: tuple
    chord_set: ChordSet
    values: tuple = field(default=())  # v_mu of the induced policy per task

    def task_index(self, task) -> int:
        for i, t in enumerate(self.tasks):
            if _same_task(t, task):
                return i
        raise KeyError(f"task {task!r} is not registered with this meta-policy")

    def has_task(self, task) -> bool:
        return any(_same_task(t, task) for t in self.tasks)

    def chord(self, s: int, task) -> np.ndarray:
        return self.chord_set.chords[self.chord_choice[s, self.task_index(task)]]


def _same_task(a, b) -> bool:
    if isinstance(a, NonlinearReward) or isinstance(b, NonlinearReward):
        return a is b
    return np.max(np.abs(np.asarray(a.w if isinstance(a, TaskWeight) else a)
                         - np.asarray(b.w if isinstance(b, TaskWeight) else b))) < 1e-9


def empty_meta_policy(n_states: int, chords) -> MetaPolicy:
    return MetaPolicy(np.zeros((n_states, 0), dtype=int), (), ChordSet(chords))


def _as_task(t):
    if isinstance(t, (TaskWeight, NonlinearReward)):
        return t
    return TaskWeight(t)


def _reward_of(phi: FeatureMap, task) -> np.ndarray:
    if isinstance(task, NonlinearReward):
        return task.reward
    return task_reward(phi, task)


def _train_one(mcp, phi, basis, chords: ChordSet, task, tol):
    actions = gpi_action_table(basis, chords.chords)  # (S, K)
    allowed = np.zeros((mcp.n_states, mcp.n_actions), dtype=bool)
    np.put_along_axis(allowed, actions, True, axis=1)
    plan = solve_task(mcp, _reward_of(phi, task), tol, allowed=allowed)
    q_chord = np.take_along_axis(plan.q_star, actions, axis=1)
    best = q_chord.max(axis=1, keepdims=True)
    choice = np.argmax(q_chord >= best - TIE_TOL, axis=1)
    return choice, plan.v_mu


def train_meta_policy(mcp: TabularMCP, phi: FeatureMap, basis, tasks, chords,
                      tol: float = 1e-10, meta: MetaPolicy | None = None) -> MetaPolicy:
    """Exactly optimal chord table for every task, relative to the chord set.

    For a linear task w the normalised weight w/|w| is added to the chord
    set, so the keyboard can always fall back to plain GPI. Passing an
    existing ``meta`` keeps its chord set and appends the new tasks; tasks
    already present are retrained against ``basis``.
    """
    if len(basis) == 0:
        raise ValueError("train_meta_policy needs a non-empty basis")
    if isinstance(tasks, (NonlinearReward, TaskWeight)):
        tasks = [tasks]
    tasks = [_as_task(t) for t in tasks]
    chord_set = meta.chord_set if meta is not None else (
        chords if isinstance(chords, ChordSet) else ChordSet(chords))
    if chord_set.chords.shape[1] != phi.dim:
        raise MDPError(f"chord dim {chord_set.chords.shape[1]} does not match feature dim {phi.dim}")
    all_tasks = list(meta.tasks) if meta is not None else []
    for t in tasks:
        if not any(_same_task(t, u) for u in all_tasks):
            all_tasks.append(t)
    for t in all_tasks:
        if isinstance(t, TaskWeight):
            if len(t) != phi.dim:
                raise MDPError(f"task dim {len(t)} does not match feature dim {phi.dim}")
            norm = np.linalg.norm(t.vector)
            if norm > 0:
                chord_set = chord_set.with_chord(t.vector / norm)
    columns, values = [], []
    for t in all_tasks:
        choice, v = _train_one(mcp, phi, basis, chord_set, t, tol)
        columns.append(choice)
        values.append(v)
    table = np.stack(columns, axis=1) if columns else np.zeros((mcp.n_states, 0), dtype=int)
    table.setflags(write=False)
    return MetaPolicy(table, tuple(all_tasks), chord_set, tuple(values))


def ok_policy(basis, meta: MetaPolicy, task) -> np.ndarray:
    """Flat policy s -> gpi_action(basis, s, omega(s, task)) for every state."""
    col = meta.chord_choice[:, meta.task_index(task)]
    actions = gpi_action_table(basis, meta.chord_set.chords)
    return actions[np.arange(len(col)), col]


def ok_action(basis, meta: MetaPolicy, s: int, task) -> int:
    return gpi_action(basis, s, meta.chord(s, task))


def ok_policy_successor_features(mcp: TabularMCP, phi: FeatureMap, basis, meta: MetaPolicy,
                                 task) -> SFRecord:
    task = _as_task(task)
    source = task if isinstance(task, TaskWeight) else None
    return policy_successor_features(mcp, phi, ok_policy(basis, meta, task), source_task=source)


@dataclass(frozen=True, eq=False)
class AdvantageReport:
    advantages: np.ndarray
    max_positive: float
    mean_positive: float
    witnesses: list
    value: float

    @property
    def expressible(self) -> bool:
        return not self.witnesses


def advantage_report(mcp: TabularMCP, reward, basis, meta: MetaPolicy, task,
                     tol: float = 1e-6) -> AdvantageReport:
    """Exact advantage of every action against the keyboard's own choice.

    A(s, a) = rbar(s, a) + gamma E[v(S')] - v(s) with v the value of the
    induced flat policy. Only states reachable from mu are scored and terminal
    states are skipped; a positive entry above ``tol`` is a witness that the
    keyboard cannot express an optimal policy for this task with this basis.
    """
    if isinstance(reward, NonlinearReward):
        reward = reward.reward
    policy = ok_policy(basis, meta, task)
    q, v_mu = evaluate_flat_policy(mcp, reward, policy)
    v = q[np.arange(mcp.n_states), policy]
    adv = q - v[:, None]
    scored = reachable_states(mcp) & ~mcp.terminal_mask
    adv[~scored] = 0.0
    adv[np.abs(adv) < ADVANTAGE_NOISE] = 0.0
    pos = adv[adv > 0]
    mean_pos = float(pos.mean()) if pos.size else 0.0
    witnesses = [(int(s), int(a)) for s, a in zip(*np.nonzero(adv > tol))]
    return AdvantageReport(adv, float(adv.max()), mean_pos, witnesses, v_mu)


def chord_trajectory(mcp: TabularMCP, basis, meta: MetaPolicy, task, max_steps: int = 100):
    """Greedy rollout from the most likely start state, following the most likely successor.

    Yields rows (step, state, chord, base-policy index, primitive action).
    """
    tables = np.stack([rec.sf_table for rec in basis])
    s = int(np.argmax(mcp.initial_dist))
    rows = []
    for step in range(max_steps):
        if s in mcp.terminal_states:
            break
        z = meta.chord(s, task)
        a = ok_action(basis, meta, s, task)
        vals = tables[:, s, a] @ z
        rows.append((step, s, z, int(np.argmax(vals >= vals.max() - TIE_TOL)), a))
        s = int(np.argmax(mcp.transitions[s, a]))
    return rows


def write_chord_trajectory(path, rows) -> None:
    d = len(rows[0][2]) if rows else 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["step", "state"] + [f"z_{i}" for i in range(d)] + ["policy", "action"])
        for step, s, z, pol, a in rows:
            out.writerow([step, s] + [repr(float(x)) for x in z] + [pol, a])

