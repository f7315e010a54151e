"""Behaviour-basis construction: OKB with its OK-LS inner loop, plus the SFOLS baseline."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import corner_weights, default_chord_grid, remove_dominated, simplex_extremes
from .keyboard import MetaPolicy, advantage_report, empty_meta_policy, ok_policy_successor_features, train_meta_policy
from .mdp import FeatureMap, TabularMCP, TaskWeight, task_reward
from .planner import SFRecord, new_policy, solve_task

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9


@dataclass
class BasisConfig:
    chords: np.ndarray | None = None  # default: geometry.default_chord_grid(d)
    tol: float = 1e-6  # advantage / optimality-gap threshold
    plan_tol: float = 1e-10
    prune_tol: float = 1e-9
    max_iters: int = 20
    okls_iters: int | None = 5  # None runs OK-LS to its fixed point
    selection: str = "advantage"
    seed: int = 0


@dataclass
class BasisResult:
    basis: list
    meta: MetaPolicy
    partial_ccs: np.ndarray
    weight_support: list
    log: list
    history: list = field(default_factory=list)  # basis after every NewPolicy call
    ccs_history: list = field(default_factory=list)  # partial CCS after every OK-LS call
    meta_history: list = field(default_factory=list)  # meta-policy in force for history[k]
    truncated: bool = False
    n_solves: int = 0

    @property
    def vectors(self) -> np.ndarray:
        return np.array([rec.sf_vector for rec in self.basis])


def _contains(weights, w) -> bool:
    return any(np.max(np.abs(np.asarray(u) - w)) < WEIGHT_TOL for u in weights)


def _union(*groups) -> np.ndarray:
    out = []
    for g in groups:
        for w in g:
            if not _contains(out, w):
                out.append(np.asarray(w, dtype=float))
    return np.array(out)


def _corners(vectors, d: int) -> np.ndarray:
    return simplex_extremes(d) if len(vectors) == 0 else corner_weights(vectors)


def _prune(records, tol):
    if not records:
        return []
    keep = remove_dominated(np.array([r.sf_vector for r in records]), tol, strict=True)
    return [records[i] for i in keep]


def _task(w) -> TaskWeight:
    w = np.clip(np.asarray(w, dtype=float), 0.0, None)
    return TaskWeight(w / w.sum())


@dataclass
class OKState:
    meta: MetaPolicy
    support: list  # TaskWeight, in insertion order
    records: list  # SFRecord of the keyboard policy for each support weight
    partial_ccs: list  # pruned subset of records

    @property
    def vectors(self) -> np.ndarray:
        return np.array([r.sf_vector for r in self.partial_ccs])


def ok_ls(mcp: TabularMCP, phi: FeatureMap, state: OKState, basis, config: BasisConfig,
          initial_task=None) -> OKState:
    """Grow the weight support from corner weights of the keyboard's partial CCS.

    With an empty partial CCS the corners are the simplex extremes, plus
    ``initial_task`` when the support is still empty.
    """
    if not basis:
        raise ValueError("ok_ls needs a non-empty basis")
    d = phi.dim
    chords = config.chords if config.chords is not None else default_chord_grid(d)
    it = 0
    while config.okls_iters is None or it < config.okls_iters:
        it += 1
        corners = _corners(state.vectors, d)
        if not state.support and initial_task is not None:
            corners = _union(corners, [np.asarray(initial_task, dtype=float)])
        new = [w for w in corners if not _contains([t.vector for t in state.support], w)]
        if not new:
            break
        support = state.support + [_task(w) for w in new]
        meta = train_meta_policy(mcp, phi, basis, support, chords, config.plan_tol,
                                 meta=state.meta if state.meta.tasks else None)
        records = state.records + [
            ok_policy_successor_features(mcp, phi, basis, meta, t) for t in support[len(state.records):]
        ]
        state = OKState(meta, support, records, _prune(records, config.prune_tol))
    return state


def refresh_keyboard(mcp, phi, state: OKState, basis, config: BasisConfig) -> OKState:
    """Retrain the meta-policy on the whole support after the basis changed."""
    if not state.support:
        return state
    chords = config.chords if config.chords is not None else default_chord_grid(phi.dim)
    meta = train_meta_policy(mcp, phi, basis, state.support, chords, config.plan_tol,
                             meta=state.meta)
    records = [ok_policy_successor_features(mcp, phi, basis, meta, t) for t in state.support]
    return OKState(meta, state.support, records, _prune(records, config.prune_tol))


def select_candidate(candidates, mode: str = "advantage", scores=None, rng=None, d=None):
    """Pick the next task to learn a base policy for.

    ``advantage`` returns the candidate with the highest mean positive
    advantage (first one on ties); ``uniform`` ignores the candidates and
    draws a weight uniformly from the simplex with ``rng``.
    """
    if mode == "uniform":
        if rng is None:
            raise ValueError("uniform selection needs a random generator")
        dim = d if d is not None else len(candidates[0])
        return rng.dirichlet(np.ones(dim))
    if mode != "advantage":
        raise ValueError(f"unknown selection mode {mode!r}")
    if len(candidates) == 0:
        raise ValueError("advantage selection needs at least one candidate")
    if scores is None:
        return np.asarray(candidates[0], dtype=float)
    scores = np.asarray(scores, dtype=float)
    return np.asarray(candidates[int(np.argmax(scores >= scores.max()))], dtype=float)


def check_expressible(mcp, phi, basis, meta: MetaPolicy, w, config: BasisConfig):
    """Train the keyboard on ``w`` alone (sharing the support's chords) and return its advantage report."""
    task = _task(w)
    chords = meta.chord_set if len(meta.chord_set) else (
        config.chords if config.chords is not None else default_chord_grid(phi.dim))
    m = train_meta_policy(mcp, phi, basis, [task], chords, config.plan_tol)
    return advantage_report(mcp, task_reward(phi, task), basis, m, task, config.tol)


def okb_run(mcp: TabularMCP, phi: FeatureMap, config: BasisConfig | None = None) -> BasisResult:
    """Option Keyboard Basis: add base policies only for tasks the keyboard cannot express."""
    config = config or BasisConfig()
    d = phi.dim
    rng = np.random.default_rng(config.seed)
    chords = config.chords if config.chords is not None else default_chord_grid(d)
    w0 = np.full(d, 1.0 / d)
    basis = [new_policy(mcp, phi, _task(w0), config.plan_tol)]
    n_solves = 1
    history = [list(basis)]
    state = OKState(empty_meta_policy(mcp.n_states, chords), [], [], [])
    # tasks already handed to NewPolicy: even if their policy was pruned, a kept
    # base vector attains v*_w at mu, so they are never candidates again
    learned = [w0]
    ccs_history, meta_history = [], []
    entries = []
    truncated = True
    for k in range(config.max_iters):
        state = ok_ls(mcp, phi, state, basis, config, initial_task=w0)
        ccs_history.append(state.vectors)
        meta_history.append(state.meta)
        base_vectors = np.array([r.sf_vector for r in basis])
        corners = _union(_corners(base_vectors, d), _corners(state.vectors, d))
        candidates, scores = [], []
        for w in corners:
            if _contains(learned, w):
                continue
            rep = check_expressible(mcp, phi, basis, state.meta, w, config)
            if rep.max_positive > config.tol:
                candidates.append(w)
                scores.append(rep.mean_positive)
        entry = {
            "iter": k,
            "n_policies": len(basis),
            "n_support": len(state.support),
            "candidates": [list(map(float, w)) for w in candidates],
            "candidate_scores": [float(s) for s in scores],
            "n_corners": int(len(corners)),
            "max_delta": None,  # OKB never solves corner tasks, so the gap is not known
            "n_solves": n_solves,
        }
        if not candidates:
            entry["selected_w"] = None
            entries.append(entry)
            truncated = False
            break
        w = select_candidate(candidates, config.selection, scores, rng, d)
        entry["selected_w"] = list(map(float, w))
        entries.append(entry)
        rec = new_policy(mcp, phi, _task(w), config.plan_tol)
        n_solves += 1
        learned.append(np.asarray(w, dtype=float))
        basis = _prune(basis + [rec], config.prune_tol)
        history.append(list(basis))
        state = refresh_keyboard(mcp, phi, state, basis, config)
        log.debug("okb iter %d: %d candidates, basis size %d", k, len(candidates), len(basis))
    return BasisResult(
        basis=basis,
        meta=state.meta,
        partial_ccs=state.vectors,
        weight_support=list(state.support),
        log=entries,
        history=history,
        ccs_history=ccs_history,
        meta_history=meta_history + [state.meta] * (len(history) - len(meta_history)),
        truncated=truncated,
        n_solves=n_solves,
    )


def sfols_run(mcp: TabularMCP, phi: FeatureMap, config: BasisConfig | None = None) -> BasisResult:
    """SF optimistic linear support: solve the corner weight with the largest optimality gap
    until every corner is covered by the current set of base policies."""
    config = config or BasisConfig()
    d = phi.dim
    w0 = np.full(d, 1.0 / d)
    basis = [new_policy(mcp, phi, _task(w0), config.plan_tol)]
    n_solves = 1
    history = [list(basis)]
    solved = {}
    entries = []
    truncated = True
    for k in range(config.max_iters):
        vectors = np.array([r.sf_vector for r in basis])
        corners = corner_weights(vectors)
        gaps = []
        for w in corners:
            key = tuple(np.round(w, 12))
            if key not in solved:
                solved[key] = new_policy(mcp, phi, _task(w), config.plan_tol)
                n_solves += 1
            rec = solved[key]
            gaps.append(float(rec.sf_vector @ w - (vectors @ w).max()))
        gaps = np.array(gaps)
        i = int(np.argmax(gaps >= gaps.max()))
        entry = {
            "iter": k,
            "n_policies": len(basis),
            "n_support": int(len(corners)),
            "max_delta": float(gaps.max()),
            "corner_deltas": [float(g) for g in gaps],
            "n_solves": n_solves,
        }
        if gaps[i] <= config.tol:
            entry["selected_w"] = None
            entries.append(entry)
            truncated = False
            break
        entry["selected_w"] = list(map(float, corners[i]))
        entries.append(entry)
        basis = _prune(basis + [solved[tuple(np.round(corners[i], 12))]], config.prune_tol)
        history.append(list(basis))
    vectors = np.array([r.sf_vector for r in basis])
    return BasisResult(
        basis=basis,
        meta=empty_meta_policy(mcp.n_states, np.eye(d)),
        partial_ccs=vectors,
        weight_support=[],
        log=entries,
        history=history,
        truncated=truncated,
        n_solves=n_solves,
    )


def optimal_value(mcp, phi, w, tol=1e-10) -> float:
    return solve_task(mcp, task_reward(phi, w), tol).v_mu
