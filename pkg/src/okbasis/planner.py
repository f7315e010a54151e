"""Exact tabular planning: value iteration, successor features, GPI and its gap bound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import FeatureMap, MDPError, TabularMCP, TaskWeight, as_weight, task_reward

# Values closer than this are treated as ties; the lowest index wins.
TIE_TOL = 1e-10


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class PlanResult:
    q_star: np.ndarray
    policy: np.ndarray
    v_mu: float
    residual: float


@dataclass(frozen=True, eq=False)
class SFRecord:
    policy: np.ndarray
    sf_table: np.ndarray  # (S, A, d)
    sf_vector: np.ndarray  # (d,)
    source_task: TaskWeight | None = None

    def state_sf(self) -> np.ndarray:
        """psi(s, pi(s)) for every state, shape (S, d)."""
        return self.sf_table[np.arange(len(self.policy)), self.policy]


def first_argmax(values: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    """Row-wise argmax along the last axis, lowest index among entries within ``tol`` of the max."""
    best = values.max(axis=-1, keepdims=True)
    return np.argmax(values >= best - tol, axis=-1)


def expected_reward(mcp: TabularMCP, reward: np.ndarray) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    if reward.shape != mcp.transitions.shape:
        raise MDPError(f"reward table {reward.shape} does not match MCP {mcp.transitions.shape}")
    if not np.all(np.isfinite(reward)):
        raise NumericalError("reward table contains non-finite entries")
    return np.einsum("ijk,ijk->ij", mcp.transitions, reward)


def _evaluate(mcp: TabularMCP, r_bar: np.ndarray, policy: np.ndarray) -> np.ndarray:
    """State values of a deterministic policy, shape (S,) or (S, d) for vector rewards."""
    idx = np.arange(mcp.n_states)
    P_pi = mcp.transitions[idx, policy]
    A = np.eye(mcp.n_states) - mcp.discount * P_pi
    try:
        return np.linalg.solve(A, r_bar[idx, policy])
    except np.linalg.LinAlgError as exc:  # cannot happen for discount < 1
        raise NumericalError(f"policy evaluation system is singular: {exc}") from exc


def solve_task(mcp: TabularMCP, reward: np.ndarray, tol: float = 1e-10,
               allowed: np.ndarray | None = None, max_iter: int = 10_000) -> PlanResult:
    """Optimal q-values for a reward table by value iteration polished with policy iteration.

    ``allowed`` is an optional (S, A) boolean mask restricting the actions
    available in each state; q-values of disallowed actions are -inf.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r_bar = expected_reward(mcp, reward)
    P, gamma = mcp.transitions, mcp.discount
    if allowed is None:
        penalty = np.zeros_like(r_bar)
    else:
        allowed = np.asarray(allowed, dtype=bool)
        if not allowed.any(axis=1).all():
            raise MDPError("every state needs at least one allowed action")
        penalty = np.where(allowed, 0.0, -np.inf)

    def backup(v):
        return r_bar + gamma * (P @ v) + penalty

    # coarse value iteration to get a good starting policy
    v = np.zeros(mcp.n_states)
    for _ in range(200):
        v_new = backup(v).max(axis=1)
        if np.max(np.abs(v_new - v)) < 1e-6:
            v = v_new
            break
        v = v_new
    policy = first_argmax(backup(v))
    for _ in range(max_iter):
        v = _evaluate(mcp, r_bar, policy)
        q = backup(v)
        # switch only on a clear improvement so ties cannot make policy iteration cycle
        current = q[np.arange(mcp.n_states), policy]
        improve = q.max(axis=1) > current + TIE_TOL
        if not improve.any():
            break
        policy = np.where(improve, first_argmax(q), policy)
    else:
        raise NumericalError("policy iteration did not converge")
    q = backup(v)
    residual = float(np.max(np.abs(q.max(axis=1) - v)))
    threshold = tol * (1.0 - gamma) if gamma > 0 else tol
    sweeps = 0
    while residual >= threshold and sweeps < max_iter:
        v = q.max(axis=1)
        q = backup(v)
        residual = float(np.max(np.abs(q.max(axis=1) - v)))
        sweeps += 1
    if not np.isfinite(residual) or residual >= threshold:
        raise NumericalError(f"value iteration stalled at residual {residual:.3e}")
    policy = first_argmax(q)
    return PlanResult(q, policy, float(mcp.initial_dist @ q.max(axis=1)), residual)


def evaluate_flat_policy(mcp: TabularMCP, reward: np.ndarray, policy) -> tuple[np.ndarray, float]:
    """Exact q-table and mu-weighted value of a deterministic policy on any reward table."""
    policy = np.asarray(policy, dtype=int)
    r_bar = expected_reward(mcp, reward)
    v = _evaluate(mcp, r_bar, policy)
    q = r_bar + mcp.discount * (mcp.transitions @ v)
    return q, float(mcp.initial_dist @ v)


def policy_successor_features(mcp: TabularMCP, phi: FeatureMap, policy,
                              source_task: TaskWeight | None = None) -> SFRecord:
    """Exact SFs by solving (I - gamma P_pi) X = phi_pi for all feature channels at once."""
    policy = np.asarray(policy, dtype=int)
    if policy.shape != (mcp.n_states,):
        raise MDPError(f"policy must assign an action to each of {mcp.n_states} states")
    phi_bar = phi.expected(mcp)
    X = _evaluate(mcp, phi_bar, policy)
    table = phi_bar + mcp.discount * np.einsum("ijk,kl->ijl", mcp.transitions, X)
    policy = policy.copy()
    policy.setflags(write=False)
    table.setflags(write=False)
    vector = mcp.initial_dist @ X
    vector.setflags(write=False)
    return SFRecord(policy, table, vector, source_task)


def new_policy(mcp: TabularMCP, phi: FeatureMap, w, tol: float = 1e-10) -> SFRecord:
    """Optimal policy for task ``w`` together with its exact successor features."""
    task = w if isinstance(w, TaskWeight) else TaskWeight(w)
    plan = solve_task(mcp, task_reward(phi, task), tol)
    return policy_successor_features(mcp, phi, plan.policy, source_task=task)


def _stack(basis) -> np.ndarray:
    if len(basis) == 0:
        raise ValueError("GPI needs a non-empty basis")
    return np.stack([rec.sf_table for rec in basis])  # (n, S, A, d)


def gpi_values(basis, z) -> np.ndarray:
    """psi^pi(s, a) . z for every record, shape (n, S, A)."""
    return _stack(basis) @ np.asarray(z, dtype=float)


def _gpi_choice(vals: np.ndarray) -> np.ndarray:
    # vals: (n, ..., A); ties go to the lowest record, then the lowest action
    best = vals.max(axis=(0, -1))
    hit = vals >= best[None, ..., None] - TIE_TOL
    rec_has = hit.any(axis=-1)
    rec = np.argmax(rec_has, axis=0)
    chosen = np.take_along_axis(hit, rec[None, ..., None], axis=0)[0]
    return np.argmax(chosen, axis=-1)


def gpi_action(basis, s: int, z) -> int:
    z = np.asarray(z, dtype=float)
    tables = _stack(basis)
    if z.shape != (tables.shape[-1],):
        raise MDPError(f"chord dim {z.shape} does not match feature dim {tables.shape[-1]}")
    return int(_gpi_choice(tables[:, s] @ z))


def gpi_policy(basis, z) -> np.ndarray:
    """GPI action at every state for a single weight/chord ``z``."""
    return _gpi_choice(gpi_values(basis, z))


def gpi_action_table(basis, chords) -> np.ndarray:
    """GPI action for every (state, chord) pair, shape (S, K)."""
    chords = np.atleast_2d(np.asarray(chords, dtype=float))
    vals = np.einsum("nsad,kd->nska", _stack(basis), chords)
    return _gpi_choice(vals)


def phi_max(mcp: TabularMCP, phi: FeatureMap) -> float:
    return float(np.linalg.norm(phi.expected(mcp), axis=-1).max())


def gpi_gap_bound(mcp: TabularMCP, phi: FeatureMap, basis, w, eps: float = 0.0,
                  tol: float = 1e-10) -> tuple[float, float]:
    """Largest GPI optimality gap over (s, a) and the matching theoretical bound."""
    if any(rec.source_task is None for rec in basis):
        raise ValueError("every basis record needs its source task for the gap bound")
    w = as_weight(w)
    reward = task_reward(phi, w)
    q_star = solve_task(mcp, reward, tol).q_star
    q_gpi, _ = evaluate_flat_policy(mcp, reward, gpi_policy(basis, w))
    lhs = float(np.max(q_star - q_gpi))
    dist = min(np.linalg.norm(w - rec.source_task.vector) for rec in basis)
    rhs = 2.0 / (1.0 - mcp.discount) * (phi_max(mcp, phi) * dist + eps)
    assert lhs <= rhs + 1e-9, f"GPI gap {lhs} exceeds bound {rhs}"
    return lhs, rhs
