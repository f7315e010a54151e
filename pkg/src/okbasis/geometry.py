"""Convex-coverage-set geometry over the weight simplex."""
from __future__ import annotations

import itertools
from math import comb

import numpy as np
from scipy.optimize import linprog

from .mdp import FeatureMap, MDPError, TaskWeight, as_weight

MAX_CORNER_DIM = 6
MAX_CORNER_VECTORS = 64
DEDUP_TOL = 1e-9


def simplex_extremes(d: int) -> np.ndarray:
    return np.eye(d)


def _unique_rows(points: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    kept = []
    for p in points:
        if not any(np.max(np.abs(p - q)) < tol for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, points.shape[1])


def _lex_sort(points: np.ndarray) -> np.ndarray:
    # round before sorting so values equal within the tolerance order identically
    key = np.round(points, 9)
    order = np.lexsort(key.T[::-1])
    return points[order]


def corner_weights(vectors, chunk: int = 100_000) -> np.ndarray:
    """Weights at the vertices of {(w, v) : psi.w <= v for all psi, w in the simplex}.

    Every vertex has d+1 linearly independent active constraints: the simplex
    equality plus d chosen among the value rows and the facets w_i = 0. All
    subsets are solved in batches; feasible solutions are deduplicated and
    returned in lexicographic order. With fewer than two vectors the envelope
    has no interior breakpoints and the corners are the simplex extremes.
    """
    V = np.asarray(vectors, dtype=float)
    if V.size == 0:
        raise ValueError("corner_weights of an empty set needs a dimension; use simplex_extremes")
    V = np.atleast_2d(V)
    n, d = V.shape
    if d < 2:
        raise ValueError("corner weights need d >= 2")
    if d > MAX_CORNER_DIM or n > MAX_CORNER_VECTORS:
        raise ValueError(
            f"corner enumeration is limited to d <= {MAX_CORNER_DIM} and "
            f"{MAX_CORNER_VECTORS} vectors (got d={d}, n={n}); prune the set first"
        )
    if n == 1:
        return simplex_extremes(d)
    V = _unique_rows(V)
    n = len(V)
    # constraint rows over x = (w_1..w_d, v); value rows psi.w - v = 0, facet rows w_i = 0
    rows = np.zeros((n + d, d + 1))
    rows[:n, :d] = V
    rows[:n, d] = -1.0
    rows[n:, :d] = np.eye(d)
    eq = np.append(np.ones(d), 0.0)
    found = []
    subsets = itertools.combinations(range(n + d), d)
    total = comb(n + d, d)
    for start in range(0, total, chunk):
        idx = np.array(list(itertools.islice(subsets, chunk)))
        if len(idx) == 0:
            break
        idx = idx[idx.min(axis=1) < n]  # at least one value row, else w = 0
        if len(idx) == 0:
            continue
        A = np.concatenate([rows[idx], np.broadcast_to(eq, (len(idx), 1, d + 1))], axis=1)
        b = np.zeros((len(idx), d + 1))
        b[:, -1] = 1.0
        ok = np.abs(np.linalg.det(A)) > 1e-12
        if not ok.any():
            continue
        x = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
        w, v = x[:, :d], x[:, d]
        feasible = (w >= -DEDUP_TOL).all(axis=1)
        feasible &= ((w @ V.T) - v[:, None] <= 1e-9).all(axis=1)
        found.append(w[feasible])
    pts = np.concatenate(found) if found else np.empty((0, d))
    pts = np.clip(pts, 0.0, None)
    pts /= pts.sum(axis=1, keepdims=True)
    return _lex_sort(_unique_rows(_lex_sort(pts)))


def corner_values(vectors, weights) -> np.ndarray:
    """Upper-envelope value max_psi psi.w at each weight."""
    return (np.asarray(weights) @ np.asarray(vectors, dtype=float).T).max(axis=1)


def dominance_margin(vectors, i: int) -> float:
    """max over (w, delta) of delta subject to (psi_i - psi_j).w >= delta for all j != i."""
    V = np.asarray(vectors, dtype=float)
    n, d = V.shape
    others = np.delete(V, i, axis=0)
    if len(others) == 0:
        return np.inf
    # variables (w, delta); minimise -delta
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-(V[i] - others), np.ones((len(others), 1))])
    b_ub = np.zeros(len(others))
    A_eq = np.append(np.ones(d), 0.0)[None, :]
    bounds = [(0.0, None)] * d + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise ArithmeticError(f"dominance LP failed: {res.message}")
    return float(-res.fun)


def remove_dominated(vectors, tol: float = 1e-9, strict: bool = False) -> list[int]:
    """Indices (in input order) of the vectors worth keeping.

    Default: keep psi if it reaches the upper envelope within ``tol`` somewhere
    on the simplex (ties are kept). ``strict=True`` keeps only vectors that are
    the unique best by more than ``tol`` at some weight, removing one vector at
    a time so that a group of mutual ties is never emptied.
    Exact duplicates are always collapsed onto their first occurrence.
    """
    V = np.asarray(vectors, dtype=float)
    if len(V) == 0:
        return []
    V = np.atleast_2d(V)
    keep = []
    for i, v in enumerate(V):
        if not any(np.max(np.abs(v - V[j])) < DEDUP_TOL for j in keep):
            keep.append(i)
    if len(keep) == 1:
        return keep
    if not strict:
        return [i for i in keep if dominance_margin(V[keep], keep.index(i)) >= -tol]
    changed = True
    while changed and len(keep) > 1:
        changed = False
        for pos in range(len(keep) - 1, -1, -1):
            if dominance_margin(V[keep], pos) <= tol:
                del keep[pos]
                changed = True
                break
    return keep


def scalarized_max(vectors, w) -> tuple[float, int]:
    """max_psi psi.w and the lowest index attaining it."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    w = as_weight(w)
    if V.shape[1] != w.shape[0]:
        raise MDPError(f"vector dim {V.shape[1]} does not match weight dim {w.shape[0]}")
    vals = V @ w
    best = vals.max()
    return float(best), int(np.argmax(vals >= best - 1e-12))


def linear_to_convex(phi: FeatureMap, w):
    """Map a signed task onto the simplex over features [phi; -phi].

    Returns (phi_tilde, w_tilde, c) with r_tilde = r / c and c > 0.
    """
    w = as_weight(w)
    if w.shape != (phi.dim,):
        raise MDPError(f"feature dim {phi.dim} does not match weight dim {w.shape[0]}")
    if not np.any(w != 0):
        raise MDPError("the zero task is degenerate")
    w_pos = np.maximum(w, 0.0)
    w_neg = np.maximum(-w, 0.0)
    c = float(np.sum(w_pos + w_neg))
    w_tilde = np.concatenate([w_pos, w_neg]) / c
    w_tilde = w_tilde / w_tilde.sum()
    phi_tilde = FeatureMap(np.concatenate([phi.features, -phi.features], axis=-1))
    return phi_tilde, TaskWeight(w_tilde, "convex"), c


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for k in range(total, -1, -1):
        for rest in _compositions(total - k, parts - 1):
            yield (k,) + rest


def simplex_grid(d: int, H: int) -> np.ndarray:
    """All points k/H with non-negative integer k summing to H, first coordinate descending."""
    if H < 1 or d < 1:
        raise ValueError("simplex_grid needs d >= 1 and H >= 1")
    return np.array(list(_compositions(H, d)), dtype=float) / H


def chord_grid(d: int, H: int, signed: bool = True) -> np.ndarray:
    """Unit vectors from the simplex lattice, optionally under every sign pattern."""
    base = simplex_grid(d, H)
    if signed:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=d)))
        base = (base[:, None, :] * signs[None]).reshape(-1, d)
    base = base[np.linalg.norm(base, axis=1) > 0]
    unit = base / np.linalg.norm(base, axis=1, keepdims=True)
    return _unique_rows(unit)


def default_chord_grid(d: int) -> np.ndarray:
    return chord_grid(d, 8 if d <= 3 else 4, signed=True)
