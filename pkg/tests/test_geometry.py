from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import HalfspaceIntersection

from okbasis.geometry import (
    chord_grid,
    corner_values,
    corner_weights,
    default_chord_grid,
    dominance_margin,
    linear_to_convex,
    remove_dominated,
    scalarized_max,
    simplex_extremes,
    simplex_grid,
)
from okbasis.mdp import MDPError, TaskWeight, build_counterexample, build_random_mcp, task_reward
from okbasis.planner import solve_task


def _as_set(points):
    return {tuple(np.round(p, 8)) for p in points}


def _halfspace_corners(V):
    """Independent route: vertices of the polyhedron over (w_1..w_{d-1}, v) via qhull."""
    V = np.asarray(V, dtype=float)
    n, d = V.shape
    big = np.abs(V).max() * 10 + 10
    # substitute w_d = 1 - sum(w_1..w_{d-1}); rows are A x + b <= 0 with x = (w', v)
    rows = []
    for psi in V:
        rows.append(np.concatenate([psi[:-1] - psi[-1], [-1.0, psi[-1]]]))
    for i in range(d - 1):
        e = np.zeros(d + 1)
        e[i] = -1.0
        rows.append(e)
    rows.append(np.concatenate([np.ones(d - 1), [0.0, -1.0]]))
    rows.append(np.concatenate([np.zeros(d - 1), [1.0, -big]]))  # cap v <= big
    interior = np.concatenate([np.full(d - 1, 1.0 / d), [big - 1.0]])
    hs = HalfspaceIntersection(np.array(rows), interior)
    out = []
    for x in hs.intersections:
        if x[-1] < big - 1e-6:
            w = np.append(x[:-1], 1.0 - x[:-1].sum())
            out.append(np.clip(w, 0, None))
    return _as_set(out)


def test_corner_weights_two_axes():
    got = corner_weights([[1.0, 0.0], [0.0, 1.0]])
    assert _as_set(got) == {(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)}
    np.testing.assert_allclose(got, [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]])


def test_corner_weights_single_vector_is_extremes():
    np.testing.assert_array_equal(corner_weights([[1.0, 1.0]]), simplex_extremes(2))


def test_corner_weights_scope_and_empty():
    with pytest.raises(ValueError, match="d <= 6"):
        corner_weights(np.ones((2, 7)))
    with pytest.raises(ValueError, match="64"):
        corner_weights(np.random.default_rng(0).random((65, 2)))
    with pytest.raises(ValueError):
        corner_weights(np.empty((0, 2)))


@given(st.integers(0, 10_000), st.integers(2, 3), st.integers(1, 6))
def test_corner_weights_match_halfspace_oracle(seed, d, n):
    V = np.random.default_rng(seed).random((n, d))
    ours = _as_set(corner_weights(V))
    assert ours == _halfspace_corners(V)


@given(st.integers(0, 10_000), st.integers(2, 4), st.integers(2, 6))
def test_corner_weights_on_simplex_and_distinct(seed, d, n):
    W = corner_weights(np.random.default_rng(seed).random((n, d)))
    assert np.all(W >= 0) and np.all(np.abs(W.sum(axis=1) - 1) < 1e-9)
    for i in range(len(W)):
        assert np.all(np.max(np.abs(np.delete(W, i, axis=0) - W[i]), axis=1) >= 1e-9)


def test_corner_values():
    V = [[1.0, 0.0], [0.0, 1.0]]
    np.testing.assert_allclose(corner_values(V, corner_weights(V)), [1.0, 0.5, 1.0])


def test_remove_dominated_examples():
    assert remove_dominated([[1.0, 0.0], [0.0, 1.0], [0.4, 0.4]]) == [0, 1]
    assert remove_dominated([[0.3, 0.2]]) == [0]
    # [0.5,0.5] touches the envelope at w=[.5,.5] only: conservative keeps, strict drops
    V = [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]
    assert remove_dominated(V) == [0, 1, 2]
    assert remove_dominated(V, strict=True) == [0, 1]
    # exact duplicates collapse onto the first one
    assert remove_dominated([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) == [0, 2]


def test_remove_dominated_keeps_full_region_tie():
    # psi3 is within tol of the envelope on the whole region w1 >= 0.5
    V = [[1.0, 0.0], [0.0, 1.0], [1.0 - 1e-4, -1e-4]]
    assert remove_dominated(V, tol=1e-3) == [0, 1, 2]
    assert remove_dominated(V, tol=1e-9) == [0, 1]
    assert dominance_margin(np.array([[1.0, 0.0], [0.0, 1.0], [0.9, 0.9]]), 2) == pytest.approx(0.4)


@given(st.integers(0, 10_000), st.integers(2, 3), st.integers(1, 7))
def test_remove_dominated_properties(seed, d, n):
    V = np.random.default_rng(seed).random((n, d))
    for strict in (False, True):
        keep = remove_dominated(V, strict=strict)
        # idempotent
        assert [keep[i] for i in remove_dominated(V[keep], strict=strict)] == keep
        # envelope unchanged at every corner weight of the full set
        W = corner_weights(V)
        np.testing.assert_allclose(corner_values(V[keep], W), corner_values(V, W), atol=1e-9)
        # a unique maximiser at some corner is never removed
        vals = W @ V.T
        for row in vals:
            top = np.sort(row)[-2:] if n > 1 else row
            if n == 1 or top[1] - top[0] > 1e-6:
                assert int(np.argmax(row)) in keep


def test_scalarized_max():
    V = [[1.0, 0.0], [0.0, 1.0]]
    assert scalarized_max(V, [0.25, 0.75]) == (0.75, 1)
    assert scalarized_max(V, [0.5, 0.5]) == (0.5, 0)
    with pytest.raises(MDPError):
        scalarized_max(V, [1.0, 0.0, 0.0])


def test_linear_to_convex_example():
    _, phi = build_counterexample()
    phit, wt, c = linear_to_convex(phi, TaskWeight([1.0, -1.0], "linear"))
    assert wt.w == (0.5, 0.0, 0.0, 0.5) and wt.kind == "convex" and c == 2.0
    assert phit.dim == 4


def test_linear_to_convex_convex_input():
    mcp, phi = build_random_mcp(0, 5, 2, 2)
    phit, wt, c = linear_to_convex(phi, [0.3, 0.7])
    assert c == pytest.approx(1.0) and wt.w == pytest.approx((0.3, 0.7, 0.0, 0.0))
    np.testing.assert_allclose(task_reward(phit, wt), task_reward(phi, [0.3, 0.7]), atol=1e-15)


def test_linear_to_convex_counterexample_policy():
    mcp, phi = build_counterexample()
    w = TaskWeight([-1.0, -1.0], "linear")
    phit, wt, c = linear_to_convex(phi, w)
    a = solve_task(mcp, task_reward(phi, w))
    b = solve_task(mcp, task_reward(phit, wt))
    np.testing.assert_array_equal(a.policy, b.policy)
    assert a.policy[0] == 0  # phi(s1) = [0, 0.5] is the least costly arm


def test_linear_to_convex_errors():
    _, phi = build_counterexample()
    with pytest.raises(MDPError):
        linear_to_convex(phi, [0.0, 0.0])
    with pytest.raises(MDPError):
        linear_to_convex(phi, [1.0, 0.0, 1.0])


def test_simplex_grid_examples():
    np.testing.assert_array_equal(
        simplex_grid(2, 4), [[1, 0], [0.75, 0.25], [0.5, 0.5], [0.25, 0.75], [0, 1]])
    assert len(simplex_grid(3, 2)) == 6
    assert len(simplex_grid(4, 5)) == 56
    with pytest.raises(ValueError):
        simplex_grid(2, 0)


@given(st.integers(1, 5), st.integers(1, 12))
def test_simplex_grid_counts_and_sums(d, H):
    G = simplex_grid(d, H)
    assert len(G) == comb(H + d - 1, d - 1)
    k = np.rint(G * H).astype(int)
    assert np.all(k.sum(axis=1) == H)
    assert len({tuple(r) for r in k}) == len(k)


def test_chord_grid_examples():
    np.testing.assert_array_equal(chord_grid(2, 1, signed=False), [[1.0, 0.0], [0.0, 1.0]])
    Z = chord_grid(2, 2, signed=True)
    s = 1 / np.sqrt(2)
    for z in ([-1, 0], [0, -1], [s, s], [-s, -s], [s, -s]):
        assert np.min(np.max(np.abs(Z - z), axis=1)) < 1e-12
    assert len(chord_grid(2, 8)) == 32


@given(st.integers(2, 4), st.integers(1, 6), st.booleans())
def test_chord_grid_unit_and_distinct(d, H, signed):
    Z = chord_grid(d, H, signed)
    assert np.all(np.abs(np.linalg.norm(Z, axis=1) - 1) < 1e-12)
    for i in range(len(Z)):
        assert np.all(np.max(np.abs(np.delete(Z, i, axis=0) - Z[i]), axis=1) >= 1e-9)


def test_default_chord_grid():
    np.testing.assert_array_equal(default_chord_grid(2), chord_grid(2, 8, True))
    np.testing.assert_array_equal(default_chord_grid(4), chord_grid(4, 4, True))
