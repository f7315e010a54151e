import numpy as np
import pytest
from hypothesis import given, strategies as st

from okbasis.mdp import FeatureMap, MDPError, TabularMCP, build_item_grid, build_random_mcp, task_reward
from okbasis.planner import (
    NumericalError,
    SFRecord,
    evaluate_flat_policy,
    expected_reward,
    gpi_action,
    gpi_action_table,
    gpi_gap_bound,
    gpi_policy,
    gpi_values,
    new_policy,
    phi_max,
    policy_successor_features,
    solve_task,
)


def _arm(mcp, phi, a):
    pol = np.zeros(mcp.n_states, dtype=int)
    pol[0] = a
    return policy_successor_features(mcp, phi, pol)


def _iterative_sf(mcp, phi, policy, sweeps=10_000):
    idx = np.arange(mcp.n_states)
    P = mcp.transitions[idx, policy]
    f = phi.expected(mcp)[idx, policy]
    X = np.zeros_like(f)
    for _ in range(sweeps):
        X = f + mcp.discount * P @ X
    return X


def test_single_state_zero_reward():
    mcp = TabularMCP(np.ones((1, 1, 1)), np.ones(1), 0.9, frozenset({0}))
    res = solve_task(mcp, np.zeros((1, 1, 1)))
    assert res.q_star[0, 0] == 0.0 and res.v_mu == 0.0


def test_counterexample_w10_picks_a2(counterexample):
    mcp, phi = counterexample
    res = solve_task(mcp, task_reward(phi, [1.0, 0.0]))
    assert res.policy[0] == 1
    assert res.v_mu == pytest.approx(2.0, abs=1e-12)


def test_random_mcp_v_mu_matches_evaluation():
    mcp, phi = build_random_mcp(7, 12, 3, 2)
    r = task_reward(phi, [0.3, 0.7])
    res = solve_task(mcp, r)
    _, v = evaluate_flat_policy(mcp, r, res.policy)
    assert abs(res.v_mu - v) < 1e-8


def test_bellman_residual_below_tolerance():
    mcp, phi = build_random_mcp(2, 10, 3, 2, discount=0.95)
    res = solve_task(mcp, task_reward(phi, [0.5, 0.5]), tol=1e-10)
    assert res.residual < 1e-10 * (1 - 0.95)


def test_non_finite_reward_raises():
    mcp, phi = build_random_mcp(0, 4, 2, 2)
    r = task_reward(phi, [0.5, 0.5])
    r[0, 0, 0] = np.inf
    with pytest.raises(NumericalError):
        solve_task(mcp, r)


def test_bad_tol_and_shape():
    mcp, phi = build_random_mcp(0, 4, 2, 2)
    with pytest.raises(ValueError):
        solve_task(mcp, task_reward(phi, [0.5, 0.5]), tol=0)
    with pytest.raises(MDPError):
        expected_reward(mcp, np.zeros((3, 2, 3)))


def test_restricted_actions():
    mcp, phi = build_random_mcp(5, 6, 3, 2)
    r = task_reward(phi, [0.5, 0.5])
    mask = np.zeros((6, 3), dtype=bool)
    mask[:, 2] = True
    res = solve_task(mcp, r, allowed=mask)
    assert np.all(res.policy == 2)
    assert res.v_mu == pytest.approx(evaluate_flat_policy(mcp, r, np.full(6, 2))[1], abs=1e-9)
    with pytest.raises(MDPError):
        solve_task(mcp, r, allowed=np.zeros((6, 3), dtype=bool))


def test_sf_of_counterexample_arms(counterexample):
    mcp, phi = counterexample
    rec = _arm(mcp, phi, 3)
    np.testing.assert_array_equal(rec.sf_table[0, 3], [1.0, 1.0])
    np.testing.assert_array_equal(rec.sf_vector, [1.0, 1.0])


def test_sf_discount_zero_is_one_step_features():
    mcp, phi = build_random_mcp(1, 6, 2, 2, discount=0.0)
    rec = policy_successor_features(mcp, phi, np.zeros(6, dtype=int))
    np.testing.assert_allclose(rec.sf_table, phi.expected(mcp), atol=1e-15)


def test_sf_linear_solve_matches_iteration():
    mcp, phi = build_random_mcp(11, 10, 3, 3)
    pol = np.arange(10) % 3
    rec = policy_successor_features(mcp, phi, pol)
    np.testing.assert_allclose(rec.state_sf(), _iterative_sf(mcp, phi, pol), atol=1e-8)


@given(st.integers(0, 10_000), st.integers(2, 3))
def test_sf_bellman_identity(seed, d):
    mcp, phi = build_random_mcp(seed, 7, 3, d)
    pol = np.random.default_rng(seed).integers(0, 3, size=7)
    rec = policy_successor_features(mcp, phi, pol)
    nxt = rec.state_sf()
    rhs = np.einsum("ijk,ijkl->ijl", mcp.transitions, phi.features + mcp.discount * nxt[None, None])
    assert np.max(np.abs(rec.sf_table - rhs)) < 1e-9
    assert np.max(np.abs(rec.sf_vector - mcp.initial_dist @ nxt)) < 1e-9


def test_sf_policy_shape_check():
    mcp, phi = build_random_mcp(0, 4, 2, 2)
    with pytest.raises(MDPError):
        policy_successor_features(mcp, phi, [0, 1])


def test_optimal_policy_on_its_task_matches_solver():
    mcp, phi = build_random_mcp(4, 9, 3, 2)
    r = task_reward(phi, [0.2, 0.8])
    res = solve_task(mcp, r)
    _, v = evaluate_flat_policy(mcp, r, res.policy)
    assert abs(v - res.v_mu) < 1e-9
    rec = new_policy(mcp, phi, [0.2, 0.8])
    assert abs(rec.sf_vector @ [0.2, 0.8] - res.v_mu) < 1e-9


def test_zero_reward_q_is_zero():
    mcp, _ = build_random_mcp(4, 5, 2, 2)
    q, v = evaluate_flat_policy(mcp, np.zeros(mcp.transitions.shape), np.zeros(5, dtype=int))
    assert not q.any() and v == 0.0


def test_gpi_single_record_is_greedy():
    mcp, phi = build_random_mcp(3, 6, 3, 2)
    rec = policy_successor_features(mcp, phi, np.zeros(6, dtype=int))
    z = np.array([0.6, 0.8])
    for s in range(6):
        assert gpi_action([rec], s, z) == int(np.argmax(rec.sf_table[s] @ z))


def test_gpi_counterexample_basis(counterexample):
    mcp, phi = counterexample
    basis = [_arm(mcp, phi, 1), _arm(mcp, phi, 2)]
    assert gpi_action(basis, 0, [1.0, 0.0]) == 1
    full = [_arm(mcp, phi, a) for a in range(4)]
    angles = np.linspace(0, 2 * np.pi, 3601)
    assert all(gpi_action(full, 0, [np.cos(t), np.sin(t)]) != 3 for t in angles)


def test_gpi_tie_break_lowest_record_then_action():
    # two identical records, all actions tied: record 0, action 0
    mcp, phi = build_random_mcp(0, 3, 2, 2)
    rec = policy_successor_features(mcp, phi, np.zeros(3, dtype=int))
    assert gpi_action([rec, rec], 0, [0.0, 0.0]) == 0
    table = np.zeros((1, 3, 2))
    table[0, 1] = [1.0, 0.0]
    table[0, 2] = [1.0, 0.0]
    a = SFRecord(np.zeros(1, dtype=int), table, table[0, 0])
    b = SFRecord(np.zeros(1, dtype=int), table[:, ::-1].copy(), table[0, 0])
    assert gpi_action([a, b], 0, [1.0, 0.0]) == 1
    assert gpi_action([b, a], 0, [1.0, 0.0]) == 0


def test_gpi_errors():
    with pytest.raises(ValueError):
        gpi_action([], 0, [1.0, 0.0])
    mcp, phi = build_random_mcp(0, 3, 2, 2)
    rec = policy_successor_features(mcp, phi, np.zeros(3, dtype=int))
    with pytest.raises(MDPError):
        gpi_action([rec], 0, [1.0, 0.0, 0.0])


def test_gpi_table_matches_pointwise():
    mcp, phi = build_random_mcp(9, 6, 3, 2)
    basis = [new_policy(mcp, phi, w) for w in ([1.0, 0.0], [0.0, 1.0])]
    Z = np.array([[1.0, 0.0], [0.6, 0.8], [-0.6, 0.8]])
    table = gpi_action_table(basis, Z)
    for s in range(6):
        for k, z in enumerate(Z):
            assert table[s, k] == gpi_action(basis, s, z)
    np.testing.assert_array_equal(gpi_policy(basis, Z[1]), table[:, 1])
    assert gpi_values(basis, Z[1]).shape == (2, 6, 3)


def test_gap_bound_exact_match_is_zero():
    mcp, phi = build_random_mcp(5, 8, 3, 2)
    basis = [new_policy(mcp, phi, w) for w in ([1.0, 0.0], [0.3, 0.7])]
    lhs, rhs = gpi_gap_bound(mcp, phi, basis, [0.3, 0.7])
    assert abs(lhs) < 1e-9 and rhs == 0.0


def test_gap_bound_needs_source_tasks():
    mcp, phi = build_random_mcp(5, 8, 3, 2)
    rec = policy_successor_features(mcp, phi, np.zeros(8, dtype=int))
    with pytest.raises(ValueError):
        gpi_gap_bound(mcp, phi, [rec], [0.5, 0.5])


def test_phi_max_uses_expected_features(counterexample):
    mcp, phi = counterexample
    assert phi_max(mcp, phi) == pytest.approx(np.sqrt(5.0))


@given(st.integers(0, 10_000), st.floats(0.1, 5.0))
def test_constant_shift_adds_c_over_one_minus_gamma(seed, c):
    # no terminal states, so the shift is paid forever
    mcp, phi = build_random_mcp(seed, 6, 3, 2)
    r = task_reward(phi, [0.4, 0.6])
    a = solve_task(mcp, r)
    b = solve_task(mcp, r + c)
    assert abs(b.v_mu - a.v_mu - c / (1 - mcp.discount)) < 1e-9
    np.testing.assert_allclose(b.q_star - a.q_star, c / (1 - mcp.discount), atol=1e-9)
    np.testing.assert_array_equal(a.policy, b.policy)


def test_item_grid_oracle_tour():
    """Optimal return for w=[1,0] equals the best tour over type-0 items."""
    import itertools

    for tor in (False, True):
        for seed in range(4):
            mcp, phi, layout = build_item_grid(3, 3, 2, toroidal=tor, seed=seed)

            def dist(a, b):
                dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
                if tor:
                    dr, dc = min(dr, 3 - dr), min(dc, 3 - dc)
                return dr + dc

            targets = [(r, c) for r, c, t in layout.items if t == 0]
            best = 0.0
            for order in itertools.permutations(targets):
                t, pos, total = 0, layout.start, 0.0
                for cell in order:
                    t += dist(pos, cell)
                    total += mcp.discount ** (t - 1)
                    pos = cell
                best = max(best, total)
            v = solve_task(mcp, task_reward(phi, [1.0, 0.0])).v_mu
            assert abs(v - best) < 1e-9, (tor, seed)
