"""Oracle self-checks: closed-form MDP fixtures and bound-check behavior."""

import numpy as np
import pytest

from aceplan.oracle import (
    BoundCheck,
    check_lookahead_bound,
    discounted_return,
    exhaustive_plan,
    lookahead_policy,
    normalized_bias,
    policy_evaluation,
    random_mdp,
    sequence_returns,
    value_iteration,
)


def chain_mdp():
    # deterministic 2-state chain 0 -> 1 -> 1, single action
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    R = np.array([[0.0], [1.0]])
    return P, R


def test_value_iteration_zero_rewards():
    P, _ = chain_mdp()
    v, _ = value_iteration(P, np.zeros((2, 1)), gamma=0.9)
    np.testing.assert_allclose(v, 0.0, atol=1e-9)


def test_value_iteration_absorbing_geometric_series():
    P = np.ones((1, 1, 1))
    R = np.ones((1, 1))
    v, _ = value_iteration(P, R, gamma=0.9, tol=1e-12)
    assert v[0] == pytest.approx(1.0 / (1.0 - 0.9), abs=1e-9)


def test_value_iteration_two_state_chain_hand_values():
    P, R = chain_mdp()
    v, policy = value_iteration(P, R, gamma=0.5, tol=1e-12)
    assert v[1] == pytest.approx(2.0, abs=1e-10)
    assert v[0] == pytest.approx(1.0, abs=1e-10)
    assert list(policy) == [0, 0]


def test_policy_evaluation_matches_value_iteration_on_greedy_policy():
    rng = np.random.default_rng(0)
    P, R = random_mdp(rng, 5, 3)
    v, policy = value_iteration(P, R, gamma=0.95, tol=1e-12)
    v_pi = policy_evaluation(P, R, gamma=0.95, policy=policy)
    np.testing.assert_allclose(v, v_pi, atol=1e-8)


def test_exhaustive_plan_h1_is_greedy():
    rng = np.random.default_rng(1)
    P, R = random_mdp(rng, 4, 3)
    vterm = np.zeros(4)
    seq, ret = exhaustive_plan(P, R, 0.9, state=2, horizon=1, terminal_values=vterm)
    assert seq.shape == (1,)
    assert seq[0] == int(np.argmax(R[2]))
    assert ret == pytest.approx(R[2].max())


def test_exhaustive_plan_gamma_zero_ignores_terminal():
    rng = np.random.default_rng(2)
    P, R = random_mdp(rng, 4, 3)
    seq, ret = exhaustive_plan(P, R, 0.0, state=1, horizon=3,
                               terminal_values=np.full(4, 100.0))
    assert seq[0] == int(np.argmax(R[1]))
    assert ret == pytest.approx(R[1].max())


def test_sequence_returns_deterministic_hand_case():
    P, R = chain_mdp()
    seqs = np.zeros((1, 2), dtype=np.int64)
    ret = sequence_returns(P, R, 0.5, state=0, sequences=seqs,
                           terminal_values=np.array([0.0, 4.0]))
    # r(0)=0, then r(1)=1 at discount 0.5, then terminal 4 at 0.25
    assert ret[0] == pytest.approx(0.0 + 0.5 * 1.0 + 0.25 * 4.0)


def test_exhaustive_plan_budget():
    rng = np.random.default_rng(3)
    P, R = random_mdp(rng, 3, 4)
    with pytest.raises(ValueError):
        exhaustive_plan(P, R, 0.9, 0, horizon=12, terminal_values=np.zeros(3), budget=1000)


def test_exhaustive_return_upper_bounds_any_policy_rollout():
    rng = np.random.default_rng(4)
    P, R = random_mdp(rng, 5, 3)
    vterm = rng.uniform(0, 1, size=5)
    _, best = exhaustive_plan(P, R, 0.9, 0, 3, vterm)
    for _ in range(50):
        seq = rng.integers(0, 3, size=(1, 3))
        ret = sequence_returns(P, R, 0.9, 0, seq, vterm)[0]
        assert ret <= best + 1e-12


# -- lookahead performance bound ----------------------------------------------------


def test_bound_exact_value_and_no_curiosity_gives_zero_gap():
    rng = np.random.default_rng(5)
    P, R = random_mdp(rng, 5, 3)
    v_star, _ = value_iteration(P, R, gamma=0.9, tol=1e-12)
    report = check_lookahead_bound(P, R, 0.9, horizon=2, v_hat=v_star,
                                   intrinsic_rewards=np.zeros((5, 3)))
    assert report.gap == pytest.approx(0.0, abs=1e-8)
    assert report.holds


def test_bound_constant_shift_keeps_zero_gap_positive_bound():
    rng = np.random.default_rng(6)
    P, R = random_mdp(rng, 5, 3)
    v_star, _ = value_iteration(P, R, gamma=0.9, tol=1e-12)
    report = check_lookahead_bound(P, R, 0.9, horizon=2, v_hat=v_star + 0.7,
                                   intrinsic_rewards=np.zeros((5, 3)))
    assert report.gap == pytest.approx(0.0, abs=1e-8)
    assert report.bound > 0.5
    assert report.eps_v == pytest.approx(0.7, abs=1e-8)
    assert report.holds


def test_bound_holds_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n_states = int(rng.integers(2, 7))
        n_actions = int(rng.integers(2, 5))
        P, R = random_mdp(rng, n_states, n_actions)
        gamma = float(rng.uniform(0.5, 0.97))
        horizon = int(rng.integers(1, 4))
        intr = rng.uniform(0, 0.3, size=(n_states, n_actions))
        v_joint, _ = value_iteration(P, R + intr, gamma, tol=1e-12)
        v_hat = v_joint + rng.uniform(-0.5, 0.5, size=n_states)
        report = check_lookahead_bound(P, R, gamma, horizon, v_hat, intr)
        assert report.holds, report


def test_bound_rejects_negative_intrinsic():
    P, R = chain_mdp()
    with pytest.raises(ValueError):
        check_lookahead_bound(P, R, 0.9, 1, np.zeros(2), np.full((2, 1), -0.1))


# -- bias report -------------------------------------------------------------------


def test_bias_exact_critic_is_zero():
    mc = np.array([1.0, 2.0, 3.0])
    rep = normalized_bias(mc.copy(), mc)
    assert rep.mean == 0.0 and rep.std == 0.0


def test_bias_constant_offset_hand_value():
    mc = np.array([1.0, 3.0])  # mean 2
    rep = normalized_bias(mc + 1.0, mc)
    assert rep.mean == pytest.approx(0.5)
    assert rep.std == pytest.approx(0.0)


def test_bias_scale_invariance():
    rng = np.random.default_rng(8)
    mc = rng.uniform(1, 3, size=10)
    q = mc + rng.normal(0, 0.2, size=10)
    a = normalized_bias(q, mc)
    b = normalized_bias(2 * q, 2 * mc)
    assert a.mean == pytest.approx(b.mean, rel=1e-9)
    assert a.std == pytest.approx(b.std, rel=1e-9)


def test_discounted_return_geometric():
    assert discounted_return(np.ones(4), 0.5) == pytest.approx(1 + 0.5 + 0.25 + 0.125)


def test_random_mdp_rows_stochastic():
    rng = np.random.default_rng(9)
    P, R = random_mdp(rng, 6, 4)
    np.testing.assert_allclose(P.sum(axis=-1), 1.0, atol=1e-12)
    assert R.min() >= 0 and R.max() <= 1
