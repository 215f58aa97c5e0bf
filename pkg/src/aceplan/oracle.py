"""Independent brute-force verifiers.

Everything here is deliberately slow and simple: exact value iteration,
exhaustive enumeration of H-step action sequences, exact policy evaluation,
the lookahead-performance-bound check on tabular problems, Monte-Carlo value
bias reports, and the central-difference gradient service used to audit the
autodiff engine. These are the reference implementations the fast paths get
compared against, so they must not share code with them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


# ---------------------------------------------------------------------------
# finite differences


def finite_difference_gradients(fn, params: dict, h: float = 1e-5) -> dict:
    """Central differences of fn(params) w.r.t. every entry of every array.

    `fn` maps {name: ndarray} -> float. Arrays are upcast to float64 so the
    checker's own rounding error stays far below the 1e-4 comparison band.
    The default step balances float64 roundoff (~|f|*5e-12) against O(h^2)
    truncation; 1e-3 is too coarse for layer-norm chains, whose third
    derivatives push truncation error above the band.
    """
    base = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}
    grads = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn(base)
            flat[i] = orig - h
            down = fn(base)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


# ---------------------------------------------------------------------------
# tabular MDP solvers


def value_iteration(transitions: np.ndarray, rewards: np.ndarray, gamma: float,
                    tol: float = 1e-10, max_iters: int = 100_000):
    """Exact V* and greedy policy for a tabular MDP, in float64.

    transitions: (S, A, S) row-stochastic, rewards: (S, A). Residuals must
    shrink every sweep (gamma-contraction); a violation is a hard error.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("value iteration needs gamma in [0, 1)")
    P = np.asarray(transitions, dtype=np.float64)
    R = np.asarray(rewards, dtype=np.float64)
    n_states = P.shape[0]
    v = np.zeros(n_states)
    prev_residual = np.inf
    for _ in range(max_iters):
        q = R + gamma * P @ v
        v_new = q.max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        if residual > prev_residual + 1e-13:
            raise AssertionError("value iteration residual increased; not a contraction")
        prev_residual = residual
        v = v_new
        if residual < tol:
            break
    else:
        raise RuntimeError("value iteration did not converge")
    policy = (R + gamma * P @ v).argmax(axis=1)
    return v, policy


def policy_evaluation(transitions: np.ndarray, rewards: np.ndarray, gamma: float,
                      policy: np.ndarray) -> np.ndarray:
    """Exact V^pi via the linear system (I - gamma * P_pi) v = r_pi."""
    P = np.asarray(transitions, dtype=np.float64)
    R = np.asarray(rewards, dtype=np.float64)
    n_states = P.shape[0]
    idx = np.arange(n_states)
    P_pi = P[idx, policy]
    r_pi = R[idx, policy]
    return np.linalg.solve(np.eye(n_states) - gamma * P_pi, r_pi)


def _all_action_sequences(n_actions: int, horizon: int) -> np.ndarray:
    grids = np.meshgrid(*([np.arange(n_actions)] * horizon), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def sequence_returns(transitions: np.ndarray, rewards: np.ndarray, gamma: float,
                     state: int, sequences: np.ndarray,
                     terminal_values: np.ndarray) -> np.ndarray:
    """Expected open-loop return of each action sequence from `state`.

    Propagates the state distribution exactly, so stochastic MDPs are scored
    by true expectation rather than sampling.
    """
    P = np.asarray(transitions, dtype=np.float64)
    R = np.asarray(rewards, dtype=np.float64)
    vterm = np.asarray(terminal_values, dtype=np.float64)
    n_seq, horizon = sequences.shape
    dist = np.zeros((n_seq, P.shape[0]))
    dist[:, state] = 1.0
    returns = np.zeros(n_seq)
    for t in range(horizon):
        acts = sequences[:, t]
        returns += gamma ** t * np.einsum("ns,ns->n", dist, R[:, acts].T)
        dist = np.einsum("ns,nsk->nk", dist, P[:, acts].transpose(1, 0, 2))
    returns += gamma ** horizon * dist @ vterm
    return returns


def exhaustive_plan(transitions: np.ndarray, rewards: np.ndarray, gamma: float,
                    state: int, horizon: int, terminal_values: np.ndarray,
                    budget: int = 1_000_000):
    """Exact argmax over every |A|^H action sequence; ties go to the lowest index."""
    n_actions = rewards.shape[1]
    if n_actions ** horizon > budget:
        raise ValueError("enumeration budget exceeded")
    seqs = _all_action_sequences(n_actions, horizon)
    returns = sequence_returns(transitions, rewards, gamma, state, seqs, terminal_values)
    best = int(np.argmax(returns))
    return seqs[best], float(returns[best])


def lookahead_policy(transitions: np.ndarray, rewards: np.ndarray, gamma: float,
                     horizon: int, terminal_values: np.ndarray) -> np.ndarray:
    """First action of the exact H-step optimizer at every state (MPC as a policy)."""
    n_states = transitions.shape[0]
    policy = np.zeros(n_states, dtype=np.int64)
    for s in range(n_states):
        seq, _ = exhaustive_plan(transitions, rewards, gamma, s, horizon, terminal_values)
        policy[s] = seq[0]
    return policy


# ---------------------------------------------------------------------------
# performance-bound check


@dataclass
class BoundCheck:
    gap: float          # J(optimal) - J(receding-horizon planner), worst start state
    bound: float        # (2 / (1 - gamma^H)) * gamma^H * (eps_v + alpha_r)
    eps_v: float        # max_s |v_hat - optimal value of the joint-reward MDP|
    eps_r: float        # max intrinsic reward magnitude
    alpha_r: float      # eps_r / (1 - gamma)
    holds: bool


def check_lookahead_bound(transitions: np.ndarray, ext_rewards: np.ndarray, gamma: float,
                          horizon: int, v_hat: np.ndarray,
                          intrinsic_rewards: np.ndarray,
                          slack: float = 1e-9) -> BoundCheck:
    """Check the suboptimality bound of an exact H-step planner whose terminal
    value estimate `v_hat` approximates the optimal value of the
    intrinsic-augmented MDP.

    The model is exact and the planner enumerates exhaustively, so the model
    and optimization error terms of the full bound vanish; what remains is
    (2 / (1 - gamma^H)) * gamma^H * (eps_v + alpha_r).
    """
    P = np.asarray(transitions, dtype=np.float64)
    Re = np.asarray(ext_rewards, dtype=np.float64)
    Ri = np.asarray(intrinsic_rewards, dtype=np.float64)
    if Ri.min() < 0:
        raise ValueError("intrinsic rewards must be non-negative")
    v_joint, _ = value_iteration(P, Re + Ri, gamma)
    eps_v = float(np.max(np.abs(np.asarray(v_hat, dtype=np.float64) - v_joint)))
    eps_r = float(Ri.max())
    alpha_r = eps_r / (1.0 - gamma)

    # receding-horizon planner: exact open-loop optimization of the external
    # reward plus discounted v_hat at the horizon, executing the first action
    planner = lookahead_policy(P, Re, gamma, horizon, np.asarray(v_hat, dtype=np.float64))
    v_star, _ = value_iteration(P, Re, gamma)
    v_planner = policy_evaluation(P, Re, gamma, planner)
    gap = float(np.max(v_star - v_planner))
    bound = 2.0 / (1.0 - gamma ** horizon) * (gamma ** horizon) * (eps_v + alpha_r)
    return BoundCheck(gap=gap, bound=bound, eps_v=eps_v, eps_r=eps_r, alpha_r=alpha_r,
                      holds=bool(gap <= bound + slack))


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               reward_max: float = 1.0, concentration: float = 0.3):
    """Random row-stochastic transition tensor and bounded reward table."""
    P = rng.gamma(concentration, size=(n_states, n_actions, n_states))
    P /= P.sum(axis=-1, keepdims=True)
    R = rng.uniform(0.0, reward_max, size=(n_states, n_actions))
    return P, R


# ---------------------------------------------------------------------------
# exact-model adapter for the sampling planner


class TabularLatentModel:
    """Expose an exact tabular MDP through the planner's latent-model interface.

    The "latent" is the state distribution, so a batched step is exact
    expectation propagation and the planner's rollout score of any action
    sequence equals `sequence_returns` for that sequence. Continuous scalar
    actions snap to the nearest grid point.
    """

    def __init__(self, transitions: np.ndarray, rewards: np.ndarray,
                 terminal_values: np.ndarray, action_grid: np.ndarray):
        self.P = np.asarray(transitions, dtype=np.float64)
        self.R = np.asarray(rewards, dtype=np.float64)
        self.v_term = np.asarray(terminal_values, dtype=np.float64)
        self.grid = np.asarray(action_grid, dtype=np.float64)
        self.action_dim = 1

    def encode(self, obs):
        state = int(obs)
        z = np.zeros((1, self.P.shape[0]))
        z[0, state] = 1.0
        return z, np.zeros((1, 0))

    def discretize(self, actions: np.ndarray) -> np.ndarray:
        a = np.asarray(actions, dtype=np.float64).reshape(-1)
        return np.abs(a[:, None] - self.grid[None, :]).argmin(axis=1)

    def step(self, z, b, actions):
        idx = self.discretize(actions)
        r = np.einsum("ns,ns->n", z, self.R[:, idx].T)
        z_next = np.einsum("ns,nsk->nk", z, self.P[:, idx].transpose(1, 0, 2))
        return z_next, b, r

    def terminal_value(self, z):
        return z @ self.v_term

    def policy_act(self, z):
        return np.zeros((z.shape[0], 1))


# ---------------------------------------------------------------------------
# Monte-Carlo value bias


@dataclass
class BiasReport:
    mean: float
    std: float
    normalizer: float
    n_states: int


def normalized_bias(q_estimates: np.ndarray, mc_returns: np.ndarray,
                    floor: float = 1e-3) -> BiasReport:
    """Mean/std of (Q_hat - Q_MC) / max(|mean Q_MC|, floor) across states."""
    q = np.asarray(q_estimates, dtype=np.float64)
    mc = np.asarray(mc_returns, dtype=np.float64)
    if q.shape != mc.shape or q.size == 0:
        raise ValueError("need matching, non-empty estimate/return arrays")
    normalizer = max(abs(float(mc.mean())), floor)
    bias = (q - mc) / normalizer
    return BiasReport(mean=float(bias.mean()), std=float(bias.std()),
                      normalizer=normalizer, n_states=q.size)


def discounted_return(rewards: np.ndarray, gamma: float) -> float:
    """Plain discounted sum, truncated at the end of the array (no bootstrap)."""
    r = np.asarray(rewards, dtype=np.float64)
    return float(r @ (gamma ** np.arange(r.size)))
