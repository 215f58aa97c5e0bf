"""Off-policy value targets and losses.

Targets are pure numpy over segment arrays: k-step returns bootstrapped with
the target critic at real segment states, mixed into an exponentially
re-weighted average. Everything is capped inside the sampled segment, so
position i mixes fewer distinct horizons as it approaches the segment end.
Done flags (only produced by short-episode padding here) zero the bootstrap
and mask rewards beyond the flagged step.
"""

from __future__ import annotations

import numpy as np

from ..nn import Tensor, cat, no_grad
from .networks import AgentNetworks


def td_lambda_weights(lam: float, horizon: int) -> np.ndarray:
    """Mixture weights over k = 1..H: (1-lambda) lambda^(k-1) for k < H and
    lambda^(H-1) on the full-horizon term. Sums to one for any lambda, H."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    w = np.array([(1.0 - lam) * lam ** (k - 1) for k in range(1, horizon)] +
                 [lam ** (horizon - 1)], dtype=np.float64)
    return w


def qk_targets_batch(rewards: np.ndarray, bootstrap: np.ndarray, dones: np.ndarray,
                     gamma: float) -> np.ndarray:
    """All k-step targets for every position of a segment batch.

    rewards/bootstrap/dones: (B, H+1) joint rewards, target-critic values at
    the segment's real states, and done flags. Returns (B, H+1, H) where
    [:, i, k-1] is the k-step target from position i, with the forward index
    capped at the segment end.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    bootstrap = np.asarray(bootstrap, dtype=np.float64)
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    batch, positions = rewards.shape
    horizon = positions - 1
    out = np.zeros((batch, positions, horizon))
    for i in range(positions):
        acc = np.zeros(batch)
        mask = np.ones(batch)
        disc = 1.0
        n = i
        for k in range(1, horizon + 1):
            j = min(i + k, horizon)
            while n < j:
                acc = acc + disc * mask * rewards[:, n]
                mask = mask * notdone[:, n]
                disc *= gamma
                n += 1
            out[:, i, k - 1] = acc + disc * mask * bootstrap[:, j]
    return out


def qlambda_targets_batch(rewards, bootstrap, dones, gamma: float, lam: float) -> np.ndarray:
    """Exponentially re-weighted average of the k-step targets; (B, H+1)."""
    qk = qk_targets_batch(rewards, bootstrap, dones, gamma)
    w = td_lambda_weights(lam, qk.shape[-1])
    return qk @ w


def qk_target(rewards, bootstrap, dones, gamma: float, k: int, i: int) -> float:
    """Single k-step target for one segment (1-D arrays)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rewards = np.asarray(rewards, dtype=np.float64)
    if not 0 <= i < rewards.shape[0]:
        raise IndexError("position outside the segment")
    qk = qk_targets_batch(rewards[None], np.asarray(bootstrap)[None],
                          np.asarray(dones)[None], gamma)
    return float(qk[0, i, min(k, qk.shape[-1]) - 1])


def qlambda_target(rewards, bootstrap, dones, gamma: float, lam: float, i: int) -> float:
    q = qlambda_targets_batch(np.asarray(rewards)[None], np.asarray(bootstrap)[None],
                              np.asarray(dones)[None], gamma, lam)
    return float(q[0, i])


# ---------------------------------------------------------------------------
# losses (tensor-valued)


def lambda_residuals(nets: AgentNetworks, latents, actions: np.ndarray,
                     targets: np.ndarray, return_q: bool = False):
    """Per-step squared Bellman residuals [Q(z_i, a_i) - target_i]^2.

    latents: list of P (B, m) tensors from the model rollout (gradients flow
    into the critic and through the latents); targets are constants.
    Returns a list of (B,) tensors; with return_q also the stacked critic
    values as a tensor.
    """
    batch, steps = targets.shape
    z_cat = cat(latents, axis=0)
    a_cat = Tensor(np.ascontiguousarray(
        actions.transpose(1, 0, 2).reshape(steps * batch, -1), dtype=np.float32))
    q = nets.q_value(z_cat, a_cat)
    out = []
    for i in range(steps):
        res = q[i * batch:(i + 1) * batch, 0] - np.ascontiguousarray(targets[:, i])
        out.append(res * res)
    if return_q:
        return out, q
    return out


def lambda_loss(nets: AgentNetworks, latents, actions, targets) -> Tensor:
    """(1/H) sum_i [Q(z_i, a_i) - Q_lambda_i]^2, averaged over the batch."""
    res = lambda_residuals(nets, latents, actions, np.asarray(targets))
    horizon = len(res) - 1 if len(res) > 1 else 1
    total = None
    for r in res:
        total = r if total is None else total + r
    return total.mean() * (1.0 / horizon)


def rho_weighted_total(l_d, l_r, l_q, rho: float, c1: float, c2: float, c3: float):
    """Eq.-style multi-objective combination: sum_i rho^i (c1 Ld + c2 Lr + c3 Lq).

    Inputs are per-step lists of (B,) tensors; returns a (B,) tensor. rho = 0
    uses the 0^0 = 1 convention, so only the first step contributes.
    """
    total = None
    for i, (ld, lr, lq) in enumerate(zip(l_d, l_r, l_q)):
        w = 1.0 if i == 0 else rho ** i
        step = (ld * c1 + lr * c2 + lq * c3) * w
        total = step if total is None else total + step
    return total


def tdk_loss(nets: AgentNetworks, obs0: np.ndarray, actions0: np.ndarray,
             horizon: int, gamma: float) -> Tensor:
    """Ablation baseline: H-step Bellman error over a pure model rollout.

    The rollout starts from the sampled (s_0, a_0) and continues with policy
    actions and model rewards. The inner target discounts the bootstrap by
    gamma^H from every position, as the baseline formulation states it.
    """
    batch = obs0.shape[0]
    was_training = nets.training
    with no_grad():
        nets.eval()
        z = nets.encode(obs0)
        b = nets.zero_belief(batch)
        zs, acts, rhats = [], [], []
        for t in range(horizon):
            a = Tensor(np.asarray(actions0, dtype=np.float32)) if t == 0 \
                else nets.policy_action(z)
            z_next, b, r_hat = nets.dynamics_step(z, a, b)
            zs.append(z.data.copy())
            acts.append(a.data.copy())
            rhats.append(r_hat.data.reshape(-1).copy())
            z = z_next
        a_h = nets.policy_action(z)
        q_boot = nets.q_value(z, a_h, target=True).data.reshape(-1)
    rhats = np.stack(rhats, axis=1)  # (B, H)

    nets.train(was_training)
    total = None
    for t in range(horizon):
        target = np.zeros(batch)
        for k in range(t, horizon):
            target += gamma ** (k - t) * rhats[:, k]
        target += gamma ** horizon * q_boot
        q = nets.q_value(Tensor(zs[t]), Tensor(acts[t]))
        res = q[:, 0] - target
        sq = res * res
        total = sq if total is None else total + sq
    return total.mean() * (1.0 / horizon)


def policy_objective(nets: AgentNetworks, latents_detached: Tensor,
                     positions: int, horizon: int) -> Tensor:
    """Deterministic policy gradient surrogate: -(1/H) sum_i Q(z_i, pi(z_i)),
    batch-averaged. Latents are detached; only the policy takes gradient."""
    a = nets.policy_action(latents_detached)
    q = nets.q_value(latents_detached, a)
    return q.mean() * (-float(positions) / float(horizon))
