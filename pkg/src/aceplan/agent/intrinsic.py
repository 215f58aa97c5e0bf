"""Curiosity signal: normalized one-step latent prediction error, then
EMA standardization, clipping at the running mean, and min-max reweighting.

The raw error for a transition is the squared distance between the
l2-normalized one-step prediction (from the ground-truth current latent with
a fresh zero belief) and the l2-normalized frozen-encoder embedding of the
next state, so it lives in [0, 4] by construction.
"""

from __future__ import annotations

import numpy as np

from ..nn import no_grad
from .networks import AgentNetworks

# normalized values at or below this are treated as exactly at the running
# mean; keeps float drift on a constant error stream from minting novelty
CLIP_ATOL = 1e-9


def unit_squared_distance(u, v, eps: float = 1e-8) -> float:
    """Squared distance between l2-normalized vectors; the definitional core
    of the raw signal. 0 for equal directions, 2 for orthogonal, 4 opposite."""
    u = np.asarray(u, dtype=np.float32)
    v = np.asarray(v, dtype=np.float32)
    un = u / np.sqrt((u * u).sum() + eps * eps)
    vn = v / np.sqrt((v * v).sum() + eps * eps)
    return float(((un - vn) ** 2).sum())


def raw_prediction_errors(nets: AgentNetworks, obs: np.ndarray, actions: np.ndarray,
                          next_obs: np.ndarray) -> np.ndarray:
    """Per-transition raw curiosity in [0, 4]; pure, no gradients.

    Each transition is scored independently: the belief is zero-initialized,
    and the current latent comes from the online encoder applied to the real
    state (one-step prediction keeps the reward variance down).
    """
    obs = np.asarray(obs, dtype=np.float32)
    with no_grad():
        nets.eval()
        z = nets.encode(obs)
        b = nets.zero_belief(obs.shape[0])
        z_next, _, _ = nets.dynamics_step(z, np.asarray(actions, dtype=np.float32), b)
        pred = nets.predict_embedding(z_next)
        target = nets.target_embedding(np.asarray(next_obs, dtype=np.float32))
        err = ((pred.data - target.data) ** 2).sum(axis=-1)
    return np.clip(err.astype(np.float64), 0.0, 4.0)


class RewardNormalizer:
    """EMA-standardize raw errors, clip below the running mean, rescale so the
    strongest surviving entry maps to 1.

    The rescale is (r / r_max) ** (sign * xi) over strictly positive clipped
    entries; zeros stay zero. sign=+1 (default) keeps the prioritization
    order and the [0, 1] range; sign=-1 is the order-inverting variant.
    """

    def __init__(self, decay: float = 0.99, sigma_floor: float = 1e-6,
                 xi: float = 0.5, exponent_sign: int = 1):
        if exponent_sign not in (1, -1):
            raise ValueError("exponent_sign must be +1 or -1")
        self.decay = decay
        self.sigma_floor = sigma_floor
        self.xi = xi
        self.exponent_sign = exponent_sign
        self.mean = 0.0
        self.mean_sq = 0.0
        self.initialized = False

    @property
    def sigma(self) -> float:
        var = max(self.mean_sq - self.mean ** 2, 0.0)
        return max(np.sqrt(var), self.sigma_floor)

    def query(self, raw: np.ndarray) -> np.ndarray:
        """Pure read-only normalization with the current statistics."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.size == 0:
            return np.zeros_like(raw)
        if not self.initialized:
            raise RuntimeError("normalizer has no statistics yet")
        normalized = (raw - self.mean) / self.sigma
        clipped = np.where(normalized > CLIP_ATOL, normalized, 0.0)
        out = np.zeros_like(clipped)
        positive = clipped > 0.0
        if positive.any():
            r_max = clipped.max()
            out[positive] = (clipped[positive] / r_max) ** (self.exponent_sign * self.xi)
        return out

    def observe(self, raw: np.ndarray) -> None:
        raw = np.asarray(raw, dtype=np.float64)
        if raw.size == 0:
            return
        if not self.initialized:
            self.mean = float(raw.mean())
            self.mean_sq = float((raw ** 2).mean())
            self.initialized = True
            return
        d = self.decay
        self.mean = d * self.mean + (1.0 - d) * float(raw.mean())
        self.mean_sq = d * self.mean_sq + (1.0 - d) * float((raw ** 2).mean())

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        """Stateful path: bootstrap statistics on the first batch, emit
        normalized rewards, then fold the batch into the EMA."""
        raw = np.asarray(raw, dtype=np.float64)
        if not self.initialized:
            self.observe(raw)
            return self.query(raw)
        out = self.query(raw)
        self.observe(raw)
        return out

    def stats(self) -> dict:
        return {"mean": self.mean, "sigma": self.sigma, "initialized": self.initialized}


def intrinsic_batch(nets: AgentNetworks, normalizer: RewardNormalizer,
                    obs: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, dict]:
    """Raw + normalized intrinsic rewards for a segment batch.

    obs: (B, P+1, obs_dim); actions: (B, P, action_dim). Returns the (B, P)
    normalized rewards and summary statistics for the metrics log.
    """
    batch, steps = actions.shape[:2]
    flat_obs = obs[:, :-1].reshape(batch * steps, -1)
    flat_next = obs[:, 1:].reshape(batch * steps, -1)
    flat_act = actions.reshape(batch * steps, -1)
    raw = raw_prediction_errors(nets, flat_obs, flat_act, flat_next)
    rewards = normalizer.normalize(raw)
    stats = {
        "intrinsic_mu": normalizer.mean,
        "intrinsic_sigma": normalizer.sigma,
        "intrinsic_clip_frac": float((rewards == 0.0).mean()),
        "intrinsic_max_raw": float(raw.max()),
    }
    return rewards.reshape(batch, steps), stats
