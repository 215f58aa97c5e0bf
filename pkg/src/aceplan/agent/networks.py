"""Agent networks and the latent dynamics rollout.

The world model runs in a latent space: an encoder embeds observations, a
GRU cell advances a belief over (latent, action, belief), a projector maps
beliefs back to latents, and a predictor gives the train-time embedding used
by the normalized consistency loss. A reward head, a critic and a
deterministic tanh policy hang off the same latents. The encoder and critic
keep slow EMA target copies; target parameters never require gradients.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..nn import (
    MLP,
    GRUCell,
    Module,
    Tensor,
    cat,
    l2_normalize,
    no_grad,
)


@dataclass
class AgentConfig:
    obs_dim: int
    action_dim: int
    latent_dim: int = 50
    belief_dim: int = 128          # GRU hidden size
    encoder_hidden: int = 256
    mlp_hidden: int = 512
    action_low: float = -1.0
    action_high: float = 1.0
    twin_critic: bool = False
    norm_eps: float = 1e-8         # l2-normalization guard

    def __post_init__(self):
        if min(self.obs_dim, self.action_dim, self.latent_dim, self.belief_dim) < 1:
            raise ValueError("all dimensions must be positive")


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if arr.dtype != np.float64:  # float64 passes through for oracle checks
        arr = arr.astype(np.float32, copy=False)
    if arr.ndim == 1:
        arr = arr[None, :]
    return Tensor(arr)


class AgentNetworks(Module):
    def __init__(self, cfg: AgentConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        m, k, a = cfg.latent_dim, cfg.belief_dim, cfg.action_dim
        # encoder: one hidden layer with layer normalization
        self.encoder = MLP([cfg.obs_dim, cfg.encoder_hidden, m], rng, norm="layer")
        # recurrent dynamics core with layer-normalized gates
        self.gru = GRUCell(m + a, k, rng, layer_norm=True)
        # projector (belief -> latent) and predictor, both batch-normalized
        self.projector = MLP([k, cfg.mlp_hidden, m], rng, norm="batch")
        self.predictor = MLP([m, cfg.mlp_hidden, m], rng, norm="batch")
        # reward head conditioned on (latent, action, belief)
        self.reward = MLP([m + a + k, cfg.mlp_hidden, cfg.mlp_hidden, 1], rng)
        # critic(s) with layer normalization; deterministic tanh policy
        self.critic = MLP([m + a, cfg.mlp_hidden, cfg.mlp_hidden, 1], rng, norm="layer")
        if cfg.twin_critic:
            self.critic2 = MLP([m + a, cfg.mlp_hidden, cfg.mlp_hidden, 1], rng, norm="layer")
        self.policy = MLP([m, cfg.mlp_hidden, cfg.mlp_hidden, a], rng, out_activation="tanh")

        self.target_encoder = _frozen_copy(self.encoder)
        self.target_critic = _frozen_copy(self.critic)
        if cfg.twin_critic:
            self.target_critic2 = _frozen_copy(self.critic2)

        # target updates run every iteration; pair the parameter objects once
        self._ema_pairs = []
        pairs = [(self.target_encoder, self.encoder), (self.target_critic, self.critic)]
        if cfg.twin_critic:
            pairs.append((self.target_critic2, self.critic2))
        for tgt, online in pairs:
            t_named = dict(tgt.named_parameters())
            for name, op in online.named_parameters():
                self._ema_pairs.append((t_named[name], op))
        self._all_params = [p for _, p in self.named_parameters()]

    # -- basic ops -------------------------------------------------------------

    def encode(self, obs) -> Tensor:
        x = _as_tensor(obs)
        if x.shape[-1] != self.cfg.obs_dim:
            raise ValueError(f"observation width {x.shape[-1]} != {self.cfg.obs_dim}")
        return self.encoder(x)

    def target_encode(self, obs) -> Tensor:
        return self.target_encoder(_as_tensor(obs))

    def zero_belief(self, n: int) -> Tensor:
        return Tensor(np.zeros((n, self.cfg.belief_dim), dtype=np.float32))

    def belief_step(self, z: Tensor, action: Tensor, belief: Tensor) -> Tensor:
        return self.gru(cat([z, action], axis=-1), belief)

    def dynamics_step(self, z: Tensor, action: Tensor, belief: Tensor):
        """(z, a, b) -> (z', b', predicted reward)."""
        action = _as_tensor(action)
        b_next = self.belief_step(z, action, belief)
        z_next = self.projector(b_next)
        r_hat = self.reward(cat([z, action, belief], axis=-1))
        return z_next, b_next, r_hat

    def predict_embedding(self, z_next: Tensor) -> Tensor:
        """Normalized train-time prediction for the consistency loss."""
        return l2_normalize(self.predictor(z_next), eps=self.cfg.norm_eps)

    def target_embedding(self, next_obs) -> Tensor:
        return l2_normalize(self.target_encode(next_obs), eps=self.cfg.norm_eps)

    def policy_action(self, z: Tensor) -> Tensor:
        """Deterministic action squashed into the action box."""
        raw = self.policy(z)
        center = 0.5 * (self.cfg.action_high + self.cfg.action_low)
        half = 0.5 * (self.cfg.action_high - self.cfg.action_low)
        return raw * half + center

    def q_value(self, z: Tensor, action: Tensor, target: bool = False) -> Tensor:
        x = cat([z, _as_tensor(action)], axis=-1)
        if target:
            q = self.target_critic(x)
            if self.cfg.twin_critic:
                q2 = self.target_critic2(x)
                smaller = (q.data <= q2.data).astype(np.float32)
                q = q * smaller + q2 * (1.0 - smaller)
        else:
            q = self.critic(x)
        return q

    def q_value_both(self, z: Tensor, action: Tensor):
        x = cat([z, _as_tensor(action)], axis=-1)
        qs = [self.critic(x)]
        if self.cfg.twin_critic:
            qs.append(self.critic2(x))
        return qs

    # -- training-side helpers ---------------------------------------------------

    def rollout(self, z0: Tensor, actions: np.ndarray):
        """Unroll the latent dynamics over a segment with gradients.

        actions: (B, P, action_dim) with P steps. Returns per-step lists:
        latents z_0..z_P (predicted from z_1 on), beliefs b_0..b_P, and the
        (z_i, a_i, b_i) tuples needed by the reward head.
        """
        batch, steps, _ = actions.shape
        z = z0
        b = self.zero_belief(batch)
        latents = [z]
        beliefs = [b]
        inputs = []
        for i in range(steps):
            a = Tensor(np.ascontiguousarray(actions[:, i]))
            inputs.append((z, a, b))
            b = self.belief_step(z, a, b)
            z = self.projector(b)
            latents.append(z)
            beliefs.append(b)
        return latents, beliefs, inputs

    def segment_bootstrap(self, obs_flat: np.ndarray) -> np.ndarray:
        """Q_target(h(s), pi(h(s))) for a flat batch of raw states; no gradients."""
        with no_grad():
            self.eval()
            z = self.encode(obs_flat)
            a = self.policy_action(z)
            q = self.q_value(z, a, target=True)
        return q.data.reshape(-1).copy()

    def update_targets(self, momentum: float) -> None:
        inv = 1.0 - momentum
        for tp, op in self._ema_pairs:
            tp.data = momentum * tp.data + inv * op.data

    def zero_grad(self) -> None:
        for p in self._all_params:
            p.grad = None

    def trainable_model_parameters(self):
        """Everything updated by the joint model/value objective."""
        mods = [self.encoder, self.gru, self.projector, self.predictor,
                self.reward, self.critic]
        if self.cfg.twin_critic:
            mods.append(self.critic2)
        for mod in mods:
            yield from mod.parameters()

    def policy_parameters(self):
        yield from self.policy.parameters()


def _frozen_copy(module: Module) -> Module:
    target = copy.deepcopy(module)
    for p in target.parameters():
        p.requires_grad = False
    return target


# ---------------------------------------------------------------------------
# model losses


def embedding_consistency_losses(predictions, targets):
    """Per-step squared distance between normalized prediction and target
    embeddings; inputs are lists of (B, m) tensors (targets constant)."""
    return [((p - t) * (p - t)).sum(axis=-1) for p, t in zip(predictions, targets)]


def model_loss(nets: AgentNetworks, obs: np.ndarray, actions: np.ndarray,
               ext_rewards: np.ndarray, c1: float = 1.0, c2: float = 0.5):
    """Multi-step model predictive loss over one segment batch.

    obs: (B, P+1, obs_dim), actions: (B, P, action_dim), ext_rewards: (B, P).
    Returns (scalar loss, per-step consistency losses, per-step reward losses),
    each per-step entry a (B,) tensor. Gradients flow through the dynamics and
    the online encoder across time; targets come from the frozen encoder.
    """
    batch, steps = ext_rewards.shape
    z0 = nets.encode(obs[:, 0])
    latents, beliefs, inputs = nets.rollout(z0, actions)

    # step-major flat batches so row i*B+b is (segment b, step i) everywhere
    preds_cat = nets.predict_embedding(cat(latents[1:], axis=0))
    next_obs = np.ascontiguousarray(
        obs[:, 1:].transpose(1, 0, 2).reshape(steps * batch, -1))
    with no_grad():
        targets = nets.target_embedding(next_obs).data.reshape(steps, batch, -1)

    l_d = []
    for i in range(steps):
        diff = preds_cat[i * batch:(i + 1) * batch] - targets[i]
        l_d.append((diff * diff).sum(axis=-1))

    r_in = cat([cat(list(parts), axis=-1) for parts in inputs], axis=0)
    r_hat = nets.reward(r_in)
    l_r = []
    for i in range(steps):
        res = r_hat[i * batch:(i + 1) * batch, 0] - np.ascontiguousarray(ext_rewards[:, i])
        l_r.append(res * res)

    total = None
    for ld_i, lr_i in zip(l_d, l_r):
        step_loss = (ld_i * c1 + lr_i * c2).sum()
        total = step_loss if total is None else total + step_loss
    return total * (1.0 / batch), l_d, l_r


# ---------------------------------------------------------------------------
# planner adapter: raw-numpy eval-mode forwards
#
# Planning spends its whole budget on batched inference, so the adapter reads
# module weights directly instead of building autodiff graphs. A unit test
# pins these forwards to the tensor path.


def _np_activation(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "elu":
        return np.where(x > 0.0, x, np.expm1(x))
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    return x


def _np_norm(norm, x: np.ndarray) -> np.ndarray:
    from ..nn.layers import BatchNorm, LayerNorm

    if isinstance(norm, LayerNorm):
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered * (var + norm.eps) ** -0.5 * norm.scale.data + norm.offset.data
    if isinstance(norm, BatchNorm):  # eval mode: running statistics
        return ((x - norm.running_mean) * (norm.running_var + norm.eps) ** -0.5
                * norm.scale.data + norm.offset.data)
    raise TypeError(type(norm))


def _np_mlp(mlp: MLP, x: np.ndarray) -> np.ndarray:
    last = len(mlp.layers) - 1
    for i, layer in enumerate(mlp.layers):
        x = x @ layer.weight.data + layer.bias.data
        if i < last:
            if len(mlp.norms):
                x = _np_norm(mlp.norms[i], x)
            x = _np_activation(x, mlp.activation)
    return _np_activation(x, mlp.out_activation)


def _np_gru(cell: GRUCell, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    k = cell.hidden_size
    gx = x @ cell.w_x.data + cell.b_x.data
    gh = h @ cell.w_h.data + cell.b_h.data
    pre_r = gx[:, :k] + gh[:, :k]
    pre_u = gx[:, k:2 * k] + gh[:, k:2 * k]
    if cell.layer_norm:
        pre_r = _np_norm(cell.ln_r, pre_r)
        pre_u = _np_norm(cell.ln_u, pre_u)
    r = 1.0 / (1.0 + np.exp(-pre_r))
    u = 1.0 / (1.0 + np.exp(-pre_u))
    pre_n = gx[:, 2 * k:] + r * gh[:, 2 * k:]
    if cell.layer_norm:
        pre_n = _np_norm(cell.ln_n, pre_n)
    return (1.0 - u) * h + u * np.tanh(pre_n)


class PlanningModel:
    """Numpy-in/numpy-out eval-mode view of the networks for the planner."""

    def __init__(self, nets: AgentNetworks):
        self.nets = nets
        self.action_dim = nets.cfg.action_dim

    def encode(self, obs):
        obs = np.asarray(obs, dtype=np.float32).reshape(1, -1)
        z = _np_mlp(self.nets.encoder, obs)
        return z, np.zeros((1, self.nets.cfg.belief_dim), dtype=np.float32)

    def step(self, z, b, actions):
        z = np.asarray(z, dtype=np.float32)
        b = np.asarray(b, dtype=np.float32)
        a = np.asarray(actions, dtype=np.float32)
        b_next = _np_gru(self.nets.gru, np.concatenate([z, a], axis=-1), b)
        z_next = _np_mlp(self.nets.projector, b_next)
        r = _np_mlp(self.nets.reward, np.concatenate([z, a, b], axis=-1))
        return z_next, b_next, r.reshape(-1)

    def _policy(self, z: np.ndarray) -> np.ndarray:
        cfg = self.nets.cfg
        raw = _np_mlp(self.nets.policy, z)
        center = 0.5 * (cfg.action_high + cfg.action_low)
        half = 0.5 * (cfg.action_high - cfg.action_low)
        return raw * half + center

    def terminal_value(self, z):
        z = np.asarray(z, dtype=np.float32)
        a = self._policy(z)
        x = np.concatenate([z, a], axis=-1)
        q = _np_mlp(self.nets.critic, x)
        return q.reshape(-1)

    def policy_act(self, z):
        return self._policy(np.asarray(z, dtype=np.float32))
