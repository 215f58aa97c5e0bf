"""Training loop: alternate planner-driven collection with off-policy updates.

One update iteration samples a single prioritized batch, recomputes intrinsic
rewards inline, unrolls the latent model once, and applies one optimizer step
to the joint objective (model consistency + reward prediction + re-weighted
Bellman error). The policy takes its own delayed step on detached latents,
and target networks move by EMA every iteration.
"""

from __future__ import annotations

import os
import time

import numpy as np

from ..agent.intrinsic import RewardNormalizer, intrinsic_batch, raw_prediction_errors
from ..agent.networks import AgentConfig, AgentNetworks, PlanningModel
from ..agent.values import (
    lambda_residuals,
    policy_objective,
    qlambda_targets_batch,
    rho_weighted_total,
)
from ..envs import CoverageTracker, make_env, read_transitions, write_pgm
from ..nn import AdamW, NonFiniteError, Tensor, cat, clip_grad_norm, no_grad
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..oracle import discounted_return, normalized_bias
from ..planner import ICEMPlanner
from ..replay import Episode, SegmentReplay
from .config import RunConfig, config_from_meta, config_to_meta

METRICS_HEADER = (
    "step,episode,ep_return,success,coverage,loss_total,loss_d,loss_r,loss_lambda,"
    "loss_pi,q_mean,target_mean,intrinsic_mu,intrinsic_sigma,intrinsic_clip_frac,"
    "intrinsic_max_raw,model_error,buffer_segments,buffer_max_priority,her_ratio,"
    "bias_mean,bias_std,wall_clock"
)


class TrainingDiverged(RuntimeError):
    pass


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.8g}"


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir: str | None = None):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = out_dir
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

        seeds = np.random.SeedSequence(cfg.seed).spawn(5)
        self.rng_init, self.rng_plan, self.rng_replay, self.rng_act, self.rng_misc = (
            np.random.default_rng(s) for s in seeds)

        self.env_spec = make_env(cfg.env, cfg.episode_env_steps, cfg.action_repeat)
        self.env = self.env_spec.env
        base = self.env.env.env  # unwrap TimeLimit(ActionRepeat(base))
        self.base_env = base

        self.nets = AgentNetworks(
            AgentConfig(obs_dim=base.observation_dim, action_dim=base.action_dim,
                        latent_dim=cfg.latent_dim, belief_dim=cfg.gru_hidden,
                        encoder_hidden=cfg.encoder_hidden, mlp_hidden=cfg.mlp_hidden,
                        action_low=base.action_low, action_high=base.action_high,
                        twin_critic=cfg.twin_critic),
            self.rng_init)
        self.planning_model = PlanningModel(self.nets)
        self.planner = ICEMPlanner(cfg.planner_config(base.action_dim), self.rng_plan)

        goal_env = base if getattr(base, "is_goal_conditioned", False) else None
        self.replay = SegmentReplay(
            horizon=cfg.rollout_horizon, rng=self.rng_replay, alpha=cfg.per_alpha,
            beta=cfg.per_beta, priority_eps=cfg.priority_eps, her_k=cfg.her_k,
            goal_env=goal_env,
            max_episodes=cfg.buffer_episodes if cfg.buffer_episodes > 0 else None)
        self.normalizer = RewardNormalizer(
            decay=cfg.intrinsic_decay, xi=cfg.reweight_xi,
            exponent_sign=cfg.reweight_exponent_sign)

        self.opt_model = AdamW(list(self.nets.trainable_model_parameters()),
                               lr=cfg.learning_rate)
        self.opt_policy = AdamW(list(self.nets.policy_parameters()),
                                lr=cfg.learning_rate)

        self.coverage = CoverageTracker(base.grid) if hasattr(base, "grid") else None
        self.model_error_set = (read_transitions(cfg.model_error_dataset)
                                if cfg.model_error_dataset else None)

        self.env_steps = 0
        self.agent_steps = 0
        self.episodes = 0
        self.updates = 0
        self.counters = {"batches_sampled": 0, "optimizer_steps": 0,
                         "intrinsic_batches": 0, "policy_steps": 0,
                         "target_updates": 0, "plans": 0}
        self._c_r = cfg.effective_intrinsic_coef()

    # -- acting --------------------------------------------------------------------

    def act(self, obs, exploring: bool = True) -> np.ndarray:
        cfg = self.cfg
        base = self.base_env
        if exploring and self.episodes < cfg.seed_episodes:
            return self.rng_act.uniform(base.action_low, base.action_high,
                                        size=base.action_dim)
        if cfg.variant == "greedy":
            with no_grad():
                self.nets.eval()
                z = self.nets.encode(np.asarray(obs, dtype=np.float32).reshape(1, -1))
                action = self.nets.policy_action(z).data[0].astype(np.float64)
            if exploring:
                action = action + self.rng_act.normal(0.0, cfg.greedy_noise_sigma,
                                                      size=action.shape)
            return np.clip(action, base.action_low, base.action_high)
        self.counters["plans"] += 1
        action, _ = self.planner.plan(self.planning_model, obs, episode=self.episodes)
        return np.clip(action, base.action_low, base.action_high)

    # -- one Alg.-style update iteration ----------------------------------------------

    def update(self) -> dict:
        cfg = self.cfg
        batch = self.replay.sample(cfg.batch_size)
        self.counters["batches_sampled"] += 1
        horizon = cfg.rollout_horizon
        positions = horizon + 1
        b, dim = batch.obs.shape[0], batch.obs.shape[-1]

        # intrinsic rewards recomputed inline from the current model
        if self._c_r > 0.0:
            r_int, intr_stats = intrinsic_batch(self.nets, self.normalizer,
                                                batch.obs, batch.actions)
            self.counters["intrinsic_batches"] += 1
        else:
            r_int = np.zeros_like(batch.rewards)
            intr_stats = {"intrinsic_mu": 0.0, "intrinsic_sigma": 0.0,
                          "intrinsic_clip_frac": 1.0, "intrinsic_max_raw": 0.0}
        joint = batch.rewards.astype(np.float64) + self._c_r * r_int

        # re-weighted value targets bootstrapped at the segment's real states
        boot = self.nets.segment_bootstrap(
            np.ascontiguousarray(batch.obs[:, :positions]).reshape(b * positions, dim)
        ).reshape(b, positions)
        targets = qlambda_targets_batch(joint, boot, batch.dones, cfg.discount,
                                        cfg.td_lambda)

        # joint gradient pass
        try:
            self.nets.train()
            self.nets.zero_grad()
            z0 = self.nets.encode(batch.obs[:, 0])
            latents, beliefs, inputs = self.nets.rollout(z0, batch.actions)
            l_d, l_r = self._model_step_losses(latents, inputs, batch.obs, batch.rewards)
            l_q, q_vals = lambda_residuals(self.nets, latents[:-1], batch.actions,
                                           targets, return_q=True)
            per_sample = rho_weighted_total(l_d, l_r, l_q, cfg.rollout_discount,
                                            cfg.similarity_coef, cfg.reward_coef,
                                            cfg.value_coef)
            weighted = per_sample * batch.weights
            loss = weighted.mean() * (1.0 / horizon)
            loss.backward()
        except NonFiniteError as exc:
            self._dump_divergence(batch)
            raise TrainingDiverged(str(exc)) from exc
        clip_grad_norm(self.opt_model.params, cfg.grad_clip_norm)
        self.opt_model.step()
        self.counters["optimizer_steps"] += 1

        # PER feedback: mean absolute Bellman residual per segment
        td = np.mean([np.sqrt(np.maximum(sq.data, 0.0)) for sq in l_q], axis=0)
        self.replay.update_priorities(batch.indices, td)

        # delayed deterministic policy step on detached latents
        loss_pi = None
        self.updates += 1
        if self.updates % cfg.policy_delay == 0:
            z_flat = Tensor(cat(latents[:-1], axis=0).data.copy())
            self.nets.zero_grad()
            pi_obj = policy_objective(self.nets, z_flat, positions, horizon)
            pi_obj.backward()
            clip_grad_norm(self.opt_policy.params, cfg.grad_clip_norm)
            self.opt_policy.step()
            self.counters["policy_steps"] += 1
            loss_pi = pi_obj.item()

        self.nets.update_targets(cfg.target_momentum)
        self.counters["target_updates"] += 1
        self.nets.eval()

        metrics = {
            "loss_total": loss.item(),
            "loss_d": float(np.mean([x.data.mean() for x in l_d])),
            "loss_r": float(np.mean([x.data.mean() for x in l_r])),
            "loss_lambda": float(np.mean([x.data.mean() for x in l_q])),
            "loss_pi": loss_pi,
            "q_mean": float(q_vals.data.mean()),
            "target_mean": float(targets.mean()),
        }
        metrics.update(intr_stats)
        return metrics

    def _model_step_losses(self, latents, inputs, obs, ext_rewards):
        """Per-step consistency and reward losses sharing the update's rollout."""
        b = obs.shape[0]
        steps = len(inputs)
        preds = self.nets.predict_embedding(cat(latents[1:], axis=0))
        next_obs = np.ascontiguousarray(
            obs[:, 1:].transpose(1, 0, 2).reshape(steps * b, -1))
        with no_grad():
            tgt = self.nets.target_embedding(next_obs).data.reshape(steps, b, -1)
        r_in = cat([cat(list(parts), axis=-1) for parts in inputs], axis=0)
        r_hat = self.nets.reward(r_in)
        l_d, l_r = [], []
        for i in range(steps):
            diff = preds[i * b:(i + 1) * b] - tgt[i]
            l_d.append((diff * diff).sum(axis=-1))
            res = r_hat[i * b:(i + 1) * b, 0] - np.ascontiguousarray(ext_rewards[:, i])
            l_r.append(res * res)
        return l_d, l_r

    def _dump_divergence(self, batch) -> None:
        if self.out_dir:
            np.savez(os.path.join(self.out_dir, "diverged_batch.npz"),
                     obs=batch.obs, actions=batch.actions, rewards=batch.rewards,
                     dones=batch.dones, weights=batch.weights)

    # -- episode collection ------------------------------------------------------------

    def collect_episode(self) -> dict:
        cfg = self.cfg
        env = self.env
        obs = env.reset(seed=cfg.seed if self.episodes == 0 else None)
        self.planner.reset()
        traj_obs = [np.asarray(obs, dtype=np.float32)]
        actions, rewards, dones = [], [], []
        success = False
        ep_return = 0.0
        update_metrics = []
        done_flag = False
        while True:
            action = self.act(obs)
            next_obs, reward, done, info = env.step(action)
            self.env_steps += cfg.action_repeat
            self.agent_steps += 1
            if self.coverage is not None and "cell" in info:
                self.coverage.update(info["cell"])
            success = success or bool(info.get("success", False))
            traj_obs.append(np.asarray(next_obs, dtype=np.float32))
            actions.append(np.asarray(action, dtype=np.float32))
            rewards.append(float(reward))
            dones.append(bool(done))
            ep_return += float(reward)
            obs = next_obs
            if self.episodes >= cfg.seed_episodes and len(self.replay):
                for _ in range(cfg.updates_per_step):
                    update_metrics.append(self.update())
            if done or info.get("time_limit"):
                done_flag = done
                break
        episode = Episode(obs=np.stack(traj_obs), actions=np.stack(actions),
                          rewards=np.asarray(rewards, dtype=np.float32),
                          dones=np.asarray(dones, dtype=bool))
        self.replay.push_episode(episode)
        self.episodes += 1
        out = {"ep_return": ep_return, "success": success, "steps": len(actions),
               "done": done_flag}
        if update_metrics:
            keys = [k for k in update_metrics[0] if k != "loss_pi"]
            for k in keys:
                out[k] = float(np.mean([m[k] for m in update_metrics]))
            pis = [m["loss_pi"] for m in update_metrics if m["loss_pi"] is not None]
            out["loss_pi"] = float(np.mean(pis)) if pis else ""
        return out

    # -- full run ---------------------------------------------------------------------

    def run(self) -> dict:
        cfg = self.cfg
        rows = []
        start = time.monotonic()
        metrics_path = os.path.join(self.out_dir, "metrics.csv") if self.out_dir else None
        if metrics_path:
            with open(metrics_path, "w") as fh:
                fh.write(METRICS_HEADER + "\n")
        self.save("checkpoint_init")
        while self.env_steps < cfg.total_env_steps:
            ep = self.collect_episode()
            row = self._metrics_row(ep, start)
            rows.append(row)
            if metrics_path:
                with open(metrics_path, "a") as fh:
                    fh.write(row + "\n")
            if self.out_dir and cfg.checkpoint_every and \
                    self.episodes % cfg.checkpoint_every == 0:
                self.save(f"checkpoint_{self.episodes:05d}")
        self.save("checkpoint_final")
        if self.out_dir and self.coverage is not None:
            write_pgm(os.path.join(self.out_dir, "coverage.pgm"),
                      self.coverage.visited_bitmap().astype(np.float64))
            if self.episodes > 0:
                write_pgm(os.path.join(self.out_dir, "value_grid.pgm"),
                          self.value_grid())
        return {"episodes": self.episodes, "env_steps": self.env_steps,
                "metrics_path": metrics_path, "rows": rows,
                "coverage": self.coverage.coverage() if self.coverage else None}

    def _metrics_row(self, ep: dict, start_time: float) -> str:
        cfg = self.cfg
        model_error = ""
        if self.model_error_set is not None and self.episodes % max(cfg.checkpoint_every, 1) == 0:
            model_error = self.offline_model_error()
        bias_mean = bias_std = ""
        if cfg.bias_report_every and self.episodes % cfg.bias_report_every == 0 \
                and self.episodes > cfg.seed_episodes:
            rep = self.bias_report()
            bias_mean, bias_std = rep.mean, rep.std
        stats = self.replay.stats()
        values = [
            self.env_steps, self.episodes, ep.get("ep_return", 0.0),
            ep.get("success", False), self.coverage.coverage() if self.coverage else "",
            ep.get("loss_total", ""), ep.get("loss_d", ""), ep.get("loss_r", ""),
            ep.get("loss_lambda", ""), ep.get("loss_pi", ""), ep.get("q_mean", ""),
            ep.get("target_mean", ""), ep.get("intrinsic_mu", ""),
            ep.get("intrinsic_sigma", ""), ep.get("intrinsic_clip_frac", ""),
            ep.get("intrinsic_max_raw", ""), model_error,
            stats["segments"], stats["max_priority"], stats["her_ratio"],
            bias_mean, bias_std,
            (time.monotonic() - start_time) if cfg.wall_clock else "",
        ]
        return ",".join(_fmt(v) for v in values)

    # -- evaluation ---------------------------------------------------------------------

    def evaluate(self, episodes: int, eval_seed: int = 1_000_003) -> dict:
        """Deterministic evaluation: fresh env instance and planner state,
        no exploration noise, no learning."""
        cfg = self.cfg
        spec = make_env(cfg.env, cfg.episode_env_steps, cfg.action_repeat)
        planner = ICEMPlanner(cfg.planner_config(self.base_env.action_dim),
                              np.random.default_rng(eval_seed))
        returns, successes = [], []
        trajs = []
        for k in range(episodes):
            obs = spec.env.reset(seed=eval_seed + k)
            planner.reset()
            total, success = 0.0, False
            traj = [np.asarray(obs, dtype=np.float32)]
            while True:
                if cfg.variant == "greedy":
                    action = self.act(obs, exploring=False)
                else:
                    action, _ = planner.plan(self.planning_model, obs,
                                             episode=10 ** 9)
                obs, reward, done, info = spec.env.step(action)
                total += float(reward)
                success = success or bool(info.get("success", False))
                traj.append(np.asarray(obs, dtype=np.float32))
                if done or info.get("time_limit"):
                    break
            returns.append(total)
            successes.append(success)
            trajs.append(np.stack(traj))
        return {"returns": np.asarray(returns), "success_rate": float(np.mean(successes)),
                "trajectories": trajs}

    def bias_report(self):
        """Monte-Carlo normalized value-estimation bias along rollouts of the
        variant's own acting policy (planner, or the reactive policy for the
        greedy variant)."""
        cfg = self.cfg
        spec = make_env(cfg.env, cfg.episode_env_steps, cfg.action_repeat)
        q_hat, q_mc = [], []
        rng = np.random.default_rng(3_000_017)
        planner = ICEMPlanner(cfg.planner_config(self.base_env.action_dim),
                              np.random.default_rng(2_000_003))
        per_rollout = max(1, cfg.bias_states // max(cfg.bias_rollouts, 1))
        for k in range(cfg.bias_rollouts):
            obs = spec.env.reset(seed=2_000_003 + k)
            planner.reset()
            states, acts, rewards = [], [], []
            while True:
                if cfg.variant == "greedy":
                    action = self.act(obs, exploring=False)
                else:
                    action, _ = planner.plan(self.planning_model, obs, episode=10 ** 9)
                states.append(np.asarray(obs, dtype=np.float32))
                acts.append(np.asarray(action, dtype=np.float32))
                obs, reward, done, info = spec.env.step(action)
                rewards.append(float(reward))
                if done or info.get("time_limit"):
                    break
            rewards = np.asarray(rewards)
            picks = rng.choice(len(states), size=min(per_rollout, len(states)),
                               replace=False)
            with no_grad():
                self.nets.eval()
                z = self.nets.encode(np.stack([states[i] for i in picks]))
                q = self.nets.q_value(z, np.stack([acts[i] for i in picks]))
            for row, i in enumerate(picks):
                q_hat.append(float(q.data[row, 0]))
                q_mc.append(discounted_return(rewards[i:], cfg.discount))
        return normalized_bias(np.asarray(q_hat), np.asarray(q_mc))

    def offline_model_error(self) -> float:
        """Mean one-step predictive error over the offline transition set."""
        data = self.model_error_set
        errors = raw_prediction_errors(self.nets, data["obs"], data["actions"],
                                       data["next_obs"])
        return float(errors.mean())

    def value_grid(self) -> np.ndarray:
        """Diagnostic for maze runs: per free cell, the mean critic value over
        eight unit-velocity action probes at the cell center (walls are 0)."""
        if self.coverage is None:
            raise RuntimeError("value grid is only defined for maze environments")
        grid = self.base_env.grid
        angles = np.arange(8) * (2 * np.pi / 8)
        probes = np.stack([np.cos(angles), np.sin(angles)], axis=1).astype(np.float32)
        out = np.zeros(grid.shape, dtype=np.float64)
        cells = [(i, j) for i in range(grid.shape[0]) for j in range(grid.shape[1])
                 if not grid[i, j]]
        centers = np.array([[j + 0.5, i + 0.5] for i, j in cells], dtype=np.float32)
        with no_grad():
            self.nets.eval()
            z = self.nets.encode(centers)
            for probe in probes:
                a = np.tile(probe, (len(cells), 1))
                q = self.nets.q_value(z, a).data.reshape(-1)
                for (i, j), v in zip(cells, q):
                    out[i, j] += v / len(probes)
        return out

    # -- persistence ------------------------------------------------------------------

    def save(self, name: str) -> str | None:
        if not self.out_dir:
            return None
        prefix = os.path.join(self.out_dir, name)
        meta = config_to_meta(self.cfg)
        meta.update({"env_steps": str(self.env_steps), "episodes": str(self.episodes)})
        save_checkpoint(prefix, self.nets.state_dict(), meta=meta)
        return prefix


def load_trainer(checkpoint_prefix: str, out_dir: str | None = None) -> Trainer:
    """Rebuild a trainer (networks + config) from a checkpoint pair."""
    state, meta = load_checkpoint(checkpoint_prefix)
    cfg = config_from_meta(meta)
    trainer = Trainer(cfg, out_dir=out_dir)
    trainer.nets.load_state_dict(state)
    return trainer
