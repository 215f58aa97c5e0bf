"""Sample-based trajectory optimizer: colored-noise CEM with shrinking
populations, elite reuse across iterations and timesteps, deterministic
policy proposals, and a softmax-weighted Gaussian refit.

The planner is model-agnostic. Anything with this duck-typed interface plans:

    encode(obs)            -> (z (1, m), b (1, k))     initial latent + belief
    step(z, b, a)          -> (z', b', r)              batched one-step rollout
    terminal_value(z)      -> (n,)                     value of the final latent
    policy_act(z)          -> (n, action_dim)          deterministic proposals

Rollout scoring sums discounted model rewards over the horizon and adds the
discounted terminal value; novelty enters only through that terminal value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# colored noise


def colored_noise(beta: float, size, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with power spectral density ~ 1/f^beta along the last axis.

    Zero mean, unit marginal variance. beta=0 reduces to white noise. Built by
    inverse-rFFT of spectrally shaped Gaussian components.
    """
    size = tuple(size)
    samples = size[-1]
    if samples == 1:
        return rng.normal(size=size)
    f = np.fft.rfftfreq(samples)
    s_scale = f.copy()
    s_scale[0] = s_scale[1]  # avoid the DC singularity; cutoff at 1/samples
    s_scale = s_scale ** (-beta / 2.0)

    # exact per-sample variance of the synthesized series: the inverse rFFT
    # weighs the real DC bin once, doubles interior bins, and (for even
    # lengths) takes the Nyquist bin once; the DC/Nyquist components get a
    # sqrt(2) magnitude boost below because they are constrained to be real
    even = samples % 2 == 0
    interior = s_scale[1:-1] if even else s_scale[1:]
    var_sum = 2.0 * s_scale[0] ** 2 + 4.0 * np.sum(interior ** 2)
    if even:
        var_sum += 2.0 * s_scale[-1] ** 2
    sigma = np.sqrt(var_sum) / samples

    shape_f = size[:-1] + (len(f),)
    sr = rng.normal(size=shape_f) * s_scale
    si = rng.normal(size=shape_f) * s_scale
    si[..., 0] = 0.0
    sr[..., 0] *= np.sqrt(2)
    if even:
        si[..., -1] = 0.0
        sr[..., -1] *= np.sqrt(2)
    return np.fft.irfft(sr + 1j * si, n=samples, axis=-1) / sigma


# ---------------------------------------------------------------------------
# configuration


@dataclass
class Schedule:
    """Linear per-episode schedule `start -> final (episodes)`."""

    start: float
    final: float
    episodes: int

    def at(self, episode: int) -> float:
        if self.episodes <= 0:
            return self.final
        frac = min(max(episode, 0), self.episodes) / self.episodes
        return self.start + (self.final - self.start) * frac


@dataclass
class PlannerConfig:
    action_dim: int
    horizon: int = 6
    iterations: int = 6
    population: int = 256
    elites: int = 32
    decay: float = 1.25                 # population shrink factor per iteration
    noise_beta: float = 2.5
    temperature: float = 0.5            # softmax temperature for the refit
    sigma_init: float = 0.5
    mu_init: float = 0.0
    elite_reuse_fraction: float = 0.25
    policy_fraction: float = 0.5
    mean_momentum: float = 0.1          # fraction of the previous mean retained
    discount: float = 0.99
    action_low: float = -1.0
    action_high: float = 1.0
    horizon_schedule: Schedule | None = None      # e.g. 2 -> 6 (5 episodes)
    sigma_floor_schedule: Schedule | None = None  # e.g. 0.5 -> 0.05 (5 episodes)
    use_terminal_value: bool = True     # False: plain CEM ablation without lookahead value
    scale_by_sigma_squared: bool = False  # literal sigma^2 noise scaling variant

    def __post_init__(self):
        if self.population < 2 * self.elites:
            raise ValueError("population must be at least twice the elite count")
        if self.iterations < 1 or self.horizon < 1:
            raise ValueError("iterations and horizon must be >= 1")
        if self.decay < 1.0:
            raise ValueError("population decay factor must be >= 1")
        for sched in (self.horizon_schedule, self.sigma_floor_schedule):
            if sched is not None and sched.episodes < 0:
                raise ValueError("schedule episode count must be >= 0")

    def horizon_at(self, episode: int) -> int:
        if self.horizon_schedule is None:
            return self.horizon
        return int(round(self.horizon_schedule.at(episode)))

    def sigma_floor_at(self, episode: int) -> float:
        if self.sigma_floor_schedule is None:
            return 0.0
        return float(self.sigma_floor_schedule.at(episode))


def refit_distribution(elites: np.ndarray, scores: np.ndarray, temperature: float,
                       prev_mu: np.ndarray | None = None, momentum: float = 0.0):
    """Softmax-weighted Gaussian fit over elite sequences.

    Scores are shifted by their max before exponentiation, which leaves the
    weights unchanged and avoids overflow. The fitted mean is blended with the
    previous one: mu <- momentum * prev + (1 - momentum) * fit.
    """
    if elites.shape[0] < 1:
        raise ValueError("need at least one elite")
    w = np.exp((scores - scores.max()) / temperature)
    w = w / w.sum()
    mu = np.einsum("e,ehm->hm", w, elites)
    var = np.einsum("e,ehm->hm", w, (elites - mu) ** 2)
    sigma = np.sqrt(var)
    if prev_mu is not None and momentum > 0.0:
        mu = momentum * prev_mu + (1.0 - momentum) * mu
    return mu, sigma


class ICEMPlanner:
    """Receding-horizon optimizer: plan, execute the first action, warm-start
    the next step by shifting the mean and elite set one step left."""

    def __init__(self, config: PlannerConfig, rng: np.random.Generator):
        self.cfg = config
        self.rng = rng
        self._mu: np.ndarray | None = None
        self._elites: np.ndarray | None = None

    def reset(self) -> None:
        """Drop warm starts (call at episode boundaries)."""
        self._mu = None
        self._elites = None

    # -- helpers ----------------------------------------------------------------

    @staticmethod
    def _shift(seq: np.ndarray, new_h: int) -> np.ndarray:
        """Shift one step left along the horizon axis, repeating the last entry,
        then resize to `new_h` rows (repeat last / truncate)."""
        shifted = np.concatenate([seq[..., 1:, :], seq[..., -1:, :]], axis=-2)
        h = shifted.shape[-2]
        if new_h > h:
            pad = np.repeat(shifted[..., -1:, :], new_h - h, axis=-2)
            shifted = np.concatenate([shifted, pad], axis=-2)
        elif new_h < h:
            shifted = shifted[..., :new_h, :]
        return shifted

    def _evaluate(self, model, z0: np.ndarray, b0: np.ndarray,
                  sequences: np.ndarray) -> np.ndarray:
        """Discounted model return of each sequence plus the terminal value."""
        n, horizon, _ = sequences.shape
        z = np.repeat(z0, n, axis=0)
        b = np.repeat(b0, n, axis=0)
        gamma = self.cfg.discount
        scores = np.zeros(n)
        for t in range(horizon):
            z, b, r = model.step(z, b, sequences[:, t])
            scores += gamma ** t * r
        if self.cfg.use_terminal_value:
            scores = scores + gamma ** horizon * model.terminal_value(z)
        bad = ~np.isfinite(scores)
        if bad.any():
            logger.warning("discarding %d non-finite rollout scores", int(bad.sum()))
            scores[bad] = -np.inf
            if bad.all():
                raise FloatingPointError("every rollout score was non-finite")
        return scores

    def _policy_sequence(self, model, z0: np.ndarray, b0: np.ndarray,
                         horizon: int) -> np.ndarray:
        z, b = z0, b0
        actions = np.zeros((horizon, self.cfg.action_dim))
        for t in range(horizon):
            a = model.policy_act(z)
            actions[t] = a[0]
            if t + 1 < horizon:
                z, b, _ = model.step(z, b, a)
        return actions

    # -- main entry ----------------------------------------------------------------

    def plan(self, model, obs, episode: int = 10**9):
        """Run the full optimization for one timestep; returns (action, info)."""
        cfg = self.cfg
        horizon = cfg.horizon_at(episode)
        sigma_floor = cfg.sigma_floor_at(episode)
        z0, b0 = model.encode(obs)

        try:
            return self._plan_inner(model, z0, b0, horizon, sigma_floor)
        except FloatingPointError:
            logger.warning("planner failed on non-finite model output; "
                           "falling back to the policy action")
            self.reset()
            return np.clip(model.policy_act(z0)[0], cfg.action_low, cfg.action_high), {
                "fallback": True}

    def _plan_inner(self, model, z0, b0, horizon, sigma_floor):
        cfg = self.cfg
        m = cfg.action_dim
        if self._mu is not None:
            mu = self._shift(self._mu, horizon)
        else:
            mu = np.full((horizon, m), float(cfg.mu_init))
        sigma = np.full((horizon, m), float(cfg.sigma_init))
        shifted_elites = self._shift(self._elites, horizon) if self._elites is not None else None

        n_reuse = max(1, int(round(cfg.elite_reuse_fraction * cfg.elites)))
        elites = None
        elite_scores = None
        pop_sizes = []
        # the deterministic policy proposal is iteration-invariant: roll and
        # score it once, then replicate score/sequence into each population
        proposal = proposal_score = None
        if cfg.policy_fraction > 0.0:
            proposal = self._policy_sequence(model, z0, b0, horizon)
            proposal_score = self._evaluate(model, z0, b0, proposal[None])[0]
        for k in range(cfg.iterations):
            s_k = max(int(cfg.population * cfg.decay ** (-k)), 2 * cfg.elites)
            assert s_k >= 2 * cfg.elites
            pop_sizes.append(s_k)
            noise = colored_noise(cfg.noise_beta, (s_k, m, horizon), self.rng)
            noise = np.swapaxes(noise, -1, -2)  # (s_k, horizon, m)
            scale = sigma ** 2 if cfg.scale_by_sigma_squared else sigma
            pool = [np.clip(mu + noise * scale, cfg.action_low, cfg.action_high)]
            reused = shifted_elites if k == 0 else elites
            if reused is not None:
                pool.append(reused[:n_reuse])
            if k == cfg.iterations - 1:
                pool.append(mu[None])
            fresh = np.concatenate(pool, axis=0)
            scores = self._evaluate(model, z0, b0, fresh)
            candidates = fresh
            if proposal is not None:
                n_pi = math.ceil(cfg.policy_fraction * s_k) if k == 0 else 1
                candidates = np.concatenate(
                    [fresh, np.repeat(proposal[None], n_pi, axis=0)], axis=0)
                scores = np.concatenate([scores, np.full(n_pi, proposal_score)])
            order = np.argsort(-scores, kind="stable")
            elites = candidates[order[:cfg.elites]]
            elite_scores = scores[order[:cfg.elites]]
            mu, sigma_fit = refit_distribution(elites, elite_scores, cfg.temperature,
                                               prev_mu=mu, momentum=cfg.mean_momentum)
            sigma = np.maximum(sigma_fit, sigma_floor)

        self._mu = mu
        self._elites = elites
        info = {
            "best_score": float(elite_scores[0]),
            "elite_score_mean": float(elite_scores.mean()),
            "population_sizes": pop_sizes,
            "horizon": horizon,
            "fallback": False,
        }
        return elites[0, 0].copy(), info
