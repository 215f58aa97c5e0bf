"""Prioritized replay over trajectory segments, plus hindsight relabeling.

Episodes are stored whole; sampling returns contiguous (horizon + 1)-step
segments that never cross an episode boundary. Priorities live in a sum tree
already exponentiated, i.e. the stored value is (|td| + eps)^alpha, and new
segments enter at the current maximum so nothing starves unseen.

Hindsight relabeling substitutes achieved goals from randomly chosen states
of the same episode and rewrites rewards with the environment's goal
predicate. Copies are relabeled with one goal each so that every segment
sampled from a copy sees a consistent goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SumTree:
    """Array-backed binary tree whose internal nodes hold children sums."""

    def __init__(self, capacity: int = 1024):
        self._cap = 1
        while self._cap < capacity:
            self._cap *= 2
        self._nodes = np.zeros(2 * self._cap, dtype=np.float64)
        self.size = 0

    @property
    def total(self) -> float:
        return float(self._nodes[1])

    def _grow(self) -> None:
        old_cap, old = self._cap, self._nodes
        self._cap *= 2
        self._nodes = np.zeros(2 * self._cap, dtype=np.float64)
        self._nodes[self._cap:self._cap + old_cap] = old[old_cap:]
        # rebuild internal sums
        for i in range(self._cap - 1, 0, -1):
            self._nodes[i] = self._nodes[2 * i] + self._nodes[2 * i + 1]

    def append(self, value: float) -> int:
        if self.size >= self._cap:
            self._grow()
        idx = self.size
        self.size += 1
        self.update(idx, value)
        return idx

    def update(self, idx: int, value: float) -> None:
        if not 0 <= idx < self.size:
            raise IndexError(idx)
        node = self._cap + idx
        delta = value - self._nodes[node]
        while node:
            self._nodes[node] += delta
            node //= 2

    def get(self, idx: int) -> float:
        return float(self._nodes[self._cap + idx])

    def find(self, mass: float) -> int:
        """Index of the leaf where the running prefix sum reaches `mass`."""
        node = 1
        while node < self._cap:
            left = 2 * node
            if mass <= self._nodes[left]:
                node = left
            else:
                mass -= self._nodes[left]
                node = left + 1
        return node - self._cap

    def leaves(self) -> np.ndarray:
        return self._nodes[self._cap:self._cap + self.size].copy()


@dataclass
class Episode:
    obs: np.ndarray       # (T+1, obs_dim)
    actions: np.ndarray   # (T, action_dim)
    rewards: np.ndarray   # (T,)
    dones: np.ndarray     # (T,) bool
    relabeled: bool = False

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float32)
        self.actions = np.asarray(self.actions, dtype=np.float32)
        self.rewards = np.asarray(self.rewards, dtype=np.float32)
        self.dones = np.asarray(self.dones, dtype=bool)
        t = len(self.actions)
        if self.obs.shape[0] != t + 1 or self.rewards.shape[0] != t or self.dones.shape[0] != t:
            raise ValueError("episode arrays are inconsistent")

    def __len__(self) -> int:
        return len(self.actions)


def pad_episode(episode: Episode, min_len: int) -> Episode:
    """Repeat the terminal transition with done=True until `min_len` steps."""
    t = len(episode)
    if t >= min_len:
        return episode
    extra = min_len - t
    return Episode(
        obs=np.concatenate([episode.obs, np.repeat(episode.obs[-1:], extra, axis=0)]),
        actions=np.concatenate([episode.actions,
                                np.repeat(episode.actions[-1:], extra, axis=0)]),
        rewards=np.concatenate([episode.rewards,
                                np.repeat(episode.rewards[-1:], extra)]),
        dones=np.concatenate([episode.dones, np.ones(extra, dtype=bool)]),
        relabeled=episode.relabeled,
    )


def relabel_episode(episode: Episode, goal: np.ndarray, goal_env) -> Episode:
    """Substitute one goal throughout the episode and recompute rewards with
    the environment's goal predicate."""
    obs = goal_env.substitute_goal(episode.obs, goal)
    achieved_next = goal_env.achieved_goal_from_obs(episode.obs[1:])
    rewards = goal_env.goal_reward(achieved_next, goal).astype(np.float32)
    return Episode(obs=obs, actions=episode.actions.copy(), rewards=rewards,
                   dones=episode.dones.copy(), relabeled=True)


def her_relabel(episode: Episode, k: int, goal_env, rng: np.random.Generator) -> list:
    """k relabeled copies, each using the achieved goal of one randomly
    drawn state of the episode."""
    if k <= 0 or goal_env is None or not getattr(goal_env, "is_goal_conditioned", False):
        return []
    copies = []
    for _ in range(k):
        pick = int(rng.integers(1, len(episode) + 1))
        goal = goal_env.achieved_goal_from_obs(episode.obs[pick])
        copies.append(relabel_episode(episode, goal, goal_env))
    return copies


@dataclass
class ReplayBatch:
    obs: np.ndarray        # (B, H+2, obs_dim)
    actions: np.ndarray    # (B, H+1, action_dim)
    rewards: np.ndarray    # (B, H+1)
    dones: np.ndarray      # (B, H+1)
    weights: np.ndarray    # (B,) importance-sampling, max-normalized
    indices: np.ndarray    # (B,) segment ids for priority updates
    relabeled: np.ndarray  # (B,) bool

    @property
    def size(self) -> int:
        return self.obs.shape[0]


class SegmentReplay:
    """PER over (horizon + 1)-transition segments with optional hindsight goals."""

    def __init__(self, horizon: int, rng: np.random.Generator, alpha: float = 0.6,
                 beta: float = 0.4, priority_eps: float = 1e-5,
                 her_k: int = 0, goal_env=None, max_episodes: int | None = None):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = horizon
        self.alpha = alpha
        self.beta = beta
        self.priority_eps = priority_eps
        self.her_k = her_k
        self.goal_env = goal_env
        self.max_episodes = max_episodes
        self.rng = rng
        self.episodes: list[Episode | None] = []
        self.segments: list[tuple[int, int]] = []  # (episode index, start)
        self._episode_segments: list[list[int]] = []
        self.tree = SumTree()
        self.max_priority = 1.0
        self.stale_updates = 0
        self.her_segments = 0
        self._live = 0

    def __len__(self) -> int:
        return self._live

    @property
    def n_transitions(self) -> int:
        return sum(len(ep) for ep in self.episodes if ep is not None)

    def push_episode(self, episode: Episode) -> list[int]:
        ids = self._store(episode)
        for copy in her_relabel(episode, self.her_k, self.goal_env, self.rng):
            her_ids = self._store(copy)
            self.her_segments += len(her_ids)
            ids.extend(her_ids)
        return ids

    def _store(self, episode: Episode) -> list[int]:
        episode = pad_episode(episode, self.horizon + 1)
        ep_idx = len(self.episodes)
        self.episodes.append(episode)
        ids = []
        for start in range(len(episode) - self.horizon):
            seg_id = self.tree.append(self.max_priority)
            assert seg_id == len(self.segments)
            self.segments.append((ep_idx, start))
            ids.append(seg_id)
        self._episode_segments.append(ids)
        self._live += len(ids)
        if self.max_episodes is not None:
            while sum(ep is not None for ep in self.episodes) > self.max_episodes:
                self._evict_oldest()
        return ids

    def _evict_oldest(self) -> None:
        for idx, ep in enumerate(self.episodes):
            if ep is not None:
                self.episodes[idx] = None
                for seg_id in self._episode_segments[idx]:
                    self.tree.update(seg_id, 0.0)
                self._live -= len(self._episode_segments[idx])
                self._episode_segments[idx] = []
                return

    def _gather(self, seg_id: int):
        ep_idx, start = self.segments[seg_id]
        ep = self.episodes[ep_idx]
        h = self.horizon
        return (ep.obs[start:start + h + 2],
                ep.actions[start:start + h + 1],
                ep.rewards[start:start + h + 1],
                ep.dones[start:start + h + 1],
                ep.relabeled)

    def sample(self, batch_size: int) -> ReplayBatch:
        if self._live == 0:
            raise RuntimeError("replay store is empty")
        total = self.tree.total
        draws = self.rng.uniform(0.0, total, size=batch_size)
        idx = np.array([self.tree.find(u) for u in draws], dtype=np.int64)
        priorities = np.array([self.tree.get(i) for i in idx])
        probs = priorities / total
        weights = (self._live * probs) ** (-self.beta)
        weights = weights / weights.max()

        rows = [self._gather(i) for i in idx]
        return ReplayBatch(
            obs=np.stack([r[0] for r in rows]),
            actions=np.stack([r[1] for r in rows]),
            rewards=np.stack([r[2] for r in rows]),
            dones=np.stack([r[3] for r in rows]),
            weights=weights.astype(np.float32),
            indices=idx,
            relabeled=np.array([r[4] for r in rows], dtype=bool),
        )

    def update_priorities(self, indices, td_errors) -> None:
        for seg_id, td in zip(np.asarray(indices), np.asarray(td_errors)):
            seg_id = int(seg_id)
            ep_idx, _ = self.segments[seg_id]
            if self.episodes[ep_idx] is None:
                self.stale_updates += 1
                continue
            p = (abs(float(td)) + self.priority_eps) ** self.alpha
            self.tree.update(seg_id, p)
            self.max_priority = max(self.max_priority, p)

    def stats(self) -> dict:
        return {
            "segments": self._live,
            "transitions": self.n_transitions,
            "max_priority": self.max_priority,
            "her_ratio": self.her_segments / max(len(self.segments), 1),
            "stale_updates": self.stale_updates,
        }
