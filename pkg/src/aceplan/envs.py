"""Deterministic toy environments: continuous maze, point-mass goal tasks,
tabular MDPs, wrappers, and the offline transition-file format.

All environments are seeded state machines: identical seeds give identical
trajectories. Rewards and dynamics are simple enough that every quantity an
oracle needs (free cells, goal predicates, transition tensors) is exact.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

WALL, FREE, START = "#", ".", "S"
COLLISION_MARGIN = 1e-3


# ---------------------------------------------------------------------------
# maze


def parse_maze_text(text: str) -> tuple[np.ndarray, tuple[int, int]]:
    """ASCII maze -> (occupancy bitmap, start cell). '#' wall, '.' free, 'S' start."""
    rows = [line for line in text.strip("\n").splitlines() if line]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("maze rows must have equal length")
    grid = np.zeros((len(rows), width), dtype=bool)
    start = None
    for i, row in enumerate(rows):
        for j, ch in enumerate(row):
            if ch == WALL:
                grid[i, j] = True
            elif ch == START:
                if start is not None:
                    raise ValueError("maze must have exactly one start cell")
                start = (i, j)
            elif ch != FREE:
                raise ValueError(f"unknown maze character {ch!r}")
    if start is None:
        raise ValueError("maze must have a start cell")
    if not (grid[0].all() and grid[-1].all() and grid[:, 0].all() and grid[:, -1].all()):
        raise ValueError("maze boundary must be walls")
    return grid, start


def load_maze_file(path: str) -> tuple[np.ndarray, tuple[int, int]]:
    with open(path) as fh:
        return parse_maze_text(fh.read())


def default_maze_text() -> str:
    return importlib.resources.files("aceplan.fixtures").joinpath("maze_large.txt").read_text()


def free_cells(grid: np.ndarray) -> list[tuple[int, int]]:
    return [(i, j) for i in range(grid.shape[0]) for j in range(grid.shape[1])
            if not grid[i, j]]


class MazeEnv:
    """Point agent in a grid maze driven by a 2-D velocity command.

    One step() call is one substep: the position moves by dt * action with
    axis-separated wall collision (the offending component clamps at the wall
    face). The task is reward-free; exploration quality is measured externally
    through a CoverageTracker.

    The default dt gives a top speed of half a cell per (action-repeated)
    agent step; slower settings leave random warm-up data trapped in the
    start corridor and no variant can explore the fixture within a desk-scale
    step budget.
    """

    observation_dim = 2
    action_dim = 2
    action_low = -1.0
    action_high = 1.0
    is_goal_conditioned = False

    def __init__(self, maze_text: str | None = None, dt: float = 0.25):
        grid, start = parse_maze_text(maze_text if maze_text is not None else default_maze_text())
        self.grid = grid
        self.start_cell = start
        self.dt = dt
        self.pos = np.zeros(2)
        self._rng = np.random.default_rng(0)

    def _wall_at(self, x: float, y: float) -> bool:
        j, i = int(np.floor(x)), int(np.floor(y))
        if i < 0 or j < 0 or i >= self.grid.shape[0] or j >= self.grid.shape[1]:
            return True
        return bool(self.grid[i, j])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        i, j = self.start_cell
        self.pos = np.array([j + 0.5, i + 0.5])
        return self._obs()

    def _obs(self) -> np.ndarray:
        return self.pos.astype(np.float32).copy()

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64), self.action_low, self.action_high)
        x, y = self.pos
        new_x = x + self.dt * a[0]
        if self._wall_at(new_x, y):
            if a[0] > 0:
                new_x = np.floor(new_x) - COLLISION_MARGIN
            elif a[0] < 0:
                new_x = np.floor(new_x) + 1.0 + COLLISION_MARGIN
        new_y = y + self.dt * a[1]
        if self._wall_at(new_x, new_y):
            if a[1] > 0:
                new_y = np.floor(new_y) - COLLISION_MARGIN
            elif a[1] < 0:
                new_y = np.floor(new_y) + 1.0 + COLLISION_MARGIN
        self.pos = np.array([new_x, new_y])
        info = {"cell": (int(np.floor(new_y)), int(np.floor(new_x)))}
        return self._obs(), 0.0, False, info

    def cell_of(self, obs) -> tuple[int, int]:
        return (int(np.floor(obs[1])), int(np.floor(obs[0])))


class CoverageTracker:
    """Visited-cell bitmap over the free cells of a maze; coverage in [0, 1]."""

    def __init__(self, grid: np.ndarray):
        self.grid = grid
        self.free = free_cells(grid)
        self.visited = np.zeros_like(grid, dtype=bool)

    def update(self, cell: tuple[int, int]) -> None:
        i, j = cell
        if not self.grid[i, j]:
            self.visited[i, j] = True

    def coverage(self) -> float:
        return float(self.visited.sum() / len(self.free))

    def visited_bitmap(self) -> np.ndarray:
        return self.visited.copy()


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a 2-D array scaled to 0..255 as a binary portable graymap."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = img.min(), img.max()
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    data = (scaled * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5 {img.shape[1]} {img.shape[0]} 255\n".encode())
        fh.write(data.tobytes())


# ---------------------------------------------------------------------------
# point-mass goal task


class GoalTaskEnv:
    """Point mass in a box chasing a goal.

    Sparse mode pays 1 per step within `tol` of the goal and 0 otherwise;
    dense mode pays negative distance (the oracle-agent shaping). The goal is
    part of the observation, so hindsight relabeling can substitute it.

    Velocity damping keeps undirected motion diffusive; without it a random
    action stream saturates the velocity and stumbles into the goal often
    enough that the sparse task stops being an exploration problem.
    """

    observation_dim = 6  # pos(2) + vel(2) + goal(2)
    action_dim = 2
    action_low = -1.0
    action_high = 1.0
    is_goal_conditioned = True
    goal_dim = 2

    def __init__(self, sparse: bool = True, tol: float = 0.5, box: float = 6.0,
                 start=(0.5, 0.5), goal=(5.5, 5.5), damping: float = 0.9,
                 randomize_goal: bool = False):
        self.sparse = sparse
        self.tol = tol
        self.box = box
        self.damping = damping
        self.start = np.asarray(start, dtype=np.float64)
        self.fixed_goal = np.asarray(goal, dtype=np.float64)
        self.randomize_goal = randomize_goal
        self._rng = np.random.default_rng(0)
        self.pos = self.start.copy()
        self.vel = np.zeros(2)
        self.goal = self.fixed_goal.copy()

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.pos = self.start.copy()
        self.vel = np.zeros(2)
        if self.randomize_goal:
            self.goal = self._rng.uniform(0.5, self.box - 0.5, size=2)
        else:
            self.goal = self.fixed_goal.copy()
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel, self.goal]).astype(np.float32)

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64), self.action_low, self.action_high)
        self.vel = np.clip(self.damping * self.vel + 0.25 * a, -1.0, 1.0)
        new_pos = self.pos + 0.1 * self.vel
        for d in range(2):
            if new_pos[d] < 0.0 or new_pos[d] > self.box:
                new_pos[d] = np.clip(new_pos[d], 0.0, self.box)
                self.vel[d] = 0.0
        self.pos = new_pos
        reached = bool(np.linalg.norm(self.pos - self.goal) < self.tol)
        if self.sparse:
            reward = 1.0 if reached else 0.0
        else:
            reward = -float(np.linalg.norm(self.pos - self.goal))
        info = {"achieved_goal": self.pos.astype(np.float32).copy(), "success": reached}
        return self._obs(), reward, False, info

    # goal-conditioned interface used by hindsight relabeling
    def achieved_goal_from_obs(self, obs) -> np.ndarray:
        return np.asarray(obs)[..., 0:2]

    def goal_from_obs(self, obs) -> np.ndarray:
        return np.asarray(obs)[..., 4:6]

    def substitute_goal(self, obs, goal) -> np.ndarray:
        out = np.array(obs, dtype=np.float32, copy=True)
        out[..., 4:6] = goal
        return out

    def goal_reward(self, achieved, goal) -> np.ndarray:
        dist = np.linalg.norm(np.asarray(achieved) - np.asarray(goal), axis=-1)
        return (dist < self.tol).astype(np.float32)


# ---------------------------------------------------------------------------
# tabular MDP


@dataclass
class TabularMDP:
    """Exact small MDP for oracle verification."""

    transitions: np.ndarray  # (S, A, S), rows sum to 1
    rewards: np.ndarray      # (S, A) in [0, reward_max]
    gamma: float

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        R = np.asarray(self.rewards, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2]:
            raise ValueError("transition/reward shapes inconsistent")
        row_err = np.abs(P.sum(axis=-1) - 1.0).max()
        if row_err > 1e-12:
            raise ValueError(f"transition rows must sum to 1 (err {row_err:.2e})")
        if P.min() < 0:
            raise ValueError("negative transition probability")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        self.transitions = P
        self.rewards = R

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def sample_next(self, rng: np.random.Generator, state: int, action: int) -> int:
        return int(rng.choice(self.n_states, p=self.transitions[state, action]))


# ---------------------------------------------------------------------------
# wrappers


class ActionRepeat:
    """Repeat each agent action k times in the wrapped env; rewards sum."""

    def __init__(self, env, repeat: int):
        if repeat < 1:
            raise ValueError("repeat must be >= 1")
        self.env = env
        self.repeat = repeat

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self, seed=None):
        return self.env.reset(seed=seed)

    def step(self, action):
        total = 0.0
        obs, done, info = None, False, {}
        for _ in range(self.repeat):
            obs, reward, done, info = self.env.step(action)
            total += reward
            if done:
                break
        return obs, total, done, info


class TimeLimit:
    """End episodes after `max_steps` agent steps via info['time_limit'].

    The done flag is left untouched so truncation never zeroes value
    bootstraps; collectors end the episode on either signal.
    """

    def __init__(self, env, max_steps: int):
        self.env = env
        self.max_steps = max_steps
        self._t = 0

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self, seed=None):
        self._t = 0
        return self.env.reset(seed=seed)

    def step(self, action):
        obs, reward, done, info = self.env.step(action)
        self._t += 1
        if self._t >= self.max_steps:
            info = dict(info)
            info["time_limit"] = True
        return obs, reward, done, info


# ---------------------------------------------------------------------------
# environment registry


@dataclass
class EnvSpec:
    env: object
    id: str
    episode_steps: int   # agent steps per episode after wrappers
    action_repeat: int


def make_env(env_id: str, episode_env_steps: int = 600, action_repeat: int = 2,
             maze_text: str | None = None) -> EnvSpec:
    if env_id == "maze_large":
        base = MazeEnv(maze_text=maze_text)
    elif env_id == "point_goal_sparse":
        base = GoalTaskEnv(sparse=True)
    elif env_id == "point_goal_dense":
        base = GoalTaskEnv(sparse=False)
    else:
        raise ValueError(f"unknown env id {env_id!r}")
    agent_steps = episode_env_steps // action_repeat
    env = TimeLimit(ActionRepeat(base, action_repeat), agent_steps)
    return EnvSpec(env=env, id=env_id, episode_steps=agent_steps, action_repeat=action_repeat)


# ---------------------------------------------------------------------------
# transition files


MAGIC = "aceplan-transitions"


def write_transitions(path: str, env_id: str, obs_dim: int, act_dim: int,
                      transitions: list) -> None:
    """Header line then fixed-width little-endian float32 records
    (obs, action, reward, next_obs, done)."""
    count = len(transitions)
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} env={env_id} obs={obs_dim} act={act_dim} count={count}\n".encode())
        for obs, act, reward, next_obs, done in transitions:
            rec = np.concatenate([
                np.asarray(obs, dtype="<f4").reshape(-1),
                np.asarray(act, dtype="<f4").reshape(-1),
                np.array([reward], dtype="<f4"),
                np.asarray(next_obs, dtype="<f4").reshape(-1),
                np.array([1.0 if done else 0.0], dtype="<f4"),
            ])
            if rec.size != obs_dim * 2 + act_dim + 2:
                raise ValueError("record width does not match header dims")
            fh.write(rec.tobytes())


def read_transitions(path: str):
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        body = fh.read()
    parts = header.split()
    if not parts or parts[0] != MAGIC:
        raise ValueError(f"not a transition file: {header!r}")
    fields = dict(p.split("=", 1) for p in parts[1:])
    obs_dim, act_dim = int(fields["obs"]), int(fields["act"])
    count = int(fields["count"])
    width = obs_dim * 2 + act_dim + 2
    data = np.frombuffer(body, dtype="<f4")
    if data.size != count * width:
        raise ValueError("transition file body size mismatch")
    data = data.reshape(count, width)
    return {
        "env_id": fields["env"],
        "obs": data[:, :obs_dim].copy(),
        "actions": data[:, obs_dim:obs_dim + act_dim].copy(),
        "rewards": data[:, obs_dim + act_dim].copy(),
        "next_obs": data[:, obs_dim + act_dim + 1:obs_dim * 2 + act_dim + 1].copy(),
        "dones": data[:, -1].copy() > 0.5,
    }


# ---------------------------------------------------------------------------
# scripted navigator


def _bfs_path(grid: np.ndarray, start: tuple[int, int], target: tuple[int, int]):
    from collections import deque

    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == target:
            path = [cell]
            while prev[cell] is not None:
                cell = prev[cell]
                path.append(cell)
            return path[::-1]
        i, j = cell
        for ni, nj in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if not grid[ni, nj] and (ni, nj) not in prev:
                prev[(ni, nj)] = (i, j)
                queue.append((ni, nj))
    raise ValueError("maze is not connected")


def scripted_navigator_dataset(n_transitions: int, seed: int = 0,
                               maze_text: str | None = None,
                               episode_env_steps: int = 600, action_repeat: int = 2):
    """Offline transition set from a waypoint-following controller.

    The controller repeatedly BFS-routes to random free cells and steers along
    cell centers, producing transitions spread over the whole maze. Episode
    ends (time-limit resets) are marked with done so the file replays exactly.
    """
    spec = make_env("maze_large", episode_env_steps, action_repeat, maze_text=maze_text)
    env = spec.env
    grid = env.grid
    rng = np.random.default_rng(seed)
    cells = free_cells(grid)

    transitions = []
    obs = env.reset(seed=seed)
    path: list = []
    steps_in_episode = 0
    while len(transitions) < n_transitions:
        cell = env.cell_of(obs)
        if not path:
            target = cells[rng.integers(len(cells))]
            path = _bfs_path(grid, cell, target)[1:]
            if not path:
                path = [cell]
        waypoint = path[0]
        center = np.array([waypoint[1] + 0.5, waypoint[0] + 0.5])
        delta = center - np.asarray(obs, dtype=np.float64)
        action = np.clip(delta / max(np.linalg.norm(delta), 1e-6), -1.0, 1.0)
        next_obs, reward, done, info = env.step(action)
        steps_in_episode += 1
        episode_over = done or info.get("time_limit", False)
        transitions.append((obs, action.astype(np.float32), reward, next_obs, episode_over))
        obs = next_obs
        if np.linalg.norm(center - np.asarray(obs, dtype=np.float64)) < 0.2 and path:
            path.pop(0)
        if episode_over:
            obs = env.reset()
            path = []
            steps_in_episode = 0
    return transitions, spec
