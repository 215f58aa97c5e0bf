"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one `[PASS]`/`[FAIL]` line (visible with `pytest -s`). The
two training-based criteria (maze exploration trend, sparse goal task) are
real multi-seed runs and dominate the runtime; everything else is seconds.
"""

import dataclasses
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from aceplan.agent import (
    AgentConfig,
    AgentNetworks,
    RewardNormalizer,
    qk_targets_batch,
    qlambda_targets_batch,
    raw_prediction_errors,
    td_lambda_weights,
)
from aceplan.agent.intrinsic import unit_squared_distance
from aceplan.envs import GoalTaskEnv
from aceplan.harness.config import load_config
from aceplan.harness.experiments import run_cells, run_maze_comparison
from aceplan.harness.train import Trainer, load_trainer
from aceplan.harness.verification import bound_suite, grad_suite, planner_suite
from aceplan.replay import Episode, SegmentReplay, her_relabel

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
ACCEPT_SEEDS = [0, 1, 2, 3, 4]


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"\n[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


# -- criterion 1: exponential re-weighting identity -------------------------------


def test_criterion_1_weight_identity():
    t0 = time.time()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        lam = float(rng.uniform(0.0, 1.0))
        horizon = int(rng.integers(1, 13))
        worst = max(worst, abs(td_lambda_weights(lam, horizon).sum() - 1.0))
    assert worst <= 1e-12

    # lambda = 0 must reproduce the one-step target bit for bit
    rewards = rng.normal(size=(64, 5))
    boot = rng.normal(size=(64, 5))
    dones = rng.uniform(size=(64, 5)) < 0.1
    lam0 = qlambda_targets_batch(rewards, boot, dones, 0.97, 0.0)
    direct = np.empty_like(lam0)
    gamma = 0.97
    horizon = 4
    for i in range(5):
        if i < horizon:
            mask = 1.0 - dones[:, i].astype(np.float64)
            direct[:, i] = rewards[:, i] + gamma * mask * boot[:, i + 1]
        else:
            direct[:, i] = boot[:, i]
    assert np.array_equal(lam0, direct)

    # lambda = 1 must equal the full-horizon target exactly
    lam1 = qlambda_targets_batch(rewards, boot, dones, 0.97, 1.0)
    qk = qk_targets_batch(rewards, boot, dones, 0.97)
    assert np.array_equal(lam1, qk[:, :, -1])
    elapsed = time.time() - t0
    report("criterion 1 (weight identity)",
           worst <= 1e-12 and elapsed < 1.0,
           f"1000 draws, worst |sum-1| = {worst:.2e}, bit-exact reductions, "
           f"{elapsed:.2f}s")


# -- criterion 2: gradient oracle --------------------------------------------------


def test_criterion_2_gradient_oracle():
    t0 = time.time()
    rep = grad_suite()
    elapsed = time.time() - t0
    report("criterion 2 (gradient oracle)", rep.passed and elapsed < 60.0,
           f"{rep.detail}, {elapsed:.1f}s")


# -- criterion 3: planner vs exhaustive enumeration ---------------------------------


def test_criterion_3_planner_vs_oracle():
    t0 = time.time()
    rep = planner_suite(n_instances=1000)
    elapsed = time.time() - t0
    report("criterion 3 (planner vs oracle)", rep.passed and elapsed < 120.0,
           f"{rep.detail}, {elapsed:.1f}s")


# -- criterion 4: performance bound --------------------------------------------------


def test_criterion_4_lookahead_bound():
    t0 = time.time()
    rep = bound_suite(n_instances=1000)
    elapsed = time.time() - t0
    report("criterion 4 (performance bound)", rep.passed and elapsed < 120.0,
           f"{rep.detail}, {elapsed:.1f}s")


# -- criterion 5: intrinsic reward contract -------------------------------------------


def test_criterion_5_intrinsic_contract():
    assert unit_squared_distance([0.3, 0.4], [0.3, 0.4]) == 0.0
    assert unit_squared_distance([1.0, 0.0], [0.0, 1.0]) == 2.0
    assert unit_squared_distance([1.0, 0.0], [-1.0, 0.0]) == 4.0

    nets = AgentNetworks(AgentConfig(obs_dim=3, action_dim=2, latent_dim=8,
                                     belief_dim=8, encoder_hidden=12, mlp_hidden=16),
                         np.random.default_rng(0))
    rng = np.random.default_rng(1)
    raw = raw_prediction_errors(nets, rng.normal(size=(512, 3)),
                                rng.uniform(-1, 1, size=(512, 2)),
                                rng.normal(size=(512, 3)))
    in_range = (raw >= 0.0).all() and (raw <= 4.0).all()

    norm = RewardNormalizer()
    out = None
    for _ in range(300):
        out = norm.normalize(np.full(64, 1.25))
    constant_zero = bool((out == 0.0).all())

    norm2 = RewardNormalizer(xi=0.5)
    unit_interval = True
    for _ in range(50):
        batch = norm2.normalize(rng.uniform(0, 4, size=128))
        unit_interval = unit_interval and (batch >= 0).all() and (batch <= 1).all()

    passed = in_range and constant_zero and unit_interval
    report("criterion 5 (intrinsic contract)", passed,
           f"fixtures 0/2/4 exact, raw in [0,4], constant stream -> 0, "
           f"outputs in [0,1]")


# -- criterion 6: replay statistics and hindsight exactness ----------------------------


def test_criterion_6_per_her():
    # sampling frequencies track priorities (chi-squared over 1e5 draws)
    store = SegmentReplay(horizon=1, rng=np.random.default_rng(2), alpha=1.0,
                          priority_eps=0.0)
    rng = np.random.default_rng(3)
    store.push_episode(Episode(obs=rng.normal(size=(9, 3)),
                               actions=rng.uniform(-1, 1, (8, 2)),
                               rewards=rng.uniform(size=8),
                               dones=np.zeros(8, dtype=bool)))
    tds = rng.uniform(0.2, 3.0, size=len(store))
    store.update_priorities(np.arange(len(store)), tds)
    draws = 100_000
    counts = np.bincount(store.sample(draws).indices, minlength=len(store))
    expected = draws * tds / tds.sum()
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    p_value = float(stats.chi2.sf(chi2, df=len(store) - 1))

    # hindsight rewards agree exactly with the goal predicate
    env = GoalTaskEnv()
    obs = [env.reset(seed=0)]
    rewards, dones, acts = [], [], []
    for a in rng.uniform(-1, 1, size=(30, 2)):
        o, r, d, _ = env.step(a)
        obs.append(o)
        rewards.append(r)
        dones.append(d)
        acts.append(a)
    ep = Episode(obs=np.stack(obs), actions=np.asarray(acts, dtype=np.float32),
                 rewards=np.asarray(rewards, dtype=np.float32),
                 dones=np.asarray(dones, dtype=bool))
    her_exact = True
    for copy in her_relabel(ep, 4, env, rng):
        goal = env.goal_from_obs(copy.obs[0])
        achieved = env.achieved_goal_from_obs(copy.obs[1:])
        her_exact = her_exact and np.array_equal(copy.rewards,
                                                 env.goal_reward(achieved, goal))

    # segments sampled from stores with random episode lengths never span
    # episode boundaries; each state is branded with its episode id
    trials = 0
    boundary_ok = True
    trial_rng = np.random.default_rng(4)
    while trials < 10_000:
        h = int(trial_rng.integers(1, 5))
        store2 = SegmentReplay(horizon=h, rng=np.random.default_rng(trials))
        for k in range(int(trial_rng.integers(1, 6))):
            t = int(trial_rng.integers(1, 20))
            ep_obs = trial_rng.normal(size=(t + 1, 2)).astype(np.float32)
            ep_obs[:, 0] = k
            store2.push_episode(Episode(obs=ep_obs,
                                        actions=trial_rng.uniform(-1, 1, (t, 1)),
                                        rewards=np.zeros(t), dones=np.zeros(t, bool)))
        batch = store2.sample(64)
        brands = batch.obs[:, :, 0]
        boundary_ok = boundary_ok and bool((brands == brands[:, :1]).all())
        trials += batch.size

    passed = p_value > 0.01 and her_exact and boundary_ok
    report("criterion 6 (PER/HER)", passed,
           f"chi2 p = {p_value:.3f}, hindsight rewards exact, "
           f"{trials} boundary trials clean")


# -- criterion 9: reproducibility ------------------------------------------------------


def test_criterion_9_reproducibility(tmp_path):
    cfg = load_config(str(CONFIG_DIR / "maze.cfg"))
    cfg = dataclasses.replace(cfg, total_env_steps=720, episode_env_steps=120,
                              seed_episodes=2, batch_size=16, checkpoint_every=0,
                              population_size=16, num_elites=4, iterations=2,
                              planning_horizon=3, horizon_schedule="2->3(3)")
    blobs = []
    for k in range(2):
        out = str(tmp_path / f"rep{k}")
        Trainer(cfg, out_dir=out).run()
        with open(os.path.join(out, "metrics.csv"), "rb") as fh:
            blobs.append(fh.read())
    identical = blobs[0] == blobs[1]

    out = str(tmp_path / "round_trip")
    trainer = Trainer(cfg, out_dir=out)
    trainer.run()
    before = trainer.evaluate(1)
    clone = load_trainer(os.path.join(out, "checkpoint_final"))
    after = clone.evaluate(1)
    round_trip = (np.array_equal(before["returns"], after["returns"])
                  and np.array_equal(before["trajectories"][0],
                                     after["trajectories"][0]))
    report("criterion 9 (reproducibility)", identical and round_trip,
           f"metrics byte-identical = {identical}, "
           f"checkpoint round-trip exact = {round_trip}")


# -- criterion 7: maze exploration trend ----------------------------------------------


@pytest.mark.slow
def test_criterion_7_maze_exploration_trend(tmp_path):
    t0 = time.time()
    base = load_config(str(CONFIG_DIR / "maze.cfg"))
    result = run_maze_comparison(base, ACCEPT_SEEDS, str(tmp_path / "maze"),
                                 variants=("ace", "ace-blind", "greedy"),
                                 workers=2)
    agg = result["aggregate"]
    ace = agg["ace"]["final_coverage_mean"]
    blind = agg["ace-blind"]["final_coverage_mean"]
    greedy = agg["greedy"]["final_coverage_mean"]
    ace_err = agg["ace"]["cumulative_model_error_mean"]
    greedy_err = agg["greedy"]["cumulative_model_error_mean"]
    passed = ace >= blind and ace >= greedy and ace_err <= greedy_err
    report("criterion 7 (maze exploration trend)", passed,
           f"coverage ace {ace:.3f} vs blind {blind:.3f} vs greedy {greedy:.3f}; "
           f"cumulative model error ace {ace_err:.3f} vs greedy {greedy_err:.3f}; "
           f"{len(ACCEPT_SEEDS)} seeds, {time.time() - t0:.0f}s")


# -- criterion 8: sparse goal task ------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_sparse_goal_task(tmp_path):
    t0 = time.time()
    base = load_config(str(CONFIG_DIR / "sparse_goal.cfg"))
    cells = []
    for variant in ("ace", "icem-no-value"):
        for seed in ACCEPT_SEEDS:
            values = dataclasses.asdict(dataclasses.replace(base, variant=variant,
                                                            seed=seed))
            cells.append((values, str(tmp_path / "sparse" / variant / f"s{seed}")))
    summaries = run_cells(cells, workers=2)
    ace_rates = [s["eval_success_rate"] for s in summaries if s["variant"] == "ace"]
    icem_rates = [s["eval_success_rate"] for s in summaries
                  if s["variant"] == "icem-no-value"]
    ace_hits = sum(r >= 0.8 for r in ace_rates)
    icem_mean = float(np.mean(icem_rates))
    passed = ace_hits >= 4 and icem_mean < 0.5
    report("criterion 8 (sparse goal task)", passed,
           f"ace success rates {ace_rates} ({ace_hits}/5 seeds >= 80%), "
           f"icem-no-value mean {icem_mean:.2f} (< 0.5 required), "
           f"{time.time() - t0:.0f}s")
