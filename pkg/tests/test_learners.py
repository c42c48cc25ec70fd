import logging

import numpy as np
import pytest

from swrl.baselines import ManualBaseline, ManualPolicy, run_case
from swrl.config import _merge, parse_config, preset
from swrl.env import ManipEnv, frame_size
from swrl.errors import ArtifactMismatch
from swrl.learners import (
    SAC, DoubleDQN, collect_offline, load_policy, save_checkpoint, train_bc, train_swrl, train_vanilla,
    training_seed, write_curves,
)
from swrl.replay import ReplayBuffer, Transition

SMALL = {"mdp": {"episode_time": 0.5},
         "learner": {"d_feat": 32, "batch_size": 16, "warmup_steps": 30, "offline_episodes": 1, "episodes": 3}}


def _cfg(extra=None):
    return parse_config(_merge(_merge(preset("planar_valve").model_dump(mode="json"), SMALL), extra or {}))


def _t(marker, dim=4, n=1):
    return Transition(np.full(dim, marker), 0, np.zeros(n), marker, 0.0, np.full(dim, marker), False)


# ----------------------------------------------------------------------------
# replay
# ----------------------------------------------------------------------------

@pytest.mark.parametrize("B", [128, 127, 2, 33])
def test_replay_exact_split(B):
    buf = ReplayBuffer(500, 4, 1, offline_capacity=50)
    for _ in range(50):
        buf.add(_t(-1.0), offline=True)
    for _ in range(300):
        buf.add(_t(1.0))
    rng = np.random.default_rng(0)
    for _ in range(1000):
        batch = buf.sample(B, rng)
        # counted from the stored data itself, not from the buffer's bookkeeping
        n_on = int(np.sum(batch["r_K"] > 0))
        n_off = int(np.sum(batch["r_K"] < 0))
        assert (n_on, n_off) == ((B + 1) // 2, B // 2)


def test_replay_fallback_warns_once(caplog):
    buf = ReplayBuffer(100, 4, 1, offline_capacity=0)
    for _ in range(10):
        buf.add(_t(1.0))
    rng = np.random.default_rng(0)
    with caplog.at_level(logging.WARNING):
        for _ in range(5):
            b = buf.sample(8, rng)
            assert np.all(b["r_K"] > 0) and b["obs"].shape == (8, 4)
    assert sum("mixing disabled" in r.message for r in caplog.records) == 1


def test_replay_ring_and_terminal_flag():
    buf = ReplayBuffer(3, 2, 1)
    for i in range(5):
        buf.add(Transition(np.full(2, i), 0, np.zeros(1), i, 0.0, np.zeros(2), True,
                           "timeout" if i % 2 else "joint_limit"))
    assert buf.online.size == 3
    assert sorted(buf.online.r_K) == [2.0, 3.0, 4.0]
    # timeouts bootstrap, failures do not
    assert {float(r): t for r, t in zip(buf.online.r_K, buf.online.terminal)} == {2.0: 1.0, 3.0: 0.0, 4.0: 1.0}
    with pytest.raises(ValueError):
        ReplayBuffer(3, 2, 1).sample(4, np.random.default_rng(0))


# ----------------------------------------------------------------------------
# training loops
# ----------------------------------------------------------------------------

def test_zero_updates_leave_initialization():
    cfg = _cfg({"learner": {"warmup_steps": 10_000, "episodes": 1}})
    res = train_swrl(cfg, seed=4)
    env = ManipEnv(cfg, seed=training_seed(4, 0))
    lc = cfg.learner
    ref_q = DoubleDQN(env.obs_dim, 4, lc, np.random.default_rng([4, 3]), frame_size(3), 10)
    ref_a = SAC(env.obs_dim, 1, cfg.mdp.a_max, lc, np.random.default_rng([4, 4]), frame_size(3), 10)
    assert np.array_equal(res.agents["dqn"].q.get_flat(), ref_q.q.get_flat())
    assert np.array_equal(res.agents["sac"].actor.get_flat(), ref_a.actor.get_flat())


def test_swrl_training_is_deterministic(tmp_path):
    cfg = _cfg()
    a, b = train_swrl(cfg, seed=7), train_swrl(cfg, seed=7)
    write_curves(a, tmp_path / "a.csv", {"seed": 7})
    write_curves(b, tmp_path / "b.csv", {"seed": 7})
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert np.array_equal(a.agents["sac"].actor.get_flat(), b.agents["sac"].actor.get_flat())
    assert len(a.curves) == 3
    c = train_swrl(cfg, seed=8)
    assert [x.seed for x in c.curves] != [x.seed for x in a.curves]


def test_vanilla_deterministic_and_bounded():
    cfg = _cfg()
    a, b = train_vanilla(cfg, seed=2), train_vanilla(cfg, seed=2)
    assert [(c.return_K, c.return_R) for c in a.curves] == [(c.return_K, c.return_R) for c in b.curves]
    env = ManipEnv(cfg, seed=1000)
    for _ in range(20):
        a_K, a_R = a.agents["hybrid"].act(env.observe(), np.random.default_rng(0))
        assert a_K in range(4) and np.all(np.abs(a_R) <= cfg.mdp.a_max)


def test_ablations():
    cfg = _cfg({"learner": {"episodes": 1}})
    k_only = train_swrl(cfg, seed=1, ablation="k_only")
    assert "sac" not in k_only.agents and k_only.algo == "swrl_k_only"
    r_only = train_swrl(cfg, seed=1, ablation="r_only")
    assert "dqn" not in r_only.agents
    # the k-only policy never moves the redundant coordinate
    env = ManipEnv(cfg, seed=1000)
    while not env.done:
        env.step(k_only.policy.act_env(env))
    assert all(np.all(r.a_R == 0) for r in env.log.records)


def test_offline_transitions_recompute_rewards():
    cfg = _cfg()
    data = collect_offline(cfg, 1, seed=0)
    assert data and data[-1].done
    assert all(t.a_K in (0, 1, 2) and np.all(t.a_R == 0) for t in data)
    # redundant reward is exactly 1 with zero commands and no obstacles, minus the terminal penalty
    for t in data:
        expected = 1.0 + (cfg.mdp.terminal_penalty if t.done and t.cause != "timeout" else 0.0)
        assert t.r_R == expected


def test_bc_loss_decreases_and_zero_epochs():
    cfg = _cfg({"learner": {"bc_lr": 1e-3, "batch_size": 16}})
    data = collect_offline(cfg, 2, seed=0)[:100]
    env = ManipEnv(cfg, seed=0)
    zero = train_bc(cfg, data, 1, env.obs_dim, frame_size(3), epochs=0, seed=3)
    again = train_bc(cfg, data, 1, env.obs_dim, frame_size(3), epochs=0, seed=3)
    assert np.array_equal(zero.agents["bc"].net.get_flat(), again.agents["bc"].net.get_flat())
    res = train_bc(cfg, data, 1, env.obs_dim, frame_size(3), epochs=10, seed=3)
    losses = res.extra["train_loss"]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    with pytest.raises(ValueError):
        train_bc(cfg, [], 1, env.obs_dim)


def test_bc_replays_manual_on_training_scenario():
    cfg = parse_config(_merge(preset("planar_valve").model_dump(mode="json"),
                              {"learner": {"d_feat": 64, "batch_size": 64, "bc_holdout": 0.0}}))
    seed = 1003
    env = ManipEnv(cfg, seed=seed)
    data = []
    pol = ManualPolicy.for_env(env, quantized=True)
    obs = env.observe()
    while not env.done:
        a = pol.act(env.window)
        _, r_K, r_R, done, info = env.step(a)
        nobs = env.observe()
        data.append(Transition(obs, a.a_K, a.a_R, r_K, r_R, nobs, done, info["cause"]))
        obs = nobs
    manual = run_case(ManualBaseline(quantized=True), cfg, seed)
    res = train_bc(cfg, data, 1, env.obs_dim, frame_size(3), epochs=150, seed=0)
    bc = run_case(res.policy, cfg, seed)
    assert abs(bc.terminal_theta - manual.terminal_theta) <= 0.1 * manual.terminal_theta


def test_checkpoint_round_trip_and_mismatch(tmp_path):
    cfg = _cfg({"learner": {"episodes": 1}})
    res = train_swrl(cfg, seed=3)
    save_checkpoint(res, tmp_path / "swrl", cfg)
    env = ManipEnv(cfg, seed=1000)
    pol = load_policy(tmp_path / "swrl", cfg, env)
    obs = env.observe()
    assert pol.dqn.greedy(obs) == res.agents["dqn"].greedy(obs)
    assert np.array_equal(pol.sac.act(obs, deterministic=True), res.agents["sac"].act(obs, deterministic=True))
    wider = _cfg({"learner": {"episodes": 1, "d_feat": 48}})
    with pytest.raises(ArtifactMismatch):
        load_policy(tmp_path / "swrl", wider, ManipEnv(wider, seed=1000))
    with pytest.raises(ArtifactMismatch):
        load_policy(tmp_path / "missing", cfg, env)


def test_vanilla_learns_from_summed_reward(monkeypatch):
    from swrl import learners
    seen = []
    orig = learners.HybridSAC.update

    def spy(self, batch, reward):
        seen.append(np.array_equal(reward, _cfg().learner.reward_scale * (batch["r_K"] + batch["r_R"])))
        return orig(self, batch, reward)

    monkeypatch.setattr(learners.HybridSAC, "update", spy)
    train_vanilla(_cfg({"learner": {"episodes": 1}}), seed=0)
    assert seen and all(seen)
