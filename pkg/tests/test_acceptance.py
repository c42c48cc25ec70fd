"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines, or
``python3 tests/test_acceptance.py`` for a plain summary.
"""

import json
import time

import numpy as np
import pytest

from swrl.baselines import RMP_CLIP, ManualBaseline, eval_seeds, evaluate, rmp
from swrl.config import preset
from swrl.controller import GainSet, compute_torque
from swrl.env import (
    CONTROL_HZ, DELTA_F_SET, K1, K2, POLICY_HZ, TERMINAL_PENALTY, VELOCITY_BANDS, WINDOW_LENGTH,
    ManipEnv, check_terminal, reward_K, reward_R,
)
from swrl.kinematics import (
    Transform, ee_pose, franka_like_arm, geometric_jacobian, jacobian_world, joint_space_inertia, manipulability,
    planar_arm, task_inertia,
)
from swrl.learners import SAC, BCModel, DoubleDQN, HybridSAC, train_swrl, train_vanilla
from swrl.nn import Dense, Sequential, Tanh, _rel_err, gradient_check, mlp
from swrl.plotting import smooth
from swrl.replay import ReplayBuffer, Transition
from swrl.world import ObjectModel, World

RESULTS: dict[int, tuple[bool, str]] = {}


def report(n: int, ok: bool, detail: str, runtime: float, limit: float | None = None) -> bool:
    in_time = limit is None or runtime <= limit
    passed = bool(ok and in_time)
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'} | {detail} | {runtime:.2f} s{budget}"
    print("\n" + line)
    RESULTS[n] = (passed, line)
    return passed


# ----------------------------------------------------------------------------
# 1. kinematics oracles
# ----------------------------------------------------------------------------

def check_kinematics() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst_J, eps = 0.0, 1e-6
    for model in (planar_arm([0.45, 0.40, 0.12], [2.0, 1.5, 0.5]), franka_like_arm()):
        for _ in range(5):
            q = rng.uniform(model.q_min + 0.05, model.q_max - 0.05)
            J = jacobian_world(model, q)
            fd = np.empty_like(J)
            R0 = ee_pose(model, q).rotation
            for i in range(model.dof):
                dq = np.zeros(model.dof)
                dq[i] = eps
                Tp, Tm = ee_pose(model, q + dq), ee_pose(model, q - dq)
                fd[:3, i] = (Tp.translation - Tm.translation) / (2 * eps)
                W = (Tp.rotation - Tm.rotation) / (2 * eps) @ R0.T
                fd[3:, i] = [W[2, 1], W[0, 2], W[1, 0]]
            worst_J = max(worst_J, np.linalg.norm(J - fd) / np.linalg.norm(fd))
    arm = franka_like_arm()
    worst_sym, min_eig = 0.0, np.inf
    for _ in range(10):
        M = joint_space_inertia(arm, rng.uniform(arm.q_min, arm.q_max))
        worst_sym = max(worst_sym, np.max(np.abs(M - M.T)))
        min_eig = min(min_eig, np.linalg.eigvalsh(0.5 * (M + M.T)).min())
    # single revolute link: Lambda = M / L^2 for the tangential coordinate
    m, L = 1.5, 0.8
    one = planar_arm([L], [m])
    M1 = joint_space_inertia(one, [0.0])
    lam_err = abs(task_inertia(jacobian_world(one, [0.0])[[1]], M1)[0, 0] - M1[0, 0] / L ** 2)
    lam_err = max(lam_err, abs(task_inertia(np.array([[L]]), np.array([[m * L * L]]))[0, 0] - m))
    l1, l2 = 0.7, 1.3
    two = planar_arm([l1, l2])
    w_err = max(abs(manipulability(jacobian_world(two, [0.4, q2])[:2]) - l1 * l2 * abs(np.sin(q2)))
                for q2 in np.linspace(-3.0, 3.0, 25))
    ok = worst_J < 1e-5 and worst_sym < 1e-9 and min_eig > 0 and lam_err <= 1e-9 and w_err <= 1e-9
    return ok, (f"jacobian rel err {worst_J:.1e}, M asym {worst_sym:.1e} min eig {min_eig:.2e}, "
                f"1-dof Lambda err {lam_err:.1e}, 2-link w err {w_err:.1e}")


def test_criterion_1_kinematics():
    t0 = time.perf_counter()
    ok, detail = check_kinematics()
    assert report(1, ok, detail, time.perf_counter() - t0, 10)


# ----------------------------------------------------------------------------
# 2. controller decomposition
# ----------------------------------------------------------------------------

def check_controller() -> tuple[bool, str]:
    b = geometric_jacobian(franka_like_arm(), np.array([0.1, -0.4, 0.2, -2.0, 0.1, 1.8, 0.5]))
    G = GainSet()
    rng = np.random.default_rng(1)
    X, V, F, g = rng.normal(size=6), rng.normal(size=6), 10 * rng.normal(size=6), rng.normal(size=7)
    I6, Z6 = np.eye(6), np.zeros((6, 6))
    dF_full = max(np.max(np.abs(compute_torque(b, I6, G, X, V, F, g) - compute_torque(b, I6, G, X, V, Fp, g)))
                  for Fp in (rng.normal(size=6) * 30 for _ in range(5)))
    dXV_zero = max(np.max(np.abs(compute_torque(b, Z6, G, X, V, F, g) - compute_torque(b, Z6, G, Xp, Vp, F, g)))
                   for Xp, Vp in ((rng.normal(size=6), rng.normal(size=6)) for _ in range(5)))
    # mixed selection: each input must move only its own term
    S = np.diag([0, 0, 1, 1, 1, 1.0])
    s = np.diag(S)
    base = compute_torque(b, S, G, X, V, F, g)
    cross, h = 0.0, 1e-3
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        cross = max(cross,
                    np.max(np.abs(compute_torque(b, S, G, X, V, F + e, g) - base - b.J.T @ ((1 - s) * e))),
                    np.max(np.abs(compute_torque(b, S, G, X + e, V, F, g) - base
                                  - b.J.T @ (b.Lambda @ (s * G.Kp * e)))),
                    np.max(np.abs(compute_torque(b, S, G, X, V + e, F, g) - base
                                  - b.J.T @ (b.Lambda @ (s * G.Kd * e)))))
    ok = dF_full == 0.0 and dXV_zero == 0.0 and cross < 1e-12
    return ok, f"S=I force effect {dF_full:.1e}, S=0 motion effect {dXV_zero:.1e}, cross-sensitivity {cross:.1e}"


def test_criterion_2_controller():
    t0 = time.perf_counter()
    ok, detail = check_controller()
    assert report(2, ok, detail, time.perf_counter() - t0, 5)


# ----------------------------------------------------------------------------
# 3. physics invariants
# ----------------------------------------------------------------------------

def _wheel(**kw):
    base = dict(kind="planar_valve", joint_type="revolute", joint_origin=Transform(translation=[0.52, 0.22, 0.0]),
                joint_axis=[0.0, 0.0, 1.0], handle_offset=[0.15, 0.0, 0.0], dry_friction=0.0,
                viscous_damping=0.0, object_inertia=0.03)
    base.update(kw)
    return ObjectModel(**base)


def check_physics() -> tuple[bool, str]:
    arm = planar_arm([0.45, 0.40, 0.12], [2.0, 1.5, 0.5], q_min=np.array([-2.9, 0.15, -2.0]),
                     q_max=np.array([2.9, 2.2, 2.0]), tau_max=np.array([40.0, 30.0, 10.0]))
    arm.gravity = np.zeros(3)
    k, amp = 4.0, 0.4
    w = World(arm, _wheel(spring_k=k, spring_rest=1.0))
    s = w.initial_state([0.3, 1.2, -0.4], theta0=1.0 + amp, attached=False)
    E0, drift = w.energy(s), 0.0
    for _ in range(10_000):
        s = w.step(s, np.zeros(3))
        drift = max(drift, abs(w.energy(s) - E0))
    drift /= 0.5 * k * amp ** 2

    sw = World(arm, _wheel(dry_friction=1.5))
    held = all(sw.object_acceleration(0.7, 0.0, f) == (0.0, True) for f in np.linspace(-1.5, 1.5, 13))
    moves = not sw.object_acceleration(0.7, 0.0, 1.6)[1]

    cfg = preset("planar_valve")
    tol = cfg.world.grasp_tolerance
    worst_res, attached_steps = 0.0, 0
    for seed in (1000, 1001, 1002):
        env = ManipEnv(cfg, seed=seed, fast=False)
        policy = ManualBaseline()
        while not env.done:
            env.step(policy.act_env(env))
            if env.state.grasp_attached:
                worst_res = max(worst_res, env.world.grasp_residual(env.state))
                attached_steps += 1
    ok = drift < 0.01 and held and moves and worst_res < tol and attached_steps > 0
    return ok, (f"oscillator drift {100 * drift:.3f}% over 10 s, stiction held {held} (breaks above: {moves}), "
                f"grasp residual max {worst_res:.2e} m < {tol:g} over {attached_steps} steps")


def test_criterion_3_physics():
    t0 = time.perf_counter()
    ok, detail = check_physics()
    assert report(3, ok, detail, time.perf_counter() - t0, 30)


# ----------------------------------------------------------------------------
# 4. MDP constants
# ----------------------------------------------------------------------------

def check_constants() -> tuple[bool, str]:
    cfg = preset("planar_valve")
    arm = franka_like_arm()
    q = 0.5 * (arm.q_min + arm.q_max)
    from swrl.world import WorldState
    st = lambda q, t=0.0, a=True: WorldState(q=np.asarray(q, float), qd=np.zeros(7), theta=0.0, theta_d=0.0,
                                             grasp_attached=a, ticks=int(round(t * 1000)))
    q_lim = q.copy()
    q_lim[1] = arm.q_max[1]
    checks = {
        "force set": DELTA_F_SET == (0.1, 0.0, -0.1, 1.0),
        "bands": VELOCITY_BANDS["valve"] == (0.7, 0.8) and VELOCITY_BANDS["door"] == (0.1, 0.15)
        and VELOCITY_BANDS["drawer"] == (0.4, 0.5),
        "band edges": reward_K(0.7, "valve") == 1 and reward_K(0.8, "valve") == 1 and reward_K(0.81, "valve") == 0
        and reward_K(0.69, "valve") == 0,
        "k1 k2": (K1, K2) == (1.0, 0.1) and abs(reward_R(np.array([0.5]), [-np.e]) - 0.4) < 1e-12,
        "terminal": TERMINAL_PENALTY == -100.0 and check_terminal(st(q_lim), arm, 20.0)[2] == -100.0
        and check_terminal(st(q, a=False), arm, 20.0)[2] == -100.0
        and check_terminal(st(q, t=20.0), arm, 20.0) == (True, "timeout", 0.0),
        "rmp clip": RMP_CLIP == 100.0 and rmp(1e6, 1.0) == 100.0 and rmp(-5.0, 1.0) == -100.0,
        "window": WINDOW_LENGTH == 10 and cfg.mdp.window == 10,
        "rates": (POLICY_HZ, CONTROL_HZ) == (100.0, 1000.0) and (cfg.mdp.policy_hz, cfg.mdp.control_hz)
        == (100.0, 1000.0),
    }
    bad = [k for k, v in checks.items() if not v]
    return not bad, "all constants match" if not bad else f"mismatch: {', '.join(bad)}"


def test_criterion_4_constants():
    t0 = time.perf_counter()
    ok, detail = check_constants()
    assert report(4, ok, detail, time.perf_counter() - t0, 1)


# ----------------------------------------------------------------------------
# 5. gradient checks
# ----------------------------------------------------------------------------

def _fd(net, f, h=1e-5):
    # 1e-5 balances truncation against round-off in the scaled critics
    flat = net.get_flat()
    g = np.empty(flat.size)
    for i in range(flat.size):
        o = flat[i]
        flat[i] = o + h
        net.set_flat(flat)
        fp = f()
        flat[i] = o - h
        net.set_flat(flat)
        fm = f()
        flat[i] = o
        g[i] = (fp - fm) / (2 * h)
    net.set_flat(flat)
    return g


def check_gradients() -> tuple[bool, str]:
    from swrl.config import LearnerConfig
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(5, 20)), rng.normal(size=(5, 3))

    def sq(out):
        d = out - y
        return 0.5 * float(np.sum(d * d)), d

    errs = {
        "dense": gradient_check(Sequential([Dense(20, 3, rng)]), sq, x),
        "tanh mlp": gradient_check(Sequential([Dense(20, 64, rng), Tanh(), Dense(64, 3, rng)]), sq, x),
        "relu mlp": gradient_check(mlp(20, 3, rng, d_feat=32), sq, x),
        "lstm extractor": gradient_check(mlp(20, 3, rng, d_feat=16, mode="lstm", frame_dim=2, steps=10), sq, x),
    }
    B, D = 6, 12
    obs, eps, yv = rng.normal(size=(B, D)), rng.normal(size=(B, 1)), rng.normal(size=B)
    a_R, a_K = rng.normal(size=(B, 1)), rng.integers(4, size=B)
    lc = LearnerConfig(d_feat=16)

    def scaled(*nets):
        for n in nets:
            n.set_flat(n.get_flat() * 5)

    def objective(name, net, f):
        f()
        errs[name] = _rel_err(net.flat_grad(), _fd(net, f))

    sac = SAC(D, 1, 2.0, lc, np.random.default_rng(1))
    scaled(sac.q1, sac.q2)
    objective("sac actor", sac.actor, lambda: sac.actor_objective(obs, eps, 0.3)[0])
    objective("sac critic", sac.q1, lambda: sac.critic_objective(sac.q1, obs, a_R, yv))
    hy = HybridSAC(D, 4, 1, 2.0, lc, np.random.default_rng(2))
    scaled(hy.q1, hy.q2, hy.actor)
    objective("hybrid actor", hy.actor, lambda: hy.actor_objective(obs, eps, 0.3, 0.2)[0])
    objective("hybrid critic", hy.q1, lambda: hy.critic_objective(hy.q1, obs, a_K, a_R, yv))
    dq = DoubleDQN(D, 4, lc, np.random.default_rng(3))
    scaled(dq.q)
    objective("double dqn", dq.q, lambda: dq.td_objective(obs, a_K, yv))
    bc = BCModel(D, 4, 1, 2.0, lc, np.random.default_rng(4))
    scaled(bc.net)

    def bc_loss():
        bc.net.zero_grad()
        return bc.loss(obs, a_K, a_R, grad=True)

    objective("behaviour cloning", bc.net, bc_loss)
    worst = max(errs, key=errs.get)
    return errs[worst] < 1e-4, f"{len(errs)} approximators, worst rel err {errs[worst]:.1e} ({worst})"


def test_criterion_5_gradients():
    t0 = time.perf_counter()
    ok, detail = check_gradients()
    assert report(5, ok, detail, time.perf_counter() - t0, 20)


# ----------------------------------------------------------------------------
# 6. replay mixing
# ----------------------------------------------------------------------------

def check_replay() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    bad, batches = 0, 0
    for B in (256, 255, 128, 33, 2):
        buf = ReplayBuffer(2000, 4, 1, offline_capacity=300)
        for _ in range(300):
            buf.add(Transition(np.full(4, -1.0), 0, np.zeros(1), -1.0, 0.0, np.zeros(4), False), offline=True)
        for _ in range(1000):
            buf.add(Transition(np.full(4, 1.0), 0, np.zeros(1), 1.0, 0.0, np.zeros(4), False))
        for _ in range(1000):
            r = buf.sample(B, rng)["r_K"]
            batches += 1
            bad += (int(np.sum(r > 0)), int(np.sum(r < 0))) != ((B + 1) // 2, B // 2)
    return bad == 0, f"{batches} batches over sizes 256/255/128/33/2, {bad} with a wrong split"


def test_criterion_6_replay():
    t0 = time.perf_counter()
    ok, detail = check_replay()
    assert report(6, ok, detail, time.perf_counter() - t0, 5)


# ----------------------------------------------------------------------------
# 7 and 8. desk-scale training and baseline ordering
# ----------------------------------------------------------------------------

def band_return(result, penalty: float) -> np.ndarray:
    """S_K return per episode with the terminal penalty taken out."""
    return np.array([c.return_K - (penalty if c.cause not in ("timeout", "") else 0.0) for c in result.curves])


@pytest.fixture(scope="module")
def trained():
    cfg = preset("planar_valve")
    t0 = time.perf_counter()
    swrl = train_swrl(cfg)
    vanilla = train_vanilla(cfg)
    return cfg, swrl, vanilla, time.perf_counter() - t0


def check_training(cfg, swrl, vanilla) -> tuple[bool, str]:
    win = cfg.learner.smoothing_window
    s_ret = band_return(swrl, cfg.mdp.terminal_penalty)
    # with the penalty removed the return is the count of in-band steps
    consistent = np.array_equal(s_ret, swrl.occupancy_series())
    s = smooth(s_ret, win)
    n = len(s)
    k = max(1, n // 10)
    first, last = s[:k].mean(), s[-k:].mean()
    ratio = last / first if first > 0 else np.inf
    ok_a = ratio >= 3.0

    v = smooth(band_return(vanilla, cfg.mdp.terminal_penalty), win)
    nv = len(v)
    target = v[-max(1, nv // 10):].mean()
    hits = np.nonzero(s >= target)[0]
    reach = int(hits[0]) + 1 if hits.size else None
    ok_b = reach is not None and reach <= 0.5 * nv
    detail = (f"return/occupancy consistent {consistent}; (a) smoothed S_K return first 10% {first:.2f} -> last 10% {last:.2f}, ratio {ratio:.1f} "
              f"(need >= 3) {'ok' if ok_a else 'NO'}; (b) vanilla end level {target:.2f} (peak smoothed "
              f"{v.max():.2f}), SwRL reaches it at episode {reach} of {nv} (need <= {0.5 * nv:g}) "
              f"{'ok' if ok_b else 'NO'}")
    return consistent and ok_a and ok_b, detail


def test_criterion_7_training_trend(trained):
    cfg, swrl, vanilla, train_time = trained
    t0 = time.perf_counter()
    ok, detail = check_training(cfg, swrl, vanilla)
    assert report(7, ok, detail, train_time + time.perf_counter() - t0, 900)


def check_ordering(cfg, swrl) -> tuple[bool, str]:
    seeds = eval_seeds(cfg, 20)
    rep = evaluate(swrl.policy, cfg, seeds, method="swrl")
    th = np.array([c.terminal_theta for c in rep.cases])
    th_m = np.array([c.terminal_theta for c in rep.manual_cases])
    w = np.array([c.mean_w for c in rep.cases])
    w_m = np.array([c.mean_w for c in rep.manual_cases])
    frac_th, frac_w = float(np.mean(th >= th_m)), float(np.mean(w >= w_m))
    ok = th.mean() >= th_m.mean() and w.mean() >= w_m.mean() and frac_th >= 0.6 and frac_w >= 0.6
    return ok, (f"theta SwRL {th.mean():.3f} vs Manual {th_m.mean():.3f} (held on {frac_th:.0%} of seeds), "
                f"mean w {w.mean():.4f} vs {w_m.mean():.4f} (held on {frac_w:.0%}), 20 paired seeds")


def test_criterion_8_baseline_ordering(trained):
    cfg, swrl, _, _ = trained
    t0 = time.perf_counter()
    ok, detail = check_ordering(cfg, swrl)
    assert report(8, ok, detail, time.perf_counter() - t0)


# ----------------------------------------------------------------------------
# 9. determinism
# ----------------------------------------------------------------------------

def check_determinism(tmp) -> tuple[bool, str]:
    from swrl.cli import main
    cfg = {"preset": "planar_valve", "mdp": {"episode_time": 1.0},
           "learner": {"d_feat": 32, "batch_size": 32, "warmup_steps": 50, "offline_episodes": 1, "episodes": 3},
           "eval": {"cases": 3}}
    path = tmp / "cfg.json"
    path.write_text(json.dumps(cfg))
    outputs = []
    for run in ("a", "b"):
        out = tmp / run
        rc = [main(["train", "--config", str(path), "--seed", "7", "--workers", "1", "--out", str(out / "t")]),
              main(["eval", "--config", str(path), "--seed", "7", "--workers", "1", "--checkpoint",
                    str(out / "t" / "swrl"), "--out", str(out / "e")]),
              main(["eval", "--config", str(path), "--seed", "7", "--workers", "1", "--out", str(out / "m")])]
        if any(rc):
            return False, f"command failed with exit codes {rc}"
        outputs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))})
    same = outputs[0].keys() == outputs[1].keys() and all(outputs[0][k] == outputs[1][k] for k in outputs[0])
    return same and len(outputs[0]) == 3, f"{len(outputs[0])} CSV files from train/eval, byte-identical {same}"


def test_criterion_9_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv("SWRL_WORKERS", raising=False)
    t0 = time.perf_counter()
    ok, detail = check_determinism(tmp_path)
    assert report(9, ok, detail, time.perf_counter() - t0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main(["-s", "-q", __file__]))
