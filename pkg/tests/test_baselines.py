import json

import numpy as np
import pytest

from swrl.baselines import (
    EvalReport, ManualBaseline, ManualPolicy, eval_seeds, evaluate, manipulability_trace, rmp, run_case,
)
from swrl.config import _merge, parse_config, preset
from swrl.env import EpisodeLog, ManipEnv, ObservationWindow, StepRecord, frame_size
from swrl.kinematics import express_in_frame, jacobian_world, manipulability


def _cfg(**over):
    return parse_config(_merge(preset("planar_valve").model_dump(mode="json"), over))


def _policy():
    return ManualPolicy(band=(0.7, 0.8), q_min=np.array([-2.9, 0.15, -2.0]), q_max=np.array([2.9, 2.2, 2.0]),
                        n_redundant=1)


def _window(q, v):
    f = np.zeros(frame_size(3))
    f[:3] = q
    f[-1] = v
    return ObservationWindow.empty(3).push(f)


def test_manual_band_logic():
    p = _policy()
    q = np.array([0.3, 1.2, 0.0])
    up = p.act(_window(q, 0.5))
    assert up.force_increment() == 0.5 and np.all(up.a_R == 0)
    assert p.act(_window(q, 0.75)).force_increment() == 0.0
    assert p.act(_window(q, 0.9)).force_increment() == -0.5
    near = np.array([0.3, 2.2 - 0.05, 0.0])
    assert p.act(_window(near, 0.5)).force_increment() == -0.5
    # quantized variant stays inside the learner's force set
    p.quantized = True
    assert p.act(_window(q, 0.5)).force_increment() == 0.1
    assert p.act(_window(q, 0.9)).force_increment() == -0.1


def test_rmp_values():
    assert rmp(1.0, 1.0) == 0.0
    assert rmp(258.6, 202.6) == pytest.approx(27.64, abs=5e-3)
    assert rmp(3.0, 1.0) == 100.0
    assert rmp(0.0, 1.0) == -100.0
    assert rmp(1.0, 0.0) is None
    a, b = 2.5, 2.0
    assert rmp(a, b) > 0 > rmp(b, a)


def test_manual_against_itself_and_row_count(tmp_path):
    cfg = _cfg(mdp={"episode_time": 2.0})
    seeds = eval_seeds(cfg, 4)
    rep = evaluate(ManualBaseline(), cfg, seeds, method="manual")
    assert rep.rmp_values() == [0.0] * 4
    assert len(rep.cases) == len(seeds) == 4
    s = rep.summary()
    assert s["mean_terminal_theta"] == pytest.approx(np.mean([c.terminal_theta for c in rep.cases]))
    csv_path, json_path = rep.write(tmp_path)
    text = csv_path.read_text().splitlines()
    assert text[0] == f"# config_hash: {cfg.config_hash()}" and text[1] == f"# seed: {cfg.seed}"
    assert len(text) == 3 + 1 + 4
    body = json.loads(json_path.read_text())
    assert body["config_hash"] == cfg.config_hash() and len(body["traces"]) == 4
    with pytest.raises(ValueError):
        evaluate(ManualBaseline(), cfg, seeds, manual_cases=list(reversed(rep.cases)))


def test_pairing_uses_same_scenario():
    cfg = _cfg(mdp={"episode_time": 0.3})
    a = ManipEnv(cfg, seed=1005)
    b = ManipEnv(cfg, seed=1005)
    assert a.object.dry_friction == b.object.dry_friction
    assert np.array_equal(a.state.q, b.state.q)


def test_workers_do_not_change_results():
    cfg = _cfg(mdp={"episode_time": 1.0})
    seeds = eval_seeds(cfg, 4)
    one = evaluate(ManualBaseline(), cfg, seeds, workers=1)
    two = evaluate(ManualBaseline(), cfg, seeds, workers=2)
    assert [c.terminal_theta for c in one.cases] == [c.terminal_theta for c in two.cases]


def test_manual_episode_properties():
    cfg = _cfg()
    case = run_case(ManualBaseline(), cfg, 1002, keep_log=True)
    log = case.log
    assert all(np.all(r.a_R == 0) for r in log.records)
    env = ManipEnv(cfg, seed=1002)
    # trace w recomputed from the logged joint angles
    for r in log.records[::25]:
        J = express_in_frame(jacobian_world(env.robot, r.q), env.frame.pose.rotation)
        assert r.w == pytest.approx(manipulability(J[[0, 1, 5]]), rel=1e-12)
    trace = manipulability_trace(log)
    thetas = [t for t, _ in trace]
    assert all(b != a for a, b in zip(thetas, thetas[1:]))


def _rec(theta, w, q=np.zeros(3)):
    return StepRecord(t=0.0, theta=theta, theta_d=0.0, velocity_estimate=0.0, F=0.0, r_K=0.0, r_R=1.0, w=w,
                      contact_sum=0.0, q=q, a_K=1, a_R=np.zeros(1))


def test_trace_edge_cases():
    frozen = EpisodeLog(0, [_rec(0.0, 0.2) for _ in range(10)])
    assert manipulability_trace(frozen) == [(0.0, 0.2)]
    mono = EpisodeLog(0, [_rec(0.01 * i, 0.2 + 0.001 * i) for i in range(50)])
    tr = manipulability_trace(mono, points=10)
    assert len(tr) == 10 and all(b[0] > a[0] for a, b in zip(tr, tr[1:]))


def test_report_means_match_cases():
    from swrl.baselines import CaseResult
    cases = [CaseResult(i, th, 0.1, "timeout", 1, 0) for i, th in enumerate([2.0, 3.0])]
    manual = [CaseResult(i, th, 0.1, "timeout", 1, 0) for i, th in enumerate([1.0, 3.0])]
    s = EvalReport("x", [0, 1], cases, manual).summary()
    assert s["mean_terminal_theta"] == 2.5
    assert s["rmp_mean_per_case"] == pytest.approx(50.0)
    assert s["rmp_of_means"] == pytest.approx(25.0)
