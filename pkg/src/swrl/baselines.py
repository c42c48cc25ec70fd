"""Scripted force-schedule baseline, ablations and evaluation metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .env import ActionPair, EpisodeLog, ManipEnv, ObservationWindow

RMP_CLIP = 100.0

# sign of the force change -> index into the learner's force-increment set
_SIGN_INDEX = {1: 0, 0: 1, -1: 2}


@dataclass
class ManualPolicy:
    """Band-following force schedule with the redundant coordinates frozen.

    Below the velocity band the force rises by ``force_step`` per policy tick,
    above it the force falls, inside it the force is held. Near any joint
    limit the force is driven toward zero. ``quantized`` restricts the steps
    to the learner's force-increment set so logged actions stay replayable.
    """

    band: tuple[float, float]
    q_min: np.ndarray
    q_max: np.ndarray
    n_redundant: int
    force_step: float = 0.5
    joint_margin: float = 0.1
    open_sense: float = 1.0
    quantized: bool = False
    delta_f_set: tuple = (0.1, 0.0, -0.1, 1.0)

    @classmethod
    def for_env(cls, env: ManipEnv, quantized: bool = False) -> "ManualPolicy":
        mc = env.cfg.manual
        return cls(band=env.band, q_min=env.robot.q_min, q_max=env.robot.q_max, n_redundant=env.n_redundant,
                   force_step=mc.force_step, joint_margin=mc.joint_margin, open_sense=env.object.open_sense,
                   quantized=quantized, delta_f_set=env.delta_f_set)

    def direction(self, window: ObservationWindow) -> int:
        q = window.q()
        if np.any(q <= self.q_min + self.joint_margin) or np.any(q >= self.q_max - self.joint_margin):
            return -1
        v = window.velocity() * self.open_sense
        lo, hi = self.band
        if v < lo:
            return 1
        if v > hi:
            return -1
        return 0

    def act(self, window: ObservationWindow) -> ActionPair:
        d = self.direction(window)
        a_R = np.zeros(self.n_redundant)
        if self.quantized:
            return ActionPair(_SIGN_INDEX[d], a_R)
        return ActionPair(_SIGN_INDEX[d], a_R, delta_F=d * self.force_step)

    __call__ = act


def manual_act(window: ObservationWindow, policy: ManualPolicy) -> ActionPair:
    return policy.act(window)


class ManualBaseline:
    """Evaluator-facing wrapper: rebuilds the schedule for each environment's limits and band."""

    name = "manual"

    def __init__(self, quantized: bool = False):
        self.quantized = quantized

    def act_env(self, env: ManipEnv) -> ActionPair:
        return ManualPolicy.for_env(env, self.quantized).act(env.window)


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------

def rmp(theta_method: float, theta_manual: float) -> float | None:
    """Percent improvement over the scripted baseline, clipped to +-100; None when undefined."""
    if not theta_manual > 0.0:
        return None
    return float(np.clip(100.0 * (theta_method - theta_manual) / theta_manual, -RMP_CLIP, RMP_CLIP))


def manipulability_trace(log: EpisodeLog, points: int | None = None) -> list[tuple[float, float]]:
    """(theta, w) pairs along an episode, repeated poses dropped, optionally thinned to ``points``."""
    pairs = []
    for r in log.records:
        p = (float(r.theta), float(r.w))
        if not pairs or (p[0] != pairs[-1][0]):
            pairs.append(p)
        elif p[1] != pairs[-1][1]:
            pairs[-1] = p
    if points is not None and len(pairs) > points:
        idx = np.unique(np.linspace(0, len(pairs) - 1, points).round().astype(int))
        pairs = [pairs[i] for i in idx]
    return pairs


@dataclass
class CaseResult:
    seed: int
    terminal_theta: float
    mean_w: float
    cause: str
    length: int
    occupancy: int
    trace: list = field(default_factory=list)
    log: EpisodeLog | None = None


def run_case(policy, cfg, seed: int, trace_points: int | None = None, keep_log: bool = False) -> CaseResult:
    env = ManipEnv(cfg, seed=seed)
    while not env.done:
        env.step(policy.act_env(env))
    L = env.log
    return CaseResult(seed=seed, terminal_theta=L.terminal_theta, mean_w=float(np.mean([r.w for r in L.records])),
                      cause=env.cause, length=len(L.records), occupancy=L.occupancy(),
                      trace=manipulability_trace(L, trace_points), log=L if keep_log else None)


def _run_case_args(args):
    return run_case(*args)


def run_cases(policy, cfg, seeds, workers: int = 1, trace_points: int | None = None,
              keep_log: bool = False) -> list[CaseResult]:
    """Cases are independent; with ``workers > 1`` they run in a process pool, results kept in seed order."""
    jobs = [(policy, cfg, int(s), trace_points, keep_log) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_case_args(j) for j in jobs]
    import multiprocessing as mp
    with mp.get_context("fork").Pool(min(workers, len(jobs))) as pool:
        return pool.map(_run_case_args, jobs)


@dataclass
class EvalReport:
    method: str
    seeds: list
    cases: list
    manual_cases: list
    config_hash: str = ""
    seed: int = 0

    def rmp_values(self) -> list:
        return [rmp(c.terminal_theta, m.terminal_theta) for c, m in zip(self.cases, self.manual_cases)]

    def summary(self) -> dict:
        th = np.array([c.terminal_theta for c in self.cases])
        th_m = np.array([m.terminal_theta for m in self.manual_cases])
        vals = [v for v in self.rmp_values() if v is not None]
        w = np.array([c.mean_w for c in self.cases])
        w_m = np.array([m.mean_w for m in self.manual_cases])
        return {
            "method": self.method,
            "cases": len(self.cases),
            "mean_terminal_theta": float(th.mean()) if th.size else None,
            "mean_terminal_theta_manual": float(th_m.mean()) if th_m.size else None,
            # per-case average, the figure a results table reports
            "rmp_mean_per_case": float(np.mean(vals)) if vals else None,
            "rmp_of_means": rmp(float(th.mean()), float(th_m.mean())) if th.size else None,
            "rmp_missing": sum(v is None for v in self.rmp_values()),
            "mean_manipulability": float(w.mean()) if w.size else None,
            "mean_manipulability_manual": float(w_m.mean()) if w_m.size else None,
            "theta_at_least_manual_fraction": float(np.mean(th >= th_m)) if th.size else None,
            "w_at_least_manual_fraction": float(np.mean(w >= w_m)) if w.size else None,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }

    def write(self, out_dir, stem: str | None = None) -> tuple:
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or f"eval_{self.method}"
        csv_path = out / f"{stem}.csv"
        with open(csv_path, "w", newline="") as fh:
            fh.write(f"# config_hash: {self.config_hash}\n# seed: {self.seed}\n# method: {self.method}\n")
            w = csv.writer(fh)
            w.writerow(["case_seed", "terminal_theta", "manual_terminal_theta", "rmp", "mean_w", "manual_mean_w",
                        "cause", "length", "occupancy"])
            for c, m, r in zip(self.cases, self.manual_cases, self.rmp_values()):
                w.writerow([c.seed, repr(c.terminal_theta), repr(m.terminal_theta), "" if r is None else repr(r),
                            repr(c.mean_w), repr(m.mean_w), c.cause, c.length, c.occupancy])
        json_path = out / f"{stem}.json"
        body = self.summary()
        body["traces"] = {str(c.seed): c.trace for c in self.cases}
        json_path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
        return csv_path, json_path


def evaluate(policy, cfg, seeds, method: str = "policy", manual_cases: list | None = None, workers: int = 1,
             trace_points: int | None = None) -> EvalReport:
    """Run ``policy`` once per seed and pair each case with the scripted baseline on the same seed."""
    seeds = [int(s) for s in seeds]
    trace_points = cfg.eval.trace_points if trace_points is None else trace_points
    cases = run_cases(policy, cfg, seeds, workers, trace_points)
    if manual_cases is None:
        manual_cases = (cases if isinstance(policy, ManualBaseline) and not policy.quantized
                        else run_cases(ManualBaseline(), cfg, seeds, workers, trace_points))
    if [m.seed for m in manual_cases] != seeds:
        raise ValueError("baseline cases are not paired with the evaluated seeds")
    return EvalReport(method, seeds, cases, manual_cases, cfg.config_hash(), cfg.seed)


def eval_seeds(cfg, cases: int | None = None) -> list[int]:
    n = cfg.eval.cases if cases is None else cases
    return list(range(cfg.eval.first_seed, cfg.eval.first_seed + n))
