"""Command-line entry points: train, eval, collect-offline, plot.

Exit codes: 0 ok, 2 configuration error, 3 artifact mismatch, 4 runtime fault.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_config, preset
from .errors import ArtifactMismatch, ConfigurationError, SimulationFault, TrainingDivergence, UsageError

log = logging.getLogger("swrl")

EXIT_OK, EXIT_CONFIG, EXIT_ARTIFACT, EXIT_RUNTIME = 0, 2, 3, 4
ALGOS = ("swrl", "vanilla", "bc", "swrl_k_only", "swrl_r_only")


def _resolve_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else preset(args.preset)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": int(args.seed)})
    return cfg


def resolve_workers(flag: int | None) -> int:
    env = os.environ.get("SWRL_WORKERS")
    if env is not None and env != "":
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"SWRL_WORKERS: expected an integer, got {env!r}") from None
    else:
        n = 1 if flag is None else int(flag)
    if n < 1:
        raise ConfigurationError(f"workers: must be >= 1, got {n}")
    return n


def _header(cfg: ScenarioConfig, **extra) -> dict:
    h = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "scenario": cfg.name}
    h.update(extra)
    return h


def _tag(cfg: ScenarioConfig, what: str) -> str:
    return f"{what} | config_hash={cfg.config_hash()} seed={cfg.seed}"


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------

def cmd_train(args) -> int:
    from . import learners
    from .dataset import read_dataset

    algo = args.algo
    if algo not in ALGOS:
        raise ConfigurationError(f"algo: unknown algorithm {algo!r}; choose from {', '.join(ALGOS)}")
    if algo == "bc" and not args.dataset:
        raise ConfigurationError("dataset: behaviour cloning needs an offline dataset path (--dataset)")
    cfg = _resolve_config(args)
    resolve_workers(args.workers)  # learners are single-process; validated for a uniform interface
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    offline = None
    if args.dataset:
        header, offline, digest = read_dataset(args.dataset)
        log.info("loaded %d transitions from %s (sha256 %s)", len(offline), args.dataset, digest[:12])

    def progress(c):
        log.info("ep %d occupancy=%d return_K=%.1f return_R=%.1f cause=%s", c.episode, c.occupancy,
                 c.return_K, c.return_R, c.cause)

    if algo == "bc":
        from .env import ManipEnv, frame_size
        env = ManipEnv(cfg, seed=learners.training_seed(cfg.seed, 0))
        n_R = env.n_redundant
        if header["n_redundant"] != n_R or header["obs_dim"] != env.obs_dim:
            raise ArtifactMismatch(f"dataset shapes (obs {header['obs_dim']}, redundant {header['n_redundant']}) "
                                   f"do not match the configuration (obs {env.obs_dim}, redundant {n_R})")
        result = learners.train_bc(cfg, offline, n_R, env.obs_dim, frame_size(env.robot.dof),
                                   epochs=args.episodes)
        curves = out / "bc_curves.csv"
        with open(curves, "w", newline="") as fh:
            for k, v in _header(cfg, algo="bc").items():
                fh.write(f"# {k}: {v}\n")
            for k in ("holdout_accuracy", "holdout_mse"):
                if k in result.extra:
                    fh.write(f"# {k}: {result.extra[k]!r}\n")
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss"])
            for i, loss in enumerate(result.extra["train_loss"]):
                w.writerow([i, repr(float(loss))])
    else:
        if algo == "vanilla":
            result = learners.train_vanilla(cfg, episodes=args.episodes, offline=offline, progress=progress)
        else:
            ablation = {"swrl": None, "swrl_k_only": "k_only", "swrl_r_only": "r_only"}[algo]
            result = learners.train_swrl(cfg, episodes=args.episodes, ablation=ablation, offline=offline,
                                         progress=progress)
        curves = out / f"{algo}_curves.csv"
        learners.write_curves(result, curves, _header(cfg, algo=algo))
        if args.plot:
            from .plotting import plot_learning_curves
            series = {k: np.array([getattr(c, k) for c in result.curves]) for k in
                      ("occupancy", "return_K", "return_R")}
            plot_learning_curves({algo: series}, out / f"{algo}_curves.svg", _tag(cfg, algo),
                                 cfg.learner.smoothing_window)
    learners.save_checkpoint(result, out / algo, cfg)
    print(f"wrote {curves} and checkpoint {out / algo}.npz")
    return EXIT_OK


def _load_for_eval(args, cfg):
    from .baselines import ManualBaseline
    from .env import ManipEnv
    from .learners import load_policy

    if args.checkpoint is None:
        if args.algo not in (None, "manual"):
            raise ConfigurationError(f"checkpoint: required to evaluate {args.algo!r}")
        return ManualBaseline(), "manual"
    manifest_path = Path(args.checkpoint).with_suffix(".json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise ArtifactMismatch(f"checkpoint manifest not found: {manifest_path}") from None
    if manifest.get("config_hash") != cfg.config_hash():
        log.warning("checkpoint was trained under config %s, evaluating under %s",
                    manifest.get("config_hash"), cfg.config_hash())
    env = ManipEnv(cfg, seed=cfg.eval.first_seed)
    return load_policy(args.checkpoint, cfg, env), manifest.get("algo", "policy")


def cmd_eval(args) -> int:
    from .baselines import eval_seeds, evaluate

    cfg = _resolve_config(args)
    workers = resolve_workers(args.workers)
    policy, method = _load_for_eval(args, cfg)
    seeds = eval_seeds(cfg, args.cases)
    report = evaluate(policy, cfg, seeds, method=method, workers=workers)
    out = Path(args.out)
    csv_path, json_path = report.write(out)
    if args.plot:
        from .plotting import plot_trace
        pdir = out / f"traces_{method}"
        pdir.mkdir(parents=True, exist_ok=True)
        for c, m in zip(report.cases, report.manual_cases):
            traces = {method: c.trace} if method == "manual" else {method: c.trace, "manual": m.trace}
            plot_trace(traces, pdir / f"case_{c.seed}.svg", _tag(cfg, f"{method} case {c.seed}"))
    s = report.summary()
    print(f"{method}: cases={s['cases']} mean_theta={s['mean_terminal_theta']:.4f} "
          f"manual={s['mean_terminal_theta_manual']:.4f} rmp={s['rmp_mean_per_case']} -> {csv_path}")
    return EXIT_OK


def cmd_collect_offline(args) -> int:
    from .dataset import write_dataset
    from .env import ManipEnv
    from .learners import collect_offline, offline_seed

    cfg = _resolve_config(args)
    episodes = cfg.learner.offline_episodes if args.episodes is None else int(args.episodes)
    if episodes < 0:
        raise ConfigurationError(f"episodes: must be >= 0, got {episodes}")
    env = ManipEnv(cfg, seed=offline_seed(cfg.seed, 0))
    transitions = collect_offline(cfg, episodes, env=env)
    out = Path(args.out)
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "offline.swrl"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    digest = write_dataset(out, transitions, env.obs_dim, env.n_redundant,
                           meta=_header(cfg, episodes=episodes, source="manual_quantized"))
    print(f"wrote {len(transitions)} transitions to {out} (sha256 {digest})")
    return EXIT_OK


def _read_curves(path: Path) -> tuple[dict, dict]:
    header, rows = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                header[k] = v.strip()
            else:
                rows.append(line)
    reader = csv.DictReader(rows)
    data = list(reader)
    if not data or "occupancy" not in data[0]:
        raise ArtifactMismatch(f"{path} is not a training-curve file")
    series = {k: np.array([float(r[k]) for r in data]) for k in ("occupancy", "return_K", "return_R")}
    return header, series


def cmd_plot(args) -> int:
    from .plotting import plot_learning_curves, plot_trace

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    if args.curves:
        curves, tags = {}, []
        for p in args.curves:
            header, series = _read_curves(Path(p))
            label = header.get("algo", Path(p).stem)
            curves[label] = series
            tags.append(f"{label}: config_hash={header.get('config_hash')} seed={header.get('seed')}")
        plot_learning_curves(curves, out / "learning_curves.svg", " | ".join(tags), args.window)
        written += 1
    for p in args.report or []:
        try:
            body = json.loads(Path(p).read_text())
        except (FileNotFoundError, json.JSONDecodeError) as err:
            raise ArtifactMismatch(f"cannot read report {p}: {err}") from None
        tag = f"config_hash={body.get('config_hash')} seed={body.get('seed')}"
        for case, tr in sorted(body.get("traces", {}).items(), key=lambda kv: int(kv[0])):
            plot_trace({body.get("method", "policy"): tr}, out / f"{body.get('method')}_case_{case}.svg",
                       f"{body.get('method')} case {case} | {tag}")
            written += 1
    if not written:
        raise ConfigurationError("plot: pass --curves and/or --report")
    print(f"wrote {written} figure(s) to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swrl", description="Subspace-decomposed RL for articulated objects.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="runs"):
        sp.add_argument("--config", help="scenario JSON file (may name a base 'preset')")
        sp.add_argument("--preset", default="planar_valve", help="built-in scenario when --config is absent")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=out_default)
        sp.add_argument("--workers", type=int, default=None)

    t = sub.add_parser("train", help="train a policy and write curves plus checkpoint")
    common(t)
    t.add_argument("--algo", default="swrl", help=f"one of {', '.join(ALGOS)}")
    t.add_argument("--episodes", type=int, default=None, help="episodes (epochs for bc)")
    t.add_argument("--dataset", default=None, help="offline transition dataset")
    t.add_argument("--plot", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint (or the manual baseline) on paired seeds")
    common(e)
    e.add_argument("--checkpoint", default=None, help="checkpoint prefix; omit for the manual baseline")
    e.add_argument("--algo", default=None, help="'manual' when no checkpoint is given")
    e.add_argument("--cases", type=int, default=None)
    e.add_argument("--plot", action="store_true", help="one manipulability SVG per case")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("collect-offline", help="record scripted-baseline transitions")
    common(c, out_default="runs/offline.swrl")
    c.add_argument("--episodes", type=int, default=None)
    c.set_defaults(func=cmd_collect_offline)

    pl = sub.add_parser("plot", help="render SVGs from curve CSVs and eval reports")
    pl.add_argument("--curves", nargs="*", default=None)
    pl.add_argument("--report", nargs="*", default=None)
    pl.add_argument("--window", type=int, default=10)
    pl.add_argument("--out", default="plots")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as err:
        print(f"configuration error:\n{err}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactMismatch as err:
        print(f"artifact mismatch: {err}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (SimulationFault, TrainingDivergence, UsageError, OSError) as err:
        print(f"runtime fault: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
