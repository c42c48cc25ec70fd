"""Learners for the two subspace policies, the single-policy baseline and behaviour cloning."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import LearnerConfig, ScenarioConfig
from .env import ActionPair, ManipEnv, frame_size
from .errors import ArtifactMismatch, TrainingDivergence
from .nn import Sequential, clip_grads, make_optimizer, mlp
from .replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
_LOG_2PI = np.log(2.0 * np.pi)
_SQUASH_EPS = 1e-6


def _check_finite(name: str, value: float, **diag):
    if not np.isfinite(value):
        detail = ", ".join(f"{k}={v}" for k, v in diag.items())
        raise TrainingDivergence(f"{name} became non-finite ({detail})")


def _net(cfg: LearnerConfig, n_in: int, n_out: int, rng, frame_dim: int | None, steps: int,
         head_scale: float = 1e-2) -> Sequential:
    mode = cfg.feature
    if mode == "lstm" and n_in != frame_dim * steps:
        # critics see the action appended to the window; keep them feed-forward
        mode = "flat"
    return mlp(n_in, n_out, rng, d_feat=cfg.d_feat, mode=mode, frame_dim=frame_dim, steps=steps,
               head_scale=head_scale)


class _Trainable:
    """Holds networks and their optimizers; handles stepping and checkpoint state."""

    nets: dict[str, Sequential]

    def _opt(self, net: Sequential, cfg: LearnerConfig):
        return make_optimizer(cfg.optimizer, net.params(), cfg.lr, cfg.momentum)

    def _apply(self, net: Sequential, opt, clip: float):
        grads = net.grads()
        clip_grads(grads, clip)
        opt.step(grads)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, net in self.nets.items():
            for i, p in enumerate(net.params()):
                out[f"{name}/{i}"] = p
        for name, arr in self.extra_state().items():
            out[name] = np.asarray(arr, dtype=float)
        return out

    def extra_state(self) -> dict[str, np.ndarray]:
        return {}

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str = ""):
        for name, net in self.nets.items():
            for i, p in enumerate(net.params()):
                key = f"{prefix}{name}/{i}"
                if key not in arrays or arrays[key].shape != p.shape:
                    got = arrays[key].shape if key in arrays else None
                    raise ArtifactMismatch(f"checkpoint entry {key}: expected shape {p.shape}, found {got}")
                p[...] = arrays[key]
        self.load_extra({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})

    def load_extra(self, arrays: dict[str, np.ndarray]):
        pass


# ----------------------------------------------------------------------------
# Discrete double-Q learner (force-increment policy)
# ----------------------------------------------------------------------------

class DoubleDQN(_Trainable):
    def __init__(self, obs_dim: int, n_actions: int, cfg: LearnerConfig, rng: np.random.Generator,
                 frame_dim: int | None = None, steps: int = 10):
        self.cfg = cfg
        self.n_actions = n_actions
        self.q = _net(cfg, obs_dim, n_actions, rng, frame_dim, steps)
        self.q_targ = _net(cfg, obs_dim, n_actions, rng, frame_dim, steps)
        self.q_targ.copy_from(self.q)
        self.opt = self._opt(self.q, cfg)
        self.nets = {"q": self.q, "q_targ": self.q_targ}
        self.updates = 0

    def values(self, obs: np.ndarray) -> np.ndarray:
        return self.q.forward(np.atleast_2d(obs))

    def greedy(self, obs: np.ndarray) -> int:
        return int(np.argmax(self.values(obs)[0]))

    def act(self, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy(obs)

    def td_objective(self, obs: np.ndarray, a: np.ndarray, y: np.ndarray) -> float:
        """Huber TD loss against fixed targets ``y``; leaves its gradient in the Q network."""
        B = obs.shape[0]
        self.q.zero_grad()
        q = self.q.forward(obs)
        td = q[np.arange(B), a] - y
        d = self.cfg.huber_delta
        absd = np.abs(td)
        loss = float(np.mean(np.where(absd <= d, 0.5 * td ** 2, d * (absd - 0.5 * d))))
        g = np.zeros_like(q)
        g[np.arange(B), a] = np.clip(td, -d, d) / B
        self.q.backward(g)
        return loss

    def update(self, batch: dict, reward: np.ndarray) -> float:
        c = self.cfg
        B = reward.shape[0]
        q_next_online = self.q.forward(batch["next_obs"])
        a_star = np.argmax(q_next_online, axis=1)
        q_next_targ = self.q_targ.forward(batch["next_obs"])
        y = reward + c.gamma * (1.0 - batch["terminal"]) * q_next_targ[np.arange(B), a_star]

        loss = self.td_objective(batch["obs"], batch["a_K"], y)
        _check_finite("Q loss", loss, update=self.updates)
        self._apply(self.q, self.opt, c.grad_clip)
        self.q_targ.soft_update(self.q, c.polyak)
        self.updates += 1
        return loss


# ----------------------------------------------------------------------------
# Squashed Gaussian helpers
# ----------------------------------------------------------------------------

def _squashed_sample(mu, log_std, a_max, eps):
    """a = a_max tanh(mu + sigma eps) and its log density."""
    std = np.exp(log_std)
    u = mu + std * eps
    t = np.tanh(u)
    jac = a_max * (1.0 - t ** 2) + _SQUASH_EPS
    logp = np.sum(-0.5 * eps ** 2 - log_std - 0.5 * _LOG_2PI - np.log(jac), axis=1)
    return a_max * t, logp, (t, std, jac)


def _squashed_grads(g_a, alpha, a_max, eps, cache, clip_mask):
    """Gradients of mean(alpha * logp + f(a)) w.r.t. (mu, log_std), given g_a = d f / d a per sample."""
    t, std, jac = cache
    dlogjac_du = -a_max * (-2.0 * t) * (1.0 - t ** 2) / jac  # d(-log jac)/du
    d_u = g_a * a_max * (1.0 - t ** 2) + alpha * dlogjac_du
    d_mu = d_u
    d_log_std = (d_u * std * eps - alpha) * clip_mask
    return d_mu, d_log_std


def _split_gaussian(out, n):
    mu = out[:, :n]
    raw = out[:, n:2 * n]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    mask = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(float)
    return mu, log_std, mask


class _Temperature:
    def __init__(self, init: float, target_entropy: float, lr: float):
        self.log_alpha = np.array([np.log(init)])
        self.target = target_entropy
        self.lr = lr
        self._m = np.zeros(1)
        self._v = np.zeros(1)
        self._t = 0

    @property
    def value(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def update(self, entropy_estimate: float):
        # d/dlog_alpha of -log_alpha * (logp + target) averaged: -(-H + target)
        g = entropy_estimate - self.target
        self._t += 1
        self._m = 0.9 * self._m + 0.1 * g
        self._v = 0.999 * self._v + 0.001 * g * g
        mh = self._m / (1 - 0.9 ** self._t)
        vh = self._v / (1 - 0.999 ** self._t)
        self.log_alpha -= self.lr * mh / (np.sqrt(vh) + 1e-8)
        self.log_alpha = np.clip(self.log_alpha, -12.0, 2.0)


# ----------------------------------------------------------------------------
# Continuous actor-critic (redundant-subspace policy)
# ----------------------------------------------------------------------------

class SAC(_Trainable):
    """Clipped double critics, squashed Gaussian actor and tuned entropy temperature."""

    def __init__(self, obs_dim: int, n_act: int, a_max: float, cfg: LearnerConfig, rng: np.random.Generator,
                 frame_dim: int | None = None, steps: int = 10):
        self.cfg = cfg
        self.n = n_act
        self.a_max = a_max
        self.rng = rng
        self.actor = _net(cfg, obs_dim, 2 * n_act, rng, frame_dim, steps)
        self.q1 = _net(cfg, obs_dim + n_act, 1, rng, frame_dim, steps)
        self.q2 = _net(cfg, obs_dim + n_act, 1, rng, frame_dim, steps)
        self.q1_targ = _net(cfg, obs_dim + n_act, 1, rng, frame_dim, steps)
        self.q2_targ = _net(cfg, obs_dim + n_act, 1, rng, frame_dim, steps)
        self.q1_targ.copy_from(self.q1)
        self.q2_targ.copy_from(self.q2)
        self.opt_actor = self._opt(self.actor, cfg)
        self.opt_q1 = self._opt(self.q1, cfg)
        self.opt_q2 = self._opt(self.q2, cfg)
        target = -float(n_act) if cfg.target_entropy is None else cfg.target_entropy
        self.temp = _Temperature(cfg.init_alpha, target, cfg.lr)
        self.nets = {"actor": self.actor, "q1": self.q1, "q2": self.q2, "q1_targ": self.q1_targ,
                     "q2_targ": self.q2_targ}
        self.updates = 0

    def extra_state(self):
        return {"log_alpha": self.temp.log_alpha}

    def load_extra(self, arrays):
        if "log_alpha" in arrays:
            self.temp.log_alpha = np.array(arrays["log_alpha"], dtype=float).reshape(1)

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None, deterministic: bool = False) -> np.ndarray:
        mu, log_std, _ = _split_gaussian(self.actor.forward(np.atleast_2d(obs)), self.n)
        if deterministic:
            return self.a_max * np.tanh(mu[0])
        eps = (rng or self.rng).standard_normal(mu.shape)
        a, _, _ = _squashed_sample(mu, log_std, self.a_max, eps)
        return a[0]

    def _q(self, net, obs, a):
        return net.forward(np.concatenate([obs, a], axis=1))[:, 0]

    def critic_objective(self, net: Sequential, obs, a_R, y) -> float:
        """Squared error of one critic against fixed targets; gradient left in ``net``."""
        net.zero_grad()
        d = self._q(net, obs, a_R) - y
        net.backward((2.0 * d / obs.shape[0])[:, None])
        return float(np.mean(d ** 2))

    def actor_objective(self, obs, eps, alpha: float) -> tuple[float, np.ndarray]:
        """mean(alpha log pi(a|s) - min Q(s, a)) with reparameterized ``a``; gradient left in the actor."""
        B = obs.shape[0]
        self.actor.zero_grad()
        mu, ls, mask = _split_gaussian(self.actor.forward(obs), self.n)
        a, logp, cache = _squashed_sample(mu, ls, self.a_max, eps)
        x = np.concatenate([obs, a], axis=1)
        q1 = self.q1.forward(x)[:, 0]
        q2 = self.q2.forward(x)[:, 0]
        use1 = q1 <= q2
        loss = float(np.mean(alpha * logp - np.where(use1, q1, q2)))
        g_a = np.zeros_like(a)
        for net, sel in ((self.q1, use1), (self.q2, ~use1)):
            net.zero_grad()
            net.forward(x)
            g_a += net.backward((-sel.astype(float))[:, None])[:, -self.n:]
            net.zero_grad()
        d_mu, d_ls = _squashed_grads(g_a, alpha, self.a_max, eps, cache, mask)
        self.actor.backward(np.concatenate([d_mu, d_ls], axis=1) / B)
        return loss, logp

    def update(self, batch: dict, reward: np.ndarray) -> tuple[float, float]:
        c = self.cfg
        obs, nobs = batch["obs"], batch["next_obs"]
        B = obs.shape[0]
        alpha = self.temp.value

        mu2, ls2, _ = _split_gaussian(self.actor.forward(nobs), self.n)
        a2, logp2, _ = _squashed_sample(mu2, ls2, self.a_max, self.rng.standard_normal(mu2.shape))
        q_t = np.minimum(self._q(self.q1_targ, nobs, a2), self._q(self.q2_targ, nobs, a2))
        y = reward + c.gamma * (1.0 - batch["terminal"]) * (q_t - alpha * logp2)

        critic_loss = 0.0
        for net, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            critic_loss += self.critic_objective(net, obs, batch["a_R"], y)
            self._apply(net, opt, c.grad_clip)
        _check_finite("critic loss", critic_loss, update=self.updates)

        eps = self.rng.standard_normal((B, self.n))
        actor_loss, logp = self.actor_objective(obs, eps, alpha)
        _check_finite("actor loss", actor_loss, update=self.updates)
        self._apply(self.actor, self.opt_actor, c.grad_clip)
        self.temp.update(float(-np.mean(logp)))

        self.q1_targ.soft_update(self.q1, c.polyak)
        self.q2_targ.soft_update(self.q2, c.polyak)
        self.updates += 1
        return critic_loss, actor_loss


# ----------------------------------------------------------------------------
# Hybrid discrete + continuous actor-critic (single concatenated policy)
# ----------------------------------------------------------------------------

def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class HybridSAC(_Trainable):
    """One actor over the product action space {force index} x R^n.

    The critic takes (window, a_R) and outputs one value per force index, so
    expectations over the categorical head are exact.
    """

    def __init__(self, obs_dim: int, n_discrete: int, n_act: int, a_max: float, cfg: LearnerConfig,
                 rng: np.random.Generator, frame_dim: int | None = None, steps: int = 10):
        self.cfg = cfg
        self.k = n_discrete
        self.n = n_act
        self.a_max = a_max
        self.rng = rng
        self.actor = _net(cfg, obs_dim, n_discrete + 2 * n_act, rng, frame_dim, steps)
        mk = lambda: _net(cfg, obs_dim + n_act, n_discrete, rng, frame_dim, steps)
        self.q1, self.q2, self.q1_targ, self.q2_targ = mk(), mk(), mk(), mk()
        self.q1_targ.copy_from(self.q1)
        self.q2_targ.copy_from(self.q2)
        self.opt_actor = self._opt(self.actor, cfg)
        self.opt_q1 = self._opt(self.q1, cfg)
        self.opt_q2 = self._opt(self.q2, cfg)
        self.temp_c = _Temperature(cfg.init_alpha, -float(n_act) if cfg.target_entropy is None
                                   else cfg.target_entropy, cfg.lr)
        self.temp_d = _Temperature(cfg.init_alpha, 0.5 * np.log(n_discrete), cfg.lr)
        self.nets = {"actor": self.actor, "q1": self.q1, "q2": self.q2, "q1_targ": self.q1_targ,
                     "q2_targ": self.q2_targ}
        self.updates = 0

    def extra_state(self):
        return {"log_alpha_c": self.temp_c.log_alpha, "log_alpha_d": self.temp_d.log_alpha}

    def load_extra(self, arrays):
        if "log_alpha_c" in arrays:
            self.temp_c.log_alpha = np.array(arrays["log_alpha_c"], dtype=float).reshape(1)
            self.temp_d.log_alpha = np.array(arrays["log_alpha_d"], dtype=float).reshape(1)

    def _heads(self, out):
        logits = out[:, :self.k]
        mu, ls, mask = _split_gaussian(out[:, self.k:], self.n)
        return logits, mu, ls, mask

    def act(self, obs, rng=None, deterministic: bool = False) -> tuple[int, np.ndarray]:
        rng = rng or self.rng
        logits, mu, ls, _ = self._heads(self.actor.forward(np.atleast_2d(obs)))
        if deterministic:
            return int(np.argmax(logits[0])), self.a_max * np.tanh(mu[0])
        p = _softmax(logits)[0]
        a_K = int(rng.choice(self.k, p=p))
        a, _, _ = _squashed_sample(mu, ls, self.a_max, rng.standard_normal(mu.shape))
        return a_K, a[0]

    def critic_objective(self, net: Sequential, obs, a_K, a_R, y) -> float:
        B = obs.shape[0]
        net.zero_grad()
        q = net.forward(np.concatenate([obs, a_R], axis=1))
        idx = (np.arange(B), a_K)
        d = q[idx] - y
        g = np.zeros_like(q)
        g[idx] = 2.0 * d / B
        net.backward(g)
        return float(np.mean(d ** 2))

    def actor_objective(self, obs, eps, ac: float, ad: float) -> tuple[float, np.ndarray, float]:
        """Expected (over the categorical head) soft policy loss; gradient left in the actor.

        Returns the loss, the continuous log densities and the mean discrete entropy.
        """
        B = obs.shape[0]
        self.actor.zero_grad()
        logits, mu, ls, mask = self._heads(self.actor.forward(obs))
        p = _softmax(logits)
        logp_d = np.log(p + 1e-12)
        a, logp_c, cache = _squashed_sample(mu, ls, self.a_max, eps)
        xa = np.concatenate([obs, a], axis=1)
        q1 = self.q1.forward(xa)
        q2 = self.q2.forward(xa)
        use1 = q1 <= q2
        f = ad * logp_d - np.where(use1, q1, q2)
        loss = float(np.mean(np.sum(p * f, axis=1) + ac * logp_c))
        # d/dz of sum p (ad log p - q): the ad * sum p d(log p) term vanishes
        d_logits = p * (f - np.sum(p * f, axis=1, keepdims=True))
        g_a = np.zeros_like(a)
        for net, sel in ((self.q1, use1), (self.q2, ~use1)):
            net.zero_grad()
            net.forward(xa)
            g_a += net.backward(-p * sel)[:, -self.n:]
            net.zero_grad()
        d_mu, d_ls = _squashed_grads(g_a, ac, self.a_max, eps, cache, mask)
        self.actor.backward(np.concatenate([d_logits, d_mu, d_ls], axis=1) / B)
        return loss, logp_c, float(-np.mean(np.sum(p * logp_d, axis=1)))

    def update(self, batch: dict, reward: np.ndarray) -> tuple[float, float]:
        c = self.cfg
        obs, nobs = batch["obs"], batch["next_obs"]
        B = obs.shape[0]
        ac, ad = self.temp_c.value, self.temp_d.value

        logits2, mu2, ls2, _ = self._heads(self.actor.forward(nobs))
        p2 = _softmax(logits2)
        logp_d2 = np.log(p2 + 1e-12)
        a2, logp_c2, _ = _squashed_sample(mu2, ls2, self.a_max, self.rng.standard_normal(mu2.shape))
        x2 = np.concatenate([nobs, a2], axis=1)
        qt = np.minimum(self.q1_targ.forward(x2), self.q2_targ.forward(x2))
        v2 = np.sum(p2 * (qt - ad * logp_d2), axis=1) - ac * logp_c2
        y = reward + c.gamma * (1.0 - batch["terminal"]) * v2

        critic_loss = 0.0
        for net, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            critic_loss += self.critic_objective(net, obs, batch["a_K"], batch["a_R"], y)
            self._apply(net, opt, c.grad_clip)
        _check_finite("critic loss", critic_loss, update=self.updates)

        eps = self.rng.standard_normal((B, self.n))
        actor_loss, logp_c, entropy_d = self.actor_objective(obs, eps, ac, ad)
        _check_finite("actor loss", actor_loss, update=self.updates)
        self._apply(self.actor, self.opt_actor, c.grad_clip)
        self.temp_c.update(float(-np.mean(logp_c)))
        self.temp_d.update(entropy_d)

        self.q1_targ.soft_update(self.q1, c.polyak)
        self.q2_targ.soft_update(self.q2, c.polyak)
        self.updates += 1
        return critic_loss, actor_loss


# ----------------------------------------------------------------------------
# Behaviour cloning
# ----------------------------------------------------------------------------

class BCModel(_Trainable):
    """Classifies the force index and regresses the redundant acceleration."""

    def __init__(self, obs_dim: int, n_discrete: int, n_act: int, a_max: float, cfg: LearnerConfig,
                 rng: np.random.Generator, frame_dim: int | None = None, steps: int = 10):
        self.cfg = cfg
        self.k, self.n, self.a_max = n_discrete, n_act, a_max
        self.net = _net(cfg, obs_dim, n_discrete + n_act, rng, frame_dim, steps)
        self.opt = make_optimizer(cfg.optimizer, self.net.params(), cfg.bc_lr, cfg.momentum)
        self.nets = {"net": self.net}

    def predict(self, obs) -> tuple[np.ndarray, np.ndarray]:
        out = self.net.forward(np.atleast_2d(obs))
        return out[:, :self.k], self.a_max * np.tanh(out[:, self.k:])

    def act(self, obs) -> tuple[int, np.ndarray]:
        logits, a = self.predict(obs)
        return int(np.argmax(logits[0])), a[0]

    def loss(self, obs, a_K, a_R, grad: bool = False) -> float:
        B = obs.shape[0]
        out = self.net.forward(obs)
        logits = out[:, :self.k]
        p = _softmax(logits)
        ce = -np.mean(np.log(p[np.arange(B), a_K] + 1e-12))
        t = np.tanh(out[:, self.k:])
        pred = self.a_max * t
        d = pred - a_R
        mse = np.mean(np.sum(d ** 2, axis=1))
        if grad:
            g_logits = p.copy()
            g_logits[np.arange(B), a_K] -= 1.0
            g_out = np.concatenate([g_logits / B, 2.0 * d * self.a_max * (1.0 - t ** 2) / B], axis=1)
            self.net.backward(g_out)
        return float(ce + mse)

    def fit_epoch(self, obs, a_K, a_R, rng: np.random.Generator) -> float:
        c = self.cfg
        order = rng.permutation(obs.shape[0])
        total, n = 0.0, 0
        for i in range(0, order.size, c.batch_size):
            idx = order[i:i + c.batch_size]
            self.net.zero_grad()
            val = self.loss(obs[idx], a_K[idx], a_R[idx], grad=True)
            _check_finite("imitation loss", val, batch=i)
            self._apply(self.net, self.opt, c.grad_clip)
            total += val * idx.size
            n += idx.size
        return total / max(n, 1)


# ----------------------------------------------------------------------------
# Policies usable by the evaluator
# ----------------------------------------------------------------------------

class SwRLPolicy:
    """Greedy force index from the Q network and mean redundant acceleration from the actor."""

    def __init__(self, dqn: DoubleDQN | None, sac: SAC | None, n_redundant: int):
        self.dqn, self.sac, self.n = dqn, sac, n_redundant

    def act_env(self, env: ManipEnv) -> ActionPair:
        obs = env.observe()
        a_R = self.sac.act(obs, deterministic=True) if self.sac is not None else np.zeros(self.n)
        if self.dqn is not None:
            return ActionPair(self.dqn.greedy(obs), a_R)
        # force schedule left to the scripted baseline
        from .baselines import ManualPolicy
        base = ManualPolicy.for_env(env).act(env.window)
        return ActionPair(base.a_K, a_R, base.delta_F)


class VanillaPolicy:
    def __init__(self, agent: HybridSAC):
        self.agent = agent

    def act_env(self, env: ManipEnv) -> ActionPair:
        a_K, a_R = self.agent.act(env.observe(), deterministic=True)
        return ActionPair(a_K, a_R)


class BCPolicy:
    def __init__(self, model: BCModel):
        self.model = model

    def act_env(self, env: ManipEnv) -> ActionPair:
        a_K, a_R = self.model.act(env.observe())
        return ActionPair(a_K, a_R)


# ----------------------------------------------------------------------------
# Training loops
# ----------------------------------------------------------------------------

@dataclass
class EpisodeStats:
    episode: int
    seed: int
    return_K: float
    return_R: float
    length: int
    cause: str
    occupancy: int
    terminal_theta: float


@dataclass
class TrainResult:
    algo: str
    curves: list[EpisodeStats] = field(default_factory=list)
    agents: dict = field(default_factory=dict)
    policy: object = None
    seed: int = 0
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def occupancy_series(self) -> np.ndarray:
        return np.array([c.occupancy for c in self.curves], dtype=float)


def training_seed(base_seed: int, episode: int) -> int:
    # disjoint from the evaluation seed range used by default
    return 100_000 + 1_000 * int(base_seed) + int(episode)


def offline_seed(base_seed: int, episode: int) -> int:
    return 500_000 + 1_000 * int(base_seed) + int(episode)


def epsilon_at(cfg: LearnerConfig, episode: int) -> float:
    if cfg.epsilon_decay_episodes <= 0:
        return cfg.epsilon_end
    frac = min(1.0, episode / cfg.epsilon_decay_episodes)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def collect_offline(cfg: ScenarioConfig, episodes: int, seed: int | None = None,
                    env: ManipEnv | None = None) -> list[Transition]:
    """Transitions from the scripted baseline, with its steps restricted to the learner's force set."""
    from .baselines import ManualPolicy

    seed = cfg.seed if seed is None else seed
    env = env or ManipEnv(cfg, seed=offline_seed(seed, 0))
    out = []
    for ep in range(episodes):
        env.reset(offline_seed(seed, ep))
        pol = ManualPolicy.for_env(env, quantized=True)
        obs = env.observe()
        done = False
        while not done:
            a = pol.act(env.window)
            _, r_K, r_R, done, info = env.step(a)
            nobs = env.observe()
            out.append(Transition(obs, a.a_K, a.a_R.copy(), r_K, r_R, nobs, done, info["cause"]))
            obs = nobs
    return out


def _make_buffer(env: ManipEnv, cfg: LearnerConfig, offline: list[Transition] | None) -> ReplayBuffer:
    off = list(offline or []) if cfg.offline_mixing else []
    buf = ReplayBuffer(cfg.buffer_capacity, env.obs_dim, env.n_redundant, offline_capacity=len(off),
                       mixing=cfg.offline_mixing)
    for t in off:
        buf.add(t, offline=True)
    return buf


def _dims(env: ManipEnv):
    return env.obs_dim, frame_size(env.robot.dof), env.cfg.mdp.window


def train_swrl(cfg: ScenarioConfig, env_factory: Callable[[int], ManipEnv] | None = None,
               episodes: int | None = None, seed: int | None = None, ablation: str | None = None,
               offline: list[Transition] | None = None, progress: Callable | None = None) -> TrainResult:
    """Train the force-increment and redundant-motion policies from one transition stream.

    ``ablation``: ``"k_only"`` keeps the redundant command at zero and trains
    only the force policy; ``"r_only"`` drives the force with the scripted
    schedule and trains only the redundant policy.
    """
    from .baselines import ManualPolicy

    lc = cfg.learner
    seed = cfg.seed if seed is None else int(seed)
    episodes = lc.episodes if episodes is None else int(episodes)
    env = (env_factory or (lambda s: ManipEnv(cfg, seed=s)))(training_seed(seed, 0))
    obs_dim, frame_dim, steps = _dims(env)
    rng = np.random.default_rng([seed, 1])
    act_rng = np.random.default_rng([seed, 2])
    use_K = ablation != "r_only"
    use_R = ablation != "k_only" and env.n_redundant > 0
    dqn = DoubleDQN(obs_dim, len(env.delta_f_set), lc, np.random.default_rng([seed, 3]), frame_dim, steps) \
        if use_K else None
    sac = SAC(obs_dim, env.n_redundant, cfg.mdp.a_max, lc, np.random.default_rng([seed, 4]), frame_dim, steps) \
        if use_R else None
    if offline is None and lc.offline_mixing and lc.offline_episodes > 0:
        offline = collect_offline(cfg, lc.offline_episodes, seed, env=env)
    buf = _make_buffer(env, lc, offline)

    result = TrainResult("swrl" if ablation is None else f"swrl_{ablation}", seed=seed,
                         config_hash=cfg.config_hash())
    total = 0
    for ep in range(episodes):
        env.reset(training_seed(seed, ep))
        manual = ManualPolicy.for_env(env) if not use_K else None
        eps = epsilon_at(lc, ep)
        obs = env.observe()
        done = False
        while not done:
            if use_K:
                a_K, dF = dqn.act(obs, eps, act_rng), None
            else:
                m = manual.act(env.window)
                a_K, dF = m.a_K, m.delta_F
            if use_R:
                a_R = (act_rng.uniform(-cfg.mdp.a_max, cfg.mdp.a_max, env.n_redundant)
                       if total < lc.warmup_steps else sac.act(obs, act_rng))
            else:
                a_R = np.zeros(env.n_redundant)
            _, r_K, r_R, done, info = env.step(ActionPair(a_K, a_R, dF))
            nobs = env.observe()
            buf.add(Transition(obs, a_K, np.asarray(a_R, dtype=float), r_K, r_R, nobs, done, info["cause"]))
            obs = nobs
            total += 1
            if total >= lc.warmup_steps and total % lc.updates_every == 0:
                batch = buf.sample(lc.batch_size, rng)
                if use_K:
                    dqn.update(batch, lc.reward_scale * batch["r_K"])
                if use_R:
                    sac.update(batch, lc.reward_scale * batch["r_R"])
        result.curves.append(_stats(ep, env))
        if progress:
            progress(result.curves[-1])
    result.agents = {k: v for k, v in (("dqn", dqn), ("sac", sac)) if v is not None}
    result.policy = SwRLPolicy(dqn, sac, env.n_redundant)
    return result


def train_vanilla(cfg: ScenarioConfig, env_factory: Callable[[int], ManipEnv] | None = None,
                  episodes: int | None = None, seed: int | None = None,
                  offline: list[Transition] | None = None, progress: Callable | None = None) -> TrainResult:
    """Single actor-critic over the concatenated action space, trained on r_K + r_R."""
    lc = cfg.learner
    seed = cfg.seed if seed is None else int(seed)
    episodes = lc.episodes if episodes is None else int(episodes)
    env = (env_factory or (lambda s: ManipEnv(cfg, seed=s)))(training_seed(seed, 0))
    obs_dim, frame_dim, steps = _dims(env)
    rng = np.random.default_rng([seed, 1])
    act_rng = np.random.default_rng([seed, 2])
    agent = HybridSAC(obs_dim, len(env.delta_f_set), env.n_redundant, cfg.mdp.a_max, lc,
                      np.random.default_rng([seed, 5]), frame_dim, steps)
    if offline is None and lc.offline_mixing and lc.offline_episodes > 0:
        offline = collect_offline(cfg, lc.offline_episodes, seed, env=env)
    buf = _make_buffer(env, lc, offline)
    result = TrainResult("vanilla", seed=seed, config_hash=cfg.config_hash())
    total = 0
    for ep in range(episodes):
        env.reset(training_seed(seed, ep))
        obs = env.observe()
        done = False
        while not done:
            if total < lc.warmup_steps:
                a_K = int(act_rng.integers(len(env.delta_f_set)))
                a_R = act_rng.uniform(-cfg.mdp.a_max, cfg.mdp.a_max, env.n_redundant)
            else:
                a_K, a_R = agent.act(obs, act_rng)
            _, r_K, r_R, done, info = env.step(ActionPair(a_K, a_R))
            nobs = env.observe()
            buf.add(Transition(obs, a_K, np.asarray(a_R, dtype=float), r_K, r_R, nobs, done, info["cause"]))
            obs = nobs
            total += 1
            if total >= lc.warmup_steps and total % lc.updates_every == 0:
                batch = buf.sample(lc.batch_size, rng)
                agent.update(batch, lc.reward_scale * (batch["r_K"] + batch["r_R"]))
        result.curves.append(_stats(ep, env))
        if progress:
            progress(result.curves[-1])
    result.agents = {"hybrid": agent}
    result.policy = VanillaPolicy(agent)
    return result


def train_bc(cfg: ScenarioConfig, transitions: list[Transition], n_redundant: int, obs_dim: int,
             frame_dim: int | None = None, epochs: int | None = None, seed: int | None = None) -> TrainResult:
    """Supervised imitation of the scripted baseline; reports held-out accuracy and MSE."""
    if not transitions:
        raise ValueError("behaviour cloning needs a nonempty dataset")
    lc = cfg.learner
    seed = cfg.seed if seed is None else int(seed)
    epochs = lc.bc_epochs if epochs is None else int(epochs)
    rng = np.random.default_rng([seed, 6])
    obs = np.array([t.obs for t in transitions], dtype=float)
    a_K = np.array([t.a_K for t in transitions], dtype=np.int64)
    a_R = np.array([np.asarray(t.a_R, dtype=float).reshape(n_redundant) for t in transitions])
    order = rng.permutation(len(transitions))
    n_hold = int(round(lc.bc_holdout * len(order))) if len(order) > 1 else 0
    hold, train = order[:n_hold], order[n_hold:]
    model = BCModel(obs_dim, 4, n_redundant, cfg.mdp.a_max, lc, np.random.default_rng([seed, 7]), frame_dim,
                    cfg.mdp.window)
    result = TrainResult("bc", seed=seed, config_hash=cfg.config_hash())
    losses = []
    for _ in range(epochs):
        losses.append(model.fit_epoch(obs[train], a_K[train], a_R[train], rng))
    metrics = {"train_loss": losses}
    if n_hold:
        logits, pred = model.predict(obs[hold])
        metrics["holdout_accuracy"] = float(np.mean(np.argmax(logits, axis=1) == a_K[hold]))
        metrics["holdout_mse"] = float(np.mean(np.sum((pred - a_R[hold]) ** 2, axis=1)))
    result.extra = metrics
    result.agents = {"bc": model}
    result.policy = BCPolicy(model)
    return result


def _stats(ep: int, env: ManipEnv) -> EpisodeStats:
    L = env.log
    rK, rR = L.returns()
    return EpisodeStats(ep, env.seed, rK, rR, len(L.records), env.cause, L.occupancy(), L.terminal_theta)


# ----------------------------------------------------------------------------
# Persistence
# ----------------------------------------------------------------------------

CURVE_FIELDS = ("episode", "seed", "return_K", "return_R", "length", "cause", "occupancy", "terminal_theta")


def write_curves(result: TrainResult, path: str | Path, header: dict | None = None):
    lines = [f"# {k}: {v}" for k, v in (header or {}).items()]
    rows = [",".join(CURVE_FIELDS)]
    for c in result.curves:
        rows.append(",".join([str(c.episode), str(c.seed), repr(float(c.return_K)), repr(float(c.return_R)),
                              str(c.length), c.cause, str(c.occupancy), repr(float(c.terminal_theta))]))
    Path(path).write_text("\n".join(lines + rows) + "\n")


def save_checkpoint(result: TrainResult, path_prefix: str | Path, cfg: ScenarioConfig):
    """``<prefix>.npz`` with every parameter array plus ``<prefix>.json`` manifest."""
    arrays = {}
    for name, agent in result.agents.items():
        for key, arr in agent.state_arrays().items():
            arrays[f"{name}:{key}"] = np.asarray(arr)
    prefix = Path(path_prefix)
    with open(prefix.with_suffix(".npz"), "wb") as fh:
        np.savez(fh, **arrays)
    manifest = {"format": 1, "algo": result.algo, "seed": result.seed, "config_hash": cfg.config_hash(),
                "agents": sorted(result.agents), "shapes": {k: list(v.shape) for k, v in sorted(arrays.items())}}
    prefix.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_policy(path_prefix: str | Path, cfg: ScenarioConfig, env: ManipEnv):
    """Rebuild the policy stored under ``path_prefix`` for ``cfg``; shape mismatches raise."""
    prefix = Path(path_prefix)
    try:
        manifest = json.loads(prefix.with_suffix(".json").read_text())
        data = dict(np.load(prefix.with_suffix(".npz")))
    except FileNotFoundError as err:
        raise ArtifactMismatch(f"checkpoint not found: {err.filename}") from None
    algo = manifest.get("algo", "")
    lc = cfg.learner
    obs_dim, frame_dim, steps = _dims(env)
    rng = np.random.default_rng(0)
    a_max = cfg.mdp.a_max
    if algo.startswith("swrl"):
        dqn = sac = None
        if "dqn" in manifest["agents"]:
            dqn = DoubleDQN(obs_dim, len(env.delta_f_set), lc, rng, frame_dim, steps)
            dqn.load_arrays(data, "dqn:")
        if "sac" in manifest["agents"]:
            sac = SAC(obs_dim, env.n_redundant, a_max, lc, rng, frame_dim, steps)
            sac.load_arrays(data, "sac:")
        return SwRLPolicy(dqn, sac, env.n_redundant)
    if algo == "vanilla":
        agent = HybridSAC(obs_dim, len(env.delta_f_set), env.n_redundant, a_max, lc, rng, frame_dim, steps)
        agent.load_arrays(data, "hybrid:")
        return VanillaPolicy(agent)
    if algo == "bc":
        model = BCModel(obs_dim, len(env.delta_f_set), env.n_redundant, a_max, lc, rng, frame_dim, steps)
        model.load_arrays(data, "bc:")
        return BCPolicy(model)
    raise ArtifactMismatch(f"unknown checkpoint algorithm {algo!r}")
