"""Small numpy function approximators with hand-written backpropagation."""

from __future__ import annotations

import numpy as np


class Layer:
    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, scale: float | None = None):
        # He-style fan-in init; heads pass a small explicit scale
        s = np.sqrt(2.0 / n_in) if scale is None else scale
        self.W = rng.normal(0.0, s, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def forward(self, x):
        self._x = x
        return x @ self.W + self.b

    def backward(self, g):
        self.dW += self._x.T @ g
        self.db += g.sum(axis=0)
        return g @ self.W.T


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class Tanh(Layer):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, g):
        return g * (1.0 - self._y ** 2)


class LSTM(Layer):
    """Single-layer LSTM over a flattened window; returns the last hidden state.

    Input rows are ``T * n_in`` long and are read as T consecutive frames.
    """

    def __init__(self, n_in: int, hidden: int, steps: int, rng: np.random.Generator):
        self.n_in, self.H, self.T = n_in, hidden, steps
        s = 1.0 / np.sqrt(hidden)
        self.Wx = rng.uniform(-s, s, size=(n_in, 4 * hidden))
        self.Wh = rng.uniform(-s, s, size=(hidden, 4 * hidden))
        self.b = np.zeros(4 * hidden)
        self.b[hidden:2 * hidden] = 1.0  # forget gate bias
        self.dWx = np.zeros_like(self.Wx)
        self.dWh = np.zeros_like(self.Wh)
        self.db = np.zeros_like(self.b)

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def grads(self):
        return [self.dWx, self.dWh, self.db]

    def forward(self, x):
        B = x.shape[0]
        H = self.H
        xs = x.reshape(B, self.T, self.n_in)
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        self._cache = []
        for t in range(self.T):
            z = xs[:, t] @ self.Wx + h @ self.Wh + self.b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            o = _sigmoid(z[:, 2 * H:3 * H])
            gg = np.tanh(z[:, 3 * H:])
            c_new = f * c + i * gg
            tc = np.tanh(c_new)
            self._cache.append((xs[:, t], h, c, i, f, o, gg, tc))
            h = o * tc
            c = c_new
        return h

    def backward(self, g):
        H = self.H
        B = g.shape[0]
        dx = np.zeros((B, self.T, self.n_in))
        dh = g
        dc = np.zeros((B, H))
        for t in range(self.T - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, o, gg, tc = self._cache[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc ** 2)
            di = dc * gg
            df = dc * c_prev
            dgg = dc * i
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dgg * (1 - gg ** 2)], axis=1)
            self.dWx += x_t.T @ dz
            self.dWh += h_prev.T @ dz
            self.db += dz.sum(axis=0)
            dx[:, t] = dz @ self.Wx.T
            dh = dz @ self.Wh.T
            dc = dc * f
        return dx.reshape(B, -1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grad(self):
        for g in self.grads():
            g[...] = 0.0

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()]) if self.params() else np.zeros(0)

    def set_flat(self, flat: np.ndarray):
        i = 0
        for p in self.params():
            n = p.size
            p[...] = flat[i:i + n].reshape(p.shape)
            i += n

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads()]) if self.grads() else np.zeros(0)

    def copy_from(self, other: "Sequential"):
        for p, q in zip(self.params(), other.params()):
            p[...] = q

    def soft_update(self, other: "Sequential", tau: float):
        for p, q in zip(self.params(), other.params()):
            p *= 1.0 - tau
            p += tau * q


def feature_extractor(n_in: int, d_feat: int, rng: np.random.Generator, mode: str = "flat",
                      frame_dim: int | None = None, steps: int = 10) -> list[Layer]:
    """Window -> feature layers: a 2-layer network on the flat window, or an LSTM over its frames."""
    if mode == "flat":
        return [Dense(n_in, d_feat, rng), ReLU(), Dense(d_feat, d_feat, rng), ReLU()]
    if mode == "lstm":
        if frame_dim is None or frame_dim * steps != n_in:
            raise ValueError("recurrent extractor needs frame_dim * steps == input size")
        return [LSTM(frame_dim, d_feat, steps, rng), Dense(d_feat, d_feat, rng), ReLU()]
    raise ValueError(f"unknown feature mode {mode!r}")


def mlp(n_in: int, n_out: int, rng: np.random.Generator, d_feat: int = 128, mode: str = "flat",
        frame_dim: int | None = None, steps: int = 10, head_scale: float = 1e-2) -> Sequential:
    return Sequential(feature_extractor(n_in, d_feat, rng, mode, frame_dim, steps)
                      + [Dense(d_feat, n_out, rng, scale=head_scale)])


# ----------------------------------------------------------------------------
# Optimizers
# ----------------------------------------------------------------------------

def clip_grads(grads: list[np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> list[np.ndarray]:
        return self.m + self.v + [np.array([self.t], dtype=float)]


class SGDMomentum:
    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, momentum: float = 0.9):
        self.params = params
        self.lr, self.mu = lr, momentum
        self.vel = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]):
        for p, g, v in zip(self.params, grads, self.vel):
            v *= self.mu
            v += g
            p -= self.lr * v

    def state(self) -> list[np.ndarray]:
        return list(self.vel)


def make_optimizer(kind: str, params: list[np.ndarray], lr: float, momentum: float = 0.9):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd_momentum":
        return SGDMomentum(params, lr, momentum)
    raise ValueError(f"unknown optimizer {kind!r}")


# ----------------------------------------------------------------------------
# Gradient checking
# ----------------------------------------------------------------------------

def gradient_check(approximator: Sequential, loss, x: np.ndarray, eps: float = 1e-5,
                   max_params: int | None = None, rng: np.random.Generator | None = None,
                   check_input: bool = True) -> float:
    """Max relative error between backprop and central differences.

    ``loss(out)`` returns ``(value, d value / d out)``. Parameters (a random
    subset of ``max_params`` when given) and, optionally, the input are
    perturbed by ``eps``.
    """
    approximator.zero_grad()
    out = approximator.forward(x)
    _, g_out = loss(out)
    g_in = approximator.backward(g_out)
    analytic = approximator.flat_grad()

    flat = approximator.get_flat()
    idx = np.arange(flat.size)
    if max_params is not None and flat.size > max_params:
        idx = (rng or np.random.default_rng(0)).choice(flat.size, max_params, replace=False)

    def value_at(vec):
        approximator.set_flat(vec)
        return loss(approximator.forward(x))[0]

    num = np.empty(idx.size)
    for n, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + eps
        fp = value_at(flat)
        flat[i] = orig - eps
        fm = value_at(flat)
        flat[i] = orig
        num[n] = (fp - fm) / (2 * eps)
    approximator.set_flat(flat)
    errs = [_rel_err(analytic[idx], num)]

    if check_input:
        xf = np.array(x, dtype=float)
        num_x = np.empty(xf.size)
        view = xf.reshape(-1)
        for i in range(view.size):
            orig = view[i]
            view[i] = orig + eps
            fp = loss(approximator.forward(xf))[0]
            view[i] = orig - eps
            fm = loss(approximator.forward(xf))[0]
            view[i] = orig
            num_x[i] = (fp - fm) / (2 * eps)
        errs.append(_rel_err(np.asarray(g_in).reshape(-1), num_x))
    return float(max(errs))


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    mag = np.maximum(np.abs(a), np.abs(b))
    top = float(mag.max())
    if top == 0.0:
        return 0.0
    # entries far below the largest gradient are compared on that scale
    err = np.abs(a - b) / np.maximum(mag, 1e-6 * top)
    return float(np.max(err))
