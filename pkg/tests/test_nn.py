import numpy as np
import pytest

from swrl.config import LearnerConfig
from swrl.learners import SAC, BCModel, DoubleDQN, HybridSAC
from swrl.nn import LSTM, Adam, Dense, Sequential, Tanh, _rel_err, gradient_check, mlp

TOL = 1e-4


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    return rng.normal(size=(5, 20)), rng.normal(size=(5, 3))


def _sq(y):
    def loss(out):
        d = out - y
        return 0.5 * float(np.sum(d * d)), d
    return loss


def test_linear_model_exact(data):
    x, y = data
    assert gradient_check(Sequential([Dense(20, 3, np.random.default_rng(1))]), _sq(y), x) < 1e-7


def test_two_layer_64(data):
    x, y = data
    net = Sequential([Dense(20, 64, np.random.default_rng(2)), Tanh(), Dense(64, 3, np.random.default_rng(3))])
    assert gradient_check(net, _sq(y), x) < TOL


def test_relu_mlp_and_recurrent_extractor(data):
    x, y = data
    rng = np.random.default_rng(4)
    assert gradient_check(mlp(20, 3, rng, d_feat=32), _sq(y), x) < TOL
    net = mlp(20, 3, rng, d_feat=16, mode="lstm", frame_dim=2, steps=10, head_scale=0.5)
    assert any(isinstance(layer, LSTM) for layer in net.layers)
    assert gradient_check(net, _sq(y), x) < TOL


def test_constant_loss_zero_gradient(data):
    x, _ = data
    net = mlp(20, 3, np.random.default_rng(5), d_feat=8)
    net.zero_grad()
    net.forward(x)
    net.backward(np.zeros((5, 3)))
    assert np.all(net.flat_grad() == 0)
    assert gradient_check(net, lambda o: (1.0, np.zeros_like(o)), x) == 0.0


def test_flat_round_trip_and_soft_update():
    rng = np.random.default_rng(6)
    a, b = mlp(4, 2, rng, d_feat=8), mlp(4, 2, rng, d_feat=8)
    v = a.get_flat()
    a.set_flat(v * 2)
    assert np.array_equal(a.get_flat(), v * 2)
    before = b.get_flat()
    b.soft_update(a, 0.25)
    assert np.allclose(b.get_flat(), 0.75 * before + 0.25 * a.get_flat())


def test_adam_reduces_quadratic():
    p = [np.array([3.0, -2.0])]
    opt = Adam(p, lr=0.1)
    for _ in range(300):
        opt.step([2 * p[0]])
    assert np.linalg.norm(p[0]) < 1e-2


# ----------------------------------------------------------------------------
# learner objectives against central differences of the same objective
# ----------------------------------------------------------------------------

def _fd(net, f, h=1e-5):
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


@pytest.fixture
def batch():
    rng = np.random.default_rng(0)
    B, D = 6, 12
    return dict(obs=rng.normal(size=(B, D)), eps=rng.normal(size=(B, 1)), y=rng.normal(size=B),
                a_R=rng.normal(size=(B, 1)), a_K=rng.integers(4, size=B), D=D)


LC = LearnerConfig(d_feat=16)


def _scale(*nets):
    # larger weights so every term of the objective carries signal
    for n in nets:
        n.set_flat(n.get_flat() * 5)


def test_sac_actor_and_critic_gradients(batch):
    sac = SAC(batch["D"], 1, 2.0, LC, np.random.default_rng(1))
    _scale(sac.q1, sac.q2)
    sac.actor_objective(batch["obs"], batch["eps"], 0.3)
    an = sac.actor.flat_grad()
    assert _rel_err(an, _fd(sac.actor, lambda: sac.actor_objective(batch["obs"], batch["eps"], 0.3)[0])) < TOL
    f = lambda: sac.critic_objective(sac.q1, batch["obs"], batch["a_R"], batch["y"])
    f()
    assert _rel_err(sac.q1.flat_grad(), _fd(sac.q1, f)) < TOL


def test_hybrid_actor_and_critic_gradients(batch):
    h = HybridSAC(batch["D"], 4, 1, 2.0, LC, np.random.default_rng(2))
    _scale(h.q1, h.q2, h.actor)
    f = lambda: h.actor_objective(batch["obs"], batch["eps"], 0.3, 0.2)[0]
    f()
    assert _rel_err(h.actor.flat_grad(), _fd(h.actor, f)) < TOL
    g = lambda: h.critic_objective(h.q1, batch["obs"], batch["a_K"], batch["a_R"], batch["y"])
    g()
    assert _rel_err(h.q1.flat_grad(), _fd(h.q1, g)) < TOL


def test_dqn_and_bc_gradients(batch):
    dq = DoubleDQN(batch["D"], 4, LC, np.random.default_rng(3))
    _scale(dq.q)
    f = lambda: dq.td_objective(batch["obs"], batch["a_K"], batch["y"])
    f()
    assert _rel_err(dq.q.flat_grad(), _fd(dq.q, f)) < TOL
    bc = BCModel(batch["D"], 4, 1, 2.0, LC, np.random.default_rng(4))
    _scale(bc.net)
    bc.net.zero_grad()
    bc.loss(batch["obs"], batch["a_K"], batch["a_R"], grad=True)
    an = bc.net.flat_grad()
    assert _rel_err(an, _fd(bc.net, lambda: bc.loss(batch["obs"], batch["a_K"], batch["a_R"]))) < TOL
