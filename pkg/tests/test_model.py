import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from balancemix import model as mdl
from balancemix.errors import ShapeError


def _scalar_forward(m, x):
    """Independent scalar-loop reimplementation of the forward pass."""
    out = np.zeros((x.shape[0], m.n_classes))
    for n in range(x.shape[0]):
        hidden = []
        for h in range(m.hidden_dim):
            a = m.b1[h]
            for j in range(m.in_dim):
                a += m.w1[h, j] * x[n, j]
            hidden.append(max(a, 0.0))
        for k in range(m.n_classes):
            z = m.b2[k]
            for h in range(m.hidden_dim):
                z += m.w2[k, h] * hidden[h]
            f = 1.0 / (1.0 + math.exp(-z))
            out[n, k] = min(max(f, mdl.CLAMP), 1 - mdl.CLAMP)
    return out


def _random_model(rng, d, h, k, scale=1.0):
    m = mdl.init_model(d, h, k, rng)
    return m.map(lambda a: a * scale)


def _fd_grads(m, batch, step=1e-5):
    base = m.flat()
    out = np.zeros_like(base)
    for i in range(len(base)):
        up, dn = base.copy(), base.copy()
        up[i] += step
        dn[i] -= step
        out[i] = (mdl.batch_loss(m.with_flat(up), batch) - mdl.batch_loss(m.with_flat(dn), batch)) / (2 * step)
    return out


def test_zero_params_give_half():
    m = mdl.init_model(4, 3, 2, np.random.default_rng(0)).map(np.zeros_like)
    f = mdl.forward(m, np.random.default_rng(1).normal(size=(5, 4)))
    assert np.all(f == 0.5)


def test_saturated_logit_is_clamped():
    m = mdl.ModelState(w1=np.zeros((1, 1)), b1=np.zeros(1), w2=np.zeros((1, 1)), b2=np.array([38.0]))
    assert mdl.forward(m, np.zeros((1, 1)))[0, 0] == 1 - mdl.CLAMP
    m = mdl.ModelState(w1=np.zeros((1, 1)), b1=np.zeros(1), w2=np.zeros((1, 1)), b2=np.array([-38.0]))
    assert mdl.forward(m, np.zeros((1, 1)))[0, 0] == mdl.CLAMP


def test_forward_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    m = _random_model(rng, 4, 5, 3, scale=2.0)
    x = rng.normal(size=(3, 4))
    np.testing.assert_allclose(mdl.forward(m, x), _scalar_forward(m, x), rtol=0, atol=1e-12)


def test_forward_shape_error():
    m = mdl.init_model(4, 3, 2, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        mdl.forward(m, np.zeros((2, 5)))


def test_forward_deterministic():
    rng = np.random.default_rng(0)
    m = _random_model(rng, 6, 8, 3)
    x = rng.normal(size=(10, 6))
    assert mdl.forward(m, x).tobytes() == mdl.forward(m, x.copy()).tobytes()


@pytest.mark.parametrize("f,y,expected", [
    (0.5, 1.0, 0.6931471805599453),
    (0.8, 0.0, 1.6094379124341003),
    # soft label: 0.3 * -ln(0.7) + 0.7 * -ln(0.3)
    (0.7, 0.3, 0.949783446209775),
])
def test_bce_values(f, y, expected):
    assert mdl.bce(f, y) == pytest.approx(expected, abs=1e-9)


def test_zero_weights_give_zero_loss_and_grads():
    rng = np.random.default_rng(0)
    m = _random_model(rng, 5, 4, 3)
    x = rng.normal(size=(4, 5))
    y = rng.integers(0, 2, size=(4, 3)).astype(float)
    loss, g = mdl.batch_loss_and_grads(m, mdl.MiniBatch(x, y, np.zeros_like(y)))
    assert loss == 0.0
    assert all(np.all(a == 0) for a in g.arrays())


def test_logit_gradient_vanishes_when_prediction_equals_label():
    m = mdl.ModelState(w1=np.zeros((1, 1)), b1=np.zeros(1), w2=np.zeros((1, 1)), b2=np.zeros(1))
    _, g = mdl.batch_loss_and_grads(m, mdl.MiniBatch(np.ones((1, 1)), np.full((1, 1), 0.5), np.ones((1, 1))))
    assert g.b2[0] == 0.0


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    m = _random_model(rng, 5, 4, 3)
    x = rng.normal(size=(2, 5))
    y = rng.uniform(size=(2, 3))
    w = rng.uniform(size=(2, 3))
    batch = mdl.MiniBatch(x, y, w)
    _, g = mdl.batch_loss_and_grads(m, batch)
    fd = _fd_grads(m, batch)
    rel = np.abs(g.flat() - fd) / np.maximum(np.abs(fd) + np.abs(g.flat()), 1e-8)
    assert rel.max() < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 6), h=st.integers(1, 6), k=st.integers(1, 4),
       b=st.integers(1, 4))
def test_gradient_property(seed, d, h, k, b):
    rng = np.random.default_rng(seed)
    m = _random_model(rng, d, h, k)
    assert m.n_params() <= 200
    batch = mdl.MiniBatch(rng.normal(size=(b, d)), rng.uniform(size=(b, k)), rng.uniform(size=(b, k)))
    _, g = mdl.batch_loss_and_grads(m, batch)
    fd = _fd_grads(m, batch)
    # kinks of the rectifier make FD unreliable for pre-activations within a step of zero
    pre = batch.features @ m.w1.T + m.b1
    if np.min(np.abs(pre)) < 1e-4:
        return
    err = np.abs(g.flat() - fd) / np.maximum(np.abs(fd) + np.abs(g.flat()), 1e-6)
    assert err.max() < 1e-4


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    m = _random_model(rng, 3, 4, 2, scale=3.0)
    batch = mdl.MiniBatch(rng.normal(size=(5, 3)), rng.uniform(size=(5, 2)), rng.uniform(size=(5, 2)))
    assert mdl.batch_loss(m, batch) >= 0.0


def test_sgd_vanilla_step():
    rng = np.random.default_rng(0)
    m = _random_model(rng, 3, 2, 2)
    g = _random_model(rng, 3, 2, 2)
    opt = mdl.init_optimizer(m, learning_rate=1.0, momentum=0.0)
    m2, _ = mdl.sgd_step(m, opt, g)
    np.testing.assert_allclose(m2.flat(), m.flat() - g.flat())


def test_sgd_zero_grad_is_noop():
    rng = np.random.default_rng(0)
    m = _random_model(rng, 3, 2, 2)
    opt = mdl.init_optimizer(m, learning_rate=0.3, momentum=0.9)
    m2, _ = mdl.sgd_step(m, opt, mdl.zeros_like(m))
    assert np.array_equal(m2.flat(), m.flat())


def test_sgd_momentum_two_steps():
    rng = np.random.default_rng(0)
    m0 = _random_model(rng, 3, 2, 2)
    g = _random_model(rng, 3, 2, 2)
    opt = mdl.init_optimizer(m0, learning_rate=0.1, momentum=0.9)
    m1, opt = mdl.sgd_step(m0, opt, g)
    m2, _ = mdl.sgd_step(m1, opt, g)
    np.testing.assert_allclose(m2.flat(), m0.flat() - 0.1 * g.flat() - 0.1 * 1.9 * g.flat(), atol=1e-14)


def test_full_batch_descent_is_mostly_monotone():
    rng = np.random.default_rng(5)
    m = mdl.init_model(6, 8, 3, rng)
    x = rng.normal(size=(10, 6))
    y = rng.integers(0, 2, size=(10, 3)).astype(float)
    batch = mdl.MiniBatch.unweighted(x, y)
    opt = mdl.init_optimizer(m, learning_rate=0.1, momentum=0.0)
    losses = []
    for _ in range(51):
        loss, g = mdl.batch_loss_and_grads(m, batch)
        losses.append(loss)
        m, opt = mdl.sgd_step(m, opt, g)
    decreases = sum(b < a for a, b in zip(losses, losses[1:]))
    assert decreases >= 45
