import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from balancemix import mixing as mx
from balancemix.errors import ConfigError, ContractError

from oracles import folded_beta_cdf, folded_beta_mean


def _inst(x, y, rel=(0, 2), w=(1.0, 0.3)):
    return mx.Instance(np.array(x, float), np.array(y, float), np.array(rel), np.array(w))


def test_fold():
    assert mx.fold_lambda(0.2) == pytest.approx(0.8)
    assert mx.fold_lambda(0.5) == 0.5
    assert mx.fold_lambda(0.9) == pytest.approx(0.9)


def test_draw_lambda_scalar_and_validation():
    lam = mx.draw_lambda(4.0, np.random.default_rng(0))
    assert isinstance(lam, float) and 0.5 <= lam <= 1.0
    with pytest.raises(ConfigError):
        mx.draw_lambda(0.0, np.random.default_rng(0))


def test_lambda_mean_matches_quadrature():
    lam = mx.draw_lambda(4.0, np.random.default_rng(1), size=100_000)
    assert abs(lam.mean() - folded_beta_mean(4.0)) < 0.005


def test_lambda_ks_against_folded_beta():
    lam = np.sort(mx.draw_lambda(4.0, np.random.default_rng(2), size=100_000))
    grid = np.linspace(0.5, 1.0, 201)
    emp = np.searchsorted(lam, grid, side="right") / len(lam)
    assert np.max(np.abs(emp - folded_beta_cdf(grid, 4.0))) < 0.01


def test_mix_identical_instances():
    a = _inst([1.0, 2.0], [1, 0])
    out = mx.mix(a, a, 0.73)
    np.testing.assert_allclose(out.features, a.features)
    np.testing.assert_allclose(out.labels, a.labels)


def test_mix_lambda_one_returns_random_instance():
    a, b = _inst([1.0, 2.0], [1, 0]), _inst([5.0, -1.0], [0, 1], rel=(1, 1), w=(0.9, 0.9))
    out = mx.mix(a, b, 1.0)
    assert np.array_equal(out.features, a.features) and np.array_equal(out.labels, a.labels)


def test_mix_worked_example():
    a, b = _inst([1, 0], [1, 0]), _inst([0, 1], [0, 1], rel=(1, 1), w=(0.0, 0.0))
    out = mx.mix(a, b, 0.7)
    np.testing.assert_allclose(out.features, [0.7, 0.3])
    np.testing.assert_allclose(out.labels, [0.7, 0.3])
    # tags and ambiguous weights come from the random-sampler instance
    assert out.reliability.tolist() == [0, 2]
    np.testing.assert_allclose(out.ambiguous_weight, [1.0, 0.3])


def test_mix_tie_inherits_from_random_instance():
    a, b = _inst([0, 0], [0, 0], rel=(2, 2)), _inst([1, 1], [1, 1], rel=(0, 0))
    assert mx.mix(a, b, 0.5).reliability.tolist() == [2, 2]


def test_mix_rejects_small_lambda():
    a = _inst([0, 0], [0, 0])
    with pytest.raises(ContractError):
        mx.mix(a, a, 0.4)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), lam=st.floats(0.5, 1.0))
def test_mix_stays_in_hull(seed, lam):
    rng = np.random.default_rng(seed)
    a = _inst(rng.normal(size=4), rng.uniform(size=2))
    b = _inst(rng.normal(size=4), rng.uniform(size=2))
    out = mx.mix(a, b, lam)
    assert np.all((out.labels >= 0) & (out.labels <= 1))
    lo, hi = np.minimum(a.features, b.features), np.maximum(a.features, b.features)
    assert np.all(out.features >= lo - 1e-12) and np.all(out.features <= hi + 1e-12)
    # the random-sampler contribution dominates
    assert lam >= 1 - lam
    np.testing.assert_allclose(out.labels, lam * a.labels + (1 - lam) * b.labels)


def test_mix_batch_rowwise():
    rng = np.random.default_rng(0)
    xr, xm = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    yr, ym = rng.integers(0, 2, (3, 4)), rng.integers(0, 2, (3, 4))
    lam = np.array([0.5, 0.8, 1.0])
    x, y = mx.mix_batch(xr, yr, xm, ym, lam)
    for i in range(3):
        np.testing.assert_allclose(x[i], lam[i] * xr[i] + (1 - lam[i]) * xm[i])
        np.testing.assert_allclose(y[i], lam[i] * yr[i] + (1 - lam[i]) * ym[i])
