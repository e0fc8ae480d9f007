import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phidro.datasets import Dataset, gaussian_blobs
from phidro.divergence import make_divergence
from phidro.errors import ParameterError
from phidro.mlmc import (
    BallSampler,
    EstimatorConfig,
    SampleTree,
    entropic_level_term,
    estimator_terms,
    fixed_level_terms,
    grad_hat_R,
    level_probabilities,
    level_term,
    rt_mlmc_estimator,
    sample_tree,
    sg_estimator,
)
from phidro.models import LinearModel, LogisticModel, MLP1

DATA1 = Dataset(np.array([[0.5], [-1.0], [2.0]]), np.array([1, 0, 1]))
LIN1 = LinearModel(1)
THETA1 = np.array([0.3, -0.2])


def test_level_zero_tree_has_one_child():
    t = sample_tree(BallSampler("l2", 1.0, 2), (np.zeros((1, 2)), [0]), 0, np.random.default_rng(0))
    assert t.children.shape == (1, 2)


def test_linf_children_within_box():
    s = BallSampler("linf", 0.3, 2)
    t = sample_tree(s, (np.array([[1.0, -2.0]]), [1]), 8, np.random.default_rng(1))
    assert t.children.shape == (256, 2)
    assert np.all(np.abs(t.children - t.root) <= 0.3)


def test_l2_mean_squared_radius():
    s = BallSampler("l2", 2.0, 3)
    off = s.sample(np.random.default_rng(2), 100_000)
    assert s.contains(off)
    assert np.mean(np.sum(off**2, axis=1)) == pytest.approx(4.0 * 3 / 5, rel=0.02)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["l2", "linf"]), st.floats(0.01, 10), st.integers(1, 6), st.integers(0, 2**32))
def test_samples_land_in_ball(norm, rho, dim, seed):
    s = BallSampler(norm, rho, dim)
    assert s.contains(s.sample(np.random.default_rng(seed), 200))


def test_sampler_validation():
    with pytest.raises(ParameterError):
        BallSampler("l2", 0.0, 2)
    with pytest.raises(ParameterError):
        BallSampler("l2", 1.0, 0)
    with pytest.raises(ValueError):
        BallSampler("l1", 1.0, 2)


def test_sample_tree_empty_data():
    with pytest.raises(ParameterError):
        sample_tree(BallSampler("l2", 1.0, 1), (np.zeros((0, 1)), []), 1, np.random.default_rng(0))


def test_tree_deterministic_given_rng():
    s = BallSampler("l2", 1.0, 1)
    a = sample_tree(s, DATA1, 4, np.random.default_rng(9))
    b = sample_tree(s, DATA1, 4, np.random.default_rng(9))
    assert np.array_equal(a.children, b.children)


# -- grad_hat_R ----------------------------------------------------------------------


def test_grad_hat_single_point():
    x = np.array([[0.7]])
    g = grad_hat_R(LIN1, THETA1, x, 1, 0.5, make_divergence("kl"))
    np.testing.assert_array_equal(g, LIN1.grad_theta(THETA1, x, 1)[0])


def test_grad_hat_equal_losses_average():
    # symmetric points around the decision value give equal squared losses
    theta = np.array([1.0, 0.0])
    pts = np.array([[0.5], [1.5]])  # residuals -0.5 and +0.5 for target +1
    g = grad_hat_R(LIN1, theta, pts, 1, 0.3, make_divergence("quadratic"))
    np.testing.assert_allclose(g, LIN1.grad_theta(theta, pts, 1).mean(axis=0), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_kl_fast_path_matches_bisection(seed):
    rng = np.random.default_rng(seed)
    model = MLP1(2, 5, 2)
    theta = model.init_theta(rng)
    pts = rng.normal(size=(32, 2))
    fast = grad_hat_R(model, theta, pts, 1, 0.2, make_divergence("kl"), 1e-12, fast_path=True)
    slow = grad_hat_R(model, theta, pts, 1, 0.2, make_divergence("kl"), 1e-12, fast_path=False)
    assert np.max(np.abs(fast - slow)) <= 1e-5


def test_grad_hat_norm_bound():
    rng = np.random.default_rng(3)
    model = LogisticModel(2)
    theta = rng.normal(size=3)
    pts = rng.normal(size=(16, 2))
    G = model.grad_theta(theta, pts, 0)
    g = grad_hat_R(model, theta, pts, 0, 0.5, make_divergence("quadratic"), 1e-8)
    bound = np.max(np.linalg.norm(G, axis=1)) * (1 + np.sqrt(2 * 1e-8 / 0.5))
    assert np.linalg.norm(g) <= bound


# -- entropic level term ---------------------------------------------------------


def test_entropic_constant_loss_gives_zero():
    model = LinearModel(1)
    theta = np.array([0.0, 0.25])  # constant score, loss independent of x
    tree = SampleTree(np.array([0.0]), 1, np.linspace(-1, 1, 8)[:, None], 3)
    term = entropic_level_term(model, theta, tree, 0.1)
    assert np.all(term[1:] == 0.0)
    # the x-gradient part vanishes only on average; the w-component is sum gamma_i r x_i
    np.testing.assert_allclose(term, 0.0, atol=1e-15)


def test_entropic_level_one_hand_evaluated():
    model = LinearModel(1)
    theta = np.array([1.0, 0.0])
    kids = np.array([[0.2], [-0.4]])
    tree = SampleTree(np.array([0.0]), 1, kids, 1)
    eta = 0.7
    f = model.loss(theta, kids, 1)
    G = model.grad_theta(theta, kids, 1)
    w = np.exp(f / eta) / np.exp(f / eta).sum()
    expect = w @ G - 0.5 * G[0] - 0.5 * G[1]
    np.testing.assert_allclose(entropic_level_term(model, theta, tree, eta), expect, rtol=1e-12)
    np.testing.assert_allclose(level_term(model, theta, tree, eta, make_divergence("kl")), expect, rtol=1e-12)


def test_second_moment_decays():
    data = gaussian_blobs(64, [[1, 0.5], [-1, -0.5]], 0.5, np.random.default_rng(0))
    model = LogisticModel(2)
    theta = np.array([1.0, -2.0, 0.1])
    cfg = EstimatorConfig(eta=0.5)
    s = BallSampler("l2", 0.5, 2)
    m3 = np.mean(np.sum(fixed_level_terms(model, theta, 3, cfg, s, data, 1, 4000) ** 2, axis=1))
    m6 = np.mean(np.sum(fixed_level_terms(model, theta, 6, cfg, s, data, 2, 4000) ** 2, axis=1))
    assert m6 <= 0.6 * m3


# -- estimators --------------------------------------------------------------------


def _cfg(**kw):
    base = dict(L=2, n_outer=1, eta=0.5, scheme="sg")
    base.update(kw)
    return EstimatorConfig(**base)


def test_sg_level_zero_single_draw_is_point_gradient():
    s = BallSampler("l2", 1.0, 1)
    est = sg_estimator(LIN1, THETA1, _cfg(L=0), s, DATA1, np.random.default_rng(4))
    assert est.samples_drawn == 1 and est.inner_queries == 1
    # reproduce the single draw by hand
    base = int(np.random.default_rng(4).integers(2**63))
    g = np.random.default_rng([base, 0])
    i = g.integers(3)
    x = DATA1.X[i] + s.sample(g, 1)
    np.testing.assert_array_equal(est.vector, LIN1.grad_theta(THETA1, x, DATA1.y[i])[0])


@pytest.mark.parametrize("scheme", ["sg", "rtmlmc"])
def test_batch_equals_mean_of_single_draws(scheme):
    s = BallSampler("linf", 0.5, 1)
    cfg = _cfg(n_outer=4, scheme=scheme, L=3)
    est = (sg_estimator if scheme == "sg" else rt_mlmc_estimator)(LIN1, THETA1, cfg, s, DATA1, np.random.default_rng(5))
    base = int(np.random.default_rng(5).integers(2**63))
    singles = []
    for i in range(4):
        t, lv, _ = estimator_terms(LIN1, THETA1, cfg, s, DATA1, base, n_draws=i + 1)
        singles.append(t[i])
    np.testing.assert_allclose(est.vector, np.mean(singles, axis=0), rtol=1e-13, atol=1e-15)
    assert est.samples_drawn == sum(2**l for l in est.levels_used)


def test_scheme_guard():
    s = BallSampler("l2", 1.0, 1)
    with pytest.raises(ParameterError):
        sg_estimator(LIN1, THETA1, _cfg(scheme="rtmlmc"), s, DATA1, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        rt_mlmc_estimator(LIN1, THETA1, _cfg(scheme="sg"), s, DATA1, np.random.default_rng(0))


def test_config_validation():
    for kw in (dict(L=-1), dict(n_outer=0), dict(inner_eps=0.0), dict(eta=-1.0)):
        with pytest.raises(ParameterError):
            _cfg(**kw)


def test_determinism():
    s = BallSampler("l2", 1.0, 1)
    cfg = _cfg(n_outer=50, scheme="rtmlmc", L=4)
    a = rt_mlmc_estimator(LIN1, THETA1, cfg, s, DATA1, np.random.default_rng(11))
    b = rt_mlmc_estimator(LIN1, THETA1, cfg, s, DATA1, np.random.default_rng(11))
    assert a.vector.tobytes() == b.vector.tobytes() and a.levels_used == b.levels_used


def test_rt_level_zero_matches_sg_in_law():
    s = BallSampler("l2", 1.0, 1)
    n = 20_000
    a = sg_estimator(LIN1, THETA1, _cfg(L=0, n_outer=n), s, DATA1, np.random.default_rng(1))
    b = rt_mlmc_estimator(LIN1, THETA1, _cfg(L=0, n_outer=n, scheme="rtmlmc"), s, DATA1, np.random.default_rng(2))
    se = np.sqrt(a.stderr() ** 2 + b.stderr() ** 2)
    assert np.all(np.abs(a.vector - b.vector) <= 3 * se)
    assert set(b.levels_used) == {0}


def _grid_expected_g1(eta, rho, n=600):
    # E[g^1] by midpoint quadrature over both children (1-D, L2 ball = interval)
    u = -rho + (np.arange(n) + 0.5) * 2 * rho / n
    U1, U2 = np.meshgrid(u, u, indexing="ij")
    total = np.zeros(2)
    for x, y in zip(DATA1.X[:, 0], DATA1.y):
        X = np.stack([x + U1.ravel(), x + U2.ravel()], axis=1)
        f = np.stack([LIN1.loss(THETA1, X[:, k:k + 1], y) for k in range(2)], axis=1)
        G = np.stack([LIN1.grad_theta(THETA1, X[:, k:k + 1], y) for k in range(2)], axis=1)
        w = np.exp((f - f.max(axis=1, keepdims=True)) / eta)
        w /= w.sum(axis=1, keepdims=True)
        total += np.einsum("nk,nkp->np", w, G).mean(axis=0)
    return total / len(DATA1)


def test_sg_mean_matches_grid_oracle():
    s = BallSampler("l2", 1.0, 1)
    est = sg_estimator(LIN1, THETA1, _cfg(L=1, n_outer=100_000), s, DATA1, np.random.default_rng(6))
    expect = _grid_expected_g1(0.5, 1.0)
    assert np.all(np.abs(est.vector - expect) <= 3 * est.stderr())


def test_telescoping_sum():
    s = BallSampler("l2", 1.0, 1)
    cfg = _cfg(L=2)
    n = 100_000
    levels = [fixed_level_terms(LIN1, THETA1, l, cfg, s, DATA1, 100 + l, n) for l in range(3)]
    gL = fixed_level_terms(LIN1, THETA1, 2, cfg, s, DATA1, 200, n, antithetic=False)
    tele = sum(t.mean(axis=0) for t in levels)
    se = np.sqrt(sum(t.var(axis=0) for t in levels) / n + gL.var(axis=0) / n)
    assert np.all(np.abs(tele - gL.mean(axis=0)) <= 3 * se)


def test_level_frequencies_and_cost():
    s = BallSampler("l2", 1.0, 1)
    n = 100_000
    est = rt_mlmc_estimator(LIN1, THETA1, _cfg(L=5, n_outer=n, scheme="rtmlmc"), s, DATA1, np.random.default_rng(8))
    counts = np.bincount(est.levels_used, minlength=6)
    p = level_probabilities(5)
    assert np.all(np.abs(counts / n - p) <= 3 * np.sqrt(p * (1 - p) / n))
    assert est.samples_drawn / n == pytest.approx(6 / (2 - 2**-5), rel=0.05)


def test_cost_asymmetry_at_L10():
    s = BallSampler("l2", 1.0, 1)
    sg = sg_estimator(LIN1, THETA1, _cfg(L=10, n_outer=20), s, DATA1, np.random.default_rng(0))
    rt = rt_mlmc_estimator(LIN1, THETA1, _cfg(L=10, n_outer=2000, scheme="rtmlmc"), s, DATA1, np.random.default_rng(0))
    assert (sg.samples_drawn / 20) / (rt.samples_drawn / 2000) >= 100
