import math

import numpy as np
import pytest

from phidro.divergence import (
    DivergenceKind,
    eval_conjugate,
    eval_inv_phi_prime,
    make_divergence,
    parse_divergence,
)
from phidro.errors import ParameterError, UnsupportedDivergenceError

ALL = [
    make_divergence("kl"),
    make_divergence("quadratic"),
    make_divergence("indicator", 1.0),
    make_divergence("indicator", 0.3),
    make_divergence("absolute"),
    make_divergence("hinge"),
]
IDS = [d.name for d in ALL]


@pytest.mark.parametrize("div", ALL, ids=IDS)
def test_phi_one_is_zero_and_negative_is_inf(div):
    assert div.phi(1.0) == 0.0
    assert np.all(np.isinf(div.phi(np.array([-0.5, -1e-12, -3.0]))))


@pytest.mark.parametrize("div", ALL, ids=IDS)
def test_midpoint_convexity(div):
    grid = np.linspace(0.0, 6.0, 121)
    a, b = np.meshgrid(grid, grid)
    lhs = div.phi((a + b) / 2)
    rhs = (div.phi(a) + div.phi(b)) / 2
    finite = np.isfinite(rhs)
    assert np.all(lhs[finite] <= rhs[finite] + 1e-12)


def _biconjugate(div, x):
    # dense grid plus the analytic maximiser phi'(x)
    s = np.concatenate([np.linspace(-40.0, 10.0, 200001), [1e9], np.atleast_1d(div.phi_prime(x))])
    s = s[np.isfinite(s)]
    vals = s * x - div.conjugate(s)
    return np.max(vals)


@pytest.mark.parametrize("div", ALL, ids=IDS)
def test_conjugate_duality_on_log_grid(div):
    xs = np.logspace(-6, 3, 40)
    for x in xs:
        phi = div.phi(x)
        bic = _biconjugate(div, x)
        if math.isinf(phi):
            assert bic > 1e3  # grows without bound as the s-grid widens
        else:
            assert abs(phi - bic) <= 1e-8 * max(1.0, abs(phi))


@pytest.mark.parametrize("kind", ["kl", "quadratic"])
def test_inv_phi_prime_inverts_derivative(kind):
    div = make_divergence(kind)
    xs = np.logspace(-4, 3, 50)
    back = div.inv_phi_prime(div.phi_prime(xs))
    np.testing.assert_allclose(back, xs, rtol=1e-10, atol=1e-10)


def test_quadratic_strong_convexity_inequality():
    div = make_divergence("quadratic")
    g = np.linspace(0, 5, 51)
    x, y = np.meshgrid(g, g)
    gap = div.phi(x) - div.phi(y) - div.phi_prime(y) * (x - y)
    assert np.all(gap >= 0.5 * div.kappa * (x - y) ** 2 - 1e-12)


def test_indicator_alpha_one_vanishes_on_unit_interval():
    div = make_divergence("indicator", 1.0)
    assert np.all(div.phi(np.linspace(0, 1, 101)) == 0.0)
    for m in (1, 3, 17):
        assert np.all(div.phi(m * np.full(m, 1 / m)) == 0.0)


# -- worked examples ------------------------------------------------------------------


def test_make_divergence_examples():
    assert make_divergence("kl").phi(1.0) == 0.0
    assert make_divergence("quadratic").phi(3.0) == pytest.approx(4.0)
    assert make_divergence("kl").phi(-0.5) == math.inf


def test_conjugate_examples():
    assert eval_conjugate(make_divergence("kl"), 0.0) == 0.0
    assert eval_conjugate(make_divergence("quadratic"), 2.0) == pytest.approx(2.5)
    assert eval_conjugate(make_divergence("absolute"), 2.0) == math.inf


def test_hinge_conjugate_piecewise():
    h = make_divergence("hinge")
    np.testing.assert_array_equal(h.conjugate([-3.0, 0.0, 0.4, 1.0]), [0.0, 0.0, 0.4, 1.0])
    assert h.conjugate(1.0001) == math.inf


def test_inv_phi_prime_examples():
    assert eval_inv_phi_prime(make_divergence("kl"), 0.0) == 1.0
    assert eval_inv_phi_prime(make_divergence("quadratic"), 0.7) == pytest.approx(0.7)
    assert eval_inv_phi_prime(make_divergence("quadratic"), -1.0) == 0.0


@pytest.mark.parametrize("kind", ["absolute", "hinge"])
def test_inv_phi_prime_unsupported(kind):
    with pytest.raises(UnsupportedDivergenceError):
        eval_inv_phi_prime(make_divergence(kind), 0.0)
    with pytest.raises(UnsupportedDivergenceError):
        make_divergence("indicator", 0.5).inv_phi_prime(0.0)


def test_constants():
    kl = make_divergence("kl")
    q = make_divergence("quadratic")
    assert kl.kappa == 0.0 and not kl.globally_strongly_convex
    assert kl.effective_kappa() == pytest.approx(1e-6)
    assert kl.K == -math.inf and kl.phi_second_at_one == 1.0
    assert q.kappa == 1.0 and q.K == 0.0 and q.phi_second_at_one == 1.0
    for name in ("absolute", "hinge"):
        assert make_divergence(name).kappa == 0.0
    assert make_divergence("indicator", 0.5).kappa == 0.0


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5, float("nan")])
def test_invalid_alpha(alpha):
    with pytest.raises(ParameterError):
        make_divergence("indicator", alpha)


def test_parse_divergence():
    assert parse_divergence("kl").kind is DivergenceKind.KL
    assert parse_divergence("indicator:0.25").alpha == 0.25
    assert parse_divergence("indicator:alpha=0.5").alpha == 0.5
    assert parse_divergence("HINGE").kind is DivergenceKind.HINGE
    with pytest.raises(ParameterError):
        parse_divergence("chi2")
    with pytest.raises(ParameterError):
        parse_divergence("indicator:abc")
