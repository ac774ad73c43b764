import math

import numpy as np
import pytest

from conecsa.cone import ConeSpec
from conecsa.es import one_generation_experiment
from conecsa.theory import (
    TheoryParams,
    TheoryState,
    expected_z_odot,
    p_feas,
    phi_r2,
    phi_r_star,
    phi_x_star,
    progress_coefficient,
    progress_coefficient_mc,
    progress_coefficients_mc,
    progress_rates,
    r_dist_params,
)


def test_coefficient_closed_forms():
    # E[max of two standard normals] = 1/sqrt(pi)
    assert progress_coefficient(1, 2) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-10)
    # recombining everything has no selection pressure
    for lam in (1, 5, 10):
        assert progress_coefficient(lam, lam) == 0.0


def test_coefficient_argument_errors():
    with pytest.raises(ValueError):
        progress_coefficient(0, 3)
    with pytest.raises(ValueError):
        progress_coefficient(4, 3)


@pytest.mark.parametrize("lam", range(2, 11))
def test_coefficient_matches_monte_carlo(lam):
    mc = progress_coefficients_mc(lam, range(1, lam), 400_000, seed=lam)
    for mu, (est, se) in mc.items():
        assert abs(progress_coefficient(mu, lam) - est) <= 4 * se, (mu, lam)


def test_coefficient_mc_single():
    est, se = progress_coefficient_mc(3, 10, 200_000, seed=1)
    assert se > 0
    assert abs(est - progress_coefficient(3, 10)) < 4 * se


def test_theory_params_caches_coefficient():
    p = TheoryParams(400, 10.0, 3, 10)
    assert p.c_mu_lambda == progress_coefficient(3, 10)
    assert p.cone == ConeSpec(400, 10.0)
    with pytest.raises(ValueError):
        TheoryParams(400, 10.0, 11, 10)


def test_state_constructors():
    a = TheoryState.from_sigma(2.0, 0.5, 0.01, 100)
    assert a.sigma_star == pytest.approx(2.0)
    b = TheoryState.from_sigma_star(2.0, 0.5, 2.0, 100)
    assert b.sigma == pytest.approx(0.01)
    with pytest.raises(ValueError):
        TheoryState.from_sigma(1.0, 0.0, 0.1, 10)


def test_offspring_r_distribution_against_sampling():
    n, r, sigma_star = 400, 1.0, 6.0
    sigma = sigma_star * r / n
    rng = np.random.default_rng(3)
    z = rng.standard_normal((20_000, n - 1))
    z[:, 0] += r / sigma
    rs = sigma * np.linalg.norm(z, axis=1)
    r_bar, sigma_r = r_dist_params(r, sigma_star, n)
    assert r_bar == pytest.approx(rs.mean(), rel=1e-3)
    assert sigma_r == pytest.approx(rs.std(), rel=0.03)


def test_p_feas_is_half_at_the_median_point():
    n, xi, r, s = 400, 10.0, 1.0, 4.0
    params = TheoryParams(n, xi, 3, 10)
    r_bar, _ = r_dist_params(r, s, n)
    state = TheoryState.from_sigma_star(math.sqrt(xi) * r_bar, r, s, n)
    assert p_feas(state, params) == pytest.approx(0.5, abs=1e-12)


def test_deep_interior_uses_feasible_branch():
    n, xi = 400, 10.0
    params = TheoryParams(n, xi, 3, 10)
    x, r, s = 100.0, 0.1, 2.0
    state = TheoryState.from_sigma_star(x, r, s, n)
    assert p_feas(state, params) == pytest.approx(1.0)
    px, _ = phi_x_star(state, params)
    assert px == pytest.approx(r / x * s * params.c_mu_lambda, rel=1e-9)
    _, inf = phi_x_star(state, params)
    pr = phi_r_star(state, params, inf)
    assert pr == pytest.approx(n * (1 - math.sqrt(1 + s * s / (3 * n))), rel=1e-9)
    assert phi_r2(state, params) == pytest.approx(-(state.sigma**2) / 3 * (n - 1), rel=1e-9)


def test_rates_vanish_with_sigma():
    params = TheoryParams(400, 10.0, 3, 10)
    state = TheoryState.from_sigma_star(10.0, 1.0, 1e-9, 400)
    rates = progress_rates(state, params)
    assert abs(rates.phi_x_star) < 1e-8
    assert abs(rates.phi_r_star) < 1e-8


def test_expected_z_odot_errors():
    with pytest.raises(ZeroDivisionError):
        expected_z_odot(0.1, 0.0, 1.0, 10, 3)
    with pytest.raises(ValueError):
        expected_z_odot(0.1, 1.0, 0.0, 10, 3)


def test_expected_z_odot_inverts_phi_r2_relation():
    n, mu, r, s = 400, 3, 2.0, 5.0
    sigma = s * r / n
    z = 0.7
    phi = -2 * sigma * r * z - sigma * sigma * n / mu
    assert expected_z_odot(phi, s, r, n, mu) == pytest.approx(z, rel=1e-12)


def test_rates_agree_with_monte_carlo_on_boundary():
    n, xi, mu, lam = 400, 10.0, 3, 10
    cone = ConeSpec(n, xi)
    params = TheoryParams(n, xi, mu, lam)
    x = 1.0
    r = x / math.sqrt(xi)
    state = TheoryState.from_sigma_star(x, r, 6.0, n)
    rates = progress_rates(state, params)
    m = one_generation_experiment(cone, x, r, state.sigma, mu, lam, 100_000, seed=11)
    assert rates.phi_x_star == pytest.approx(m.phi_x_star, rel=0.10)
    assert rates.phi_r_star == pytest.approx(m.phi_r_star, rel=0.10)
    assert rates.phi_r2 == pytest.approx(m.phi_r2, rel=0.10)
    assert rates.z_odot == pytest.approx(m.z_odot_hat, rel=0.10)
