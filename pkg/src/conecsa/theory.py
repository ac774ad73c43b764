"""Closed-form one-generation theory for the (mu/mu_I, lambda)-CSA-ES.

The approximations are evaluated exactly as written, with no algebraic
re-simplification, so that any gap against simulation belongs to the
approximations and not to this code. All progress rates are positive when
the strategy moves toward the cone apex.

Symbols: ``N`` dimension, ``xi`` cone parameter, ``sigma`` mutation strength,
``sigma_star = N * sigma / r`` its normalized form, ``c_mu_lambda`` the
progress coefficient.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, special

from .cone import ConeSpec


@lru_cache(maxsize=None)
def progress_coefficient(mu, lam):
    """Progress coefficient ``c_{mu/mu,lambda}`` by adaptive quadrature.

    ``(lam - mu) / (2 pi) * binom(lam, mu) *
    int exp(-t^2) Phi(t)^(lam-mu-1) (1 - Phi(t))^(mu-1) dt``, integrated over
    ``[-10, 10]`` in log space. It equals the expected mean of the ``mu``
    largest of ``lam`` standard normal samples.
    """
    mu, lam = int(mu), int(lam)
    if mu < 1 or lam < 1:
        raise ValueError("mu and lambda must be positive integers")
    if mu > lam:
        raise ValueError(f"mu ({mu}) must not exceed lambda ({lam})")
    if mu == lam:
        return 0.0
    log_pref = (
        math.log(lam - mu)
        - math.log(2.0 * math.pi)
        + special.gammaln(lam + 1)
        - special.gammaln(mu + 1)
        - special.gammaln(lam - mu + 1)
    )

    def integrand(t):
        log_val = -t * t + log_pref
        if lam - mu - 1:
            log_val += (lam - mu - 1) * special.log_ndtr(t)
        if mu - 1:
            log_val += (mu - 1) * special.log_ndtr(-t)
        return math.exp(log_val)

    value, _ = integrate.quad(integrand, -10.0, 10.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return value


@dataclass(frozen=True)
class TheoryParams:
    """Problem and strategy constants shared by every theory evaluation."""

    n: int
    xi: float
    mu: int
    lam: int
    c_mu_lambda: float = field(init=False)

    def __post_init__(self):
        ConeSpec(self.n, self.xi)
        if not 1 <= self.mu <= self.lam:
            raise ValueError(f"need 1 <= mu <= lambda, got mu={self.mu}, lambda={self.lam}")
        object.__setattr__(self, "c_mu_lambda", progress_coefficient(self.mu, self.lam))

    @classmethod
    def for_cone(cls, cone, mu, lam):
        return cls(n=cone.n, xi=cone.xi, mu=mu, lam=lam)

    @property
    def cone(self):
        return ConeSpec(self.n, self.xi)


@dataclass(frozen=True)
class TheoryState:
    """Parental position and mutation strength as seen by the theory."""

    x: float
    r: float
    sigma: float
    sigma_star: float

    @classmethod
    def from_sigma(cls, x, r, sigma, n):
        if not r > 0:
            raise ValueError(f"r must be positive, got {r!r}")
        return cls(x=x, r=r, sigma=sigma, sigma_star=n * sigma / r)

    @classmethod
    def from_sigma_star(cls, x, r, sigma_star, n):
        if not r > 0:
            raise ValueError(f"r must be positive, got {r!r}")
        return cls(x=x, r=r, sigma=sigma_star * r / n, sigma_star=sigma_star)


def r_dist_params(r, sigma_star, n):
    """Mean and standard deviation of the normal approximation to offspring ``r``."""
    g = sigma_star**2 / n * (1.0 - 1.0 / n)
    r_bar = r * math.sqrt(1.0 + g)
    sigma_r = r * sigma_star / n * math.sqrt((1.0 + g / 2.0) / (1.0 + g))
    return r_bar, sigma_r


def p_feas(state, params):
    """Approximate probability that one offspring is feasible."""
    r_bar, _ = r_dist_params(state.r, state.sigma_star, params.n)
    margin = state.x / math.sqrt(params.xi) - r_bar
    if state.sigma == 0:
        return 1.0 if margin > 0 else (0.5 if margin == 0 else 0.0)
    return float(special.ndtr(margin / state.sigma))


def _radicand(sigma_star, mu, n):
    # (1 + s^2/(mu N)) / (1 + s^2/N), recurring throughout
    return (1.0 + sigma_star**2 / (mu * n)) / (1.0 + sigma_star**2 / n)


def phi_x_star(state, params, p=None):
    """Normalized x progress rate and its infeasible-case part.

    Returns ``(phi_x_star, phi_x_star_infeas)``. ``p`` overrides the
    feasibility probability, which is otherwise taken from :func:`p_feas`.
    """
    n, xi, c = params.n, params.xi, params.c_mu_lambda
    x, r, s = state.x, state.r, state.sigma_star
    sqrt_xi = math.sqrt(xi)
    if p is None:
        p = p_feas(state, params)
    feas = r / x * s * c
    boundary = sqrt_xi * r / x
    infeas = n / (1.0 + xi) * (1.0 - boundary * math.sqrt(1.0 + s * s / n)) + sqrt_xi / (
        1.0 + xi
    ) * boundary * s * c * math.sqrt(
        1.0 + 1.0 / xi * (1.0 + s * s / (2.0 * n)) / (1.0 + s * s / n)
    )
    return p * feas + (1.0 - p) * infeas, infeas


def phi_r_star(state, params, phi_x_star_infeas, p=None):
    """Normalized r progress rate."""
    n, xi, mu = params.n, params.xi, params.mu
    x, r, s = state.x, state.r, state.sigma_star
    if p is None:
        p = p_feas(state, params)
    feas = n * (1.0 - math.sqrt(1.0 + s * s / (mu * n)))
    infeas = n * (
        1.0
        - x / (math.sqrt(xi) * r) * (1.0 - phi_x_star_infeas / n) * math.sqrt(_radicand(s, mu, n))
    )
    return p * feas + (1.0 - p) * infeas


def expected_q_infeas(state, params):
    """Expected centroid x after projection when offspring are infeasible."""
    xi, c = params.xi, params.c_mu_lambda
    r_bar, sigma_r = r_dist_params(state.r, state.sigma_star, params.n)
    k = xi / (1.0 + xi)
    return k * (state.x + r_bar / math.sqrt(xi)) - k * math.sqrt(
        state.sigma**2 + sigma_r**2 / xi
    ) * c


def phi_r2(state, params, p=None):
    """Progress rate of the squared axis distance, ``E[r^2 - <q_r>^2]``."""
    n, xi, mu = params.n, params.xi, params.mu
    r, sigma, s = state.r, state.sigma, state.sigma_star
    if p is None:
        p = p_feas(state, params)
    feas = r * r + sigma * sigma / mu * (n - 1)
    infeas = expected_q_infeas(state, params) ** 2 / xi * _radicand(s, mu, n)
    return r * r - (p * feas + (1.0 - p) * infeas)


def expected_z_odot(phi_r2_value, sigma_star, r, n, mu):
    """Expected centroid mutation component along the parental r direction."""
    if sigma_star == 0:
        raise ZeroDivisionError("expected_z_odot is undefined for sigma_star == 0")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r!r}")
    return -n * phi_r2_value / (2.0 * sigma_star * r * r) - sigma_star / (2.0 * mu)


@dataclass(frozen=True)
class ProgressRates:
    """All local measures the mean-value system consumes, for one state."""

    p_feas: float
    phi_x_star: float
    phi_x_star_infeas: float
    phi_r_star: float
    phi_r2: float
    z_odot: float

    def phi_x(self, x, n):
        return self.phi_x_star * x / n


def progress_rates(state, params):
    """Evaluate every closed-form local measure at ``state``."""
    p = p_feas(state, params)
    px, px_inf = phi_x_star(state, params, p=p)
    pr = phi_r_star(state, params, px_inf, p=p)
    pr2 = phi_r2(state, params, p=p)
    z = expected_z_odot(pr2, state.sigma_star, state.r, params.n, params.mu)
    return ProgressRates(
        p_feas=p, phi_x_star=px, phi_x_star_infeas=px_inf, phi_r_star=pr, phi_r2=pr2, z_odot=z
    )


def progress_coefficient_mc(mu, lam, samples, seed=0, chunk=1_000_000):
    """Monte Carlo estimate of ``c_{mu/mu,lambda}`` with its standard error.

    Draws ``samples`` groups of ``lam`` standard normals and averages the
    mean of the ``mu`` largest. Kept independent of the quadrature path.
    """
    return progress_coefficients_mc(lam, [mu], samples, seed=seed, chunk=chunk)[mu]


def progress_coefficients_mc(lam, mus, samples, seed=0, chunk=1_000_000):
    """Monte Carlo ``c_{mu/mu,lam}`` for several ``mu`` from one shared sample.

    Returns ``{mu: (estimate, standard_error)}``.
    """
    rng = np.random.default_rng(seed)
    mus = sorted(set(int(m) for m in mus))
    if not mus or mus[0] < 1 or mus[-1] > lam:
        raise ValueError("every mu must satisfy 1 <= mu <= lambda")
    total = {m: 0.0 for m in mus}
    total_sq = {m: 0.0 for m in mus}
    done = 0
    while done < samples:
        m_rows = min(chunk, samples - done)
        draws = rng.standard_normal((m_rows, lam))
        draws.sort(axis=1)
        tops = np.cumsum(draws[:, ::-1], axis=1)
        for m in mus:
            v = tops[:, m - 1] / m
            total[m] += v.sum()
            total_sq[m] += np.dot(v, v)
        done += m_rows
    out = {}
    for m in mus:
        mean = total[m] / samples
        var = max(total_sq[m] / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
        out[m] = (mean, math.sqrt(var / samples))
    return out
