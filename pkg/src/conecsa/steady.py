"""Steady state of the mean-value system.

The numeric route solves the stationarity condition of the normalized
mutation strength by bisection. The closed forms in :class:`SsRegime` are
asymptotic approximations for ``c ~ 1/sqrt(N)`` or ``c ~ 1/N``.

``csa`` arguments are ``(c, d)`` pairs throughout.
"""
from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from .errors import NoRealRootError, NoRootError, SingularityError

BISECT_RTOL = 1e-8
SIGMA_LO = 1e-3


class SsRegime(Enum):
    Numeric = "numeric"
    SqrtN = "sqrtn"
    SqrtN_Simplified = "sqrtn-simplified"
    SqrtN_LargeXi = "sqrtn-large-xi"
    OneOverN = "oneovern"
    OneOverN_LargeXi = "oneovern-large-xi"
    OneOverN_NeglectInverse = "oneovern-neglect-inverse"
    OneOverN_TaylorQuadratic = "oneovern-taylor-quadratic"


@dataclass(frozen=True)
class SteadyState:
    sigma_ss_star: float
    phi_ss_star: float
    ratio_ss: float
    s1_ss: float
    s_odot_ss: float
    s_norm_sq_ss: float
    regime: SsRegime


def _radicand(sigma, mu, n):
    return (1.0 + sigma * sigma / (mu * n)) / (1.0 + sigma * sigma / n)


def ss_ratio(sigma_ss, mu, n):
    """Steady-state ``x / (sqrt(xi) r)``; at least 1, exactly 1 for ``mu = 1``."""
    if sigma_ss < 0:
        raise ValueError("sigma_ss must be non-negative")
    return 1.0 / math.sqrt(_radicand(sigma_ss, mu, n))


def phi_star_ss(sigma_ss, params, exact=False):
    """Steady-state normalized progress ``phi_x* = phi_r*``.

    The default drops the finite-``N`` factors (valid for ``N >> sigma^2``).
    ``exact=True`` keeps them.
    """
    if sigma_ss < 0:
        raise ValueError("sigma_ss must be non-negative")
    n, xi, mu, c = params.n, params.xi, params.mu, params.c_mu_lambda
    s = sigma_ss
    if not exact:
        return -s * s / ((1.0 + xi) * 2.0 * mu) + s * c / math.sqrt(1.0 + xi)
    return n / (1.0 + xi) * (1.0 - math.sqrt(1.0 + s * s / (mu * n))) + s * c / math.sqrt(
        1.0 + xi
    ) * math.sqrt(_radicand(s, mu, n))


def _x_term(sigma, phi, params):
    # stationary -N phi_x / (sigma* r)
    return -math.sqrt(params.xi / _radicand(sigma, params.mu, params.n)) * phi / sigma


def _r2_term(sigma, phi, n):
    # stationary -N phi_r2 / (2 sigma* r^2)
    return -n / (2.0 * sigma) * (1.0 - (1.0 - phi / n) ** 2)


def path_ss(sigma_ss, params, csa, exact=False):
    """Stationary ``(s1, s_odot, |s|^2)`` at ``sigma_ss``."""
    if not sigma_ss > 0:
        raise ValueError("sigma_ss must be positive")
    c, _ = csa
    n, mu, s = params.n, params.mu, sigma_ss
    phi = phi_star_ss(s, params, exact=exact)
    k = math.sqrt(mu * c * (2.0 - c))
    x_term = _x_term(s, phi, params)
    r_term = _r2_term(s, phi, n)
    s1 = k / c * x_term
    denom = c - (1.0 - c) * s / n * (r_term - s / (2.0 * mu))
    if denom == 0 or not math.isfinite(denom):
        raise SingularityError(f"s_odot denominator vanishes at sigma={s}")
    s_odot = k * (r_term + s / (2.0 * mu)) / denom
    s_norm_sq = n - 2.0 * (1.0 - c) * k / (c * c - 2.0 * c) * (
        s1 * x_term + s_odot * (r_term - s / (2.0 * mu))
    )
    return s1, s_odot, s_norm_sq


def sigma_ss_residual(sigma, params, csa, exact=False):
    """Left minus right side of the stationarity condition for ``sigma*``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    _, d = csa
    mu = params.mu
    phi = phi_star_ss(sigma, params, exact=exact)
    r_term = _r2_term(sigma, phi, params.n)
    _, _, s_norm_sq = path_ss(sigma, params, csa, exact=exact)
    return sigma * (r_term - sigma / (2.0 * mu)) + sigma * sigma / (2.0 * mu) - (
        s_norm_sq - params.n
    ) / (2.0 * d)


def default_bracket(params):
    return SIGMA_LO, 10.0 * params.mu * math.sqrt(1.0 + params.xi) * params.c_mu_lambda


def _scan(f, lo, hi, points=41):
    grid = np.geomspace(lo, hi, points)
    out = []
    for s in grid:
        try:
            out.append((float(s), f(float(s))))
        except ArithmeticError:
            out.append((float(s), math.nan))
    return out


def solve_sigma_ss_numeric(params, csa, bracket=None, exact=False):
    """Root of :func:`sigma_ss_residual` by bisection, to ``1e-8`` relative.

    Returns a fully populated :class:`SteadyState`. When the residual has the
    same sign at both bracket ends the bracket is scanned for a sign change;
    if none exists :class:`NoRootError` carries the scan.
    """
    c, d = csa
    if not 0 < c < 1 or not d > 0:
        raise ValueError("need 0 < c < 1 and d > 0")
    if params.mu >= params.lam:
        raise ValueError("need mu < lambda")
    lo, hi = default_bracket(params) if bracket is None else bracket
    if not 0 < lo < hi:
        raise ValueError(f"invalid bracket ({lo}, {hi})")

    def f(s):
        return sigma_ss_residual(s, params, csa, exact=exact)

    f_lo, f_hi = f(lo), f(hi)
    if f_lo * f_hi > 0:
        scan = _scan(f, lo, hi)
        for (a, fa), (b, fb) in zip(scan, scan[1:]):
            if fa * fb <= 0:
                lo, hi, f_lo = a, b, fa
                break
        else:
            raise NoRootError(
                f"residual has no sign change on [{lo:g}, {hi:g}]", scan=scan
            )
    while hi - lo > BISECT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0:
            lo = hi = mid
            break
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return steady_state_at(0.5 * (lo + hi), params, csa, SsRegime.Numeric, exact=exact)


def steady_state_at(sigma, params, csa, regime, exact=False):
    """Fill every :class:`SteadyState` field from a given ``sigma*``."""
    s1, s_odot, s_norm_sq = path_ss(sigma, params, csa, exact=exact)
    return SteadyState(
        sigma_ss_star=sigma,
        phi_ss_star=phi_star_ss(sigma, params, exact=exact),
        ratio_ss=ss_ratio(sigma, params.mu, params.n),
        s1_ss=s1,
        s_odot_ss=s_odot,
        s_norm_sq_ss=s_norm_sq,
        regime=regime,
    )


def _one_over_n_coefficients(params):
    """Coefficients of ``A s^2 + B s + C + E / s = 0`` (``cD = 1``, ``cN ~ 1``)."""
    xi, mu, c = params.xi, params.mu, params.c_mu_lambda
    a = (2.0 + xi) / ((1.0 + xi) ** 2 * 4.0 * mu)
    b = -c / (math.sqrt(1.0 + xi) * (1.0 + xi))
    c0 = (xi - 2.0 * mu * xi * c * c) / (2.0 * (1.0 + xi))
    e = mu * c / math.sqrt(1.0 + xi)
    return a, b, c0, e


def _positive_quadratic_root(a, b, c0):
    disc = b * b - 4.0 * a * c0
    if disc < 0:
        raise NoRealRootError(f"negative discriminant {disc:g}")
    return (-b + math.sqrt(disc)) / (2.0 * a)


def sigma_ss_closed(params, csa, regime):
    """Closed-form steady-state ``sigma*`` for one asymptotic regime."""
    xi, mu, cm = params.xi, params.mu, params.c_mu_lambda
    c, d = csa
    if regime is SsRegime.Numeric:
        return solve_sigma_ss_numeric(params, csa).sigma_ss_star
    if regime is SsRegime.SqrtN:
        root = math.sqrt(c * c * (d * d + xi + 1.0) - 2.0 * c * (xi + 1.0) + xi + 1.0)
        return (
            2.0 * mu * math.sqrt(xi + 1.0) * cm * ((c * d + c - 1.0) + root)
            / (2.0 * c * d - c * xi + xi)
        )
    if regime is SsRegime.SqrtN_Simplified:
        return 2.0 * mu * math.sqrt(xi + 1.0) * cm / math.sqrt(xi + 2.0)
    if regime is SsRegime.SqrtN_LargeXi:
        return 2.0 * mu * cm
    if regime is SsRegime.OneOverN:
        rad = 2.0 * mu * xi * (2.0 * mu * cm * cm - 1.0) * (1.0 + xi) / (2.0 + xi)
        if rad < 0:
            raise NoRealRootError(f"2 mu c^2 < 1 (radicand {rad:g})")
        return math.sqrt(rad)
    if regime is SsRegime.OneOverN_LargeXi:
        rad = 2.0 * mu * (2.0 * mu * cm * cm - 1.0)
        if rad < 0:
            raise NoRealRootError(f"2 mu c^2 < 1 (radicand {rad:g})")
        return math.sqrt(xi) * math.sqrt(rad)
    if regime is SsRegime.OneOverN_NeglectInverse:
        a, b, c0, _ = _one_over_n_coefficients(params)
        return _positive_quadratic_root(a, b, c0)
    if regime is SsRegime.OneOverN_TaylorQuadratic:
        return _taylor_quadratic_root(params, sigma_ss_closed(params, csa, SsRegime.OneOverN))
    raise ValueError(f"unknown regime {regime!r}")


def _taylor_quadratic_root(params, a0):
    a, b, c0, e = _one_over_n_coefficients(params)
    f = a * a0 * a0 + b * a0 + c0 + e / a0
    f1 = 2.0 * a * a0 + b - e / (a0 * a0)
    f2 = 2.0 * a + 2.0 * e / a0**3
    # f + f1 t + f2/2 t^2 = 0 with t = sigma - a0
    qa, qb, qc = 0.5 * f2, f1, f
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        raise NoRealRootError(f"negative discriminant {disc:g}")
    roots = [a0 + (-qb + sgn * math.sqrt(disc)) / (2.0 * qa) for sgn in (1.0, -1.0)]
    roots = [s for s in roots if s > 0]
    if not roots:
        raise NoRealRootError("no positive root of the expanded quadratic")
    return min(roots, key=lambda s: abs(s - a0))


def phi_ss_from_sigma(sigma_ss, params, exact=False):
    """Steady-state progress implied by ``sigma_ss``."""
    return phi_star_ss(sigma_ss, params, exact=exact)


def phi_ss_sqrt_n_limit(params):
    """``2 mu c^2 / sqrt(xi+2) - 2 mu c^2 / (xi+2)``: progress at the simplified
    ``c ~ 1/sqrt(N)`` steady state."""
    k = 2.0 * params.mu * params.c_mu_lambda**2
    return k / math.sqrt(params.xi + 2.0) - k / (params.xi + 2.0)


def steady_state(params, csa, regime=SsRegime.Numeric, exact=False):
    """:class:`SteadyState` for ``regime``; path quantities use the full
    stationary expressions at the regime's ``sigma*``."""
    if regime is SsRegime.Numeric:
        return solve_sigma_ss_numeric(params, csa, exact=exact)
    return steady_state_at(sigma_ss_closed(params, csa, regime), params, csa, regime, exact=exact)
