"""Deterministic mean-value iteration of the CSA-ES state.

The six tracked quantities are ``x, r, s1, s_odot, |s|^2, sigma``. Each
:func:`step` feeds one-generation progress measures into the expected-value
difference equations. Those measures come either from the closed-form
theory (:class:`ClosedForm`) or from Monte Carlo single generations
(:class:`Experimental`).
"""
from dataclasses import dataclass, replace
import math

from .cone import project_axis_coords
from .errors import StepError
from .es import one_generation_experiment
from .theory import TheoryState, progress_rates


@dataclass(frozen=True)
class MeanState:
    x_bar: float
    r_bar: float
    s1_bar: float
    s_odot_bar: float
    s_norm_sq_bar: float
    sigma_bar: float
    sigma_star_bar: float

    @classmethod
    def create(cls, x, r, sigma, n, s1=0.0, s_odot=0.0, s_norm_sq=0.0):
        if not r > 0:
            raise ValueError(f"r must be positive, got {r!r}")
        if not sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {sigma!r}")
        return cls(x, r, s1, s_odot, s_norm_sq, sigma, n * sigma / r)

    @classmethod
    def from_sigma_star(cls, x, r, sigma_star, n, s1=0.0, s_odot=0.0, s_norm_sq=0.0):
        return cls.create(x, r, sigma_star * r / n, n, s1, s_odot, s_norm_sq)


@dataclass(frozen=True)
class ClosedForm:
    """Progress measures from the closed-form theory."""


@dataclass(frozen=True)
class Experimental:
    """Progress measures from ``trials`` single generations per step.

    Step ``g`` of an iteration uses seed ``seed + g``.
    """

    trials: int
    seed: int = 0
    method: str = "auto"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def _measures(state, cone, params, mode, generation):
    """Return ``(phi_x*, phi_r*, phi_r2)`` for the current state."""
    n = cone.n
    if isinstance(mode, ClosedForm):
        ts = TheoryState(state.x_bar, state.r_bar, state.sigma_bar, state.sigma_star_bar)
        rates = progress_rates(ts, params)
        return rates.phi_x_star, rates.phi_r_star, rates.phi_r2
    if isinstance(mode, Experimental):
        m = one_generation_experiment(
            cone,
            state.x_bar,
            state.r_bar,
            state.sigma_bar,
            params.mu,
            params.lam,
            mode.trials,
            seed=mode.seed + generation,
            method=mode.method,
        )
        return n * m.phi_x / state.x_bar, n * m.phi_r / state.r_bar, m.phi_r2
    raise TypeError(f"unknown step mode {mode!r}")


def _check(name, value, generation):
    if not math.isfinite(value):
        raise StepError(f"{name} became {value!r}", component=name, generation=generation)
    return value


def step(state, cone, params, csa, mode=ClosedForm(), generation=0):
    """Advance the mean state by one generation.

    The squared path length uses the old ``s1`` and ``s_odot``; ``sigma``
    uses the new squared path length. An infeasible result is moved to the
    nearest point of the boundary line in the ``(x, r)`` plane.
    """
    n, mu = cone.n, params.mu
    c, d = csa
    x, r, ss = state.x_bar, state.r_bar, state.sigma_star_bar
    k = math.sqrt(mu * c * (2.0 - c))

    if ss == 0:
        phi_x, phi_r, x_term, r2_term = 0.0, 0.0, 0.0, 0.0
    else:
        phi_x, phi_r, phi_r2 = _measures(state, cone, params, mode, generation)
        # -N phi_x / (sigma* r) with phi_x = phi_x* x / N
        x_term = -phi_x * x / (ss * r)
        r2_term = -n * phi_r2 / (2.0 * ss * r * r)

    x_new = _check("x", x * (1.0 - phi_x / n), generation)
    r_new = _check("r", r * (1.0 - phi_r / n), generation)
    s1_new = _check("s1", (1.0 - c) * state.s1_bar + k * x_term, generation)
    s_odot_new = _check(
        "s_odot",
        (1.0 - c) * (1.0 + ss / n * (r2_term - ss / (2.0 * mu))) * state.s_odot_bar
        + k * (r2_term + ss / (2.0 * mu)),
        generation,
    )
    s_sq_new = _check(
        "s_norm_sq",
        (1.0 - c) ** 2 * state.s_norm_sq_bar
        + 2.0 * (1.0 - c) * k * (state.s1_bar * x_term + state.s_odot_bar * (r2_term - ss / (2.0 * mu)))
        + c * (2.0 - c) * n,
        generation,
    )
    try:
        sigma_new = state.sigma_bar * math.exp((s_sq_new - n) / (2.0 * d * n))
    except OverflowError:
        sigma_new = math.inf
    sigma_new = _check("sigma", sigma_new, generation)

    if r_new > x_new / cone.sqrt_xi or x_new < 0:
        x_new, r_new = project_axis_coords(cone, x_new, r_new)
    if not r_new > 0:
        raise StepError("r collapsed to zero", component="r", generation=generation)
    return MeanState(
        x_bar=x_new,
        r_bar=r_new,
        s1_bar=s1_new,
        s_odot_bar=s_odot_new,
        s_norm_sq_bar=s_sq_new,
        sigma_bar=sigma_new,
        sigma_star_bar=_check("sigma_star", n * sigma_new / r_new, generation),
    )


def iterate(initial, generations, cone, params, csa, mode=ClosedForm()):
    """Trajectory of ``generations`` steps, starting with ``initial``.

    A :class:`StepError` carries the index of the failing generation.
    """
    if generations < 0:
        raise ValueError("generations must be non-negative")
    out = [initial]
    state = initial
    for g in range(generations):
        state = step(state, cone, params, csa, mode, generation=g)
        out.append(state)
    return out


def rescale(state, factor):
    """Scale ``x``, ``r`` and ``sigma`` together. ``sigma*`` and every path
    quantity are unchanged, so this only guards long runs against underflow."""
    return replace(
        state,
        x_bar=state.x_bar * factor,
        r_bar=state.r_bar * factor,
        sigma_bar=state.sigma_bar * factor,
    )
