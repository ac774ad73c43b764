"""Experiment-versus-theory comparison of steady-state quantities."""
from dataclasses import dataclass, field
import math

import numpy as np

from .es import TAIL_COLUMNS, tail_statistics
from .meanvalue import ClosedForm, MeanState, iterate

QUANTITIES = TAIL_COLUMNS

DEFAULT_TOLERANCES = {"sigma_star": 0.20, "sigma_star:experimental": 0.10}


def relative_error(value, reference):
    if reference == 0 or not (math.isfinite(value) and math.isfinite(reference)):
        return math.nan
    return abs(value - reference) / abs(reference)


@dataclass(frozen=True)
class ComparisonRow:
    quantity: str
    empirical: float
    empirical_sd: float
    closed_form: float
    experimental: float
    steady_state: float
    tolerance: float | None = None
    tolerance_experimental: float | None = None

    @property
    def rel_err_closed(self):
        return relative_error(self.closed_form, self.empirical)

    @property
    def rel_err_experimental(self):
        return relative_error(self.experimental, self.empirical)

    @property
    def passed(self):
        """None when no tolerance applies, otherwise the verdict."""
        checks = []
        if self.tolerance is not None:
            checks.append(self.rel_err_closed <= self.tolerance)
        if self.tolerance_experimental is not None and math.isfinite(self.experimental):
            checks.append(self.rel_err_experimental <= self.tolerance_experimental)
        return all(checks) if checks else None


@dataclass
class ComparisonReport:
    """Rows for one ``(N, xi)`` setting; ``ok`` is True iff no row fails."""

    n: int
    xi: float
    rows: list = field(default_factory=list)

    @property
    def ok(self):
        return all(row.passed is not False for row in self.rows)

    def row(self, quantity):
        for r in self.rows:
            if r.quantity == quantity:
                return r
        raise KeyError(quantity)

    COLUMNS = (
        "n", "xi", "quantity", "empirical", "empirical_sd", "closed_form", "experimental",
        "steady_state", "rel_err_closed", "rel_err_experimental", "tolerance",
        "tolerance_experimental", "passed",
    )

    def table_rows(self):
        for r in self.rows:
            yield (
                self.n, self.xi, r.quantity, r.empirical, r.empirical_sd, r.closed_form,
                r.experimental, r.steady_state, r.rel_err_closed, r.rel_err_experimental,
                "" if r.tolerance is None else r.tolerance,
                "" if r.tolerance_experimental is None else r.tolerance_experimental,
                "" if r.passed is None else ("pass" if r.passed else "FAIL"),
            )

    def summary(self):
        head = f"N={self.n} xi={self.xi:g}"
        lines = [head, "-" * len(head)]
        fmt = "{:<11} {:>12} {:>9} {:>12} {:>12} {:>12} {:>8} {:>8}  {}"
        lines.append(fmt.format("quantity", "empirical", "sd", "closed", "experim.", "steady", "err_cf", "err_ex", ""))
        for r in self.rows:
            verdict = "" if r.passed is None else ("pass" if r.passed else "FAIL")
            lines.append(
                fmt.format(
                    r.quantity,
                    f"{r.empirical:.5g}",
                    f"{r.empirical_sd:.3g}",
                    f"{r.closed_form:.5g}",
                    f"{r.experimental:.5g}",
                    f"{r.steady_state:.5g}",
                    f"{r.rel_err_closed:.3f}",
                    f"{r.rel_err_experimental:.3f}",
                    verdict,
                )
            )
        return "\n".join(lines)


def empirical_tail(runs, tail_fraction):
    """Per-quantity ``(mean, sd)``: means of the per-run tail means, and the
    spread of those means across runs."""
    per_run = [tail_statistics(s, tail_fraction) for s in runs]
    out = {}
    for q in QUANTITIES:
        vals = np.array([st[q][0] for st in per_run])
        out[q] = (float(vals.mean()), float(vals.std()))
    return out


def trajectory_tail(trajectory, n, xi, tail_fraction):
    """Tail means of a mean-value trajectory, keyed like :data:`QUANTITIES`."""
    k = max(2, math.ceil(tail_fraction * len(trajectory)))
    tail = trajectory[-k:]
    sqrt_xi = math.sqrt(xi)
    cols = {
        "sigma_star": [s.sigma_star_bar for s in tail],
        "ratio": [s.x_bar / (sqrt_xi * s.r_bar) for s in tail],
        "phi_x_star": [n * (1.0 - b.x_bar / a.x_bar) for a, b in zip(tail, tail[1:])],
        "phi_r_star": [n * (1.0 - b.r_bar / a.r_bar) for a, b in zip(tail, tail[1:])],
        "s1": [s.s1_bar for s in tail],
        "s_odot": [s.s_odot_bar for s in tail],
        "s_norm_sq": [s.s_norm_sq_bar for s in tail],
    }
    return {q: float(np.mean(v)) for q, v in cols.items()}


def initial_mean_state(cone, es_config):
    return MeanState.create(es_config.x0, es_config.initial_r(cone), es_config.sigma0, cone.n)


def build_report(cone, es_config, runs, params, tail_fraction, steady=None, experimental=None, tolerances=None):
    """Assemble a :class:`ComparisonReport`.

    ``runs`` are real runs of ``es_config``. The closed-form column is the
    tail of the closed-form mean-value iteration over the same budget; the
    experimental column is filled when ``experimental`` (an
    :class:`Experimental` mode) is given.
    """
    tol = dict(DEFAULT_TOLERANCES if tolerances is None else tolerances)
    csa = (es_config.c, es_config.d)
    init = initial_mean_state(cone, es_config)
    gens = es_config.max_gen
    cf = trajectory_tail(iterate(init, gens, cone, params, csa, ClosedForm()), cone.n, cone.xi, tail_fraction)
    ex = None
    if experimental is not None:
        traj = iterate(init, gens, cone, params, csa, experimental)
        ex = trajectory_tail(traj, cone.n, cone.xi, tail_fraction)
    emp = empirical_tail(runs, tail_fraction)
    ss = {}
    if steady is not None:
        ss = {
            "sigma_star": steady.sigma_ss_star,
            "ratio": steady.ratio_ss,
            "phi_x_star": steady.phi_ss_star,
            "phi_r_star": steady.phi_ss_star,
            "s1": steady.s1_ss,
            "s_odot": steady.s_odot_ss,
            "s_norm_sq": steady.s_norm_sq_ss,
        }
    report = ComparisonReport(n=cone.n, xi=cone.xi)
    for q in QUANTITIES:
        report.rows.append(
            ComparisonRow(
                quantity=q,
                empirical=emp[q][0],
                empirical_sd=emp[q][1],
                closed_form=cf[q],
                experimental=math.nan if ex is None else ex[q],
                steady_state=ss.get(q, math.nan),
                tolerance=tol.get(q),
                tolerance_experimental=tol.get(f"{q}:experimental"),
            )
        )
    return report
