"""``conecsa`` command line.

Exit codes: 0 success, 1 a comparison tolerance failed, 2 bad configuration
or arguments, 3 I/O failure.
"""
import argparse
import json
import math
import sys

from .errors import NoRealRootError, NoRootError, SingularityError
from .es import average_series, run_batch
from .io import (
    PRESETS,
    ConfigError,
    config_from_dict,
    config_to_dict,
    emit_series_csv,
    emit_trajectory_csv,
    load_preset,
    write_table,
)
from .meanvalue import ClosedForm, Experimental, iterate
from .report import ComparisonReport, build_report, initial_mean_state
from .steady import SsRegime, solve_sigma_ss_numeric, steady_state
from .theory import progress_coefficient, progress_coefficients_mc

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

_OVERRIDES = (
    ("n", int), ("xi", float), ("mu", int), ("lambda", int), ("c", float), ("d", float),
    ("sigma0", float), ("x0", float), ("r0", float), ("max_gen", int), ("seed", int),
    ("repeats", int), ("tail_fraction", float), ("trials", int),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON configuration file")
    src.add_argument("--preset", choices=PRESETS, help="bundled figure setup")
    for name, kind in _OVERRIDES:
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, dest=name, type=kind, default=None)
    p.add_argument("--xi-grid", type=float, nargs="+", default=None, help="sweep these xi values")
    p.add_argument("-o", "--output", help="output CSV path (default: stdout)")
    p.add_argument("--reproducible", action="store_true", help="omit the timestamp from CSV metadata")
    p.add_argument("--workers", type=int, default=None, help="threads for batches of runs")


def _parser():
    p = _Parser(prog="conecsa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="averaged real runs of the ES")
    _add_config_args(s)

    s = sub.add_parser("iterate", help="mean-value iteration")
    _add_config_args(s)
    s.add_argument("--mode", choices=("closed", "experimental"), default="closed")

    s = sub.add_parser("steady-state", help="steady-state table over a xi grid")
    _add_config_args(s)
    s.add_argument(
        "--regime", nargs="+", default=None,
        help="regimes to evaluate (default: all); e.g. numeric sqrtN oneOverN-large-xi",
    )
    s.add_argument("--exact-phi", action="store_true", help="keep finite-N factors in the progress")

    s = sub.add_parser("compare", help="real runs against the mean-value theory")
    _add_config_args(s)
    s.add_argument("--experimental", action="store_true", help="also iterate with one-generation experiments")
    s.add_argument("--tolerance", action="append", default=[], metavar="QTY=REL",
                   help="relative tolerance, e.g. sigma_star=0.2 or sigma_star:experimental=0.1")

    s = sub.add_parser("coeff", help="progress coefficients c_{mu/mu,lambda}")
    s.add_argument("--mu", type=int, nargs="+", required=True)
    s.add_argument("--lambda", dest="lam", type=int, required=True)
    s.add_argument("--mc", type=int, default=0, metavar="SAMPLES", help="add a Monte Carlo column")
    s.add_argument("--seed", type=int, default=0)
    return p


def _config(args, defaults=None):
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
    elif args.preset:
        doc = config_to_dict(load_preset(args.preset))
    else:
        doc = dict(defaults or {})
    for name, _ in _OVERRIDES:
        v = getattr(args, name)
        if v is not None:
            doc[name] = v
    if args.xi_grid is not None:
        doc["xi_grid"] = args.xi_grid
    if args.output is not None:
        doc["output"] = args.output
    return config_from_dict(doc)


def _grid(cfg):
    return cfg.xi_grid or (cfg.cone.xi,)


def _out(cfg):
    return cfg.output or None


def _simulate(args):
    cfg = _config(args)
    runs = run_batch(cfg.cone, cfg.es, cfg.repeats, workers=args.workers)
    avg = average_series(runs)
    emit_series_csv(avg, _out(cfg), reproducible=args.reproducible, extra_meta={"repeats": cfg.repeats})
    return EXIT_OK


def _iterate(args):
    cfg = _config(args)
    mode = ClosedForm() if args.mode == "closed" else Experimental(cfg.trials, seed=cfg.seed)
    traj = iterate(initial_mean_state(cfg.cone, cfg.es), cfg.es.max_gen, cfg.cone, cfg.theory_params(), cfg.csa, mode)
    meta = {"mode": args.mode, "xi": cfg.cone.xi, "config": config_to_dict(cfg)}
    emit_trajectory_csv(traj, cfg.cone.n, _out(cfg), meta, reproducible=args.reproducible)
    return EXIT_OK


def parse_regime(name):
    key = name.strip().lower().replace("_", "-")
    for r in SsRegime:
        if key in (r.value, r.name.lower().replace("_", "-")):
            return r
    raise ConfigError(f"unknown regime {name!r}; choose from {', '.join(r.value for r in SsRegime)}")


def _steady_state(args):
    cfg = _config(args, defaults={"n": 10_000, "xi": 10.0, "mu": 3, "lambda": 10})
    regimes = [parse_regime(r) for r in args.regime] if args.regime else list(SsRegime)
    cols = ("regime", "n", "xi", "mu", "lambda", "c", "d", "sigma_ss_star", "phi_ss_star",
            "ratio_ss", "s1_ss", "s_odot_ss", "s_norm_sq_ss", "note")
    rows = []
    for xi in _grid(cfg):
        params = cfg.theory_params(xi)
        for regime in regimes:
            try:
                ss = steady_state(params, cfg.csa, regime, exact=args.exact_phi)
                vals = (ss.sigma_ss_star, ss.phi_ss_star, ss.ratio_ss, ss.s1_ss, ss.s_odot_ss, ss.s_norm_sq_ss)
                note = ""
            except (NoRealRootError, NoRootError, SingularityError) as exc:
                vals, note = (math.nan,) * 6, str(exc)
            rows.append((regime.value, cfg.cone.n, xi, cfg.es.mu, cfg.es.lam, cfg.es.c, cfg.es.d) + vals + (note,))
    write_table(_out(cfg), cols, rows, {"kind": "steady-state"}, reproducible=args.reproducible)
    if cfg.output:
        for row in rows:
            print(f"{row[0]:<26} xi={row[2]:<8g} sigma*_ss={row[7]:.6g}")
    return EXIT_OK


def _parse_tolerances(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--tolerance expects QTY=REL, got {item!r}") from None
    return out


def _compare(args):
    cfg = _config(args)
    tolerances = None
    if cfg.tolerances or args.tolerance:
        tolerances = dict(cfg.tolerances)
        tolerances.update(_parse_tolerances(args.tolerance))
    reports = []
    for xi in _grid(cfg):
        c = cfg.with_xi(xi)
        params = c.theory_params()
        runs = run_batch(c.cone, c.es, c.repeats, workers=args.workers)
        try:
            steady = solve_sigma_ss_numeric(params, c.csa)
        except NoRootError:
            steady = None
        mode = Experimental(c.trials, seed=c.seed) if args.experimental else None
        reports.append(build_report(c.cone, c.es, runs, params, c.tail_fraction, steady, mode, tolerances))
    rows = [row for rep in reports for row in rep.table_rows()]
    write_table(_out(cfg), ComparisonReport.COLUMNS, rows, {"kind": "comparison", "config": config_to_dict(cfg)},
                reproducible=args.reproducible)
    stream = sys.stdout if cfg.output else sys.stderr
    for rep in reports:
        print(rep.summary(), file=stream)
    ok = all(rep.ok for rep in reports)
    print("compare: " + ("all tolerances met" if ok else "tolerance FAILED"), file=stream)
    return EXIT_OK if ok else EXIT_TOLERANCE


def _coeff(args):
    for m in args.mu:
        if not 1 <= m <= args.lam:
            raise ConfigError(f"mu={m} must satisfy 1 <= mu <= lambda={args.lam}")
    mc = progress_coefficients_mc(args.lam, args.mu, args.mc, seed=args.seed) if args.mc else {}
    header = ["mu", "lambda", "c_quadrature"] + (["c_mc", "c_mc_se"] if mc else [])
    print("\t".join(header))
    for m in args.mu:
        row = [str(m), str(args.lam), f"{progress_coefficient(m, args.lam):.10g}"]
        if mc:
            row += [f"{mc[m][0]:.10g}", f"{mc[m][1]:.3g}"]
        print("\t".join(row))
    return EXIT_OK


_COMMANDS = {
    "simulate": _simulate,
    "iterate": _iterate,
    "steady-state": _steady_state,
    "compare": _compare,
    "coeff": _coeff,
}


def run_command(argv):
    try:
        args = _parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"conecsa: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"conecsa: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
