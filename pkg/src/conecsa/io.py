"""Experiment configuration files and CSV emission."""
from dataclasses import asdict, dataclass, field, replace
from contextlib import nullcontext
import csv
import datetime
import json
import math
import sys
from importlib import resources

import numpy as np

from . import __version__
from .cone import ConeSpec
from .es import SAMPLE_FIELDS, DynamicsSeries, EsConfig
from .theory import TheoryParams

MODES = ("simulate", "iterate-closed", "iterate-experimental", "steady-state", "compare")
PRESETS = ("fig3", "fig4-N400", "fig4-N1000", "fig4-N10000", "fig5-N400", "fig5-N1000", "fig5-N10000")


class ConfigError(ValueError):
    """Configuration document failed to parse or validate."""


@dataclass(frozen=True)
class ExperimentConfig:
    cone: ConeSpec
    es: EsConfig
    repeats: int = 1
    mode: str = "simulate"
    output: str | None = None
    tail_fraction: float = 0.3
    trials: int = 10_000
    xi_grid: tuple = ()
    tolerances: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.es.seed

    @property
    def csa(self):
        return self.es.c, self.es.d

    def theory_params(self, xi=None):
        return TheoryParams(self.cone.n, self.cone.xi if xi is None else xi, self.es.mu, self.es.lam)

    def with_xi(self, xi):
        return replace(self, cone=ConeSpec(self.cone.n, xi))


_KEYS = {
    "n", "xi", "mu", "lambda", "c", "d", "sigma0", "x0", "r0", "max_gen", "seed",
    "repeats", "mode", "output", "tail_fraction", "trials", "xi_grid", "tolerances", "name",
}


def _field(doc, key, kind, default=None, required=False):
    if key not in doc or doc[key] is None:
        if required:
            raise ConfigError(f"{key}: required field missing")
        return default
    value = doc[key]
    try:
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None


def config_from_dict(doc):
    """Build and fully validate an :class:`ExperimentConfig`.

    ``c`` defaults to ``1/sqrt(n)`` and ``d`` to ``1/c``.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - _KEYS
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
    n = _field(doc, "n", int, required=True)
    xi = _field(doc, "xi", float, required=True)
    try:
        cone = ConeSpec(n, xi)
    except ValueError as exc:
        raise ConfigError(f"n/xi: {exc}") from None
    c = _field(doc, "c", float, 1.0 / math.sqrt(n))
    es_kw = dict(
        mu=_field(doc, "mu", int, required=True),
        lam=_field(doc, "lambda", int, required=True),
        c=c,
        d=_field(doc, "d", float, 1.0 / c if c > 0 else math.nan),
        sigma0=_field(doc, "sigma0", float, 1e-4),
        x0=_field(doc, "x0", float, 100.0),
        r0=_field(doc, "r0", float),
        max_gen=_field(doc, "max_gen", int, 1000),
        seed=_field(doc, "seed", int, 0),
    )
    try:
        es = EsConfig(**es_kw)
        es.check_start(cone)
    except ValueError as exc:
        raise ConfigError(f"es: {exc}") from None

    repeats = _field(doc, "repeats", int, 1)
    if repeats < 1:
        raise ConfigError("repeats: must be >= 1")
    mode = _field(doc, "mode", str, "simulate")
    if mode not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}")
    tail = _field(doc, "tail_fraction", float, 0.3)
    if not 0 < tail <= 1:
        raise ConfigError("tail_fraction: must lie in (0, 1]")
    trials = _field(doc, "trials", int, 10_000)
    if trials < 1:
        raise ConfigError("trials: must be >= 1")
    grid = doc.get("xi_grid") or ()
    if not isinstance(grid, (list, tuple)):
        raise ConfigError("xi_grid: expected a list of numbers")
    try:
        grid = tuple(ConeSpec(n, float(v)).xi for v in grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"xi_grid: {exc}") from None
    tolerances = doc.get("tolerances") or {}
    if not isinstance(tolerances, dict) or not all(
        isinstance(v, (int, float)) and v > 0 for v in tolerances.values()
    ):
        raise ConfigError("tolerances: expected a mapping of quantity to positive relative error")
    return ExperimentConfig(
        cone=cone,
        es=es,
        repeats=repeats,
        mode=mode,
        output=_field(doc, "output", str),
        tail_fraction=tail,
        trials=trials,
        xi_grid=grid,
        tolerances={str(k): float(v) for k, v in tolerances.items()},
    )


def config_to_dict(cfg):
    es = cfg.es
    doc = {
        "n": cfg.cone.n,
        "xi": cfg.cone.xi,
        "mu": es.mu,
        "lambda": es.lam,
        "c": es.c,
        "d": es.d,
        "sigma0": es.sigma0,
        "x0": es.x0,
        "r0": es.r0,
        "max_gen": es.max_gen,
        "seed": es.seed,
        "repeats": cfg.repeats,
        "mode": cfg.mode,
        "output": cfg.output,
        "tail_fraction": cfg.tail_fraction,
        "trials": cfg.trials,
        "xi_grid": list(cfg.xi_grid),
        "tolerances": dict(cfg.tolerances),
    }
    return doc


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc)


def dump_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("conecsa").joinpath("presets", f"{name}.json").read_text("utf-8")
    return config_from_dict(json.loads(text))


# CSV ------------------------------------------------------------------------


def fmt(v):
    """17 significant digits, enough to round-trip any double."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _meta_lines(meta, reproducible):
    meta = dict(meta)
    meta.setdefault("version", __version__)
    if not reproducible:
        meta["created"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return [f"# {k}: {json.dumps(v, sort_keys=True, default=str)}" for k, v in meta.items()]


def series_metadata(series):
    return {
        "kind": "dynamics",
        "config": asdict(series.config),
        "n": series.cone.n,
        "xi": series.cone.xi,
        "seeds": list(series.seeds),
        "generator": series.meta.get("generator"),
        "runs": series.meta.get("runs", 1),
        "diverged": series.diverged,
        "truncated": series.truncated,
    }


def write_table(path, columns, rows, meta=None, reproducible=False):
    """Write ``#`` metadata lines, a header row, then ``rows`` (17-digit floats).

    ``path=None`` writes to standard output.
    """
    target = nullcontext(sys.stdout) if path is None else open(path, "w", encoding="utf-8", newline="")
    with target as fh:
        for line in _meta_lines(meta or {}, reproducible):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool) else v for v in row])


def emit_series_csv(series, path, reproducible=False, extra_meta=None):
    meta = series_metadata(series)
    meta.update(extra_meta or {})
    cols = [series.data[k] for k in SAMPLE_FIELDS]
    write_table(path, SAMPLE_FIELDS, zip(*cols), meta, reproducible)


def emit_trajectory_csv(trajectory, n, path, meta=None, reproducible=False):
    """Mean-value trajectory in the series schema. ``q_mean`` and ``qr_mean``
    are the next state's ``x`` and ``r``; ``feasible_fraction`` is NaN."""
    nan = math.nan
    rows = []
    for g, s in enumerate(trajectory):
        nxt = trajectory[g + 1] if g + 1 < len(trajectory) else None
        rows.append((
            g, s.x_bar, s.r_bar, s.sigma_bar, s.sigma_star_bar, s.s1_bar, s.s_odot_bar, s.s_norm_sq_bar,
            nan if nxt is None else nxt.x_bar, nan if nxt is None else nxt.r_bar, nan,
        ))
    write_table(path, SAMPLE_FIELDS, rows, dict(meta or {}, kind="mean-value", n=n), reproducible)


def read_table(path):
    """Parse a file written by :func:`write_table`.

    Returns ``(meta, columns, rows)`` with numeric cells as floats (``gen``
    as int) and metadata values JSON-decoded.
    """
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(": ")
                meta[key] = json.loads(value)
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader, [])
    rows = []
    for raw in reader:
        row = []
        for col, cell in zip(columns, raw):
            try:
                row.append(int(cell) if col == "gen" else float(cell))
            except ValueError:
                row.append(cell)
        rows.append(row)
    return meta, columns, rows


def read_series_csv(path):
    """Load a CSV written by :func:`emit_series_csv` back into a
    :class:`DynamicsSeries`."""
    meta, columns, rows = read_table(path)
    if tuple(columns) != SAMPLE_FIELDS:
        raise ValueError(f"{path}: unexpected columns {columns}")
    cfg = meta["config"]
    series = DynamicsSeries.empty(ConeSpec(meta["n"], meta["xi"]), EsConfig(**cfg), len(rows))
    for j, key in enumerate(SAMPLE_FIELDS):
        dtype = np.int64 if key == "gen" else float
        series.data[key] = np.array([row[j] for row in rows], dtype=dtype)
    series.seeds = tuple(meta.get("seeds", ()))
    series.diverged = bool(meta.get("diverged", False))
    series.truncated = bool(meta.get("truncated", False))
    series.meta = {"generator": meta.get("generator"), "runs": meta.get("runs", 1)}
    return series
