"""Instrumented (mu/mu_I, lambda)-CSA-ES with repair by projection.

:class:`CsaEs` performs one generation per :meth:`CsaEs.step`, exactly in
the order: sample, repair and back-calculate the mutation, rank by ``x_1``,
recombine, update the cumulative path, update ``sigma``. :func:`run_es`
drives it for a fixed budget and records a :class:`GenerationSample` for
every generation.

:func:`one_generation_experiment` estimates the local progress measures by
running many independent single generations from a fixed ``(x, r, sigma)``.
"""
from dataclasses import asdict, dataclass, field, fields, replace
from concurrent.futures import ThreadPoolExecutor
import math
import os

import numpy as np

from .cone import ConeSpec, feasible_rows, project_rows
from .errors import AxisDirectionError, DimensionError

SIGMA_MIN = 1e-300
SIGMA_MAX = 1e300
GENERATOR_NAME = "numpy.random.PCG64"
THREADS_ENV = "CONECSA_THREADS"


@dataclass(frozen=True)
class EsConfig:
    """Strategy parameters and run budget.

    ``r0=None`` places the start at one tenth of the boundary distance,
    ``x0 / (10 sqrt(xi))``; see :meth:`initial_r`.
    """

    mu: int
    lam: int
    c: float
    d: float
    sigma0: float = 1e-4
    x0: float = 100.0
    r0: float | None = None
    max_gen: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.mu, (int, np.integer)) and isinstance(self.lam, (int, np.integer))):
            raise ValueError("mu and lambda must be integers")
        if not 1 <= self.mu < self.lam:
            raise ValueError(f"need 1 <= mu < lambda, got mu={self.mu}, lambda={self.lam}")
        if not 0 < self.c < 1:
            raise ValueError(f"c must lie in (0, 1), got {self.c!r}")
        if not self.d > 0:
            raise ValueError(f"d must be positive, got {self.d!r}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0!r}")
        if not self.x0 > 0:
            raise ValueError(f"x0 must be positive, got {self.x0!r}")
        if self.r0 is not None and not self.r0 >= 0:
            raise ValueError(f"r0 must be non-negative, got {self.r0!r}")
        if self.max_gen < 0:
            raise ValueError("max_gen must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @classmethod
    def with_defaults(cls, n, mu, lam, **kw):
        """Fill ``c = 1/sqrt(n)`` and ``d = 1/c`` unless given."""
        c = kw.pop("c", None)
        c = 1.0 / math.sqrt(n) if c is None else c
        d = kw.pop("d", None)
        d = 1.0 / c if d is None else d
        return cls(mu=mu, lam=lam, c=c, d=d, **kw)

    def initial_r(self, cone):
        return self.x0 / (10.0 * cone.sqrt_xi) if self.r0 is None else self.r0

    def check_start(self, cone):
        r0 = self.initial_r(cone)
        if r0 > self.x0 / cone.sqrt_xi * (1.0 + 1e-12):
            raise ValueError(f"initial point (x0={self.x0}, r0={r0}) is infeasible for xi={cone.xi}")
        return r0


@dataclass
class StrategyState:
    """Full-dimensional strategy state at the start of generation ``gen``."""

    x_vec: np.ndarray
    s_vec: np.ndarray
    sigma: float
    gen: int = 0


@dataclass(frozen=True)
class GenerationSample:
    """Aggregates recorded for one generation.

    ``x, r, sigma, sigma_star, s1, s_odot, s_norm_sq`` describe the state at
    the start of the generation; ``q_mean`` and ``qr_mean`` are the axis
    coordinates of the recombined centroid (the next parent).
    """

    gen: int
    x: float
    r: float
    sigma: float
    sigma_star: float
    s1: float
    s_odot: float
    s_norm_sq: float
    q_mean: float
    qr_mean: float
    feasible_fraction: float


SAMPLE_FIELDS = tuple(f.name for f in fields(GenerationSample))


@dataclass(frozen=True)
class GenerationRecord:
    """Everything one generation produced, for white-box testing."""

    sample: GenerationSample
    offspring: np.ndarray
    mutations: np.ndarray
    feasible: np.ndarray
    selected: np.ndarray
    centroid: np.ndarray
    z_centroid: np.ndarray


@dataclass
class DynamicsSeries:
    """Column-oriented per-generation record of one run or a batch average.

    ``data`` maps each :class:`GenerationSample` field name to a 1-D array.
    """

    cone: ConeSpec
    config: EsConfig
    data: dict
    seeds: tuple = ()
    diverged: bool = False
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.data["gen"])

    def __getitem__(self, i):
        return GenerationSample(**{k: self._cell(k, i) for k in SAMPLE_FIELDS})

    def _cell(self, key, i):
        v = self.data[key][i]
        return int(v) if key == "gen" else float(v)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def samples(self):
        return list(self)

    def column(self, name):
        """A recorded field, or one of the derived columns ``ratio``,
        ``phi_x_star``, ``phi_r_star``."""
        if name in self.data:
            return self.data[name]
        n, sqrt_xi = self.cone.n, self.cone.sqrt_xi
        x, r = self.data["x"], self.data["r"]
        with np.errstate(divide="ignore", invalid="ignore"):
            if name == "ratio":
                return x / (sqrt_xi * r)
            if name == "phi_x_star":
                return n * (x - self.data["q_mean"]) / x
            if name == "phi_r_star":
                return n * (r - self.data["qr_mean"]) / r
        raise KeyError(name)

    @classmethod
    def empty(cls, cone, config, length=0):
        data = {k: np.full(length, np.nan) for k in SAMPLE_FIELDS}
        data["gen"] = np.arange(length, dtype=np.int64)
        return cls(cone=cone, config=config, data=data)

    def head(self, length):
        data = {k: v[:length].copy() for k, v in self.data.items()}
        return replace(self, data=data)


def update_path(s, c, mu, z_centroid):
    """Cumulative path update ``(1-c) s + sqrt(mu c (2-c)) <z>``."""
    s = np.asarray(s, dtype=float)
    z = np.asarray(z_centroid, dtype=float)
    if s.shape != z.shape:
        raise DimensionError(f"path {s.shape} and centroid {z.shape} differ in shape")
    return (1.0 - c) * s + math.sqrt(mu * c * (2.0 - c)) * z


def update_sigma(sigma, s_next_norm_sq, n, d):
    """CSA mutation strength update ``sigma exp((|s|^2 - N) / (2 D N))``."""
    if not sigma > 0 or not d > 0 or n < 2:
        raise ValueError("need sigma > 0, d > 0 and n >= 2")
    return sigma * math.exp((s_next_norm_sq - n) / (2.0 * d * n))


def decompose_path(x_vec, s_vec):
    """Split the path into the axis component and the parental r component.

    Returns ``(s1, s_odot)``. Raises :class:`AxisDirectionError` when the
    parent sits on the axis (``r == 0``), where the r direction is undefined.
    """
    x_vec = np.asarray(x_vec, dtype=float)
    s_vec = np.asarray(s_vec, dtype=float)
    if x_vec.shape != s_vec.shape or x_vec.ndim != 1 or x_vec.shape[0] < 2:
        raise DimensionError("x_vec and s_vec must be equal-length vectors of length >= 2")
    r = float(np.linalg.norm(x_vec[1:]))
    if r == 0:
        raise AxisDirectionError("s_odot is undefined for a parent on the cone axis")
    return float(s_vec[0]), float(np.dot(x_vec[1:], s_vec[1:]) / r)


class CsaEs:
    """Stepwise (mu/mu_I, lambda)-CSA-ES on the cone.

    ``repair=False`` skips the feasibility check and projection entirely;
    this is only meaningful as an unconstrained reference.
    """

    def __init__(self, cone, config, repair=True, rng=None):
        self.cone = cone
        self.config = config
        self.repair = repair
        r0 = config.check_start(cone)
        x = np.zeros(cone.n)
        x[0] = config.x0
        x[1] = r0
        self.state = StrategyState(x_vec=x, s_vec=np.zeros(cone.n), sigma=float(config.sigma0))
        self.rng = np.random.default_rng(config.seed) if rng is None else rng

    def step(self):
        """Run one generation and return its :class:`GenerationRecord`."""
        cfg, n, st = self.config, self.cone.n, self.state
        x, sigma = st.x_vec, st.sigma
        x_ax = float(x[0])
        r = float(np.linalg.norm(x[1:]))
        try:
            s1, s_odot = decompose_path(x, st.s_vec)
        except AxisDirectionError:
            s1, s_odot = float(st.s_vec[0]), math.nan
        s_norm_sq = float(np.dot(st.s_vec, st.s_vec))

        z = self.rng.standard_normal((cfg.lam, n))
        off = x + sigma * z
        if self.repair:
            feas = feasible_rows(self.cone.xi, off)
            if not feas.all():
                off[~feas] = project_rows(self.cone.xi, off[~feas])
                z[~feas] = (off[~feas] - x) / sigma
        else:
            feas = np.ones(cfg.lam, dtype=bool)

        order = np.argsort(off[:, 0], kind="stable")
        sel = order[: cfg.mu]
        centroid = off[sel].mean(axis=0)
        z_mean = z[sel].mean(axis=0)
        s_next = update_path(st.s_vec, cfg.c, cfg.mu, z_mean)
        s_next_sq = float(np.dot(s_next, s_next))
        sigma_next = sigma * math.exp((s_next_sq - n) / (2.0 * cfg.d * n))

        sample = GenerationSample(
            gen=st.gen,
            x=x_ax,
            r=r,
            sigma=sigma,
            sigma_star=n * sigma / r if r > 0 else math.nan,
            s1=s1,
            s_odot=s_odot,
            s_norm_sq=s_norm_sq,
            q_mean=float(centroid[0]),
            qr_mean=float(np.linalg.norm(centroid[1:])),
            feasible_fraction=float(feas.mean()),
        )
        self.state = StrategyState(x_vec=centroid, s_vec=s_next, sigma=sigma_next, gen=st.gen + 1)
        return GenerationRecord(
            sample=sample,
            offspring=off,
            mutations=z,
            feasible=feas,
            selected=sel,
            centroid=centroid,
            z_centroid=z_mean,
        )

    def diverged(self):
        st = self.state
        return not (
            SIGMA_MIN <= st.sigma <= SIGMA_MAX
            and np.all(np.isfinite(st.x_vec))
            and np.all(np.isfinite(st.s_vec))
        )


def run_es(cone, config, repair=True):
    """Run the CSA-ES for ``config.max_gen`` generations.

    Deterministic for a given ``config.seed``. Stops early, flagging
    ``diverged``, if ``sigma`` leaves ``[1e-300, 1e300]`` or the state turns
    non-finite.
    """
    es = CsaEs(cone, config, repair=repair)
    series = DynamicsSeries.empty(cone, config, config.max_gen)
    series.seeds = (config.seed,)
    series.meta = {"generator": GENERATOR_NAME, "repair": repair}
    cols = series.data
    done = 0
    for g in range(config.max_gen):
        sample = es.step().sample
        for k in SAMPLE_FIELDS[1:]:
            cols[k][g] = getattr(sample, k)
        done = g + 1
        if es.diverged():
            series.diverged = True
            break
    if done < config.max_gen:
        series = series.head(done)
        series.diverged = True
    return series


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_batch(cone, config, repeats, workers=None, repair=True):
    """Run ``repeats`` independent runs with seeds ``config.seed + i``.

    Runs may execute on a thread pool (``workers`` or the ``CONECSA_THREADS``
    environment variable); results are returned in seed order regardless.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    configs = [replace(config, seed=config.seed + i) for i in range(repeats)]
    w = _worker_count(workers)
    if w == 1:
        return [run_es(cone, c, repair=repair) for c in configs]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(lambda c: run_es(cone, c, repair=repair), configs))


def average_series(runs):
    """Per-generation arithmetic mean of every field across ``runs``.

    Runs of unequal length are truncated to the shortest and the result is
    flagged ``truncated``.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("average_series needs at least one run")
    length = min(len(s) for s in runs)
    truncated = any(len(s) != length for s in runs)
    data = {"gen": np.arange(length, dtype=np.int64)}
    for k in SAMPLE_FIELDS[1:]:
        data[k] = np.mean([s.data[k][:length] for s in runs], axis=0)
    first = runs[0]
    seeds = tuple(sd for s in runs for sd in s.seeds)
    return DynamicsSeries(
        cone=first.cone,
        config=first.config,
        data=data,
        seeds=seeds,
        diverged=any(s.diverged for s in runs),
        truncated=truncated,
        meta=dict(first.meta, runs=len(runs)),
    )


TAIL_COLUMNS = ("sigma_star", "ratio", "phi_x_star", "phi_r_star", "s1", "s_odot", "s_norm_sq")


def tail_statistics(series, tail_fraction, columns=TAIL_COLUMNS):
    """Mean and standard deviation over the last ``ceil(tail_fraction * len)``
    generations. Returns ``{column: (mean, sd)}``."""
    if not 0 < tail_fraction <= 1:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction!r}")
    length = len(series)
    if length == 0:
        raise ValueError("series is empty")
    k = math.ceil(tail_fraction * length)
    out = {}
    for name in columns:
        v = np.asarray(series.column(name), dtype=float)[length - k :]
        out[name] = (float(np.mean(v)), float(np.std(v)))
    return out


def log_slope_progress(series, tail_fraction):
    """Normalized x progress from the least-squares slope of ``ln x`` over
    the tail: ``N (1 - exp(slope))``."""
    length = len(series)
    k = math.ceil(tail_fraction * length)
    if k < 2:
        raise ValueError("need at least two tail generations")
    g = series.data["gen"][length - k :].astype(float)
    lx = np.log(series.data["x"][length - k :])
    slope = np.polyfit(g, lx, 1)[0]
    return series.cone.n * (1.0 - math.exp(slope))


# one-generation experiments ---------------------------------------------------


@dataclass(frozen=True)
class LocalMeasures:
    """Monte Carlo estimates of the one-generation progress measures.

    Each estimate has a matching ``*_se`` standard error. ``q_infeas`` is
    the mean centroid x over trials in which every offspring was repaired
    (NaN if there were none) and ``infeasible_trials`` counts those trials.
    """

    phi_x: float
    phi_x_star: float
    phi_r: float
    phi_r_star: float
    phi_r2: float
    p_feas_hat: float
    z_odot_hat: float
    q_infeas: float
    trials: int
    infeasible_trials: int
    phi_x_se: float
    phi_x_star_se: float
    phi_r_se: float
    phi_r_star_se: float
    phi_r2_se: float
    p_feas_hat_se: float
    z_odot_hat_se: float
    q_infeas_se: float

    def as_dict(self):
        return asdict(self)


class _Accumulator:
    def __init__(self):
        self.n = 0
        self.sum = 0.0
        self.sum_sq = 0.0

    def add(self, v):
        v = np.asarray(v, dtype=float)
        self.n += v.size
        self.sum += float(v.sum())
        self.sum_sq += float(np.dot(v.ravel(), v.ravel()))

    def result(self):
        if self.n == 0:
            return math.nan, math.nan
        mean = self.sum / self.n
        if self.n < 2:
            return mean, 0.0
        var = max(self.sum_sq / self.n - mean * mean, 0.0) * self.n / (self.n - 1)
        return mean, math.sqrt(var / self.n)


def _bartlett_factor(rng, df, p, size):
    """Lower-triangular ``A`` with ``A A^T`` Wishart(``df``, I_p) distributed.

    The rows of ``A`` are ``p`` standard normal vectors of ``R^df`` expressed
    in an orthonormal basis of their span (Bartlett decomposition); requires
    ``df >= p``.
    """
    a = np.zeros((size, p, p))
    idx = np.arange(p)
    a[:, idx, idx] = np.sqrt(rng.chisquare(df - idx, size=(size, p)))
    low = np.tril_indices(p, -1)
    a[:, low[0], low[1]] = rng.standard_normal((size, len(low[0])))
    return a


def _trial_chunk_reduced(rng, xi, n, x, r, sigma, mu, lam, size):
    """Single generations from ``(x, r, 0, ..., 0)`` using exact reduced coordinates.

    Offspring depend on the last ``N - 2`` mutation components only through
    their Gram matrix, which is Wishart distributed. Drawing the ``lam``
    vectors in a basis of their own span therefore reproduces the centroid
    and every selection decision in distribution at a cost independent of N.
    """
    z1 = rng.standard_normal((size, lam))
    z2 = rng.standard_normal((size, lam))
    rows = _bartlett_factor(rng, n - 2, lam, size)
    y1 = x + sigma * z1
    y2 = r + sigma * z2
    tail_sq = sigma * sigma * np.einsum("tij,tij->ti", rows, rows)
    rn_sq = y2 * y2 + tail_sq
    slack = 1e-12 * np.maximum(1.0, y1 * y1 + rn_sq)
    feas = (y1 >= 0) & (y1 * y1 - xi * rn_sq >= -slack)
    rn = np.sqrt(rn_sq)
    sqrt_xi = math.sqrt(xi)
    t = y1 + rn / sqrt_xi
    on_face = math.sqrt(xi / (xi + 1.0)) * t > 0
    q_proj = np.where(on_face, xi / (xi + 1.0) * t, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta_proj = np.where(on_face, q_proj / (sqrt_xi * rn), 0.0)
    q = np.where(feas, y1, q_proj)
    beta = np.where(feas, 1.0, beta_proj)

    order = np.argsort(q, axis=1, kind="stable")[:, :mu]
    q_sel = np.take_along_axis(q, order, axis=1)
    b_sel = np.take_along_axis(beta, order, axis=1)
    y2_sel = np.take_along_axis(y2, order, axis=1)
    rows_sel = np.take_along_axis(rows, order[:, :, None], axis=1)
    q_mean = q_sel.mean(axis=1)
    c2 = (b_sel * y2_sel).mean(axis=1)
    tail = np.einsum("ti,tij->tj", b_sel, rows_sel)
    tail_norm_sq = sigma * sigma / (mu * mu) * np.einsum("tj,tj->t", tail, tail)
    qr_sq = c2 * c2 + tail_norm_sq
    return q_mean, qr_sq, c2, feas


def _trial_chunk_full(rng, xi, n, x, r, sigma, mu, lam, size):
    """Single generations with full ``N``-dimensional offspring vectors."""
    z = rng.standard_normal((size, lam, n))
    parent = np.zeros(n)
    parent[0], parent[1] = x, r
    off = (parent + sigma * z).reshape(size * lam, n)
    feas = feasible_rows(xi, off)
    if not feas.all():
        off[~feas] = project_rows(xi, off[~feas])
    off = off.reshape(size, lam, n)
    feas = feas.reshape(size, lam)
    order = np.argsort(off[:, :, 0], axis=1, kind="stable")[:, :mu]
    cen = np.take_along_axis(off, order[:, :, None], axis=1).mean(axis=1)
    q_mean = cen[:, 0]
    qr_sq = np.einsum("ti,ti->t", cen[:, 1:], cen[:, 1:])
    return q_mean, qr_sq, cen[:, 1], feas


def one_generation_experiment(
    cone, x, r, sigma, mu, lam, trials, seed=0, method="auto", chunk=None
):
    """Estimate the local progress measures from ``trials`` single generations.

    Every trial starts from parent ``(x, r, 0, ..., 0)`` with mutation
    strength ``sigma``, samples and repairs ``lam`` offspring, and
    recombines the ``mu`` best. ``method`` is ``"full"`` (draw full vectors),
    ``"reduced"`` (exact reduced coordinates, cost independent of ``N``), or
    ``"auto"`` (reduced whenever ``N - 2 >= lam``).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not r > 0:
        raise ValueError("r must be positive")
    if r > x / cone.sqrt_xi * (1.0 + 1e-12):
        raise ValueError(f"state (x={x}, r={r}) is infeasible")
    if not 1 <= mu < lam:
        raise ValueError("need 1 <= mu < lambda")
    n = cone.n
    if method == "auto":
        method = "reduced" if n - 2 >= lam else "full"
    if method == "reduced":
        if n - 2 < lam:
            raise ValueError("reduced sampling needs n - 2 >= lambda")
        chunk_fn = _trial_chunk_reduced
        chunk = chunk or 20_000
    elif method == "full":
        chunk_fn = _trial_chunk_full
        chunk = chunk or max(1, 4_000_000 // (lam * n))
    else:
        raise ValueError(f"unknown method {method!r}")

    rng = np.random.default_rng(seed)
    acc = {k: _Accumulator() for k in ("dx", "dr", "dr2", "feas", "z", "qinf")}
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        q_mean, qr_sq, c2, feas = chunk_fn(rng, cone.xi, n, x, r, sigma, mu, lam, size)
        acc["dx"].add(x - q_mean)
        acc["dr"].add(r - np.sqrt(qr_sq))
        acc["dr2"].add(r * r - qr_sq)
        acc["feas"].add(feas.mean(axis=1))
        acc["z"].add((c2 - r) / sigma)
        acc["qinf"].add(q_mean[~feas.any(axis=1)])
        done += size

    (px, px_se), (pr, pr_se), (pr2, pr2_se) = (acc[k].result() for k in ("dx", "dr", "dr2"))
    pf, pf_se = acc["feas"].result()
    z, z_se = acc["z"].result()
    qi, qi_se = acc["qinf"].result()
    return LocalMeasures(
        phi_x=px,
        phi_x_star=n * px / x,
        phi_r=pr,
        phi_r_star=n * pr / r,
        phi_r2=pr2,
        p_feas_hat=pf,
        z_odot_hat=z,
        q_infeas=qi,
        trials=int(trials),
        infeasible_trials=acc["qinf"].n,
        phi_x_se=px_se,
        phi_x_star_se=n * px_se / x,
        phi_r_se=pr_se,
        phi_r_star_se=n * pr_se / r,
        phi_r2_se=pr2_se,
        p_feas_hat_se=pf_se,
        z_odot_hat_se=z_se,
        q_infeas_se=qi_se,
    )
