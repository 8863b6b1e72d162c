"""Monte-Carlo oracle for the two-valued local volatility model.

Two discretizations are available:

``EULER_PRICE``
    Log-Euler on ``log S`` with the volatility frozen at the left grid point.
    Functionals come from the discrete path: sign changes with linearly
    interpolated crossing times, interpolated occupation, and the band
    estimator ``(1 / 2 eps) * time in [-eps, eps]`` with ``eps = 0.5 sqrt(dt)``
    for the local time. Its weak error decays only like ``sqrt(dt)`` because
    the coefficient jumps at the threshold.

``SKEW_EULER``
    Steps the skew-BM coordinate ``X`` directly. Each step draws the reflected
    Gaussian move ``|x| + sqrt(dt) Z``, decides from the Brownian bridge whether
    the origin was hit, and if so assigns the new excursion sign ``+`` with
    probability ``p``; the drift ``-sigma(x) / 2`` is added afterwards. Given a
    hit, the local time increment is drawn exactly from the bridge law. The
    same uniform drives the hit test, the sign and the local time, so a step
    consumes one normal and one uniform.

Paths are simulated in fixed-size chunks. Chunk ``c`` draws from a PCG64DXSM
generator seeded with ``SeedSequence(seed, spawn_key=(c,))``, so results do
not depend on the number of workers. Normals and uniforms are drawn in single
precision (uniforms shifted by half a unit so they are never 0); the path
arithmetic is double precision.
"""

from __future__ import annotations

import enum
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numba
import numpy as np
from scipy import stats

from .density import local_time_tail, occupation_density, terminal_mass
from .errors import DomainError
from .model import ModelParams, OptionSpec, Side, s_of_x
from .parallel import worker_count
from .quadrature import QuadSpec, Singularity, integrate
from .specfun import phi

CHUNK_PATHS = 4096


class Scheme(enum.Enum):
    EULER_PRICE = "euler"
    SKEW_EULER = "skew-euler"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``n_steps`` is per year; a horizon ``T`` uses ``ceil(n_steps * T)`` steps.
    With ``antithetic`` the paths come in ``(Z, -Z)`` pairs sharing their
    uniforms, and an odd ``n_paths`` is rounded up to the next even number.
    """

    n_paths: int
    n_steps: int = 2000
    seed: int = 12345
    antithetic: bool = True
    scheme: Scheme = Scheme.SKEW_EULER
    workers: int | None = None

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise DomainError("n_paths must be at least 1")
        if int(self.n_steps) < 16:
            raise DomainError("n_steps must be at least 16 per year")
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError("seed must be a 64-bit unsigned integer")
        scheme = self.scheme if isinstance(self.scheme, Scheme) else Scheme(self.scheme)
        object.__setattr__(self, "scheme", scheme)

    def steps_for(self, T: float) -> int:
        return max(1, math.ceil(self.n_steps * T - 1e-9))

    @property
    def total_paths(self) -> int:
        if self.antithetic:
            return 2 * math.ceil(self.n_paths / 2)
        return int(self.n_paths)


@dataclass(frozen=True)
class FunctionalSample:
    x_T: float
    l_T: float
    tau: float
    tau0: float
    v: float


@dataclass
class FunctionalBatch:
    """Column arrays of :class:`FunctionalSample` records for one chunk."""

    x_T: np.ndarray
    l_T: np.ndarray
    tau: np.ndarray
    tau0: np.ndarray
    v: np.ndarray
    antithetic: bool = False
    x_obs: np.ndarray | None = None

    COLUMNS = ("x_T", "l_T", "tau", "tau0", "v")

    def __len__(self) -> int:
        return len(self.x_T)

    def records(self) -> Iterator[FunctionalSample]:
        for row in zip(self.x_T, self.l_T, self.tau, self.tau0, self.v):
            yield FunctionalSample(*(float(z) for z in row))


@numba.njit(cache=True, nogil=True)
def _euler_path(z, sgn, dt, sp, sm, obs_idx, obs_out):
    sq = math.sqrt(dt)
    eps = 0.5 * sq
    y = 0.0
    x = 0.0
    occ = 0.0
    tau = 0.0
    band = 0.0
    nxt = 0
    for j in range(z.shape[0]):
        if nxt < obs_idx.shape[0] and obs_idx[nxt] == j:
            obs_out[nxt] = x
            nxt += 1
        if abs(x) <= eps:
            band += dt
        sig = sp if y >= 0.0 else sm
        y_new = y + sig * sq * sgn * z[j] - 0.5 * sig * sig * dt
        x_new = y_new / sp if y_new >= 0.0 else y_new / sm
        if x >= 0.0 and x_new >= 0.0:
            occ += dt
        elif x < 0.0 and x_new < 0.0:
            pass
        else:
            ax = abs(x)
            frac = ax / (ax + abs(x_new)) if ax > 0.0 else 0.0
            tau = j * dt + frac * dt
            if x >= 0.0:
                occ += frac * dt
            else:
                occ += (1.0 - frac) * dt
        x = x_new
        y = y_new
    return x, band / (2.0 * eps), tau, occ


@numba.njit(cache=True, nogil=True)
def _skew_path(z, u, sgn, dt, sp, sm, p, obs_idx, obs_out):
    sq = math.sqrt(dt)
    q = 1.0 - p
    x = 0.0
    occ = 0.0
    tau = 0.0
    loc = 0.0
    nxt = 0
    for j in range(z.shape[0]):
        if nxt < obs_idx.shape[0] and obs_idx[nxt] == j:
            obs_out[nxt] = x
            nxt += 1
        a = abs(x)
        pos = x >= 0.0
        w = a + sq * sgn * z[j]
        b = abs(w)
        uj = u[j] + 2.0**-25
        if w < 0.0:
            hit_prob = 1.0
        else:
            e = 2.0 * a * w / dt
            # exp(-50) is below the smallest uniform the generator produces.
            hit_prob = math.exp(-e) if e < 50.0 else 0.0
        if uj < hit_prob:
            v = uj / hit_prob
            if v < p:
                new_pos = True
                v2 = v / p
            else:
                new_pos = False
                v2 = (v - p) / q
            if v2 < 1e-300:
                v2 = 1e-300
            c = a + b
            loc += math.sqrt(c * c - 2.0 * dt * math.log(v2)) - c
            frac = a / c if c > 0.0 else 0.0
            tau = j * dt + frac * dt
            if pos:
                occ += frac * dt
            if new_pos:
                occ += (1.0 - frac) * dt
        else:
            new_pos = pos
            if pos:
                occ += dt
        x = b if new_pos else -b
        x += (-0.5 * sp if x >= 0.0 else -0.5 * sm) * dt
        if (x >= 0.0) != new_pos:
            # The drift pushed a tiny excursion across the origin.
            tau = (j + 1) * dt
    return x, loc, tau, occ


@numba.njit(cache=True, nogil=True)
def _run_chunk(Z, U, antithetic, scheme, dt, sp, sm, p, obs_idx, out_obs, out_x, out_l, out_tau, out_occ):
    reps = 2 if antithetic else 1
    for i in range(Z.shape[0]):
        for r in range(reps):
            sgn = 1.0 if r == 0 else -1.0
            k = i * reps + r
            if scheme == 0:
                x, l, tau, occ = _euler_path(Z[i], sgn, dt, sp, sm, obs_idx, out_obs[k])
            else:
                x, l, tau, occ = _skew_path(Z[i], U[i], sgn, dt, sp, sm, p, obs_idx, out_obs[k])
            out_x[k] = x
            out_l[k] = l
            out_tau[k] = tau
            out_occ[k] = occ


def _chunk_layout(cfg: SimConfig) -> list[int]:
    """Number of stored paths in each chunk."""
    total = cfg.total_paths
    sizes = [CHUNK_PATHS] * (total // CHUNK_PATHS)
    if total % CHUNK_PATHS:
        sizes.append(total % CHUNK_PATHS)
    return sizes


def _simulate_chunk(
    index: int, size: int, params: ModelParams, T: float, cfg: SimConfig, observe: tuple[int, ...]
) -> FunctionalBatch:
    n = cfg.steps_for(T)
    dt = T / n
    rows = size // 2 if cfg.antithetic else size
    rng = np.random.Generator(np.random.PCG64DXSM(np.random.SeedSequence(int(cfg.seed), spawn_key=(index,))))
    Z = rng.standard_normal((rows, n), dtype=np.float32)
    if cfg.scheme is Scheme.SKEW_EULER:
        U = rng.random((rows, n), dtype=np.float32)
    else:
        U = np.empty((rows, 0), dtype=np.float32)
    obs_idx = np.asarray(observe, dtype=np.int64)
    obs = np.empty((size, len(observe)))
    out = [np.empty(size) for _ in range(4)]
    _run_chunk(
        Z,
        U,
        cfg.antithetic,
        0 if cfg.scheme is Scheme.EULER_PRICE else 1,
        dt,
        params.sigma_plus,
        params.sigma_minus,
        params.p,
        obs_idx,
        obs,
        *out,
    )
    x, l, tau, occ = out
    # Occupation of [0, inf) up to the last zero excludes a final positive excursion.
    v = np.where(x >= 0.0, occ - (T - tau), occ)
    v = np.clip(v, 0.0, tau)
    return FunctionalBatch(x, l, tau, np.zeros(size), v, antithetic=cfg.antithetic, x_obs=obs)


def _observation_steps(T: float, cfg: SimConfig, times: Sequence[float]) -> tuple[int, ...]:
    n = cfg.steps_for(T)
    steps = []
    for t in times:
        j = t / T * n
        if not (0 < t < T) or abs(j - round(j)) > 1e-9:
            raise DomainError(f"observation time {t} is not an interior grid point of [0, {T}]")
        steps.append(int(round(j)))
    if steps != sorted(steps) or len(set(steps)) != len(steps):
        raise DomainError("observation times must be increasing")
    return tuple(steps)


def simulate(
    params: ModelParams, T: float, cfg: SimConfig, observe: Sequence[float] = ()
) -> Iterator[FunctionalBatch]:
    """Simulate ``cfg.total_paths`` paths on ``[0, T]``, yielding one batch per chunk in order.

    ``observe`` lists interior grid times at which ``X`` is also recorded
    (``batch.x_obs``, one column per time).
    """
    if not (math.isfinite(T) and T > 0):
        raise DomainError(f"horizon must be positive, got {T}")
    steps = _observation_steps(T, cfg, observe)
    sizes = _chunk_layout(cfg)
    workers = min(worker_count(cfg.workers), len(sizes))
    if workers <= 1:
        for i, size in enumerate(sizes):
            yield _simulate_chunk(i, size, params, T, cfg, steps)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # Bounded look-ahead keeps memory flat while preserving chunk order.
        pending = []
        it = iter(enumerate(sizes))
        for i, size in it:
            pending.append(pool.submit(_simulate_chunk, i, size, params, T, cfg, steps))
            if len(pending) >= 2 * workers:
                break
        for i, size in it:
            yield pending.pop(0).result()
            pending.append(pool.submit(_simulate_chunk, i, size, params, T, cfg, steps))
        for fut in pending:
            yield fut.result()


def iter_samples(params: ModelParams, T: float, cfg: SimConfig) -> Iterator[FunctionalSample]:
    for batch in simulate(params, T, cfg):
        yield from batch.records()


def _pairwise_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    if len(parts) == 1:
        return parts[0]
    mid = len(parts) // 2
    return _pairwise_sum(parts[:mid]) + _pairwise_sum(parts[mid:])


def _payoffs(s: np.ndarray, specs: Sequence[OptionSpec]) -> np.ndarray:
    cols = []
    for spec in specs:
        if spec.side is Side.CALL:
            cols.append(np.maximum(s - spec.strike, 0.0))
        else:
            cols.append(np.maximum(spec.strike - s, 0.0))
    return np.stack(cols, axis=1)


def mc_prices(specs: Sequence[OptionSpec], params: ModelParams, cfg: SimConfig) -> list[tuple[float, float]]:
    """``(estimate, stderr)`` for several options from one set of paths.

    The paths run to the longest maturity; shorter maturities are read off the
    same paths and must fall on its time grid.
    """
    specs = list(specs)
    if not specs:
        return []
    T = max(s.maturity for s in specs)
    inner = sorted({s.maturity for s in specs if s.maturity < T})
    col = {t: i for i, t in enumerate(inner)}
    sums, sq, counts = [], [], []
    for batch in simulate(params, T, cfg, inner):
        parts = []
        for spec in specs:
            x = batch.x_T if spec.maturity == T else batch.x_obs[:, col[spec.maturity]]
            parts.append(_payoffs(s_of_x(x, params), [spec]))
        pay = np.concatenate(parts, axis=1)
        if batch.antithetic:
            pay = 0.5 * (pay[0::2] + pay[1::2])
        sums.append(pay.sum(axis=0))
        sq.append((pay * pay).sum(axis=0))
        counts.append(np.array([pay.shape[0]], dtype=float))
    n = float(_pairwise_sum(counts)[0])
    mean = _pairwise_sum(sums) / n
    var = np.maximum(_pairwise_sum(sq) / n - mean * mean, 0.0)
    err = np.sqrt(var / max(n - 1.0, 1.0))
    return [(float(m), float(e)) for m, e in zip(mean, err)]


def mc_price(spec: OptionSpec, params: ModelParams, cfg: SimConfig) -> tuple[float, float]:
    """``(estimate, stderr)`` of the option price."""
    return mc_prices([spec], params, cfg)[0]


def mc_mean(fn, params: ModelParams, T: float, cfg: SimConfig) -> tuple[float, float]:
    """Sample mean and stderr of ``fn(batch)`` (an array per path) over all paths."""
    total, total_sq, count = [], [], []
    for batch in simulate(params, T, cfg):
        vals = np.asarray(fn(batch), dtype=float)
        if batch.antithetic:
            vals = 0.5 * (vals[0::2] + vals[1::2])
        total.append(np.array([vals.sum()]))
        total_sq.append(np.array([(vals * vals).sum()]))
        count.append(np.array([float(vals.size)]))
    n = float(_pairwise_sum(count)[0])
    mean = float(_pairwise_sum(total)[0]) / n
    var = max(float(_pairwise_sum(total_sq)[0]) / n - mean * mean, 0.0)
    return mean, math.sqrt(var / max(n - 1.0, 1.0))


# ---------------------------------------------------------------------------
# Goodness of fit of simulated functionals against the analytic densities.

_GL_NODES = 96


@dataclass(frozen=True)
class Binning:
    """Interior bin edges; the outermost bins are open-ended.

    ``None`` picks defaults scaled by the horizon.
    """

    x_edges: tuple[float, ...] | None = None
    l_edges: tuple[float, ...] | None = None
    v_edges: tuple[float, ...] | None = None

    def resolved(self, T: float) -> "Binning":
        rt = math.sqrt(T)
        x = self.x_edges or tuple(rt * e for e in (-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0))
        l = self.l_edges or tuple(rt * e for e in (0.15, 0.3, 0.45, 0.6, 0.8, 1.0, 1.25, 1.6, 2.0))
        v = self.v_edges or tuple(T * k / 8.0 for k in range(1, 8))
        return Binning(tuple(x), tuple(l), tuple(v))


@dataclass(frozen=True)
class GofResult:
    name: str
    statistic: float
    dof: int
    p_value: float
    n_samples: int
    n_cells: int = field(default=0)

    def passed(self, threshold: float = 1e-3) -> bool:
        return self.p_value > threshold


def _sin2_rule(lo: float, hi: float, n: int = _GL_NODES):
    """Gauss-Legendre in theta for ``s = lo + (hi - lo)(1 - cos theta) / 2``.

    The map is smooth and cancels inverse-square-root behaviour at both ends.
    """
    g, w = np.polynomial.legendre.leggauss(n)
    theta = 0.5 * math.pi * (g + 1.0)
    s = lo + 0.5 * (hi - lo) * (1.0 - np.cos(theta))
    jac = 0.5 * (hi - lo) * np.sin(theta) * 0.5 * math.pi
    return s, w * jac


def _terminal_probs(T: float, params: ModelParams, edges: Sequence[float], spec: QuadSpec):
    """``P(X_T in bin)`` for the bins cut by ``edges`` (open at both ends)."""
    cuts = [-math.inf, *edges, math.inf]
    both = spec.with_singularities(Singularity.INV_SQRT, Singularity.INV_SQRT)
    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        f = lambda t, lo=lo, hi=hi: phi(t, params) * terminal_mass(T - t, params, lo, hi)
        out.append(integrate(f, 0.0, T, both)[0])
    return np.array(out)


def _local_time_table(T: float, params: ModelParams, levels: Sequence[float], n: int = _GL_NODES):
    """Nodes ``t`` and weights with ``Lambda[i, j] = int_0^t tail(level_j) e^{...} dv`` at node ``t_i``."""
    t, wt = _sin2_rule(0.0, T, n)
    g, w = np.polynomial.legendre.leggauss(n)
    theta = 0.5 * math.pi * (g + 1.0)
    frac = 0.5 * (1.0 - np.cos(theta))
    fjac = 0.5 * np.sin(theta) * 0.5 * math.pi * w
    sp2, sm2 = params.sigma_plus**2, params.sigma_minus**2
    lam = np.empty((t.size, len(levels)))
    for i, ti in enumerate(t):
        v = ti * frac
        u = ti - v
        weight = np.exp(-(sp2 * v + sm2 * u) / 8.0) * fjac * ti
        for j, lev in enumerate(levels):
            lam[i, j] = np.sum(local_time_tail(v, u, lev, params) * weight)
    return t, wt, lam


def _cell_probabilities(T, params, x_edges, l_edges):
    """Joint bin probabilities of ``(X_T, L_T)`` from the joint density.

    Returns an array of shape ``(len(x_edges) + 1, len(l_edges) + 1)``.
    """
    levels = [0.0, *l_edges]
    t, wt, lam = _local_time_table(T, params, levels)
    # Local time mass in [l_j, l_{j+1}), last bin open.
    lam_bins = np.concatenate([lam[:, :-1] - lam[:, 1:], lam[:, -1:]], axis=1)
    cuts = [-math.inf, *x_edges, math.inf]
    probs = np.empty((len(cuts) - 1, lam_bins.shape[1]))
    for a, (lo, hi) in enumerate(zip(cuts[:-1], cuts[1:])):
        tm = terminal_mass(T - t, params, lo, hi)
        probs[a] = (wt * tm) @ lam_bins
    return probs


def _occupation_probs(T, params, edges, spec):
    cuts = [0.0, *edges, T]
    out = []
    for k, (lo, hi) in enumerate(zip(cuts[:-1], cuts[1:])):
        left = Singularity.INV_SQRT if k == 0 else Singularity.NONE
        sub = spec.with_singularities(left, Singularity.NONE)
        out.append(integrate(lambda v: occupation_density(v, T, params), lo, hi, sub)[0])
    return np.array(out)


def _merge_cells(expected: np.ndarray, observed: np.ndarray, min_expected: float = 5.0):
    """Greedily merge consecutive cells until every merged cell expects >= ``min_expected``."""
    e_out, o_out = [], []
    e_acc = o_acc = 0.0
    for e, o in zip(expected, observed):
        e_acc += e
        o_acc += o
        if e_acc >= min_expected:
            e_out.append(e_acc)
            o_out.append(o_acc)
            e_acc = o_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if e_out:
            e_out[-1] += e_acc
            o_out[-1] += o_acc
        else:
            e_out.append(e_acc)
            o_out.append(o_acc)
    return np.array(e_out), np.array(o_out)


def chi_square(name: str, probs: np.ndarray, observed: np.ndarray) -> GofResult:
    probs = np.asarray(probs, dtype=float).ravel()
    observed = np.asarray(observed, dtype=float).ravel()
    n = float(observed.sum())
    probs = probs / probs.sum()
    e, o = _merge_cells(n * probs, observed)
    stat = float(np.sum((o - e) ** 2 / e))
    dof = max(len(e) - 1, 1)
    return GofResult(name, stat, dof, float(stats.chi2.sf(stat, dof)), int(n), len(e))


def _counts(values: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    idx = np.searchsorted(np.asarray(edges), values, side="right")
    return np.bincount(idx, minlength=len(edges) + 1)


def functional_gof(
    params: ModelParams,
    T: float,
    cfg: SimConfig,
    binning: Binning = Binning(),
    spec: QuadSpec = QuadSpec(1e-9, 1e-14),
) -> list[GofResult]:
    """Chi-square tests of simulated ``X_T``, ``L_T``, ``V`` and ``(X_T, L_T)`` against the densities.

    Antithetic partners are correlated, so only the first path of each pair
    enters the counts.
    """
    if cfg.n_paths < 100_000:
        raise DomainError("functional_gof needs at least 1e5 paths")
    b = binning.resolved(T)
    x_counts = np.zeros(len(b.x_edges) + 1)
    l_counts = np.zeros(len(b.l_edges) + 1)
    v_counts = np.zeros(len(b.v_edges) + 1)
    pair = np.zeros((len(b.x_edges) + 1, len(b.l_edges) + 1))
    for batch in simulate(params, T, cfg):
        step = 2 if batch.antithetic else 1
        x, l, v = batch.x_T[::step], batch.l_T[::step], batch.v[::step]
        x_counts += _counts(x, b.x_edges)
        l_counts += _counts(l, b.l_edges)
        v_counts += _counts(v, b.v_edges)
        xi = np.searchsorted(np.asarray(b.x_edges), x, side="right")
        li = np.searchsorted(np.asarray(b.l_edges), l, side="right")
        np.add.at(pair, (xi, li), 1.0)

    cells = _cell_probabilities(T, params, b.x_edges, b.l_edges)
    return [
        chi_square("X_T", _terminal_probs(T, params, b.x_edges, spec), x_counts),
        chi_square("L_T", cells.sum(axis=0), l_counts),
        chi_square("V", _occupation_probs(T, params, b.v_edges, spec), v_counts),
        chi_square("X_T,L_T", cells, pair),
    ]


# ---------------------------------------------------------------------------
# Raw sample dump.

DUMP_MAGIC = b"SKVLFS"
DUMP_SCHEMA = 1
_HEADER = struct.Struct("<6sHQI")


def write_samples(path: str | Path, batches) -> int:
    """Write batches as a little-endian float64 column file; returns the record count.

    Layout: header ``(magic, schema version u16, count u64, n_columns u32)``
    followed by each column of ``count`` doubles in the order of
    :attr:`FunctionalBatch.COLUMNS`.
    """
    batches = list(batches)
    cols = [np.concatenate([getattr(bt, c) for bt in batches]) if batches else np.empty(0)
            for c in FunctionalBatch.COLUMNS]
    count = len(cols[0])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, DUMP_SCHEMA, count, len(cols)))
        for c in cols:
            fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())
    return count


def read_samples(path: str | Path) -> FunctionalBatch:
    with open(path, "rb") as fh:
        magic, schema, count, ncol = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != DUMP_MAGIC:
            raise DomainError("not a functional sample dump")
        if schema != DUMP_SCHEMA or ncol != len(FunctionalBatch.COLUMNS):
            raise DomainError(f"unsupported dump schema {schema} with {ncol} columns")
        cols = [np.frombuffer(fh.read(8 * count), dtype="<f8").astype(float) for _ in range(ncol)]
    return FunctionalBatch(*cols)
