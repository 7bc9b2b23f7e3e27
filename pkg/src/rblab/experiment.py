"""Replicated Monte Carlo campaigns and their aggregation."""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DegenerateSample,
    EmptyCell,
    InsufficientPoints,
    RangeError,
    RblabError,
)
from .estimators import RateConstants, estimate_all
from .noise import FbmSpec, RosenblattSpec
from .paths import SamplePath, fmt17
from .sde import ModelSpec, downsample, euler_maruyama, simulate_noise

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# estimator set name -> reported quantities
REPORTED = {
    "diffusion": ("h_hat", "sigma_hat"),
    "lambda_known": ("lambda_known",),
    "lambda_plugin": ("lambda_plugin",),
}


def seed_for_replication(master: int, index: int) -> int:
    """Split-mix finalizer of ``master + (index + 1) * golden``."""
    z = (int(master) + (int(index) + 1) * GOLDEN) & MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


def replication_seeds(master: int, count: int) -> list:
    seeds = [seed_for_replication(master, i) for i in range(count)]
    if len(set(seeds)) != len(seeds):
        raise RangeError("replication seeds collide; choose another master seed")
    return seeds


# -- workers ----------------------------------------------------------------


def resolve_workers(threads: int | None) -> int:
    """``0`` or ``None`` means one worker per available CPU."""
    if threads is None or threads == 0:
        return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
    if threads < 0:
        raise RangeError("threads must be nonnegative")
    return int(threads)


def parallel_map(fn, items: Sequence, workers: int = 1) -> list:
    """Ordered map; results do not depend on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# -- noise cache ------------------------------------------------------------


def _spec_key(spec) -> str:
    return hashlib.sha256(repr(spec).encode()).hexdigest()[:32]


def cached_noise(spec, cache_dir=None) -> SamplePath:
    """Noise path for ``spec``, optionally memoized on disk.

    Synthesis is a pure function of the spec, so the cache never changes a
    result; it only saves time when ensembles are reused.
    """
    if cache_dir is None:
        return simulate_noise(spec)
    d = Path(cache_dir)
    f = d / f"{_spec_key(spec)}.npy"
    if f.exists():
        return SamplePath(np.load(f))
    path = simulate_noise(spec)
    d.mkdir(parents=True, exist_ok=True)
    tmp = f.with_suffix(f".{os.getpid()}.tmp.npy")
    np.save(tmp, path.values)
    os.replace(tmp, f)
    return path


# -- campaign ---------------------------------------------------------------


@dataclass(frozen=True)
class Campaign:
    """Resolved campaign: the model template and everything the workers need."""

    model: ModelSpec
    obs_sizes: tuple
    replications: int
    master_seed: int
    estimators: tuple
    rates: RateConstants
    h: float
    sigma: float
    lam: float

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.obs_sizes)
        if not sizes or any(n < 4 or n % 2 for n in sizes):
            raise RangeError("observation sizes must be even integers >= 4")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise RangeError("observation sizes must be strictly increasing")
        self.model.check_obs_sizes(sizes)
        object.__setattr__(self, "obs_sizes", sizes)
        if self.replications < 1:
            raise RangeError("replications must be positive")
        bad = set(self.estimators) - set(REPORTED)
        if bad:
            raise RangeError(f"unknown estimators {sorted(bad)}")

    def truth(self) -> dict:
        return {"h_hat": self.h, "sigma_hat": self.sigma, "lambda_known": self.lam, "lambda_plugin": self.lam}

    def quantities(self) -> list:
        return [q for e in ("diffusion", "lambda_known", "lambda_plugin") if e in self.estimators for q in REPORTED[e]]


@dataclass(frozen=True)
class Row:
    index: int
    seed: int
    n: int
    estimator: str
    estimate: float
    truth: float
    error_tag: str = ""

    @property
    def ok(self) -> bool:
        return not self.error_tag


@dataclass
class ReplicationResult:
    index: int
    seed: int
    rows: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)


def _noise_with_seed(spec, seed: int):
    return replace(spec, seed=seed)


def run_replication(campaign: Campaign, index: int, cache_dir=None) -> ReplicationResult:
    seed = seed_for_replication(campaign.master_seed, index)
    res = ReplicationResult(index, seed)
    truth = campaign.truth()
    quantities = campaign.quantities()

    def fail_all(n, names, err):
        for q in names:
            res.rows.append(Row(index, seed, n, q, math.nan, truth[q], type(err).__name__))

    try:
        model = replace(campaign.model, noise=_noise_with_seed(campaign.model.noise, seed))
        noise = cached_noise(model.noise, cache_dir)
        sol = euler_maruyama(model, noise)
    except RblabError as err:
        for n in campaign.obs_sizes:
            fail_all(n, quantities, err)
        return res
    for n in campaign.obs_sizes:
        obs = downsample(sol.path, n)
        for est in ("diffusion", "lambda_known", "lambda_plugin"):
            if est not in campaign.estimators:
                continue
            try:
                rep = estimate_all(
                    obs, model.drift, [est], campaign.rates, h=campaign.h, sigma=campaign.sigma
                )
            except RblabError as err:
                fail_all(n, REPORTED[est], err)
                continue
            values = rep.estimates()
            for q in REPORTED[est]:
                v = values[q]
                tag = "" if math.isfinite(v) else "NonFinite"
                res.rows.append(Row(index, seed, n, q, v, truth[q], tag))
    return res


class _Job:
    def __init__(self, campaign, cache_dir):
        self.campaign, self.cache_dir = campaign, cache_dir

    def __call__(self, index):
        return run_replication(self.campaign, index, self.cache_dir)


def run_experiment(campaign: Campaign, workers: int = 1, cache_dir=None) -> list:
    """All replications, ordered by index whatever the worker count."""
    replication_seeds(campaign.master_seed, campaign.replications)
    out = parallel_map(_Job(campaign, cache_dir), range(campaign.replications), workers)
    return sorted(out, key=lambda r: r.index)


def all_rows(results: Iterable[ReplicationResult]) -> list:
    return [row for r in sorted(results, key=lambda r: r.index) for row in r.rows]


# -- aggregation ------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    estimator: str
    n: int
    count: int
    failed: int
    rmse: float
    bias: float
    median: float
    q1: float
    q3: float
    skewness: float
    truth: float


SUMMARY_FIELDS = ("estimator", "n", "count", "failed", "rmse", "bias", "median", "q1", "q3", "skewness", "truth")


def summarize_values(values, truth: float) -> dict:
    """Population-style moments and type-7 quartiles of one cell."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size < 2:
        raise EmptyCell(f"need at least 2 successful replications, got {x.size}")
    err = x - truth
    bias = float(np.mean(err))
    rmse = float(np.sqrt(np.mean(err * err)))
    m2 = float(np.mean((x - x.mean()) ** 2))
    skew = 0.0 if m2 <= 1e-300 * max(1.0, float(x.mean()) ** 2) else float(stats.skew(x, bias=True))
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return dict(rmse=rmse, bias=bias, median=float(med), q1=float(q1), q3=float(q3), skewness=skew)


def summarize(rows: Iterable[Row]) -> list:
    """One :class:`Cell` per (estimator, N), sorted; order of ``rows`` is irrelevant."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row.estimator, row.n), []).append(row)
    cells = []
    for (est, n), grp in sorted(groups.items()):
        ok = sorted(r.estimate for r in grp if r.ok)
        truth = grp[0].truth
        s = summarize_values(ok, truth)
        cells.append(Cell(est, n, len(ok), len(grp) - len(ok), truth=truth, **s))
    return cells


def fit_loglog_slope(cells: Sequence[Cell], estimator: str, metric: str = "rmse") -> float:
    pts = [(c.n, getattr(c, metric)) for c in cells if c.estimator == estimator]
    pts = [(n, v) for n, v in pts if v > 0 and math.isfinite(v)]
    if len(pts) < 3:
        raise InsufficientPoints(f"need >= 3 positive {metric} values for {estimator}")
    ln = np.log([p[0] for p in pts])
    lv = np.log([p[1] for p in pts])
    return float(np.polyfit(ln, lv, 1)[0])


def qq_data(values, min_points: int = 20) -> list:
    """Standard normal quantiles at ``(i - 0.5)/R`` against standardized order statistics."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size < min_points:
        raise InsufficientPoints(f"Q-Q data needs >= {min_points} values, got {x.size}")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise DegenerateSample("sample standard deviation is zero")
    z = (x - x.mean()) / sd
    theo = stats.norm.ppf((np.arange(1, x.size + 1) - 0.5) / x.size)
    return list(zip(theo.tolist(), z.tolist()))


def qq_for(rows: Iterable[Row], estimator: str, n: int) -> list:
    return qq_data([r.estimate for r in rows if r.ok and r.estimator == estimator and r.n == n])


# -- persistence ------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt17(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def replications_csv(rows: Sequence[Row]) -> str:
    return _csv(
        ("index", "seed", "N", "estimator", "estimate", "truth", "error_tag"),
        [(r.index, r.seed, r.n, r.estimator, r.estimate, r.truth, r.error_tag) for r in rows],
    )


def summary_csv(cells: Sequence[Cell]) -> str:
    return _csv(SUMMARY_FIELDS, [[getattr(c, f) for f in SUMMARY_FIELDS] for c in cells])


def slopes_csv(cells: Sequence[Cell]) -> str:
    out = []
    for est in sorted({c.estimator for c in cells}):
        try:
            out.append((est, "rmse", fit_loglog_slope(cells, est), ""))
        except RblabError as err:
            out.append((est, "rmse", math.nan, type(err).__name__))
    return _csv(("estimator", "metric", "slope", "error_tag"), out)


_QUANTITY_ORDER = {q: i for i, q in enumerate(q for e in REPORTED.values() for q in e)}


def _row_key(r: Row):
    return (r.index, r.n, _QUANTITY_ORDER.get(r.estimator, len(_QUANTITY_ORDER)), r.estimator)


def write_campaign(directory, rows: Sequence[Row]) -> list:
    """Write the CSV outputs into ``directory``; returns the summary cells."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows, key=_row_key)
    (d / "replications.csv").write_text(replications_csv(rows), encoding="utf-8")
    cells = []
    groups = {}
    for r in rows:
        groups.setdefault((r.estimator, r.n), []).append(r)
    for key in sorted(groups):
        try:
            cells.extend(summarize(groups[key]))
        except EmptyCell:
            pass
    (d / "summary.csv").write_text(summary_csv(cells), encoding="utf-8")
    (d / "slopes.csv").write_text(slopes_csv(cells), encoding="utf-8")
    for est, n in sorted(groups):
        try:
            pairs = qq_for(rows, est, n)
        except RblabError:
            continue
        (d / f"qq_{est}_{n}.csv").write_text(_csv(("theoretical", "sample"), pairs), encoding="utf-8")
    return cells
