"""2-variation statistics and the diffusion and drift estimators.

Notation: a path holds ``X(i/N)``, ``i = 0..N``.  The normalization
``N^(1-H) / (4 d(H))`` turns the 2-variation into an estimate of ``Z(1)``;
``d(H)`` comes from a :class:`RateConstants` instance.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDiffusion,
    DegeneratePath,
    DegenerateRegressor,
    IncompatibleGrid,
    InsufficientResolution,
    MissingCalibration,
    OddSampleSize,
    RangeError,
)
from .jsonio import dumps17
from .paths import SamplePath, validate_hurst
from .sde import DriftPoly, drift_eval

INTERVALS = ("first-half", "second-half", "full")
SIGMA_FLOOR = 1e-8
H_CLAMP = (0.501, 0.999)
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class TwoVariationStats:
    v_n: float
    sum_sq: float
    n: int


@dataclass(frozen=True)
class DiffusionEstimate:
    h_hat: float
    sigma_hat: float
    n: int
    sum_sq_full: float
    sum_sq_half: float


@dataclass(frozen=True)
class DecelerationParams:
    n: int
    delta: float
    k: int
    h_n: float
    n_n: int


@dataclass(frozen=True)
class DriftEstimate:
    lambda_hat: float
    regressor: tuple
    response: tuple
    mode: str
    details: dict = field(default_factory=dict)


def _require_even(n: int) -> None:
    if n % 2:
        raise OddSampleSize(f"N must be even, got {n}")


def _sq_increments(path: SamplePath) -> np.ndarray:
    d = path.increments
    return d * d


def _sigma_sq(sigma: float) -> float:
    s2 = float(sigma) * float(sigma)
    if not (s2 > 0 and math.isfinite(s2)):
        raise RangeError(f"sigma={sigma!r} is not positive or its square is not representable")
    return s2


# -- rates ------------------------------------------------------------------


def _dec(h: float) -> Fraction:
    # the decimal value the caller wrote, so 0.6 gives 2(1 - 3/5) = 4/5 exactly
    return Fraction(repr(validate_hurst(h)))


def delta_opt(h: float) -> float:
    """Optimal deceleration exponent."""
    q = _dec(h)
    return float(2 * (1 - q)) if q <= Fraction(3, 4) else 0.5


def rate_a_opt(h: float) -> float:
    """Supremum of the admissible rates of the plug-in drift estimator."""
    q = _dec(h)
    return float(2 * (1 - q) * (q - Fraction(1, 2))) if q <= Fraction(3, 4) else float((1 - q) / 2)


def alpha_bound(h: float) -> float:
    """Supremum of the almost-sure rates of the normalized 2-variation."""
    q = _dec(h)
    return float(q - Fraction(1, 2)) if q <= Fraction(3, 4) else float(1 - q)


@dataclass(frozen=True)
class RateConstants:
    """Source of ``d(H)``.

    Precedence: ``d_override``, then ``closed_form``, then ``table``.  The
    table holds ``(h, d)`` pairs and is interpolated linearly; outside its
    range the nearest entry is used when it lies within ``tolerance``.
    """

    d_override: float | None = None
    table: tuple = ()
    tolerance: float = 0.1
    closed_form: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.d_override is not None and not self.d_override > 0:
            raise RangeError("d(H) override must be positive")
        rows = tuple(sorted((float(a), float(b)) for a, b in self.table))
        if any(d <= 0 for _, d in rows):
            raise RangeError("d(H) table values must be positive")
        if len({a for a, _ in rows}) != len(rows):
            raise RangeError("d(H) table has repeated H values")
        object.__setattr__(self, "table", rows)

    @property
    def source(self) -> str:
        if self.d_override is not None:
            return "override"
        if self.closed_form is not None:
            return "closed-form"
        if self.table:
            return "table"
        return "none"

    def alpha_bound(self, h: float) -> float:
        return alpha_bound(h)

    def a_opt(self, h: float) -> float:
        return rate_a_opt(h)

    def delta_opt(self, h: float) -> float:
        return delta_opt(h)


def d_of_h(h: float, config: RateConstants) -> float:
    h = validate_hurst(h)
    if config.d_override is not None:
        return float(config.d_override)
    if config.closed_form is not None:
        d = float(config.closed_form(h))
        if not d > 0:
            raise RangeError(f"closed-form d({h}) is not positive")
        return d
    if not config.table:
        raise MissingCalibration("no d(H) override, closed form or calibration table")
    hs = np.array([a for a, _ in config.table])
    ds = np.array([b for _, b in config.table])
    if hs[0] <= h <= hs[-1]:
        return float(np.interp(h, hs, ds))
    j = 0 if h < hs[0] else -1
    if abs(h - hs[j]) <= config.tolerance:
        return float(ds[j])
    raise MissingCalibration(
        f"d(H) is calibrated on [{hs[0]}, {hs[-1]}] (tolerance {config.tolerance}), not at H={h}"
    )


# -- 2-variations -----------------------------------------------------------


def two_variation(path: SamplePath, h: float) -> TwoVariationStats:
    h = validate_hurst(h)
    n = path.n_steps
    sq = _sq_increments(path)
    v = float(np.mean(sq * float(n) ** (2 * h) - 1.0))
    return TwoVariationStats(v_n=v, sum_sq=float(sq.sum()), n=n)


def log_two_variation(path: SamplePath, h: float, sigma: float) -> float:
    h = validate_hurst(h)
    if not sigma > 0:
        raise RangeError("sigma must be positive")
    s2 = _sigma_sq(sigma)
    n = path.n_steps
    s = float(_sq_increments(path).sum())
    if not s > 0:
        raise DegeneratePath("all increments are zero")
    return math.log(s / n / (s2 * float(n) ** (-2 * h)))


def _log_sum_sq(values: np.ndarray) -> float:
    s = float(np.sum(np.diff(values) ** 2))
    if not s > 0:
        raise DegeneratePath("sum of squared increments is zero")
    return s


def estimate_diffusion(path: SamplePath) -> DiffusionEstimate:
    """Joint least-squares estimates of ``H`` and ``sigma`` from ``S_N`` and ``S_{N/2}``."""
    n = path.n_steps
    _require_even(n)
    if n < 4:
        raise OddSampleSize("estimate_diffusion needs N >= 4")
    s_full = _log_sum_sq(path.values)
    s_half = _log_sum_sq(path.values[::2])
    # the closed forms rearranged around r = log(S_{N/2} / S_N), which avoids
    # cancelling two large logarithms
    r = math.log(s_half / s_full) / (2 * LOG2)
    h_hat = r + 0.5
    log_sigma = 0.5 * math.log(s_full) + math.log(n) * r
    return DiffusionEstimate(h_hat, math.exp(log_sigma), n, s_full, s_half)


def _norm(n_inv_h: float, h: float, d_h: float) -> float:
    # (1/step)^(1-H) / (4 d)
    return n_inv_h ** (1 - h) / (4 * d_h)


def w_statistic(
    path: SamplePath, interval: str, h: float, sigma: float, d_h: float
) -> float:
    """Normalized partial 2-variation over a half or the whole of [0, 1]."""
    h = validate_hurst(h)
    if interval not in INTERVALS:
        raise RangeError(f"interval must be one of {INTERVALS}")
    if not sigma > 0 or not d_h > 0:
        raise RangeError("sigma and d(H) must be positive")
    s2 = _sigma_sq(sigma)
    n = path.n_steps
    _require_even(n)
    terms = _sq_increments(path) * (float(n) ** (2 * h) / s2) - 1.0
    half = n // 2
    norm = _norm(n, h, d_h)
    first = norm * float(terms[:half].sum()) / n
    second = norm * float(terms[half:].sum()) / n
    # the full statistic is the sum of the halves, so additivity is exact
    return {"first-half": first, "second-half": second, "full": first + second}[interval]


def riemann_drift_sums(path: SamplePath, drift: DriftPoly) -> tuple:
    """Right-node Riemann sums of ``f(X)`` over [0, 1/2] and [1/2, 1]."""
    n = path.n_steps
    _require_even(n)
    f = drift_eval(drift, path.values[1:])
    half = n // 2
    return (float(f[:half].sum()) / n, float(f[half:].sum()) / n)


def _least_squares(z, u, mode: str, details: dict) -> DriftEstimate:
    z = tuple(float(v) for v in z)
    u = tuple(float(v) for v in u)
    zz = z[0] * z[0] + z[1] * z[1]
    if not zz > 0 or not math.isfinite(zz):
        raise DegenerateRegressor("regressor is the zero vector")
    zu = z[0] * u[0] + z[1] * u[1]
    return DriftEstimate(zu / zz, z, u, mode, details)


def estimate_lambda_known(
    path: SamplePath, drift: DriftPoly, h: float, sigma: float, d_h: float
) -> DriftEstimate:
    """Least-squares drift estimate with ``H``, ``sigma`` and ``d(H)`` known."""
    n = path.n_steps
    _require_even(n)
    x = path.values
    half = n // 2
    if sigma > 0:
        w1 = w_statistic(path, "first-half", h, sigma, d_h)
        w2 = w_statistic(path, "second-half", h, sigma, d_h)
    else:
        # the sigma * W product vanishes with sigma
        validate_hurst(h)
        w1 = w2 = 0.0
    u = (x[half] - x[0] - sigma * w1, x[n] - x[half] - sigma * w2)
    z = riemann_drift_sums(path, drift)
    return _least_squares(z, u, "known-parameters", {"n": n, "w": [w1, w2], "d_h": d_h})


# -- deceleration -----------------------------------------------------------


def deceleration_params(n: int, delta: float) -> DecelerationParams:
    """``k = floor(N / N^delta)``, ``h_N = k / N``, ``n_N = floor(1 / h_N)``."""
    n = int(n)
    if n < 1:
        raise RangeError("N must be positive")
    delta = float(delta)
    if not 0 < delta < 1:
        raise RangeError("delta must lie in (0, 1)")
    ratio = n / float(n) ** delta
    k = math.floor(ratio)
    # N^delta is computed in floating point; snap ratios within rounding of an integer
    near = round(ratio)
    if near != k and abs(ratio - near) <= 1e-9 * ratio:
        k = near
    k = max(k, 1)
    n_n = n // k
    if n_n < 4:
        raise InsufficientResolution(f"N={n}, delta={delta} leaves only {n_n} decelerated steps")
    return DecelerationParams(n=n, delta=delta, k=k, h_n=k / n, n_n=n_n)


def _decelerated_points(values: np.ndarray, interval: str, params: DecelerationParams):
    n, k = params.n, params.k
    if interval == "full":
        return values[: params.n_n * k + 1 : k]
    half = n // 2
    j = half // k
    if j < 1:
        raise InsufficientResolution("decelerated step exceeds half the interval")
    start = 0 if interval == "first-half" else half
    return values[start : start + j * k + 1 : k]


def decelerated_w(
    path: SamplePath,
    interval: str,
    params: DecelerationParams,
    h_used: float,
    sigma_used: float,
    d_h: float,
    form: str = "plain",
) -> float:
    """2-variation on the subsampled grid ``X(i h_N)``.

    ``form="log"`` is the logarithmic statistic on the whole interval.
    ``form="plain"`` mirrors :func:`w_statistic`; on the halves the grid is
    anchored at 0 and at 1/2 respectively.
    """
    h_used = validate_hurst(h_used)
    if interval not in INTERVALS:
        raise RangeError(f"interval must be one of {INTERVALS}")
    if form not in ("plain", "log"):
        raise RangeError("form must be 'plain' or 'log'")
    if not sigma_used > 0 or not d_h > 0:
        raise RangeError("sigma and d(H) must be positive")
    if path.n_steps != params.n:
        raise IncompatibleGrid(
            f"deceleration built for N={params.n}, path has {path.n_steps} steps"
        )
    if form == "log" and interval != "full":
        raise RangeError("the logarithmic form is only defined on the full interval")
    if interval != "full":
        _require_even(params.n)
    s2 = _sigma_sq(sigma_used)
    pts = _decelerated_points(path.values, interval, params)
    sq = np.diff(pts) ** 2
    n, k = float(params.n), params.k
    per_unit = n / k  # 1 / h_N
    norm = _norm(per_unit, h_used, d_h)
    if form == "log":
        s = float(sq.sum())
        if not s > 0:
            raise DegeneratePath("decelerated increments are all zero")
        # same operation order as log_two_variation, so k = 1 reproduces it exactly
        return norm * math.log(s * k / n / (s2 * per_unit ** (-2 * h_used)))
    scale = 1.0 / (s2 * params.h_n ** (2 * h_used))
    return norm * params.h_n * float(np.sum(sq * scale - 1.0))


def estimate_lambda_plugin(
    path: SamplePath,
    drift: DriftPoly,
    d_h_fn: Callable[[float], float],
    sigma_floor: float = SIGMA_FLOOR,
) -> DriftEstimate:
    """Plug-in drift estimate with estimated ``(H, sigma)`` and optimal deceleration."""
    n = path.n_steps
    _require_even(n)
    diff = estimate_diffusion(path)
    if not diff.sigma_hat >= sigma_floor:
        raise DegenerateDiffusion(f"sigma_hat={diff.sigma_hat:.3g} below floor {sigma_floor:g}")
    h_used = min(max(diff.h_hat, H_CLAMP[0]), H_CLAMP[1])
    delta = delta_opt(h_used)
    params = deceleration_params(n, delta)
    d_h = float(d_h_fn(h_used))
    s = diff.sigma_hat
    w1 = decelerated_w(path, "first-half", params, h_used, s, d_h, "plain")
    w2 = decelerated_w(path, "second-half", params, h_used, s, d_h, "plain")
    x = path.values
    half = n // 2
    u = (x[half] - x[0] - s * w1, x[n] - x[half] - s * w2)
    p1 = _decelerated_points(x, "first-half", params)
    p2 = _decelerated_points(x, "second-half", params)
    z = (
        params.h_n * float(drift_eval(drift, p1[1:]).sum()),
        params.h_n * float(drift_eval(drift, p2[1:]).sum()),
    )
    details = {
        "n": n,
        "h_hat": diff.h_hat,
        "sigma_hat": diff.sigma_hat,
        "h_used": h_used,
        "delta": delta,
        "k": params.k,
        "h_n": params.h_n,
        "n_n": params.n_n,
        "d_h": d_h,
        "w": [w1, w2],
    }
    return _least_squares(z, u, "plug-in", details)


# -- reports ----------------------------------------------------------------


@dataclass
class EstimationReport:
    n: int
    d_h_source: str
    diffusion: DiffusionEstimate | None = None
    lambda_known: DriftEstimate | None = None
    lambda_plugin: DriftEstimate | None = None
    inputs: dict = field(default_factory=dict)

    def estimates(self) -> dict:
        out = {}
        if self.diffusion is not None:
            out["h_hat"] = self.diffusion.h_hat
            out["sigma_hat"] = self.diffusion.sigma_hat
        if self.lambda_known is not None:
            out["lambda_known"] = self.lambda_known.lambda_hat
        if self.lambda_plugin is not None:
            out["lambda_plugin"] = self.lambda_plugin.lambda_hat
        return out

    def to_dict(self) -> dict:
        body = {
            "inputs": {"n": self.n, "interval_scheme": "halves", "d_h_source": self.d_h_source, **self.inputs},
            "estimates": self.estimates(),
        }
        stats = {}
        if self.diffusion is not None:
            stats["diffusion"] = asdict(self.diffusion)
        for name in ("lambda_known", "lambda_plugin"):
            est = getattr(self, name)
            if est is not None:
                stats[name] = asdict(est)
        body["statistics"] = stats
        return body

    def to_json(self) -> str:
        return dumps17(self.to_dict())


def estimate_all(
    path: SamplePath,
    drift: DriftPoly | None,
    estimators,
    rates: RateConstants,
    h: float | None = None,
    sigma: float | None = None,
) -> EstimationReport:
    """Run the requested estimators on one observed path.

    ``lambda_known`` needs the true ``h`` and ``sigma``.
    """
    estimators = set(estimators)
    unknown = estimators - {"diffusion", "lambda_known", "lambda_plugin"}
    if unknown:
        raise RangeError(f"unknown estimators {sorted(unknown)}")
    report = EstimationReport(n=path.n_steps, d_h_source=rates.source)
    if "diffusion" in estimators:
        report.diffusion = estimate_diffusion(path)
    if "lambda_known" in estimators:
        if h is None or sigma is None or drift is None:
            raise RangeError("lambda_known needs drift, h and sigma")
        report.lambda_known = estimate_lambda_known(path, drift, h, sigma, d_of_h(h, rates))
        report.inputs.update(h=h, sigma=sigma)
    if "lambda_plugin" in estimators:
        if drift is None:
            raise RangeError("lambda_plugin needs a drift")
        report.lambda_plugin = estimate_lambda_plugin(path, drift, lambda x: d_of_h(x, rates))
    return report
