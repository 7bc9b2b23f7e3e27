"""Monte Carlo calibration of the constant ``d(H)``.

Along one Rosenblatt path ``N^(1-H) V_N / (4 d(H))`` converges to ``Z(1)``,
so ``N^(1-H) V_N / (4 Z(1))`` converges to ``d(H)``.  The median over
replications is robust to paths with ``Z(1)`` near zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RangeError
from .estimators import RateConstants, two_variation
from .experiment import cached_noise, parallel_map, replication_seeds
from .noise import DEFAULT_SCHEME, RosenblattSpec
from .paths import validate_hurst
from .sde import downsample

DEFAULT_CALIBRATION_SEED = 0xD0C0FFEE


@dataclass(frozen=True)
class CalibrationResult:
    h: float
    d: float
    d_by_n: dict
    replications: int
    inner_resolution: int
    master_seed: int

    @property
    def stability(self) -> float:
        """Relative spread of the estimates across resolutions."""
        v = list(self.d_by_n.values())
        return (max(v) - min(v)) / self.d

    def rates(self, tolerance: float = 0.25) -> RateConstants:
        return RateConstants(table=((self.h, self.d),), tolerance=tolerance)

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "d": self.d,
            "d_by_n": {str(k): v for k, v in self.d_by_n.items()},
            "stability": self.stability,
            "replications": self.replications,
            "inner_resolution": self.inner_resolution,
            "master_seed": self.master_seed,
        }


class _Ratios:
    def __init__(self, h, n_values, m, scheme, completion, cache_dir):
        self.h, self.n_values, self.m = h, n_values, m
        self.scheme, self.completion, self.cache_dir = scheme, completion, cache_dir

    def __call__(self, seed):
        top = max(self.n_values)
        spec = RosenblattSpec(self.h, top, self.m, seed, self.scheme, self.completion)
        path = cached_noise(spec, self.cache_dir)
        z1 = path.values[-1]
        out = []
        for n in self.n_values:
            v = two_variation(downsample(path, n), self.h).v_n
            out.append(n ** (1 - self.h) * v / (4 * z1) if z1 != 0 else np.nan)
        return out


def calibration_ratios(
    h: float,
    n_values=(8192, 16384),
    replications: int = 500,
    master_seed: int = DEFAULT_CALIBRATION_SEED,
    inner_resolution: int | None = None,
    scheme: str = DEFAULT_SCHEME,
    completion: bool | None = None,
    workers: int = 1,
    cache_dir=None,
) -> np.ndarray:
    """Per-replication ratios, shape ``(replications, len(n_values))``."""
    h = validate_hurst(h)
    n_values = tuple(int(n) for n in n_values)
    top = max(n_values)
    if any(top % n for n in n_values):
        raise RangeError("calibration resolutions must divide the largest one")
    m = inner_resolution or 4 * top
    seeds = replication_seeds(master_seed, replications)
    job = _Ratios(h, n_values, m, scheme, completion, cache_dir)
    return np.array(parallel_map(job, seeds, workers))


def calibrate_d(
    h: float,
    n_values=(8192, 16384),
    replications: int = 500,
    master_seed: int = DEFAULT_CALIBRATION_SEED,
    inner_resolution: int | None = None,
    scheme: str = DEFAULT_SCHEME,
    completion: bool | None = None,
    workers: int = 1,
    cache_dir=None,
) -> CalibrationResult:
    """Median ratio at each resolution; ``d`` is the value at the finest one."""
    h = validate_hurst(h)
    n_values = tuple(sorted(int(n) for n in n_values))
    ratios = calibration_ratios(
        h, n_values, replications, master_seed, inner_resolution, scheme, completion, workers, cache_dir
    )
    med = np.nanmedian(ratios, axis=0)
    d_by_n = {n: float(v) for n, v in zip(n_values, med)}
    d = d_by_n[n_values[-1]]
    if not d > 0:
        raise RangeError(f"calibrated d({h}) = {d} is not positive")
    return CalibrationResult(
        h=h,
        d=d,
        d_by_n=d_by_n,
        replications=replications,
        inner_resolution=inner_resolution or 4 * n_values[-1],
        master_seed=master_seed,
    )
