"""Additive-noise SDE ``dX = lambda f(X) dt + sigma dY`` on [0, 1]."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import IncompatibleGrid, NumericalBlowup, RangeError
from .noise import FbmSpec, RosenblattSpec, simulate_fbm, simulate_rosenblatt
from .paths import SamplePath, fmt17

BLOWUP_GUARD = 1e6

NoiseSpec = Union[RosenblattSpec, FbmSpec]


@dataclass(frozen=True)
class DriftPoly:
    """``f(x) = sum_j c_j x^j`` restricted to drifts with ``x f(x) <= k1 + k2 x^2``.

    Admissible: degree <= 1, or odd degree with a negative leading coefficient.
    Trailing zero coefficients are dropped.
    """

    coefficients: tuple

    def __post_init__(self):
        c = [float(v) for v in self.coefficients]
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        if not c:
            c = [0.0]
        if not all(np.isfinite(c)):
            raise RangeError("drift coefficients must be finite")
        deg = len(c) - 1
        if deg > 1 and (deg % 2 == 0 or c[-1] >= 0):
            raise RangeError(
                "inadmissible drift: degree must be <= 1, or odd with a negative "
                f"leading coefficient (got degree {deg}, leading {c[-1]})"
            )
        object.__setattr__(self, "coefficients", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return drift_eval(self, x)


def drift_eval(drift: DriftPoly, x):
    """Horner evaluation; works elementwise on arrays."""
    acc = 0.0 * x
    for c in reversed(drift.coefficients):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class ModelSpec:
    x0: float
    lam: float
    sigma: float
    drift: DriftPoly
    noise: NoiseSpec
    fine_steps: int = field(default=8192)

    def __post_init__(self):
        if not isinstance(self.drift, DriftPoly):
            object.__setattr__(self, "drift", DriftPoly(tuple(self.drift)))
        if self.sigma < 0:
            raise RangeError("sigma must be nonnegative")
        if self.fine_steps < 1:
            raise RangeError("fine_steps must be positive")
        if self.noise.n_steps != self.fine_steps:
            raise IncompatibleGrid(
                f"noise grid {self.noise.n_steps} differs from fine_steps {self.fine_steps}"
            )

    def check_obs_sizes(self, sizes: Sequence[int]) -> None:
        for n in sizes:
            if self.fine_steps % n:
                raise IncompatibleGrid(f"fine_steps {self.fine_steps} is not a multiple of {n}")

    def to_dict(self) -> dict:
        noise = {"kind": "rosenblatt" if isinstance(self.noise, RosenblattSpec) else "fbm",
                 "h": self.noise.h, "n_steps": self.noise.n_steps, "seed": self.noise.seed}
        if isinstance(self.noise, RosenblattSpec):
            noise["inner_resolution"] = self.noise.inner_resolution
            noise["scheme"] = self.noise.scheme
        return {
            "x0": self.x0,
            "lambda": self.lam,
            "sigma": self.sigma,
            "drift": list(self.drift.coefficients),
            "fine_steps": self.fine_steps,
            "noise": noise,
        }


@dataclass(frozen=True)
class SolutionPath:
    path: SamplePath
    model: ModelSpec
    noise: SamplePath

    def __post_init__(self):
        if self.path.n_steps != self.noise.n_steps:
            raise IncompatibleGrid("solution and noise must share the grid")

    def write(self, directory) -> None:
        """``solution.csv``, ``noise.csv`` and ``model.json`` in ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.path.write_csv(d / "solution.csv")
        self.noise.write_csv(d / "noise.csv")
        (d / "model.json").write_text(json.dumps(self.model.to_dict(), indent=2) + "\n")


def simulate_noise(spec: NoiseSpec) -> SamplePath:
    if isinstance(spec, RosenblattSpec):
        return simulate_rosenblatt(spec)
    return simulate_fbm(spec)


def euler_maruyama(
    model: ModelSpec, noise_path: SamplePath | None = None, guard: float = BLOWUP_GUARD
) -> SolutionPath:
    """``X_{k+1} = X_k + lambda f(X_k) dt + sigma dY_k`` on the fine grid."""
    if noise_path is None:
        noise_path = simulate_noise(model.noise)
    n = model.fine_steps
    if noise_path.n_steps != n:
        raise IncompatibleGrid(
            f"noise path has {noise_path.n_steps} steps, model expects {n}"
        )
    dt = 1.0 / n
    dy = (model.sigma * noise_path.increments).tolist()
    coef = model.drift.coefficients
    lam_dt = model.lam * dt
    x = float(model.x0)
    out = [x]
    if lam_dt == 0.0 or coef == (0.0,):
        # no drift: the solution is the scaled noise itself
        values = x + model.sigma * noise_path.values
        if not np.all(np.abs(values) <= guard):
            raise NumericalBlowup(f"|X| exceeded {guard:g}")
        return SolutionPath(SamplePath(values), model, noise_path)
    if len(coef) <= 2:
        # linear drift: constant-coefficient recursion, no blowup possible in [0, 1]
        c0 = coef[0]
        c1 = coef[1] if len(coef) == 2 else 0.0
        a, b = 1.0 + lam_dt * c1, lam_dt * c0
        for d in dy:
            x = a * x + b + d
            out.append(x)
    else:
        rev = coef[::-1]
        for d in dy:
            fx = 0.0
            for c in rev:
                fx = fx * x + c
            x = x + lam_dt * fx + d
            if abs(x) > guard:
                raise NumericalBlowup(f"|X| exceeded {guard:g}")
            out.append(x)
    values = np.array(out)
    if not np.all(np.abs(values) <= guard):
        raise NumericalBlowup(f"|X| exceeded {guard:g}")
    return SolutionPath(SamplePath(values), model, noise_path)


def downsample(path: SamplePath, n_obs: int) -> SamplePath:
    """Sub-path at times ``i / n_obs``."""
    n = path.n_steps
    if n_obs < 1 or n % n_obs:
        raise IncompatibleGrid(f"cannot downsample {n} steps to {n_obs}")
    return SamplePath(path.values[:: n // n_obs])


def model_json(model: ModelSpec) -> str:
    return json.dumps(model.to_dict(), indent=2, default=fmt17)
