"""Strict JSON configuration for the command-line workflows.

Unknown keys are rejected.  Structural problems (unknown or missing keys,
wrong types) raise :class:`SchemaError`; values that break a domain rule raise
:class:`RangeError`.  Both carry the dotted field path.
"""
from __future__ import annotations

import json
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .calibration import DEFAULT_CALIBRATION_SEED
from .errors import RangeError, SchemaError
from .noise import FbmSpec, RosenblattSpec
from .sde import DriftPoly, ModelSpec

U64 = 2**64
ESTIMATORS = ("diffusion", "lambda_known", "lambda_plugin")
# pydantic error types that mean "wrong value" rather than "wrong shape"
_RANGE_TYPES = {"value_error", "assertion_error", "greater_than", "greater_than_equal",
                "less_than", "less_than_equal", "literal_error", "too_short"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


def _check_h(v: float) -> float:
    if not 0.5 < v < 1.0:
        raise ValueError(f"h={v} violates 1/2 < h < 1")
    return v


def _check_seed(v: int) -> int:
    if not 0 <= v < U64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return v


class NoiseConfig(_Strict):
    noise: Literal["rosenblatt", "fbm"] = "rosenblatt"
    h: float
    n_steps: int = Field(gt=0)
    inner_resolution: Optional[int] = Field(default=None, gt=0)
    scheme: Literal["cell", "midpoint"] = "cell"
    completion: Optional[bool] = None
    seed: int = 0

    _h = field_validator("h")(_check_h)
    _seed = field_validator("seed")(_check_seed)

    @model_validator(mode="after")
    def _grid(self):
        spec(self)
        return self


class ModelConfig(_Strict):
    x0: float
    lam: float = Field(alias="lambda")
    sigma: float = Field(default=1.0, ge=0)
    drift: List[float]
    h: float
    noise: Literal["rosenblatt", "fbm"] = "rosenblatt"
    fine_steps: int = Field(default=8192, gt=0)
    inner_resolution: Optional[int] = Field(default=None, gt=0)
    scheme: Literal["cell", "midpoint"] = "cell"
    completion: Optional[bool] = None

    _h = field_validator("h")(_check_h)

    @field_validator("drift")
    @classmethod
    def _drift(cls, v):
        if not v:
            raise ValueError("drift needs at least one coefficient")
        DriftPoly(tuple(v))
        return v

    @model_validator(mode="after")
    def _grid(self):
        model_spec(self, 0)
        return self


class CalibrationSettings(_Strict):
    n_values: List[int] = Field(default_factory=lambda: [8192, 16384])
    replications: int = Field(default=500, gt=1)
    master_seed: int = DEFAULT_CALIBRATION_SEED
    inner_resolution: Optional[int] = Field(default=None, gt=0)

    _seed = field_validator("master_seed")(_check_seed)

    @field_validator("n_values")
    @classmethod
    def _sizes(cls, v):
        if not v or any(n < 4 or n % 2 for n in v):
            raise ValueError("calibration sizes must be even integers >= 4")
        if any(max(v) % n for n in v):
            raise ValueError("calibration sizes must divide the largest one")
        return sorted(v)


class DhConfig(_Strict):
    source: Literal["override", "calibrate"] = "calibrate"
    value: Optional[float] = Field(default=None, gt=0)
    tolerance: float = Field(default=0.25, ge=0)
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)

    @model_validator(mode="after")
    def _value(self):
        if self.source == "override" and self.value is None:
            raise ValueError("d_h.source='override' needs d_h.value")
        return self


class SolveConfig(_Strict):
    model: ModelConfig
    seed: int = 0

    _seed = field_validator("seed")(_check_seed)


class EstimateConfig(_Strict):
    path: str
    estimators: List[Literal["diffusion", "lambda_known", "lambda_plugin"]] = Field(
        default_factory=lambda: ["diffusion"]
    )
    drift: Optional[List[float]] = None
    h: Optional[float] = None
    sigma: Optional[float] = Field(default=None, ge=0)
    d_h: DhConfig = Field(default_factory=lambda: DhConfig(source="calibrate"))

    @field_validator("h")
    @classmethod
    def _h(cls, v):
        return None if v is None else _check_h(v)

    @model_validator(mode="after")
    def _needs(self):
        if {"lambda_known", "lambda_plugin"} & set(self.estimators) and self.drift is None:
            raise ValueError("drift estimators need 'drift'")
        if "lambda_known" in self.estimators and (self.h is None or self.sigma is None):
            raise ValueError("lambda_known needs 'h' and 'sigma'")
        if self.drift is not None:
            DriftPoly(tuple(self.drift))
        return self


class CalibrateConfig(_Strict):
    h: float
    scheme: Literal["cell", "midpoint"] = "cell"
    completion: Optional[bool] = None
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)

    _h = field_validator("h")(_check_h)


class ExperimentConfig(_Strict):
    model: ModelConfig
    obs_sizes: List[int]
    replications: int = Field(default=200, gt=0)
    master_seed: int = 0
    estimators: List[Literal["diffusion", "lambda_known", "lambda_plugin"]] = Field(
        default_factory=lambda: list(ESTIMATORS)
    )
    d_h: DhConfig = Field(default_factory=DhConfig)

    _seed = field_validator("master_seed")(_check_seed)

    @model_validator(mode="after")
    def _sizes(self):
        sizes = self.obs_sizes
        if not sizes or any(n < 4 or n % 2 for n in sizes):
            raise ValueError("obs_sizes must be even integers >= 4")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("obs_sizes must be strictly increasing")
        bad = [n for n in sizes if self.model.fine_steps % n]
        if bad:
            raise ValueError(f"model.fine_steps={self.model.fine_steps} is not a multiple of {bad}")
        return self


COMMANDS = {
    "simulate-noise": NoiseConfig,
    "solve": SolveConfig,
    "estimate": EstimateConfig,
    "calibrate-d": CalibrateConfig,
    "experiment": ExperimentConfig,
}


# -- conversion to domain objects -------------------------------------------


def spec(cfg: NoiseConfig):
    if cfg.noise == "fbm":
        return FbmSpec(cfg.h, cfg.n_steps, cfg.seed)
    return RosenblattSpec(cfg.h, cfg.n_steps, cfg.inner_resolution, cfg.seed, cfg.scheme, cfg.completion)


def model_spec(cfg: ModelConfig, seed: int) -> ModelSpec:
    if cfg.noise == "fbm":
        noise = FbmSpec(cfg.h, cfg.fine_steps, seed)
    else:
        noise = RosenblattSpec(
            cfg.h, cfg.fine_steps, cfg.inner_resolution, seed, cfg.scheme, cfg.completion
        )
    return ModelSpec(cfg.x0, cfg.lam, cfg.sigma, DriftPoly(tuple(cfg.drift)), noise, cfg.fine_steps)


# -- parsing ----------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values are JSON when they parse as JSON."""
    doc = json.loads(json.dumps(doc))
    for item in overrides or ():
        if "=" not in item:
            raise SchemaError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise SchemaError(f"override {item!r} has an empty key")
        node = doc
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise SchemaError(f"override path {key!r} crosses a non-object at {p!r}")
            node = nxt
        node[parts[-1]] = _parse_value(raw)
    return doc


def _convert(err: ValidationError, command: str):
    first = err.errors()[0]
    loc = ".".join(str(p) for p in first["loc"]) or "<root>"
    msg = first["msg"]
    ctx = first.get("ctx") or {}
    inner = ctx.get("error")
    if isinstance(inner, (RangeError, SchemaError)):
        cls = type(inner)
        msg = str(inner)
    elif first["type"] in _RANGE_TYPES:
        cls = RangeError
    else:
        cls = SchemaError
    return cls(f"{command}: {loc}: {msg}")


def parse_config(document, command: str, overrides=()):
    """Validate a JSON document (text or dict) for ``command``."""
    if command not in COMMANDS:
        raise SchemaError(f"unknown command {command!r}")
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{command}: invalid JSON: {exc}") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise SchemaError(f"{command}: the configuration must be a JSON object")
    doc = apply_overrides(doc, overrides)
    try:
        return COMMANDS[command].model_validate(doc)
    except ValidationError as err:
        raise _convert(err, command) from None


def dump_config(cfg) -> dict:
    """Fully resolved form, defaults included."""
    return cfg.model_dump(mode="json", by_alias=True)
