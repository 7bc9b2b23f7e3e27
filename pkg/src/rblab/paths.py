"""Uniform-grid sample paths on [0, 1] and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RangeError


def validate_hurst(h: float) -> float:
    h = float(h)
    if not 0.5 < h < 1.0:
        raise RangeError(f"Hurst parameter must lie in (1/2, 1), got {h!r}")
    return h


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SamplePath:
    """Values ``X(i/N)`` for ``i = 0..N``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise RangeError("a sample path needs at least two grid values")
        if not np.all(np.isfinite(v)):
            raise RangeError("sample path contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) / self.n_steps

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, SamplePath):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,value\n")
        n = self.n_steps
        for i, v in enumerate(self.values):
            buf.write(f"{fmt17(i / n)},{fmt17(v)}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str) -> "SamplePath":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["t", "value"]:
            raise RangeError("path CSV must start with the header 't,value'")
        values = [float(row[1]) for row in reader if row]
        return cls(np.array(values))

    @classmethod
    def read_csv(cls, path) -> "SamplePath":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))
