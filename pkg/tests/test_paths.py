import numpy as np
import pytest

from rblab.errors import RangeError
from rblab.jsonio import dumps17
from rblab.paths import SamplePath, fmt17, validate_hurst


def test_validate_hurst():
    assert validate_hurst(0.75) == 0.75
    for bad in (0.5, 1.0, 0.2, float("nan")):
        with pytest.raises(RangeError):
            validate_hurst(bad)


def test_sample_path_basics():
    p = SamplePath([0.0, 1.0, 3.0])
    assert p.n_steps == 2
    np.testing.assert_array_equal(p.times, [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(p.increments, [1.0, 2.0])
    with pytest.raises(ValueError):
        p.values[0] = 5.0
    for bad in ([1.0], [0.0, np.inf], [[0.0, 1.0]]):
        with pytest.raises(RangeError):
            SamplePath(bad)


def test_csv_roundtrip_is_exact():
    rng = np.random.default_rng(0)
    p = SamplePath(np.concatenate([[0.0], rng.standard_normal(50) * 1e-7]))
    text = p.to_csv()
    assert text.startswith("t,value\n")
    assert SamplePath.from_csv(text) == p


def test_csv_header_required():
    with pytest.raises(RangeError):
        SamplePath.from_csv("x,y\n0,0\n1,1\n")


def test_dumps17():
    out = dumps17({"a": 0.1, "b": [1, np.float64(2.5)], "c": float("nan"), "d": None, "e": "x"})
    assert '"a": 0.10000000000000001' in out
    assert '"c": null' in out
    assert out.endswith("\n")
    assert fmt17(1 / 3) == "0.33333333333333331"
