"""Property tests for the invariants of the estimators, solver and harness."""
import math

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rblab.errors import InsufficientResolution
from rblab.estimators import (
    deceleration_params,
    estimate_diffusion,
    estimate_lambda_known,
    two_variation,
    w_statistic,
)
from rblab.experiment import Row, seed_for_replication, summarize, summarize_values
from rblab.noise import kernel_L
from rblab.paths import SamplePath
from rblab.sde import DriftPoly, downsample, drift_eval

hurst = st.floats(0.51, 0.99)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def paths(draw, min_n=4, max_n=256, even=True):
    n = draw(st.integers(min_n // 2, max_n // 2)) * 2 if even else draw(st.integers(min_n, max_n))
    inc = draw(arrays(np.float64, n, elements=st.floats(-10, 10, allow_nan=False, allow_infinity=False)))
    return SamplePath(np.concatenate([[0.0], np.cumsum(inc)]))


def nondegenerate(p):
    return np.sum(np.diff(p.values) ** 2) > 1e-12 and np.sum(np.diff(p.values[::2]) ** 2) > 1e-12


@given(paths(even=False, min_n=2), hurst)
def test_two_variation_bounded_below(p, h):
    v = two_variation(p, h).v_n
    assert v >= -1.0
    if not np.any(np.diff(p.values)):
        assert v == -1.0


@settings(max_examples=100)
@given(paths(), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_affine_invariance_of_diffusion_estimates(p, c, b):
    assume(nondegenerate(p))
    e0 = estimate_diffusion(p)
    e1 = estimate_diffusion(SamplePath(c * p.values + b))
    assert math.isclose(e1.h_hat, e0.h_hat, rel_tol=0, abs_tol=1e-9)
    assert math.isclose(e1.sigma_hat, c * e0.sigma_hat, rel_tol=1e-8)


@given(paths(), hurst, st.floats(0.1, 10), st.floats(0.1, 2))
def test_w_additivity(p, h, sigma, d):
    a = w_statistic(p, "first-half", h, sigma, d)
    b = w_statistic(p, "second-half", h, sigma, d)
    assert a + b == w_statistic(p, "full", h, sigma, d)


@given(paths(), st.lists(st.floats(-3, 3), min_size=1, max_size=4), hurst, st.just(0.0) | st.floats(1e-6, 3.0))
def test_least_squares_identity(p, coef, h, sigma):
    drift = DriftPoly(tuple(coef[:2]))
    z_sum = np.sum(np.abs(drift(p.values[1:])))
    assume(z_sum > 1e-6)
    est = estimate_lambda_known(p, drift, h, sigma, 0.6)
    z, u = np.array(est.regressor), np.array(est.response)
    zz = z @ z
    assume(zz > 1e-12)
    assert math.isclose(est.lambda_hat * zz, z @ u, rel_tol=1e-9, abs_tol=1e-9 * (1 + abs(z) @ abs(u)))


@given(st.integers(1, 10**6), st.floats(0.01, 0.99))
def test_deceleration_invariants(n, delta):
    try:
        p = deceleration_params(n, delta)
    except InsufficientResolution:
        assert n // max(1, math.floor(n / n**delta)) < 4 or n < 4
        return
    assert 1 <= p.k <= n
    assert abs(p.k - n / n**delta) <= 1 + 1e-9 * n
    assert p.n_n * p.h_n <= 1 + 1e-15 < (p.n_n + 1) * p.h_n + 1e-15


@given(st.lists(finite, min_size=1, max_size=6), finite)
def test_horner_matches_polyval(coef, x):
    if len(coef) > 2:
        coef = coef[:-1] + [-abs(coef[-1]) - 1.0] if len(coef) % 2 == 0 else coef[:2]
    d = DriftPoly(tuple(coef))
    expect = np.polyval(list(reversed(d.coefficients)), x)
    assert math.isclose(drift_eval(d, x), expect, rel_tol=1e-9, abs_tol=1e-6 * (1 + abs(x)) ** len(coef))


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32))
def test_seed_mix_is_a_pure_64_bit_function(master, index):
    s = seed_for_replication(master, index)
    assert s == seed_for_replication(master, index)
    assert 0 <= s < 2**64


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=60), st.floats(-100, 100), st.randoms())
def test_summary_is_order_independent(values, truth, rnd):
    rows = [Row(i, i, 8, "lambda_known", v, truth) for i, v in enumerate(values)]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert summarize(rows) == summarize(shuffled)
    s = summarize_values(values, truth)
    assert math.isclose(s["rmse"] ** 2, s["bias"] ** 2 + np.var(values), rel_tol=1e-9, abs_tol=1e-9)


@given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 3))
def test_downsample_composes(k, a, b):
    n = 2**k * 3**a
    p = SamplePath(np.random.default_rng(k).standard_normal(n * 2**b + 1))
    mid = downsample(p, n * 2**b)
    assert downsample(mid, n) == downsample(p, n)
    assert downsample(p, n).values[-1] == p.values[-1]


@given(paths(even=False, min_n=1, max_n=40))
def test_csv_roundtrip(p):
    assert SamplePath.from_csv(p.to_csv()) == p


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.floats(0.55, 0.95))
def test_kernel_symmetry_and_positivity(a, b, h):
    assume(abs(a - b) > 1e-3)
    k1, k2 = kernel_L(1.0, a, b, h), kernel_L(1.0, b, a, h)
    assert k1 > 0
    assert math.isclose(k1, k2, rel_tol=1e-12)
