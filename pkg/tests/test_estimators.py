import json
import math

import numpy as np
import pytest
from scipy import integrate

from rblab.errors import (
    DegenerateDiffusion,
    DegeneratePath,
    DegenerateRegressor,
    IncompatibleGrid,
    InsufficientResolution,
    MissingCalibration,
    OddSampleSize,
    RangeError,
)
from rblab.estimators import (
    RateConstants,
    alpha_bound,
    d_of_h,
    decelerated_w,
    deceleration_params,
    delta_opt,
    estimate_all,
    estimate_diffusion,
    estimate_lambda_known,
    estimate_lambda_plugin,
    log_two_variation,
    rate_a_opt,
    riemann_drift_sums,
    two_variation,
    w_statistic,
)
from rblab.noise import RosenblattSpec, simulate_rosenblatt
from rblab.paths import SamplePath
from rblab.sde import DriftPoly

D = 0.64


def linear(n, slope=1.0, x0=0.0):
    return SamplePath(x0 + slope * np.arange(n + 1) / n)


def rosenblatt(n=1024, seed=1, scale=1.0):
    return SamplePath(scale * simulate_rosenblatt(RosenblattSpec(0.75, n, seed=seed)).values)


# -- rates ------------------------------------------------------------------


@pytest.mark.parametrize(
    "h,delta,a,alpha", [(0.6, 0.8, 0.08, 0.1), (0.75, 0.5, 0.125, 0.25), (0.9, 0.5, 0.05, 0.1)]
)
def test_rate_tables(h, delta, a, alpha):
    assert delta_opt(h) == delta
    assert rate_a_opt(h) == a
    assert alpha_bound(h) == alpha


def test_rates_continuous_at_three_quarters():
    assert delta_opt(0.75 - 1e-12) == pytest.approx(delta_opt(0.75 + 1e-12), abs=1e-11)
    assert rate_a_opt(0.75 - 1e-12) == pytest.approx(rate_a_opt(0.75 + 1e-12), abs=1e-11)


def k_integer(n, p, q):
    """Largest k with k * n^(p/q) <= n, i.e. k^q n^p <= n^q, in integers."""
    k = 1
    while (k + 1) ** q * n**p <= n**q:
        k += 1
    return k


DECEL_TABLE = [
    (1024, 1, 2), (1000, 1, 2), (4096, 1, 2), (16384, 1, 2), (8192, 1, 2),
    (1024, 4, 5), (2048, 4, 5), (4096, 4, 5), (100, 4, 5), (729, 1, 3),
    (1000, 1, 3), (1000, 2, 3), (512, 2, 5), (777, 1, 4), (10000, 3, 4),
    (65536, 1, 4), (250, 3, 5), (96, 1, 2), (64, 9, 10), (8, 9, 10),
]


@pytest.mark.parametrize("n,p,q", DECEL_TABLE)
def test_deceleration_table_against_integer_arithmetic(n, p, q):
    params = deceleration_params(n, p / q)
    k = k_integer(n, p, q)
    assert params.k == k
    assert params.h_n == k / n
    assert params.n_n == n // k
    assert params.n_n * params.h_n <= 1 < (params.n_n + 1) * params.h_n


def test_deceleration_examples():
    p = deceleration_params(1024, 0.5)
    assert (p.k, p.h_n, p.n_n) == (32, 1 / 32, 32)
    p = deceleration_params(1000, 0.5)
    assert (p.k, p.h_n, p.n_n) == (31, 0.031, 32)
    assert deceleration_params(8, 0.9).n_n == 8
    with pytest.raises(InsufficientResolution):
        deceleration_params(4, 0.1)
    with pytest.raises(RangeError):
        deceleration_params(100, 1.0)


# -- d(H) -------------------------------------------------------------------


def test_d_of_h_sources():
    assert d_of_h(0.7, RateConstants(d_override=0.5)) == 0.5
    assert RateConstants(d_override=0.5).source == "override"
    cf = RateConstants(closed_form=lambda h: h / 2)
    assert d_of_h(0.8, cf) == 0.4 and cf.source == "closed-form"
    tab = RateConstants(table=((0.6, 0.5), (0.8, 0.7)), tolerance=0.05)
    assert d_of_h(0.7, tab) == pytest.approx(0.6)
    assert d_of_h(0.84, tab) == 0.7
    with pytest.raises(MissingCalibration):
        d_of_h(0.9, tab)
    with pytest.raises(MissingCalibration):
        d_of_h(0.7, RateConstants())
    with pytest.raises(RangeError):
        RateConstants(d_override=-1.0)


def test_override_scales_w():
    p = rosenblatt(256)
    a = w_statistic(p, "full", 0.75, 1.0, 0.5)
    b = w_statistic(p, "full", 0.75, 1.0, 0.25)
    assert b == pytest.approx(2 * a, rel=1e-14)


# -- 2-variations -----------------------------------------------------------


def test_two_variation_trivial_cases():
    assert two_variation(SamplePath(np.full(65, 3.0)), 0.7).v_n == -1.0
    n, h = 64, 0.7
    steps = n ** (-h) * np.where(np.arange(n) % 2, 1.0, -1.0)
    st = two_variation(SamplePath(np.concatenate([[0.0], np.cumsum(steps)])), h)
    assert st.v_n == pytest.approx(0.0, abs=1e-13)
    assert st.sum_sq == pytest.approx(n ** (1 - 2 * h), rel=1e-13)


def test_log_two_variation():
    n, h, s = 128, 0.8, 1.7
    path = SamplePath(np.concatenate([[0.0], np.cumsum(np.full(n, s * n ** (-h)))]))
    assert log_two_variation(path, h, s) == pytest.approx(0.0, abs=1e-13)
    p = rosenblatt(256)
    c = 3.5
    assert log_two_variation(SamplePath(c * p.values), 0.75, c * 2.0) == pytest.approx(
        log_two_variation(p, 0.75, 2.0), abs=1e-13
    )
    with pytest.raises(DegeneratePath):
        log_two_variation(SamplePath(np.zeros(9)), 0.75, 1.0)


def test_w_constant_path_and_additivity():
    n, h = 512, 0.75
    flat = SamplePath(np.zeros(n + 1))
    assert w_statistic(flat, "full", h, 1.0, D) == pytest.approx(-(n ** (1 - h)) / (4 * D), rel=1e-14)
    p = rosenblatt(512)
    parts = [w_statistic(p, i, h, 1.3, D) for i in ("first-half", "second-half", "full")]
    assert parts[0] + parts[1] == parts[2]
    with pytest.raises(OddSampleSize):
        w_statistic(SamplePath(np.zeros(8)), "full", h, 1.0, D)


# -- diffusion --------------------------------------------------------------


@pytest.mark.parametrize("n", [2**j for j in range(2, 17)])
def test_linear_path_gives_one_one_exactly_on_dyadic_grids(n):
    e = estimate_diffusion(linear(n))
    assert (e.h_hat, e.sigma_hat) == (1.0, 1.0)


def test_linear_path_to_rounding_on_all_even_grids():
    for n in range(4, 1001, 2):
        e = estimate_diffusion(linear(n))
        assert abs(e.h_hat - 1) < 1e-14 and abs(e.sigma_hat - 1) < 1e-13, n


def test_diffusion_closed_forms_from_sums():
    p = rosenblatt(256)
    e = estimate_diffusion(p)
    assert e.sum_sq_full == pytest.approx(np.sum(np.diff(p.values) ** 2), rel=1e-14)
    assert e.sum_sq_half == pytest.approx(np.sum(np.diff(p.values[::2]) ** 2), rel=1e-14)
    ls1, ls2 = math.log(e.sum_sq_full), math.log(e.sum_sq_half)
    assert e.h_hat == pytest.approx(-(ls1 - ls2) / (2 * math.log(2)) + 0.5, rel=1e-14)
    assert e.sigma_hat == pytest.approx(
        math.exp((math.log(2 / 256) * ls1 + math.log(256) * ls2) / (2 * math.log(2))), rel=1e-14
    )


def test_diffusion_errors():
    with pytest.raises(OddSampleSize):
        estimate_diffusion(linear(7))
    with pytest.raises(OddSampleSize):
        estimate_diffusion(linear(2))
    with pytest.raises(DegeneratePath):
        estimate_diffusion(SamplePath(np.ones(9)))


# -- drift ------------------------------------------------------------------


def test_riemann_sums():
    assert riemann_drift_sums(linear(10), DriftPoly((1.0,))) == (0.5, 0.5)
    assert riemann_drift_sums(linear(4), DriftPoly((0.0, 1.0))) == (3 / 16, 7 / 16)


def test_riemann_sums_against_quadrature():
    f = DriftPoly((0.0, 1.0, 0.0, -1.0))
    x = lambda t: np.sin(3 * t) + 0.2 * t  # noqa: E731
    for n in (256, 1024):
        got = riemann_drift_sums(SamplePath(x(np.arange(n + 1) / n)), f)
        exact = (
            integrate.quad(lambda t: f(x(t)), 0, 0.5)[0],
            integrate.quad(lambda t: f(x(t)), 0.5, 1)[0],
        )
        assert max(abs(g - e) for g, e in zip(got, exact)) < 2.0 / n


@pytest.mark.parametrize("n", [4, 64, 1024])
def test_lambda_known_exact_for_constant_drift(n):
    est = estimate_lambda_known(linear(n, slope=5.0), DriftPoly((1.0,)), 0.75, 0.0, D)
    assert est.lambda_hat == 5.0
    assert est.regressor == (0.5, 0.5)


def test_lambda_known_degenerate():
    with pytest.raises(DegenerateRegressor):
        estimate_lambda_known(rosenblatt(64), DriftPoly((0.0,)), 0.75, 1.0, D)


def test_least_squares_identity():
    p = SamplePath(0.3 + rosenblatt(1024).values)
    f = DriftPoly((0.0, -1.0))
    for est in (estimate_lambda_known(p, f, 0.75, 1.0, D), estimate_lambda_plugin(p, f, lambda h: D)):
        z, u = np.array(est.regressor), np.array(est.response)
        assert est.lambda_hat * (z @ z) == pytest.approx(z @ u, rel=1e-13, abs=1e-15)


# -- deceleration statistics ------------------------------------------------


def test_decelerated_log_form_unit_argument():
    n, h, s = 1024, 0.7, 1.5
    params = deceleration_params(n, 0.5)
    # decelerated increments all equal to s * h_N^h
    steps = np.full(n, s * params.h_n**h / params.k)
    path = SamplePath(np.concatenate([[0.0], np.cumsum(steps)]))
    assert decelerated_w(path, "full", params, h, s, D, "log") == pytest.approx(0.0, abs=1e-12)


def test_decelerated_log_form_reduces_to_log_two_variation():
    p = rosenblatt(512)
    params = deceleration_params(512, 0.999999)
    assert params.k == 1
    got = decelerated_w(p, "full", params, 0.75, 1.0, D, "log")
    assert got == 512 ** (1 - 0.75) / (4 * D) * log_two_variation(p, 0.75, 1.0)


def test_decelerated_plain_with_k_one_matches_w():
    p = rosenblatt(512)
    params = deceleration_params(512, 0.999999)
    for interval in ("first-half", "second-half", "full"):
        assert decelerated_w(p, interval, params, 0.75, 1.2, D) == pytest.approx(
            w_statistic(p, interval, 0.75, 1.2, D), rel=1e-12, abs=1e-14
        )


def test_decelerated_errors():
    p = rosenblatt(512)
    params = deceleration_params(512, 0.5)
    with pytest.raises(RangeError):
        decelerated_w(p, "first-half", params, 0.75, 1.0, D, "log")
    with pytest.raises(IncompatibleGrid):
        decelerated_w(rosenblatt(256), "full", params, 0.75, 1.0, D)
    with pytest.raises(DegeneratePath):
        decelerated_w(SamplePath(np.zeros(513)), "full", params, 0.75, 1.0, D, "log")


def test_plugin_reports_intermediates():
    p = SamplePath(0.5 + rosenblatt(4096).values)
    est = estimate_lambda_plugin(p, DriftPoly((0.0, -1.0)), lambda h: D)
    d = est.details
    assert est.mode == "plug-in"
    assert 0.501 <= d["h_used"] <= 0.999
    assert d["delta"] == delta_opt(d["h_used"])
    assert d["k"] == deceleration_params(4096, d["delta"]).k
    with pytest.raises(DegenerateDiffusion):
        estimate_lambda_plugin(SamplePath(1e-12 * rosenblatt(64).values), DriftPoly((0.0, -1.0)), lambda h: D)


def test_report_json():
    p = SamplePath(0.5 + rosenblatt(1024).values)
    rep = estimate_all(p, DriftPoly((0.0, -1.0)), ["diffusion", "lambda_known", "lambda_plugin"],
                       RateConstants(d_override=D), h=0.75, sigma=1.0)
    doc = json.loads(rep.to_json())
    assert set(doc["estimates"]) == {"h_hat", "sigma_hat", "lambda_known", "lambda_plugin"}
    assert doc["inputs"]["d_h_source"] == "override"
    assert doc["statistics"]["lambda_plugin"]["details"]["k"] >= 1
    with pytest.raises(RangeError):
        estimate_all(p, None, ["lambda_known"], RateConstants(d_override=D))
