"""Quantile-profile calculus: oracles are closed forms and brute-force sums."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldlimits.quantile import (
    ConditionReport,
    QuantileProfile,
    classify_partial_sums,
    clt_condition,
    constant_profile,
    empirical_quantile,
    g_of,
    linear_profile,
    r_at,
    theta_inverse,
    tightness_condition,
)


# -- construction -------------------------------------------------------------


def test_empirical_degenerate_zero():
    prof = empirical_quantile([0.0, 0.0, 0.0])
    u = np.linspace(0, 1, 7)
    assert np.all(prof.q_at(u) == 0.0)
    assert prof.total == 0.0


def test_empirical_point_mass():
    prof = empirical_quantile([1.0, 1.0, 1.0, 1.0])
    for u in (0.0, 0.3, 0.99, 1.0):
        assert prof.q_at(u) == 1.0
        assert prof.cumulative(u) == pytest.approx(u, abs=1e-15)
    for y in (0.0, 0.4, 1.0):
        assert prof.g_at(y) == pytest.approx(y, abs=1e-15)


def test_empirical_uniform_million_draws():
    rng = np.random.default_rng(20250816)
    prof = empirical_quantile(np.abs(rng.uniform(0, 1, size=10**6)))
    u = np.linspace(0, 1, 2001)[:-1]
    assert float(np.max(np.abs(prof.q_at(u) - (1 - u)))) < 0.01


def test_empirical_rejects_bad_input():
    with pytest.raises(ValueError):
        empirical_quantile([])
    with pytest.raises(ValueError):
        empirical_quantile([1.0, float("nan")])


def test_profile_validation():
    with pytest.raises(ValueError):
        QuantileProfile(us=np.array([0.0, 1.0]), qs=np.array([-1.0]), kind="step")
    with pytest.raises(ValueError):
        # increasing values
        linear_profile([0.0, 1.0], [0.5, 1.0])
    with pytest.raises(ValueError):
        QuantileProfile(us=np.array([0.0, 0.5]), qs=np.array([1.0]), kind="step")


# -- g_of ----------------------------------------------------------------------


def test_g_of_identity_cumulative():
    prof = constant_profile(1.0)
    assert g_of(prof, 0.4) == pytest.approx(0.4, abs=1e-15)


def test_g_of_linear_closed_form():
    # Q(u) = 1-u, cumulative = u - u^2/2; y = 0.375 inverts to 1 - sqrt(1-0.75).
    prof = linear_profile([0.0, 1.0], [1.0, 0.0])
    expected = 1 - math.sqrt(1 - 0.75)
    assert g_of(prof, 0.375) == pytest.approx(expected, abs=1e-12)
    # numeric root finding as an independent check
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid - mid * mid / 2 < 0.375:
            lo = mid
        else:
            hi = mid
    assert g_of(prof, 0.375) == pytest.approx(lo, abs=1e-10)


def test_g_of_zero_and_clamp():
    prof = empirical_quantile([0.5, 2.0, 1.0])
    assert g_of(prof, 0.0) == 0.0
    assert g_of(prof, prof.total * 2) == 1.0
    assert g_of(prof, prof.total) == pytest.approx(1.0, abs=1e-12)


def test_g_of_leftmost_preimage_on_flat():
    # Q vanishes on [0.5, 1]; cumulative is flat there, G(total) = 0.5.
    prof = QuantileProfile(
        us=np.array([0.0, 0.5, 1.0]), qs=np.array([2.0, 0.0]), kind="step"
    )
    assert prof.total == pytest.approx(1.0)
    assert prof.g_at(1.0) == pytest.approx(0.5, abs=1e-15)


def test_g_inverse_of_cumulative_roundtrip():
    rng = np.random.default_rng(7)
    prof = empirical_quantile(rng.exponential(size=257))
    xs = rng.uniform(0, 1, size=64)
    ys = prof.cumulative(xs)
    back = prof.g_at(ys)
    mask = prof.q_at(xs) > 1e-12
    assert np.max(np.abs(back[mask] - xs[mask])) < 1e-10


# -- composite integral --------------------------------------------------------


def _composite_by_quadrature(prof: QuantileProfile, c: float, npts: int = 1 << 18) -> float:
    c_eff = min(c, prof.total)
    u = np.linspace(0.0, c_eff, npts + 1)
    vals = prof.q_at(prof.g_at(u))
    # trapezoid; integrand is piecewise smooth
    return float(np.trapezoid(vals, u))


@pytest.mark.parametrize(
    "prof",
    [
        linear_profile([0.0, 1.0], [1.0, 0.0]),
        linear_profile([0.0, 0.25, 0.7, 1.0], [3.0, 1.5, 0.5, 0.0]),
        linear_profile([0.0, 0.5, 1.0], [2.0, 2.0, 1.0]),
    ],
)
def test_composite_change_of_variables_identity(prof):
    for c in (prof.total, 0.7 * prof.total, 0.2 * prof.total):
        exact = prof.integral_composite(c)
        quad = _composite_by_quadrature(prof, c)
        assert exact == pytest.approx(quad, abs=1e-8)


def test_composite_step_profile_exact():
    prof = empirical_quantile([2.0, 1.0, 1.0, 0.5])
    # direct evaluation: Q takes values (2,1,1,.5) on quarters; cumulative
    # breakpoints (0,.5,.75,1,1.125); on u in (cum_i, cum_{i+1}) the composite
    # equals the plateau value, so the integral is sum q_i^2 * width_i.
    assert prof.integral_composite(prof.total) == pytest.approx(
        (4 * 0.25) + (1 * 0.25) + (1 * 0.25) + (0.25 * 0.25), abs=1e-14
    )
    assert prof.integral_composite(0.6) == pytest.approx(4 * 0.25 + 1 * 0.1, abs=1e-14)


# -- clt_condition ---------------------------------------------------------------


def test_clt_single_term_example():
    c, M = 0.7, 2.0
    prof = constant_profile(M)
    gammas = [np.array([c, 0.0, 0.0]), np.array([c, 0.0, 0.0])]
    rep = clt_condition(gammas, prof, cutoff=8)
    # single surviving term: integral of Q о G up to min(c, total)
    assert rep.value == pytest.approx(prof.integral_composite(c), abs=1e-14)
    assert rep.value == pytest.approx(M * min(c, M), abs=1e-14)
    assert rep.verdict == "FINITE"


def test_clt_all_zero_gammas():
    prof = constant_profile(1.0)
    rep = clt_condition([np.zeros(4), np.zeros(4)], prof, cutoff=4)
    assert rep.value == 0.0
    assert rep.verdict == "FINITE"


def test_clt_geometric_closed_form():
    # Q == 1: F(t) = t for t <= 1.  gamma_i(k) = 2^-k, d=2:
    # value over [0,c]^2 = sum_{m<=c} (2m+1) 2^-m = 6 - (2c+5)2^-c.
    prof = constant_profile(1.0)
    cutoff = 30
    g = 0.5 ** np.arange(cutoff + 1)
    rep = clt_condition([g, g], prof, cutoff=cutoff)
    expected = 6.0 - (2 * cutoff + 5) * 0.5**cutoff
    assert rep.value == pytest.approx(expected, rel=1e-12)
    assert rep.verdict == "FINITE"
    # partials frozen at each doubling cutoff by the same closed form
    for c, v in zip(rep.cutoffs, rep.partial_sums):
        cc = min(c, cutoff)
        assert v == pytest.approx(6.0 - (2 * cc + 5) * 0.5**cc, rel=1e-12)


def test_clt_brute_force_equivalence_randomized():
    rng = np.random.default_rng(42)
    for trial in range(25):
        d = int(rng.integers(1, 4))
        cutoff = int(rng.integers(1, 7))
        prof = empirical_quantile(rng.exponential(size=int(rng.integers(3, 40))))
        gammas = []
        for _ in range(d):
            raw = np.sort(rng.uniform(0, 2.0, size=cutoff + 1))[::-1]
            if rng.random() < 0.3:
                raw[rng.integers(1, cutoff + 1) :] = 0.0
            gammas.append(raw)
        rep = clt_condition(gammas, prof, cutoff=cutoff)
        brute = 0.0
        grids = np.meshgrid(*[np.arange(cutoff + 1)] * d, indexing="ij")
        for idx in zip(*[g.ravel() for g in grids]):
            level = min(gammas[i][idx[i]] for i in range(d))
            brute += prof.integral_composite(level)
        assert rep.value == pytest.approx(brute, rel=1e-10, abs=1e-12)


def test_clt_monotone_in_gamma():
    rng = np.random.default_rng(3)
    prof = empirical_quantile(rng.exponential(size=31))
    base = np.sort(rng.uniform(0, 1, size=9))[::-1]
    bigger = base + 0.25
    v0 = clt_condition([base, base], prof, cutoff=8).value
    v1 = clt_condition([bigger, base], prof, cutoff=8).value
    v2 = clt_condition([bigger, bigger], prof, cutoff=8).value
    assert v0 <= v1 + 1e-12 and v1 <= v2 + 1e-12


def test_clt_rejects_nonmonotone_gamma():
    prof = constant_profile(1.0)
    with pytest.raises(ValueError):
        clt_condition([np.array([0.1, 0.5])], prof, cutoff=1)


# -- tightness_condition ---------------------------------------------------------


def test_tightness_zero_theta():
    prof = constant_profile(1.0)
    rep = tightness_condition(np.zeros(8), prof, d=2, cutoff=7)
    assert rep.value == 0.0
    assert rep.verdict == "FINITE"


def test_tightness_basel_series():
    # Q == 1, theta(k) = (k+1)^-3, d = 2: terms (k+1)^-2 -> pi^2/6.
    prof = constant_profile(1.0)
    cutoff = 4096
    k = np.arange(cutoff + 1, dtype=float)
    theta = (k + 1) ** -3
    rep = tightness_condition(theta, prof, d=2, cutoff=cutoff)
    # tail of sum (k+1)^-2 beyond cutoff is below 1/(cutoff+1)
    assert abs(rep.value - math.pi**2 / 6) < 1.0 / (cutoff + 1)
    assert rep.detail["agreement"] < 1e-9


def test_tightness_no_decay_divergent():
    prof = empirical_quantile(np.linspace(0.1, 1.0, 10))
    rep = tightness_condition(np.ones(5000), prof, d=2, cutoff=4999)
    assert rep.verdict == "DIVERGENT"


def test_tightness_two_forms_agree_randomized():
    rng = np.random.default_rng(11)
    for trial in range(25):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(2, 60))
        prof = (
            empirical_quantile(rng.exponential(size=n))
            if rng.random() < 0.5
            else linear_profile(
                np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, size=3)), [1.0]]),
                np.sort(rng.uniform(0, 3, size=5))[::-1],
            )
        )
        cutoff = int(rng.integers(1, 64))
        theta = np.sort(rng.uniform(0, 1.5 * prof.total + 0.1, size=cutoff + 1))[::-1]
        rep = tightness_condition(theta, prof, d=d, cutoff=cutoff)
        assert rep.detail["agreement"] < 1e-8
        # independent brute force of the series itself
        brute = sum(
            (k + 1) ** (d - 1) * prof.integral_composite(theta[k])
            for k in range(cutoff + 1)
        )
        assert rep.value == pytest.approx(brute, rel=1e-10, abs=1e-12)


def test_theta_inverse_counts():
    theta = np.array([1.0, 0.5, 0.25, 0.0])
    assert theta_inverse(theta, 0.75) == 1
    assert theta_inverse(theta, 0.5) == 1  # strictly-greater count
    assert theta_inverse(theta, 0.1) == 3
    assert int(theta_inverse(theta, 0.0)) == 3


def test_r_at_display_form():
    prof = constant_profile(1.0)
    theta = np.array([1.0, 0.5, 0.0])
    # cumulative(u) = u; theta^{-1}(0.3) = 2; R(u) = 1 * 2^d
    assert r_at(prof, theta, 2, 0.3) == pytest.approx(4.0)


# -- verdict classifier ----------------------------------------------------------


def test_classifier_finite_geometric():
    partials = np.cumsum(0.5 ** np.arange(30))
    assert classify_partial_sums(partials) == "FINITE"


def test_classifier_divergent_quadratic():
    cutoffs = 2 ** np.arange(12)
    partials = cutoffs.astype(float) ** 2
    assert classify_partial_sums(partials) == "DIVERGENT"


def test_classifier_zero_total():
    assert classify_partial_sums([0.0, 0.0]) == "FINITE"


def test_classifier_inconclusive_slow():
    # increments decay too slowly for the tail test, grow too slowly for
    # the divergence test: sqrt growth flattening near the end
    partials = [10.0, 10.02, 10.04, 10.059, 10.077]
    assert classify_partial_sums(partials) == "INCONCLUSIVE"


# -- property tests ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(min_value=0.0, max_value=100.0), min_size=1, max_size=50),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_profile_shape_properties(samples, u):
    prof = empirical_quantile(samples)
    v = np.linspace(0, 1, 33)
    q = prof.q_at(v)
    assert np.all(np.diff(q) <= 1e-12)  # nonincreasing
    assert np.all(q >= 0)
    c = prof.cumulative(v)
    assert np.all(np.diff(c) >= -1e-12)  # nondecreasing
    assert prof.cumulative(0.0) == 0.0
    if prof.q_at(u) > 1e-9:
        assert abs(prof.g_at(prof.cumulative(u)) - u) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=1e-3, max_value=50.0), min_size=2, max_size=30))
def test_cumulative_concavity(samples):
    prof = empirical_quantile(samples)
    v = np.linspace(0, 1, 65)
    c = prof.cumulative(v)
    second = np.diff(c, 2)
    assert np.all(second <= 1e-10)


# -- serialization -----------------------------------------------------------------


def test_profile_json_roundtrip_step():
    prof = empirical_quantile([3.0, 1.0, 0.5, 0.25, 0.25])
    back = QuantileProfile.from_json(prof.to_json())
    u = np.linspace(0, 1, 101)
    assert np.allclose(back.q_at(u), prof.q_at(u), atol=0, rtol=0)
    doc = json.loads(prof.to_json())
    assert set(doc) == {"kind", "knots"}
    assert all(len(k) == 2 for k in doc["knots"])


def test_profile_json_roundtrip_linear():
    prof = linear_profile([0.0, 0.4, 1.0], [2.0, 1.0, 0.0])
    back = QuantileProfile.from_json(prof.to_json())
    u = np.linspace(0, 1, 101)
    assert np.allclose(back.q_at(u), prof.q_at(u))
    assert back.kind == "linear"


def test_condition_report_json():
    prof = constant_profile(1.0)
    rep = clt_condition([np.array([0.5, 0.0])], prof, cutoff=4)
    doc = json.loads(rep.to_json())
    assert {"value", "verdict", "partial_sums"} <= set(doc)
    assert doc["verdict"] in ("FINITE", "DIVERGENT", "INCONCLUSIVE")


def test_condition_report_rejects_decreasing_partials():
    with pytest.raises(ValueError):
        ConditionReport(value=1.0, verdict="FINITE", partial_sums=(2.0, 1.0), cutoffs=(1, 2))
