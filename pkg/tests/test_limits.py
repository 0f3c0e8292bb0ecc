"""Verification-layer tests at unit scale.

The acceptance-scale runs live in the acceptance suite; here the same
machinery runs on small boxes with known targets.  The KS implementation is
checked against an independent library routine, and the conditional-square
engine against two pointwise identities that hold exactly: for f = cos at
the doubling/tripling pair, E_1(S^2_{1,1}) = 1/2 and E_1(S^2_{2,1}) = 1
everywhere on the torus, because every nonconstant frequency of the squared
sums is killed by the six-point average.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import kstest

from fieldlimits.field_models import LinearFieldSpec, TorusFieldSpec
from fieldlimits.limits import (
    DEFAULT_T_GRID,
    VerificationReport,
    _rosenthal_node,
    clt_check,
    fclt_fdd_check,
    fdd_values,
    ks_statistic,
    ks_threshold,
    normal_cdf,
    normalized_sums,
    rosenthal_ratio,
    tightness_tail,
)

PAIR = TorusFieldSpec.named((((2,),), ((3,),)), "cos1")


# -- distribution helpers -----------------------------------------------------


def test_normal_cdf_reference_points() -> None:
    assert normal_cdf(0.0, 1.0) == 0.5
    assert abs(normal_cdf(1.959964, 1.0) - 0.975) < 1e-6
    assert abs(normal_cdf(-1.0, 4.0) - normal_cdf(-0.5, 1.0)) < 1e-12
    assert normal_cdf(-0.1, 0.0) == 0.0
    assert normal_cdf(0.0, 0.0) == 1.0


def test_ks_statistic_hand_example() -> None:
    ks = ks_statistic(np.array([0.1, 0.5, 0.9]), lambda x: min(max(x, 0.0), 1.0))
    assert math.isclose(ks, 7.0 / 30.0, rel_tol=1e-12)


def test_ks_statistic_matches_library() -> None:
    rng = np.random.default_rng(3)
    sample = rng.normal(size=257)
    ours = ks_statistic(sample, lambda x: normal_cdf(x, 1.0))
    theirs = kstest(sample, "norm").statistic
    assert math.isclose(ours, float(theirs), rel_tol=1e-9)


def test_ks_threshold_scale() -> None:
    assert math.isclose(ks_threshold(400), 1.5 * 1.36 / 20.0, rel_tol=1e-12)


def test_normalized_sums_validation() -> None:
    with pytest.raises(ValueError):
        normalized_sums(PAIR, (4, 4), 1, seed=0)
    with pytest.raises(TypeError):
        normalized_sums(object(), (4, 4), 8, seed=0)


# -- normal limit ----------------------------------------------------------------


def test_clt_check_passes_on_pair() -> None:
    rep = clt_check(PAIR, (32, 32), reps=500, seed=5)
    assert rep.passed
    assert rep.experiment == "clt"
    assert rep.detail["sigma2"] == 0.5
    assert rep.statistics["ks"]["value"] <= rep.thresholds["ks"]
    assert abs(rep.statistics["variance"]["value"] - 0.5) < 0.15


def test_clt_check_rejects_wrong_variance() -> None:
    rep = clt_check(PAIR, (32, 32), reps=500, seed=5, sigma2_value=2.0)
    assert not rep.passed


def test_clt_check_shares_sums() -> None:
    sums = normalized_sums(PAIR, (16, 16), 300, seed=9)
    a = clt_check(PAIR, (16, 16), 300, seed=9)
    b = clt_check(PAIR, (16, 16), 300, seed=9, sums=sums)
    assert a.statistics["ks"]["value"] == b.statistics["ks"]["value"]
    with pytest.raises(ValueError):
        clt_check(PAIR, (16, 16), 300, seed=9, sums=sums[:10])


def test_clt_check_degenerate_path() -> None:
    spec = LinearFieldSpec(kappa=0.0)
    rep = clt_check(spec, (8, 8), reps=50, seed=1, sigma2_value=0.0)
    assert rep.passed and rep.detail["degenerate"] is True
    assert rep.statistics["max_abs"]["value"] == 0.0


def test_clt_check_linear_needs_sigma2() -> None:
    with pytest.raises(ValueError):
        clt_check(LinearFieldSpec(), (8, 8), reps=10, seed=0)


# -- finite-dimensional laws -----------------------------------------------------


def test_fdd_values_shape_and_corner() -> None:
    values = fdd_values(PAIR, (8, 8), [(0.5, 0.5), (1.0, 1.0)], 50, seed=2)
    assert values.shape == (50, 2)
    sums = normalized_sums(PAIR, (8, 8), 50, seed=2)
    np.testing.assert_allclose(values[:, 1], sums, atol=1e-12)


def test_fclt_fdd_check_passes() -> None:
    rep = fclt_fdd_check(PAIR, (16, 16), reps=600, seed=7)
    assert rep.passed
    assert len(rep.detail["pairs"]) == 45
    first = rep.detail["pairs"][0]
    assert first["target_cov"] == pytest.approx(0.5 * 0.25 * 0.25)


def test_fclt_fdd_check_rejects_wrong_variance() -> None:
    rep = fclt_fdd_check(PAIR, (16, 16), reps=600, seed=7, sigma2_value=1.5)
    assert not rep.passed


def test_fclt_values_reuse_and_validation() -> None:
    ts = list(DEFAULT_T_GRID)
    values = fdd_values(PAIR, (16, 16), ts, 300, seed=4)
    a = fclt_fdd_check(PAIR, (16, 16), 300, seed=4)
    b = fclt_fdd_check(PAIR, (16, 16), 300, seed=4, values=values)
    assert a.detail["pairs"] == b.detail["pairs"]
    with pytest.raises(ValueError):
        fclt_fdd_check(PAIR, (16, 16), 300, seed=4, values=values[:, :3])


# -- tail curves ---------------------------------------------------------------------


def test_tightness_tail_shape_and_gate() -> None:
    rep = tightness_tail(
        PAIR, [1.0, 1.5, 2.0], [(16, 16), (32, 32)], reps=400, seed=3
    )
    assert rep.passed
    curves = rep.detail["curves"]
    assert set(curves) == {"(16, 16)", "(32, 32)"}
    for rows in curves.values():
        assert len(rows) == 3
        lam, val, se = rows[0]
        assert lam == 1.0 and val >= 0 and se >= 0


def test_tightness_tail_validation() -> None:
    with pytest.raises(ValueError):
        tightness_tail(PAIR, [1.0, 2.0], [(8, 8)], reps=50, seed=0)
    with pytest.raises(ValueError):
        tightness_tail(PAIR, [2.0, 1.5, 1.0], [(8, 8)], reps=50, seed=0)
    with pytest.raises(ValueError):
        tightness_tail(PAIR, [1.0, 1.5, 2.0], [(8, 8)], reps=1, seed=0)


# -- Rosenthal engine ------------------------------------------------------------------


def test_rosenthal_node_exact_conditional_squares() -> None:
    cond_pow, maxgrid, x_abs_p = _rosenthal_node(PAIR, 4, 4, 3.0, 11, 80, 0)
    # E_1(S^2_{1,1}) = 1/2 and E_1(S^2_{2,1}) = 1 pointwise
    assert cond_pow[0, 0] == pytest.approx(0.5**1.5, abs=1e-12)
    assert cond_pow[1, 0] == pytest.approx(1.0, abs=1e-12)
    assert maxgrid.shape == (4, 4)
    assert x_abs_p == pytest.approx(maxgrid[0, 0] ** 3.0, rel=1e-12)
    assert np.all(np.diff(maxgrid, axis=0) >= -1e-15)
    assert np.all(np.diff(maxgrid, axis=1) >= -1e-15)


def test_rosenthal_ratio_small_run() -> None:
    rep = rosenthal_ratio(
        PAIR, 3.0, [(2, 2), (4, 4), (8, 8)], reps=64, seed=13, groups=4
    )
    assert rep.experiment == "rosenthal"
    assert rep.detail["delta"] == 0.5
    ratios = rep.detail["ratios"]
    assert set(ratios) == {"(2, 2)", "(4, 4)", "(8, 8)"}
    for entry in ratios.values():
        assert 0 < entry["ratio"] < 10
    assert rep.statistics["log_slope"]["stderr"] > 0
    assert rep.passed


def test_rosenthal_ratio_validation() -> None:
    boxes = [(2, 2), (4, 4), (8, 8)]
    with pytest.raises(ValueError):
        rosenthal_ratio(PAIR, 2.0, boxes, reps=32, groups=4)
    with pytest.raises(ValueError):
        rosenthal_ratio(PAIR, 4.5, boxes, reps=32, groups=4)
    with pytest.raises(ValueError):
        rosenthal_ratio(PAIR, 3.0, boxes[:2], reps=32, groups=4)
    with pytest.raises(ValueError):
        rosenthal_ratio(PAIR, 3.0, [(2, 2), (4, 1), (2, 4)], reps=32, groups=4)
    with pytest.raises(ValueError):
        rosenthal_ratio(PAIR, 3.0, boxes, reps=4, groups=4)


def test_rosenthal_rejects_matrix_maps() -> None:
    from fieldlimits.transfer import cosine

    spec = TorusFieldSpec(
        (((2, 1), (0, 3)), ((5, 0), (0, 5))), cosine((1, 1))
    )
    with pytest.raises(ValueError):
        rosenthal_ratio(spec, 3.0, [(2, 2), (4, 4), (8, 8)], reps=32, groups=4)


def test_report_serializes() -> None:
    rep = clt_check(PAIR, (8, 8), reps=60, seed=2)
    blob = rep.to_json_obj()
    assert blob["experiment"] == "clt"
    assert isinstance(blob["passed"], bool)
    assert blob["thresholds"]["ks"] == ks_threshold(60)
