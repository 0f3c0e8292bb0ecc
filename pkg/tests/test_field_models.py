"""Tests for the field generators.

Monte Carlo oracles here use their own seeds and draw routines so that a
closed form in the library is always checked against an independent
estimate, never against itself.
"""

import math

import numpy as np
import pytest

from fieldlimits._rng import replicate_rng
from fieldlimits.field_models import (
    COEFF_RULES,
    H_REGISTRY,
    LinearFieldSpec,
    SampleGrid,
    TorusFieldSpec,
    TorusState,
    advance_state,
    estimate_centering,
    exact_sigma2_torus,
    innovation_law,
    linear_truncation_gap,
    sample_linear,
    sample_linear_batch,
    sample_torus,
    sample_torus_batch,
    sample_torus_from_state,
    torus_initial_state,
)
from fieldlimits.transfer import FourierObservable, cosine

RNG = np.random.default_rng(777)


# -- innovation laws --


def test_uniform_truncated_log_sq_closed_form_vs_mc():
    law = innovation_law("uniform")
    mc_rng = np.random.default_rng(123456)
    n = 1 << 22
    d = np.abs(mc_rng.uniform(-1, 1, n) - mc_rng.uniform(-1, 1, n))
    for t in (-5.0, 0.0, 0.3):
        val, err = law.truncated_log_sq_moment(t)
        assert err == 0.0
        cut = math.exp(t)
        vals = np.where(d > cut, np.log(np.maximum(d, cut)) ** 2, 0.0)
        mc = float(np.mean(vals))
        stderr = float(np.std(vals) / math.sqrt(n))
        assert val == pytest.approx(mc, abs=5 * stderr + 1e-9)


def test_uniform_truncated_log_sq_vanishes_past_support():
    law = innovation_law("uniform")
    val, err = law.truncated_log_sq_moment(math.log(2.0))
    assert val == 0.0 and err == 0.0
    val, _ = law.truncated_log_sq_moment(5.0)
    assert val == 0.0


def test_uniform_total_log_sq_moment_value():
    # full moment: F(2) = (ln 2)^2 - 3 ln 2 + 3.5, derived by antiderivative
    law = innovation_law("uniform")
    val, _ = law.truncated_log_sq_moment(-50.0)
    expected = math.log(2) ** 2 - 3 * math.log(2) + 3.5
    assert val == pytest.approx(expected, rel=1e-12)


def test_gaussian_truncated_log_sq_vs_mc():
    law = innovation_law("gaussian")
    val, err = law.truncated_log_sq_moment(0.0)
    assert err < 1e-9
    mc_rng = np.random.default_rng(99)
    n = 1 << 21
    d = np.abs(mc_rng.standard_normal(n) - mc_rng.standard_normal(n))
    vals = np.where(d > 1.0, np.log(np.maximum(d, 1.0)) ** 2, 0.0)
    stderr = float(np.std(vals) / math.sqrt(n))
    assert val == pytest.approx(float(np.mean(vals)), abs=5 * stderr)


def test_two_point_truncated_log_sq_exact():
    law = innovation_law("two_point")
    assert law.truncated_log_sq_moment(0.0) == (0.5 * math.log(2) ** 2, 0.0)
    assert law.truncated_log_sq_moment(math.log(2))[0] == 0.0


def test_pareto_log_moment_hook_records_error():
    law = innovation_law("pareto_log", 4.0)
    val, err = law.truncated_log_sq_moment(0.0)
    assert val > 0
    assert err > 0  # Monte Carlo hook must report its uncertainty
    again = law.truncated_log_sq_moment(0.0)
    assert again == (val, err)  # cached, deterministic


def test_law_variances():
    assert innovation_law("uniform").variance == pytest.approx(1 / 3)
    assert innovation_law("gaussian").variance == 1.0
    assert innovation_law("two_point").variance == 1.0
    assert innovation_law("pareto_log", 4.0).variance == pytest.approx(2.0)


def test_pareto_sample_variance_matches():
    law = innovation_law("pareto_log", 6.0)
    x = law.sample(np.random.default_rng(5), 1 << 20)
    assert float(np.var(x)) == pytest.approx(6 / 4, rel=0.05)


def test_law_validation():
    with pytest.raises(ValueError):
        innovation_law("cauchy")
    with pytest.raises(ValueError):
        innovation_law("pareto_log", 2.0)
    with pytest.raises(ValueError):
        innovation_law("uniform", 3.0)


def test_two_point_samples_are_signs():
    x = innovation_law("two_point").sample(np.random.default_rng(1), 1000)
    assert set(np.unique(x)) == {-1.0, 1.0}


# -- bounded observables --


def test_h_registry_spot_checks():
    for obs in H_REGISTRY.values():
        obs.spot_check(np.random.default_rng(3))


def test_clip_values():
    h = H_REGISTRY["clip"]
    np.testing.assert_array_equal(
        h.fn(np.array([-3.0, -0.5, 0.5, 3.0])), [-1.0, -0.5, 0.5, 1.0]
    )
    assert h.odd and h.bound == 1.0


# -- linear field spec --


def test_linear_spec_validation():
    with pytest.raises(ValueError):
        LinearFieldSpec(rho=1.0)
    with pytest.raises(ValueError):
        LinearFieldSpec(rho=0.0)
    with pytest.raises(ValueError):
        LinearFieldSpec(kappa=-1.0)
    with pytest.raises(ValueError):
        LinearFieldSpec(coeff_rule="nope")
    with pytest.raises(ValueError):
        LinearFieldSpec(observable="nope")
    with pytest.raises(ValueError):
        LinearFieldSpec(truncation_radius=-1)


def test_envelope_violation_rejected():
    COEFF_RULES["_bad"] = lambda i, j, kappa, rho: 2 * kappa * rho ** (i + j)
    try:
        with pytest.raises(ValueError):
            LinearFieldSpec(coeff_rule="_bad")
    finally:
        del COEFF_RULES["_bad"]


def test_radius_policy():
    assert LinearFieldSpec(kappa=0.0).radius() == 0
    assert LinearFieldSpec(coeff_rule="delta").radius() == 0
    r = LinearFieldSpec(rho=0.5).radius()
    # rectangular tail bound must sit below 1e-12 of the working scale
    assert 2 * 0.5 ** (r + 1) < 1e-12
    assert 2 * 0.5**r >= 1e-12
    assert LinearFieldSpec(truncation_radius=7).radius() == 7


def test_spec_digest_distinguishes():
    a = LinearFieldSpec()
    b = LinearFieldSpec(rho=0.25)
    assert a.digest() != b.digest()
    assert a.digest() == LinearFieldSpec().digest()


# -- linear sampling --


def test_zero_kappa_gives_zero_grid():
    grid = sample_linear(LinearFieldSpec(kappa=0.0), (9, 7), seed=4)
    assert grid.shape == (9, 7)
    np.testing.assert_array_equal(grid.values, np.zeros((9, 7)))


def test_delta_rule_reproduces_innovations():
    spec = LinearFieldSpec(coeff_rule="delta")
    grid = sample_linear(spec, (20, 20), seed=11)
    rng = replicate_rng(11, 0, spec.seed_digest())
    panel = spec.innovation.sample(rng, (20, 20))
    np.testing.assert_allclose(grid.values, panel, atol=1e-12)


def test_delta_rule_variance_one_third():
    spec = LinearFieldSpec(coeff_rule="delta")
    grid = sample_linear(spec, (320, 320), seed=2)
    assert float(np.var(grid.values)) == pytest.approx(1 / 3, abs=0.005)


def test_linear_batch_bit_identical_across_workers():
    spec = LinearFieldSpec(rho=0.4)
    a = sample_linear_batch(spec, (16, 16), reps=6, seed=9, workers=1)
    b = sample_linear_batch(spec, (16, 16), reps=6, seed=9, workers=4)
    assert a.tobytes() == b.tobytes()


def test_linear_requires_two_axes():
    with pytest.raises(ValueError):
        sample_linear(LinearFieldSpec(), (8,), seed=0)
    with pytest.raises(ValueError):
        sample_linear(LinearFieldSpec(), (8, 8, 8), seed=0)


def test_truncation_gap_below_contract():
    spec = LinearFieldSpec(rho=0.5, kappa=2.0)
    gap = linear_truncation_gap(spec, (12, 12), seed=3)
    scale = spec.kappa / (1 - spec.rho) ** 2
    assert gap < 1e-10 * scale


def test_centering_estimate_symmetric_law():
    spec = LinearFieldSpec(rho=0.3)
    value, stderr = estimate_centering(spec, reps=48, seed=7)
    assert stderr > 0
    assert abs(value) < 5 * stderr + 1e-3
    with pytest.raises(ValueError):
        estimate_centering(spec, reps=1)


def test_centering_shifts_values():
    spec = LinearFieldSpec(rho=0.3)
    base = sample_linear(spec, (10, 10), seed=5).values
    from dataclasses import replace

    shifted = sample_linear(replace(spec, centering=0.25), (10, 10), seed=5).values
    np.testing.assert_allclose(base - 0.25, shifted, atol=1e-14)


# -- torus spec validation --


def test_torus_spec_validation():
    with pytest.raises(ValueError):
        TorusFieldSpec.named((((2, 1), (0, 3)), ((3, 0), (0, 2))), "cos_sum2d")
    with pytest.raises(ValueError):  # coprimality under the flag
        TorusFieldSpec.named((((2,),), ((4,),)), "cos1")
    TorusFieldSpec.named((((2,),), ((4,),)), "cos1", completely_commuting=False)
    with pytest.raises(ValueError):  # observable dimension
        TorusFieldSpec.named((((2,),),), "cos_sum2d")
    with pytest.raises(TypeError):
        TorusFieldSpec((((2,),),), observable=lambda x: x)


# -- torus sampling --


def test_torus_zero_observable():
    spec = TorusFieldSpec((((2,),),), FourierObservable(1))
    grid = sample_torus(spec, (12,), seed=3)
    np.testing.assert_array_equal(grid.values, np.zeros(12))


def test_torus_doubling_map_variance_and_decorrelation():
    spec = TorusFieldSpec.named((((2,),),), "cos1")
    batch = sample_torus_batch(spec, (6,), reps=3000, seed=21)
    var0 = float(np.var(batch[:, 0]))
    assert var0 == pytest.approx(0.5, abs=0.03)
    for k in range(1, 6):
        cov = float(np.mean(batch[:, 0] * batch[:, k]))
        assert abs(cov) < 0.04, k


def test_torus_nesting_order_commutes_exactly():
    f = cosine(1)
    spec_a = TorusFieldSpec((((2,),), ((3,),)), f)
    spec_b = TorusFieldSpec((((3,),), ((2,),)), f)
    state = TorusState((123456789012345678901234567890123456789 % (1 << 128),), 128)
    ga = sample_torus_from_state(spec_a, (7, 5), state)
    gb = sample_torus_from_state(spec_b, (5, 7), state)
    np.testing.assert_array_equal(ga.values, gb.values.T)


def test_torus_semigroup_advance_exact():
    spec = TorusFieldSpec.named((((2,),), ((3,),)), "mix")
    state = torus_initial_state(spec, (10, 10), seed=17)
    full = sample_torus_from_state(spec, (8, 8), state)
    moved = advance_state(spec, state, (3, 2))
    sub = sample_torus_from_state(spec, (5, 6), moved)
    np.testing.assert_array_equal(full.values[3:, 2:], sub.values)


def test_torus_batch_bit_identical_across_workers():
    spec = TorusFieldSpec.named((((2,),), ((3,),)), "cos1")
    a = sample_torus_batch(spec, (6, 6), reps=5, seed=13, workers=1)
    b = sample_torus_batch(spec, (6, 6), reps=5, seed=13, workers=3)
    assert a.tobytes() == b.tobytes()


def test_torus_stationarity_of_marginals():
    spec = TorusFieldSpec.named((((2,),),), "cos1")
    batch = sample_torus_batch(spec, (9,), reps=4000, seed=31)
    # same marginal law at every cell: compare empirical CDFs at two cells
    a, b = np.sort(batch[:, 1]), np.sort(batch[:, 7])
    grid = np.linspace(-1, 1, 41)
    fa = np.searchsorted(a, grid) / a.size
    fb = np.searchsorted(b, grid) / b.size
    assert float(np.max(np.abs(fa - fb))) < 1.5 * 1.36 * math.sqrt(2 / a.size)


def test_torus_matrix_model_2d():
    spec = TorusFieldSpec((((2, 1), (0, 3)),), cosine((1, 1)))
    grid = sample_torus(spec, (40,), seed=8)
    assert grid.shape == (40,)
    assert np.all(np.abs(grid.values) <= 1.0 + 1e-12)


def test_bits_policy_covers_horizon():
    spec = TorusFieldSpec.named((((2,),),), "cos1")
    state = torus_initial_state(spec, (100,), seed=1)
    # doubling map consumes one dyadic bit per step: need depth past horizon
    assert state.bits >= 100 + 64
    small = torus_initial_state(spec, (4,), seed=1)
    assert small.bits == 128


# -- raw grid serialization --


def test_grid_dump_load_roundtrip(tmp_path):
    spec = TorusFieldSpec.named((((2,),), ((3,),)), "cos1")
    grid = sample_torus(spec, (5, 4), seed=99)
    path = tmp_path / "grid.raw"
    grid.dump(path)
    back = SampleGrid.load(path)
    assert back.shape == grid.shape
    np.testing.assert_array_equal(back.values, grid.values)
    raw = path.read_bytes()
    assert raw[:8] == b"FLDGRID1"
    assert len(raw) == 32 + 5 * 4 * 8


def test_grid_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.raw"
    path.write_bytes(b"not a grid file at all")
    with pytest.raises(ValueError):
        SampleGrid.load(path)


def test_grid_validation():
    with pytest.raises(ValueError):
        SampleGrid((3,), np.zeros((4,)), {})
    with pytest.raises(ValueError):
        SampleGrid((2,), np.array([1.0, np.nan]), {})


def test_grid_content_digest_stable():
    spec = TorusFieldSpec.named((((2,),),), "cos1")
    g1 = sample_torus(spec, (6,), seed=1)
    g2 = sample_torus(spec, (6,), seed=1)
    assert g1.content_digest() == g2.content_digest()
    g3 = sample_torus(spec, (6,), seed=2)
    assert g1.content_digest() != g3.content_digest()


# -- exact covariance series --


def test_sigma2_lacunary_pair_is_half():
    spec = TorusFieldSpec.named((((2,),), ((3,),)), "cos1")
    assert exact_sigma2_torus(spec) == pytest.approx(0.5, abs=1e-14)


def test_sigma2_mix_under_doubling():
    # Var(f) + 2 Cov(f, f.T) = 1 + 2*(1/2): the frequency pair (1,2) resonates
    spec = TorusFieldSpec.named((((2,),),), "mix")
    assert exact_sigma2_torus(spec) == pytest.approx(2.0, abs=1e-14)


def test_sigma2_matches_bruteforce_quadrature():
    spec = TorusFieldSpec.named((((2,),),), "mix")
    f = spec.observable
    x = (np.arange(1 << 14) + 0.5) / (1 << 14)
    fx = f.evaluate_real(x) - f.mean.real
    total = float(np.mean(fx * fx))
    for k in range(1, 9):
        fk = f.evaluate_real(np.mod(2**k * x, 1.0)) - f.mean.real
        total += 2 * float(np.mean(fx * fk))
    assert exact_sigma2_torus(spec) == pytest.approx(total, abs=1e-9)


def test_sigma2_zero_observable():
    spec = TorusFieldSpec((((2,),),), FourierObservable(1))
    assert exact_sigma2_torus(spec) == 0.0


def test_sigma2_requires_fourier_form():
    spec = TorusFieldSpec.named((((2,),),), "cos1")
    object.__setattr__(spec, "observable", lambda x: x)
    with pytest.raises(TypeError):
        exact_sigma2_torus(spec)
