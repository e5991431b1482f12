from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from src.tilehmm.errors import InvalidDistanceError, ModeError, NumericalError, ParameterError, ShapeError
from src.tilehmm.model import (
    GlobalParams,
    Hyperpriors,
    Mode,
    ModelVariant,
    ProbeEffects,
    ProbeTrack,
    complete_data_logposterior,
    default_hyperpriors,
    effects_logdensity,
    emission_logdensity,
    emission_table,
    generator_matrix,
    log_prior,
    log_prior_terms,
    logposterior_components,
    median_spacing,
    replicate_sum,
    thin_track,
    transition_entries,
    transition_matrix,
)
from tests.oracles import emission_oracle, kernel, random_effects, random_params, random_track


def _params(**kw: float) -> GlobalParams:
    base = dict(mu=0.0, delta=2.0, sigma2=0.4, tau2=0.4, eta2=0.1, xi2=1.0, p0=0.01, p1=0.95, pi1=0.0032, lam=1 / 356)
    base.update(kw)
    return GlobalParams(**base)


def test_kernel_matches_matrix_exponential_at_table_anchor():
    params = _params(pi1=0.0032, lam=1 / 356)
    np.testing.assert_allclose(transition_matrix(35, params), kernel(params, 35), atol=1e-10, rtol=0)


def test_kernel_zero_distance_is_identity():
    np.testing.assert_allclose(transition_matrix(0, _params()), np.eye(2), atol=1e-15)


def test_kernel_tends_to_stationary_for_long_gaps():
    params = _params(pi1=0.3, lam=0.01)
    T = transition_matrix(1e5, params)
    np.testing.assert_allclose(T, np.tile([0.7, 0.3], (2, 1)), atol=1e-12)


def test_kernel_properties_on_random_points():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        pi1 = rng.uniform(1e-4, 0.999)
        lam = 10 ** rng.uniform(-5, -1.5)
        d1, d2 = rng.uniform(0, 2000, size=2)
        params = _params(pi1=pi1, lam=lam)
        T1, T2 = transition_matrix(d1, params), transition_matrix(d2, params)
        np.testing.assert_allclose(T1.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(T1 @ T2, transition_matrix(d1 + d2, params), atol=1e-10)
        np.testing.assert_allclose(params.stationary @ T1, params.stationary, atol=1e-10)
        np.testing.assert_allclose(T1, kernel(params, d1), atol=1e-10)


def test_tiny_rate_keeps_precision():
    params = _params(pi1=0.5, lam=1e-12)
    T = transition_matrix(1.0, params)
    assert T[0, 1] == pytest.approx(0.5e-12, rel=1e-9)


def test_negative_distance_rejected():
    with pytest.raises(InvalidDistanceError):
        transition_matrix(-1.0, _params())
    with pytest.raises(InvalidDistanceError):
        transition_entries([35.0, -2.0], _params())


def test_generator_rows_sum_to_zero_and_rates_split():
    params = _params(pi1=0.2, lam=0.05)
    Q = generator_matrix(params)
    np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-15)
    assert params.rate_on == pytest.approx(0.01)
    assert params.rate_off == pytest.approx(0.04)
    assert params.expected_peak_length == pytest.approx(25.0)


def test_from_peak_length_round_trips_expected_length():
    params = GlobalParams.from_peak_length(
        peak_length=465.0, pi1=0.0032, mu=0, delta=3.19, sigma2=0.33, tau2=0.33, eta2=0.1, xi2=1.0, p0=0.006, p1=0.948
    )
    assert params.expected_peak_length == pytest.approx(465.0)


@pytest.mark.parametrize("field,value", [("p0", 0.0), ("p1", 1.0), ("pi1", 1.5), ("sigma2", 0.0), ("lam", -1.0)])
def test_invalid_params_rejected(field, value):
    with pytest.raises(ParameterError):
        _params(**{field: value})


def test_nan_param_rejected():
    with pytest.raises(ParameterError):
        _params(mu=float("nan"))


def test_emission_single_value_matches_scalar_logpdf():
    params = _params(mu=-0.111, delta=2.25, tau2=0.41, sigma2=0.41)
    track = ProbeTrack("chr1", [0], [[2.139]])
    effects = ProbeEffects([-0.111], [2.25])
    expected = stats.norm.logpdf(2.139, loc=-0.111 + 2.25, scale=math.sqrt(0.41))
    assert emission_logdensity(0, 1, track, effects, params) == pytest.approx(expected, abs=1e-12)


def test_emission_table_matches_columnwise_oracle():
    rng = np.random.default_rng(3)
    params = random_params(rng)
    track = random_track(rng, 30, n_t=3, n_c=2)
    effects = random_effects(rng, 30, params)
    np.testing.assert_allclose(emission_table(track, effects, params), emission_oracle(track, effects, params), atol=1e-10)
    np.testing.assert_allclose(emission_table(track, None, params), emission_oracle(track, None, params), atol=1e-10)
    for i in (0, 17):
        for h in (0, 1):
            assert emission_logdensity(i, h, track, effects, params) == pytest.approx(
                emission_table(track, effects, params)[i, h], abs=1e-12
            )


def test_emission_invariant_to_replicate_order():
    rng = np.random.default_rng(11)
    params = random_params(rng)
    track = random_track(rng, 20, n_t=3, n_c=3)
    shuffled = ProbeTrack("chrT", track.positions, track.treatment[:, [2, 0, 1]], track.controls[:, [1, 2, 0]])
    assert np.array_equal(emission_table(track, None, params), emission_table(shuffled, None, params))


def test_replicate_sum_without_columns_is_zero():
    assert np.array_equal(replicate_sum(np.empty((3, 0))), np.zeros(3))


def test_emission_bad_state_and_index():
    track = ProbeTrack("chr1", [0, 10], [1.0, 2.0])
    with pytest.raises(ParameterError):
        emission_logdensity(0, 2, track, None, _params())
    with pytest.raises(ShapeError):
        emission_logdensity(5, 0, track, None, _params())


def test_track_validation():
    with pytest.raises(ParameterError):
        ProbeTrack("chr1", [0, 0], [1.0, 2.0])
    with pytest.raises(ShapeError):
        ProbeTrack("chr1", [0, 10], [[1.0], [2.0], [3.0]])
    with pytest.raises(NumericalError):
        ProbeTrack("chr1", [0, 10], [1.0, float("inf")])
    with pytest.raises(ShapeError):
        ProbeEffects([0.0, 1.0], [0.0]).check_track(ProbeTrack("chr1", [0], [1.0]))


def test_track_arrays_are_frozen():
    track = ProbeTrack("chr1", [0, 10], [1.0, 2.0])
    with pytest.raises(ValueError):
        track.treatment[0, 0] = 5.0
    assert track.n_c == 0 and track.distances.tolist() == [10.0]


def test_variant_auto_and_names():
    assert ModelVariant.auto(1, 0).mode is Mode.POOLED
    assert ModelVariant.auto(1, 1).hierarchical
    assert ModelVariant.from_name("pooled", 3, 3).mode is Mode.POOLED
    with pytest.raises(ParameterError):
        ModelVariant.from_name("fancy", 1, 0)


def test_effects_density_rejected_in_pooled_mode():
    params = _params()
    with pytest.raises(ModeError):
        effects_logdensity(None, params)
    with pytest.raises(ModeError):
        effects_logdensity(ProbeEffects.constant(3, 0.0, 2.0), params, ModelVariant(Mode.POOLED))


def test_effects_density_matches_scipy():
    rng = np.random.default_rng(2)
    params = random_params(rng)
    effects = random_effects(rng, 12, params)
    expected = stats.norm.logpdf(effects.mu_i, params.mu, math.sqrt(params.eta2)).sum() + stats.norm.logpdf(
        effects.delta_i, params.delta, math.sqrt(params.xi2)
    ).sum()
    assert effects_logdensity(effects, params) == pytest.approx(expected, abs=1e-9)


def test_pooled_prior_skips_effect_variances():
    params, hyper = _params(), default_hyperpriors(35)
    pooled = log_prior_terms(params, hyper, ModelVariant(Mode.POOLED))
    assert "eta2" not in pooled and "xi2" not in pooled
    full = log_prior_terms(params, hyper, ModelVariant())
    assert log_prior(params, hyper) == pytest.approx(math.fsum(full.values()))


def test_default_hyperpriors_scale_rate_prior_to_spacing():
    assert default_hyperpriors(35).lambda_prior == (1.1, 350.0)
    assert Hyperpriors().with_overrides({"p0_prior": [2, 50]}).p0_prior == (2.0, 50.0)
    with pytest.raises(ParameterError):
        Hyperpriors().with_overrides({"unknown_prior": [1, 1]})
    with pytest.raises(ParameterError):
        Hyperpriors(sigma2_prior=(0.0, 1.0))


def test_complete_data_logposterior_sums_named_terms():
    rng = np.random.default_rng(5)
    params = random_params(rng)
    track = random_track(rng, 8, n_t=2, n_c=1)
    effects = random_effects(rng, 8, params)
    H = rng.integers(0, 2, 8)
    E = rng.integers(0, 2, 8)
    hyper = default_hyperpriors(35)
    parts = logposterior_components(track, H, E, effects, params, hyper)
    assert set(parts) == {"initial", "transitions", "hybridization", "emissions", "effects", "priors"}
    table = emission_oracle(track, effects, params)
    assert parts["emissions"] == pytest.approx(table[np.arange(8), H].sum(), abs=1e-9)
    T = [kernel(params, d) for d in track.distances]
    expected_trans = sum(math.log(T[i][E[i], E[i + 1]]) for i in range(7))
    assert parts["transitions"] == pytest.approx(expected_trans, abs=1e-9)
    assert complete_data_logposterior(track, H, E, effects, params, hyper) == pytest.approx(math.fsum(parts.values()))


def test_logposterior_rejects_bad_states():
    track = ProbeTrack("chr1", [0, 10], [1.0, 2.0])
    hyper = default_hyperpriors()
    with pytest.raises(ParameterError):
        logposterior_components(track, [0, 2], [0, 0], None, _params(), hyper)
    with pytest.raises(ShapeError):
        logposterior_components(track, [0], [0, 0], None, _params(), hyper)
    with pytest.raises(ModeError):
        logposterior_components(track, [0, 0], [0, 0], None, _params(), hyper, ModelVariant())


def test_thin_track_and_median_spacing():
    track = ProbeTrack("chr1", [0, 35, 70, 105, 140], np.arange(5.0), np.arange(5.0))
    thinned = thin_track(track, 2)
    assert thinned.positions.tolist() == [0, 70, 140]
    assert median_spacing([track, thinned]) == pytest.approx(35.0)
    assert median_spacing([ProbeTrack("chr2", [5], [1.0])]) == 1.0
    with pytest.raises(ParameterError):
        thin_track(track, 0)
