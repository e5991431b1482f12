from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from src.tilehmm.errors import EmptyInputError, ShapeError
from src.tilehmm.inference import (
    CollapsedEmissions,
    collapse_emissions,
    forward_backward,
    infer_track,
    mix_emissions,
    sample_state_path,
)
from src.tilehmm.model import ProbeTrack, emission_table
from tests.oracles import (
    enumerate_joint_posterior,
    enumerate_region_posterior,
    random_effects,
    random_params,
    random_track,
)


def _instance(rng: np.random.Generator, n: int):
    params = random_params(rng)
    track = random_track(rng, n, n_t=int(rng.integers(1, 3)), n_c=int(rng.integers(0, 2)))
    effects = random_effects(rng, n, params)
    return params, track, emission_table(track, effects, params)


def test_forward_backward_matches_path_enumeration():
    rng = np.random.default_rng(101)
    for _ in range(200):
        n = int(rng.integers(1, 13))
        params, track, table = _instance(rng, n)
        post = forward_backward(mix_emissions(table, params.p0, params.p1), track.distances, params)
        ref = enumerate_region_posterior(table, track.distances, params)
        np.testing.assert_allclose(post.gamma, ref["gamma"], atol=1e-10)
        np.testing.assert_allclose(post.xi, ref["xi"], atol=1e-10)
        np.testing.assert_allclose(post.joint_he, ref["joint_he"], atol=1e-10)
        assert post.loglik == pytest.approx(ref["loglik"], abs=1e-10)


def test_collapsed_chain_matches_literal_four_state_chain():
    rng = np.random.default_rng(202)
    for _ in range(60):
        n = int(rng.integers(1, 9))
        params, track, table = _instance(rng, n)
        post = forward_backward(mix_emissions(table, params.p0, params.p1), track.distances, params)
        ref = enumerate_joint_posterior(table, track.distances, params)
        np.testing.assert_allclose(post.joint_he, ref["joint_he"], atol=1e-10)
        assert post.loglik == pytest.approx(ref["loglik"], abs=1e-10)


def test_posterior_normalization():
    rng = np.random.default_rng(4)
    params, track, table = _instance(rng, 40)
    post = forward_backward(mix_emissions(table, params.p0, params.p1), track.distances, params)
    np.testing.assert_allclose(post.gamma.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(post.xi.sum(axis=(1, 2)), 1.0, atol=1e-12)
    np.testing.assert_allclose(post.xi.sum(axis=2), post.gamma[:-1], atol=1e-10)
    np.testing.assert_allclose(post.joint_he.sum(axis=1), post.gamma, atol=1e-12)
    assert np.all(post.p_joint <= post.p_peak + 1e-15)


def test_reversed_track_has_same_likelihood_and_mirrored_posterior():
    rng = np.random.default_rng(5)
    for _ in range(50):
        params, track, table = _instance(rng, int(rng.integers(1, 60)))
        emissions = mix_emissions(table, params.p0, params.p1)
        flipped = CollapsedEmissions(emissions.log_b[::-1].copy(), emissions.log_r[::-1].copy())
        forward = forward_backward(emissions, track.distances, params)
        backward = forward_backward(flipped, track.distances[::-1].copy(), params)
        assert backward.loglik == pytest.approx(forward.loglik, rel=1e-12, abs=1e-10)
        np.testing.assert_allclose(backward.gamma[::-1], forward.gamma, atol=1e-10)
        np.testing.assert_allclose(backward.joint_he[::-1], forward.joint_he, atol=1e-10)


def test_stronger_peak_evidence_never_lowers_peak_posterior():
    rng = np.random.default_rng(6)
    for _ in range(40):
        params, track, table = _instance(rng, int(rng.integers(2, 30)))
        emissions = mix_emissions(table, params.p0, params.p1)
        base = forward_backward(emissions, track.distances, params).gamma[:, 1]
        for i in range(len(emissions)):
            for bump in (0.5, 3.0):
                log_b = emissions.log_b.copy()
                log_b[i, 1] += bump
                raised = forward_backward(CollapsedEmissions(log_b, emissions.log_r), track.distances, params)
                assert raised.gamma[i, 1] >= base[i] - 1e-12


def test_single_probe_posterior_is_bayes_rule():
    rng = np.random.default_rng(8)
    params, track, table = _instance(rng, 1)
    emissions = mix_emissions(table, params.p0, params.p1)
    post = forward_backward(emissions, [], params)
    w = params.stationary * np.exp(emissions.log_b[0])
    np.testing.assert_allclose(post.gamma[0], w / w.sum(), atol=1e-12)
    assert post.xi.shape == (0, 2, 2)


def test_huge_distance_decouples_neighbours():
    rng = np.random.default_rng(9)
    params = random_params(rng, lam=1.0)
    table = rng.normal(size=(2, 2))
    emissions = mix_emissions(table, params.p0, params.p1)
    post = forward_backward(emissions, [1e6], params)
    for i in range(2):
        w = params.stationary * np.exp(emissions.log_b[i])
        np.testing.assert_allclose(post.gamma[i], w / w.sum(), atol=1e-12)


def test_extreme_emissions_stay_finite():
    rng = np.random.default_rng(10)
    params = random_params(rng)
    table = np.array([[-5000.0, -10.0], [-10.0, -4000.0], [-800.0, -900.0]])
    post = forward_backward(mix_emissions(table, params.p0, params.p1), [30.0, 30.0], params)
    assert np.all(np.isfinite(post.gamma)) and np.isfinite(post.loglik)


def test_degenerate_hybridization_rates_are_allowed():
    table = np.array([[-1.0, -2.0], [-3.0, -0.5]])
    emissions = mix_emissions(table, 0.0, 1.0)
    np.testing.assert_allclose(emissions.log_b, table)
    assert emissions.log_r[0, 0] == -np.inf


def test_shape_and_empty_errors():
    rng = np.random.default_rng(12)
    params = random_params(rng)
    emissions = mix_emissions(rng.normal(size=(3, 2)), params.p0, params.p1)
    with pytest.raises(ShapeError):
        forward_backward(emissions, [10.0], params)
    with pytest.raises(EmptyInputError):
        forward_backward(CollapsedEmissions(np.zeros((0, 2)), np.zeros((0, 2))), [], params)


def test_infer_track_pooled_uses_global_means():
    rng = np.random.default_rng(13)
    params = random_params(rng)
    track = ProbeTrack("chr1", [0, 35, 70], [[0.1], [3.0], [0.2]])
    post = infer_track(track, None, params)
    ref = enumerate_region_posterior(emission_table(track, None, params), track.distances, params)
    np.testing.assert_allclose(post.gamma, ref["gamma"], atol=1e-10)


def test_sampled_paths_follow_enumerated_posterior():
    rng = np.random.default_rng(14)
    params = random_params(rng, pi1=0.4, lam=0.02)
    track = random_track(rng, 3, n_t=1, n_c=0)
    emissions = collapse_emissions(track, None, params)
    ref = enumerate_region_posterior(emission_table(track, None, params), track.distances, params)
    paths = sample_state_path(emissions, track.distances, params, rng=np.random.default_rng(15), size=1_000_000)
    codes = paths[:, 0] * 4 + paths[:, 1] * 2 + paths[:, 2]
    observed = np.bincount(codes, minlength=8)
    expected = ref["weights"] * paths.shape[0]
    keep = expected > 0
    _, pvalue = stats.chisquare(observed[keep], expected[keep] * observed[keep].sum() / expected[keep].sum())
    assert pvalue > 0.001


def test_single_path_sampler_is_seeded_and_matches_batch_marginals():
    rng = np.random.default_rng(16)
    params = random_params(rng, pi1=0.3)
    track = random_track(rng, 6, n_t=1, n_c=0)
    emissions = collapse_emissions(track, None, params)
    a = sample_state_path(emissions, track.distances, params, rng=42)
    b = sample_state_path(emissions, track.distances, params, rng=42)
    assert np.array_equal(a, b)
    draws = np.array([sample_state_path(emissions, track.distances, params, rng=s) for s in range(4000)])
    gamma = forward_backward(emissions, track.distances, params).gamma[:, 1]
    np.testing.assert_allclose(draws.mean(axis=0), gamma, atol=0.04)
