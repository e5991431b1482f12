from __future__ import annotations

import numpy as np
import pytest

from src.tilehmm.errors import ParameterError, ShapeError
from src.tilehmm.model import ProbeEffects, ProbeTrack
from src.tilehmm.regions import (
    ProbabilityTrack,
    Region,
    build_probability_track,
    call_regions,
    evaluate_calls,
    rank_regions,
    score_region,
    significant_runs,
)


def _track(p_peak, p_joint=None, delta=None, positions=None) -> ProbabilityTrack:
    n = len(p_peak)
    return ProbabilityTrack(
        "chr1",
        positions if positions is not None else np.arange(n) * 35 + 100,
        p_peak,
        p_joint if p_joint is not None else p_peak,
        delta if delta is not None else np.ones(n),
    )


def _region(chrom: str, start: int, score: float, first: int = 0, last: int = 0) -> Region:
    return Region(chrom, start, start + 60, first, last, score, 0.99)


def test_runs_above_cutoff():
    assert significant_runs(np.array([0.95, 0.96, 0.2, 0.98]), 0.9) == [(0, 1), (3, 3)]
    assert significant_runs(np.array([0.95, 0.96, 0.2, 0.98]), 0.9, min_probes=2) == [(0, 1)]
    assert significant_runs(np.array([0.1, 0.2]), 0.9) == []


def test_region_score_is_weighted_mean():
    track = _track([0.99, 0.99], p_joint=[0.9, 0.1], delta=[2.0, 10.0])
    (region,) = call_regions(track)
    assert region.score == pytest.approx(2.8)
    assert score_region(region, track) == pytest.approx(2.8)


def test_zero_weight_falls_back_to_unweighted_mean(caplog):
    track = _track([0.99, 0.99], p_joint=[0.0, 0.0], delta=[2.0, 4.0])
    (region,) = call_regions(track)
    assert region.unweighted and region.score == pytest.approx(3.0)
    assert "unweighted" in caplog.text


def test_region_coordinates_include_probe_length():
    track = _track([0.2, 0.95, 0.97, 0.1], positions=[100, 200, 600, 700])
    (region,) = call_regions(track, probe_length=25)
    assert (region.start, region.end) == (200, 625)
    assert (region.first_probe, region.last_probe, region.n_probes) == (1, 2, 2)
    assert region.peak_probability == pytest.approx(0.97)
    assert list(region.probe_indices) == [1, 2]


def test_ranking_is_by_descending_score_with_stable_ties():
    a, b, c = _region("chr1", 100, 1.0), _region("chr1", 500, 3.0), _region("chr1", 900, 2.0)
    assert rank_regions([a, b, c]) == [b, c, a]
    tie1, tie2 = _region("chr2", 50, 2.0), _region("chr1", 700, 2.0)
    assert rank_regions([tie1, tie2]) == [tie2, tie1]


def test_call_parameters_are_validated():
    track = _track([0.95])
    with pytest.raises(ParameterError):
        call_regions(track, cutoff=1.0)
    with pytest.raises(ParameterError):
        call_regions(track, min_probes=0)
    with pytest.raises(ParameterError):
        call_regions(track, probe_length=0)


def test_probability_track_validation():
    with pytest.raises(ShapeError):
        ProbabilityTrack("chr1", [0, 1], [0.5], [0.5], [1.0])
    with pytest.raises(ParameterError):
        ProbabilityTrack("chr1", [0], [1.5], [0.5], [1.0])


def test_build_track_uses_effects_or_mean_treatment():
    track = ProbeTrack("chr1", [0, 35], [[1.0, 3.0], [2.0, 4.0]])
    pooled = build_probability_track(track, [0.1, 0.9], [0.05, 0.8])
    assert pooled.delta_hat.tolist() == [2.0, 3.0]
    with_effects = build_probability_track(track, [0.1, 0.9], [0.05, 0.8], ProbeEffects([0, 0], [5.0, 6.0]))
    assert with_effects.delta_hat.tolist() == [5.0, 6.0]


def test_evaluate_calls_counts_recall_and_boundary_errors():
    truth = [
        Region("chr1", 100, 300, 2, 7, 1.0, 1.0),
        Region("chr1", 1000, 1200, 30, 35, 1.0, 1.0),
        Region("chr2", 100, 200, 2, 4, 1.0, 1.0),
    ]
    called = [
        Region("chr1", 130, 320, 3, 8, 2.0, 0.99),
        Region("chr2", 500, 600, 14, 16, 2.0, 0.99),
    ]
    result = evaluate_calls(called, truth)
    assert result.n_recovered == 1 and result.recall == pytest.approx(1 / 3)
    assert result.false_calls == 1
    assert result.boundary_quantile(0.9) == (1.0, 1.0)
