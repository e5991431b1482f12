from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from .errors import ParameterError, ShapeError
from .model import FloatArray, IntArray, ProbeEffects, ProbeTrack, replicate_sum

logger = logging.getLogger(__name__)

ZERO_WEIGHT = 1e-12


@dataclass(frozen=True, eq=False)
class ProbabilityTrack:
    """Per-probe outputs of a fit, the input of region calling.

    ``p_peak`` is P(E=1), ``p_joint`` is P(H=1, E=1) (the region-score weight)
    and ``delta_hat`` the per-probe enrichment estimate that gets averaged.
    """

    chromosome_id: str
    positions: IntArray
    p_peak: FloatArray
    p_joint: FloatArray
    delta_hat: FloatArray

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        arrays = {}
        for name in ("p_peak", "p_joint", "delta_hat"):
            values = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if values.shape != positions.shape:
                raise ShapeError(
                    f"{name} has {values.size} entries, expected {positions.size} ({self.chromosome_id})"
                )
            arrays[name] = values
        for name in ("p_peak", "p_joint"):
            if np.any(arrays[name] < -1e-9) or np.any(arrays[name] > 1 + 1e-9):
                raise ParameterError(f"{name} must lie in [0, 1] ({self.chromosome_id})")
            arrays[name] = np.clip(arrays[name], 0.0, 1.0)
        object.__setattr__(self, "positions", positions)
        for name, values in arrays.items():
            object.__setattr__(self, name, values)

    def __len__(self) -> int:
        return int(self.positions.shape[0])


def build_probability_track(
    track: ProbeTrack,
    p_peak: ArrayLike,
    p_joint: ArrayLike,
    effects: ProbeEffects | None = None,
) -> ProbabilityTrack:
    """Attach enrichment estimates: ``delta_i`` when effects exist, else mean treatment."""
    if effects is not None:
        effects.check_track(track)
        delta_hat = np.array(effects.delta_i)
    else:
        delta_hat = replicate_sum(track.treatment) / track.n_t
    return ProbabilityTrack(track.chromosome_id, track.positions, p_peak, p_joint, delta_hat)


@dataclass(frozen=True)
class Region:
    chromosome_id: str
    start: int
    end: int
    first_probe: int
    last_probe: int
    score: float
    peak_probability: float
    unweighted: bool = field(default=False, compare=False)

    @property
    def probe_indices(self) -> range:
        return range(self.first_probe, self.last_probe + 1)

    @property
    def n_probes(self) -> int:
        return self.last_probe - self.first_probe + 1


def significant_runs(p_peak: FloatArray, cutoff: float, min_probes: int = 1) -> list[tuple[int, int]]:
    """Maximal runs (first, last) of consecutive probes with p_peak >= cutoff."""
    mask = np.asarray(p_peak) >= cutoff
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    lasts = np.flatnonzero(edges == -1) - 1
    keep = (lasts - starts + 1) >= min_probes
    return [(int(a), int(b)) for a, b in zip(starts[keep], lasts[keep])]


def _weighted_score(weights: FloatArray, values: FloatArray) -> tuple[float, bool]:
    total = float(weights.sum())
    if total < ZERO_WEIGHT:
        return float(values.mean()), True
    return float(np.dot(weights, values) / total), False


def score_region(region: Region, track: ProbabilityTrack) -> float:
    """Weighted mean of ``delta_hat`` over the region, weights P(H=1, E=1)."""
    idx = slice(region.first_probe, region.last_probe + 1)
    score, _ = _weighted_score(track.p_joint[idx], track.delta_hat[idx])
    return score


def call_regions(
    track: ProbabilityTrack,
    cutoff: float = 0.9,
    min_probes: int = 1,
    probe_length: int = 25,
) -> list[Region]:
    """Scored regions in genomic order, one per run of significant probes."""
    if not 0.0 < cutoff < 1.0:
        raise ParameterError(f"cutoff must lie in (0, 1), got {cutoff}")
    if min_probes < 1:
        raise ParameterError(f"min_probes must be >= 1, got {min_probes}")
    if probe_length < 1:
        raise ParameterError(f"probe_length must be >= 1, got {probe_length}")

    regions = []
    for first, last in significant_runs(track.p_peak, cutoff, min_probes):
        idx = slice(first, last + 1)
        score, unweighted = _weighted_score(track.p_joint[idx], track.delta_hat[idx])
        if unweighted:
            logger.warning(
                "Region %s:%d-%d has no hybridized weight; using unweighted mean",
                track.chromosome_id,
                int(track.positions[first]),
                int(track.positions[last]),
            )
        regions.append(
            Region(
                chromosome_id=track.chromosome_id,
                start=int(track.positions[first]),
                end=int(track.positions[last]) + probe_length,
                first_probe=first,
                last_probe=last,
                score=score,
                peak_probability=float(track.p_peak[idx].max()),
                unweighted=unweighted,
            )
        )
    logger.info("Called %d regions on %s at cutoff %.3g", len(regions), track.chromosome_id, cutoff)
    return regions


def rank_regions(regions: Iterable[Region]) -> list[Region]:
    """Descending score; ties by chromosome then start."""
    return sorted(regions, key=lambda r: (-r.score, r.chromosome_id, r.start))


@dataclass(frozen=True)
class CallEvaluation:
    n_true: int
    n_called: int
    n_recovered: int
    false_calls: int
    start_errors: IntArray
    end_errors: IntArray

    @property
    def recall(self) -> float:
        return self.n_recovered / self.n_true if self.n_true else 1.0

    def boundary_quantile(self, q: float = 0.9) -> tuple[float, float]:
        """Quantile of absolute start and end probe-index errors over recovered regions."""
        if self.n_recovered == 0:
            return float("nan"), float("nan")
        return (
            float(np.quantile(np.abs(self.start_errors), q)),
            float(np.quantile(np.abs(self.end_errors), q)),
        )


def evaluate_calls(called: Sequence[Region], truth: Sequence[Region]) -> CallEvaluation:
    """Match each true region to the overlapping call with the largest bp overlap."""
    by_chrom: dict[str, list[Region]] = {}
    for r in sorted(called, key=lambda r: (r.chromosome_id, r.start)):
        by_chrom.setdefault(r.chromosome_id, []).append(r)
    starts = {c: np.array([r.start for r in rs]) for c, rs in by_chrom.items()}
    ends = {c: np.array([r.end for r in rs]) for c, rs in by_chrom.items()}

    hit: set[tuple[str, int]] = set()
    start_errors, end_errors = [], []
    for t in truth:
        calls = by_chrom.get(t.chromosome_id, [])
        if not calls:
            continue
        lo = int(np.searchsorted(ends[t.chromosome_id], t.start, side="right"))
        hi = int(np.searchsorted(starts[t.chromosome_id], t.end, side="left"))
        if lo >= hi:
            continue
        best = max(
            range(lo, hi),
            key=lambda k: min(calls[k].end, t.end) - max(calls[k].start, t.start),
        )
        for k in range(lo, hi):
            hit.add((t.chromosome_id, k))
        start_errors.append(calls[best].first_probe - t.first_probe)
        end_errors.append(calls[best].last_probe - t.last_probe)

    return CallEvaluation(
        n_true=len(truth),
        n_called=len(called),
        n_recovered=len(start_errors),
        false_calls=len(called) - len(hit),
        start_errors=np.array(start_errors, dtype=np.int64),
        end_errors=np.array(end_errors, dtype=np.int64),
    )
