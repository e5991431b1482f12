"""Synthetic datasets drawn from the model's generative process, with ground truth.

Random numbers come from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(chromosome, stream, ...))``. Each concern
(layout, region path, hybridization, effects, every replicate column) has its
own stream, so adding replicates never changes the latent path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike

from .errors import ParameterError
from .model import (
    GlobalParams,
    IntArray,
    ModelVariant,
    ProbeEffects,
    ProbeTrack,
    transition_entries,
)
from .regions import Region, build_probability_track, call_regions

logger = logging.getLogger(__name__)

STREAM_LAYOUT = 0
STREAM_PATH = 1
STREAM_HYBRIDIZATION = 2
STREAM_EFFECTS = 3
STREAM_CONTROL = 4
STREAM_TREATMENT = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 generator for ``seed`` and a spawn key."""
    if seed < 0:
        raise ParameterError(f"seed must be >= 0, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class SimConfig:
    n_probes: int
    params: GlobalParams
    mean_spacing: float = 35.0
    spacing_jitter: float = 0.0
    n_t: int = 1
    n_c: int = 0
    variant: ModelVariant | None = None
    seed: int = 0
    chromosome_id: str = "chr1"

    def __post_init__(self) -> None:
        if self.n_probes < 1:
            raise ParameterError(f"n_probes must be >= 1, got {self.n_probes}")
        if self.mean_spacing < 1:
            raise ParameterError(f"mean_spacing must be >= 1, got {self.mean_spacing}")
        if not 0.0 <= self.spacing_jitter < 1.0:
            raise ParameterError(f"spacing_jitter must lie in [0, 1), got {self.spacing_jitter}")
        if self.n_t < 1 or self.n_c < 0:
            raise ParameterError(f"need n_t >= 1 and n_c >= 0, got {self.n_t}, {self.n_c}")
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")
        if self.variant is None:
            object.__setattr__(self, "variant", ModelVariant.auto(self.n_t, self.n_c))

    @property
    def model_variant(self) -> ModelVariant:
        assert self.variant is not None
        return self.variant


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    track: ProbeTrack
    true_E: IntArray
    true_H: IntArray
    true_effects: ProbeEffects
    config: SimConfig


# Parameter values patterned on reported fits to single/replicated spike-in
# arrays with and without controls; tau2 defaults to sigma2, missing eta2 to 0.1.
PRESETS: dict[str, dict[str, float]] = {
    "S1": dict(p0=0.051, p1=0.942, mu=-0.111, delta=2.25, sigma2=0.41, eta2=0.1, xi2=6.55,
               pi1=0.0020, peak_length=347.2, n_t=1, n_c=0),
    "3S": dict(p0=0.140, p1=0.778, mu=-0.226, delta=1.52, sigma2=0.34, eta2=0.1, xi2=2.61,
               pi1=0.0030, peak_length=401.0, n_t=3, n_c=0),
    "S1C1": dict(p0=0.006, p1=0.948, mu=0.004, delta=3.19, sigma2=0.33, eta2=0.1, xi2=1.56,
                 pi1=0.0032, peak_length=371.1, n_t=1, n_c=1),
    "S3C3": dict(p0=0.007, p1=0.978, mu=0.018, delta=3.01, sigma2=0.27, eta2=0.58, xi2=19.9,
                 pi1=0.0032, peak_length=356.0, n_t=3, n_c=3),
}


def preset_config(
    name: str,
    *,
    n_probes: int = 100_000,
    mean_spacing: float = 35.0,
    spacing_jitter: float = 0.2,
    seed: int = 0,
    peak_length: float | None = None,
    variant: ModelVariant | None = None,
) -> SimConfig:
    try:
        preset = dict(PRESETS[name])
    except KeyError as e:
        raise ParameterError(f"Unknown preset {name!r}; choose from {sorted(PRESETS)}") from e
    n_t = int(preset.pop("n_t"))
    n_c = int(preset.pop("n_c"))
    length = preset.pop("peak_length")
    if peak_length is not None:
        length = peak_length
    params = GlobalParams.from_peak_length(peak_length=length, tau2=preset["sigma2"], **preset)
    return SimConfig(
        n_probes=n_probes,
        params=params,
        mean_spacing=mean_spacing,
        spacing_jitter=spacing_jitter,
        n_t=n_t,
        n_c=n_c,
        variant=variant,
        seed=seed,
    )


def sample_probe_layout(
    config: SimConfig, rng: np.random.Generator | None = None, chromosome_index: int = 0
) -> IntArray:
    """Probe positions starting at 0 with gaps uniform on mean_spacing * (1 +/- jitter)."""
    if rng is None:
        rng = stream(config.seed, chromosome_index, STREAM_LAYOUT)
    n = config.n_probes
    lo = config.mean_spacing * (1.0 - config.spacing_jitter)
    hi = config.mean_spacing * (1.0 + config.spacing_jitter)
    if config.spacing_jitter == 0.0:
        gaps = np.full(n - 1, config.mean_spacing)
    else:
        gaps = rng.uniform(lo, hi, size=n - 1)
    gaps = np.maximum(np.rint(gaps), 1).astype(np.int64)
    return np.concatenate([[0], np.cumsum(gaps)]).astype(np.int64)


def sample_region_path(
    positions: ArrayLike,
    params: GlobalParams,
    rng: np.random.Generator | int | None = None,
) -> IntArray:
    """Region states at the probe positions: stationary start, then the exact kernel."""
    rng = np.random.default_rng(rng)
    pos = np.asarray(positions, dtype=np.float64)
    n = pos.shape[0]
    trans = transition_entries(np.diff(pos), params)
    stay_on = trans[:, 1, 1].tolist()
    switch_on = trans[:, 0, 1].tolist()
    u = rng.random(n).tolist()
    path = [0] * n
    state = 1 if u[0] < params.pi1 else 0
    path[0] = state
    for i in range(n - 1):
        state = 1 if u[i + 1] < (stay_on[i] if state else switch_on[i]) else 0
        path[i + 1] = state
    return np.array(path, dtype=np.int64)


def sample_dataset(config: SimConfig, chromosome_index: int = 0) -> SyntheticDataset:
    """Layout, region path, hybridization, effects and intensities for one chromosome."""
    params = config.params
    seed, idx = config.seed, chromosome_index
    n = config.n_probes

    positions = sample_probe_layout(config, chromosome_index=idx)
    E = sample_region_path(positions, params, stream(seed, idx, STREAM_PATH))
    rates = np.where(E == 1, params.p1, params.p0)
    H = (stream(seed, idx, STREAM_HYBRIDIZATION).random(n) < rates).astype(np.int64)

    if config.model_variant.hierarchical:
        rng = stream(seed, idx, STREAM_EFFECTS)
        mu_i = params.mu + math.sqrt(params.eta2) * rng.standard_normal(n)
        delta_i = params.delta + math.sqrt(params.xi2) * rng.standard_normal(n)
        effects = ProbeEffects(mu_i, delta_i)
    else:
        effects = ProbeEffects.constant(n, params.mu, params.delta)

    sd0 = math.sqrt(params.sigma2)
    control = np.empty((n, config.n_c))
    for j in range(config.n_c):
        control[:, j] = effects.mu_i + sd0 * stream(seed, idx, STREAM_CONTROL, j).standard_normal(n)

    treat_mean = effects.mu_i + H * effects.delta_i
    treat_sd = np.where(H == 1, math.sqrt(params.tau2), sd0)
    treatment = np.empty((n, config.n_t))
    for j in range(config.n_t):
        noise = stream(seed, idx, STREAM_TREATMENT, j).standard_normal(n)
        treatment[:, j] = treat_mean + treat_sd * noise

    track = ProbeTrack(config.chromosome_id, positions, treatment, control)
    logger.info(
        "Simulated %s: %d probes, %d peak probes, %d hybridized",
        config.chromosome_id,
        n,
        int(E.sum()),
        int(H.sum()),
    )
    return SyntheticDataset(track=track, true_E=E, true_H=H, true_effects=effects, config=config)


def sample_genome(config: SimConfig, n_chromosomes: int) -> list[SyntheticDataset]:
    """Independent chromosomes ``chr1..chrK`` sharing the parameters."""
    if n_chromosomes < 1:
        raise ParameterError(f"n_chromosomes must be >= 1, got {n_chromosomes}")
    if n_chromosomes == 1:
        return [sample_dataset(config)]
    return [
        sample_dataset(replace(config, chromosome_id=f"chr{k + 1}"), chromosome_index=k)
        for k in range(n_chromosomes)
    ]


def true_regions(dataset: SyntheticDataset, probe_length: int = 25) -> list[Region]:
    """Runs of true peak probes, scored by the true effects of hybridized probes."""
    truth = build_probability_track(
        dataset.track,
        p_peak=dataset.true_E.astype(np.float64),
        p_joint=(dataset.true_E * dataset.true_H).astype(np.float64),
        effects=dataset.true_effects,
    )
    return call_regions(truth, cutoff=0.5, min_probes=1, probe_length=probe_length)
