"""Model core for the two-layer tiling-array segmentation model.

Holds the domain types (probe tracks, global parameters, per-probe effects,
hyperpriors, model variant), the continuous-distance transition kernel of the
peak/nonpeak region chain, the Gaussian emission densities and the
complete-data log-posterior. Every other module is a client of this one.

Conventions:
- region state E: 0 = nonpeak, 1 = peak; hybridization state H: 0/1
- transitions are parameterized by the stationary peak probability ``pi1`` and
  the total switching rate ``lam`` (1/bp); the on/off rates are derived
- the region chain starts each chromosome at its stationary distribution
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .errors import (
    InvalidDistanceError,
    ModeError,
    NumericalError,
    ParameterError,
    ShapeError,
)

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


class Mode(str, Enum):
    HIERARCHICAL = "hierarchical"
    POOLED = "pooled"


@dataclass(frozen=True)
class ModelVariant:
    """Which emission model is fitted.

    Pooled mode drops the per-probe random effects: every probe shares the
    global background mean and enrichment, and the effect variances are unused.
    """

    mode: Mode = Mode.HIERARCHICAL
    controls_present: bool = True

    @property
    def hierarchical(self) -> bool:
        return self.mode is Mode.HIERARCHICAL

    @classmethod
    def auto(cls, n_t: int, n_c: int) -> ModelVariant:
        """Pooled for a single treatment array without controls, else hierarchical."""
        mode = Mode.POOLED if (n_t == 1 and n_c == 0) else Mode.HIERARCHICAL
        return cls(mode=mode, controls_present=n_c > 0)

    @classmethod
    def from_name(cls, name: str, n_t: int, n_c: int) -> ModelVariant:
        name = name.lower()
        if name == "auto":
            return cls.auto(n_t, n_c)
        try:
            mode = Mode(name)
        except ValueError as e:
            raise ParameterError(f"Unknown model variant: {name!r}") from e
        return cls(mode=mode, controls_present=n_c > 0)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProbeTrack:
    """One chromosome's probes ordered by genomic position.

    ``treatment`` is N x n_t and ``control`` N x n_c (n_c may be 0) normalized
    log-intensities. Arrays are copied and frozen on construction.
    """

    chromosome_id: str
    positions: IntArray
    treatment: FloatArray
    control: FloatArray | None = None

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=np.int64).reshape(-1)
        n = positions.shape[0]
        treatment = np.array(self.treatment, dtype=np.float64)
        if treatment.ndim == 1:
            treatment = treatment.reshape(-1, 1)
        if self.control is None:
            control = np.empty((n, 0), dtype=np.float64)
        else:
            control = np.array(self.control, dtype=np.float64)
            if control.ndim == 1:
                control = control.reshape(-1, 1)
            if control.size == 0:
                control = np.empty((n, 0), dtype=np.float64)

        if treatment.ndim != 2 or treatment.shape[0] != n:
            raise ShapeError(
                f"treatment has shape {treatment.shape}, expected ({n}, n_t) for {self.chromosome_id}"
            )
        if treatment.shape[1] < 1:
            raise ShapeError(f"at least one treatment replicate required ({self.chromosome_id})")
        if control.ndim != 2 or control.shape[0] != n:
            raise ShapeError(
                f"control has shape {control.shape}, expected ({n}, n_c) for {self.chromosome_id}"
            )
        if n > 1 and np.any(np.diff(positions) <= 0):
            raise ParameterError(f"positions must be strictly increasing ({self.chromosome_id})")
        for name, values in (("treatment", treatment), ("control", control)):
            bad = ~np.isfinite(values)
            if bad.any():
                row = int(np.argwhere(bad)[0][0])
                raise NumericalError(
                    f"non-finite {name} intensity",
                    probe_index=row,
                    chromosome_id=self.chromosome_id,
                )

        object.__setattr__(self, "positions", _readonly(positions))
        object.__setattr__(self, "treatment", _readonly(treatment))
        object.__setattr__(self, "control", _readonly(control))

    @property
    def n_probes(self) -> int:
        return int(self.positions.shape[0])

    def __len__(self) -> int:
        return self.n_probes

    @property
    def n_t(self) -> int:
        return int(self.treatment.shape[1])

    @property
    def n_c(self) -> int:
        assert self.control is not None
        return int(self.control.shape[1])

    @property
    def distances(self) -> FloatArray:
        return np.diff(self.positions).astype(np.float64)

    @property
    def controls(self) -> FloatArray:
        assert self.control is not None
        return self.control


@dataclass(frozen=True)
class GlobalParams:
    """Chromosome-shared parameters.

    ``lam`` is the total switching rate (on-rate + off-rate) in 1/bp. The
    on-rate (nonpeak -> peak) is ``lam * pi1`` and the off-rate
    (peak -> nonpeak) is ``lam * pi0``.
    """

    mu: float
    delta: float
    sigma2: float
    tau2: float
    eta2: float
    xi2: float
    p0: float
    p1: float
    pi1: float
    lam: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(float(value)):
                raise ParameterError(f"{f.name} must be finite, got {value}")
            object.__setattr__(self, f.name, float(value))
        for name in ("sigma2", "tau2", "eta2", "xi2"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("p0", "p1", "pi1"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1), got {value}")
        if self.lam <= 0.0:
            raise ParameterError(f"lam must be > 0, got {self.lam}")

    @classmethod
    def from_peak_length(cls, *, peak_length: float, pi1: float, **kwargs: float) -> GlobalParams:
        """Build parameters from an expected peak length (bp) instead of ``lam``."""
        if peak_length <= 0:
            raise ParameterError(f"peak_length must be > 0, got {peak_length}")
        return cls(pi1=pi1, lam=1.0 / (peak_length * (1.0 - pi1)), **kwargs)

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    @property
    def stationary(self) -> FloatArray:
        return np.array([self.pi0, self.pi1])

    @property
    def rate_on(self) -> float:
        return self.lam * self.pi1

    @property
    def rate_off(self) -> float:
        return self.lam * self.pi0

    @property
    def expected_peak_length(self) -> float:
        return 1.0 / self.rate_off

    @property
    def expected_gap_length(self) -> float:
        return 1.0 / self.rate_on

    def hybridization_rate(self, state: int) -> float:
        return self.p1 if state else self.p0

    def with_updates(self, **changes: float) -> GlobalParams:
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ProbeEffects:
    """Per-probe background means ``mu_i`` and enrichment offsets ``delta_i``."""

    mu_i: FloatArray
    delta_i: FloatArray

    def __post_init__(self) -> None:
        mu_i = np.array(self.mu_i, dtype=np.float64).reshape(-1)
        delta_i = np.array(self.delta_i, dtype=np.float64).reshape(-1)
        if mu_i.shape != delta_i.shape:
            raise ShapeError(f"mu_i has {mu_i.size} entries but delta_i has {delta_i.size}")
        if not (np.all(np.isfinite(mu_i)) and np.all(np.isfinite(delta_i))):
            raise NumericalError("probe effects must be finite")
        object.__setattr__(self, "mu_i", _readonly(mu_i))
        object.__setattr__(self, "delta_i", _readonly(delta_i))

    @classmethod
    def constant(cls, n: int, mu: float, delta: float) -> ProbeEffects:
        return cls(np.full(n, mu), np.full(n, delta))

    def __len__(self) -> int:
        return int(self.mu_i.shape[0])

    def check_track(self, track: ProbeTrack) -> None:
        if len(self) != track.n_probes:
            raise ShapeError(
                f"effects cover {len(self)} probes but {track.chromosome_id} has {track.n_probes}"
            )


Pair = tuple[float, float]


@dataclass(frozen=True)
class Hyperpriors:
    """Prior hyperparameters.

    Gaussian pairs are (mean, variance); variance priors are inverse-gamma
    (shape, scale); probabilities are beta (a, b); the switching rate ``lam``
    is gamma (shape, rate) with the rate in bp.
    """

    mu_prior: Pair = (0.0, 1.0e4)
    delta_prior: Pair = (0.0, 1.0e4)
    sigma2_prior: Pair = (2.01, 1.0)
    tau2_prior: Pair = (2.01, 1.0)
    eta2_prior: Pair = (2.01, 1.0)
    xi2_prior: Pair = (2.01, 1.0)
    p0_prior: Pair = (1.0, 19.0)
    p1_prior: Pair = (19.0, 1.0)
    pi_prior: Pair = (1.0, 1.0)
    lambda_prior: Pair = (1.1, 350.0)

    def __post_init__(self) -> None:
        for f in fields(self):
            pair = tuple(float(v) for v in getattr(self, f.name))
            if len(pair) != 2 or not all(math.isfinite(v) for v in pair):
                raise ParameterError(f"{f.name} must be a pair of finite numbers, got {pair}")
            positive = pair[1:] if f.name in ("mu_prior", "delta_prior") else pair
            if any(v <= 0 for v in positive):
                raise ParameterError(f"{f.name} entries must be > 0, got {pair}")
            object.__setattr__(self, f.name, pair)

    def with_overrides(self, overrides: Mapping[str, Any]) -> Hyperpriors:
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ParameterError(f"Unknown hyperprior keys: {unknown}")
        return replace(self, **{k: tuple(v) for k, v in overrides.items()})


def default_hyperpriors(median_spacing: float = 35.0) -> Hyperpriors:
    """Weak defaults; the switching-rate prior is scaled to the probe spacing."""
    return Hyperpriors(lambda_prior=(1.1, 10.0 * max(float(median_spacing), 1.0)))


def log_prior_terms(
    params: GlobalParams, hyper: Hyperpriors, variant: ModelVariant | None = None
) -> dict[str, float]:
    """Prior log-density of each global parameter (effect variances only when hierarchical)."""
    variant = variant or ModelVariant()
    m, s2 = hyper.mu_prior
    d0, t2 = hyper.delta_prior
    terms = {
        "mu": float(stats.norm.logpdf(params.mu, loc=m, scale=math.sqrt(s2))),
        "delta": float(stats.norm.logpdf(params.delta, loc=d0, scale=math.sqrt(t2))),
        "sigma2": float(stats.invgamma.logpdf(params.sigma2, hyper.sigma2_prior[0], scale=hyper.sigma2_prior[1])),
        "tau2": float(stats.invgamma.logpdf(params.tau2, hyper.tau2_prior[0], scale=hyper.tau2_prior[1])),
        "p0": float(stats.beta.logpdf(params.p0, *hyper.p0_prior)),
        "p1": float(stats.beta.logpdf(params.p1, *hyper.p1_prior)),
        "pi1": float(stats.beta.logpdf(params.pi1, *hyper.pi_prior)),
        "lam": float(
            stats.gamma.logpdf(params.lam, hyper.lambda_prior[0], scale=1.0 / hyper.lambda_prior[1])
        ),
    }
    if variant.hierarchical:
        terms["eta2"] = float(stats.invgamma.logpdf(params.eta2, hyper.eta2_prior[0], scale=hyper.eta2_prior[1]))
        terms["xi2"] = float(stats.invgamma.logpdf(params.xi2, hyper.xi2_prior[0], scale=hyper.xi2_prior[1]))
    return terms


def log_prior(params: GlobalParams, hyper: Hyperpriors, variant: ModelVariant | None = None) -> float:
    return math.fsum(log_prior_terms(params, hyper, variant).values())


def transition_entries(distances: ArrayLike, params: GlobalParams) -> FloatArray:
    """Transition matrices for every distance, shape ``distances.shape + (2, 2)``.

    Rows are the current state, columns the next state.
    """
    d = np.asarray(distances, dtype=np.float64)
    if np.any(np.isnan(d)) or np.any(d < 0):
        raise InvalidDistanceError("distances must be >= 0")
    scaled = -params.lam * d
    decay = np.exp(scaled)
    jump = -np.expm1(scaled)
    p0, p1 = params.pi0, params.pi1
    out = np.empty(d.shape + (2, 2), dtype=np.float64)
    out[..., 0, 0] = p0 + p1 * decay
    out[..., 0, 1] = p1 * jump
    out[..., 1, 0] = p0 * jump
    out[..., 1, 1] = p1 + p0 * decay
    return out


def transition_matrix(d: float, params: GlobalParams) -> FloatArray:
    """2x2 row-stochastic transition matrix across ``d`` base pairs."""
    if not d >= 0:
        raise InvalidDistanceError(f"distance must be >= 0, got {d}")
    return transition_entries(float(d), params)


def generator_matrix(params: GlobalParams) -> FloatArray:
    return np.array(
        [[-params.rate_on, params.rate_on], [params.rate_off, -params.rate_off]],
        dtype=np.float64,
    )


def replicate_sum(values: FloatArray) -> FloatArray:
    """Row sums over replicate columns, independent of column order."""
    if values.shape[1] == 0:
        return np.zeros(values.shape[0])
    return np.sort(values, axis=1).sum(axis=1)


def _gaussian_logpdf_sum(values: FloatArray, mean: FloatArray, var: float) -> FloatArray:
    k = values.shape[1]
    if k == 0:
        return np.zeros(values.shape[0])
    sq = replicate_sum((values - mean[:, None]) ** 2)
    return -0.5 * k * (LOG_2PI + math.log(var)) - 0.5 * sq / var


def _probe_means(
    track: ProbeTrack, effects: ProbeEffects | None, params: GlobalParams
) -> tuple[FloatArray, FloatArray]:
    if effects is None:
        n = track.n_probes
        return np.full(n, params.mu), np.full(n, params.delta)
    effects.check_track(track)
    return effects.mu_i, effects.delta_i


def emission_table(
    track: ProbeTrack, effects: ProbeEffects | None, params: GlobalParams
) -> FloatArray:
    """Log-density of each probe's data given H = 0 (column 0) or H = 1 (column 1).

    ``effects=None`` is the pooled model (global mean and enrichment). The
    control factor does not depend on H.
    """
    mu_i, delta_i = _probe_means(track, effects, params)
    ctrl = _gaussian_logpdf_sum(track.controls, mu_i, params.sigma2)
    off = _gaussian_logpdf_sum(track.treatment, mu_i, params.sigma2)
    on = _gaussian_logpdf_sum(track.treatment, mu_i + delta_i, params.tau2)
    table = np.column_stack([ctrl + off, ctrl + on])
    bad = ~np.isfinite(table)
    if bad.any():
        raise NumericalError(
            "non-finite emission log-density",
            probe_index=int(np.argwhere(bad)[0][0]),
            chromosome_id=track.chromosome_id,
        )
    return table


def emission_logdensity(
    probe_index: int,
    h: int,
    track: ProbeTrack,
    effects: ProbeEffects | None,
    params: GlobalParams,
) -> float:
    if h not in (0, 1):
        raise ParameterError(f"h must be 0 or 1, got {h}")
    if not 0 <= probe_index < track.n_probes:
        raise ShapeError(f"probe index {probe_index} outside 0..{track.n_probes - 1}")
    mu_i, delta_i = _probe_means(track, effects, params)
    i = probe_index
    mean = np.array([mu_i[i]])
    ctrl = _gaussian_logpdf_sum(track.controls[i : i + 1], mean, params.sigma2)[0]
    if h:
        treat = _gaussian_logpdf_sum(track.treatment[i : i + 1], mean + delta_i[i], params.tau2)[0]
    else:
        treat = _gaussian_logpdf_sum(track.treatment[i : i + 1], mean, params.sigma2)[0]
    value = float(ctrl + treat)
    if not math.isfinite(value):
        raise NumericalError(
            "non-finite emission log-density", probe_index=i, chromosome_id=track.chromosome_id
        )
    return value


def effects_logdensity(
    effects: ProbeEffects | None,
    params: GlobalParams,
    variant: ModelVariant | None = None,
) -> float:
    """Random-effects log-density of all ``mu_i`` and ``delta_i``."""
    if effects is None or (variant is not None and not variant.hierarchical):
        raise ModeError("probe effects are not part of the pooled model")
    n = len(effects)
    ss_mu = float(np.sum((effects.mu_i - params.mu) ** 2))
    ss_delta = float(np.sum((effects.delta_i - params.delta) ** 2))
    return (
        -0.5 * n * (LOG_2PI + math.log(params.eta2))
        - 0.5 * ss_mu / params.eta2
        - 0.5 * n * (LOG_2PI + math.log(params.xi2))
        - 0.5 * ss_delta / params.xi2
    )


def _as_states(values: ArrayLike, n: int, name: str) -> IntArray:
    arr = np.asarray(values).astype(np.int64).reshape(-1)
    if arr.shape[0] != n:
        raise ShapeError(f"{name} has length {arr.shape[0]}, expected {n}")
    if np.any((arr != 0) & (arr != 1)):
        raise ParameterError(f"{name} must contain only 0/1")
    return arr


def logposterior_components(
    track: ProbeTrack,
    H: ArrayLike,
    E: ArrayLike,
    effects: ProbeEffects | None,
    params: GlobalParams,
    hyper: Hyperpriors,
    variant: ModelVariant | None = None,
) -> dict[str, float]:
    """Complete-data log-posterior split into its named terms."""
    n = track.n_probes
    h = _as_states(H, n, "H")
    e = _as_states(E, n, "E")
    if variant is None:
        variant = ModelVariant(
            mode=Mode.HIERARCHICAL if effects is not None else Mode.POOLED,
            controls_present=track.n_c > 0,
        )
    if variant.hierarchical and effects is None:
        raise ModeError("hierarchical model requires probe effects")

    trans = transition_entries(track.distances, params)
    with np.errstate(divide="ignore"):
        log_trans = np.log(trans[np.arange(n - 1), e[:-1], e[1:]]) if n > 1 else np.zeros(0)
    rates = np.where(e == 1, params.p1, params.p0)
    table = emission_table(track, effects if variant.hierarchical else None, params)
    return {
        "initial": math.log(params.stationary[e[0]]) if n else 0.0,
        "transitions": float(np.sum(log_trans)),
        "hybridization": float(np.sum(np.where(h == 1, np.log(rates), np.log1p(-rates)))),
        "emissions": float(np.sum(table[np.arange(n), h])),
        "effects": effects_logdensity(effects, params, variant) if variant.hierarchical else 0.0,
        "priors": log_prior(params, hyper, variant),
    }


def complete_data_logposterior(
    track: ProbeTrack,
    H: ArrayLike,
    E: ArrayLike,
    effects: ProbeEffects | None,
    params: GlobalParams,
    hyper: Hyperpriors,
    variant: ModelVariant | None = None,
) -> float:
    return math.fsum(logposterior_components(track, H, E, effects, params, hyper, variant).values())


def thin_track(track: ProbeTrack, step: int) -> ProbeTrack:
    """Keep every ``step``-th probe, starting with the first."""
    if step < 1:
        raise ParameterError(f"step must be >= 1, got {step}")
    return ProbeTrack(
        chromosome_id=track.chromosome_id,
        positions=track.positions[::step],
        treatment=track.treatment[::step],
        control=track.controls[::step],
    )


def median_spacing(tracks: list[ProbeTrack]) -> float:
    gaps = [t.distances for t in tracks if t.n_probes > 1]
    if not gaps:
        return 1.0
    return float(np.median(np.concatenate(gaps)))
