"""Gibbs sampler with a Metropolis step for the transition parameters.

One sweep draws, in order: region paths by forward filtering/backward
sampling, hybridization states given the paths, probe effects, the Gaussian
globals, the hybridization rates, and finally (pi1, lam) by a random walk on
(logit pi1, log lam) whose target uses the sampled paths' transitions.

Proposal scales adapt (Robbins-Monro on the log scale) during burn-in only.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .ecm import (
    StackedDesign,
    TransitionStats,
    as_tracks,
    check_design,
    initial_effects,
    initial_params,
    transition_objective,
)
from .errors import NumericalError, ParameterError
from .inference import CollapsedEmissions, collapse_emissions, mix_emissions, sample_state_path
from .model import (
    FloatArray,
    GlobalParams,
    Hyperpriors,
    IntArray,
    ModelVariant,
    ProbeEffects,
    ProbeTrack,
    default_hyperpriors,
    median_spacing,
    replicate_sum,
)
from .regions import ProbabilityTrack
from .simulate import stream

logger = logging.getLogger(__name__)

PROB_EPS = 1e-15
LOG_SCALE_BOUNDS = (-10.0, 3.0)
ADAPT_EXPONENT = 0.6


@dataclass(frozen=True)
class McmcOptions:
    n_iter: int = 10_500
    burn_in: int = 500
    thin: int = 1
    seed: int = 0
    adapt_target: float = 0.3
    proposal_scales: tuple[float, float] = (0.5, 0.5)
    use_likelihood: bool = True
    variant: ModelVariant | None = None
    init: GlobalParams | None = None
    progress_every: int = 500

    def __post_init__(self) -> None:
        if not 0 <= self.burn_in < self.n_iter:
            raise ParameterError(f"need 0 <= burn_in < n_iter, got {self.burn_in}, {self.n_iter}")
        if self.thin < 1:
            raise ParameterError(f"thin must be >= 1, got {self.thin}")
        if not 0.0 < self.adapt_target < 1.0:
            raise ParameterError(f"adapt_target must lie in (0, 1), got {self.adapt_target}")
        if len(self.proposal_scales) != 2 or any(s < 0 for s in self.proposal_scales):
            raise ParameterError(f"proposal_scales must be two values >= 0, got {self.proposal_scales}")
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")

    @property
    def n_draws(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass(frozen=True, eq=False)
class McmcState:
    E: list[IntArray]
    H: list[IntArray]
    effects: list[ProbeEffects] | None
    params: GlobalParams
    accepted: bool = False


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    mean_E: list[FloatArray]
    mean_HE: list[FloatArray]
    mean_delta_i: list[FloatArray]
    param_draws: list[GlobalParams]
    acceptance_rate: float
    scale_history: list[tuple[float, float]] = field(default_factory=list)
    chromosome_ids: list[str] = field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return len(self.param_draws)

    def posterior_mean(self) -> GlobalParams:
        names = list(self.param_draws[0].as_dict())
        values = {k: float(np.mean([p.as_dict()[k] for p in self.param_draws])) for k in names}
        return GlobalParams(**values)

    def probability_tracks(self, tracks: Sequence[ProbeTrack]) -> list[ProbabilityTrack]:
        return [
            ProbabilityTrack(t.chromosome_id, t.positions, e, he, d)
            for t, e, he, d in zip(tracks, self.mean_E, self.mean_HE, self.mean_delta_i)
        ]


def _emissions(
    track: ProbeTrack,
    effects: ProbeEffects | None,
    params: GlobalParams,
    use_likelihood: bool,
) -> CollapsedEmissions:
    if use_likelihood:
        return collapse_emissions(track, effects, params)
    return mix_emissions(np.zeros((track.n_probes, 2)), params.p0, params.p1)


def _inverse_gamma(rng: np.random.Generator, prior: tuple[float, float], count: float, ss: float) -> float:
    a, b = prior
    return (b + 0.5 * ss) / rng.gamma(a + 0.5 * count)


def _draw_probability(rng: np.random.Generator, a: float, b: float) -> float:
    return min(max(float(rng.beta(a, b)), PROB_EPS), 1.0 - PROB_EPS)


def _jacobian(pi1: float, lam: float) -> float:
    return math.log(pi1) + math.log1p(-pi1) + math.log(lam)


def mh_update_transition(
    params: GlobalParams,
    stats: TransitionStats,
    hyper: Hyperpriors,
    rng: np.random.Generator,
    scales: tuple[float, float] = (0.5, 0.5),
) -> tuple[float, float, bool]:
    """Random-walk Metropolis step on (logit pi1, log lam) given path transitions."""
    pi1, lam = params.pi1, params.lam
    step = np.asarray(scales, dtype=np.float64) * rng.standard_normal(2)
    u = rng.random()
    if not step.any():
        return pi1, lam, True
    new_pi1 = float(special.expit(special.logit(pi1) + step[0]))
    new_lam = lam * math.exp(step[1])
    if not (0.0 < new_pi1 < 1.0) or not (0.0 < new_lam < math.inf):
        return pi1, lam, False

    current, _, _ = transition_objective(pi1, lam, stats, hyper, order=0)
    proposed, _, _ = transition_objective(new_pi1, new_lam, stats, hyper, order=0)
    log_ratio = proposed + _jacobian(new_pi1, new_lam) - current - _jacobian(pi1, lam)
    if u < math.exp(min(0.0, log_ratio)):
        return new_pi1, new_lam, True
    return pi1, lam, False


def _draw_effects(
    design: StackedDesign,
    H: FloatArray,
    params: GlobalParams,
    mu_i: FloatArray,
    delta_i: FloatArray,
    rng: np.random.Generator,
    weight: float,
) -> tuple[FloatArray, FloatArray]:
    n_t, n_c = design.n_t * weight, design.n_c * weight
    sy, sx = design.sy * weight, design.sx * weight
    s2, t2 = params.sigma2, params.tau2
    off = 1.0 - H

    prec = n_c / s2 + n_t * off / s2 + n_t * H / t2 + 1.0 / params.eta2
    mean = (sx / s2 + off * sy / s2 + H * (sy - n_t * delta_i) / t2 + params.mu / params.eta2) / prec
    mu_i = mean + rng.standard_normal(design.n) / np.sqrt(prec)

    prec = n_t * H / t2 + 1.0 / params.xi2
    mean = (H * (sy - n_t * mu_i) / t2 + params.delta / params.xi2) / prec
    delta_i = mean + rng.standard_normal(design.n) / np.sqrt(prec)
    return mu_i, delta_i


def _draw_globals(
    design: StackedDesign,
    H: FloatArray,
    hyper: Hyperpriors,
    params: GlobalParams,
    mu_i: FloatArray | None,
    delta_i: FloatArray | None,
    rng: np.random.Generator,
    weight: float,
) -> GlobalParams:
    n = design.n
    n_t, n_c = design.n_t * weight, design.n_c * weight
    sy, sx = design.sy * weight, design.sx * weight
    m0, v_mu = hyper.mu_prior
    d0, v_delta = hyper.delta_prior
    s2, t2 = params.sigma2, params.tau2
    off = 1.0 - H
    updates: dict[str, float] = {}

    hierarchical = mu_i is not None and delta_i is not None
    if hierarchical:
        assert mu_i is not None and delta_i is not None
        prec = n / params.eta2 + 1.0 / v_mu
        mu = (mu_i.sum() / params.eta2 + m0 / v_mu) / prec + rng.standard_normal() / math.sqrt(prec)
        prec = n / params.xi2 + 1.0 / v_delta
        delta = (delta_i.sum() / params.xi2 + d0 / v_delta) / prec + rng.standard_normal() / math.sqrt(prec)
    else:
        prec = (n * n_c + n_t * off.sum()) / s2 + n_t * H.sum() / t2 + 1.0 / v_mu
        num = sx.sum() / s2 + (off * sy).sum() / s2 + (H * (sy - n_t * params.delta)).sum() / t2
        mu = (num + m0 / v_mu) / prec + rng.standard_normal() / math.sqrt(prec)
        prec = n_t * H.sum() / t2 + 1.0 / v_delta
        num = (H * (sy - n_t * mu)).sum() / t2
        delta = (num + d0 / v_delta) / prec + rng.standard_normal() / math.sqrt(prec)
        mu_i, delta_i = np.full(n, mu), np.full(n, delta)
    updates["mu"], updates["delta"] = float(mu), float(delta)

    ss0 = replicate_sum((design.X - mu_i[:, None]) ** 2).sum() + (
        off * replicate_sum((design.Y - mu_i[:, None]) ** 2)
    ).sum()
    ss1 = (H * replicate_sum((design.Y - (mu_i + delta_i)[:, None]) ** 2)).sum()
    updates["sigma2"] = _inverse_gamma(
        rng, hyper.sigma2_prior, n * n_c + n_t * off.sum(), weight * ss0
    )
    updates["tau2"] = _inverse_gamma(rng, hyper.tau2_prior, n_t * H.sum(), weight * ss1)

    if hierarchical:
        updates["eta2"] = _inverse_gamma(rng, hyper.eta2_prior, n, float(((mu_i - mu) ** 2).sum()))
        updates["xi2"] = _inverse_gamma(rng, hyper.xi2_prior, n, float(((delta_i - delta) ** 2).sum()))
    return params.with_updates(**updates)


def gibbs_sweep(
    state: McmcState,
    tracks: Sequence[ProbeTrack],
    hyper: Hyperpriors,
    rng: np.random.Generator,
    *,
    variant: ModelVariant,
    scales: tuple[float, float] = (0.5, 0.5),
    use_likelihood: bool = True,
    design: StackedDesign | None = None,
) -> McmcState:
    """One full sweep; returns the new state with the Metropolis outcome in ``accepted``."""
    design = design or StackedDesign.from_tracks(tracks)
    params = state.params
    weight = 1.0 if use_likelihood else 0.0

    E, H = [], []
    for k, track in enumerate(tracks):
        effects_k = state.effects[k] if state.effects is not None else None
        em = _emissions(track, effects_k, params, use_likelihood)
        path = sample_state_path(em, track.distances, params, rng)
        p_hyb = np.exp(em.log_r[np.arange(track.n_probes), path])
        E.append(path)
        H.append((rng.random(track.n_probes) < p_hyb).astype(np.int64))
    H_all = np.concatenate(H).astype(np.float64)

    effects = state.effects
    mu_i = delta_i = None
    if variant.hierarchical:
        assert effects is not None
        mu_i, delta_i = _draw_effects(
            design,
            H_all,
            params,
            np.concatenate([e.mu_i for e in effects]),
            np.concatenate([e.delta_i for e in effects]),
            rng,
            weight,
        )
        effects = design.split_effects(mu_i, delta_i)
    params = _draw_globals(design, H_all, hyper, params, mu_i, delta_i, rng, weight)

    E_all = np.concatenate(E)
    rates = []
    for e, (a, b) in enumerate((hyper.p0_prior, hyper.p1_prior)):
        in_state = E_all == e
        n_e = float(in_state.sum())
        m_e = float(H_all[in_state].sum())
        rates.append(_draw_probability(rng, a + m_e, b + n_e - m_e))
    params = params.with_updates(p0=rates[0], p1=rates[1])

    path_stats = TransitionStats.from_paths(E, [t.distances for t in tracks])
    pi1, lam, accepted = mh_update_transition(params, path_stats, hyper, rng, scales)
    params = params.with_updates(pi1=pi1, lam=lam)
    return McmcState(E=E, H=H, effects=effects, params=params, accepted=accepted)


def run_mcmc(
    data: object,
    hyper: Hyperpriors | None = None,
    options: McmcOptions | None = None,
) -> PosteriorSummary:
    """Run one chain from the data-driven starting point and summarize retained sweeps."""
    tracks = as_tracks(data)
    options = options or McmcOptions()
    n_t, n_c = check_design(tracks)
    variant = options.variant or ModelVariant.auto(n_t, n_c)
    hyper = hyper or default_hyperpriors(median_spacing(tracks))
    params = options.init or initial_params(tracks, variant)
    effects = initial_effects(tracks, params) if variant.hierarchical else None
    design = StackedDesign.from_tracks(tracks)
    rng = stream(options.seed)

    state = McmcState(
        E=[np.zeros(t.n_probes, dtype=np.int64) for t in tracks],
        H=[np.zeros(t.n_probes, dtype=np.int64) for t in tracks],
        effects=effects,
        params=params,
    )
    sum_E = [np.zeros(t.n_probes) for t in tracks]
    sum_HE = [np.zeros(t.n_probes) for t in tracks]
    sum_delta = [np.zeros(t.n_probes) for t in tracks]
    draws: list[GlobalParams] = []
    log_scales = np.log(np.maximum(np.asarray(options.proposal_scales, dtype=np.float64), 1e-300))
    zero_scale = np.asarray(options.proposal_scales) == 0.0
    scale_history: list[tuple[float, float]] = []
    n_accepted = 0

    logger.info(
        "MCMC on %d chromosome(s): %d sweeps, burn-in %d, thin %d, seed %d",
        len(tracks),
        options.n_iter,
        options.burn_in,
        options.thin,
        options.seed,
    )
    for sweep in range(options.n_iter):
        scales = np.where(zero_scale, 0.0, np.exp(log_scales))
        scale_history.append((float(scales[0]), float(scales[1])))
        try:
            state = gibbs_sweep(
                state,
                tracks,
                hyper,
                rng,
                variant=variant,
                scales=(float(scales[0]), float(scales[1])),
                use_likelihood=options.use_likelihood,
                design=design,
            )
        except (ParameterError, NumericalError, FloatingPointError) as e:
            raise NumericalError(
                f"sweep {sweep} left the support ({e}); last state params={state.params.as_dict()}"
            ) from e

        if sweep < options.burn_in:
            gain = (sweep + 1) ** -ADAPT_EXPONENT
            log_scales = np.clip(
                log_scales + gain * (float(state.accepted) - options.adapt_target),
                *LOG_SCALE_BOUNDS,
            )
            logger.debug("sweep %d: proposal scales %s", sweep, np.exp(log_scales))
        else:
            n_accepted += int(state.accepted)
            if (sweep - options.burn_in) % options.thin == 0:
                draws.append(state.params)
                for k in range(len(tracks)):
                    E_k, H_k = state.E[k], state.H[k]
                    sum_E[k] += E_k
                    sum_HE[k] += E_k * H_k
                    if state.effects is not None:
                        sum_delta[k] += state.effects[k].delta_i
                    else:
                        sum_delta[k] += state.params.delta
        if options.progress_every and (sweep + 1) % options.progress_every == 0:
            logger.info(
                "sweep %d/%d: p0=%.4f p1=%.4f delta=%.4f pi1=%.5f lam=%.3g",
                sweep + 1,
                options.n_iter,
                state.params.p0,
                state.params.p1,
                state.params.delta,
                state.params.pi1,
                state.params.lam,
            )

    n_draws = len(draws)
    n_post = options.n_iter - options.burn_in
    return PosteriorSummary(
        mean_E=[s / n_draws for s in sum_E],
        mean_HE=[s / n_draws for s in sum_HE],
        mean_delta_i=[s / n_draws for s in sum_delta],
        param_draws=draws,
        acceptance_rate=n_accepted / n_post,
        scale_history=scale_history,
        chromosome_ids=[t.chromosome_id for t in tracks],
    )


def run_chains(
    data: object,
    hyper: Hyperpriors | None = None,
    options: McmcOptions | None = None,
    seeds: Sequence[int] = (0, 1),
    workers: int = 1,
) -> list[PosteriorSummary]:
    """Independent chains, one per seed."""
    options = options or McmcOptions()
    if not seeds:
        raise ParameterError("at least one seed is required")
    jobs = [replace(options, seed=int(s)) for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda o: run_mcmc(data, hyper, o), jobs))
    return [run_mcmc(data, hyper, o) for o in jobs]


def merge_summaries(summaries: Sequence[PosteriorSummary]) -> PosteriorSummary:
    """Pool chains: indicator means weighted by draw count, draws concatenated."""
    if not summaries:
        raise ParameterError("nothing to merge")
    weights = np.array([s.n_draws for s in summaries], dtype=np.float64)
    weights /= weights.sum()

    def pooled(attr: str) -> list[FloatArray]:
        tracks = zip(*(getattr(s, attr) for s in summaries))
        return [sum(w * a for w, a in zip(weights, per_chain)) for per_chain in tracks]

    return PosteriorSummary(
        mean_E=pooled("mean_E"),
        mean_HE=pooled("mean_HE"),
        mean_delta_i=pooled("mean_delta_i"),
        param_draws=[p for s in summaries for p in s.param_draws],
        acceptance_rate=float(np.dot(weights, [s.acceptance_rate for s in summaries])),
        scale_history=list(summaries[0].scale_history),
        chromosome_ids=list(summaries[0].chromosome_ids),
    )
