"""Expectation conditional maximization for the segmentation model.

Each iteration runs forward-backward on every chromosome at the current
parameters, then updates:
1. (p0, p1) in closed form (beta-posterior mode),
2. (pi1, lam) by damped Newton on (logit pi1, log lam),
3. the Gaussian parameters one block at a time: per-probe effects, then the
   global means, then the variances.

The objective is penalized: observed-data log-likelihood plus the
random-effects density plus the parameter log-priors. Every update is a
conditional maximizer of the matching expected complete-data log-posterior,
so the objective never decreases.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special
from scipy import stats as scipy_stats

from .errors import OptimizationError, ParameterError, ShapeError
from .inference import PosteriorTrack, infer_track
from .model import (
    FloatArray,
    GlobalParams,
    Hyperpriors,
    ModelVariant,
    ProbeEffects,
    ProbeTrack,
    default_hyperpriors,
    effects_logdensity,
    log_prior,
    median_spacing,
    replicate_sum,
)
from .regions import ProbabilityTrack, build_probability_track

logger = logging.getLogger(__name__)

P_CLAMP = 1e-6
VARIANCE_FLOOR = 1e-8
LOGIT_BOUND = 30.0
LOG_LAM_BOUNDS = (math.log(1e-12), math.log(1e3))

ObjectiveValue = tuple[float, FloatArray | None, FloatArray | None]
Objective = Callable[[FloatArray, int], ObjectiveValue]


def as_tracks(data: object) -> list[ProbeTrack]:
    """Accept a track, a simulated dataset, or a sequence of either."""
    if isinstance(data, ProbeTrack):
        return [data]
    track = getattr(data, "track", None)
    if isinstance(track, ProbeTrack):
        return [track]
    if isinstance(data, Sequence):
        out: list[ProbeTrack] = []
        for item in data:
            out.extend(as_tracks(item))
        return out
    raise ParameterError(f"Cannot interpret {type(data).__name__} as probe tracks")


def check_design(tracks: Sequence[ProbeTrack]) -> tuple[int, int]:
    if not tracks:
        raise ParameterError("no probe tracks given")
    n_t, n_c = tracks[0].n_t, tracks[0].n_c
    for t in tracks[1:]:
        if (t.n_t, t.n_c) != (n_t, n_c):
            raise ShapeError(
                f"{t.chromosome_id} has {t.n_t} treatment/{t.n_c} control columns, "
                f"expected {n_t}/{n_c}"
            )
    return n_t, n_c


@dataclass(frozen=True, eq=False)
class EStepStats:
    posteriors: list[PosteriorTrack]
    counts: FloatArray  # n_e = sum_i gamma_i(e)
    hybridized: FloatArray  # m_e = sum_i P(H_i=1, E_i=e)
    responsibilities: FloatArray  # r_i = P(H_i=1 | data), all chromosomes concatenated
    pair_counts: FloatArray  # sum_i xi_i(e, e')
    initial: FloatArray  # sum over chromosomes of gamma_1(e)
    loglik: float

    @property
    def n_probes(self) -> int:
        return int(self.responsibilities.shape[0])


@dataclass(frozen=True, eq=False)
class TransitionStats:
    """Expected (or realized) transition indicators with their distances."""

    distances: FloatArray  # (M,)
    pair_probs: FloatArray  # (M, 2, 2)
    initial: FloatArray  # (2,)

    @classmethod
    def from_estep(cls, stats: EStepStats, distances: Sequence[FloatArray]) -> TransitionStats:
        return cls(
            distances=np.concatenate([np.asarray(d, dtype=np.float64) for d in distances]),
            pair_probs=np.concatenate([p.xi for p in stats.posteriors]),
            initial=stats.initial,
        )

    @classmethod
    def from_paths(cls, paths: Sequence[np.ndarray], distances: Sequence[FloatArray]) -> TransitionStats:
        pair_probs, initial = [], np.zeros(2)
        for path in paths:
            path = np.asarray(path, dtype=np.int64)
            one_hot = np.zeros((path.shape[0] - 1, 2, 2))
            one_hot[np.arange(path.shape[0] - 1), path[:-1], path[1:]] = 1.0
            pair_probs.append(one_hot)
            initial[path[0]] += 1.0
        return cls(
            distances=np.concatenate([np.asarray(d, dtype=np.float64) for d in distances]),
            pair_probs=np.concatenate(pair_probs),
            initial=initial,
        )


@dataclass(frozen=True)
class EcmOptions:
    tol: float = 1e-3
    max_iter: int = 200
    init: GlobalParams | None = None
    init_effects: list[ProbeEffects] | None = None
    variant: ModelVariant | None = None
    fix_hybridization: tuple[float, float] | None = None
    stationary_spacing: float | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 0:
            raise ParameterError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: GlobalParams
    effects: list[ProbeEffects] | None
    posteriors: list[PosteriorTrack]
    trace: list[float]
    iterations: int
    converged: bool
    variant: ModelVariant
    hyper: Hyperpriors
    variance_floors: int = 0
    held_updates: int = 0
    chromosome_ids: list[str] = field(default_factory=list)

    def probability_tracks(self, tracks: Sequence[ProbeTrack]) -> list[ProbabilityTrack]:
        out = []
        for k, (track, post) in enumerate(zip(tracks, self.posteriors)):
            effects = self.effects[k] if self.effects is not None else None
            out.append(build_probability_track(track, post.p_peak, post.p_joint, effects))
        return out


def _sorted_values(tracks: Sequence[ProbeTrack], controls: bool) -> FloatArray:
    parts = [t.controls if controls else t.treatment for t in tracks]
    return np.sort(np.concatenate([p.reshape(-1) for p in parts]))


def initial_params(tracks: Sequence[ProbeTrack], variant: ModelVariant | None = None) -> GlobalParams:
    """Data-driven starting point: medians and percentiles of the intensities."""
    n_t, n_c = check_design(tracks)
    background = _sorted_values(tracks, controls=n_c > 0)
    treatment = _sorted_values(tracks, controls=False)
    mu0 = float(np.median(background))
    var0 = max(float(np.var(background)), 1e-6)
    delta0 = float(np.percentile(treatment, 95)) - mu0
    if delta0 <= math.sqrt(var0):
        delta0 = math.sqrt(var0)
    return GlobalParams(
        mu=mu0,
        delta=delta0,
        sigma2=var0,
        tau2=var0,
        eta2=0.1 * var0,
        xi2=var0,
        p0=0.05,
        p1=0.95,
        pi1=0.01,
        lam=1.0 / (10.0 * median_spacing(list(tracks))),
    )


def initial_effects(tracks: Sequence[ProbeTrack], params: GlobalParams) -> list[ProbeEffects]:
    return [ProbeEffects.constant(t.n_probes, params.mu, params.delta) for t in tracks]


def e_step(
    tracks: Sequence[ProbeTrack],
    effects: Sequence[ProbeEffects | None] | None,
    params: GlobalParams,
    distances: Sequence[FloatArray] | None = None,
    workers: int = 1,
) -> EStepStats:
    """Forward-backward per chromosome and the aggregated expected counts."""
    effects_list = list(effects) if effects is not None else [None] * len(tracks)
    distance_list = list(distances) if distances is not None else [t.distances for t in tracks]
    jobs = list(zip(tracks, effects_list, distance_list))

    def run(job: tuple[ProbeTrack, ProbeEffects | None, FloatArray]) -> PosteriorTrack:
        track, eff, d = job
        return infer_track(track, eff, params, d)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            posteriors = list(pool.map(run, jobs))
    else:
        posteriors = [run(job) for job in jobs]

    counts = np.sum([p.gamma.sum(axis=0) for p in posteriors], axis=0)
    hybridized = np.sum([p.joint_he[:, 1, :].sum(axis=0) for p in posteriors], axis=0)
    pair_counts = np.sum([p.xi.sum(axis=0) for p in posteriors], axis=0)
    initial = np.sum([p.gamma[0] for p in posteriors], axis=0)
    return EStepStats(
        posteriors=posteriors,
        counts=counts,
        hybridized=hybridized,
        responsibilities=np.concatenate([p.p_hybridized for p in posteriors]),
        pair_counts=pair_counts,
        initial=initial,
        loglik=math.fsum(p.loglik for p in posteriors),
    )


def update_bernoulli(
    stats: EStepStats,
    hyper: Hyperpriors,
    previous: tuple[float, float] = (0.05, 0.95),
) -> tuple[float, float]:
    """Beta-posterior modes of (p0, p1); a rate with no expected probes keeps its value."""
    out = []
    for e, (a, b) in enumerate((hyper.p0_prior, hyper.p1_prior)):
        n, m = float(stats.counts[e]), float(stats.hybridized[e])
        denom = n + a + b - 2.0
        if n <= 0.0 or denom <= 0.0:
            out.append(previous[e])
            continue
        out.append(min(max((m + a - 1.0) / denom, P_CLAMP), 1.0 - P_CLAMP))
    return out[0], out[1]


def transition_objective(
    pi1: float,
    lam: float,
    stats: TransitionStats,
    hyper: Hyperpriors,
    order: int = 2,
) -> tuple[float, FloatArray | None, FloatArray | None]:
    """Expected transition log-likelihood plus priors on pi1 and lam.

    Gradient and Hessian are taken with respect to (logit pi1, log lam).
    """
    if not (0.0 < pi1 < 1.0) or not (lam > 0.0 and math.isfinite(lam)):
        raise ParameterError(f"transition parameters out of domain: pi1={pi1}, lam={lam}")
    q, p = pi1, 1.0 - pi1
    d = stats.distances
    w = stats.pair_probs
    decay = np.exp(-lam * d)
    jump = -np.expm1(-lam * d)

    T = np.empty_like(w)
    T[:, 0, 0] = p + q * decay
    T[:, 0, 1] = q * jump
    T[:, 1, 0] = p * jump
    T[:, 1, 1] = q + p * decay
    used = w > 0.0
    safe_T = np.where(used, T, 1.0)
    with np.errstate(divide="ignore"):
        log_T = np.log(safe_T)

    a_pi, b_pi = hyper.pi_prior
    a_k, b_k = hyper.lambda_prior
    value = (
        float(np.sum(np.where(used, w * log_T, 0.0)))
        + float(stats.initial[0]) * math.log(p)
        + float(stats.initial[1]) * math.log(q)
        + float(scipy_stats.beta.logpdf(q, a_pi, b_pi))
        + float(scipy_stats.gamma.logpdf(lam, a_k, scale=1.0 / b_k))
    )
    if order == 0:
        return value, None, None

    sign = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    dq = sign[None, :, :] * jump[:, None, None]
    weight_l = np.array([[-q, q], [p, -p]])
    dl = weight_l[None, :, :] * (d * decay)[:, None, None]
    dll = -weight_l[None, :, :] * (d * d * decay)[:, None, None]
    dql = sign[None, :, :] * (d * decay)[:, None, None]

    ratio = np.where(used, w / safe_T, 0.0)
    ratio2 = np.where(used, w / (safe_T * safe_T), 0.0)
    f_q = float(np.sum(ratio * dq))
    f_l = float(np.sum(ratio * dl))
    f_qq = -float(np.sum(ratio2 * dq * dq))
    f_ll = float(np.sum(ratio * dll)) - float(np.sum(ratio2 * dl * dl))
    f_ql = float(np.sum(ratio * dql)) - float(np.sum(ratio2 * dq * dl))

    g0, g1 = float(stats.initial[0]), float(stats.initial[1])
    f_q += -g0 / p + g1 / q + (a_pi - 1.0) / q - (b_pi - 1.0) / p
    f_qq += -g0 / p**2 - g1 / q**2 - (a_pi - 1.0) / q**2 - (b_pi - 1.0) / p**2
    f_l += (a_k - 1.0) / lam - b_k
    f_ll += -(a_k - 1.0) / lam**2

    jq = q * p
    jq2 = q * p * (p - q)
    grad = np.array([f_q * jq, f_l * lam])
    hess = np.array(
        [
            [f_qq * jq * jq + f_q * jq2, f_ql * jq * lam],
            [f_ql * jq * lam, f_ll * lam * lam + f_l * lam],
        ]
    )
    return value, grad, hess


def _clamp_unconstrained(x: FloatArray) -> FloatArray:
    return np.array(
        [
            min(max(x[0], -LOGIT_BOUND), LOGIT_BOUND),
            min(max(x[1], LOG_LAM_BOUNDS[0]), LOG_LAM_BOUNDS[1]),
        ]
    )


def update_transition(
    stats: TransitionStats,
    hyper: Hyperpriors,
    current: tuple[float, float],
    max_iter: int = 50,
) -> tuple[float, float]:
    """Maximize the transition objective from ``current`` = (pi1, lam).

    Damped Newton with backtracking; after three failed line searches a
    coordinate-wise golden-section search takes over. The result never has a
    lower objective than ``current``.
    """

    def evaluate(x: FloatArray, order: int = 2) -> ObjectiveValue:
        return transition_objective(float(special.expit(x[0])), math.exp(x[1]), stats, hyper, order)

    x = _clamp_unconstrained(np.array([special.logit(current[0]), math.log(current[1])]))
    f_start, g, H = evaluate(x)
    f = f_start
    failures = 0
    for it in range(max_iter):
        assert g is not None and H is not None
        if failures == 0:
            eigval, eigvec = np.linalg.eigh(H)
            eigval = -np.maximum(np.abs(eigval), 1e-8)
            step = -eigvec @ ((eigvec.T @ g) / eigval)
        else:
            step = g / max(float(np.max(np.abs(np.diag(H)))), 1.0)
        slope = float(g @ step)
        if np.linalg.norm(step) < 1e-10 or abs(slope) < 1e-12 * (1.0 + abs(f)):
            break
        t = 1.0
        for _ in range(40):
            x_new = _clamp_unconstrained(x + t * step)
            f_new, _, _ = evaluate(x_new, order=0)
            if f_new >= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            failures += 1
            logger.debug("Transition line search failed (%d) at %s", failures, x)
            if failures >= 3:
                x, f = _golden_fallback(evaluate, x, f)
                break
            continue
        failures = 0
        x = x_new
        f, g, H = evaluate(x)
        logger.debug("Newton step %d: objective %.10g", it, f)

    if f < f_start - 1e-9 * (1.0 + abs(f_start)):
        raise OptimizationError(f"transition update decreased the objective ({f_start} -> {f})")
    return float(special.expit(x[0])), math.exp(x[1])


def _golden_fallback(evaluate: Objective, x: FloatArray, f: float) -> tuple[FloatArray, float]:
    for _ in range(2):
        for k in range(2):

            def negative(s: float, k: int = k) -> float:
                trial = x.copy()
                trial[k] = s
                return -evaluate(_clamp_unconstrained(trial), 0)[0]

            try:
                res = optimize.minimize_scalar(
                    negative, bracket=(x[k] - 0.5, x[k] + 0.5), method="golden"
                )
            except (ValueError, RuntimeError):
                continue
            trial = x.copy()
            trial[k] = res.x
            trial = _clamp_unconstrained(trial)
            f_trial = evaluate(trial, 0)[0]
            if f_trial > f:
                x, f = trial, f_trial
    return x, f


@dataclass
class StackedDesign:
    """Intensities of all chromosomes stacked, with chromosome offsets."""

    Y: FloatArray
    X: FloatArray
    sy: FloatArray
    sx: FloatArray
    offsets: list[int]
    n_t: int
    n_c: int

    @classmethod
    def from_tracks(cls, tracks: Sequence[ProbeTrack]) -> StackedDesign:
        n_t, n_c = check_design(tracks)
        Y = np.concatenate([t.treatment for t in tracks])
        X = np.concatenate([t.controls for t in tracks])
        offsets = np.cumsum([t.n_probes for t in tracks])[:-1].tolist()
        return cls(Y, X, replicate_sum(Y), replicate_sum(X), offsets, n_t, n_c)

    @property
    def n(self) -> int:
        return int(self.Y.shape[0])

    def split_effects(self, mu_i: FloatArray, delta_i: FloatArray) -> list[ProbeEffects]:
        return [
            ProbeEffects(m, d)
            for m, d in zip(np.split(mu_i, self.offsets), np.split(delta_i, self.offsets))
        ]


def _ig_mode(ss: float, count: float, prior: tuple[float, float]) -> float:
    a, b = prior
    return (b + 0.5 * ss) / (a + 1.0 + 0.5 * count)


def _floor(value: float, name: str, counter: list[int]) -> float:
    if value <= VARIANCE_FLOOR:
        counter[0] += 1
        logger.warning("%s update %.3g floored at %.0e", name, value, VARIANCE_FLOOR)
        return VARIANCE_FLOOR
    return value


def _cm_cycle(
    design: StackedDesign,
    r: FloatArray,
    hyper: Hyperpriors,
    params: GlobalParams,
    effects: list[ProbeEffects] | None,
    variant: ModelVariant,
    hold_delta: bool,
) -> tuple[GlobalParams, list[ProbeEffects] | None, int]:
    n_t, n_c, n = design.n_t, design.n_c, design.n
    Y, X, sy, sx = design.Y, design.X, design.sy, design.sx
    off = 1.0 - r
    s2, t2 = params.sigma2, params.tau2
    m0, v_mu = hyper.mu_prior
    d0, v_delta = hyper.delta_prior
    floors = [0]

    if variant.hierarchical:
        assert effects is not None
        mu_i = np.concatenate([e.mu_i for e in effects])
        delta_i = np.concatenate([e.delta_i for e in effects])
        eta2, xi2 = params.eta2, params.xi2

        prec = n_c / s2 + n_t * off / s2 + n_t * r / t2 + 1.0 / eta2
        mu_i = (sx / s2 + off * sy / s2 + r * (sy - n_t * delta_i) / t2 + params.mu / eta2) / prec
        if not hold_delta:
            prec = n_t * r / t2 + 1.0 / xi2
            delta_i = (r * (sy - n_t * mu_i) / t2 + params.delta / xi2) / prec

        mu = (mu_i.sum() / eta2 + m0 / v_mu) / (n / eta2 + 1.0 / v_mu)
        delta = params.delta
        if not hold_delta:
            delta = (delta_i.sum() / xi2 + d0 / v_delta) / (n / xi2 + 1.0 / v_delta)
    else:
        mu_i = np.full(n, params.mu)
        delta_i = np.full(n, params.delta)
        prec = (n * n_c + n_t * off.sum()) / s2 + n_t * r.sum() / t2 + 1.0 / v_mu
        num = (
            sx.sum() / s2
            + (off * sy).sum() / s2
            + (r * (sy - n_t * params.delta)).sum() / t2
            + m0 / v_mu
        )
        mu = num / prec
        mu_i = np.full(n, mu)
        delta = params.delta
        if not hold_delta:
            prec = n_t * r.sum() / t2 + 1.0 / v_delta
            delta = ((r * (sy - n_t * mu)).sum() / t2 + d0 / v_delta) / prec
            delta_i = np.full(n, delta)

    ss0 = replicate_sum((X - mu_i[:, None]) ** 2).sum() + (off * replicate_sum((Y - mu_i[:, None]) ** 2)).sum()
    sigma2 = _floor(_ig_mode(ss0, n * n_c + n_t * off.sum(), hyper.sigma2_prior), "sigma2", floors)
    tau2 = t2
    if not hold_delta:
        ss1 = (r * replicate_sum((Y - (mu_i + delta_i)[:, None]) ** 2)).sum()
        tau2 = _floor(_ig_mode(ss1, n_t * r.sum(), hyper.tau2_prior), "tau2", floors)

    updates = dict(mu=float(mu), delta=float(delta), sigma2=float(sigma2), tau2=float(tau2))
    new_effects = None
    if variant.hierarchical:
        eta2 = _floor(_ig_mode(float(((mu_i - mu) ** 2).sum()), n, hyper.eta2_prior), "eta2", floors)
        updates["eta2"] = eta2
        if not hold_delta:
            updates["xi2"] = _floor(
                _ig_mode(float(((delta_i - delta) ** 2).sum()), n, hyper.xi2_prior), "xi2", floors
            )
        new_effects = design.split_effects(mu_i, delta_i)
    return params.with_updates(**updates), new_effects, floors[0]


def update_gaussians_and_effects(
    stats: EStepStats,
    tracks: Sequence[ProbeTrack],
    hyper: Hyperpriors,
    params: GlobalParams,
    effects: list[ProbeEffects] | None,
    variant: ModelVariant,
) -> tuple[GlobalParams, list[ProbeEffects] | None, int]:
    """One conditional-maximization cycle over the Gaussian block.

    Returns the updated parameters, effects (None in pooled mode) and the
    number of variance updates that hit the floor.
    """
    hold = _hold_delta(stats)
    return _cm_cycle(
        StackedDesign.from_tracks(tracks), stats.responsibilities, hyper, params, effects, variant, hold
    )


def _hold_delta(stats: EStepStats) -> bool:
    if stats.counts[1] < 1.0:
        logger.warning(
            "Only %.3g expected peak probes; holding enrichment parameters", stats.counts[1]
        )
        return True
    return False


def penalized_objective(
    stats: EStepStats,
    params: GlobalParams,
    effects: list[ProbeEffects] | None,
    hyper: Hyperpriors,
    variant: ModelVariant,
) -> float:
    value = stats.loglik + log_prior(params, hyper, variant)
    if variant.hierarchical and effects is not None:
        value += math.fsum(effects_logdensity(e, params, variant) for e in effects)
    return value


def _distances(tracks: Sequence[ProbeTrack], stationary_spacing: float | None) -> list[FloatArray]:
    if stationary_spacing is None:
        return [t.distances for t in tracks]
    spacing = stationary_spacing or median_spacing(list(tracks))
    return [np.full(max(t.n_probes - 1, 0), float(spacing)) for t in tracks]


def run_ecm(
    data: object,
    hyper: Hyperpriors | None = None,
    options: EcmOptions | None = None,
) -> FitResult:
    """Fit by ECM until the penalized objective changes by less than ``tol``."""
    tracks = as_tracks(data)
    options = options or EcmOptions()
    n_t, n_c = check_design(tracks)
    variant = options.variant or ModelVariant.auto(n_t, n_c)
    hyper = hyper or default_hyperpriors(median_spacing(tracks))
    params = options.init or initial_params(tracks, variant)
    if options.fix_hybridization is not None:
        params = params.with_updates(p0=options.fix_hybridization[0], p1=options.fix_hybridization[1])
    effects: list[ProbeEffects] | None = None
    if variant.hierarchical:
        effects = options.init_effects or initial_effects(tracks, params)
        for e, t in zip(effects, tracks):
            e.check_track(t)
    distances = _distances(tracks, options.stationary_spacing)
    design = StackedDesign.from_tracks(tracks)
    logger.info(
        "ECM on %d chromosome(s), %d probes, %s model",
        len(tracks),
        design.n,
        variant.mode.value,
    )

    stats = e_step(tracks, effects, params, distances, options.workers)
    objective = penalized_objective(stats, params, effects, hyper, variant)
    trace = [objective]
    converged = False
    floors = held = 0
    iterations = 0
    for iterations in range(1, options.max_iter + 1):
        if options.fix_hybridization is None:
            p0, p1 = update_bernoulli(stats, hyper, (params.p0, params.p1))
            params = params.with_updates(p0=p0, p1=p1)
        pi1, lam = update_transition(
            TransitionStats.from_estep(stats, distances), hyper, (params.pi1, params.lam)
        )
        params = params.with_updates(pi1=pi1, lam=lam)
        hold = _hold_delta(stats)
        held += int(hold)
        params, effects, n_floor = _cm_cycle(
            design, stats.responsibilities, hyper, params, effects, variant, hold
        )
        floors += n_floor

        stats = e_step(tracks, effects, params, distances, options.workers)
        new_objective = penalized_objective(stats, params, effects, hyper, variant)
        trace.append(new_objective)
        logger.info(
            "ECM iteration %d: objective %.6f (change %.3g)",
            iterations,
            new_objective,
            new_objective - objective,
        )
        if new_objective < objective - 1e-8:
            logger.warning("Objective decreased by %.3g at iteration %d", objective - new_objective, iterations)
        if abs(new_objective - objective) < options.tol:
            converged = True
            break
        objective = new_objective

    if not converged:
        logger.warning("ECM stopped after %d iterations without converging", iterations)
    return FitResult(
        params=params,
        effects=effects,
        posteriors=stats.posteriors,
        trace=trace,
        iterations=iterations,
        converged=converged,
        variant=variant,
        hyper=hyper,
        variance_floors=floors,
        held_updates=held,
        chromosome_ids=[t.chromosome_id for t in tracks],
    )
