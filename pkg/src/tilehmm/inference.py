"""Exact inference over the region chain with hybridization marginalized per probe.

The joint (H, E) chain is handled as a two-state chain over E whose emission
for state e mixes the H = 0 and H = 1 densities with weights (1 - p_e, p_e);
H is recovered afterwards by Bayes' rule at each probe. Forward variables are
normalized at every step and the log normalizers summed for the likelihood.

The recursions run over Python floats: for two states that beats per-step
numpy calls by a wide margin.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .errors import EmptyInputError, NumericalError, ShapeError
from .model import (
    FloatArray,
    GlobalParams,
    IntArray,
    ProbeEffects,
    ProbeTrack,
    emission_table,
    transition_entries,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CollapsedEmissions:
    """``log_b[i, e]``: log-density of probe i's data given E_i = e, H summed out.

    ``log_r[i, e]``: log P(H_i = 1 | E_i = e, data at i).
    """

    log_b: FloatArray
    log_r: FloatArray

    def __len__(self) -> int:
        return int(self.log_b.shape[0])


@dataclass(frozen=True, eq=False)
class PosteriorTrack:
    gamma: FloatArray  # (N, 2)   P(E_i = e | data)
    xi: FloatArray  # (N-1, 2, 2)   P(E_i = e, E_i+1 = e' | data)
    joint_he: FloatArray  # (N, 2, 2)   P(H_i = h, E_i = e | data), indexed [i, h, e]
    loglik: float

    def __len__(self) -> int:
        return int(self.gamma.shape[0])

    @property
    def p_peak(self) -> FloatArray:
        return self.gamma[:, 1]

    @property
    def p_joint(self) -> FloatArray:
        return self.joint_he[:, 1, 1]

    @property
    def p_hybridized(self) -> FloatArray:
        return self.joint_he[:, 1, :].sum(axis=1)


def mix_emissions(table: FloatArray, p0: float, p1: float) -> CollapsedEmissions:
    """Collapse an (N, 2) emission table over h with hybridization rates in [0, 1]."""
    table = np.asarray(table, dtype=np.float64)
    rates = np.array([p0, p1], dtype=np.float64)
    with np.errstate(divide="ignore"):
        on = table[:, 1:2] + np.log(rates)[None, :]
        off = table[:, 0:1] + np.log1p(-rates)[None, :]
    log_b = np.logaddexp(off, on)
    bad = ~np.isfinite(log_b)
    if bad.any():
        raise NumericalError(
            "non-finite collapsed emission", probe_index=int(np.argwhere(bad)[0][0])
        )
    return CollapsedEmissions(log_b=log_b, log_r=on - log_b)


def collapse_emissions(
    track: ProbeTrack, effects: ProbeEffects | None, params: GlobalParams
) -> CollapsedEmissions:
    return mix_emissions(emission_table(track, effects, params), params.p0, params.p1)


def _prepare(
    emissions: CollapsedEmissions, distances: ArrayLike, params: GlobalParams
) -> tuple[FloatArray, FloatArray, FloatArray]:
    n = len(emissions)
    if n == 0:
        raise EmptyInputError("forward-backward needs at least one probe")
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    if d.shape[0] != n - 1:
        raise ShapeError(f"{d.shape[0]} distances for {n} probes")
    shift = emissions.log_b.max(axis=1)
    b = np.exp(emissions.log_b - shift[:, None])
    return b, shift, transition_entries(d, params)


def _forward(b: FloatArray, trans: FloatArray, init: FloatArray) -> tuple[FloatArray, FloatArray]:
    n = b.shape[0]
    b0, b1 = b[:, 0].tolist(), b[:, 1].tolist()
    t00, t01 = trans[:, 0, 0].tolist(), trans[:, 0, 1].tolist()
    t10, t11 = trans[:, 1, 0].tolist(), trans[:, 1, 1].tolist()
    f0_out, f1_out, scale = [0.0] * n, [0.0] * n, [0.0] * n

    a0 = float(init[0]) * b0[0]
    a1 = float(init[1]) * b1[0]
    f0 = f1 = 0.0
    for i in range(n):
        if i:
            j = i - 1
            a0 = (f0 * t00[j] + f1 * t10[j]) * b0[i]
            a1 = (f0 * t01[j] + f1 * t11[j]) * b1[i]
        s = a0 + a1
        if not s > 0.0:
            raise NumericalError("data have zero probability under the current parameters", probe_index=i)
        f0 = a0 / s
        f1 = a1 / s
        f0_out[i], f1_out[i], scale[i] = f0, f1, s
    return np.column_stack([f0_out, f1_out]), np.array(scale)


def _backward(b: FloatArray, trans: FloatArray, scale: FloatArray) -> FloatArray:
    n = b.shape[0]
    b0, b1 = b[:, 0].tolist(), b[:, 1].tolist()
    t00, t01 = trans[:, 0, 0].tolist(), trans[:, 0, 1].tolist()
    t10, t11 = trans[:, 1, 0].tolist(), trans[:, 1, 1].tolist()
    c = scale.tolist()
    g0_out, g1_out = [1.0] * n, [1.0] * n
    g0 = g1 = 1.0
    for i in range(n - 2, -1, -1):
        u0 = b0[i + 1] * g0 / c[i + 1]
        u1 = b1[i + 1] * g1 / c[i + 1]
        g0 = t00[i] * u0 + t01[i] * u1
        g1 = t10[i] * u0 + t11[i] * u1
        g0_out[i], g1_out[i] = g0, g1
    return np.column_stack([g0_out, g1_out])


def forward_backward(
    emissions: CollapsedEmissions, distances: ArrayLike, params: GlobalParams
) -> PosteriorTrack:
    """Posterior marginals, pairwise marginals, joint (H, E) posteriors and log-likelihood."""
    b, shift, trans = _prepare(emissions, distances, params)
    n = b.shape[0]
    alpha, scale = _forward(b, trans, params.stationary)
    beta = _backward(b, trans, scale)

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    if n > 1:
        u = b[1:] * beta[1:] / scale[1:, None]
        xi = alpha[:-1, :, None] * trans * u[:, None, :]
        xi /= xi.sum(axis=(1, 2), keepdims=True)
    else:
        xi = np.zeros((0, 2, 2))

    r = np.exp(emissions.log_r)
    joint = np.empty((n, 2, 2))
    joint[:, 1, :] = gamma * r
    joint[:, 0, :] = gamma * (1.0 - r)
    loglik = float(np.sum(np.log(scale)) + np.sum(shift))
    return PosteriorTrack(gamma=gamma, xi=xi, joint_he=joint, loglik=loglik)


def sample_state_path(
    emissions: CollapsedEmissions,
    distances: ArrayLike,
    params: GlobalParams,
    rng: np.random.Generator | int | None = None,
    size: int | None = None,
) -> IntArray:
    """Exact draw of E from its posterior: forward filter, then sample backwards.

    With ``size`` a (size, N) batch of independent paths is returned.
    """
    b, _, trans = _prepare(emissions, distances, params)
    n = b.shape[0]
    alpha, _ = _forward(b, trans, params.stationary)
    rng = np.random.default_rng(rng)

    if size is not None:
        u = rng.random((size, n))
        paths = np.empty((size, n), dtype=np.int64)
        paths[:, n - 1] = u[:, n - 1] < alpha[n - 1, 1]
        for i in range(n - 2, -1, -1):
            nxt = paths[:, i + 1]
            w0 = alpha[i, 0] * trans[i, 0, nxt]
            w1 = alpha[i, 1] * trans[i, 1, nxt]
            paths[:, i] = u[:, i] * (w0 + w1) < w1
        return paths

    a0, a1 = alpha[:, 0].tolist(), alpha[:, 1].tolist()
    t00, t01 = trans[:, 0, 0].tolist(), trans[:, 0, 1].tolist()
    t10, t11 = trans[:, 1, 0].tolist(), trans[:, 1, 1].tolist()
    u = rng.random(n).tolist()
    path = [0] * n
    state = 1 if u[n - 1] < a1[n - 1] else 0
    path[n - 1] = state
    for i in range(n - 2, -1, -1):
        if state:
            w0, w1 = a0[i] * t01[i], a1[i] * t11[i]
        else:
            w0, w1 = a0[i] * t00[i], a1[i] * t10[i]
        state = 1 if u[i] * (w0 + w1) < w1 else 0
        path[i] = state
    return np.array(path, dtype=np.int64)


def infer_track(
    track: ProbeTrack,
    effects: ProbeEffects | None,
    params: GlobalParams,
    distances: ArrayLike | None = None,
) -> PosteriorTrack:
    """Collapse emissions and run forward-backward for one chromosome."""
    emissions = collapse_emissions(track, effects, params)
    d = track.distances if distances is None else distances
    try:
        return forward_backward(emissions, d, params)
    except NumericalError as e:
        raise NumericalError(
            "forward-backward failed", probe_index=e.probe_index, chromosome_id=track.chromosome_id
        ) from e
