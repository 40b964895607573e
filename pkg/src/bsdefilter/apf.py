"""Auxiliary particle filter baseline.

Two-stage scheme: first-stage weights use the likelihood at each particle's
drift-propagated mean ``x + b(x) dt``; ancestors are drawn by systematic
resampling; children move through the full jump-diffusion step; the
second-stage weight divides out the lookahead likelihood.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import APFDegeneracyError, FilterError
from .filter import FilterOutput, _point_streams, _tag
from .models.base import JumpDiffusionModel, ObservationModel, log_likelihood
from .stochastic import RandomSource, RngStream, TimeGrid, as_generator

_RESAMPLE, _MOVE = 0, 1
_INIT = 2**31 - 1


@dataclass(frozen=True)
class ParticleSet:
    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.particles, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        w = np.asarray(self.weights, dtype=float)
        if x.shape[0] < 1 or w.shape != (x.shape[0],):
            raise ValueError("need K >= 1 particles with one weight each")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "particles", x)
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


def systematic_resample(weights, rng: RandomSource) -> np.ndarray:
    """Ancestor indices by systematic resampling: one uniform offset, ``K`` evenly spaced pointers."""
    w = np.asarray(weights, dtype=float)
    K = w.size
    positions = (as_generator(rng).random() + np.arange(K)) / K
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right")


def apf_step(
    pset: ParticleSet,
    model: JumpDiffusionModel,
    obs: ObservationModel,
    m,
    dt: float,
    rng: RngStream | np.random.Generator,
) -> ParticleSet:
    x, w = pset.particles, pset.weights
    K = x.shape[0]
    rng_resample = rng.child(_RESAMPLE) if isinstance(rng, RngStream) else rng
    rng_move = rng.child(_MOVE) if isinstance(rng, RngStream) else rng

    drift = model.b(x) * dt
    lookahead = x + drift
    with np.errstate(divide="ignore"):
        first = np.log(w) + log_likelihood(obs, m, lookahead)
    if not np.isfinite(first).any():
        raise APFDegeneracyError("APF degeneracy: zero total first-stage weight")
    first = np.where(np.isfinite(first), first, -np.inf)
    anc = systematic_resample(np.exp(first - logsumexp(first)), rng_resample)

    noise = np.empty_like(x)
    for j, g in enumerate(_point_streams(rng_move, K)):
        noise[j] = model.point_noise(dt, g)
    children = lookahead[anc] + noise

    second = log_likelihood(obs, m, children) - log_likelihood(obs, m, lookahead[anc])
    if not np.isfinite(second).any():
        raise APFDegeneracyError("APF degeneracy: zero total weight")
    second = np.where(np.isfinite(second), second, -np.inf)
    return ParticleSet(children, np.exp(second - logsumexp(second)))


def apf_run(
    model: JumpDiffusionModel,
    obs: ObservationModel,
    measurements,
    grid: TimeGrid,
    K: int,
    rng: RngStream,
) -> FilterOutput:
    """Run the APF over all stages; estimates are weighted particle means.

    ``diagnostics["ess"]`` holds the effective sample size ``1 / sum(w**2)``
    of the weights behind each estimate.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    measurements = np.atleast_2d(np.asarray(measurements, dtype=float))
    if measurements.shape[0] != grid.n_steps:
        raise ValueError(f"expected {grid.n_steps} measurement rows, got {measurements.shape[0]}")
    pset = ParticleSet(model.prior.sample(rng.child(_INIT), K), np.full(K, 1.0 / K))
    estimates = np.empty((grid.n_steps, model.dim))
    timing = np.empty(grid.n_steps)
    ess = np.empty(grid.n_steps)
    for n in range(grid.n_steps):
        t_start = time.perf_counter()
        try:
            pset = apf_step(pset, model, obs, measurements[n], grid.dt, rng.child(n))
        except (FilterError, ValueError, FloatingPointError) as err:
            raise _tag(err, n + 1) from err
        estimates[n] = pset.mean
        ess[n] = 1.0 / np.sum(pset.weights**2)
        timing[n] = time.perf_counter() - t_start
    return FilterOutput(grid.times[1:], estimates, timing, diagnostics={"ess": ess})
