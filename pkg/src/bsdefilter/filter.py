"""Backward SDE filter on an adaptive meshfree point cloud.

One recursion stage ``t_n -> t_{n+1}``:

1. propagate the (resampled) cloud through the state dynamics to get the new
   space points;
2. prediction: at each new point ``x``, draw ``M`` backward Euler samples
   ``x - b(x) dt + sigma w - L`` and average ``P_n(y) (1 - div b(y) dt)`` over
   them, with ``P_n`` extended off the previous cloud by Shepard interpolation;
3. Bayes update with the measurement likelihood, self-normalized on the cloud;
4. Metropolis-Hastings moves of every point with the interpolated posterior as
   target, giving the points propagated at the next stage.

All randomness for a point is drawn from a substream keyed by
``(stage, phase, point index)``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .errors import FilterDivergenceError, FilterError
from .models.base import JumpDiffusionModel, ObservationModel, log_likelihood
from .stochastic import RandomSource, RngStream, TimeGrid, as_generator

# substream keys inside one stage
_PROPAGATE, _PREDICT, _MCMC, _SEPARATE = 0, 1, 2, 3
_INIT = 2**31 - 1


@dataclass(frozen=True)
class FilterConfig:
    """Tuning of the backward SDE filter.

    ``neighbors=None`` means ``min(8, n_points)``; ``proposal_scale=None`` picks
    the random-walk step from the cloud spread about the posterior mean
    (per-dimension RMS deviation times ``N ** (-1 / (d + 4))``).
    ``mh_support='cloud_box'`` makes the MH target zero outside the bounding
    box of the cloud; the default ``'unbounded'`` uses the interpolant as is.
    """

    n_points: int = 200
    mc_samples: int = 20
    neighbors: Optional[int] = None
    mcmc_iters: int = 5
    proposal_scale: Optional[float | Sequence[float]] = None
    density_floor: float = 1e-30
    seed: int = 0
    shepard: str = "inverse"
    estimator: str = "mean"
    neighbor_search: str = "kdtree"
    mh_support: str = "unbounded"
    keep_clouds: bool = False

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.mcmc_iters < 0:
            raise ValueError("mcmc_iters must be >= 0")
        if self.neighbors is not None and not 1 <= self.neighbors <= self.n_points:
            raise ValueError("neighbors must lie in [1, n_points]")
        if self.proposal_scale is not None and np.any(np.asarray(self.proposal_scale) <= 0):
            raise ValueError("proposal_scale must be > 0")
        if not self.density_floor > 0:
            raise ValueError("density_floor must be > 0")
        if self.shepard not in ("inverse", "as_printed"):
            raise ValueError("shepard must be 'inverse' or 'as_printed'")
        if self.estimator not in ("mean", "mode"):
            raise ValueError("estimator must be 'mean' or 'mode'")
        if self.neighbor_search not in ("kdtree", "brute"):
            raise ValueError("neighbor_search must be 'kdtree' or 'brute'")
        if self.mh_support not in ("unbounded", "cloud_box"):
            raise ValueError("mh_support must be 'unbounded' or 'cloud_box'")

    @property
    def J(self) -> int:
        return min(8, self.n_points) if self.neighbors is None else self.neighbors


@dataclass(frozen=True)
class PointCloud:
    """Space points with density values.

    ``log_values`` optionally keeps the unfloored log density; it defaults to
    ``log(values)`` and is what the MH target is built from.
    """

    points: np.ndarray
    values: np.ndarray
    time_index: int = 0
    log_values: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        vals = np.asarray(self.values, dtype=float)
        if pts.shape[0] < 2:
            raise ValueError("a point cloud needs at least 2 points")
        if vals.shape != (pts.shape[0],):
            raise ValueError("values must have one entry per point")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("cloud values must be finite and nonnegative")
        if self.log_values is None:
            with np.errstate(divide="ignore"):
                logv = np.log(vals)
        else:
            logv = np.asarray(self.log_values, dtype=float)
            if logv.shape != vals.shape or np.any(np.isnan(logv)):
                raise ValueError("log_values must have one non-NaN entry per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "log_values", logv)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _brute_knn(points, queries, k):
    d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return np.sqrt(np.take_along_axis(d2, idx, axis=1)), idx


class ShepardInterpolant:
    """Inverse-distance weighted average over the ``J`` nearest cloud points.

    ``mode='as_printed'`` weights neighbours by distance instead of inverse
    distance (kept for comparison only).
    """

    def __init__(self, source: PointCloud, neighbor_count: int, mode: str = "inverse", search: str = "kdtree"):
        if not 1 <= neighbor_count <= source.size:
            raise ValueError(f"neighbor_count must lie in [1, {source.size}]")
        self.source = source
        self.J = neighbor_count
        self.mode = mode
        self.search = search
        self._tree = cKDTree(source.points) if search == "kdtree" else None

    def neighbors(self, x: np.ndarray):
        if self._tree is not None:
            dist, idx = self._tree.query(x, k=self.J)
            if self.J == 1:
                dist, idx = dist[:, None], idx[:, None]
            return dist, idx
        return _brute_knn(self.source.points, x, self.J)

    def weights(self, x: np.ndarray):
        """Normalized neighbour weights and indices for query rows ``x``."""
        dist, idx = self.neighbors(x)
        hit = dist[:, 0] == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            w = 1.0 / dist if self.mode == "inverse" else dist.copy()
        w[hit] = 0.0
        w[hit, 0] = 1.0
        # as_printed: all J distances zero only happens on a hit, handled above
        return w / w.sum(axis=1, keepdims=True), idx

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        w, idx = self.weights(x.reshape(-1, self.source.dim))
        out = (w * self.source.values[idx]).sum(axis=1)
        return out[0] if single else out

    def log(self, x) -> np.ndarray:
        """``log`` of the interpolant built on ``source.log_values``, without underflow."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        w, idx = self.weights(x.reshape(-1, self.source.dim))
        with np.errstate(divide="ignore"):
            out = logsumexp(np.log(w) + self.source.log_values[idx], axis=1)
        return out[0] if single else out


def shepard_eval(interp: ShepardInterpolant, x) -> float:
    return float(interp(np.atleast_1d(np.asarray(x, dtype=float))))


def init_cloud(model: JumpDiffusionModel, config: FilterConfig, rng: RandomSource) -> PointCloud:
    """Draw ``N`` prior samples as the initial space points, valued by the prior density."""
    points = model.prior.sample(rng, config.n_points)
    values = model.prior.density(points)
    if np.any(np.isnan(values)):
        raise FilterError("prior density evaluated to NaN")
    return PointCloud(points, np.maximum(values, config.density_floor), 0)


def _point_streams(rng: RandomSource, count: int) -> Iterable[np.random.Generator]:
    if isinstance(rng, RngStream):
        return rng.point_generators(count)
    seeds = as_generator(rng).integers(0, 2**63, size=count)
    return [np.random.default_rng(int(s)) for s in seeds]


def _checked_drift(model, x):
    b = model.b(x)
    bad = ~np.all(np.isfinite(b), axis=1)
    if bad.any():
        raise FilterError(f"drift evaluation failed at point {int(np.argmax(bad))}")
    return b


def propagate_cloud(cloud: PointCloud, model: JumpDiffusionModel, dt: float, rng: RandomSource) -> np.ndarray:
    """Advance every point one Euler-Maruyama step with independent noise."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x = cloud.points
    noise = np.empty_like(x)
    for i, g in enumerate(_point_streams(rng, len(x))):
        noise[i] = model.point_noise(dt, g)
    return x + _checked_drift(model, x) * dt + noise


def _backward_noise(model, dt, M, gen):
    return model.diffusion_noise(dt, gen, M) - model.jump_noise(dt, gen, M)


def backward_euler_samples(x, model: JumpDiffusionModel, dt: float, M: int, rng: RandomSource) -> np.ndarray:
    """``M`` samples ``x - b(x) dt + sigma w - L`` of the backward state one step earlier."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if M < 1:
        raise ValueError("M must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return x - model.b(x) * dt + _backward_noise(model, dt, M, as_generator(rng))


def prediction_step(
    prev: PointCloud,
    new_points: np.ndarray,
    model: JumpDiffusionModel,
    dt: float,
    config: FilterConfig,
    rng: RandomSource,
    diagnostics: dict | None = None,
) -> np.ndarray:
    """Predicted density at ``new_points`` from the posterior cloud ``prev``.

    Monte-Carlo estimate of ``E[P_n] - E[div b * P_n] dt`` over backward samples,
    floored at ``config.density_floor``.
    """
    new_points = np.asarray(new_points, dtype=float).reshape(-1, prev.dim)
    N, d, M = new_points.shape[0], prev.dim, config.mc_samples
    interp = ShepardInterpolant(prev, min(config.J, prev.size), config.shepard, config.neighbor_search)
    noise = np.empty((N, M, d))
    for i, g in enumerate(_point_streams(rng, N)):
        noise[i] = _backward_noise(model, dt, M, g)
    samples = (new_points - _checked_drift(model, new_points) * dt)[:, None, :] + noise
    flat = samples.reshape(-1, d)
    p = interp(flat).reshape(N, M)
    div = model.div_b(flat).reshape(N, M)
    values = (p * (1.0 - div * dt)).mean(axis=1)
    inside = model.in_domain(flat).reshape(N, M).any(axis=1)
    if not inside.all():
        values[~inside] = config.density_floor
        if diagnostics is not None:
            diagnostics["outside_domain"] = diagnostics.get("outside_domain", 0) + int((~inside).sum())
    values = np.where(np.isfinite(values), values, config.density_floor)
    return np.maximum(values, config.density_floor)


def log_posterior(pred_values, points, m, obs: ObservationModel) -> np.ndarray:
    """Log of prediction times likelihood, normalized so the exponentials sum to 1."""
    pred_values = np.asarray(pred_values, dtype=float)
    with np.errstate(divide="ignore"):
        logw = np.log(pred_values) + log_likelihood(obs, m, np.atleast_2d(points))
    finite = np.isfinite(logw)
    if not finite.any():
        raise FilterDivergenceError("filter divergence: likelihood support disjoint from cloud")
    logw = np.where(finite, logw, -np.inf)
    return logw - logsumexp(logw)


def floored_posterior(log_post: np.ndarray, density_floor: float) -> np.ndarray:
    post = np.maximum(np.exp(log_post), density_floor)
    return post / post.sum()


def bayes_update(pred_values, points, m, obs: ObservationModel, density_floor: float = 1e-30) -> np.ndarray:
    """Multiply by the likelihood (in log space) and normalize to sum 1 over the cloud."""
    return floored_posterior(log_posterior(pred_values, points, m, obs), density_floor)


def silverman_scale(points: np.ndarray, center: np.ndarray | None = None) -> np.ndarray:
    """Per-dimension spread times ``n ** (-1 / (d + 4))``.

    The spread is the sample standard deviation, or with ``center`` the
    root-mean-square deviation of the points about that location.
    """
    n, d = points.shape
    if center is None:
        spread = points.std(axis=0, ddof=1)
    else:
        spread = np.sqrt(((points - center) ** 2).mean(axis=0))
    return np.maximum(spread, 1e-9) * n ** (-1.0 / (d + 4))


def mh_resample(
    cloud: PointCloud, config: FilterConfig, rng: RandomSource, diagnostics: dict | None = None
) -> np.ndarray:
    """Independent random-walk Metropolis chains started at every cloud point.

    The target is the Shepard interpolant of the cloud values, evaluated in
    log space from ``cloud.log_values`` so that ratios stay informative where
    the floored values are flat.  Shepard weights extrapolate flat, so the
    target is improper and chains that leave the cloud random-walk; with
    ``config.mh_support='cloud_box'`` the target is zero outside the bounding
    box of the cloud instead.  Each chain runs ``config.mcmc_iters`` steps
    with Gaussian proposals.  The default step is the RMS deviation of the
    points about the posterior mean, times ``N ** (-1 / (d + 4))``.
    """
    N, d, L = cloud.size, cloud.dim, config.mcmc_iters
    x = cloud.points.copy()
    if L == 0:
        return x
    if config.proposal_scale is None:
        scale = silverman_scale(cloud.points, estimate_state(cloud))
    else:
        scale = np.broadcast_to(np.asarray(config.proposal_scale, dtype=float), (d,))
    steps = np.empty((N, L, d))
    logu = np.empty((N, L))
    for i, g in enumerate(_point_streams(rng, N)):
        steps[i] = g.standard_normal((L, d))
        logu[i] = np.log(g.random(L))
    interp = ShepardInterpolant(cloud, min(config.J, N), config.shepard, config.neighbor_search)
    logp = interp.log(x)
    if config.mh_support == "cloud_box":
        lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    else:
        lo, hi = -np.inf, np.inf
    accepted = 0
    for l in range(L):
        prop = x + scale * steps[:, l]
        inside = np.all((prop >= lo) & (prop <= hi), axis=1)
        logp_prop = np.full(N, -np.inf)
        logp_prop[inside] = interp.log(prop[inside])
        take = logu[:, l] < logp_prop - logp
        x[take] = prop[take]
        logp[take] = logp_prop[take]
        accepted += int(take.sum())
    if diagnostics is not None:
        diagnostics.setdefault("acceptance", []).append(accepted / (N * L))
    return x


def separate_duplicates(points: np.ndarray, scale, rng: RandomSource) -> np.ndarray:
    """Jitter repeated rows by ``N(0, (1e-8 * scale)^2)`` so all points are distinct."""
    _, first, counts = np.unique(points, axis=0, return_index=True, return_counts=True)
    if np.all(counts == 1):
        return points
    dup = np.ones(len(points), dtype=bool)
    dup[first] = False
    out = points.copy()
    gen = as_generator(rng)
    out[dup] += 1e-8 * np.asarray(scale) * gen.standard_normal((int(dup.sum()), points.shape[1]))
    return out


def estimate_state(cloud: PointCloud, estimator: str = "mean") -> np.ndarray:
    """Value-weighted mean of the cloud points (``'mode'``: the highest-valued point)."""
    if estimator == "mode":
        return cloud.points[int(np.argmax(cloud.values))].copy()
    total = cloud.values.sum()
    if not total > 0:
        raise ValueError("cloud values must have a positive sum")
    return cloud.values @ cloud.points / total


@dataclass
class FilterOutput:
    times: np.ndarray
    estimates: np.ndarray
    per_step_timing: np.ndarray
    clouds: Optional[list] = None
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        d = self.estimates.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "time"] + [f"est_{k}" for k in range(d)])
            for n, (t, row) in enumerate(zip(self.times, self.estimates), start=1):
                w.writerow([n, repr(float(t))] + [repr(float(v)) for v in row])

    def clouds_to_csv(self, path) -> None:
        if not self.clouds:
            raise ValueError("no cloud snapshots were kept (set keep_clouds)")
        d = self.clouds[0].dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "point"] + [f"x_{k}" for k in range(d)] + ["value"])
            for cloud in self.clouds:
                for i, (p, v) in enumerate(zip(cloud.points, cloud.values)):
                    w.writerow([cloud.time_index, i] + [repr(float(c)) for c in p] + [repr(float(v))])


def _tag(err: Exception, stage: int) -> FilterError:
    if isinstance(err, FilterError):
        return type(err)(err.detail, stage=stage)
    return FilterError(f"{type(err).__name__}: {err}", stage=stage)


def filter_run(
    model: JumpDiffusionModel,
    obs: ObservationModel,
    measurements,
    grid: TimeGrid,
    config: FilterConfig,
    rng: RngStream | None = None,
) -> FilterOutput:
    """Run the full recursion over ``grid`` given measurements at ``t_1 .. t_N``.

    Returns posterior point estimates, one row per measurement time.
    """
    measurements = np.atleast_2d(np.asarray(measurements, dtype=float))
    if measurements.shape[0] != grid.n_steps:
        raise ValueError(f"expected {grid.n_steps} measurement rows, got {measurements.shape[0]}")
    root = RngStream(config.seed) if rng is None else rng
    dt = grid.dt
    diag: dict = {"outside_domain": 0}
    estimates = np.empty((grid.n_steps, model.dim))
    timing = np.empty(grid.n_steps)
    clouds = [] if config.keep_clouds else None

    posterior = init_cloud(model, config, root.child(_INIT))
    source = posterior.points
    if clouds is not None:
        clouds.append(posterior)
    for n in range(grid.n_steps):
        t_start = time.perf_counter()
        stage = root.child(n)
        try:
            moving = PointCloud(source, posterior.values, n)
            new_points = propagate_cloud(moving, model, dt, stage.child(_PROPAGATE))
            new_points = separate_duplicates(new_points, silverman_scale(new_points), stage.child(_SEPARATE))
            pred = prediction_step(posterior, new_points, model, dt, config, stage.child(_PREDICT), diag)
            log_post = log_posterior(pred, new_points, measurements[n], obs)
            post_vals = floored_posterior(log_post, config.density_floor)
            posterior = PointCloud(new_points, post_vals, n + 1, log_post)
            estimates[n] = estimate_state(posterior, config.estimator)
            if n + 1 < grid.n_steps:
                source = mh_resample(posterior, config, stage.child(_MCMC), diag)
        except (FilterError, ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
            raise _tag(err, n + 1) from err
        timing[n] = time.perf_counter() - t_start
        if clouds is not None:
            clouds.append(posterior)
    return FilterOutput(grid.times[1:], estimates, timing, clouds, diag)
