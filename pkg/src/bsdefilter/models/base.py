"""Model interface: jump-diffusion state dynamics and Gaussian observations."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from ..stochastic import (
    AlphaStableSpec,
    CompoundPoissonSpec,
    RandomSource,
    RngStream,
    TimeGrid,
    alpha_stable_increment,
    as_generator,
    compound_poisson_increment,
)

JumpSpec = Union[CompoundPoissonSpec, AlphaStableSpec, None]
VectorField = Callable[[np.ndarray], np.ndarray]


def _rows(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"prior covariance shape {cov.shape} does not match mean {mean.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: RandomSource, n: int) -> np.ndarray:
        z = as_generator(rng).standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T

    def logpdf(self, x) -> np.ndarray:
        x, _ = _rows(x)
        r = np.linalg.solve(self._chol, (x - self.mean).T)
        logdet = 2 * np.log(np.diag(self._chol)).sum()
        return -0.5 * (r**2).sum(axis=0) - 0.5 * (self.dim * np.log(2 * np.pi) + logdet)

    def density(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))


@dataclass(frozen=True)
class JumpDiffusionModel:
    """``dS = b(S) dt + sigma dW + int beta(e) mu~(dt, de)`` with ``beta(e) = e * jump_coeff``.

    ``drift`` and ``drift_divergence`` act on ``(n, d)`` arrays and return
    ``(n, d)`` and ``(n,)`` respectively.
    """

    dim: int
    drift: VectorField
    drift_divergence: Callable[[np.ndarray], np.ndarray]
    sigma: np.ndarray
    prior: GaussianPrior
    jump: JumpSpec = None
    jump_coeff: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    domain_check: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (self.dim, self.dim):
            raise ValueError(f"sigma must be {self.dim}x{self.dim}, got {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("sigma has non-finite entries")
        object.__setattr__(self, "sigma", sigma)
        if self.prior.dim != self.dim:
            raise ValueError("prior dimension does not match model dimension")
        if self.jump is not None:
            if self.jump_coeff is None:
                raise ValueError("a jump spec needs jump_coeff")
            coeff = np.atleast_1d(np.asarray(self.jump_coeff, dtype=float))
            if coeff.shape != (self.dim,):
                raise ValueError(f"jump_coeff must have length {self.dim}")
            object.__setattr__(self, "jump_coeff", coeff)
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))

    def b(self, x) -> np.ndarray:
        x, single = _rows(x)
        out = np.asarray(self.drift(x), dtype=float).reshape(x.shape)
        return out[0] if single else out

    def div_b(self, x) -> np.ndarray:
        x, single = _rows(x)
        out = np.asarray(self.drift_divergence(x), dtype=float).reshape(x.shape[0])
        return out[0] if single else out

    def in_domain(self, x) -> np.ndarray:
        x, _ = _rows(x)
        if self.domain_check is None:
            return np.ones(x.shape[0], dtype=bool)
        return np.asarray(self.domain_check(x), dtype=bool)

    def diffusion_noise(self, dt: float, rng: RandomSource, n: int) -> np.ndarray:
        """``n`` draws of ``sigma @ dW`` over a step ``dt``."""
        z = as_generator(rng).standard_normal((n, self.dim))
        return np.sqrt(dt) * z @ self.sigma.T

    def jump_noise(self, dt: float, rng: RandomSource, n: int) -> np.ndarray:
        """``n`` draws of the jump integral over a step ``dt``."""
        if self.jump is None:
            return np.zeros((n, self.dim))
        if isinstance(self.jump, CompoundPoissonSpec):
            return compound_poisson_increment(self.jump, self.jump_coeff, dt, rng, size=n)
        e = alpha_stable_increment(self.jump, dt, rng, size=n)
        return e[:, None] * self.jump_coeff[None, :]

    def point_noise(self, dt: float, gen: np.random.Generator) -> np.ndarray:
        """Diffusion plus jump increment for a single point.

        Consumes ``gen`` exactly as ``diffusion_noise`` followed by
        ``jump_noise`` with ``n=1`` would, without the batching overhead.
        """
        out = np.sqrt(dt) * (self.sigma @ gen.standard_normal(self.dim))
        jump = self.jump
        if jump is None:
            return out
        if isinstance(jump, CompoundPoissonSpec):
            count = gen.poisson(jump.rate * dt) if jump.rate > 0 else 0
            total = jump.draw_marks(gen, count).sum() if count else 0.0
            if jump.compensated:
                total -= jump.rate * dt * jump.mark_mean
            return out + total * self.jump_coeff
        return out + alpha_stable_increment(jump, dt, gen) * self.jump_coeff

    def euler_step(self, x, dt: float, rng: RandomSource) -> np.ndarray:
        """One Euler-Maruyama step with jumps for each row of ``x``."""
        x, single = _rows(x)
        gen = as_generator(rng)
        out = x + self.b(x) * dt + self.diffusion_noise(dt, gen, len(x)) + self.jump_noise(dt, gen, len(x))
        return out[0] if single else out

    def without_jumps(self) -> "JumpDiffusionModel":
        return replace(self, jump=None, jump_coeff=None)


@dataclass(frozen=True)
class ObservationModel:
    """``m = h(S) + noise`` with noise covariance ``R``.

    ``angular`` flags components (bearings) whose residuals wrap to (-pi, pi].
    An all-zero ``R`` describes a noiseless sensor: usable for simulation but
    not for likelihood evaluation.
    """

    obs_dim: int
    h: VectorField
    R: np.ndarray
    angular: tuple[int, ...] = ()
    _chol: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape != (self.obs_dim, self.obs_dim):
            raise ValueError(f"R must be {self.obs_dim}x{self.obs_dim}, got {R.shape}")
        if not np.allclose(R, R.T):
            raise ValueError("R must be symmetric")
        object.__setattr__(self, "R", R)
        if np.any(R):
            try:
                object.__setattr__(self, "_chol", np.linalg.cholesky(R))
            except np.linalg.LinAlgError:
                raise ValueError("R must be positive definite") from None

    @property
    def noiseless(self) -> bool:
        return self._chol is None

    def observe(self, x) -> np.ndarray:
        x, single = _rows(x)
        out = np.asarray(self.h(x), dtype=float).reshape(x.shape[0], self.obs_dim)
        return out[0] if single else out

    def residual(self, m, x) -> np.ndarray:
        r = np.asarray(m, dtype=float) - self.observe(x)
        if self.angular:
            idx = list(self.angular)
            r[..., idx] = (r[..., idx] + np.pi) % (2 * np.pi) - np.pi
        return r

    def sample(self, x, rng: RandomSource) -> np.ndarray:
        x, single = _rows(x)
        clean = self.observe(x)
        if self.noiseless:
            out = clean
        else:
            out = clean + as_generator(rng).standard_normal(clean.shape) @ self._chol.T
        return out[0] if single else out


def log_likelihood(obs: ObservationModel, m, x) -> np.ndarray:
    """Unnormalized Gaussian log-likelihood ``-1/2 r^T R^-1 r`` with ``r = m - h(x)``.

    Returns a scalar for a single state, an ``(n,)`` array for ``(n, d)`` input.
    """
    if obs.noiseless:
        raise ValueError("likelihood undefined for a noiseless (R = 0) observation model")
    m = np.asarray(m, dtype=float)
    if m.shape != (obs.obs_dim,):
        raise ValueError(f"measurement must have shape ({obs.obs_dim},), got {m.shape}")
    r = obs.residual(m, x)
    z = np.linalg.solve(obs._chol, np.atleast_2d(r).T)
    out = -0.5 * (z**2).sum(axis=0)
    return float(out[0]) if np.ndim(x) == 1 else out


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray


def simulate_truth(model: JumpDiffusionModel, obs: ObservationModel, grid: TimeGrid, rng: RandomSource):
    """Simulate one state path and its measurements at ``t_1 .. t_N``.

    The path starts at ``model.x0`` (a prior draw if unset) and follows the
    Euler-Maruyama scheme with jump increments.  Returns ``(Trajectory, measurements)``.
    """
    gen = as_generator(rng if not isinstance(rng, RngStream) else rng.child(0))
    dt = grid.dt
    states = np.empty((grid.n_steps + 1, model.dim))
    states[0] = model.x0 if model.x0 is not None else model.prior.sample(gen, 1)[0]
    meas = np.empty((grid.n_steps, obs.obs_dim))
    for n in range(grid.n_steps):
        states[n + 1] = model.euler_step(states[n], dt, gen)
        meas[n] = obs.sample(states[n + 1], gen)
    return Trajectory(grid.times, states), meas
