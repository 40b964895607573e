"""Seeded random streams and increment samplers for Levy-driven dynamics.

Every random draw in the package goes through an :class:`RngStream`.  A stream
is identified by ``(seed, stream_id, path)``; child streams extend the path, so
work keyed by e.g. ``(stage, point index)`` gets the same numbers whether it is
executed serially or split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

__all__ = [
    "RngStream",
    "TimeGrid",
    "CompoundPoissonSpec",
    "AlphaStableSpec",
    "as_generator",
    "gaussian_increment",
    "compound_poisson_increment",
    "alpha_stable_increment",
    "stable_characteristic_function",
]


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream.

    The underlying generator is created lazily on first use and is stateful:
    successive draws from the same ``RngStream`` object continue the sequence,
    while a fresh object with equal ``(seed, stream_id, path)`` restarts it.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    _gen: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be nonnegative")
        if any(int(k) < 0 for k in self.path):
            raise ValueError("substream keys must be nonnegative integers")

    @property
    def key(self) -> tuple[int, ...]:
        return (int(self.stream_id),) + tuple(int(k) for k in self.path)

    def child(self, *keys: int) -> "RngStream":
        """Substream keyed by ``keys`` below this stream."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))

    @property
    def generator(self) -> np.random.Generator:
        if not self._gen:
            ss = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
            self._gen.append(np.random.Generator(np.random.PCG64(ss)))
        return self._gen[0]

    def point_generators(self, count: int) -> Iterator[np.random.Generator]:
        """Yield one independent generator per index ``0..count-1``.

        A single Philox generator keyed by ``(seed, stream_id, path)`` is
        repositioned to the counter block of each index in turn, so index
        ``i`` always sees the same numbers whatever ``count`` is. The yielded
        object is reused: draw from it before advancing the iterator.
        """
        key = np.random.SeedSequence(int(self.seed), spawn_key=self.key).generate_state(2, np.uint64)
        bitgen = np.random.Philox(key=key)
        gen = np.random.Generator(bitgen)
        state = bitgen.state
        for i in range(count):
            state["state"]["counter"] = np.array([0, i, 0, 0], dtype=np.uint64)
            state["buffer_pos"] = 4
            state["has_uint32"] = 0
            bitgen.state = state
            yield gen


RandomSource = Union[RngStream, np.random.Generator]


def as_generator(rng: RandomSource) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t0 < t1 < ... < T`` with ``n_steps`` intervals."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")

    @classmethod
    def from_dt(cls, T: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        n = int(round((T - t0) / dt))
        if n < 1 or not math.isclose(n * dt, T - t0, rel_tol=1e-9):
            raise ValueError(f"dt={dt} does not divide [{t0}, {T}] evenly")
        return cls(t0, T, n)

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


_MARKS = ("normal", "constant", "uniform", "exponential")


@dataclass(frozen=True)
class CompoundPoissonSpec:
    """Finite-activity jumps: ``K ~ Poisson(rate*dt)`` marks per step.

    ``mark_params`` depend on ``mark_distribution``:
    normal -> (mean, std), constant -> (value,), uniform -> (low, high),
    exponential -> (scale,).
    """

    rate: float = 1.0
    mark_distribution: str = "normal"
    mark_params: tuple[float, ...] = (0.0, 1.0)
    compensated: bool = True

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"jump rate must be >= 0, got {self.rate}")
        if self.mark_distribution not in _MARKS:
            raise ValueError(f"unknown mark distribution {self.mark_distribution!r}")
        nparams = {"normal": 2, "constant": 1, "uniform": 2, "exponential": 1}[self.mark_distribution]
        if len(self.mark_params) != nparams:
            raise ValueError(
                f"{self.mark_distribution} marks take {nparams} parameter(s), got {self.mark_params}"
            )

    @property
    def mark_mean(self) -> float:
        p = self.mark_params
        if self.mark_distribution == "uniform":
            return 0.5 * (p[0] + p[1])
        return p[0]

    def draw_marks(self, gen: np.random.Generator, n: int) -> np.ndarray:
        p = self.mark_params
        kind = self.mark_distribution
        if kind == "normal":
            return p[0] + p[1] * gen.standard_normal(n)
        if kind == "constant":
            return np.full(n, float(p[0]))
        if kind == "uniform":
            return gen.uniform(p[0], p[1], n)
        return gen.exponential(p[0], n)


@dataclass(frozen=True)
class AlphaStableSpec:
    """Parameters of the stable law with characteristic function

    ``exp(-g^a |t|^a [1 + i b sign(t) tan(pi a/2) ((g|t|)^(1-a) - 1)] + i d t)``.

    ``alpha == 1`` lies outside that formula and is rejected unless
    ``cauchy_limit`` is set, in which case the alpha=1 member of the same
    (continuous-in-alpha) family is sampled.
    """

    alpha: float
    gamma: float = 1.0
    beta_skew: float = 0.0
    delta: float = 0.0
    cauchy_limit: bool = False

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.alpha == 1 and not self.cauchy_limit:
            raise ValueError("alpha = 1 is excluded; pass cauchy_limit=True to sample the Cauchy case")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not -1 <= self.beta_skew <= 1:
            raise ValueError(f"beta_skew must lie in [-1, 1], got {self.beta_skew}")

    def scaled(self, dt: float) -> "AlphaStableSpec":
        """Law of the increment over a step ``dt`` (self-similar scaling)."""
        return AlphaStableSpec(
            self.alpha, self.gamma * dt ** (1.0 / self.alpha), self.beta_skew, self.delta * dt,
            self.cauchy_limit,
        )


def stable_characteristic_function(t, spec: AlphaStableSpec) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    a, g, b, d = spec.alpha, spec.gamma, spec.beta_skew, spec.delta
    at = np.abs(t)
    if a == 1:
        skew = np.where(at > 0, (2 / np.pi) * np.log(np.where(at > 0, g * at, 1.0)), 0.0)
        expo = -g * at * (1 + 1j * b * np.sign(t) * skew) + 1j * d * t
    else:
        with np.errstate(divide="ignore"):
            corr = np.where(at > 0, (g * at) ** (1 - a) - 1, -1.0)
        expo = -(g**a) * at**a * (1 + 1j * b * np.sign(t) * np.tan(np.pi * a / 2) * corr) + 1j * d * t
    return np.exp(expo)


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")


def gaussian_increment(dt: float, dim: int, rng: RandomSource, size: int | None = None) -> np.ndarray:
    """Brownian increment: ``dim`` independent N(0, dt) draws (``size`` rows if given)."""
    _check_dt(dt)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    shape = (dim,) if size is None else (size, dim)
    return math.sqrt(dt) * as_generator(rng).standard_normal(shape)


def compound_poisson_increment(
    spec: CompoundPoissonSpec,
    beta_coeff,
    dt: float,
    rng: RandomSource,
    size: int | None = None,
) -> np.ndarray:
    """Jump increment ``(sum of K marks) * beta_coeff`` minus the compensator."""
    _check_dt(dt)
    beta_coeff = np.asarray(beta_coeff, dtype=float).reshape(-1)
    n = 1 if size is None else size
    gen = as_generator(rng)
    sums = np.zeros(n)
    if spec.rate > 0:
        counts = gen.poisson(spec.rate * dt, n)
        if counts.any():
            marks = spec.draw_marks(gen, int(counts.sum()))
            sums = np.bincount(np.repeat(np.arange(n), counts), weights=marks, minlength=n)
        if spec.compensated:
            sums -= spec.rate * dt * spec.mark_mean
    out = np.multiply.outer(sums, beta_coeff)
    return out[0] if size is None else out


def _cms_standard(alpha: float, beta: float, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Chambers-Mallows-Stuck draw of the unit-scale, zero-location law."""
    if alpha == 1:
        half_pi = np.pi / 2
        bu = half_pi + beta * u
        return (2 / np.pi) * (bu * np.tan(u) - beta * np.log(half_pi * w * np.cos(u) / bu))
    zeta = beta * np.tan(np.pi * alpha / 2)
    shift = np.arctan(zeta) / alpha
    scale = (1 + zeta**2) ** (1 / (2 * alpha))
    x = (
        scale
        * np.sin(alpha * (u + shift))
        / np.cos(u) ** (1 / alpha)
        * (np.cos(u - alpha * (u + shift)) / w) ** ((1 - alpha) / alpha)
    )
    # shift from the S1 to the S0 location convention
    return x - zeta


def alpha_stable_increment(spec: AlphaStableSpec, dt: float, rng: RandomSource, size: int | None = None):
    """Stable increment over ``dt``: one draw of ``Phi(a, g*dt^(1/a), b, d*dt)``."""
    _check_dt(dt)
    step = spec.scaled(dt)
    n = 1 if size is None else size
    gen = as_generator(rng)
    u = np.pi * (gen.random(n) - 0.5)
    w = gen.standard_exponential(n)
    out = step.gamma * _cms_standard(step.alpha, step.beta_skew, u, w) + step.delta
    return float(out[0]) if size is None else out
