"""The two synthetic benchmark systems: a periodic 1D potential and bearing-range tracking."""

from __future__ import annotations

import numpy as np

from ..stochastic import AlphaStableSpec, CompoundPoissonSpec, TimeGrid
from .base import GaussianPrior, JumpDiffusionModel, ObservationModel


def example1_model(
    x0: float = 0.0,
    sigma: float = 4.0,
    jump: CompoundPoissonSpec | None = CompoundPoissonSpec(),
    jump_scale: float = 10.0,
    prior_var: float = 0.25,
    R: float = 0.1,
) -> tuple[JumpDiffusionModel, ObservationModel]:
    """Particle in the periodic well ``U = -(10/3) cos(3x/10)``.

    ``dS = sin(3S/10) dt + 4 dW + int 10 e mu~(dt, de)``, observed directly
    with noise variance ``R``.
    """

    def drift(x):
        return np.sin(0.3 * x)

    def divergence(x):
        return 0.3 * np.cos(0.3 * x[:, 0])

    model = JumpDiffusionModel(
        dim=1,
        drift=drift,
        drift_divergence=divergence,
        sigma=[[sigma]],
        prior=GaussianPrior([x0], [[prior_var]]),
        jump=jump,
        jump_coeff=[jump_scale] if jump is not None else None,
        x0=[x0],
        name="example1",
    )
    obs = ObservationModel(1, lambda x: x, [[R]])
    return model, obs


def example1_grid() -> TimeGrid:
    return TimeGrid.from_dt(2.0, 0.02)


_SIGMA2 = np.diag([0.1, 0.1, 0.05, 0.05])
_BETA2 = np.array([2.0, 2.0, 0.2, 0.2])


def kinematics_matrix(kinematics: str = "identity_blocks") -> np.ndarray:
    """Drift matrix of the tracking model.

    ``identity_blocks`` is ``[[I, I], [0, I]]``, the default; ``standard`` is the
    near-constant-velocity ``[[0, I], [0, 0]]``.
    """
    eye, zero = np.eye(2), np.zeros((2, 2))
    if kinematics == "identity_blocks":
        return np.block([[eye, eye], [zero, eye]])
    if kinematics == "standard":
        return np.block([[zero, eye], [zero, zero]])
    raise ValueError(f"kinematics must be 'identity_blocks' or 'standard', got {kinematics!r}")


def bearing_range(observer=(0.0, 0.0)):
    ox, oy = float(observer[0]), float(observer[1])

    def h(x):
        dx = x[:, 0] - ox
        dy = x[:, 1] - oy
        if np.any((dx == 0) & (dy == 0)):
            raise FloatingPointError("bearing undefined: target coincides with observer")
        return np.column_stack([np.arctan2(dy, dx), np.hypot(dx, dy)])

    return h


def example2_model(
    alpha: float = 1.0,
    kinematics: str = "identity_blocks",
    x0=(1.0, 1.0, 0.5, 0.2),
    observer=(0.0, 0.0),
    gamma: float = 1.0,
    prior_cov=(0.25, 0.25, 0.04, 0.04),
    R=(0.01, 0.1),
) -> tuple[JumpDiffusionModel, ObservationModel]:
    """Bearing-only (bearing + range) tracking with alpha-stable jumps.

    State ``(X, Y, X', Y')``; drift ``A S`` with ``A`` from :func:`kinematics_matrix`.
    ``alpha = 1`` is sampled as the Cauchy member of the stable family.
    """
    A = kinematics_matrix(kinematics)
    trace = float(np.trace(A))

    def drift(x):
        return x @ A.T

    def divergence(x):
        return np.full(x.shape[0], trace)

    jump = AlphaStableSpec(alpha, gamma, 0.0, 0.0, cauchy_limit=(alpha == 1))
    model = JumpDiffusionModel(
        dim=4,
        drift=drift,
        drift_divergence=divergence,
        sigma=_SIGMA2,
        prior=GaussianPrior(np.asarray(x0, float), np.diag(prior_cov)),
        jump=jump,
        jump_coeff=_BETA2,
        x0=x0,
        name="example2",
    )
    obs = ObservationModel(2, bearing_range(observer), np.diag(R), angular=(0,))
    return model, obs


def example2_grid() -> TimeGrid:
    return TimeGrid.from_dt(2.0, 0.04)
