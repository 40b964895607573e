"""Gridded 2D potential surfaces and the atom-tracking state model built on them.

A surface sampled on a regular grid is turned into a globally smooth fit that
exposes value, gradient, Hessian and Laplacian.  Two fits are available:

* ``fourier`` for surfaces that are periodic over the grid box (the synthetic
  triangular lattices).  Exact for band-limited data; queries anywhere in the
  plane are handled by periodicity.
* ``polynomial`` for general surfaces: a tensor-product Chebyshev least-squares
  fit whose degree is the smallest meeting the fit tolerance.  Queries outside
  the box are clamped to the boundary.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev as C

from ..stochastic import CompoundPoissonSpec, TimeGrid
from .base import GaussianPrior, JumpDiffusionModel, ObservationModel

log = logging.getLogger(__name__)


class FourierSurface:
    """Trigonometric fit of a surface periodic over ``[x0, x0+Lx) x [y0, y0+Ly)``."""

    def __init__(self, xs, ys, F, rel_cutoff: float = 1e-13):
        ny, nx = F.shape
        self.origin = np.array([xs[0], ys[0]])
        self.period = np.array([(xs[1] - xs[0]) * nx, (ys[1] - ys[0]) * ny])
        coef = np.fft.fft2(F) / F.size
        keep = np.abs(coef) > rel_cutoff * np.abs(coef).max()
        iy, ix = np.nonzero(keep)
        # signed frequency indices
        fx = np.where(ix > nx // 2, ix - nx, ix)
        fy = np.where(iy > ny // 2, iy - ny, iy)
        self.k = 2 * np.pi * np.column_stack([fx / self.period[0], fy / self.period[1]])
        self.c = coef[iy, ix]
        self.periodic = True

    def _phase(self, p):
        return np.exp(1j * (p - self.origin) @ self.k.T)

    def value(self, p):
        return (self._phase(p) @ self.c).real

    def gradient(self, p):
        e = self._phase(p) * self.c
        return np.column_stack([(e @ (1j * self.k[:, 0])).real, (e @ (1j * self.k[:, 1])).real])

    def hessian(self, p):
        e = self._phase(p) * self.c
        kk = -self.k[:, :, None] * self.k[:, None, :]
        return np.einsum("nm,mij->nij", e, kk).real

    def laplacian(self, p):
        e = self._phase(p) * self.c
        return (e @ -(self.k**2).sum(axis=1)).real


class PolynomialSurface:
    """Tensor-product Chebyshev least-squares fit on the grid box."""

    def __init__(self, xs, ys, F, fit_tol: float = 1e-3, max_degree: int = 12):
        self.lo = np.array([xs[0], ys[0]])
        self.hi = np.array([xs[-1], ys[-1]])
        self.periodic = False
        self._warned = False
        span = float(F.max() - F.min()) or 1.0
        u, v = self._unit(xs, 0), self._unit(ys, 1)
        top = min(max_degree, len(xs) - 1, len(ys) - 1)
        for deg in range(1, top + 1):
            coef = np.linalg.pinv(C.chebvander(v, deg)) @ F @ np.linalg.pinv(C.chebvander(u, deg)).T
            err = np.abs(C.chebgrid2d(v, u, coef) - F).max() / span
            if err <= fit_tol:
                break
        else:
            log.warning("polynomial surface fit error %.3g exceeds tolerance %.3g at degree %d", err, fit_tol, top)
        self.degree = deg
        self.fit_error = err
        # coef[i, j] multiplies T_i(v) T_j(u)
        self.coef = coef
        self._scale = 2.0 / (self.hi - self.lo)

    def _unit(self, x, axis):
        return 2.0 * (np.asarray(x) - self.lo[axis]) / (self.hi[axis] - self.lo[axis]) - 1.0

    def _uv(self, p):
        q = np.clip(p, self.lo, self.hi)
        if not self._warned and np.any(q != p):
            log.warning("potential queried outside the fitted domain; clamping to the boundary")
            self._warned = True
        return self._unit(q[:, 0], 0), self._unit(q[:, 1], 1)

    def _eval(self, p, dv, du):
        u, v = self._uv(p)
        c = self.coef
        if dv:
            c = C.chebder(c, dv, axis=0)
        if du:
            c = C.chebder(c, du, axis=1)
        return C.chebval2d(v, u, c) * self._scale[1] ** dv * self._scale[0] ** du

    def value(self, p):
        return self._eval(p, 0, 0)

    def gradient(self, p):
        return np.column_stack([self._eval(p, 0, 1), self._eval(p, 1, 0)])

    def hessian(self, p):
        fxx, fyy, fxy = self._eval(p, 0, 2), self._eval(p, 2, 0), self._eval(p, 1, 1)
        return np.stack([np.column_stack([fxx, fxy]), np.column_stack([fxy, fyy])], axis=1)

    def laplacian(self, p):
        return self._eval(p, 0, 2) + self._eval(p, 2, 0)


@dataclass
class GriddedPotential:
    """Samples ``F[j, i] = F(xs[i], ys[j])`` of a 2D potential plus a smooth fit."""

    xs: np.ndarray
    ys: np.ndarray
    F: np.ndarray
    smooth_fit: object
    minima: np.ndarray | None = None
    lattice_constant: float | None = None

    @classmethod
    def from_grid(cls, xs, ys, F, fit: str = "polynomial", fit_tol: float = 1e-3, max_degree: int = 12, **extra):
        xs, ys, F = np.asarray(xs, float), np.asarray(ys, float), np.asarray(F, float)
        if F.shape != (ys.size, xs.size):
            raise ValueError(f"F must have shape (len(ys), len(xs)) = {(ys.size, xs.size)}, got {F.shape}")
        if xs.size < 2 or ys.size < 2:
            raise ValueError("grid needs at least two nodes per axis")
        if fit == "fourier":
            surface = FourierSurface(xs, ys, F)
        elif fit == "polynomial":
            surface = PolynomialSurface(xs, ys, F, fit_tol, max_degree)
        else:
            raise ValueError(f"fit must be 'fourier' or 'polynomial', got {fit!r}")
        return cls(xs, ys, F, surface, **extra)

    @property
    def periodic(self) -> bool:
        return self.smooth_fit.periodic

    def value(self, p):
        return self.smooth_fit.value(np.atleast_2d(p))

    def gradient(self, p):
        return self.smooth_fit.gradient(np.atleast_2d(p))

    def hessian(self, p):
        return self.smooth_fit.hessian(np.atleast_2d(p))

    def laplacian(self, p):
        return self.smooth_fit.laplacian(np.atleast_2d(p))

    def contains(self, p):
        p = np.atleast_2d(p)
        if self.periodic:
            return np.ones(len(p), dtype=bool)
        return (
            (p[:, 0] >= self.xs[0]) & (p[:, 0] <= self.xs[-1]) & (p[:, 1] >= self.ys[0]) & (p[:, 1] <= self.ys[-1])
        )

    def fit_error(self) -> float:
        """Max grid residual of the smooth fit relative to the sample range."""
        X, Y = np.meshgrid(self.xs, self.ys)
        fitted = self.value(np.column_stack([X.ravel(), Y.ravel()])).reshape(self.F.shape)
        return float(np.abs(fitted - self.F).max() / (self.F.max() - self.F.min()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "F"])
            for j, y in enumerate(self.ys):
                for i, x in enumerate(self.xs):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(self.F[j, i]))])

    @classmethod
    def from_csv(cls, path, fit: str = "polynomial", **kw) -> "GriddedPotential":
        """Load a surface from CSV (columns x, y, F) sampled on a complete regular grid."""
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        xs, ix = np.unique(data[:, 0], return_inverse=True)
        ys, iy = np.unique(data[:, 1], return_inverse=True)
        if len(data) != xs.size * ys.size:
            raise ValueError("CSV does not describe a complete regular grid")
        F = np.full((ys.size, xs.size), np.nan)
        F[iy, ix] = data[:, 2]
        if np.isnan(F).any():
            raise ValueError("CSV grid has missing nodes")
        return cls.from_grid(xs, ys, F, fit=fit, **kw)


# reciprocal vectors of the triangular lattice with primitive vectors (a, 0), (a/2, a*sqrt(3)/2)
def _reciprocal(a: float) -> np.ndarray:
    s3 = math.sqrt(3.0)
    return (2 * np.pi / a) * np.array([[1.0, -1 / s3], [0.0, 2 / s3], [-1.0, -1 / s3]])


def lattice_function(well_depth: float, lattice_constant: float, invert: bool = False):
    """Closed form ``F(r) = -A sum_k cos(G_k . r)`` with ``A = well_depth / 4``.

    Minima sit on the lattice sites with barrier (bond-midpoint saddle minus
    site) equal to ``well_depth``.  ``invert`` returns ``-F``.
    """
    G = _reciprocal(lattice_constant)
    amp = (well_depth / 4.0) * (-1.0 if invert else 1.0)

    def F(p):
        p = np.atleast_2d(p)
        return -amp * np.cos(p @ G.T).sum(axis=1)

    return F


def build_potential_lattice(
    well_depth: float = 1.0,
    lattice_constant: float = 1.0,
    domain=(-2.0, 2.0, -2.0, 2.0),
    resolution: int = 32,
    invert: bool = False,
) -> GriddedPotential:
    """Sample a triangular lattice of wells on a periodic box and fit it.

    The box is snapped to a whole number of rectangular supercells
    ``a x a*sqrt(3)`` starting at the lower-left corner of ``domain``, so the
    sampled surface is exactly periodic.  ``resolution`` is nodes per lattice
    constant along x.
    """
    if not well_depth > 0 or not lattice_constant > 0:
        raise ValueError("well_depth and lattice_constant must be positive")
    if resolution < 16:
        raise ValueError("resolution must be at least 16 nodes per lattice period")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain}")
    a = lattice_constant
    cell_y = a * math.sqrt(3.0)
    ncx = max(1, round((x1 - x0) / a))
    ncy = max(1, round((y1 - y0) / cell_y))
    per_cell_y = int(math.ceil(resolution * math.sqrt(3.0)))
    xs = x0 + a * np.arange(ncx * resolution) / resolution
    ys = y0 + cell_y * np.arange(ncy * per_cell_y) / per_cell_y
    X, Y = np.meshgrid(xs, ys)
    F = lattice_function(well_depth, a, invert)(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    if invert:
        # minima of the inverted surface: triangle centres
        minima = np.array([[a / 2, cell_y / 6], [a, cell_y / 3]])
    else:
        minima = np.array([[0.0, 0.0], [a / 2, cell_y / 2]])
    return GriddedPotential.from_grid(xs, ys, F, fit="fourier", minima=minima, lattice_constant=a)


def potential_surface_model(
    potential: GriddedPotential,
    x0=None,
    sigma=(0.1, 0.1),
    jump: CompoundPoissonSpec | None = CompoundPoissonSpec(),
    jump_coeff=(10.0, 10.0),
    prior_cov=(0.04, 0.04),
    R=(0.05, 0.05),
    name: str = "potential",
) -> tuple[JumpDiffusionModel, ObservationModel]:
    """Atom on a surface: ``dS = -grad F(S) dt + sigma dW + jumps``, position observed."""
    if x0 is None:
        x0 = potential.minima[0] if potential.minima is not None else [
            0.5 * (potential.xs[0] + potential.xs[-1]),
            0.5 * (potential.ys[0] + potential.ys[-1]),
        ]
    x0 = np.asarray(x0, dtype=float)

    def drift(x):
        return -potential.gradient(x)

    def divergence(x):
        return -potential.laplacian(x)

    model = JumpDiffusionModel(
        dim=2,
        drift=drift,
        drift_divergence=divergence,
        sigma=np.diag(sigma),
        prior=GaussianPrior(x0, np.diag(prior_cov)),
        jump=jump,
        jump_coeff=jump_coeff if jump is not None else None,
        x0=x0,
        domain_check=None if potential.periodic else potential.contains,
        name=name,
    )
    obs = ObservationModel(2, lambda x: x, np.diag(R))
    return model, obs


def potential_grid() -> TimeGrid:
    return TimeGrid.from_dt(10.0, 0.02)
