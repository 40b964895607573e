import math

import numpy as np
import pytest

from bsdefilter.models import (
    GriddedPotential,
    build_potential_lattice,
    lattice_function,
    potential_grid,
    potential_surface_model,
)


@pytest.fixture(scope="module")
def lattice():
    return build_potential_lattice(well_depth=1.0, lattice_constant=1.0)


@pytest.fixture(scope="module")
def peaks():
    return build_potential_lattice(well_depth=1.0, lattice_constant=1.0, invert=True)


def _fd_gradient(f, p, h=1e-5):
    e = np.eye(2) * h
    return np.column_stack([(f(p + e[k]) - f(p - e[k])) / (2 * h) for k in range(2)])


def test_gradient_vanishes_at_minima(lattice, peaks):
    for pot in (lattice, peaks):
        assert np.abs(pot.gradient(pot.minima)).max() < 1e-6


def test_barrier_equals_well_depth(lattice):
    a = lattice.lattice_constant
    site = lattice.value([0.0, 0.0])[0]
    saddle = lattice.value([a / 2, 0.0])[0]
    assert saddle - site == pytest.approx(1.0, abs=1e-3)
    # saddle is a stationary point with one negative curvature
    assert np.abs(lattice.gradient([a / 2, 0.0])).max() < 1e-6
    eig = np.linalg.eigvalsh(lattice.hessian([a / 2, 0.0])[0])
    assert eig[0] < 0 < eig[1]


def test_minima_are_minima(lattice, peaks):
    for pot in (lattice, peaks):
        for p in pot.minima:
            assert np.all(np.linalg.eigvalsh(pot.hessian(p)[0]) > 0)


def test_periodic_under_lattice_vectors(lattice):
    a = lattice.lattice_constant
    p = np.random.default_rng(0).uniform(-3, 3, size=(200, 2))
    for v in ([a, 0.0], [a / 2, a * math.sqrt(3) / 2]):
        assert np.abs(lattice.value(p + v) - lattice.value(p)).max() < 1e-10


def test_fit_reproduces_closed_form(lattice):
    F = lattice_function(1.0, 1.0)
    p = np.random.default_rng(1).uniform(-5, 5, size=(500, 2))
    assert np.abs(lattice.value(p) - F(p)).max() < 1e-10
    assert lattice.fit_error() < 1e-12


def test_gradient_matches_finite_differences(lattice):
    p = np.random.default_rng(2).uniform(-2, 2, size=(100, 2))
    g = lattice.gradient(p)
    fd = _fd_gradient(lattice.value, p)
    assert np.all(np.abs(g - fd) <= 1e-6 * np.maximum(np.abs(g).max(), 1.0))


def test_hessian_symmetric(lattice):
    H = lattice.hessian(np.random.default_rng(3).uniform(-2, 2, size=(50, 2)))
    assert np.abs(H[:, 0, 1] - H[:, 1, 0]).max() < 1e-8


def test_peaks_are_negated_wells(lattice, peaks):
    p = np.random.default_rng(4).uniform(-2, 2, size=(100, 2))
    assert np.allclose(peaks.value(p), -lattice.value(p), atol=1e-12)


@pytest.mark.parametrize(
    "kw", [dict(well_depth=0.0), dict(lattice_constant=-1.0), dict(resolution=8), dict(domain=(0, 0, 0, 1))]
)
def test_lattice_rejects_bad_arguments(kw):
    with pytest.raises(ValueError):
        build_potential_lattice(**kw)


def test_surface_model_drift_and_divergence(lattice):
    model, obs = potential_surface_model(lattice)
    assert np.abs(model.b(lattice.minima)).max() < 1e-6
    assert np.all(model.div_b(lattice.minima) < 0)
    p = np.random.default_rng(5).uniform(-2, 2, size=(100, 2))
    fd = -_fd_gradient(lattice.value, p)
    b = model.b(p)
    assert np.all(np.abs(b - fd) <= 1e-4 * np.maximum(np.abs(b).max(), 1e-3))
    assert np.allclose(model.sigma, np.diag([0.1, 0.1]))
    assert np.allclose(model.jump_coeff, [10.0, 10.0])
    assert np.allclose(obs.R, np.diag([0.05, 0.05]))


def test_potential_grid():
    g = potential_grid()
    assert (g.T, g.n_steps) == (10.0, 500)


def test_csv_round_trip_and_polynomial_fit(tmp_path):
    xs = np.linspace(-1, 1, 21)
    ys = np.linspace(-1, 2, 31)
    X, Y = np.meshgrid(xs, ys)
    F = X**3 - 2 * X * Y + 0.5 * Y**2
    pot = GriddedPotential.from_grid(xs, ys, F)
    path = tmp_path / "surface.csv"
    pot.to_csv(path)
    back = GriddedPotential.from_csv(path)
    assert np.array_equal(back.F, F)
    assert back.smooth_fit.degree == 3
    p = np.column_stack([np.linspace(-0.9, 0.9, 7), np.linspace(-0.9, 1.9, 7)])
    assert np.allclose(back.value(p), p[:, 0] ** 3 - 2 * p[:, 0] * p[:, 1] + 0.5 * p[:, 1] ** 2, atol=1e-10)
    assert np.allclose(back.laplacian(p), 6 * p[:, 0] + 1.0, atol=1e-8)


def test_polynomial_fit_clamps_outside_domain(caplog):
    xs = ys = np.linspace(0, 1, 11)
    X, Y = np.meshgrid(xs, ys)
    pot = GriddedPotential.from_grid(xs, ys, X + Y)
    with caplog.at_level("WARNING"):
        out = pot.value([[5.0, 0.5]])
    assert out[0] == pytest.approx(1.5)
    assert "outside" in caplog.text
    model, _ = potential_surface_model(pot, jump=None)
    assert not model.in_domain([[5.0, 0.5]])[0]


def test_csv_rejects_incomplete_grid(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,F\n0,0,1\n1,0,2\n0,1,3\n")
    with pytest.raises(ValueError):
        GriddedPotential.from_csv(path)
