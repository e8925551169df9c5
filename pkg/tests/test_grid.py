import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from skelflow.geometry import Ball, profile_field, signed_distance
from skelflow.grid import (
    forward,
    gaussian_convolve,
    gradient,
    gradient_axis,
    helmholtz_inverse,
    integrate,
    inverse,
    make_grid,
)


def test_make_grid_128_spacing():
    g = make_grid((128, 128, 128))
    assert np.allclose(g.spacing, 1 / 128)
    assert g.size == 128**3


def test_make_grid_unit_square():
    g = make_grid((8, 8), ((0, 0), (1, 1)))
    assert tuple(g.spacing) == (0.125, 0.125)
    assert np.allclose(g.axes()[0], (np.arange(8) + 0.5) * 0.125)


@pytest.mark.parametrize("dims", [(0, 8), (-8, 8), (4, 8), (8, 8, 8, 8)])
def test_make_grid_rejects_bad_dims(dims):
    with pytest.raises(ValueError):
        make_grid(dims)


def test_make_grid_rejects_degenerate_box():
    with pytest.raises(ValueError):
        make_grid((8, 8), ((0, 0), (1, 0)))


def test_convolve_constant():
    g = make_grid((16, 16, 16))
    out = gaussian_convolve(g, np.ones(g.dims), 0.1)
    assert np.allclose(out, 1.0, atol=1e-14)


def test_convolve_fourier_mode():
    g = make_grid((32, 32))
    x, y = g.mesh()
    k = np.array([3, 2])
    f = np.cos(2 * np.pi * (k[0] * x + k[1] * y))
    sigma = 0.05
    out = gaussian_convolve(g, f, sigma)
    assert np.allclose(out, np.exp(-np.pi * sigma**2 * (k @ k)) * f, atol=1e-13)


def test_convolve_impulse_matches_spatial_quadrature():
    # oracle: periodic image sum of the continuous kernel, times the cell volume
    g = make_grid((16, 16, 16))
    sigma = 0.3
    f = np.zeros(g.dims)
    f[5, 8, 11] = 1.0
    out = gaussian_convolve(g, f, sigma)
    centre = [g.axes()[a][i] for a, i in enumerate((5, 8, 11))]
    ref = np.zeros(g.dims)
    mesh = g.mesh()
    for shift in np.ndindex(5, 5, 5):
        r2 = sum((m - c + s - 2) ** 2 for m, c, s in zip(mesh, centre, shift))
        ref = ref + np.exp(-np.pi * r2 / sigma**2)
    ref *= g.cell_volume / sigma**3
    assert np.max(np.abs(out - ref)) <= 1e-6 * ref.max()


def test_convolve_rejects_nonpositive_sigma():
    g = make_grid(8, ndim=2)
    with pytest.raises(ValueError):
        gaussian_convolve(g, np.zeros(g.dims), 0.0)


def test_convolve_warns_below_spacing():
    g = make_grid(8, ndim=2)
    with pytest.warns(UserWarning):
        gaussian_convolve(g, np.zeros(g.dims), 0.01)


def test_gradient_constant_is_zero():
    g = make_grid(16)
    assert np.all(gradient(g, np.full(g.dims, 3.0)) == 0)


def test_gradient_second_order():
    errs = []
    for n in (32, 64):
        g = make_grid((n, n))
        x, _ = g.mesh(sparse=False)
        d = gradient(g, np.sin(2 * np.pi * x))
        errs.append(np.max(np.abs(d[0] - 2 * np.pi * np.cos(2 * np.pi * x))))
        assert np.max(np.abs(d[1])) < 1e-12
    order = np.log2(errs[0] / errs[1])
    assert 1.9 < order < 2.1


def test_gradient_other_axis_vanishes():
    g = make_grid((32, 32))
    _, y = g.mesh(sparse=False)
    assert np.max(np.abs(gradient(g, np.sin(2 * np.pi * y))[0])) < 1e-12


def test_helmholtz_constant():
    g = make_grid(16)
    dt, alpha, eps = 0.01, 1.66, 0.1
    out = helmholtz_inverse(g, np.full(g.dims, 2.0), dt, alpha, eps)
    assert np.allclose(out, 2.0 / (1 + dt * alpha / eps**2))


def test_helmholtz_mode():
    g = make_grid((32, 32))
    x, y = g.mesh()
    f = np.cos(2 * np.pi * (x + 4 * y))
    dt, alpha, eps = 1e-3, 2.0, 0.05
    out = helmholtz_inverse(g, f, dt, alpha, eps)
    scale = 1 / (1 + dt * (4 * np.pi**2 * 17 + alpha / eps**2))
    assert np.allclose(out, scale * f, atol=1e-13)


def test_helmholtz_dt_zero_is_identity():
    g = make_grid(8)
    f = np.random.default_rng(0).random(g.dims)
    assert np.array_equal(helmholtz_inverse(g, f, 0.0, 1.0, 0.1), f)


def test_helmholtz_positivity_smooth_data():
    # the continuous symbol rings on a lone spike; resolved data stays nonnegative
    g = make_grid((32, 32))
    x, y = g.mesh()
    f = np.exp(-np.pi * (x**2 + y**2) / 0.15**2)
    out = helmholtz_inverse(g, f, 1e-3, 1.66, 0.05)
    assert out.min() > -1e-12


def test_integrate_trivial():
    g = make_grid(8)
    assert integrate(g, np.ones(g.dims)) == pytest.approx(1.0)
    assert integrate(g, np.zeros(g.dims)) == 0.0


def test_integrate_ball_profile():
    g = make_grid(128)
    eps = 2 / 128
    u = profile_field(signed_distance(Ball((0, 0, 0), 0.25), g), eps)
    exact = 4 / 3 * np.pi * 0.25**3
    assert abs(integrate(g, u) - exact) <= 0.02 * exact


fields2d = arrays(np.float64, (16, 16), elements=st.floats(-1e3, 1e3, allow_nan=False))


@settings(max_examples=30, deadline=None)
@given(fields2d)
def test_round_trip(f):
    g = make_grid((16, 16))
    back = inverse(g, forward(g, f))
    assert np.max(np.abs(back - f)) <= 1e-12 * max(1.0, np.max(np.abs(f)))


@settings(max_examples=30, deadline=None)
@given(fields2d, st.floats(0.07, 0.4))
def test_convolution_preserves_mass(f, sigma):
    g = make_grid((16, 16))
    a, b = integrate(g, f), integrate(g, gaussian_convolve(g, f, sigma))
    scale = np.sum(np.abs(f)) * g.cell_volume
    assert abs(a - b) <= 1e-10 * abs(a) + 1e-12 * (1 + scale)


@settings(max_examples=30, deadline=None)
@given(fields2d, st.floats(1e-4, 1.0), st.floats(0.0, 20.0))
def test_helmholtz_contracts_mean(f, dt, alpha):
    g = make_grid((16, 16))
    out = helmholtz_inverse(g, f, dt, alpha, 0.05)
    assert abs(out.mean()) <= abs(f.mean()) * (1 + 1e-12) + 1e-12


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (16, 16), elements=st.floats(-1, 1)))
def test_gradient_commutes_with_convolution(f):
    g = make_grid((16, 16))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for method in ("spectral", "central"):
            a = gradient_axis(g, gaussian_convolve(g, f, 0.1), 0, method)
            b = gaussian_convolve(g, gradient_axis(g, f, 0, method), 0.1)
            assert np.max(np.abs(a - b)) <= 1e-10
