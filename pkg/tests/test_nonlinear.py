import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import smooth_state
from nsklab.errors import RangeViolation
from nsklab.grid import Grid, SpectralState, dealias_mask, to_physical, to_spectral
from nsklab.model import Polytropic, validate_params
from nsklab.nonlinear import (
    compute_f,
    compute_g,
    compute_rhs,
    korteweg_reference_term,
    korteweg_remainder,
    stress_divergence,
)

G3 = Grid(3, 2 * math.pi, 16)


def _band_limited(grid, rng, kmax, amp):
    """Random real fields whose modes satisfy |k_axis| <= kmax."""
    shape = (grid.dim + 1,) + grid.shape
    spec = to_spectral(rng.standard_normal(shape), grid.dim)
    keep = np.ones(grid.shape, bool)
    for ax in range(grid.dim):
        s = [1] * grid.dim
        s[ax] = grid.modes
        keep &= (np.abs(grid.k_int) <= kmax).reshape(s)
    spec = spec * keep
    phys = to_physical(spec, grid.dim)
    spec = spec * (amp / np.max(np.abs(phys)))
    return SpectralState.from_stacked(spec)


def _refine(spec, grid, factor):
    """Exact trigonometric interpolation onto a lattice ``factor`` times finer."""
    fine = Grid(grid.dim, grid.box_length, grid.modes * factor)
    out = np.zeros(spec.shape[:-grid.dim] + fine.shape, complex)
    idx = np.ix_(*[np.where(np.isin(fine.k_int, grid.k_int[grid.k_int != -grid.modes // 2]))[0]] * grid.dim)
    src = np.ix_(*[np.where(grid.k_int != -grid.modes // 2)[0]] * grid.dim)
    out[(Ellipsis,) + idx] = spec[(Ellipsis,) + src] * factor**grid.dim
    return to_physical(out, grid.dim), fine


def _fd8(f, h, axis):
    c = [4 / 5, -1 / 5, 4 / 105, -1 / 280]
    return sum(ck * (np.roll(f, -(k + 1), axis) - np.roll(f, k + 1, axis)) for k, ck in enumerate(c)) / h


def test_f_zero_velocity(params, rng):
    X = smooth_state(G3, rng, amp=0.1)
    X.u_hat[:] = 0
    assert not np.any(compute_f(X, G3, params))


def test_f_constant_density():
    g = Grid(3, 2 * math.pi, 12)
    x = g.coords()[0]
    c = 0.3
    theta = np.full(g.shape, c)
    u = np.zeros((3,) + g.shape)
    u[0] = np.sin(x)  # potential flow, div u = cos x
    X = SpectralState(to_spectral(theta, 3), to_spectral(u, 3))
    f = to_physical(compute_f(X, g), 3)
    np.testing.assert_allclose(f, -c * np.cos(x), atol=1e-14)


def test_f_against_finite_differences(rng):
    g = Grid(2, 5.0, 24)
    X = _band_limited(g, rng, 3, 0.3)  # products stay inside |k| < M/3
    f = to_physical(compute_f(X, g), 2)
    fields, fine = _refine(X.stacked(), g, 3)
    th, u = fields[0], fields[1:]
    h = fine.dx
    ref = -(th * (_fd8(u[0], h, 0) + _fd8(u[1], h, 1)) + u[0] * _fd8(th, h, 0) + u[1] * _fd8(th, h, 1))
    ref = ref[::3, ::3]
    assert np.max(np.abs(f - ref)) < 1e-6 * np.max(np.abs(ref))


def test_f_has_zero_mean(params, rng):
    for _ in range(5):
        X = smooth_state(G3, rng, amp=0.3)
        f = compute_f(X, G3, params)
        assert abs(f.flat[0]) < 1e-13 * np.sqrt(np.sum(np.abs(f) ** 2))


def test_f_range_violation(params, rng):
    X = smooth_state(G3, rng, amp=0.1)
    X.theta_hat.flat[0] = -0.9 * G3.size
    with pytest.raises(RangeViolation):
        compute_f(X, G3, params)
    compute_f(X, G3)  # no params, no range check


def test_g_zero_density_is_advection(params, rng):
    X = smooth_state(G3, rng, amp=0.2)
    X.theta_hat[:] = 0
    u = to_physical(X.u_hat, 3)
    du = [[to_physical(1j * G3.xi[k] * X.u_hat[j], 3) for k in range(3)] for j in range(3)]
    adv = np.stack([sum(u[k] * du[j][k] for k in range(3)) for j in range(3)])
    for form in ("divided", "conservative"):
        g = to_physical(compute_g(X, params, G3, form), 3)
        ref = -to_physical(to_spectral(adv, 3) * dealias_mask(G3), 3)
        np.testing.assert_allclose(g, ref, atol=1e-13)


def test_g_pressure_single_harmonic():
    A, a, k = 0.7, 0.1, 1
    p = validate_params(1.0, 1.0, 0.5, 1.0, Polytropic(A, 3.0))
    g = Grid(3, 2 * math.pi, 16)
    x = g.coords()[0]
    X = SpectralState(to_spectral(a * np.cos(k * x), 3), np.zeros((3,) + g.shape, complex))
    # P'(r)/r = 3 A r, so g = -(3A theta) grad theta
    expected = 1.5 * A * a * a * k * np.sin(2 * k * x)
    for form in ("divided", "conservative"):
        out = to_physical(compute_g(X, p, g, form), 3)
        np.testing.assert_allclose(out[0], expected, atol=1e-8 * np.max(np.abs(expected)))
        assert np.max(np.abs(out[1:])) < 1e-15


def test_g_forms_agree(params, rng):
    for _ in range(3):
        X = smooth_state(G3, rng, amp=0.3, decay=0.3)
        a = compute_g(X, params, G3, "divided")
        b = compute_g(X, params, G3, "conservative")
        assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(b))


def test_g_translation_equivariant(params, rng):
    X = smooth_state(G3, rng, amp=0.3)
    shift = (3, -2, 5)
    fields = to_physical(X.stacked(), 3)
    moved = np.roll(fields, shift, axis=(1, 2, 3))
    Y = SpectralState.from_stacked(to_spectral(moved, 3))
    gx = to_physical(compute_g(X, params, G3), 3)
    gy = to_physical(compute_g(Y, params, G3), 3)
    np.testing.assert_allclose(gy, np.roll(gx, shift, axis=(1, 2, 3)), atol=1e-12 * np.max(np.abs(gx)))


def test_g_bad_form(params, rng):
    with pytest.raises(ValueError):
        compute_g(smooth_state(G3, rng), params, G3, "weak")


def test_g_range_violation(params, rng):
    X = smooth_state(G3, rng, amp=0.1)
    X.theta_hat.flat[0] = 3.5 * G3.size
    with pytest.raises(RangeViolation):
        compute_g(X, params, G3)


def test_rhs_bundle(params, rng):
    X = smooth_state(G3, rng, amp=0.1)
    rhs = compute_rhs(X, params, G3)
    assert rhs.dealiased and rhs.stacked().shape == X.stacked().shape


# -- stress ------------------------------------------------------------------


def test_stress_solenoidal(params):
    g = Grid(3, 2 * math.pi, 12)
    y = g.coords()[1]
    u = np.zeros((3,) + g.shape)
    u[0] = np.sin(2 * y)  # div u = 0
    uh = to_spectral(u, 3)
    out = stress_divergence(uh, params, g)
    np.testing.assert_allclose(out, params.mu_star * (-g.xi_sq) * uh, atol=1e-12)


def test_stress_potential():
    p = validate_params(0.7, 1.9, 0.5, 1.0, Polytropic(0.5, 2.0))
    g = Grid(3, 2 * math.pi, 12)
    x = g.coords()[0]
    u = np.zeros((3,) + g.shape)
    u[0] = np.cos(3 * x)  # gradient of sin(3x)/3
    uh = to_spectral(u, 3)
    for route in ("identity", "tensor"):
        out = stress_divergence(uh, p, g, route)
        np.testing.assert_allclose(out, (p.mu_star + p.nu_star) * (-g.xi_sq) * uh, atol=1e-10)


def test_stress_routes_agree(rng):
    p = validate_params(1.3, -0.4, 0.5, 1.0, Polytropic(0.5, 2.0))
    uh = to_spectral(rng.standard_normal((3,) + G3.shape), 3)
    a = stress_divergence(uh, p, G3, "identity")
    b = stress_divergence(uh, p, G3, "tensor")
    assert np.max(np.abs(a - b)) < 1e-12 * np.max(np.abs(a))
    with pytest.raises(ValueError):
        stress_divergence(uh, p, G3, "other")


# -- Korteweg bracket --------------------------------------------------------


def test_remainder_zero_input():
    assert not np.any(korteweg_remainder(np.zeros(G3.shape, complex), G3))


def test_remainder_single_harmonic():
    x, y = G3.coords()[:2]
    th = to_spectral(0.2 * np.cos(x + 2 * y), 3)
    rem = to_physical(korteweg_remainder(th, G3), 3)
    ref = korteweg_reference_term(th, G3)
    assert np.max(np.abs(rem)) < 1e-12 * np.max(np.abs(ref))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), amp=st.floats(0.01, 10.0))
def test_remainder_random(seed, amp):
    X = smooth_state(G3, np.random.default_rng(seed), amp=amp, decay=0.2)
    rem = to_physical(korteweg_remainder(X.theta_hat, G3), 3)
    ref = korteweg_reference_term(X.theta_hat, G3)
    assert np.max(np.abs(rem)) < 1e-10 * np.max(np.abs(ref))
