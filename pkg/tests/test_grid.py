import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from nsklab.errors import NotHermitian, ShapeMismatch
from nsklab.grid import (
    CutoffProfile,
    Grid,
    SpectralState,
    dealias_mask,
    derivative,
    forward,
    hermitian_defect,
    inverse,
    low_high_split,
    physical_norm_l2,
    read_checkpoint,
    smooth_bridge,
    to_physical,
    to_spectral,
    write_checkpoint,
)
from nsklab.norms import spectral_l2


def test_wavenumbers():
    g = Grid(1, 2 * math.pi, 8)
    assert list(g.k_int) == [0, 1, 2, 3, -4, -3, -2, -1]
    assert g.xi_1d[0] == 0
    assert g.xi_1d[4] == 0  # Nyquist
    np.testing.assert_array_equal(g.xi_1d[1:4], -g.xi_1d[7:4:-1])


def test_grid_validation():
    for args in ((0, 1.0, 8), (1, 1.0, 7), (1, -1.0, 8)):
        with pytest.raises(ValueError):
            Grid(*args)


def test_constant_field_is_dc_only():
    g = Grid(2, 5.0, 8)
    s = to_spectral(np.full(g.shape, 3.0), 2)
    assert s.flat[0] == pytest.approx(3.0 * g.size)
    assert np.count_nonzero(np.abs(s) > 1e-12) == 1


def test_single_harmonic_two_modes():
    g = Grid(3, 7.0, 8)
    x = g.coords()[0]
    s = to_spectral(np.cos(2 * np.pi * x / g.box_length), 3)
    nz = np.argwhere(np.abs(s) > 1e-9)
    assert sorted(map(tuple, nz)) == [(1, 0, 0), (7, 0, 0)]
    assert abs(s[1, 0, 0]) == pytest.approx(abs(s[7, 0, 0]))


def test_roundtrip_and_parseval(rng):
    g = Grid(1, 3.0, 8)
    f = rng.standard_normal(g.shape)
    spec = to_spectral(f, 1)
    # direct DFT sum on the 8-point lattice
    n = np.arange(8)
    direct = np.array([np.sum(f * np.exp(-2j * np.pi * k * n / 8)) for k in range(8)])
    np.testing.assert_allclose(spec, direct, atol=1e-13)
    np.testing.assert_allclose(to_physical(spec, 1), f, rtol=0, atol=1e-13 * np.max(np.abs(f)))
    assert spectral_l2(spec, g) == pytest.approx(physical_norm_l2(f, g), rel=1e-12)


def test_parseval_many(rng):
    g = Grid(3, 4.0, 8)
    for _ in range(100):
        f = rng.standard_normal(g.shape)
        assert spectral_l2(to_spectral(f, 3), g) == pytest.approx(physical_norm_l2(f, g), rel=1e-12)


def test_forward_inverse(rng):
    g = Grid(2, 4.0, 16)
    th = rng.standard_normal(g.shape)
    u = rng.standard_normal((2,) + g.shape)
    st_ = forward(g, th, u, time=1.5)
    assert st_.time == 1.5
    th2, u2 = inverse(st_, g)
    np.testing.assert_allclose(th2, th, atol=1e-13)
    np.testing.assert_allclose(u2, u, atol=1e-13)


def test_forward_shape_mismatch():
    g = Grid(2, 4.0, 8)
    with pytest.raises(ShapeMismatch):
        forward(g, np.zeros((8, 8)), np.zeros((3, 8, 8)))
    with pytest.raises(ShapeMismatch):
        forward(g, np.zeros((4, 4)), np.zeros((2, 4, 4)))


def test_inverse_zero():
    g = Grid(2, 4.0, 8)
    th, u = inverse(SpectralState.zeros(g))
    assert not th.any() and not u.any()


def test_conjugate_pair_sinusoid():
    g = Grid(1, 2 * math.pi, 16)
    s = np.zeros(16, complex)
    s[3] = 8 * np.exp(0.4j)
    s[13] = np.conj(s[3])
    x = g.coords()[0]
    np.testing.assert_allclose(to_physical(s, 1), np.cos(3 * x + 0.4), atol=1e-14)


def test_non_hermitian_rejected():
    s = np.zeros(8, complex)
    s[1] = 1.0
    with pytest.raises(NotHermitian):
        to_physical(s, 1)
    assert hermitian_defect(s, 1) > 0.1


@pytest.mark.parametrize("M,kept", [(12, 3), (8, 2), (16, 5)])
def test_dealias_mask(M, kept):
    g = Grid(1, 1.0, M)
    m = dealias_mask(g)
    assert sorted(g.k_int[m]) == list(range(-kept, kept + 1))
    assert not m[M // 2]


def test_dealias_fraction_3d():
    g = Grid(3, 1.0, 24)
    frac = dealias_mask(g).mean()
    # per axis |k| < 8 keeps 15 of 24, i.e. 2/3 less the strict-inequality edge
    assert frac == pytest.approx((15 / 24) ** 3)


def test_derivative_of_sine():
    g = Grid(2, 3.0, 16)
    x = g.coords()[1]
    k = 2 * np.pi / g.box_length
    d = to_physical(derivative(to_spectral(np.sin(k * x), 2), g, 1), 2)
    np.testing.assert_allclose(d, k * np.cos(k * x), atol=1e-12 * k)


def test_bridge_profile():
    s = np.linspace(-1, 2, 301)
    b = smooth_bridge(s)
    assert np.all((b >= 0) & (b <= 1))
    assert np.all(np.diff(b) <= 0)
    assert b[s <= 0].min() == 1 and b[s >= 1].max() == 0
    assert smooth_bridge(np.array([0.5]))[0] == pytest.approx(0.5)


def test_cutoff_radial():
    p = CutoffProfile(1.0)
    assert p(0.5) == 1 and p(2.0) == 0 and 0 < p(1.5) < 1
    with pytest.raises(ValueError):
        CutoffProfile(0.0)


def test_split_exact(rng):
    g = Grid(2, 10.0, 16)
    s = random_state(g, rng)
    low, high = low_high_split(s, CutoffProfile(1.3), g)
    assert np.array_equal((low + high).stacked(), s.stacked())


def test_split_limits(rng):
    g = Grid(2, 10.0, 16)
    s = random_state(g, rng)
    _, high = low_high_split(s, CutoffProfile(100.0), g)
    assert not high.stacked().any()
    low, _ = low_high_split(s, CutoffProfile(0.1), g)  # smallest |xi| is 0.63 > 0.2
    nz = np.argwhere(np.abs(low.stacked()) > 0)
    assert all(tuple(i[1:]) == (0, 0) for i in nz)


def test_checkpoint_roundtrip(tmp_path, rng):
    g = Grid(2, 6.5, 8)
    s = random_state(g, rng).with_time(0.1 + 0.2)
    path = tmp_path / "x.kspec"
    write_checkpoint(path, s, g)
    head = path.read_bytes().split(b"\n", 1)[0]
    assert head == b"KSPEC1 dim=2 M=8 L=6.5 t=0.30000000000000004"
    s2, g2 = read_checkpoint(path)
    assert g2 == g and s2.time == s.time
    assert np.array_equal(s2.stacked(), s.stacked())


def test_checkpoint_corrupt(tmp_path):
    path = tmp_path / "bad.kspec"
    path.write_bytes(b"KSPEC1 dim=1 M=4 L=1.0 t=0.0\n" + b"\0" * 10)
    with pytest.raises(ValueError):
        read_checkpoint(path)


def test_state_arithmetic(rng):
    g = Grid(1, 1.0, 8)
    a, b = random_state(g, rng), random_state(g, rng)
    np.testing.assert_allclose((a + b - b).stacked(), a.stacked(), atol=1e-12)
    assert a.scaled(2.0).norm() == pytest.approx(2 * a.norm())
    assert a.is_finite()


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_roundtrip_property(dim, seed):
    g = Grid(dim, 1.0, 8)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    back = to_physical(to_spectral(f, dim), dim)
    assert np.max(np.abs(back - f)) <= 1e-13 * np.max(np.abs(f))
