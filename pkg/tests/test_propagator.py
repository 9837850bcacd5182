import numpy as np
import pytest
from scipy.linalg import expm

from conftest import random_state
from nsklab.errors import NotHermitian
from nsklab.experiments import exponential_fit
from nsklab.grid import CutoffProfile, Grid, SpectralState, hermitian_defect, to_spectral
from nsklab.norms import spectral_l2
from nsklab.propagator import CACHE, SymbolCache, apply_semigroup, apply_split_semigroup, exp_block
from nsklab.symbols import eigenvalues, generator_matrix

GRID = Grid(3, 12.0, 12)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_zero_time_short_circuit(params, rng):
    X = random_state(GRID, rng)
    Y = apply_semigroup(0.0, X, params, GRID)
    assert np.array_equal(Y.stacked(), X.stacked()) and Y.time == X.time


def test_zero_mode_only_unchanged(params):
    X = SpectralState.zeros(GRID)
    X.theta_hat.flat[0] = 3.0
    X.u_hat[1].flat[0] = -2.0
    for t in (0.5, 50.0):
        assert np.array_equal(apply_semigroup(t, X, params, GRID).stacked(), X.stacked())


def test_time_advances(params, rng):
    X = random_state(GRID, rng).with_time(1.0)
    assert apply_semigroup(0.25, X, params, GRID).time == 1.25


def test_one_dimensional_gaussian_matches_per_mode_oracle(params):
    g = Grid(1, 20.0, 64)
    x = g.coords()[0]
    theta = np.exp(-((x - 10.0) ** 2))
    X = SpectralState(to_spectral(theta, 1), np.zeros((1, 64), complex))
    t = 0.8
    got = apply_semigroup(t, X, params, g).stacked()
    ref = np.empty_like(got)
    for i, xi in enumerate(g.xi_1d):
        ref[:, i] = expm(t * generator_matrix(np.array([xi]), params)) @ X.stacked()[:, i]
    assert abs(spectral_l2(got, g) / spectral_l2(ref, g) - 1) < 1e-10
    assert _rel(got, ref) < 1e-12


def test_field_semigroup(params, rng):
    for _ in range(5):
        X = random_state(GRID, rng)
        t, s = rng.uniform(0, 10, 2)
        a = apply_semigroup(t + s, X, params, GRID).stacked()
        b = apply_semigroup(t, apply_semigroup(s, X, params, GRID), params, GRID).stacked()
        assert np.linalg.norm(a - b) < 1e-12 * np.linalg.norm(X.stacked())


def test_reality_preserved(params_dispersive, rng):
    X = random_state(GRID, rng)
    Y = apply_semigroup(1.3, X, params_dispersive, GRID)
    assert hermitian_defect(Y.stacked(), 3) < 1e-12


def test_mean_invariant(params, rng):
    X = random_state(GRID, rng)
    X.theta_hat.flat[0] = 5.0
    Y = apply_semigroup(2.0, X, params, GRID)
    assert Y.theta_hat.flat[0] == X.theta_hat.flat[0]
    assert np.array_equal(Y.u_hat[:, 0, 0, 0], X.u_hat[:, 0, 0, 0])


def test_linearity(params, rng):
    X, Y = random_state(GRID, rng), random_state(GRID, rng)
    a, b = 2.5, -0.7
    lhs = apply_semigroup(0.6, SpectralState.from_stacked(a * X.stacked() + b * Y.stacked()), params, GRID)
    rhs = a * apply_semigroup(0.6, X, params, GRID).stacked() + b * apply_semigroup(0.6, Y, params, GRID).stacked()
    assert _rel(lhs.stacked(), rhs) < 1e-12


def test_non_hermitian_input_rejected(params):
    X = SpectralState.zeros(GRID)
    X.theta_hat[1, 0, 0] = 1.0
    with pytest.raises(NotHermitian):
        apply_semigroup(1.0, X, params, GRID)


def test_negative_time(params, rng):
    with pytest.raises(ValueError):
        apply_semigroup(-1.0, random_state(GRID, rng), params, GRID)


def test_split_sum(params, rng):
    X = random_state(GRID, rng)
    low, high = apply_split_semigroup(0.9, X, CutoffProfile(1.0), params, GRID)
    full = apply_semigroup(0.9, X, params, GRID).stacked()
    assert _rel(low.stacked() + high.stacked(), full) < 1e-13


def test_split_band_limited_high_is_zero(params, rng):
    eps = 1.5
    X = random_state(GRID, rng)
    X = SpectralState.from_stacked(X.stacked() * (GRID.xi_norm <= eps))
    _, high = apply_split_semigroup(3.0, X, CutoffProfile(eps), params, GRID)
    assert not high.stacked().any()


def test_high_part_decays_exponentially(params, rng):
    eps = 0.6
    X = random_state(GRID, rng)
    X = SpectralState.from_stacked(X.stacked() * (GRID.xi_norm >= 2 * eps))
    times = np.linspace(0.5, 5.0, 10)
    norms = [spectral_l2(apply_split_semigroup(t, X, CutoffProfile(eps), params, GRID)[1].stacked(), GRID)
             for t in times]
    c, _ = exponential_fit(times, norms)
    bound = -max(float(np.max(z.real)) for z in eigenvalues(np.array([(2 * eps) ** 2]), params)[:2])
    assert c > 0
    assert c >= 0.5 * min(bound, params.alpha_star * (2 * eps) ** 2)


def test_cache_reuse(params):
    cache = SymbolCache(maxsize=2)
    a = exp_block(0.1, GRID, params, cache)
    b = exp_block(0.1, GRID, params, cache)
    assert a is b and cache.hits == 1 and cache.misses == 1
    exp_block(0.2, GRID, params, cache)
    exp_block(0.3, GRID, params, cache)
    assert len(cache._data) == 2
    with pytest.raises(ValueError):
        a[0][0] = 1.0  # cached arrays are read-only


def test_cache_keys_distinguish_bits(params):
    assert SymbolCache.key("exp", 0.1, GRID, params) != SymbolCache.key("exp", np.nextafter(0.1, 1.0), GRID, params)
    CACHE.clear()
