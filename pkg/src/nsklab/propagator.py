"""Field-level application of the linear solution operator S(t)."""

from __future__ import annotations

import struct
import threading
from collections import OrderedDict

import numpy as np

from . import _kernels
from .errors import NotHermitian
from .grid import CutoffProfile, Grid, SpectralState, hermitian_defect, low_high_split
from .model import ModelParams
from .symbols import coefficients

HERMITIAN_RTOL = 1e-12


class SymbolCache:
    """LRU cache of lattice block coefficients keyed by exact bit patterns.

    Lookups are lock-free reads of an immutable tuple; insertion and
    eviction take the lock.
    """

    def __init__(self, maxsize: int = 16):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(kind, t, grid: Grid, params: ModelParams):
        return (kind, struct.pack("<d", float(t)), grid, params)

    def get(self, key):
        val = self._data.get(key)
        if val is not None:
            self.hits += 1
        return val

    def put(self, key, value):
        with self._lock:
            self.misses += 1
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value

    def clear(self):
        with self._lock:
            self._data.clear()


CACHE = SymbolCache()


def lattice_terms(grid: Grid, params: ModelParams):
    """Time-independent per-mode arrays: |xi|^2 and gamma + kappa |xi|^2."""
    q = grid.xi_sq
    return q, params.gamma_star + params.kappa_star * q


def exp_block(t: float, grid: Grid, params: ModelParams, cache: SymbolCache | None = CACHE):
    """(C, D, E) lattice coefficients of exp(t A)."""
    key = SymbolCache.key("exp", t, grid, params)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    val = _kernels.exp_coefficients(grid.xi_sq, t, *coefficients(params))
    for a in val:
        a.setflags(write=False)
    return cache.put(key, val) if cache is not None else val


def phi_block(dt: float, k: int, grid: Grid, params: ModelParams, cache: SymbolCache | None = CACHE):
    """Lattice coefficients of dt * phi_k(dt A)."""
    key = SymbolCache.key(f"phi{k}", dt, grid, params)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    val = _kernels.phi_coefficients(grid.xi_sq, dt, k, *coefficients(params))
    for a in val:
        a.setflags(write=False)
    return cache.put(key, val) if cache is not None else val


def apply_block(stacked: np.ndarray, block, grid: Grid, params: ModelParams) -> np.ndarray:
    """Multiply a stacked spectrum (N+1, M, ..., M) by a structured block symbol."""
    Cf, Df, Ef = block
    q, gk = lattice_terms(grid, params)
    apb = params.alpha_star + params.beta_star
    return _kernels.apply_block(stacked, Cf, Df, Ef, grid.xi_full, q, apb, params.rho_star, gk)


def _check_hermitian(state: SpectralState):
    d = max(hermitian_defect(state.theta_hat, state.dim), hermitian_defect(state.u_hat, state.dim))
    if d > HERMITIAN_RTOL:
        raise NotHermitian(f"state violates Hermitian symmetry by {d:.3e}")


def apply_semigroup(
    t: float, state: SpectralState, params: ModelParams, grid: Grid, check: bool = True
) -> SpectralState:
    """S(t) applied mode by mode; the output time is state.time + t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if check:
        _check_hermitian(state)
    if t == 0:
        return state.copy()
    out = apply_block(state.stacked(), exp_block(t, grid, params), grid, params)
    return SpectralState.from_stacked(out, state.time + t)


def apply_split_semigroup(
    t: float, state: SpectralState, profile: CutoffProfile, params: ModelParams, grid: Grid
) -> tuple[SpectralState, SpectralState]:
    """(S(t) Phi_0 X, S(t) Phi_inf X) for the low/high frequency cutoff."""
    low, high = low_high_split(state, profile, grid)
    return apply_semigroup(t, low, params, grid), apply_semigroup(t, high, params, grid)
