"""Periodic lattice, discrete Fourier transforms and spectral bookkeeping.

Conventions: the forward transform is the unnormalized DFT and the inverse
carries the 1/M**N factor, so a constant field ``c`` has zero-mode ``c * M**N``.
Spectra are stored as full complex arrays of shape ``(M,) * N`` in FFT order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from . import _kernels
from .errors import NotHermitian, ShapeMismatch

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Cubic periodic box [0, L)^N sampled by M points per axis."""

    dim: int
    box_length: float
    modes: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.modes < 2 or self.modes % 2:
            raise ValueError(f"modes per axis must be an even integer >= 2, got {self.modes}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes,) * self.dim

    @property
    def size(self) -> int:
        return self.modes**self.dim

    @property
    def dx(self) -> float:
        return self.box_length / self.modes

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @cached_property
    def k_int(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, spanning [-M/2, M/2)."""
        return np.fft.fftfreq(self.modes, d=1.0 / self.modes).astype(np.int64)

    @cached_property
    def xi_1d(self) -> np.ndarray:
        """Angular wavenumbers 2 pi k / L with the Nyquist entry set to zero.

        Zeroing the unpaired Nyquist wavenumber keeps xi(-k) = -xi(k) on the
        lattice, so every symbol built from xi maps Hermitian spectra to
        Hermitian spectra.
        """
        xi = 2.0 * np.pi * self.k_int / self.box_length
        xi[self.modes // 2] = 0.0
        return xi

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        """Per-axis broadcastable wavenumber arrays."""
        out = []
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.modes
            out.append(self.xi_1d.reshape(shape))
        return tuple(out)

    @cached_property
    def xi_sq(self) -> np.ndarray:
        s = np.zeros(self.shape)
        for x in self.xi:
            s = s + x * x
        return s

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def xi_full(self) -> np.ndarray:
        """Wavevector field of shape (N, M, ..., M)."""
        return np.stack([np.broadcast_to(x, self.shape) for x in self.xi])

    def coords(self) -> tuple[np.ndarray, ...]:
        """Physical lattice coordinates (ij indexing)."""
        x1 = np.arange(self.modes) * self.dx
        return tuple(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    def radius_from_center(self) -> np.ndarray:
        c = self.box_length / 2
        r2 = np.zeros(self.shape)
        for x in self.coords():
            r2 = r2 + (x - c) ** 2
        return np.sqrt(r2)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "box_length": self.box_length, "modes": self.modes}


@dataclass
class SpectralState:
    """Fourier coefficients of (theta, u) at one instant."""

    theta_hat: np.ndarray
    u_hat: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=np.complex128)
        self.u_hat = np.asarray(self.u_hat, dtype=np.complex128)
        if self.u_hat.shape != (self.theta_hat.ndim,) + self.theta_hat.shape:
            raise ShapeMismatch(
                f"u_hat shape {self.u_hat.shape} does not match theta_hat shape {self.theta_hat.shape}"
            )

    @property
    def dim(self) -> int:
        return self.theta_hat.ndim

    def stacked(self) -> np.ndarray:
        """(N+1, M, ..., M) array: theta_hat followed by the u_hat components."""
        return np.concatenate([self.theta_hat[None], self.u_hat])

    @classmethod
    def from_stacked(cls, arr: np.ndarray, time: float = 0.0) -> "SpectralState":
        return cls(arr[0], arr[1:], time)

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "SpectralState":
        return cls(np.zeros(grid.shape, complex), np.zeros((grid.dim,) + grid.shape, complex), time)

    def copy(self) -> "SpectralState":
        return SpectralState(self.theta_hat.copy(), self.u_hat.copy(), self.time)

    def with_time(self, time: float) -> "SpectralState":
        return replace(self, time=time)

    def scaled(self, c) -> "SpectralState":
        return SpectralState(c * self.theta_hat, c * self.u_hat, self.time)

    def __add__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.theta_hat + other.theta_hat, self.u_hat + other.u_hat, self.time)

    def __sub__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.theta_hat - other.theta_hat, self.u_hat - other.u_hat, self.time)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta_hat)) and np.all(np.isfinite(self.u_hat)))

    def norm(self) -> float:
        """Plain l2 norm of all coefficients (diagnostic use)."""
        return float(np.sqrt(np.sum(np.abs(self.theta_hat) ** 2) + np.sum(np.abs(self.u_hat) ** 2)))


def fftn(a: np.ndarray, axes=None) -> np.ndarray:
    return scipy.fft.fftn(a, axes=axes, workers=_kernels.get_threads())


def ifftn(a: np.ndarray, axes=None) -> np.ndarray:
    return scipy.fft.ifftn(a, axes=axes, workers=_kernels.get_threads())


def field_axes(a: np.ndarray, dim: int) -> tuple[int, ...]:
    return tuple(range(a.ndim - dim, a.ndim))


def conj_reflect(a: np.ndarray, dim: int) -> np.ndarray:
    """Return conj(a[-k]) over the trailing ``dim`` axes."""
    axes = field_axes(a, dim)
    return np.conj(np.roll(np.flip(a, axis=axes), 1, axis=axes))


def hermitian_defect(a: np.ndarray, dim: int) -> float:
    """max |a[k] - conj(a[-k])| relative to max |a|."""
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(a - conj_reflect(a, dim))) / scale)


def is_hermitian(a: np.ndarray, dim: int, rtol: float = 1e-12) -> bool:
    return hermitian_defect(a, dim) <= rtol


def to_spectral(field: np.ndarray, dim: int) -> np.ndarray:
    return fftn(np.asarray(field, dtype=np.float64), axes=field_axes(np.asarray(field), dim))


def to_physical(spec: np.ndarray, dim: int, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Inverse transform of a Hermitian spectrum; raises NotHermitian otherwise."""
    z = ifftn(spec, axes=field_axes(spec, dim))
    scale = np.max(np.abs(z)) if z.size else 0.0
    if scale > 0:
        resid = np.max(np.abs(z.imag)) / scale
        if resid > rtol:
            raise NotHermitian(f"imaginary residue {resid:.3e} exceeds {rtol:.0e}")
    return np.ascontiguousarray(z.real)


def forward(grid: Grid, theta: np.ndarray, u: np.ndarray, time: float = 0.0) -> SpectralState:
    """Transform real fields (theta, u) on the lattice into a SpectralState."""
    theta = np.asarray(theta, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if theta.shape != grid.shape:
        raise ShapeMismatch(f"theta has shape {theta.shape}, grid expects {grid.shape}")
    if u.shape != (grid.dim,) + grid.shape:
        raise ShapeMismatch(f"u has shape {u.shape}, grid expects {(grid.dim,) + grid.shape}")
    return SpectralState(to_spectral(theta, grid.dim), to_spectral(u, grid.dim), time)


def inverse(state: SpectralState, grid: Grid | None = None) -> tuple[np.ndarray, np.ndarray]:
    dim = state.dim
    return to_physical(state.theta_hat, dim), to_physical(state.u_hat, dim)


def dealias_mask(grid: Grid) -> np.ndarray:
    """Two-thirds rule: keep modes with |k| < M/3 on every axis."""
    keep1 = 3 * np.abs(grid.k_int) < grid.modes
    mask = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.modes
        mask = mask & keep1.reshape(shape)
    return mask


def dealias(spec: np.ndarray, grid: Grid) -> np.ndarray:
    return spec * _dealias_cached(grid)


_MASKS: dict[Grid, np.ndarray] = {}


def _dealias_cached(grid: Grid) -> np.ndarray:
    m = _MASKS.get(grid)
    if m is None:
        m = _MASKS.setdefault(grid, dealias_mask(grid))
    return m


def derivative(spec: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Spectral partial derivative along ``axis`` of the trailing field axes."""
    return 1j * grid.xi[axis] * spec


def smooth_bridge(s: np.ndarray) -> np.ndarray:
    """C-infinity monotone step: 1 for s <= 0, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.where(s <= 0, 1.0, 0.0)
    inner = (s > 0) & (s < 1)
    if np.any(inner):
        si = s[inner]
        expo = si / (1 - si) - (1 - si) / si
        with np.errstate(over="ignore"):
            out[inner] = 1.0 / (1.0 + np.exp(np.minimum(expo, 700.0)))
    return out


@dataclass(frozen=True)
class CutoffProfile:
    """Radial cutoff: 1 for |xi| <= eps, 0 for |xi| >= 2 eps, smooth between."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def __call__(self, r) -> np.ndarray:
        return smooth_bridge((np.asarray(r, dtype=float) - self.epsilon) / self.epsilon)


def low_high_split(state: SpectralState, profile: CutoffProfile, grid: Grid):
    """Split into (phi * state, (1 - phi) * state) sharing one evaluation of phi."""
    phi = profile(grid.xi_norm)
    low_t = phi * state.theta_hat
    low_u = phi * state.u_hat
    low = SpectralState(low_t, low_u, state.time)
    high = SpectralState(state.theta_hat - low_t, state.u_hat - low_u, state.time)
    return low, high


# -- checkpoint files --------------------------------------------------------

_HEADER = re.compile(r"^KSPEC1 dim=(\d+) M=(\d+) L=(\S+) t=(\S+)$")


def write_checkpoint(path, state: SpectralState, grid: Grid) -> None:
    header = f"KSPEC1 dim={grid.dim} M={grid.modes} L={float(grid.box_length)!r} t={float(state.time)!r}\n"
    payload = state.stacked().astype("<c16", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def read_checkpoint(path) -> tuple[SpectralState, Grid]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing checkpoint header")
    m = _HEADER.match(raw[:nl].decode("ascii"))
    if not m:
        raise ValueError(f"{path}: malformed checkpoint header {raw[:nl]!r}")
    dim, modes = int(m.group(1)), int(m.group(2))
    grid = Grid(dim, float(m.group(3)), modes)
    expected = (dim + 1) * grid.size * 16
    body = raw[nl + 1 :]
    if len(body) != expected:
        raise ValueError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    arr = np.frombuffer(body, dtype="<c16").reshape((dim + 1,) + grid.shape).astype(np.complex128)
    return SpectralState.from_stacked(arr, float(m.group(4))), grid


def physical_norm_l2(field: np.ndarray, grid: Grid) -> float:
    return math.sqrt(float(np.sum(field * field)) * grid.cell_volume)
