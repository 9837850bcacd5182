"""Per-mode mathematics of the linearized Korteweg system.

For one wavevector xi the Fourier-transformed linear problem is the ODE
X' = A(xi) X with X = (theta_hat, u_hat). Its compressible block has the
characteristic polynomial

    z**2 + (alpha+beta)|xi|^2 z + rho kappa |xi|^4 + rho gamma |xi|^2 = 0,

whose roots lambda_+/- drive density and longitudinal velocity, while the
solenoidal velocity decays like exp(-alpha |xi|^2 t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import SingularSystem, WrongRegime
from .model import ModelParams

NEAR_DEGENERATE_RTOL = 1e-12
SINGULAR_COND = 1e12


def coefficients(params: ModelParams) -> tuple[float, float, float, float]:
    """(alpha+beta, rho*kappa, rho*gamma, alpha) -- the four scalars every symbol needs."""
    return (
        params.alpha_star + params.beta_star,
        params.rho_star * params.kappa_star,
        params.rho_star * params.gamma_star,
        params.alpha_star,
    )


def quadratic_roots(b, c):
    """Roots of z**2 + b z + c with b, c >= 0, vectorized.

    The larger-magnitude root is formed without cancellation and the other
    one is recovered from the product c. Returns (lambda_plus, lambda_minus,
    discriminant) where discriminant = b**2/4 - c.
    """
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    disc = 0.25 * b * b - c
    sq = np.sqrt(np.abs(disc))
    real = disc >= 0
    lam_minus = np.where(real, -0.5 * b - sq, -0.5 * b - 1j * sq).astype(complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        from_product = np.where(lam_minus != 0, c / np.where(lam_minus != 0, lam_minus, 1.0), 0.0)
    lam_plus = np.where(real, from_product, -0.5 * b + 1j * sq).astype(complex)
    return lam_plus, lam_minus, disc


@dataclass(frozen=True)
class EigenPair:
    lambda_plus: complex
    lambda_minus: complex
    regime: str  # "real-distinct" | "complex-pair" | "near-degenerate"


def _regime(disc, scale) -> np.ndarray:
    near = np.abs(disc) <= NEAR_DEGENERATE_RTOL * scale
    return np.where(near, "near-degenerate", np.where(disc > 0, "real-distinct", "complex-pair"))


def eigenvalues(xi_norm_sq, params: ModelParams):
    """Vectorized lambda_+/- and regime tags over an array of |xi|^2."""
    apb, rk, rg, _ = coefficients(params)
    q = np.asarray(xi_norm_sq, dtype=float)
    b = apb * q
    c = rk * q * q + rg * q
    lp, lm, disc = quadratic_roots(b, c)
    return lp, lm, _regime(disc, 0.25 * b * b + c)


def eigenpair(xi_norm_sq: float, params: ModelParams) -> EigenPair:
    if xi_norm_sq < 0:
        raise ValueError("xi_norm_sq must be nonnegative")
    lp, lm, reg = eigenvalues(np.array([xi_norm_sq]), params)
    return EigenPair(complex(lp[0]), complex(lm[0]), str(reg[0]))


def crossover_radius(params: ModelParams) -> float:
    """|xi| at which the two terms of the discriminant balance."""
    return math.sqrt(params.rho_star * params.gamma_star / abs(params.delta_star))


def asymptotic_lambda(xi_norm: float, regime: str, params: ModelParams) -> tuple[complex, complex]:
    """Leading-order expansions of lambda_+/- as |xi| -> 0 or |xi| -> infinity."""
    if not xi_norm > 0:
        raise WrongRegime("xi_norm must be positive")
    apb, rk, rg, _ = coefficients(params)
    rc = crossover_radius(params)
    q = xi_norm * xi_norm
    head = -0.5 * apb * q
    if regime == "low":
        if not xi_norm < rc:
            raise WrongRegime(f"|xi| = {xi_norm} is not below the crossover radius {rc}")
        osc = 1j * math.sqrt(rg) * xi_norm
        return head + osc, head - osc
    if regime == "high":
        if not xi_norm > rc:
            raise WrongRegime(f"|xi| = {xi_norm} is not above the crossover radius {rc}")
        delta = params.delta_star
        if delta > 0:
            br = math.sqrt(delta) * q
        else:
            br = 1j * math.sqrt(-delta) * q
        return head + br, head - br
    raise WrongRegime(f"regime must be 'low' or 'high', got {regime!r}")


def generator_matrix(xi, params: ModelParams) -> np.ndarray:
    """Matrix A(xi) of the Fourier-transformed linear system X' = A X."""
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    q = float(xi @ xi)
    A = np.zeros((n + 1, n + 1), dtype=complex)
    gk = params.gamma_star + params.kappa_star * q
    A[0, 1:] = -1j * params.rho_star * xi
    A[1:, 0] = -1j * gk * xi
    A[1:, 1:] = -params.alpha_star * q * np.eye(n) - params.beta_star * np.outer(xi, xi)
    return A


def assemble_block(Cf, Df, Ef, xi, params: ModelParams) -> np.ndarray:
    """Dense (N+1)x(N+1) matrix from the block coefficients of one mode."""
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    q = float(xi @ xi)
    m = -0.5 * (params.alpha_star + params.beta_star) * q
    gk = params.gamma_star + params.kappa_star * q
    G = np.zeros((n + 1, n + 1), dtype=complex)
    G[0, 0] = Cf - m * Df
    G[0, 1:] = -1j * params.rho_star * Df * xi
    G[1:, 0] = -1j * gk * Df * xi
    proj = np.outer(xi, xi) / q if q > 0 else np.zeros((n, n))
    G[1:, 1:] = Ef * np.eye(n) + (Cf + m * Df - Ef) * proj
    return G


def propagator_symbol(t: float, xi, params: ModelParams) -> np.ndarray:
    """G(t, xi): maps (f_hat, g_hat) to (theta_hat, u_hat)(t) for one mode."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    xi = np.asarray(xi, dtype=float).ravel()
    n = xi.size
    q = float(xi @ xi)
    if t == 0 or q == 0:
        return np.eye(n + 1, dtype=complex)
    C, D, E = _kernels.exp_coefficients_numpy(np.array([q]), t, *coefficients(params))
    return assemble_block(C[0], D[0], E[0], xi, params)


def phi_symbol(dt: float, k: int, xi, params: ModelParams) -> np.ndarray:
    """dt * phi_k(dt A(xi)) for one mode, k in {1, 2}."""
    xi = np.asarray(xi, dtype=float).ravel()
    q = float(xi @ xi)
    Cf, Df, Ef = _kernels.phi_coefficients_numpy(np.array([q]), dt, k, *coefficients(params))
    return assemble_block(Cf[0], Df[0], Ef[0], xi, params)


@dataclass(frozen=True)
class Sector:
    """{lambda : |arg lambda| < pi - epsilon_angle, |lambda| >= lambda0}."""

    epsilon_angle: float
    lambda0: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon_angle < math.pi / 2:
            raise ValueError("epsilon_angle must lie in (0, pi/2)")
        if not self.lambda0 >= 1:
            raise ValueError("lambda0 must be >= 1")

    def contains(self, lam) -> bool:
        lam = complex(lam)
        return abs(np.angle(lam)) < math.pi - self.epsilon_angle and abs(lam) >= self.lambda0


def resolvent_forward_matrix(lam, xi, gammas, params: ModelParams) -> np.ndarray:
    """Matrix of the constant-coefficient resolvent system acting on (rho_hat, u_hat)."""
    g0, g1, g2 = gammas
    xi = np.asarray(xi, dtype=float).ravel()
    n = xi.size
    q = float(xi @ xi)
    A = np.zeros((n + 1, n + 1), dtype=complex)
    A[0, 0] = lam
    A[0, 1:] = 1j * g2 * xi
    A[1:, 0] = 1j * (g1 + params.kappa_star * g2 * q) * xi
    A[1:, 1:] = (g0 * lam + params.mu_star * q) * np.eye(n) + params.nu_star * np.outer(xi, xi)
    return A


def resolvent_symbol(lam, xi, gammas, params: ModelParams, sector: Sector | None = None) -> np.ndarray:
    """R(lambda, xi) = inverse of the resolvent forward matrix; checks conditioning."""
    if sector is not None and not sector.contains(lam):
        raise ValueError(f"lambda = {lam} lies outside the sector")
    A = resolvent_forward_matrix(lam, xi, gammas, params)
    cond = np.linalg.cond(A)
    if not cond < SINGULAR_COND:
        raise SingularSystem(f"condition number {cond:.3e} at lambda = {lam}", lam=lam, cond=cond)
    return np.linalg.inv(A)


def resolvent_forward_lattice(lam, xi_full: np.ndarray, gammas, params: ModelParams) -> np.ndarray:
    """Batched forward matrices, shape (modes, N+1, N+1), for a flattened lattice."""
    g0, g1, g2 = gammas
    n = xi_full.shape[0]
    xis = xi_full.reshape(n, -1).T  # (modes, N)
    q = np.einsum("ij,ij->i", xis, xis)
    A = np.zeros((xis.shape[0], n + 1, n + 1), dtype=complex)
    A[:, 0, 0] = lam
    A[:, 0, 1:] = 1j * g2 * xis
    A[:, 1:, 0] = 1j * (g1 + params.kappa_star * g2 * q)[:, None] * xis
    A[:, 1:, 1:] = (g0 * lam + params.mu_star * q)[:, None, None] * np.eye(n) + params.nu_star * (
        xis[:, :, None] * xis[:, None, :]
    )
    return A


def resolvent_solve_lattice(lam, xi_full, rhs_stacked, gammas, params: ModelParams) -> np.ndarray:
    """Solve the resolvent system mode by mode; rhs has shape (N+1, M, ..., M)."""
    A = resolvent_forward_lattice(lam, xi_full, gammas, params)
    cond = np.linalg.cond(A)
    worst = float(np.max(cond))
    if not worst < SINGULAR_COND:
        raise SingularSystem(f"condition number {worst:.3e} at lambda = {lam}", lam=lam, cond=worst)
    n1 = rhs_stacked.shape[0]
    b = rhs_stacked.reshape(n1, -1).T[:, :, None]
    sol = np.linalg.solve(A, b)[:, :, 0]
    return sol.T.reshape(rhs_stacked.shape)
