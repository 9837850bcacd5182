"""Pseudo-spectral evaluation of the perturbation nonlinearities f and g.

Products and quotients are formed pointwise in physical space,
derivatives are taken spectrally, and every product chain is dealiased by
the two-thirds mask before it is used again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, SpectralState, dealias, derivative, to_physical, to_spectral
from .model import ModelParams, check_range

FORMS = ("divided", "conservative")


@dataclass
class RhsFields:
    f_hat: np.ndarray
    g_hat: np.ndarray
    dealiased: bool = True

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.f_hat[None], self.g_hat])


def _phys(spec, grid):
    return to_physical(spec, grid.dim)


def _spec(field, grid):
    return dealias(to_spectral(field, grid.dim), grid)


def _range_check(theta, params: ModelParams):
    check_range(params.rho_star, float(theta.min()), float(theta.max()))


def compute_f(state: SpectralState, grid: Grid, params: ModelParams | None = None) -> np.ndarray:
    """Spectrum of f = -(theta div u + u . grad theta)."""
    theta = _phys(state.theta_hat, grid)
    if params is not None:
        _range_check(theta, params)
    u = _phys(state.u_hat, grid)
    div_u = _phys(sum(derivative(state.u_hat[j], grid, j) for j in range(grid.dim)), grid)
    prod = theta * div_u
    for j in range(grid.dim):
        prod = prod + u[j] * _phys(derivative(state.theta_hat, grid, j), grid)
    return -_spec(prod, grid)


def stress_divergence(u_hat: np.ndarray, params: ModelParams, grid: Grid, route: str = "identity") -> np.ndarray:
    """Div S(u) with S(u) = mu D(u) + (nu - mu) div u I.

    ``route="identity"`` uses mu Lap u + nu grad div u; ``route="tensor"``
    assembles S component by component and takes its divergence.
    """
    n = grid.dim
    mu, nu = params.mu_star, params.nu_star
    div_hat = sum(derivative(u_hat[k], grid, k) for k in range(n))
    if route == "identity":
        return np.stack([-mu * grid.xi_sq * u_hat[j] + nu * derivative(div_hat, grid, j) for j in range(n)])
    if route == "tensor":
        out = np.zeros_like(u_hat)
        for j in range(n):
            for k in range(n):
                s_jk = mu * (derivative(u_hat[k], grid, j) + derivative(u_hat[j], grid, k))
                if j == k:
                    s_jk = s_jk + (nu - mu) * div_hat
                out[j] = out[j] + derivative(s_jk, grid, k)
        return out
    raise ValueError(f"unknown route {route!r}")


def _grad_theta_hat(theta_hat, grid):
    return [derivative(theta_hat, grid, j) for j in range(grid.dim)]


def korteweg_remainder(theta_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """grad(theta) Lap(theta) + 1/2 grad|grad theta|^2 - Div(grad theta (x) grad theta).

    Identically zero for smooth theta; returned as a dealiased vector spectrum.
    """
    n = grid.dim
    gh = _grad_theta_hat(theta_hat, grid)
    g = [_phys(h, grid) for h in gh]
    lap = _phys(-grid.xi_sq * theta_hat, grid)
    grad_sq_hat = _spec(sum(gj * gj for gj in g), grid)
    out = np.empty((n,) + grid.shape, dtype=complex)
    for j in range(n):
        div_outer = sum(derivative(_spec(g[j] * g[k], grid), grid, k) for k in range(n))
        out[j] = _spec(g[j] * lap, grid) + 0.5 * derivative(grad_sq_hat, grid, j) - div_outer
    return dealias(out, grid)


def korteweg_reference_term(theta_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """grad(theta) Lap(theta) in physical space; the scale the remainder is compared with."""
    lap = _phys(-grid.xi_sq * theta_hat, grid)
    return np.stack([_phys(h, grid) * lap for h in _grad_theta_hat(theta_hat, grid)])


def compute_g(
    state: SpectralState, params: ModelParams, grid: Grid, form: str = "conservative"
) -> np.ndarray:
    """Vector spectrum of the momentum nonlinearity g(theta, u).

    ``divided`` keeps the capillary bracket kappa/(rho*+theta) * [...] as
    written in the perturbation system; ``conservative`` uses
    Div K(rho) = kappa rho grad Lap rho, under which that bracket is absent.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")
    n = grid.dim
    rho = params.rho_star
    theta = _phys(state.theta_hat, grid)
    _range_check(theta, params)
    u = _phys(state.u_hat, grid)
    inv_rho = 1.0 / (rho + theta)
    # 1/(rho*+theta) - 1/rho* without cancellation
    dq = -theta * inv_rho / rho
    grad_t = [_phys(h, grid) for h in _grad_theta_hat(state.theta_hat, grid)]
    divS = _phys(stress_divergence(state.u_hat, params, grid), grid)
    dp0 = float(params.pressure.dP(rho))
    pressure_coef = -dp0 * dq - (params.pressure.dP(rho + theta) - dp0) * inv_rho

    out = np.empty((n,) + grid.shape, dtype=complex)
    for j in range(n):
        adv = u[0] * _phys(derivative(state.u_hat[j], grid, 0), grid)
        for k in range(1, n):
            adv = adv + u[k] * _phys(derivative(state.u_hat[j], grid, k), grid)
        out[j] = -_spec(adv, grid) + _spec(dq * divS[j], grid) + _spec(pressure_coef * grad_t[j], grid)

    if form == "divided":
        bracket = _phys(korteweg_remainder(state.theta_hat, grid), grid)
        for j in range(n):
            out[j] = out[j] + _spec(params.kappa_star * inv_rho * bracket[j], grid)
    return dealias(out, grid)


def compute_rhs(state: SpectralState, params: ModelParams, grid: Grid, form: str = "conservative") -> RhsFields:
    return RhsFields(compute_f(state, grid, params), compute_g(state, params, grid, form))
