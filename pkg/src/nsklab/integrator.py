"""Exponential (Duhamel) time stepping and Picard iteration for the full system.

The linear part is propagated exactly by the block symbols of
:mod:`nsklab.propagator`; the nonlinearity enters through the exponential
quadrature weights dt*phi_1(dt A) and dt*phi_2(dt A), which share the
eigenstructure (and its near-degenerate safeguards) with the propagator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NoContraction, NonFinite, RangeViolation
from .grid import Grid, SpectralState, dealias, to_physical
from .model import ExponentSet, ModelParams, check_range
from .nonlinear import FORMS, compute_rhs
from .norms import NormTimeline, state_norms
from .propagator import apply_block, exp_block, phi_block

log = logging.getLogger(__name__)

SCHEMES = ("etd1", "etd2rk")


@dataclass(frozen=True)
class PicardConfig:
    max_iters: int = 20
    contraction_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1", key="integrator.picard.max_iters")
        if not self.contraction_tol > 0:
            raise ConfigError("contraction_tol must be positive", key="integrator.picard.contraction_tol")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    scheme: str = "etd2rk"
    picard: PicardConfig | None = None
    form: str = "conservative"
    nonlinear: bool = True
    stride: int = 1
    record_norms: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}", key="integrator.dt")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be positive, got {self.t_end}", key="integrator.t_end")
        if self.dt > self.t_end:
            raise ConfigError("dt must not exceed t_end", key="integrator.dt")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}", key="integrator.scheme")
        if self.form not in FORMS:
            raise ConfigError(f"form must be one of {FORMS}", key="integrator.form")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1", key="integrator.stride")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[SpectralState] = field(default_factory=list)
    timeline: NormTimeline = field(default_factory=NormTimeline)
    halted: Exception | None = None

    def append(self, state: SpectralState) -> None:
        if self.times and not state.time > self.times[-1]:
            raise ValueError("trajectory times must increase")
        self.times.append(state.time)
        self.states.append(state)

    @property
    def final(self) -> SpectralState:
        return self.states[-1]


def apply_generator(X: np.ndarray, grid: Grid, params: ModelParams) -> np.ndarray:
    """A(xi) X for a stacked spectrum (the linear part of the right-hand side)."""
    xi = grid.xi
    q = grid.xi_sq
    theta, u = X[0], X[1:]
    w = sum(xi[j] * u[j] for j in range(grid.dim))
    gk = params.gamma_star + params.kappa_star * q
    out = np.empty_like(X)
    out[0] = -1j * params.rho_star * w
    for j in range(grid.dim):
        out[1 + j] = -params.alpha_star * q * u[j] - params.beta_star * xi[j] * w - 1j * gk * xi[j] * theta
    return out


def nonlinear_term(X: np.ndarray, params: ModelParams, grid: Grid, form: str, enabled: bool = True) -> np.ndarray:
    if not enabled:
        return np.zeros_like(X)
    rhs = compute_rhs(SpectralState.from_stacked(X), params, grid, form)
    return rhs.stacked()


def _check_finite(X: np.ndarray, where: str):
    if not np.all(np.isfinite(X)):
        raise NonFinite(f"non-finite coefficients after {where}")


def _step_stacked(X, dt, params, grid, scheme, form, nonlinear, N0=None):
    G = exp_block(dt, grid, params)
    if N0 is None:
        N0 = nonlinear_term(X, params, grid, form, nonlinear)
    if not nonlinear:
        return apply_block(X, G, grid, params)
    P1 = phi_block(dt, 1, grid, params)
    a = apply_block(X, G, grid, params) + apply_block(N0, P1, grid, params)
    if scheme == "etd1":
        return dealias(a, grid)
    _check_finite(a, "predictor")
    Na = nonlinear_term(a, params, grid, form, nonlinear)
    P2 = phi_block(dt, 2, grid, params)
    return dealias(a + apply_block(Na - N0, P2, grid, params), grid)


def duhamel_step(
    state: SpectralState,
    dt: float,
    params: ModelParams,
    grid: Grid,
    scheme: str = "etd2rk",
    form: str = "conservative",
    nonlinear: bool = True,
) -> SpectralState:
    """Advance one step of size dt by exponential quadrature of the Duhamel integral.

    etd1:   X1 = G X0 + dt phi_1 N(X0)
    etd2rk: a  = G X0 + dt phi_1 N(X0);  X1 = a + dt phi_2 (N(a) - N(X0))
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    X1 = _step_stacked(state.stacked(), dt, params, grid, scheme, form, nonlinear)
    _check_finite(X1, "step")
    return SpectralState.from_stacked(X1, state.time + dt)


def _sample_norms(X, N, params, grid, exps):
    dX = apply_generator(X, grid, params) + N
    return state_norms(X[0], X[1:], grid, exps, dt_hat=dX)


def check_initial_range(state: SpectralState, params: ModelParams):
    """Initial density must satisfy rho*/2 < rho* + theta0 < 2 rho*."""
    theta = to_physical(state.theta_hat, state.dim)
    rho = params.rho_star
    lo, hi = rho + float(theta.min()), rho + float(theta.max())
    if not (rho / 2 < lo and hi < 2 * rho):
        raise RangeViolation(lo, hi, rho / 2, 2 * rho)


def run_simulation(
    initial: SpectralState,
    params: ModelParams,
    exps: ExponentSet | None,
    config: IntegratorConfig,
    grid: Grid,
    raise_on_halt: bool = False,
    on_step=None,
) -> Trajectory:
    """Integrate to t_end, recording norms every step and snapshots every ``stride`` steps.

    A range violation or non-finite value stops the run; the trajectory
    keeps every state produced before the failure and stores the exception
    in ``halted``.
    """
    check_initial_range(initial, params)
    traj = Trajectory()
    X = initial.stacked()
    if config.nonlinear:
        X = dealias(X, grid)
    t0 = initial.time
    traj.append(SpectralState.from_stacked(X.copy(), t0))
    n_steps = config.n_steps
    for n in range(n_steps + 1):
        t = t0 + n * config.dt
        try:
            check_range(params.rho_star, *_theta_extrema(X, grid))
            if n > 0 and (n % config.stride == 0 or n == n_steps):
                traj.append(SpectralState.from_stacked(X.copy(), t))
            N0 = nonlinear_term(X, params, grid, config.form, config.nonlinear)
            if config.record_norms:
                traj.timeline.add(t, _sample_norms(X, N0, params, grid, exps))
            if n == n_steps:
                break
            X = _step_stacked(X, config.dt, params, grid, config.scheme, config.form, config.nonlinear, N0)
            _check_finite(X, f"step {n + 1}")
        except (RangeViolation, NonFinite) as exc:
            log.warning("run halted at t=%.6g: %s", t, exc)
            traj.halted = exc
            if raise_on_halt:
                raise
            break
        if on_step is not None:
            on_step(n + 1, X)
    return traj


def _theta_extrema(X, grid):
    theta = to_physical(X[0], grid.dim)
    return float(theta.min()), float(theta.max())


def picard_iterate(
    initial: SpectralState,
    horizon: float,
    params: ModelParams,
    config: IntegratorConfig,
    grid: Grid,
) -> tuple[Trajectory, list[float]]:
    """Fixed-point iteration of the Duhamel map on whole trajectories.

    Iterate k+1 solves the linear problem with the nonlinearity of iterate k
    as a source, piecewise-linear in time between steps:

        Y_{m+1} = G Y_m + dt phi_1 N_m + dt phi_2 (N_{m+1} - N_m).

    Returns the converged trajectory (every step stored) and the relative
    sup-distances between successive iterates.
    """
    picard = config.picard or PicardConfig()
    dt = config.dt
    n_steps = int(round(horizon / dt))
    if n_steps < 1:
        raise ConfigError("horizon shorter than one step", key="integrator.t_end")
    check_initial_range(initial, params)
    X0 = dealias(initial.stacked(), grid)
    G = exp_block(dt, grid, params)
    P1 = phi_block(dt, 1, grid, params)
    P2 = phi_block(dt, 2, grid, params)

    path = [X0]
    for _ in range(n_steps):
        path.append(apply_block(path[-1], G, grid, params))

    residuals: list[float] = []
    rising = 0
    converged = False
    for _ in range(picard.max_iters):
        Ns = [nonlinear_term(Y, params, grid, config.form, config.nonlinear) for Y in path]
        new = [X0]
        for m in range(n_steps):
            Y = apply_block(new[-1], G, grid, params)
            if config.nonlinear:
                Y = Y + apply_block(Ns[m], P1, grid, params) + apply_block(Ns[m + 1] - Ns[m], P2, grid, params)
                Y = dealias(Y, grid)
            _check_finite(Y, "picard sweep")
            new.append(Y)
        dist = max(float(np.max(np.abs(a - b))) for a, b in zip(new, path))
        scale = max(float(np.max(np.abs(a))) for a in new)
        res = dist / scale if scale > 0 else 0.0
        if residuals and res >= residuals[-1]:
            rising += 1
        else:
            rising = 0
        residuals.append(res)
        path = new
        if res < picard.contraction_tol:
            converged = True
            break
        if rising >= 3:
            raise NoContraction(f"residuals stopped decreasing: {residuals[-4:]}")
    if not converged:
        log.warning("picard iteration hit max_iters=%d, last residual %.3e", picard.max_iters, residuals[-1])
    traj = Trajectory()
    for m, Y in enumerate(path):
        traj.append(SpectralState.from_stacked(Y, initial.time + m * dt))
    return traj, residuals
