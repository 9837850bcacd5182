"""Verification campaigns: decay rates, eigenvalue asymptotics and resolvent sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InadmissiblePQ, WindowTooShort
from .grid import CutoffProfile, Grid, SpectralState, to_physical, to_spectral
from .model import ModelParams
from .norms import Derivatives, _lq, lebesgue_norm, sobolev_norm
from .propagator import apply_semigroup, apply_split_semigroup
from .symbols import Sector, asymptotic_lambda, crossover_radius, eigenvalues, resolvent_solve_lattice

MIN_WINDOW_SAMPLES = 8
PQ_RULE = "1 < q <= 2 <= p <= inf"


def _pmap(fn, items):
    """Ordered map, threaded when more than one worker is configured."""
    items = list(items)
    n = _kernels.get_threads()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _fmt(x) -> str:
    return repr(float(x)) if not isinstance(x, str) else x


# -- fitting -----------------------------------------------------------------


def slope_fit(times, values, window=(0.0, math.inf)) -> tuple[float, float]:
    """OLS slope of log(value) against log(t) inside the window, and the RMS residual."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (t >= lo) & (t <= hi) & (t > 0) & (v > 0)
    if int(sel.sum()) < MIN_WINDOW_SAMPLES:
        raise WindowTooShort(
            f"{int(sel.sum())} usable samples in [{lo}, {hi}], need {MIN_WINDOW_SAMPLES}"
        )
    x, y = np.log(t[sel]), np.log(v[sel])
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def exponential_fit(times, values) -> tuple[float, float]:
    """Fit v = C exp(-c t) by OLS on log v; returns (c, C)."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = v > 0
    if int(sel.sum()) < 2:
        raise WindowTooShort("need at least two positive samples")
    slope, icpt = np.polyfit(t[sel], np.log(v[sel]), 1)
    return float(-slope), float(math.exp(icpt))


def predicted_exponent(dim: int, q: float, p: float, j: int) -> float:
    return -(dim / 2) * (1 / q - 1 / p) - j / 2


def check_admissible_pq(p: float, q: float) -> None:
    if not (1 < q <= 2 <= p):
        raise InadmissiblePQ(f"(p, q) = ({p}, {q}) violates {PQ_RULE} required for t >= 1")


# -- initial data ------------------------------------------------------------


def _gaussian(grid: Grid, width: float) -> np.ndarray:
    r = grid.radius_from_center()
    return np.exp(-0.5 * (r / width) ** 2)


def critical_profile_hat(grid: Grid, q: float) -> np.ndarray:
    """Spectrum |xi|**(N/q - N) of the box-centred L_q-critical profile |x|**(-N/q).

    This is the continuous scale mixture of Gaussians whose L_q norms are
    all equal: |xi|**(-b) is proportional to the integral over s > 0 of
    s**(b-1) exp(-s**2 |xi|**2 / 2). The lattice truncates it at both ends;
    the zero mode is removed.
    """
    ph = _centre_phase(grid)
    r = np.where(ph != 0, grid.xi_norm, 1.0)
    r.flat[0] = 1.0
    out = r ** (grid.dim / q - grid.dim) * ph / grid.cell_volume
    out.flat[0] = 0.0
    return out.astype(complex)


def _centre_phase(grid: Grid) -> np.ndarray:
    """Shift by half the box, (-1)**(k_1 + ... + k_N), with Nyquist planes zeroed."""
    k = grid.k_int
    ph1 = np.where(k % 2 == 0, 1.0, -1.0) * (k != -grid.modes // 2)
    ph = np.ones(grid.shape)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.modes
        ph = ph * ph1.reshape(shape)
    return ph


@dataclass(frozen=True)
class DataSpec:
    """Initial data for linear experiments.

    family "gaussian": isotropic Gaussian of the given width (default L/20).
    family "critical": ``critical_profile_hat`` for the experiment's q.
    theta gets ``theta_weight`` times the profile and the velocity the
    profile along the first axis (when ``velocity`` is set).
    """

    family: str = "gaussian"
    amplitude: float = 1.0
    width: float | None = None
    theta_weight: float = 1.0
    velocity: bool = True

    def __post_init__(self):
        if self.family not in ("gaussian", "critical"):
            raise ValueError(f"unknown data family {self.family!r}")
        if self.width is not None and not self.width > 0:
            raise ValueError("width must be positive")

    def build(self, grid: Grid, q: float = 2.0) -> SpectralState:
        if self.family == "gaussian":
            w = self.width if self.width is not None else grid.box_length / 20
            prof = to_spectral(_gaussian(grid, w), grid.dim)
        else:
            prof = critical_profile_hat(grid, q)
        prof = self.amplitude * prof
        u_hat = np.zeros((grid.dim,) + grid.shape, dtype=complex)
        if self.velocity:
            u_hat[0] = prof
        return SpectralState(self.theta_weight * prof, u_hat, 0.0)


# -- decay ---------------------------------------------------------------------


def derivative_pair_norm(state: SpectralState, j: int, p: float, grid: Grid) -> float:
    """||nabla^j (theta, u)||_{W^{1,0}_p} = ||nabla^j theta||_{W^1_p} + ||nabla^j u||_{L_p}."""
    cell = grid.cell_volume
    dth = Derivatives(state.theta_hat, grid)
    total = 0.0
    for order in (j, j + 1):
        total += _lq(np.sqrt(np.sum(dth.order(order) ** 2, axis=0)), p, cell)
    sq = 0.0
    for c in range(grid.dim):
        sq = sq + np.sum(Derivatives(state.u_hat[c], grid).order(j) ** 2, axis=0)
    return total + _lq(np.sqrt(sq), p, cell)


@dataclass
class DecayReport:
    p: float
    q: float
    j: int
    dim: int
    times: np.ndarray
    norms: np.ndarray
    slope: float
    residual: float
    window: tuple[float, float]
    wraparound_time: float

    @property
    def predicted(self) -> float:
        return predicted_exponent(self.dim, self.q, self.p, self.j)

    @property
    def relative_mismatch(self) -> float:
        return abs(self.slope - self.predicted) / abs(self.predicted)

    @property
    def too_shallow(self) -> bool:
        return self.slope > self.predicted

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "norm", "j", "p", "q", "predicted_exponent"])
            for t, v in zip(self.times, self.norms):
                w.writerow([_fmt(t), _fmt(v), self.j, _fmt(self.p), _fmt(self.q), _fmt(self.predicted)])


def decay_experiment(
    data: DataSpec,
    p: float,
    q: float,
    j: int,
    grid: Grid,
    params: ModelParams,
    times,
    window: tuple[float, float] | None = None,
) -> DecayReport:
    """Measure ||nabla^j S(t)(f, g)||_{W^{1,0}_p} on sample times and fit the log-log slope.

    The fit window defaults to [1, 0.2 L / c] (c the sound speed); its
    upper end is always capped at that wrap-around bound.
    """
    check_admissible_pq(p, q)
    if j < 0:
        raise ValueError("j must be nonnegative")
    t_wrap = 0.2 * params.wraparound_time(grid.box_length)
    lo, hi = window if window is not None else (1.0, t_wrap)
    lo, hi = max(lo, 1.0), min(hi, t_wrap)
    times = np.asarray(sorted(float(t) for t in times))
    x0 = data.build(grid, q)

    def sample(t):
        return derivative_pair_norm(apply_semigroup(t, x0, params, grid), j, p, grid)

    norms = np.array(_pmap(sample, times))
    slope, resid = slope_fit(times, norms, (lo, hi))
    return DecayReport(p, q, j, grid.dim, times, norms, slope, resid, (lo, hi), t_wrap)


def high_frequency_decay(
    data: DataSpec, epsilon: float, q: float, grid: Grid, params: ModelParams, times
) -> tuple[float, float, np.ndarray]:
    """Fit ||S(t) Phi_inf (f, g)||_{L_q} = C exp(-c t); returns (c, C, norms)."""
    x0 = data.build(grid, q)
    prof = CutoffProfile(epsilon)

    def sample(t):
        _, high = apply_split_semigroup(t, x0, prof, params, grid)
        return lebesgue_norm(to_physical(high.theta_hat, grid.dim), q, grid) + lebesgue_norm(
            to_physical(high.u_hat, grid.dim), q, grid
        )

    times = np.asarray(times, dtype=float)
    norms = np.array(_pmap(sample, times))
    c, C = exponential_fit(times, norms)
    return c, C, norms


# -- eigenvalue asymptotics --------------------------------------------------


@dataclass
class AsymptoticsTable:
    xi: np.ndarray
    rel_dev_low: np.ndarray  # nan outside the low regime
    rel_dev_high: np.ndarray  # nan outside the high regime

    @property
    def low_monotone(self) -> bool:
        """Deviation shrinks at every step towards |xi| -> 0."""
        order = np.argsort(self.xi)[::-1]
        d = self.rel_dev_low[order]
        d = d[np.isfinite(d)]
        return bool(np.all(np.diff(d) < 0))

    @property
    def high_monotone(self) -> bool:
        """Deviation shrinks at every step towards |xi| -> infinity."""
        order = np.argsort(self.xi)
        d = self.rel_dev_high[order]
        d = d[np.isfinite(d)]
        return bool(np.all(np.diff(d) < 0))

    def deviation_at(self, xi: float, regime: str) -> float:
        i = int(np.argmin(np.abs(np.log(self.xi) - math.log(xi))))
        return float((self.rel_dev_low if regime == "low" else self.rel_dev_high)[i])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["xi", "rel_dev_low", "rel_dev_high"])
            for x, a, b in zip(self.xi, self.rel_dev_low, self.rel_dev_high):
                w.writerow([_fmt(x), _fmt(a), _fmt(b)])


def relative_deviation(xi_norm: float, regime: str, params: ModelParams) -> float:
    """max over the two roots of |lambda_exact - lambda_asym| / |lambda_exact|, roots paired by imag sign."""
    lp, lm, _ = eigenvalues(np.array([xi_norm * xi_norm]), params)
    exact = sorted([complex(lp[0]), complex(lm[0])], key=lambda z: (z.imag, z.real))
    asym = sorted(asymptotic_lambda(xi_norm, regime, params), key=lambda z: (z.imag, z.real))
    return max(abs(e - a) / abs(e) for e, a in zip(exact, asym))


def asymptotics_experiment(
    params: ModelParams,
    low=(-4.0, -1.0),
    high=(1.0, 4.0),
    per_decade: int = 1,
) -> AsymptoticsTable:
    """Sweep |xi| = 10**e over the two decade ranges and tabulate deviations.

    Exponents are absolute (log10 |xi|). Points on the wrong side of the
    crossover radius get nan for that regime.
    """
    def grid_of(a, b):
        n = int(round((b - a) * per_decade)) + 1
        return 10.0 ** np.linspace(a, b, n)

    xs = np.unique(np.concatenate([grid_of(*low), grid_of(*high)]))
    rc = crossover_radius(params)
    dl = np.full(xs.shape, np.nan)
    dh = np.full(xs.shape, np.nan)
    for i, x in enumerate(xs):
        if x < rc:
            dl[i] = relative_deviation(x, "low", params)
        if x > rc:
            dh[i] = relative_deviation(x, "high", params)
    return AsymptoticsTable(xs, dl, dh)


def eigen_table(xi_values, params: ModelParams):
    """Rows (xi, re+, im+, re-, im-, regime) for the eigen CSV."""
    xi = np.asarray(xi_values, dtype=float)
    lp, lm, reg = eigenvalues(xi * xi, params)
    return [(float(x), a.real, a.imag, b.real, b.imag, str(r)) for x, a, b, r in zip(xi, lp, lm, reg)]


def write_eigen_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xi", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus", "im_lambda_minus", "regime"])
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# -- resolvent ---------------------------------------------------------------


def lambda_grid(sector: Sector, n_angles: int = 16, per_decade: int = 25, lam_max: float = 1e6) -> np.ndarray:
    """Angles evenly spaced strictly inside (-(pi - eps), pi - eps), radii log-spaced in [lambda0, lam_max]."""
    amax = math.pi - sector.epsilon_angle
    # open interval: drop the endpoints of an (n + 2)-point grid
    angles = np.linspace(-amax, amax, n_angles + 2)[1:-1]
    decades = math.log10(lam_max / sector.lambda0)
    n_r = int(round(decades * per_decade)) + 1
    radii = sector.lambda0 * 10.0 ** np.linspace(0.0, decades, n_r)
    return (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()


def _w10(spec_t, spec_u, q, grid):
    return sobolev_norm(spec_t, 1, q, grid, real=False) + sobolev_norm(spec_u, 0, q, grid, real=False)


def _w32(spec_t, spec_u, q, grid):
    return sobolev_norm(spec_t, 3, q, grid, real=False) + sobolev_norm(spec_u, 2, q, grid, real=False)


@dataclass
class ResolventReport:
    sector: Sector
    lambdas: np.ndarray
    quantity: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(self.quantity))

    @property
    def flatness(self) -> float:
        return float(np.max(self.quantity) / np.min(self.quantity))

    @property
    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.quantity)))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["re_lambda", "im_lambda", "quantity"])
            for lam, v in zip(self.lambdas, self.quantity):
                w.writerow([_fmt(lam.real), _fmt(lam.imag), _fmt(v)])


def resolvent_quantity(lam, probe: SpectralState, gammas, params: ModelParams, q: float, grid: Grid,
                       probe_norm: float | None = None) -> float:
    """(|lambda| ||sol||_{W^{1,0}_q} + ||sol||_{W^{3,2}_q}) / ||probe||_{W^{1,0}_q}."""
    sol = resolvent_solve_lattice(lam, grid.xi_full, probe.stacked(), gammas, params)
    if probe_norm is None:
        probe_norm = _w10(probe.theta_hat, probe.u_hat, q, grid)
    num = abs(lam) * _w10(sol[0], sol[1:], q, grid) + _w32(sol[0], sol[1:], q, grid)
    return num / probe_norm


def resolvent_sweep(
    sector: Sector,
    gammas,
    params: ModelParams,
    q: float,
    grid: Grid,
    probe: SpectralState,
    lambdas=None,
) -> ResolventReport:
    """Solve the resolvent system on the full lattice for every lambda and measure the bound quantity."""
    lambdas = lambda_grid(sector) if lambdas is None else np.asarray(lambdas, dtype=complex)
    for lam in lambdas:
        if not sector.contains(lam):
            raise ValueError(f"lambda = {lam} lies outside the sector")
    pn = _w10(probe.theta_hat, probe.u_hat, q, grid)
    if not pn > 0:
        raise ValueError("probe data must be nonzero")
    vals = _pmap(lambda lam: resolvent_quantity(lam, probe, gammas, params, q, grid, pn), lambdas)
    return ResolventReport(sector, lambdas, np.array(vals))
