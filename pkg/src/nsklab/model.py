"""Physical parameters, pressure laws and exponent admissibility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate, interpolate

from .errors import (
    DegenerateDiscriminant,
    DimensionTooSmall,
    ExponentError,
    ParameterError,
    RangeViolation,
    ViolatesCapillarity,
    ViolatesPressure,
    ViolatesViscosity,
)

DEGENERACY_RTOL = 1e-12
EXPONENT_ATOL = 1e-12


class PressureLaw:
    """Pressure per unit density as a function of the density ``r > 0``."""

    family = "abstract"

    def P(self, r):
        raise NotImplementedError

    def dP(self, r):
        raise NotImplementedError

    def d2P(self, r):
        raise NotImplementedError

    def d3P(self, r):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Polytropic(PressureLaw):
    """P(r) = A r**gamma_exp."""

    A: float = 1.0
    gamma_exp: float = 2.0
    family = "polytropic"

    def __post_init__(self):
        if not (self.A > 0 and math.isfinite(self.A)):
            raise ParameterError(f"polytropic A must be positive, got {self.A}", key="pressure.A")
        if not (self.gamma_exp >= 1 and math.isfinite(self.gamma_exp)):
            raise ParameterError(
                f"polytropic gamma_exp must be >= 1, got {self.gamma_exp}", key="pressure.gamma_exp"
            )

    def P(self, r):
        return self.A * np.power(r, self.gamma_exp)

    def dP(self, r):
        g = self.gamma_exp
        return self.A * g * np.power(r, g - 1)

    def d2P(self, r):
        g = self.gamma_exp
        return self.A * g * (g - 1) * np.power(r, g - 2)

    def d3P(self, r):
        g = self.gamma_exp
        return self.A * g * (g - 1) * (g - 2) * np.power(r, g - 3)

    def to_dict(self) -> dict:
        return {"family": self.family, "A": float(self.A), "gamma_exp": float(self.gamma_exp)}


class Tabulated(PressureLaw):
    """Pressure interpolated from user samples by a quintic spline.

    Quintic keeps the third derivative continuous, which the Taylor
    remainder and its gradient need.
    """

    family = "tabulated"

    def __init__(self, r: Sequence[float], p: Sequence[float]):
        r = np.asarray(r, dtype=float)
        p = np.asarray(p, dtype=float)
        if r.ndim != 1 or r.shape != p.shape or r.size < 6:
            raise ParameterError("tabulated pressure needs >= 6 matching (r, P) samples", key="pressure")
        if np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise ParameterError("tabulated densities must be positive and increasing", key="pressure.r")
        self.r = r
        self.p = p
        self._spline = interpolate.make_interp_spline(r, p, k=5)
        self._d = [self._spline.derivative(n) for n in (1, 2, 3)]

    def P(self, r):
        return self._spline(r)

    def dP(self, r):
        return self._d[0](r)

    def d2P(self, r):
        return self._d[1](r)

    def d3P(self, r):
        return self._d[2](r)

    def to_dict(self) -> dict:
        return {"family": self.family, "r": self.r.tolist(), "P": self.p.tolist()}


def make_pressure(spec: dict | None) -> PressureLaw:
    """Build a pressure law from a config-style mapping."""
    if spec is None:
        return Polytropic()
    family = spec.get("family", "polytropic")
    if family == "polytropic":
        return Polytropic(A=float(spec.get("A", 1.0)), gamma_exp=float(spec.get("gamma_exp", 2.0)))
    if family == "tabulated":
        return Tabulated(spec["r"], spec["P"])
    raise ParameterError(f"unknown pressure family {family!r}", key="pressure.family")


@dataclass(frozen=True)
class ModelParams:
    mu_star: float
    nu_star: float
    kappa_star: float
    rho_star: float
    pressure: PressureLaw = field(default_factory=Polytropic)

    @property
    def alpha_star(self) -> float:
        return self.mu_star / self.rho_star

    @property
    def beta_star(self) -> float:
        return self.nu_star / self.rho_star

    @property
    def gamma_star(self) -> float:
        return float(self.pressure.dP(self.rho_star)) / self.rho_star

    @property
    def delta_star(self) -> float:
        return (self.alpha_star + self.beta_star) ** 2 / 4 - self.rho_star * self.kappa_star

    @property
    def sound_speed(self) -> float:
        return math.sqrt(self.rho_star * self.gamma_star)

    def wraparound_time(self, box_length: float) -> float:
        return box_length / self.sound_speed

    def to_dict(self) -> dict:
        return {
            "mu_star": self.mu_star,
            "nu_star": self.nu_star,
            "kappa_star": self.kappa_star,
            "rho_star": self.rho_star,
            "pressure": self.pressure.to_dict(),
        }


def validate_params(
    mu_star: float,
    nu_star: float,
    kappa_star: float,
    rho_star: float,
    pressure: PressureLaw | dict | None = None,
) -> ModelParams:
    """Check the admissibility conditions and return frozen parameters.

    Raises the matching :class:`ParameterError` subclass for the first
    violated condition.
    """
    raw = {"mu_star": mu_star, "nu_star": nu_star, "kappa_star": kappa_star, "rho_star": rho_star}
    for key, value in raw.items():
        if not math.isfinite(float(value)):
            raise ParameterError(f"{key} must be finite, got {value}", key=key)
    mu, nu, kappa, rho = (float(raw[k]) for k in ("mu_star", "nu_star", "kappa_star", "rho_star"))
    if rho <= 0:
        raise ParameterError(f"rho_star must be positive, got {rho}", key="rho_star")
    if mu <= 0:
        raise ViolatesViscosity(f"mu_star = {mu} <= 0", key="mu_star")
    if mu + nu <= 0:
        raise ViolatesViscosity(f"mu_star + nu_star = {mu + nu} <= 0", key="nu_star")
    if kappa <= 0:
        raise ViolatesCapillarity(f"kappa_star = {kappa} <= 0", key="kappa_star")
    if not isinstance(pressure, PressureLaw):
        pressure = make_pressure(pressure)
    dp = float(pressure.dP(rho))
    if not dp > 0:
        raise ViolatesPressure(f"P'(rho_star) = {dp} <= 0", key="pressure")
    params = ModelParams(mu, nu, kappa, rho, pressure)
    a = (params.alpha_star + params.beta_star) ** 2 / 4
    b = rho * kappa
    if abs(a - b) <= DEGENERACY_RTOL * (a + b):
        raise DegenerateDiscriminant(
            f"((mu+nu)/rho)^2/4 = {a} equals rho*kappa = {b}: delta_star = 0", key="kappa_star"
        )
    return params


def _as_exact(x):
    """Return a Fraction for ints, Fractions and 'a/b' strings, else a float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return Fraction(int(x))
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "infinity", "+inf"):
            return math.inf
        try:
            return Fraction(s)
        except ValueError:
            return float(s)
    return float(x)


@dataclass(frozen=True)
class ExponentSet:
    p: float
    q1: float
    q2: float
    tau: float
    dim: int

    @property
    def ell_1(self) -> float:
        return self.dim / (2 * self.q1) - self.tau

    @property
    def ell_2(self) -> float:
        return self.dim / (2 * self.q2) + 1 - self.tau

    def ell(self, i: int) -> float:
        return self.ell_1 if i == 1 else self.ell_2

    def q(self, i: int) -> float:
        return self.q1 if i == 1 else self.q2

    def to_dict(self) -> dict:
        return {"p": self.p, "q1": self.q1, "q2": self.q2, "tau": self.tau}


def validate_exponents(p, q1, q2, tau, dim: int) -> ExponentSet:
    """Check the exponent conditions of the small-data global theory.

    Exact rational arithmetic is used whenever every input is rational
    (ints, :class:`fractions.Fraction`, or strings like ``"24/11"``).
    """
    if dim < 3:
        raise DimensionTooSmall(dim)
    vals = [_as_exact(v) for v in (p, q1, q2, tau)]
    exact = all(isinstance(v, Fraction) for v in vals)
    P, Q1, Q2, T = vals
    n = Fraction(dim) if exact else float(dim)

    def inv(x):
        return 0 if x == math.inf else 1 / x

    for name, q in (("p", P), ("q1", Q1), ("q2", Q2)):
        if not q > 1:
            raise ExponentError(f"{name} = {float(q)} must lie in (1, inf]", f"{name}>1")
    if not (2 < P < math.inf):
        raise ExponentError(f"need 2 < p < inf, got p = {float(P)}", "2<p<inf")
    if not Q1 < n:
        raise ExponentError(f"need q1 < N, got q1 = {float(Q1)}, N = {dim}", "q1<N")
    if not n < Q2:
        raise ExponentError(f"need N < q2, got q2 = {float(Q2)}, N = {dim}", "N<q2")
    lhs, rhs = inv(Q1), inv(Q2) + 1 / n
    if exact:
        ok = lhs == rhs
    else:
        ok = abs(float(lhs) - float(rhs)) <= EXPONENT_ATOL
    if not ok:
        raise ExponentError(
            f"need 1/q1 = 1/q2 + 1/N, got {float(lhs):.12g} != {float(rhs):.12g}", "1/q1=1/q2+1/N"
        )
    if not 2 * inv(P) + n * inv(Q2) < 1:
        raise ExponentError("need 2/p + N/q2 < 1", "2/p+N/q2<1")
    if not inv(P) < T:
        raise ExponentError(f"need 1/p < tau, got tau = {float(T)}", "1/p<tau")
    if not T < n * inv(Q2) + inv(P):
        raise ExponentError(f"need tau < N/q2 + 1/p, got tau = {float(T)}", "tau<N/q2+1/p")
    if not Q1 / 2 > 1:
        raise ExponentError(f"need q1/2 > 1, got q1 = {float(Q1)}", "q1/2>1")
    return ExponentSet(float(P), float(Q1), float(Q2), float(T), dim)


def check_range(rho_star: float, theta_min: float, theta_max: float, lower=0.25, upper=4.0):
    """Raise :class:`RangeViolation` unless lower*rho* <= rho*+theta <= upper*rho*."""
    lo, hi = lower * rho_star, upper * rho_star
    rmin, rmax = rho_star + theta_min, rho_star + theta_max
    if not (lo <= rmin and rmax <= hi):
        raise RangeViolation(rmin, rmax, lo, hi)


def taylor_pressure_coefficient(theta: float, params: ModelParams) -> float:
    """Q(theta) = int_0^1 P''(rho* + s theta)(1 - s) ds.

    Satisfies P(rho* + theta) = P(rho*) + P'(rho*) theta + Q(theta) theta**2.
    """
    rho = params.rho_star
    if rho + theta < rho / 4:
        raise RangeViolation(rho + theta, rho + theta, rho / 4, math.inf)
    d2 = params.pressure.d2P
    val, _ = integrate.quad(
        lambda s: float(d2(rho + s * theta)) * (1.0 - s), 0.0, 1.0, epsabs=1e-12, epsrel=1e-13, limit=200
    )
    return val
