"""Lattice Lebesgue, Sobolev and Besov norms plus the time-weighted functionals.

Vector-valued fields are measured through their pointwise Euclidean
magnitude; a pair (theta, u) is measured as ||theta|| + ||u||.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import MissingConstituent, ResolutionWarning
from .grid import CutoffProfile, Grid, field_axes, ifftn, to_physical
from .model import ExponentSet

CLIPPED_SHARE = 0.01


def _magnitude(f: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(f)
    if f.ndim == grid.dim:
        return np.abs(f)
    comps = f.reshape((-1,) + grid.shape)
    if np.iscomplexobj(comps):
        return np.sqrt(np.sum(comps.real**2 + comps.imag**2, axis=0))
    return np.sqrt(np.sum(comps * comps, axis=0))


def _lq(mag: np.ndarray, q: float, cell: float) -> float:
    if math.isinf(q):
        return float(np.max(mag)) if mag.size else 0.0
    peak = float(np.max(mag)) if mag.size else 0.0
    if peak == 0.0:
        return 0.0
    # scale by the peak so large q cannot overflow
    s = float(np.sum((mag.ravel() / peak) ** q))
    return peak * (s * cell) ** (1.0 / q)


def lebesgue_norm(f: np.ndarray, q: float, grid: Grid) -> float:
    """(sum |f|^q (L/M)^N)^(1/q); q = inf gives the lattice maximum."""
    if not (q > 1 or q == 1):
        raise ValueError(f"q must be >= 1, got {q}")
    return _lq(_magnitude(f, grid), float(q), grid.cell_volume)


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices alpha in N^dim with |alpha| == order."""
    out = [a for a in itertools.product(range(order + 1), repeat=dim) if sum(a) == order]
    return tuple(sorted(out, reverse=True))


class Derivatives:
    """Lazily evaluated physical-space derivatives of a spectrum.

    With ``real=False`` the spectrum need not be Hermitian and the fields
    come back complex.
    """

    def __init__(self, spec: np.ndarray, grid: Grid, real: bool = True):
        self.spec = np.asarray(spec)
        self.grid = grid
        self.real = real
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def __call__(self, alpha: tuple[int, ...]) -> np.ndarray:
        hit = self._cache.get(alpha)
        if hit is None:
            mult = 1.0 + 0j
            for ax, a in enumerate(alpha):
                if a:
                    mult = mult * (1j * self.grid.xi[ax]) ** a
            d = self.spec * mult
            if self.real:
                hit = to_physical(d, self.grid.dim)
            else:
                hit = ifftn(d, axes=field_axes(d, self.grid.dim))
            self._cache[alpha] = hit
        return hit

    def order(self, j: int) -> np.ndarray:
        """Stack of all order-j derivatives (the tensor nabla^j), flattened over index."""
        fields = [self(a) for a in multi_indices(self.grid.dim, j)]
        return np.concatenate([f.reshape((-1,) + self.grid.shape) for f in fields])


def sobolev_norm(spec: np.ndarray, m: int, q: float, grid: Grid, derivs: Derivatives | None = None,
                 real: bool = True) -> float:
    """sum over |alpha| <= m of ||d^alpha f||_{L_q}, derivatives taken spectrally."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    d = derivs or Derivatives(spec, grid, real)
    total = 0.0
    for order in range(m + 1):
        for a in multi_indices(grid.dim, order):
            total += lebesgue_norm(d(a), q, grid)
    return total


def paired_sobolev_norm(theta_hat, u_hat, m: int, ell: int, q: float, grid: Grid) -> float:
    """||(theta, u)||_{W^{m,ell}_q} = ||theta||_{W^m_q} + ||u||_{W^ell_q}."""
    return sobolev_norm(theta_hat, m, q, grid) + sobolev_norm(u_hat, ell, q, grid)


def spectral_l2(spec: np.ndarray, grid: Grid) -> float:
    """L2 norm from the coefficients via discrete Parseval."""
    s = float(np.sum(np.abs(spec) ** 2))
    return math.sqrt(s * grid.cell_volume / grid.size)


# -- Besov -------------------------------------------------------------------


@dataclass(frozen=True)
class BesovSpec:
    s: float
    q: float
    p: float


def dyadic_edges(grid: Grid) -> list[float]:
    """Cutoff radii eps_j = 2**(j - 1/2) for j = 0..J-1, J the first level covering the lattice."""
    rmax = float(np.max(grid.xi_norm))
    J = 1
    while 2.0 ** (J - 0.5) < rmax:
        J += 1
    return [2.0 ** (j - 0.5) for j in range(J)]


def dyadic_blocks(grid: Grid) -> list[np.ndarray]:
    """Smooth Littlewood-Paley multipliers Delta_0..Delta_J summing to one.

    Delta_0 = S_0, Delta_j = S_j - S_{j-1}, Delta_J = 1 - S_{J-1}, where S_j
    is the radial cutoff equal to one below eps_j and zero above 2 eps_j.
    Each block overlaps only its two neighbours.
    """
    r = grid.xi_norm
    S = [CutoffProfile(e)(r) for e in dyadic_edges(grid)]
    blocks = [S[0]]
    for j in range(1, len(S)):
        blocks.append(S[j] - S[j - 1])
    blocks.append(1.0 - S[-1])
    return blocks


def besov_terms(spec: np.ndarray, bs: BesovSpec, grid: Grid) -> np.ndarray:
    """2^{js} ||Delta_j f||_{L_q} for every block j."""
    spec = np.asarray(spec)
    out = []
    for j, blk in enumerate(dyadic_blocks(grid)):
        out.append(2.0 ** (j * bs.s) * lebesgue_norm(to_physical(spec * blk, grid.dim), bs.q, grid))
    return np.array(out)


def besov_norm(spec: np.ndarray, bs: BesovSpec, grid: Grid) -> float:
    """l^p over blocks of 2^{js} ||Delta_j f||_{L_q}."""
    terms = besov_terms(spec, bs, grid)
    if math.isinf(bs.p):
        total = float(np.max(terms))
    else:
        total = float(np.sum(terms**bs.p) ** (1.0 / bs.p))
    # blocks whose support pokes past the inscribed resolved ball are clipped by the lattice
    r_in = float(np.max(np.abs(grid.xi_1d)))
    clipped = np.array([2 * e > r_in for e in dyadic_edges(grid)] + [True])
    if math.isinf(bs.p):
        lost = float(np.max(terms[clipped]))
    else:
        lost = float(np.sum(terms[clipped] ** bs.p) ** (1.0 / bs.p))
    if total > 0 and lost > CLIPPED_SHARE * total:
        warnings.warn(
            f"lattice-clipped dyadic blocks carry {lost / total:.1%} of the B^{bs.s}_{{{bs.q},{bs.p}}} norm",
            ResolutionWarning,
            stacklevel=2,
        )
    return total


def data_norm_I(theta0_hat, u0_hat, exps: ExponentSet, grid: Grid) -> float:
    """Size of the initial data: two D_{q_i,p} norms plus the L_{q1/2} norm of the pair."""
    p = exps.p
    total = 0.0
    for q in (exps.q1, exps.q2):
        total += besov_norm(theta0_hat, BesovSpec(3 - 2 / p, q, p), grid)
        total += besov_norm(u0_hat, BesovSpec(2 * (1 - 1 / p), q, p), grid)
    half = exps.q1 / 2
    total += lebesgue_norm(to_physical(theta0_hat, grid.dim), half, grid)
    total += lebesgue_norm(to_physical(u0_hat, grid.dim), half, grid)
    return total


# -- time-weighted functionals -----------------------------------------------


def qname(q: float) -> str:
    return "inf" if math.isinf(q) else repr(float(q))


def grad_pair_name(j: int, q: float) -> str:
    """[(nabla^j theta, nabla^j u)] in L_q."""
    return f"grad{j}(theta,u)|L{qname(q)}"


def sobolev_pair_name(m: int, ell: int, q: float) -> str:
    return f"W{m},{ell}(theta,u)|L{qname(q)}"


def dt_pair_name(q: float) -> str:
    return f"W1,0(dt theta,dt u)|L{qname(q)}"


@dataclass
class NormTimeline:
    """Time-stamped named norms; times strictly increasing, values finite and >= 0."""

    times: list[float] = field(default_factory=list)
    samples: list[dict[str, float]] = field(default_factory=list)

    def add(self, t: float, values: dict[str, float]) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"time {t} does not increase past {self.times[-1]}")
        for k, v in values.items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"norm {k} = {v} at t = {t} is not finite and nonnegative")
        self.times.append(float(t))
        self.samples.append(dict(values))

    def __len__(self):
        return len(self.times)

    def names(self) -> set[str]:
        out: set[str] = set()
        for s in self.samples:
            out.update(s)
        return out

    def series(self, name: str, t_max: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
        ts, vs = [], []
        for t, s in zip(self.times, self.samples):
            if t > t_max:
                break
            if name not in s:
                raise MissingConstituent(f"timeline lacks {name!r} at t = {t}")
            ts.append(t)
            vs.append(s[name])
        return np.array(ts), np.array(vs)

    def scaled(self, c: float) -> "NormTimeline":
        return NormTimeline(list(self.times), [{k: abs(c) * v for k, v in s.items()} for s in self.samples])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "name", "value"])
            for t, s in zip(self.times, self.samples):
                for k in sorted(s):
                    w.writerow([repr(t), k, repr(float(s[k]))])

    @classmethod
    def read_csv(cls, path) -> "NormTimeline":
        tl = cls()
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        cur_t, cur = None, {}
        for row in rows:
            t = float(row["t"])
            if cur_t is not None and t != cur_t:
                tl.add(cur_t, cur)
                cur = {}
            cur_t = t
            cur[row["name"]] = float(row["value"])
        if cur_t is not None:
            tl.add(cur_t, cur)
        return tl


def weighted_sup(timeline: NormTimeline, name: str, ell: float, t_max: float = math.inf) -> float:
    """max over samples of (1 + t)^ell * value."""
    if not len(timeline):
        raise ValueError("timeline is empty")
    ts, vs = timeline.series(name, t_max)
    if ts.size == 0:
        return 0.0
    return float(np.max((1.0 + ts) ** ell * vs))


def weighted_lp_in_time(timeline: NormTimeline, name: str, ell: float, p: float, t_max: float = math.inf) -> float:
    """|| <s>^ell v(s) ||_{L_p(0, t)} by the trapezoid rule on the sample times."""
    ts, vs = timeline.series(name, t_max)
    if ts.size < 2:
        return 0.0
    g = ((1.0 + ts) ** ell * vs) ** p
    return float(np.trapezoid(g, ts) ** (1.0 / p))


def script_N_terms(timeline: NormTimeline, exps: ExponentSet, t: float) -> dict[str, float]:
    """Each summand of the composite functional, keyed by a readable label."""
    N = exps.dim
    terms: dict[str, float] = {}
    for j in (0, 1):
        terms[f"j={j} sup Linf"] = weighted_sup(timeline, grad_pair_name(j, math.inf), N / exps.q1 + j / 2, t)
        terms[f"j={j} sup Lq1"] = weighted_sup(timeline, grad_pair_name(j, exps.q1), N / (2 * exps.q1) + j / 2, t)
        terms[f"j={j} sup Lq2"] = weighted_sup(
            timeline, grad_pair_name(j, exps.q2), N / (2 * exps.q2) + 1 + j / 2, t
        )
    for i in (1, 2):
        q, ell = exps.q(i), exps.ell(i)
        terms[f"i={i} Lp W3,2"] = weighted_lp_in_time(timeline, sobolev_pair_name(3, 2, q), ell, exps.p, t)
        terms[f"i={i} Lp dt W1,0"] = weighted_lp_in_time(timeline, dt_pair_name(q), ell, exps.p, t)
    return terms


def script_N(timeline: NormTimeline, exps: ExponentSet, t: float) -> float:
    """The composite weighted functional, summed over j in {0,1} and i in {1,2} as displayed.

    Sup terms do not depend on i and the time integrals do not depend on j,
    so the literal double sum counts each of them twice.
    """
    if not len(timeline):
        raise ValueError("timeline is empty")
    terms = script_N_terms(timeline, exps, t)
    sups = sum(v for k, v in terms.items() if k.startswith("j="))
    integrals = sum(v for k, v in terms.items() if k.startswith("i="))
    return 2.0 * sups + 2.0 * integrals


def required_constituents(exps: ExponentSet) -> list[str]:
    names = []
    for j in (0, 1):
        for q in (math.inf, exps.q1, exps.q2):
            names.append(grad_pair_name(j, q))
    for q in (exps.q1, exps.q2):
        names.append(sobolev_pair_name(3, 2, q))
        names.append(dt_pair_name(q))
    return names


def state_norms(theta_hat, u_hat, grid: Grid, exps: ExponentSet | None = None, dt_hat=None,
                extra_q=(2.0,)) -> dict[str, float]:
    """Norm sample for one state: gradient pairs, W^{3,2}, W^{1,0} and time-derivative norms.

    ``dt_hat`` is the stacked spectrum of (d_t theta, d_t u) when available.
    """
    qs = [math.inf, *extra_q]
    if exps is not None:
        qs += [exps.q1, exps.q2]
    qs = list(dict.fromkeys(qs))
    dth = Derivatives(theta_hat, grid)
    dus = [Derivatives(u_hat[c], grid) for c in range(grid.dim)]

    def vec_order(j):
        return np.concatenate([d.order(j) for d in dus])

    out: dict[str, float] = {}
    cell = grid.cell_volume
    mags = {}
    for j in (0, 1):
        mags[("t", j)] = np.sqrt(np.sum(dth.order(j) ** 2, axis=0))
        mags[("u", j)] = np.sqrt(np.sum(vec_order(j) ** 2, axis=0))
    for q in qs:
        for j in (0, 1):
            out[grad_pair_name(j, q)] = _lq(mags[("t", j)], q, cell) + _lq(mags[("u", j)], q, cell)

    def sob(ders, m, q):
        tot = 0.0
        for order in range(m + 1):
            for a in multi_indices(grid.dim, order):
                tot += _lq(np.abs(ders(a)), q, cell)
        return tot

    def sob_vec(m, q):
        tot = 0.0
        for order in range(m + 1):
            for a in multi_indices(grid.dim, order):
                mag = np.sqrt(sum(d(a) ** 2 for d in dus))
                tot += _lq(mag, q, cell)
        return tot

    for q in qs:
        out[sobolev_pair_name(1, 0, q)] = sob(dth, 1, q) + sob_vec(0, q)
    if exps is not None:
        for q in (exps.q1, exps.q2):
            out[sobolev_pair_name(3, 2, q)] = sob(dth, 3, q) + sob_vec(2, q)
        if dt_hat is not None:
            dd_t = Derivatives(dt_hat[0], grid)
            du_t = np.sqrt(sum(to_physical(dt_hat[1 + c], grid.dim) ** 2 for c in range(grid.dim)))
            for q in (exps.q1, exps.q2):
                out[dt_pair_name(q)] = sob(dd_t, 1, q) + _lq(du_t, q, cell)
    return out
