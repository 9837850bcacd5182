"""Per-mode hot loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics. The numba
path is used unless ``NSKLAB_NO_NUMBA=1`` is set in the environment (or
numba fails to import). Both paths are element-wise maps over the lattice,
so results do not depend on the thread count.

Notation: for one Fourier mode with |xi|^2 = q,

    m = -(alpha+beta) q / 2          (mean of the two roots lambda_+/-)
    d = ((alpha+beta)^2/4 - rho kappa) q^2 - rho gamma q   (= h^2, h = (lambda_+ - lambda_-)/2)

A function f of the generator acts on the compressible block through
(mean f(lambda_+/-), divided difference f[lambda_+, lambda_-]) and on the
solenoidal part through f(-alpha q). Both block quantities are even in h,
hence real functions of d.
"""

from __future__ import annotations

import math
import os

import numpy as np

SERIES_THRESHOLD = 1e-6  # |lambda_+ - lambda_-| t below which the Taylor branch is used
UNDERFLOW = -745.0
CONTOUR_RADIUS = 1.0
CONTOUR_POINTS = 64
CONTOUR_SWITCH = 0.5  # |h dt| below which phi divided differences use the contour
PHI_SERIES_TERMS = 30

_DISABLE = os.environ.get("NSKLAB_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:  # pragma: no cover - exercised implicitly
    if _DISABLE:
        raise ImportError("numba disabled by NSKLAB_NO_NUMBA")
    # the system TBB is too old for numba; avoid the probe warning
    os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_threads = 1


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def set_threads(n: int) -> None:
    global _threads
    _threads = max(1, int(n))
    if HAVE_NUMBA:
        numba.set_num_threads(min(_threads, numba.config.NUMBA_NUM_THREADS))


def get_threads() -> int:
    return _threads


# -- factorials for the Taylor branches --------------------------------------

_INV_FACT = np.array([1.0 / math.factorial(k) for k in range(2 * PHI_SERIES_TERMS + 4)])


# -- numpy implementations ---------------------------------------------------


def _safe_exp(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < UNDERFLOW, 0.0, np.exp(np.maximum(x, UNDERFLOW)))


def exp_coefficients_numpy(q, t, apb, rk, rg, alpha):
    """(C, D, E) for f = exp(t .): C = mean, D = divided difference, E = solenoidal."""
    q = np.asarray(q, dtype=float)
    m = -0.5 * apb * q
    d = (0.25 * apb * apb - rk) * q * q - rg * q
    em = _safe_exp(m * t)
    E = _safe_exp(-alpha * q * t)
    s = np.sqrt(np.abs(d))
    st = s * t
    C = np.empty_like(q)
    D = np.empty_like(q)

    series = 2.0 * st < SERIES_THRESHOLD
    z = d * t * t
    ch = np.zeros_like(q)
    sh = np.zeros_like(q)
    zk = np.ones_like(q)
    for k in range(6):
        ch = ch + zk * _INV_FACT[2 * k]
        sh = sh + zk * _INV_FACT[2 * k + 1]
        zk = zk * z
    C[series] = (em * ch)[series]
    D[series] = (t * em * sh)[series]

    pos = (~series) & (d > 0)
    near = pos & (st < 1.0)
    far = pos & ~near
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        C[near] = (em * np.cosh(st))[near]
        D[near] = (em * np.sinh(st) / s)[near]
        ep = _safe_exp((m + s) * t)
        en = _safe_exp((m - s) * t)
        C[far] = (0.5 * (ep + en))[far]
        D[far] = (0.5 * (ep - en) / s)[far]
        neg = (~series) & (d <= 0)
        C[neg] = (em * np.cos(st))[neg]
        D[neg] = (em * np.sin(st) / s)[neg]
    return C, D, E


def _phi_series(w, k):
    out = np.zeros_like(w)
    wk = np.ones_like(w)
    for j in range(PHI_SERIES_TERMS):
        out = out + wk * _INV_FACT[j + k]
        wk = wk * w
    return out


def phi_numpy(w, k):
    """phi_k(w) = sum_j w^j / (j+k)!, for k in {0, 1, 2}; complex or real input."""
    w = np.asarray(w)
    if k == 0:
        return np.exp(w)
    small = np.abs(w) < 1.0
    ws = np.where(small, w, 0.0)
    wl = np.where(small, 1.0, w)
    with np.errstate(over="ignore", invalid="ignore"):
        ew = np.exp(wl)
        if k == 1:
            direct = (ew - 1.0) / wl
        else:
            direct = (ew - 1.0 - wl) / (wl * wl)
    return np.where(small, _phi_series(ws, k), direct)


def phi_coefficients_numpy(q, dt, k, apb, rk, rg, alpha):
    """Block coefficients for f(lambda) = dt * phi_k(lambda dt)."""
    q = np.asarray(q, dtype=float)
    m = -0.5 * apb * q
    d = (0.25 * apb * apb - rk) * q * q - rg * q
    H2 = d * dt * dt  # (h dt)^2
    zm = m * dt
    Ef = dt * phi_numpy(-alpha * q * dt, k).real
    Cf = np.empty_like(q)
    Df = np.empty_like(q)

    hd = np.sqrt(H2.astype(complex))
    direct = np.abs(hd) >= CONTOUR_SWITCH
    if np.any(direct):
        zp = zm[direct] + hd[direct]
        zn = zm[direct] - hd[direct]
        fp = phi_numpy(zp, k)
        fn = phi_numpy(zn, k)
        Cf[direct] = dt * (0.5 * (fp + fn)).real
        Df[direct] = dt * dt * ((fp - fn) / (zp - zn)).real
    cont = ~direct
    if np.any(cont):
        theta = 2.0 * np.pi * (np.arange(CONTOUR_POINTS) + 0.5) / CONTOUR_POINTS
        rho = CONTOUR_RADIUS * np.exp(1j * theta)
        w = zm[cont][:, None] + rho[None, :]
        fw = phi_numpy(w, k)
        den = rho[None, :] ** 2 - H2[cont][:, None]
        Cf[cont] = dt * np.mean(fw * rho[None, :] ** 2 / den, axis=1).real
        Df[cont] = dt * dt * np.mean(fw * rho[None, :] / den, axis=1).real
    return Cf, Df, Ef


def apply_block_numpy(X, Cf, Df, Ef, xi, q, apb, rho, gk):
    """Apply the structured (N+1)x(N+1) multiplier to a stacked spectrum X.

    X has shape (N+1, ...). ``xi`` has shape (N, ...) (broadcastable), ``q`` is
    |xi|^2 and ``gk`` is gamma + kappa |xi|^2.
    """
    m = -0.5 * apb * q
    theta = X[0]
    u = X[1:]
    w = np.zeros_like(theta)
    for j in range(u.shape[0]):
        w = w + xi[j] * u[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_q = np.where(q > 0, 1.0 / np.where(q > 0, q, 1.0), 0.0)
    out = np.empty(np.broadcast_shapes(X.shape, (X.shape[0],) + np.shape(q)), dtype=np.complex128)
    out[0] = (Cf - m * Df) * theta - 1j * rho * Df * w
    coef_w = (Cf + m * Df - Ef) * inv_q
    coef_t = -1j * gk * Df
    for j in range(u.shape[0]):
        out[1 + j] = Ef * u[j] + xi[j] * (coef_w * w + coef_t * theta)
    return out


# -- numba implementations ---------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _sexp(x):
        if x < UNDERFLOW:
            return 0.0
        return math.exp(x)

    @njit(cache=True, parallel=True)
    def _exp_coefficients_nb(q, t, apb, rk, rg, alpha, C, D, E):
        n = q.size
        c2 = 0.25 * apb * apb - rk
        for i in prange(n):
            qi = q[i]
            m = -0.5 * apb * qi
            d = c2 * qi * qi - rg * qi
            em = _sexp(m * t)
            E[i] = _sexp(-alpha * qi * t)
            s = math.sqrt(abs(d))
            st = s * t
            if 2.0 * st < SERIES_THRESHOLD:
                z = d * t * t
                ch = 0.0
                sh = 0.0
                zk = 1.0
                for k in range(6):
                    ch += zk * _INV_FACT[2 * k]
                    sh += zk * _INV_FACT[2 * k + 1]
                    zk *= z
                C[i] = em * ch
                D[i] = t * em * sh
            elif d > 0:
                if st < 1.0:
                    C[i] = em * math.cosh(st)
                    D[i] = em * math.sinh(st) / s
                else:
                    ep = _sexp((m + s) * t)
                    en = _sexp((m - s) * t)
                    C[i] = 0.5 * (ep + en)
                    D[i] = 0.5 * (ep - en) / s
            else:
                C[i] = em * math.cos(st)
                D[i] = em * math.sin(st) / s

    @njit(cache=True)
    def _phi_nb(w, k):
        if k == 0:
            return np.exp(w)
        if abs(w) < 1.0:
            out = 0j
            wk = 1.0 + 0j
            for j in range(PHI_SERIES_TERMS):
                out += wk * _INV_FACT[j + k]
                wk *= w
            return out
        ew = np.exp(w)
        if k == 1:
            return (ew - 1.0) / w
        return (ew - 1.0 - w) / (w * w)

    @njit(cache=True, parallel=True)
    def _phi_coefficients_nb(q, dt, k, apb, rk, rg, alpha, Cf, Df, Ef, rho_pts):
        n = q.size
        c2 = 0.25 * apb * apb - rk
        npts = rho_pts.size
        for i in prange(n):
            qi = q[i]
            m = -0.5 * apb * qi
            d = c2 * qi * qi - rg * qi
            H2 = d * dt * dt
            zm = m * dt
            Ef[i] = dt * _phi_nb(complex(-alpha * qi * dt), k).real
            if abs(H2) >= CONTOUR_SWITCH * CONTOUR_SWITCH:
                if H2 >= 0:
                    hd = complex(math.sqrt(H2))
                else:
                    hd = complex(0.0, math.sqrt(-H2))
                zp = zm + hd
                zn = zm - hd
                fp = _phi_nb(zp, k)
                fn = _phi_nb(zn, k)
                Cf[i] = dt * (0.5 * (fp + fn)).real
                Df[i] = dt * dt * ((fp - fn) / (zp - zn)).real
            else:
                sc = 0j
                sd = 0j
                for j in range(npts):
                    r = rho_pts[j]
                    fw = _phi_nb(zm + r, k)
                    den = r * r - H2
                    sc += fw * r * r / den
                    sd += fw * r / den
                Cf[i] = dt * (sc / npts).real
                Df[i] = dt * dt * (sd / npts).real

    @njit(cache=True, parallel=True)
    def _apply_block_nb(X, Cf, Df, Ef, xi, q, apb, rho, gk, out):
        ncomp = X.shape[0]
        n = X.shape[1]
        for i in prange(n):
            qi = q[i]
            m = -0.5 * apb * qi
            w = 0j
            for j in range(ncomp - 1):
                w += xi[j, i] * X[1 + j, i]
            th = X[0, i]
            out[0, i] = (Cf[i] - m * Df[i]) * th - 1j * rho * Df[i] * w
            inv_q = 1.0 / qi if qi > 0 else 0.0
            cw = (Cf[i] + m * Df[i] - Ef[i]) * inv_q
            ct = -1j * gk[i] * Df[i]
            for j in range(ncomp - 1):
                out[1 + j, i] = Ef[i] * X[1 + j, i] + xi[j, i] * (cw * w + ct * th)


# -- dispatch ----------------------------------------------------------------


def exp_coefficients(q, t, apb, rk, rg, alpha, use_numba=None):
    use_numba = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    q = np.asarray(q, dtype=float)
    if not use_numba:
        return exp_coefficients_numpy(q, float(t), apb, rk, rg, alpha)
    qf = np.ascontiguousarray(q).ravel()
    C = np.empty_like(qf)
    D = np.empty_like(qf)
    E = np.empty_like(qf)
    _exp_coefficients_nb(qf, float(t), float(apb), float(rk), float(rg), float(alpha), C, D, E)
    return C.reshape(q.shape), D.reshape(q.shape), E.reshape(q.shape)


def phi_coefficients(q, dt, k, apb, rk, rg, alpha, use_numba=None):
    use_numba = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    q = np.asarray(q, dtype=float)
    if not use_numba:
        return phi_coefficients_numpy(q, float(dt), k, apb, rk, rg, alpha)
    qf = np.ascontiguousarray(q).ravel()
    Cf = np.empty_like(qf)
    Df = np.empty_like(qf)
    Ef = np.empty_like(qf)
    theta = 2.0 * np.pi * (np.arange(CONTOUR_POINTS) + 0.5) / CONTOUR_POINTS
    rho_pts = CONTOUR_RADIUS * np.exp(1j * theta)
    _phi_coefficients_nb(
        qf, float(dt), int(k), float(apb), float(rk), float(rg), float(alpha), Cf, Df, Ef, rho_pts
    )
    return Cf.reshape(q.shape), Df.reshape(q.shape), Ef.reshape(q.shape)


def apply_block(X, Cf, Df, Ef, xi_full, q, apb, rho, gk, use_numba=None):
    """Structured multiplier application; all per-mode arrays share the field shape."""
    use_numba = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    if not use_numba:
        return apply_block_numpy(X, Cf, Df, Ef, xi_full, q, apb, rho, gk)
    shape = X.shape
    ncomp = shape[0]
    Xf = np.ascontiguousarray(X, dtype=np.complex128).reshape(ncomp, -1)
    xif = np.ascontiguousarray(xi_full, dtype=np.float64).reshape(ncomp - 1, -1)
    out = np.empty_like(Xf)
    _apply_block_nb(
        Xf,
        np.ascontiguousarray(Cf).ravel(),
        np.ascontiguousarray(Df).ravel(),
        np.ascontiguousarray(Ef).ravel(),
        xif,
        np.ascontiguousarray(q, dtype=np.float64).ravel(),
        float(apb),
        float(rho),
        np.ascontiguousarray(gk, dtype=np.float64).ravel(),
        out,
    )
    return out.reshape(shape)
