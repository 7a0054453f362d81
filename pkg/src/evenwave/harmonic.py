"""One-dimensional reduction of the low-energy wave-operator pieces.

For radial ``g`` and ``u`` the pairing ``<g, (G0(l) - G0(-l)) u>`` depends on
``u`` only through the even profile ``M(r)`` of ``conj(g) * u(-.)``. Splitting
the free resolvent with the binomial formula turns the rank-one low-energy
operator ``Z(f x g)`` into a finite sum of operators ``W_jk`` whose kernels
``K_jk u(rho)`` are one-dimensional oscillatory integrals in ``lambda``.

Conventions
-----------
* ``alpha = m - 7/2`` is the Laguerre exponent in the ``K_jk`` kernels
  (``alpha - j`` on the ``s`` side, ``alpha - k`` on the ``t`` side).
* Hilbert transform ``H f(x) = p.v. (1/pi) int f(y) / (x - y) dy``, Fourier
  multiplier ``-i sign(xi)``, so ``H H = -I``. The projection onto positive
  frequencies is ``(I + iH) / 2``.
* ``Phi~`` is :meth:`evenwave.waveop.CutoffPair.phi_tilde`, supported in
  ``[0, 2 lambda0]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.integrate import cumulative_trapezoid
from scipy.signal import fftconvolve
from scipy.special import gamma, roots_genlaguerre, roots_legendre

from .errors import ConvergenceError, DomainError, GridMismatchError
from .radial import RadialFunction, reduce_kernel
from .resolvent import _jtilde, g0_reduced, static_constant
from .waveop import CutoffPair, _g0_columns as _g0_cols, _support

__all__ = [
    "Profile1D",
    "WeightReport",
    "symmetric_grid",
    "spherical_average",
    "pairing_constant",
    "printed_pairing_constant",
    "pairing",
    "pairing_oracle",
    "kjk_values",
    "kjk",
    "kjk_parts",
    "cjk",
    "f_profile",
    "k3_direct",
    "k3_hilbert",
    "k3_identity",
    "tjk",
    "tjk_lattice",
    "tjk_bound_check",
    "TjkBoundReport",
    "boundary_slope",
    "tjk_boundary_piece",
    "hilbert",
    "hardy_max",
    "ap_admissible",
    "weighted_opnorm_probe",
    "decay_check",
    "wjk_apply",
    "wsm_apply",
    "z_direct",
    "gaussian_pairing",
    "wsm_norm_scan",
    "mest_ratio",
]


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True, eq=False)
class Profile1D:
    """Samples on a uniform grid ``x_k = k h``, ``k = -K..K``.

    Attributes
    ----------
    x : ndarray
        Symmetric uniform grid.
    values : ndarray
        Complex samples.
    even : bool
        When true the samples are checked to satisfy ``f(x) = f(-x)`` to 1e-10.
    m : int, optional
        Space dimension of the radial problem the profile came from.
    """

    x: np.ndarray
    values: np.ndarray
    even: bool = False
    m: int | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size < 3 or x.size % 2 == 0:
            raise GridMismatchError("profile grid needs an odd number (>= 3) of points")
        h = x[1] - x[0]
        if h <= 0 or np.max(np.abs(np.diff(x) - h)) > 1e-9 * h:
            raise GridMismatchError("profile grid is not uniform and increasing")
        if np.max(np.abs(x + x[::-1])) > 1e-9 * max(1.0, x[-1]):
            raise GridMismatchError("profile grid is not symmetric about 0")
        if self.values.shape != x.shape:
            raise GridMismatchError("profile values do not match the grid")
        if self.even:
            dev = np.max(np.abs(self.values - self.values[::-1]))
            if dev > 1e-10:
                raise DomainError(f"profile claimed even but deviates by {dev:.2e}")

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    @property
    def half(self):
        """Index ``K`` of the point ``x = 0``."""
        return self.x.size // 2

    def integral(self, weight=None):
        """Trapezoid value of ``int f(x) weight(x) dx``."""
        v = self.values if weight is None else self.values * weight
        return complex(np.trapezoid(v, dx=self.h))


def symmetric_grid(h, count):
    """``x_k = k h`` for ``k = -count..count``."""
    return h * np.arange(-count, count + 1, dtype=float)


def _even_spline(func):
    """Cubic spline of a radial function, zero beyond ``rmax``."""
    g = func.grid
    r = np.concatenate([-g.nodes[::-1], [0.0], g.nodes])
    v0 = func.samples[0] + (func.samples[0] - func.samples[1]) / 3.0
    v = np.concatenate([func.samples[::-1], [v0], func.samples])
    re = CubicSpline(r, v.real)
    im = CubicSpline(r, v.imag)
    rmax = g.rmax

    def prof(d):
        d = np.asarray(d, dtype=float)
        out = re(d) + 1j * im(d)
        return np.where(d <= rmax, out, 0.0)

    return prof


def spherical_average(g, u, out_count=None):
    """Profile ``M(r)`` of ``conj(g) * u(-.)`` at ``|x| = r``, extended evenly.

    For radial functions the convolution is radial, so its spherical average
    is the function itself. It is computed by the angular reduction
    ``M(r) = int_0^inf conj(g(s)) kappa_u(r, s) s^{m-1} ds`` on the nodes of
    ``g``'s grid, with ``M(0) = int conj(g) u``.

    Parameters
    ----------
    g : RadialFunction
    u : RadialFunction or callable
        A callable is used as an exact radial profile, a sampled function
        through an even cubic spline (zero beyond ``rmax``).
    out_count : int, optional
        Number of positive grid points kept (default: all nodes of the grid).

    Returns
    -------
    Profile1D
        Even profile on ``x_k = k h``.
    """
    grid = g.grid
    if isinstance(u, RadialFunction):
        if not grid.same_as(u.grid):
            raise GridMismatchError("g and u live on different grids")
        prof = _even_spline(u)
        u_nodes = u.samples
    else:
        prof = u
        u_nodes = np.asarray(u(grid.nodes), dtype=complex)
    gb = np.conj(g.samples) * grid.measure
    if not np.any(u_nodes) or not np.any(gb):
        pos = np.zeros(grid.n, dtype=complex)
        m0 = 0.0j
    else:
        K = reduce_kernel(prof, grid)
        pos = K.kernel @ gb
        m0 = grid.sphere * np.sum(gb * u_nodes)
    n = grid.n if out_count is None else int(out_count)
    if n > grid.n:
        pos = np.concatenate([pos, np.zeros(n - grid.n, dtype=complex)])
    pos = pos[:n]
    vals = np.concatenate([pos[::-1], [m0], pos])
    return Profile1D(symmetric_grid(grid.h, n), vals, even=True, m=grid.m)


# ---------------------------------------------------------------------------
# quadrature helpers

_RULES = {}


def _laguerre(n, alpha):
    key = (n, float(alpha))
    if key not in _RULES:
        _RULES[key] = roots_genlaguerre(n, alpha)
    return _RULES[key]


def _lam_rule(cut, nodes):
    """Gauss-Legendre on ``[0, lambda0]`` and ``[lambda0, 2 lambda0]``."""
    half = max(nodes // 2, 2)
    x, w = roots_legendre(half)
    l0 = cut.lambda0
    lam = np.concatenate([0.5 * l0 * (x + 1.0), l0 + 0.5 * l0 * (x + 1.0)])
    wt = np.concatenate([0.5 * l0 * w, 0.5 * l0 * w])
    return lam, wt * cut.phi_tilde(lam)


def _alpha(m):
    return m - 3.5


def _n_binom(m):
    return (m - 4) // 2


def _check_index(m, j, k):
    n = _n_binom(m)
    if not (0 <= j <= n and 0 <= k <= n) or int(j) != j or int(k) != k:
        raise DomainError(f"indices (j, k) = ({j}, {k}) outside 0..{n}")


# ---------------------------------------------------------------------------
# pairing identity


def pairing_constant(m):
    """``-1 / (m-2)!``, the constant for which the pairing identity holds."""
    return -1.0 / factorial(m - 2)


def printed_pairing_constant(m):
    """``-2^{(m-4)/2} / (m-3)!``, the printed value (reported, not used)."""
    return -(2.0 ** ((m - 4) / 2.0)) / factorial(m - 3)


def pairing_oracle(psi, u, lam):
    """``<psi, (G0(lambda) - G0(-lambda)) u>`` from the reduced resolvent kernels."""
    grid = psi.grid
    if not grid.same_as(u.grid):
        raise GridMismatchError("psi and u live on different grids")
    if lam == 0:
        return 0.0j
    mu = grid.measure
    d = g0_reduced(lam, grid).kernel - g0_reduced(-lam, grid).kernel
    return complex(grid.sphere * (np.conj(psi.samples) * mu) @ (d @ (mu * u.samples)))


def _pairing_value(M, lam, m, nodes):
    nu = (m - 3) / 2.0
    t, w = _laguerre(nodes, nu)
    r = M.x
    base = np.exp(-1j * lam * r) * r * M.values
    inner = (np.power(t[:, None] + 2j * lam * r[None, :], nu) * base[None, :]).sum(axis=1) * M.h
    return complex(pairing_constant(m) * np.sum(w * inner))


def pairing(psi, u, lam, nodes=64, tol=1e-6, M=None):
    """``C int e^{-t} t^nu int_R e^{-i l r} (t + 2 i l r)^nu r M(r) dr dt``.

    ``nu = (m-3)/2``, ``C = -1/(m-2)!`` and ``M`` is the profile of
    ``conj(psi) * u(-.)``. Equals :func:`pairing_oracle`.

    Raises
    ------
    ConvergenceError
        If doubling the Laguerre order changes the value by more than ``tol``
        relative to the larger of the value and the size of the integrand.
    """
    m = psi.grid.m
    if M is None:
        M = spherical_average(psi, u)
    a = _pairing_value(M, lam, m, nodes)
    b = _pairing_value(M, lam, m, 2 * nodes)
    scale = max(abs(b), 1e-300)
    if abs(a - b) > tol * scale and abs(a - b) > 1e-14 * np.sum(np.abs(M.values)) * M.h:
        raise ConvergenceError(f"pairing quadrature not converged: change {abs(a - b) / scale:.2e}")
    return b


# ---------------------------------------------------------------------------
# K_jk kernels


def _s_factor(lam, rho, expo, nodes, sub=False):
    """``int e^{-s} s^expo (s - 2 i lam rho)^{1/2} ds`` on a (lam, rho) mesh."""
    s, w = _laguerre(nodes, expo)
    out = np.empty((lam.size, rho.size), dtype=complex)
    s0 = np.sum(w * np.sqrt(s))
    for i, l in enumerate(lam):
        z = np.sqrt(s[None, :] - 2j * l * rho[:, None])
        out[i] = z @ w
    if sub:
        out -= s0
    return out, s0


def _t_factor(M, lam, expo, power, nodes, mode="full"):
    """``int e^{-t} t^expo int_R e^{-i lam r} F_mode(t, lam r) r^power M dr dt``.

    ``mode`` selects ``F = (t + 2 i lam r)^{1/2}`` (``"full"``), that minus
    ``t^{1/2}`` (``"diff"``) or ``t^{1/2}`` (``"flat"``).
    """
    t, w = _laguerre(nodes, expo)
    r = M.x
    rm = r**power * M.values * M.h
    out = np.empty(lam.size, dtype=complex)
    st = np.sqrt(t)
    for i, l in enumerate(lam):
        ph = np.exp(-1j * l * r) * rm
        if mode == "flat":
            out[i] = np.sum(w * st) * np.sum(ph)
            continue
        z = np.sqrt(t[:, None] + 2j * l * r[None, :])
        if mode == "diff":
            z = z - st[:, None]
        out[i] = w @ (z @ ph)
    return out


def _lam_weight(lam, j, k, a, b):
    if a is None:
        pw = lam ** (j + k - 1.0)
    else:
        pw = lam ** (j + k + 1.0 + a)
    if b:
        pw = pw * np.log(lam) ** b
    return pw


def _kjk_raw(M, j, k, cut, rho, m, nodes_ts, nodes_lam, a=None, b=0):
    lam, wl = _lam_rule(cut, nodes_lam)
    al = _alpha(m)
    S, _ = _s_factor(lam, rho, al - j, nodes_ts)
    T = _t_factor(M, lam, al - k, k + 1, nodes_ts)
    c = wl * _lam_weight(lam, j, k, a, b) * T
    ph = np.exp(1j * np.outer(rho, lam))
    return rho**j * ((ph * S.T) @ c)


def kjk_values(M, j, k, cut, rho, nodes_ts=64, nodes_lam=256, a=None, b=0, check=False, tol=1e-6):
    """``K_jk u(rho)`` at arbitrary points by nested quadrature.

    ``K_jk u(rho) = rho^j int_0^inf e^{i l rho} l^{j+k-1} Phi~(l) S_j(l, rho) T_k(l) dl``
    with ``S_j = int e^{-s} s^{alpha-j} (s - 2 i l rho)^{1/2} ds`` and
    ``T_k = int e^{-t} t^{alpha-k} int_R e^{-i l r} (t + 2 i l r)^{1/2} r^{k+1} M dr dt``.
    With ``a`` given the weight ``l^{j+k-1}`` becomes ``l^{j+k+1+a} (log l)^b``.

    Parameters
    ----------
    M : Profile1D
        Even profile.
    j, k : int
        Indices in ``0..(m-4)/2``.
    cut : CutoffPair
    rho : array_like
    check : bool
        Repeat with doubled ``lambda`` and Laguerre orders and raise
        :class:`ConvergenceError` when the relative change exceeds ``tol``.
    """
    m = M.m
    if m is None:
        raise DomainError("profile carries no dimension; build it with spherical_average")
    _check_index(m, j, k)
    rho = np.asarray(rho, dtype=float)
    if not np.any(M.values):
        return np.zeros(rho.shape, dtype=complex)
    out = _kjk_raw(M, j, k, cut, rho.ravel(), m, nodes_ts, nodes_lam, a, b)
    if check:
        fine = _kjk_raw(M, j, k, cut, rho.ravel(), m, 2 * nodes_ts, 2 * nodes_lam, a, b)
        err = np.max(np.abs(fine - out)) / max(np.max(np.abs(fine)), 1e-300)
        if err > tol:
            raise ConvergenceError(f"K_{j}{k} quadrature change {err:.2e} exceeds {tol:.0e}")
        out = fine
    return out.reshape(rho.shape)


def kjk_parts(M, cut, rho, nodes_ts=64, nodes_lam=256):
    """The three pieces ``K1, K2, K3`` of ``K_00``.

    ``(s - 2ilr)^{1/2}(t + 2ilr)^{1/2}`` is split as
    ``(s-..)^{1/2}((t+..)^{1/2} - t^{1/2}) + ((s-..)^{1/2} - s^{1/2}) t^{1/2} + s^{1/2} t^{1/2}``.
    Each piece vanishes to first order at ``lambda = 0``, which absorbs the
    ``1/lambda``. ``K3`` is the Hilbert-transform piece (see :func:`k3_hilbert`).
    """
    m = M.m
    rho = np.asarray(rho, dtype=float)
    lam, wl = _lam_rule(cut, nodes_lam)
    al = _alpha(m)
    S, s0 = _s_factor(lam, rho, al, nodes_ts)
    T1 = _t_factor(M, lam, al, 1, nodes_ts, "diff")
    T2 = _t_factor(M, lam, al, 1, nodes_ts, "flat")
    ph = np.exp(1j * np.outer(rho, lam)) * (wl / lam)[None, :]
    k1 = (ph * S.T) @ T1
    k2 = (ph * (S.T - s0)) @ T2
    k3 = s0 * (ph @ T2)
    return k1, k2, k3


def kjk(M, j, k, cut, rho=None, **kw):
    """``K_jk u`` as a :class:`Profile1D` (``j = k = 0`` via :func:`kjk_parts`)."""
    x = M.x if rho is None else np.asarray(rho, dtype=float)
    if j == 0 and k == 0 and kw.get("a") is None:
        _check_index(M.m, 0, 0)
        if not np.any(M.values):
            vals = np.zeros(x.shape, dtype=complex)
        else:
            kw = {key: kw[key] for key in ("nodes_ts", "nodes_lam") if key in kw}
            vals = sum(kjk_parts(M, cut, x, **kw))
    else:
        vals = kjk_values(M, j, k, cut, x, **kw)
    return Profile1D(x, vals)


def cjk(j, k, m):
    """Constant of ``W_jk`` in ``Z(f x g) = sum_jk C_jk W_jk``.

    ``Gamma(m/2-1) / (4 pi^{m/2} Gamma(m-2)) * C * binom(n,j) binom(n,k) (-2i)^j (2i)^k``
    with ``n = (m-4)/2`` and ``C`` the pairing constant.
    """
    _check_index(m, j, k)
    n = _n_binom(m)
    c0 = static_constant(m) / gamma(m - 2.0)
    return c0 * pairing_constant(m) * comb(n, j) * comb(n, k) * (-2j) ** j * (2j) ** k


# ---------------------------------------------------------------------------
# K3 and the Hilbert transform


def f_profile(M, form="derived"):
    """``F(v) = int_v^inf r M dr`` for ``v > 0`` and ``-int_-inf^v r M dr`` for ``v < 0``.

    ``form="printed"`` multiplies by ``v`` (the printed variant, which vanishes
    at 0 but does not satisfy the K3 identity; kept for comparison).
    """
    cum = cumulative_trapezoid(M.x * M.values, dx=M.h, initial=0.0)
    total = cum[-1]
    K = M.half
    F = np.where(M.x > 0, total - cum, -cum)
    F[K] = total - cum[K]
    if form == "printed":
        F = M.x * F
    elif form != "derived":
        raise DomainError(f"unknown form {form!r}")
    return Profile1D(M.x, F.astype(complex), m=M.m)


def _k3_const(m):
    return gamma(_alpha(m) + 1.5) ** 2


def k3_direct(M, cut, rho=None, nodes_lam=256):
    """``K3(rho) = C3 int Phi~(l) e^{i l rho} l^{-1} int_R e^{-i l r} r M(r) dr dl``.

    ``C3 = Gamma(alpha + 3/2)^2``, ``alpha = m - 7/2``.
    """
    x = M.x if rho is None else np.asarray(rho, dtype=float)
    lam, wl = _lam_rule(cut, nodes_lam)
    R = np.exp(-1j * np.outer(lam, M.x)) @ (M.x * M.values) * M.h
    return _k3_const(M.m) * (np.exp(1j * np.outer(x, lam)) @ (wl * R / lam))


def _phi_kernel(cut, x, nodes=512):
    # inverse Fourier transform of the even extension of Phi~
    lam, wl = _lam_rule(cut, nodes)
    return (np.cos(np.outer(x, lam)) @ wl) / np.pi


def k3_hilbert(M, cut, pad=16, form="derived"):
    """``K3`` through ``-2 pi i C3 [(I + iH)/2 (phi * F)]`` on the profile grid.

    ``phi`` has Fourier transform ``Phi~(|xi|)``. The convolution and the
    Hilbert transform are evaluated on a grid ``pad`` times longer than the
    profile grid, so that the slowly decaying ``phi * F`` is not truncated
    near the points of interest.
    """
    K = M.half
    Kx = pad * K
    F = f_profile(M, form).values
    xs = M.h * np.arange(-(Kx + K), Kx + K + 1)
    phi = _phi_kernel(cut, xs)
    g = M.h * fftconvolve(phi, F, mode="valid")
    ext = Profile1D(M.h * np.arange(-Kx, Kx + 1), g)
    Hg = hilbert(ext).values
    mid = slice(Kx - K, Kx + K + 1)
    return -2j * np.pi * _k3_const(M.m) * 0.5 * (g[mid] + 1j * Hg[mid])


def k3_identity(M, cut, pad=16, form="derived"):
    """Relative ``L^2`` difference between :func:`k3_direct` and :func:`k3_hilbert`."""
    a = k3_direct(M, cut)
    b = k3_hilbert(M, cut, pad, form)
    den = np.linalg.norm(a)
    if den == 0:
        return float(np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / den)


def _hilbert_kernel(n):
    k = np.arange(-(n - 1), n)
    ker = np.zeros(k.size)
    odd = k % 2 != 0
    ker[odd] = 2.0 / (np.pi * k[odd])
    return ker


def hilbert(f):
    """Hilbert transform of a sampled decaying function.

    Uses the discrete kernel ``2 / (pi k)`` on odd offsets, exact for
    band-limited samples; values outside the grid are taken as zero.
    """
    n = f.values.size
    out = fftconvolve(f.values, _hilbert_kernel(n), mode="same")
    if np.isrealobj(f.values):
        out = out.real
    return Profile1D(f.x, np.asarray(out, dtype=complex))


def hardy_max(f, chunk=512):
    """Uncentered maximal function ``sup_{I ni x} |I|^{-1} int_I |f|``.

    Intervals run between grid points; averages use the trapezoid rule on
    the piecewise-linear interpolant, and the degenerate interval gives ``|f(x)|``.
    """
    a = np.abs(f.values)
    n = a.size
    C = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * f.h)])
    x = f.x
    best = a.copy()
    idx = np.arange(n)
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(lo + chunk, n))
        with np.errstate(divide="ignore", invalid="ignore"):
            A = (C[None, :] - C[rows, None]) / (x[None, :] - x[rows, None])
        A[idx[None, :] <= rows[:, None]] = -np.inf
        # R[a, i] = max_{b >= i} A[a, b]
        R = np.maximum.accumulate(A[:, ::-1], axis=1)[:, ::-1]
        # only intervals [a, b] with a <= i; b > a is built in
        R[idx[None, :] < rows[:, None]] = -np.inf
        best = np.maximum(best, R.max(axis=0))
    return Profile1D(f.x, best.astype(complex))


# ---------------------------------------------------------------------------
# A_p weights


@dataclass(frozen=True, eq=False)
class WeightReport:
    """Weighted operator-norm proxies for ``|x|^a`` on ``L^p(R)``.

    Attributes
    ----------
    a, p : Fraction
    op : str
    thetas : ndarray
        Dilation factors.
    family_ratios : ndarray
        ``||op f_theta|| / ||f_theta||`` in ``L^p(|x|^a dx)``.
    admissible : bool
        Exact verdict ``-1 < a < p - 1``.
    """

    a: Fraction
    p: Fraction
    op: str
    thetas: np.ndarray
    family_ratios: np.ndarray
    admissible: bool

    @property
    def max_ratio(self):
        return float(np.max(self.family_ratios))

    @property
    def variation(self):
        return float(np.max(self.family_ratios) / np.min(self.family_ratios))


def _frac(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    return Fraction(float(v))


def ap_admissible(a, p):
    """Exact test of ``-1 < a < p - 1`` on rationals.

    Floats are converted exactly (``Fraction(0.1)`` is the binary value),
    strings such as ``"3/2"`` parsed as rationals.

    Raises
    ------
    DomainError
        If ``p <= 1``.
    """
    a = _frac(a)
    p = _frac(p)
    if p <= 1:
        raise DomainError(f"p must exceed 1, got {p}")
    return -1 < a < p - 1


def _log_kernels(c, dxi, n):
    """Sampled kernels of the Hilbert transform in log coordinates."""
    k = np.arange(-(n - 1), n)
    z = k * dxi
    pos = z > 0
    neg = z < 0
    kpp_c = np.zeros(z.size)
    kpm = np.zeros(z.size)
    # e^{cz}/(e^z - 1) and e^{cz}/(e^z + 1), written to avoid overflow
    kpp_c[pos] = np.exp((c - 1.0) * z[pos]) / -np.expm1(-z[pos])
    kpp_c[neg] = np.exp(c * z[neg]) / np.expm1(z[neg])
    kpm[pos] = np.exp((c - 1.0) * z[pos]) / (1.0 + np.exp(-z[pos]))
    kpm[~pos] = np.exp(c * z[~pos]) / (1.0 + np.exp(z[~pos]))
    nz = k != 0
    # smooth remainder of K++ after removing 1/(pi z), times dxi
    kpp = np.zeros(z.size)
    kpp[nz] = dxi * (kpp_c[nz] / np.pi - 1.0 / (np.pi * z[nz]))
    kpp[~nz] = dxi * (c - 0.5) / np.pi
    kpp += _hilbert_kernel(n)
    return kpp, kpm * dxi / np.pi


def weighted_opnorm_probe(op, a, p, family_size=13, width=4.0, dxi=None, tail=30.0):
    """Norm ratios of ``op`` on ``L^p(|x|^a dx)`` over dilates of one function.

    The probe works in logarithmic coordinates ``x = +-e^xi``, where
    ``g_+-(xi) = f(+-e^xi) e^{xi (a+1)/p}`` is an isometry onto ``L^p(dxi)^2``
    and dilations ``f(theta x)`` become translations. There the Hilbert
    transform is a convolution with
    ``K++(z) = e^{cz} / (pi (e^z - 1))`` (principal value) and
    ``K+-(z) = e^{cz} / (pi (e^z + 1))``, ``c = (a+1)/p``; both decay exactly
    when ``-1 < a < p - 1``. ``op="max"`` uses the one-sided average over
    ``[0, x]``, a pointwise lower bound for the uncentered maximal function,
    with kernel ``e^{-(1-c) z}`` on ``z > 0``.

    The base function is even, ``g_+ = g_- =`` a Gaussian of width
    ``width / rate`` in ``xi`` where ``rate = min(c, 1 - c)`` (0.05 when the
    weight is not admissible and the kernels do not decay). Dilates use
    ``theta = 2^{-6..6}`` (``family_size`` values). The ``xi`` spacing
    defaults to 0.1, or 0.25 on domains longer than ``10^4``.

    Raises
    ------
    DomainError
        If ``p <= 1`` or ``op`` is unknown.
    """
    af, pf = _frac(a), _frac(p)
    admissible = ap_admissible(af, pf)
    if op not in ("hilbert", "max"):
        raise DomainError(f"unknown operator {op!r}")
    a, p = float(af), float(pf)
    c = (a + 1.0) / p
    rate = min(c, 1.0 - c) if admissible else 0.05
    sigma = width / rate
    half = 6.0 * sigma + tail / rate + 10.0
    if dxi is None:
        dxi = 0.1 if half < 1e4 else 0.25
    n = 2 * int(np.ceil(half / dxi)) + 1
    xi = dxi * (np.arange(n) - n // 2)
    thetas = 2.0 ** np.linspace(-6, 6, family_size)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))

    def spec(ker):
        # circular embedding of a kernel indexed -(n-1)..(n-1)
        buf = np.zeros(nfft)
        buf[: n] = ker[n - 1:]
        buf[nfft - (n - 1):] = ker[: n - 1]
        return np.fft.rfft(buf)

    if op == "hilbert":
        kpp, kpm = _log_kernels(c, dxi, n)
        Spp, Spm = spec(kpp), spec(kpm)
    else:
        z = dxi * np.arange(-(n - 1), n)
        kh = np.where(z > 0, np.exp(-(1.0 - c) * np.clip(z, 0, None)), 0.0) * dxi
        kh[n - 1] = 0.5 * dxi
        Sh = spec(kh)

    def lp(v):
        a = np.abs(v)
        top = a.max()
        if top == 0 or not np.isfinite(top):
            return float(top)
        return float(top * (np.sum((a / top) ** p) * dxi) ** (1.0 / p))

    ratios = []
    for th in thetas:
        gp = np.exp(-0.5 * ((xi + np.log(th)) / sigma) ** 2) * th ** (-c)
        gm = gp
        Gp = np.fft.rfft(gp, nfft)
        Gm = np.fft.rfft(gm, nfft)
        if op == "hilbert":
            op_p = np.fft.irfft(Spp * Gp + Spm * Gm, nfft)[:n]
            op_m = np.fft.irfft(-Spm * Gp - Spp * Gm, nfft)[:n]
        else:
            op_p = np.fft.irfft(Sh * np.fft.rfft(np.abs(gp), nfft), nfft)[:n]
            op_m = np.fft.irfft(Sh * np.fft.rfft(np.abs(gm), nfft), nfft)[:n]
        num = np.hypot(lp(op_p), lp(op_m)) if p == 2 else (lp(op_p) ** p + lp(op_m) ** p) ** (1.0 / p)
        den = (lp(gp) ** p + lp(gm) ** p) ** (1.0 / p)
        ratios.append(num / den)
    return WeightReport(af, pf, op, thetas, np.array(ratios), admissible)


# ---------------------------------------------------------------------------
# T_jk kernels


def _tjk_parts(rho, r, j, k, m, cut, nodes_ts, nodes_lam, variant):
    lam, wl = _lam_rule(cut, nodes_lam)
    al = _alpha(m)
    S, _ = _s_factor(lam, rho, al - j, nodes_ts)
    t, w = _laguerre(nodes_ts, al - k)
    Tt = np.empty((lam.size, r.size), dtype=complex)
    for i, l in enumerate(lam):
        Tt[i] = w @ np.sqrt(t[:, None] + 2j * l * r[None, :])
    c = wl * lam ** (j + k - 1.0)
    A = (np.exp(1j * np.outer(rho, lam)) * S.T) * c[None, :]
    B = np.exp(-1j * np.outer(lam, r)) * Tt
    return A @ B  # without rho^j r^{k+1}


def tjk(rho, r, j, k, cut=None, m=6, nodes_ts=64, nodes_lam=256):
    """``T_jk(rho, r)`` on the product of two point sets.

    ``T_jk = rho^j r^{k+1} int_0^inf e^{i l (rho - r)} l^{j+k-1} Phi~(l)
    S_j(l, rho) Tt_k(l, r) dl`` where ``S_j`` is as in :func:`kjk_values` and
    ``Tt_k = int e^{-t} t^{alpha-k} (t + 2 i l r)^{1/2} dt``, so that
    ``K_jk u(rho) = int_R T_jk(rho, r) M(r) dr``.

    Raises
    ------
    DomainError
        If ``j + k < 1`` or an index exceeds ``(m-4)/2``.
    """
    cut = cut or CutoffPair()
    _check_index(m, j, k)
    if j + k < 1:
        raise DomainError("T_jk needs j + k >= 1")
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    core = _tjk_parts(rho, r, j, k, m, cut, nodes_ts, nodes_lam, None)
    return rho[:, None] ** j * r[None, :] ** (k + 1) * core


def tjk_lattice(j, k, cut=None, m=6, extent=50.0, step=0.5, variant="t2est", nodes_ts=64, nodes_lam=256):
    """Bound ratios of ``T_jk`` on the lattice ``[0, extent]^2``.

    ``variant="t2est"``:
    ``|T| <r-rho>^{j+k} / (<rho>^{j+1/2} |r|^{k+1} <r>^{1/2})``;
    ``variant="t01"``: ``|T| <r-rho>^2 / (|r|^2 (<rho> + <r>))``.
    The ``r^{k+1}`` factor of ``T`` is cancelled analytically, so the ratio
    is finite at ``r = 0``.
    """
    cut = cut or CutoffPair()
    pts = np.arange(0.0, extent + 0.5 * step, step)
    if variant == "t01":
        if (j, k) != (0, 1):
            raise DomainError("the t01 variant applies to (j, k) = (0, 1)")
    elif variant != "t2est":
        raise DomainError(f"unknown variant {variant!r}")
    _check_index(m, j, k)
    if j + k < 1:
        raise DomainError("T_jk needs j + k >= 1")
    core = np.abs(_tjk_parts(pts, pts, j, k, m, cut, nodes_ts, nodes_lam, variant))
    R = pts[:, None]
    S = pts[None, :]

    def br(x):
        return np.sqrt(1.0 + x**2)

    if variant == "t2est":
        ratio = core * R**j * br(S - R) ** (j + k) / (br(R) ** (j + 0.5) * br(S) ** 0.5)
    else:
        ratio = core * br(S - R) ** 2 / (br(R) + br(S))
    return pts, ratio


@dataclass(frozen=True)
class TjkBoundReport:
    """Sup of a ``T_jk`` bound ratio at two lattice spacings."""

    j: int
    k: int
    variant: str
    max_ratio: float
    max_ratio_fine: float
    finite: bool

    @property
    def stability(self):
        return abs(self.max_ratio_fine / self.max_ratio - 1.0)


def tjk_bound_check(j, k, cut=None, m=6, extent=50.0, step=0.5, variant="t2est"):
    """Run :func:`tjk_lattice` at ``step`` and ``step / 2``."""
    _, a = tjk_lattice(j, k, cut, m, extent, step, variant)
    _, b = tjk_lattice(j, k, cut, m, extent, step / 2, variant)
    finite = bool(np.all(np.isfinite(a)) and np.all(np.isfinite(b)))
    return TjkBoundReport(j, k, variant, float(a.max()), float(b.max()), finite)


def tjk_boundary_piece(rho, r, j, k, m, cut, nodes_lam=None):
    """``T_jk`` with its square-root factors frozen at ``lambda = 0``.

    This is the piece that integration by parts assigns to the endpoint
    ``lambda = 0``; pointwise in ``rho`` and ``r``.
    """
    if nodes_lam is None:
        span = np.max(np.abs(np.asarray(rho) - np.asarray(r)))
        nodes_lam = 512 + 2 * int(4 * cut.lambda0 * span)
    lam, wl = _lam_rule(cut, nodes_lam)
    al = _alpha(m)
    c = gamma(al - j + 1.5) * gamma(al - k + 1.5)
    ph = np.exp(1j * np.outer(rho - r, lam)) @ (wl * lam ** (j + k - 1.0))
    return c * rho**j * r ** (k + 1) * ph


def boundary_slope(j, k, cut=None, m=6, base=2.0, distances=None, vary="r", piece="boundary"):
    """Log-log slope along ``r = base + D`` (or ``rho = base + D``) against ``D``.

    ``piece="boundary"`` fits the endpoint piece of ``T_jk``, i.e. the
    ``lambda`` integral with the square-root factors frozen at ``lambda = 0``;
    ``piece="full"`` fits ``T_jk`` itself, whose square-root factors vary on
    the same ``1/D`` scale as the phase, so it is a diagnostic only.

    The default distances run from ``60 / lambda0`` to ``600 / lambda0``; below
    that the third-derivative jumps of ``Phi~`` compete with the endpoint term.

    Returns
    -------
    (measured, predicted)
        Slopes of the numerical values and of ``rho^j r^{k+1} / |r - rho|^{j+k}``.
    """
    cut = cut or CutoffPair()
    _check_index(m, j, k)
    if j + k < 1:
        raise DomainError("T_jk needs j + k >= 1")
    D = np.geomspace(60.0, 600.0, 12) / cut.lambda0 if distances is None else np.asarray(distances, dtype=float)
    if vary == "r":
        rho, r = np.full_like(D, base), base + D
    elif vary == "rho":
        rho, r = base + D, np.full_like(D, base)
    else:
        raise DomainError(f"unknown direction {vary!r}")
    if piece == "boundary":
        T = np.abs(tjk_boundary_piece(rho, r, j, k, m, cut))
    elif piece == "full":
        T = np.abs(np.array([tjk([a], [b], j, k, cut, m)[0, 0] for a, b in zip(rho, r)]))
    else:
        raise DomainError(f"unknown piece {piece!r}")
    pred = rho**j * r ** (k + 1) / D ** (j + k)
    s_meas = np.polyfit(np.log(D), np.log(T), 1)[0]
    s_pred = np.polyfit(np.log(D), np.log(pred), 1)[0]
    return float(s_meas), float(s_pred)


# ---------------------------------------------------------------------------
# W_jk and Z


def decay_check(f, eps=0.1):
    """True when ``|f| <x>^{m+eps}`` does not grow toward the edge of the grid."""
    g = f.grid
    w = np.abs(f.samples) * (1.0 + g.nodes**2) ** ((g.m + eps) / 2.0)
    inner = g.nodes <= g.rmax / 2
    return bool(w[~inner].max() <= max(w[inner].max(), 1e-300) * (1 + 1e-9))


def _outer(f, profile):
    """``int f(y) k(|x - y|) dy`` for a radial kernel profile ``k``."""
    K = reduce_kernel(profile, f.grid)
    return RadialFunction(f.grid, K.action @ f.samples)


def _kernel_profile(vals, h, m):
    rho = h * np.arange(vals.size)
    re = CubicSpline(rho, vals.real)
    im = CubicSpline(rho, vals.imag)

    def prof(d):
        d = np.asarray(d, dtype=float)
        with np.errstate(divide="ignore"):
            return (re(d) + 1j * im(d)) * d ** (2.0 - m)

    return prof


def _rho_points(grid):
    n = 2 * grid.n + 2
    return grid.h * np.arange(n)


def wjk_apply(f, g, u, j, k, cut=None, M=None, a=None, b=0, eps=0.1, **kw):
    """``W_jk u(x) = int f(y) K_jk u(|x - y|) |x - y|^{2-m} dy``.

    ``K_jk u`` is built from the profile of ``conj(g) * u(-.)``, tabulated on
    ``[0, 2 rmax]`` and splined; the outer convolution is reduced angularly.

    Raises
    ------
    DomainError
        If ``f`` or ``g`` fail :func:`decay_check`.
    """
    cut = cut or CutoffPair()
    for name, h in (("f", f), ("g", g)):
        if not decay_check(h, eps):
            raise DomainError(f"{name} does not decay like <x>^(-m-{eps})")
    if M is None:
        M = spherical_average(g, u)
    rho = _rho_points(f.grid)
    if j == 0 and k == 0 and a is None:
        vals = sum(kjk_parts(M, cut, rho, **kw))
    else:
        vals = kjk_values(M, j, k, cut, rho, a=a, b=b, **kw)
    if not np.any(vals):
        return f.grid.function(np.zeros(f.grid.n))
    return _outer(f, _kernel_profile(vals, f.grid.h, f.grid.m))


def wsm_apply(f, g, u, cut=None, a=None, b=0, **kw):
    """``sum_jk C_jk W_jk u``, equal to :func:`z_direct` (one outer reduction)."""
    cut = cut or CutoffPair()
    m = f.grid.m
    M = spherical_average(g, u)
    rho = _rho_points(f.grid)
    n = _n_binom(m)
    vals = np.zeros(rho.size, dtype=complex)
    for j in range(n + 1):
        for k in range(n + 1):
            if j == 0 and k == 0 and a is None:
                kv = sum(kjk_parts(M, cut, rho, **kw))
            else:
                kv = kjk_values(M, j, k, cut, rho, a=a, b=b, **kw)
            vals += cjk(j, k, m) * kv
    if not np.any(vals):
        return f.grid.function(np.zeros(f.grid.n))
    return _outer(f, _kernel_profile(vals, f.grid.h, m))


def _g0_columns(f, lam):
    # G0(l) f for every node l, using only the columns where f is nonzero
    cols = _support(f.samples)
    if cols.size == 0:
        return np.zeros((lam.size, f.grid.n), dtype=complex)
    fs = f.samples[cols]
    return np.array([_g0_cols(l, f.grid, cols) @ fs for l in lam])


def z_direct(f, g, u, cut=None, a=None, b=0, nodes=256, pair=None):
    """``Z u = int_0^inf (G0(l) f) F_{g,u}(l) Phi~(l) w(l) dl``.

    ``w(l) = 1/l`` by default and ``l^{a+1} (log l)^b`` when ``a`` is given;
    ``F_{g,u}(l) = i pi l^{m-2} <g, A(l) u>`` is evaluated in closed form, or
    taken from ``pair(l)`` when supplied.
    """
    cut = cut or CutoffPair()
    grid = f.grid
    m = grid.m
    lam, wl = _lam_rule(cut, nodes)
    if pair is None:
        nu = (m - 2) / 2.0
        mu = grid.measure
        F = np.array([
            1j * np.pi * l ** (m - 2) * grid.sphere
            * np.sum(np.conj(g.samples) * _jtilde(nu, l * grid.nodes) * mu)
            * np.sum(_jtilde(nu, l * grid.nodes) * u.samples * mu)
            for l in lam
        ])
    else:
        F = np.array([pair(l) for l in lam])
    w = 1.0 / lam if a is None else lam ** (a + 1.0)
    if b:
        w = w * np.log(lam) ** b
    cols = _g0_columns(f, lam)
    return RadialFunction(grid, (wl * w * F) @ cols)


def gaussian_pairing(g, theta, m):
    """``l -> i pi l^{m-2} <g, A(l) u_theta>`` for ``u_theta = exp(-theta^2 r^2)``.

    ``<jt(l .), u_theta>`` uses the exact Hankel transform of the Gaussian,
    so the dilate need not be resolved on the grid.
    """
    grid = g.grid
    nu = (m - 2) / 2.0
    mu = grid.measure

    def pair(l):
        gj = grid.sphere * np.sum(np.conj(g.samples) * _jtilde(nu, l * grid.nodes) * mu)
        # int_0^inf jt(l r) e^{-theta^2 r^2} r^{m-1} dr
        uj = np.exp(-(l**2) / (4 * theta**2)) / (2.0 * (2 * theta**2) ** (m / 2.0))
        return 1j * np.pi * l ** (m - 2) * gj * uj

    return pair


def _gauss_lp(theta, p, m):
    # ||exp(-theta^2 |x|^2)||_p on R^m
    return (np.pi / (p * theta**2)) ** (m / (2.0 * p))


def wsm_norm_scan(f, g, p_list, thetas=None, cut=None, nodes=256):
    """``||Z u_theta||_p / ||u_theta||_p`` for ``u_theta = exp(-theta^2 r^2)``.

    ``Z`` is the assembled operator ``sum C_jk W_jk`` evaluated through
    :func:`z_direct`; ``u_theta`` enters only through its exact pairing, so
    the whole family ``theta = 2^{-6..6}`` is covered. The output norm is
    taken over the grid ball.

    Returns
    -------
    dict
        ``{"theta": array, p: array of ratios, ...}``.
    """
    from .radial import lp_norm

    cut = cut or CutoffPair()
    thetas = 2.0 ** np.arange(-6, 7) if thetas is None else np.asarray(thetas, dtype=float)
    m = f.grid.m
    lam, wl = _lam_rule(cut, nodes)
    cols = _g0_columns(f, lam)
    out = {"theta": thetas}
    zs = []
    for th in thetas:
        pair = gaussian_pairing(g, th, m)
        F = np.array([pair(l) for l in lam])
        zs.append(RadialFunction(f.grid, (wl * F / lam) @ cols))
    for p in p_list:
        out[p] = np.array([lp_norm(z, p) / _gauss_lp(th, p, m) for z, th in zip(zs, thetas)])
    return out


def mest_ratio(g, u, p):
    """``int_R <r> |M(r)| dr / ||u||_p`` for the profile of ``conj(g) * u(-.)``."""
    from .radial import lp_norm

    M = spherical_average(g, u)
    num = float(np.trapezoid(np.sqrt(1.0 + M.x**2) * np.abs(M.values), dx=M.h))
    return num / lp_norm(u, p)
