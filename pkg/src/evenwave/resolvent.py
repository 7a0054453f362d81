"""Free resolvent kernels, the spectral density A(lambda) and threshold expansions.

Conventions
-----------
``G0(lambda)`` is the boundary value of ``(-Delta - lambda^2)^{-1}`` from the
upper half plane, so ``lambda > 0`` is outgoing and
``G0(-lambda) = conj(G0(lambda))`` for real kernels. With ``nu = (m-2)/2``

    G0(lambda) - G0(-lambda) = i pi lambda^{m-2} A(lambda),

where ``A(lambda)`` has kernel ``(2 pi)^{-m} int_S exp(i lambda w.z) dw``.

Reduced kernels are available in closed form (``method="closed"``, the
``l = 0`` partial wave) and through the generic angular quadrature of
:func:`evenwave.radial.reduce_kernel` (``method="angular"``).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import factorial, gamma, hankel1, hyp2f1, jv, roots_genlaguerre, roots_legendre

from .errors import ConvergenceError, DomainError
from .radial import ReducedKernel, reduce_kernel, sphere_area, weighted_opnorm

__all__ = [
    "ResolventPoint",
    "ExpansionReport",
    "static_constant",
    "printed_cm",
    "cm_ratio",
    "g0_point",
    "g0_hankel",
    "h_beta",
    "a_point",
    "a_bessel",
    "printed_a0_constant",
    "g0_reduced",
    "a_reduced",
    "inverse_laplacian_constant",
    "inverse_laplacian_power",
    "sigma0",
    "taylor_coefficients",
    "jk_remainder",
    "expansion_remainder",
    "expansion_check",
]


@dataclass(frozen=True)
class ResolventPoint:
    """One value of the free resolvent kernel ``G0(lambda, x)`` at ``|x| = rho``."""

    lam: float
    rho: float
    value: complex


@dataclass(frozen=True)
class ExpansionReport:
    """Remainder norms of the low-energy expansion of ``G0``.

    Attributes
    ----------
    lambdas : ndarray
    remainder_norms : ndarray
        Weighted norms of ``lambda^{m-2} F(lambda)``.
    fitted_exponent : float
        Slope of ``log remainder`` against ``log lambda``.
    evenness_defect : float
        ``max ||F(lambda) - F(-lambda)|| / ||F(lambda)||`` over the samples.
    with_a_term : bool
        Whether the ``lambda^{m-2}(i pi/2 - log lambda) A`` term was subtracted.
    """

    lambdas: np.ndarray
    remainder_norms: np.ndarray
    fitted_exponent: float
    evenness_defect: float
    with_a_term: bool = True


def _nu_t(m):
    return (m - 3) / 2.0


def static_constant(m):
    """Coefficient of ``|x|^{2-m}`` in the static Green function of ``-Delta``."""
    return gamma(m / 2.0 - 1.0) / (4.0 * np.pi ** (m / 2.0))


def _g0_norm(m, nodes=None):
    # lambda=0 value of the t-integral is Gamma(m-2) 2^{-(m-3)/2}; with a
    # quadrature order the rule's own lambda=0 value is used, which makes the
    # static limit exact to rounding
    if nodes is None:
        return static_constant(m) * 2.0 ** _nu_t(m) / gamma(m - 2.0)
    nu = _nu_t(m)
    t, w = _genlaguerre(nodes, nu)
    return static_constant(m) / np.sum(w * (t / 2.0) ** nu)


def printed_cm(m):
    """The literal prefactor printed with the integral representation of ``G0``."""
    nu = _nu_t(m)
    return 1j * np.exp(-1j * (2 * nu + 1) * np.pi / 4) / (
        2.0 * (2 * np.pi) ** (nu + 1) * gamma(nu + 0.5)
    )


def cm_ratio(m):
    """Ratio of the literal prefactor to the normalized one (not 1; reported only)."""
    return printed_cm(m) / _g0_norm(m)


_GL_CACHE = {}


def _genlaguerre(n, alpha):
    key = (n, alpha)
    if key not in _GL_CACHE:
        _GL_CACHE[key] = roots_genlaguerre(n, alpha)
    return _GL_CACHE[key]


def g0_point(lam, rho, m, nodes=64):
    """Free resolvent kernel ``G0(lambda, x)`` at ``|x| = rho``.

    Evaluates ``c rho^{2-m} e^{i lambda rho} int_0^inf e^{-t} t^{(m-3)/2}
    (t/2 - i lambda rho)^{(m-3)/2} dt`` by generalized Gauss-Laguerre
    quadrature, with ``c`` fixed by the static limit
    ``G0(0, x) = Gamma(m/2-1) / (4 pi^{m/2}) |x|^{2-m}``.

    Parameters
    ----------
    lam : float or ndarray
        Real spectral parameter.
    rho : float or ndarray
        Distance, positive.
    m : int
        Even dimension.
    nodes : int
        Gauss-Laguerre order.
    """
    lam = np.asarray(lam, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise DomainError("rho must be positive")
    nu = _nu_t(m)
    t, w = _genlaguerre(nodes, nu)
    z = (lam * rho)[..., None]
    integral = np.sum(w * (t / 2.0 - 1j * z) ** nu, axis=-1)
    val = _g0_norm(m, nodes) * rho ** (2.0 - m) * np.exp(1j * lam * rho) * integral
    return val[()] if val.ndim == 0 else val


def g0_hankel(lam, rho, m):
    """Hankel-function form ``(i/4) (lambda / (2 pi rho))^nu H^1_nu(lambda rho)``.

    Valid for ``lambda > 0``; negative ``lambda`` uses the reflection
    ``G0(-lambda) = conj G0(lambda)``. Serves as an independent oracle.
    """
    lam = np.asarray(lam, dtype=float)
    rho = np.asarray(rho, dtype=float)
    nu = (m - 2) / 2.0
    a = np.abs(lam)
    val = 0.25j * (a / (2 * np.pi * rho)) ** nu * hankel1(nu, a * rho)
    return np.where(lam < 0, np.conj(val), val)


def h_beta(s, beta, m, nodes=64):
    """``H_beta(s) = int_0^inf e^{-t} t^{(m-3)/2} (s + i t / 2)^{(m-3)/2 - beta} dt``.

    Uses generalized Gauss-Laguerre quadrature; when doubling the order
    moves the value by more than ``1e-9`` (small ``s`` with a negative
    power), falls back to adaptive integration.
    """
    from scipy.integrate import quad

    s = float(s)
    if not np.isfinite(s) or s < 0:
        raise DomainError("s must be finite and non-negative")
    nu = _nu_t(m)
    e = nu - beta
    if s == 0.0:
        if nu + e <= -1:
            return complex(np.inf)
        return complex((0.5j) ** e * gamma(nu + e + 1))

    def rule(n):
        t, w = _genlaguerre(n, nu)
        return complex(np.sum(w * (s + 0.5j * t) ** e))

    a, b = rule(nodes), rule(2 * nodes)
    if abs(a - b) <= 1e-9 * max(abs(b), 1e-300):
        return b

    def f(t, part):
        v = np.exp(-t) * t**nu * (s + 0.5j * t) ** e
        return v.real if part == 0 else v.imag

    pts = [s, 10 * s] if s < 1 else None
    re = quad(f, 0, 50 + s, args=(0,), points=pts, limit=400, epsabs=0, epsrel=1e-12)[0]
    im = quad(f, 0, 50 + s, args=(1,), points=pts, limit=400, epsabs=0, epsrel=1e-12)[0]
    re += quad(f, 50 + s, np.inf, args=(0,), limit=200)[0]
    im += quad(f, 50 + s, np.inf, args=(1,), limit=200)[0]
    return complex(re, im)


def a_point(lam, rho, m, nodes=None):
    """Kernel of ``A(lambda)``: ``(2 pi)^{-m} int_S exp(i lambda w.z) dw`` at ``|z| = rho``.

    Computed by the one-dimensional angular integral
    ``|S^{m-2}| int_0^pi cos(|lambda| rho cos t) sin^{m-2} t dt``; even in ``lambda``.
    """
    lam = np.abs(np.asarray(lam, dtype=float))
    rho = np.asarray(rho, dtype=float)
    z = np.broadcast_to(lam * rho, np.broadcast(lam, rho).shape)
    if nodes is None:
        nodes = int(64 + 2 * np.ceil(np.max(z, initial=0.0)))
    x, w = roots_legendre(nodes)
    th = 0.5 * np.pi * (x + 1.0)
    wt = 0.5 * np.pi * w * np.sin(th) ** (m - 2)
    vals = np.cos(z[..., None] * np.cos(th)) @ wt
    out = (2 * np.pi) ** (-m) * sphere_area(m - 1) * vals
    return out[()] if np.ndim(out) == 0 else out


def a_bessel(lam, rho, m):
    """Bessel form ``(2 pi)^{-m/2} J_nu(lambda rho) / (lambda rho)^nu`` of :func:`a_point`."""
    nu = (m - 2) / 2.0
    z = np.abs(np.asarray(lam, dtype=float)) * np.asarray(rho, dtype=float)
    return (2 * np.pi) ** (-m / 2.0) * _jtilde(nu, z)


def printed_a0_constant(m):
    """The printed constant ``(2 pi)^{-m/2} / m!!`` for ``A(0) = c_m 1 (x) 1``."""
    mm = 1
    for k in range(m, 0, -2):
        mm *= k
    return (2 * np.pi) ** (-m / 2.0) / mm


def _jtilde(nu, z):
    """``J_nu(z) / z^nu`` with its limit ``1 / (2^nu Gamma(nu + 1))`` at 0."""
    z = np.asarray(z, dtype=float)
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    big = jv(nu, zs) / zs**nu
    c0 = 1.0 / (2.0**nu * gamma(nu + 1.0))
    series = c0 * (1.0 - z**2 / (4.0 * (nu + 1.0)) + z**4 / (32.0 * (nu + 1.0) * (nu + 2.0)))
    return np.where(small, series, big)


def _htilde(nu, z):
    """``H^1_nu(z) / z^nu`` for ``z > 0``."""
    return hankel1(nu, z) / z**nu


def g0_reduced(lam, grid, method="closed", nodes=64):
    """Reduced kernel of ``G0(lambda)`` on the grid.

    ``method="closed"`` uses ``(i pi / 2) lambda^{m-2} jt(lambda r<) ht(lambda r>)``
    (``r_>^{2-m} / (m-2)`` at ``lambda = 0``); ``method="angular"`` reduces
    :func:`g0_point` numerically.
    """
    m = grid.m
    lam = float(lam)
    if method == "angular":
        if lam == 0.0:
            c = static_constant(m)
            return reduce_kernel(lambda d: c * d ** (2.0 - m), grid, nodes=nodes)
        return reduce_kernel(lambda d: g0_point(lam, d, m), grid, nodes=nodes)
    if method != "closed":
        raise DomainError(f"unknown method {method!r}")
    r = grid.nodes
    rl = np.minimum(r[:, None], r[None, :])
    rg = np.maximum(r[:, None], r[None, :])
    if lam == 0.0:
        return ReducedKernel(grid, (rg ** (2.0 - m) / (m - 2.0)).astype(complex))
    nu = (m - 2) / 2.0
    a = abs(lam)
    jt = _jtilde(nu, a * r)
    ht = _htilde(nu, a * r)
    idx_l = np.minimum(np.arange(r.size)[:, None], np.arange(r.size)[None, :])
    idx_g = np.maximum(np.arange(r.size)[:, None], np.arange(r.size)[None, :])
    kap = 0.5j * np.pi * a ** (m - 2) * jt[idx_l] * ht[idx_g]
    if lam < 0:
        kap = np.conj(kap)
    return ReducedKernel(grid, kap)


def a_reduced(lam, grid, method="closed", nodes=64):
    """Reduced kernel of ``A(lambda)``; rank one: ``jt(lambda r) jt(lambda s)``."""
    m = grid.m
    if method == "angular":
        return reduce_kernel(lambda d: a_point(lam, d, m), grid, nodes=nodes)
    nu = (m - 2) / 2.0
    jt = _jtilde(nu, abs(float(lam)) * grid.nodes)
    return ReducedKernel(grid, np.outer(jt, jt).astype(complex))


def inverse_laplacian_constant(m, k):
    """``c_{m,k}`` in the kernel ``c_{m,k} |x - y|^{2k-m}`` of ``(-Delta)^{-k}``."""
    return gamma(m / 2.0 - k) / (4.0**k * np.pi ** (m / 2.0) * factorial(k - 1))


def inverse_laplacian_power(k, grid, method="closed", nodes=64):
    """Reduced kernel of ``(-Delta)^{-k}`` for ``1 <= k < m/2``.

    The closed form uses the spherical mean
    ``r_>^{2k-m} 2F1(m/2-k, 1-k; m/2; (r_</r_>)^2)`` of ``|x - y|^{2k-m}``,
    a terminating polynomial for integer ``k``.
    """
    m = grid.m
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    if 2 * k >= m:
        raise DomainError(f"(-Delta)^-{k} kernel is not locally defined for m={m}")
    c = inverse_laplacian_constant(m, k)
    if method == "angular":
        return reduce_kernel(lambda d: c * d ** (2.0 * k - m), grid, nodes=nodes)
    r = grid.nodes
    rl = np.minimum(r[:, None], r[None, :])
    rg = np.maximum(r[:, None], r[None, :])
    a = m / 2.0 - k
    vals = c * sphere_area(m) * rg ** (-2 * a) * hyp2f1(a, 1 - k, m / 2.0, (rl / rg) ** 2)
    return ReducedKernel(grid, vals.astype(complex))


def sigma0(k, l, m):
    """Piecewise-linear exponent ``sigma_0(k, l)``.

    Exact (``Fraction``) arithmetic is used when the arguments are integers
    or fractions; floats otherwise.

    Raises
    ------
    DomainError
        Outside ``0 <= k <= m - 1``, ``l >= 0``.
    """
    exact = all(isinstance(v, (int, Fraction, np.integer)) for v in (k, l, m))
    if exact:
        k, l, m = Fraction(int(k) if isinstance(k, np.integer) else k), Fraction(l), Fraction(m)
        half = Fraction(1, 2)
    else:
        k, l, m = float(k), float(l), float(m)
        half = 0.5
    if not (0 <= k <= m - 1) or l < 0:
        raise DomainError(f"sigma0 undefined at (k, l) = ({k}, {l}) for m = {m}")
    if l <= k and k + l <= m - 1:
        return (k + l + 1) * half
    if k <= (m - 1) * half and l >= k:
        return l + half
    return k + l - (m - 2) * half


def taylor_coefficients(grid, order, step=1e-3, method="closed"):
    """``G0^{(j)}(0)`` for ``j < order`` by central differences with one Richardson level.

    Returns a list of kernel matrices (without measure).
    """
    if order > 3:
        raise DomainError("finite-difference Taylor coefficients are provided up to order 2")

    def kern(lam):
        return g0_reduced(lam, grid, method=method).kernel

    def diffs(h):
        g0 = kern(0.0)
        gp, gm = kern(h), kern(-h)
        out = [g0, (gp - gm) / (2 * h), (gp - 2 * g0 + gm) / h**2]
        return out

    d1 = diffs(step)
    d2 = diffs(step / 2)
    coeffs = [d1[0]]
    for j in (1, 2):
        coeffs.append((4 * d2[j] - d1[j]) / 3.0)
    return coeffs[:order]


def jk_remainder(lam, k, grid, coeffs=None, method="closed"):
    """``J_k(lambda) = lambda^{-k} (G0(lambda) - sum_{j<k} G0^{(j)}(0) lambda^j / j!)``.

    Parameters
    ----------
    lam : float
        Non-zero spectral parameter.
    k : int
        ``0 <= k <= m - 3``; Taylor coefficients are available for ``k <= 3``.
    coeffs : list, optional
        Precomputed :func:`taylor_coefficients`.
    """
    if lam == 0:
        raise DomainError("J_k is evaluated at lambda != 0")
    if not 0 <= k <= grid.m - 3:
        raise DomainError(f"k must lie in 0..{grid.m - 3}")
    g = g0_reduced(lam, grid, method=method).kernel
    if k == 0:
        return ReducedKernel(grid, g)
    if coeffs is None or len(coeffs) < k:
        coeffs = taylor_coefficients(grid, k, method=method)
    acc = g.copy()
    for j in range(k):
        acc = acc - coeffs[j] * lam**j / factorial(j)
    return ReducedKernel(grid, acc / lam**k)


def expansion_remainder(lam, grid, with_a_term=True, parts=None):
    """Kernel of ``F(lambda)`` in the low-energy expansion of ``G0(lambda)``.

    ``G0 = sum_j lambda^{2j} (-Delta)^{-j-1}
    + lambda^{m-2} (+-i pi/2 - log|lambda|) A(lambda) + lambda^{m-2} F(lambda)``.
    The sign of the ``i pi / 2`` term follows the sign of ``lambda``.
    """
    m = grid.m
    if parts is None:
        parts = [inverse_laplacian_power(j + 1, grid).kernel for j in range((m - 4) // 2 + 1)]
    g = g0_reduced(lam, grid).kernel
    for j, p in enumerate(parts):
        g = g - lam ** (2 * j) * p
    if with_a_term:
        a = a_reduced(lam, grid).kernel
        g = g - lam ** (m - 2) * (np.sign(lam) * 0.5j * np.pi - np.log(abs(lam))) * a
    return g / lam ** (m - 2)


def expansion_check(grid, lambdas, with_a_term=True):
    """Fit the decay exponent of the expansion remainder ``lambda^{m-2} F(lambda)``.

    Norms are ``<r>^{-gamma} . <r>^{-gamma}`` operator norms with
    ``gamma = (m + 1) / 2``.

    Raises
    ------
    DomainError
        If any ``lambda`` is outside ``(0, 1/8)``.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam <= 0) or np.any(lam >= 0.125):
        raise DomainError("expansion is stated for 0 < lambda < 1/8")
    m = grid.m
    gam = (m + 1) / 2.0
    parts = [inverse_laplacian_power(j + 1, grid).kernel for j in range((m - 4) // 2 + 1)]
    norms = []
    even = []
    for x in lam:
        fp = expansion_remainder(x, grid, with_a_term, parts)
        fm = expansion_remainder(-x, grid, with_a_term, parts)
        nf = weighted_opnorm(ReducedKernel(grid, fp), gam)
        norms.append(x ** (m - 2) * nf)
        even.append(weighted_opnorm(ReducedKernel(grid, fp - fm), gam) / nf)
    norms = np.array(norms)
    slope = float(np.polyfit(np.log(lam), np.log(norms), 1)[0])
    return ExpansionReport(lam, norms, slope, float(max(even)), with_a_term)
