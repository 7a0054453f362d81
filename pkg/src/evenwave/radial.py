"""Radial grids, quadrature, norms and angular reduction of convolution kernels.

Every rotation-invariant object in the package lives on a :class:`RadialGrid`.
Functions are sampled at the nodes, and an integral operator with kernel
``k(|x - y|)`` is stored through its reduced kernel

    kappa(r, s) = int_{S^{m-1}} k(|r w - s w'|) dw',

so that ``(K f)(r) = int_0^inf kappa(r, s) f(s) s^{m-1} ds``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma, roots_legendre

from .errors import ConfigurationError, DomainError, GridMismatchError, NumericalError

__all__ = [
    "RadialGrid",
    "RadialFunction",
    "ReducedKernel",
    "WeightSpec",
    "sphere_area",
    "make_grid",
    "lp_norm",
    "weighted_l2_inner",
    "reduce_kernel",
    "apply_kernel",
    "weighted_opnorm",
    "trapezoid_moment",
]


def sphere_area(m):
    """Surface area of the unit sphere S^{m-1} in R^m."""
    return 2.0 * np.pi ** (m / 2.0) / gamma(m / 2.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radial grid with trapezoidal weights.

    Attributes
    ----------
    m : int
        Even space dimension.
    nodes : ndarray
        Radii ``r_i = i * rmax / n`` for ``i = 1..n``.
    weights : ndarray
        Trapezoidal weights for ``int_0^rmax f(r) dr`` (the ``r = 0`` node
        is dropped; every radial integrand used here carries ``r^{m-1}``).
    rmax : float
        Domain radius.
    """

    m: int
    nodes: np.ndarray
    weights: np.ndarray
    rmax: float

    @property
    def n(self):
        return self.nodes.size

    @property
    def h(self):
        return self.rmax / self.n

    @property
    def measure(self):
        """Quadrature weights ``w_i r_i^{m-1}`` of the radial measure."""
        return self.weights * self.nodes ** (self.m - 1)

    @property
    def sphere(self):
        return sphere_area(self.m)

    def same_as(self, other):
        return (
            self is other
            or (
                self.m == other.m
                and self.n == other.n
                and self.rmax == other.rmax
            )
        )

    def function(self, values):
        """Wrap samples (array or callable of r) as a :class:`RadialFunction`."""
        if callable(values):
            values = values(self.nodes)
        return RadialFunction(self, np.asarray(values, dtype=complex))


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Samples of a radial function on a grid."""

    grid: RadialGrid
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.shape != (self.grid.n,):
            raise GridMismatchError(
                f"expected {self.grid.n} samples, got shape {self.samples.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise NumericalError("radial function has non-finite samples")

    def __add__(self, other):
        _check_grids(self.grid, other.grid)
        return RadialFunction(self.grid, self.samples + other.samples)

    def __sub__(self, other):
        _check_grids(self.grid, other.grid)
        return RadialFunction(self.grid, self.samples - other.samples)

    def __mul__(self, c):
        return RadialFunction(self.grid, self.samples * c)

    __rmul__ = __mul__

    def conj(self):
        return RadialFunction(self.grid, np.conj(self.samples))


@dataclass(frozen=True, eq=False)
class ReducedKernel:
    """Angularly reduced kernel of a rotation-invariant operator.

    Attributes
    ----------
    grid : RadialGrid
    entries : ndarray
        Complex ``N x N`` matrix.
    includes_measure : bool
        If true the column weights ``w_j r_j^{m-1}`` are already folded in,
        i.e. ``entries`` is the action matrix rather than ``kappa``.
    """

    grid: RadialGrid
    entries: np.ndarray
    includes_measure: bool = False

    def __post_init__(self):
        n = self.grid.n
        if self.entries.shape != (n, n):
            raise GridMismatchError(f"kernel shape {self.entries.shape} != ({n}, {n})")

    @property
    def action(self):
        """Matrix ``A`` with ``(K f)_i = sum_j A_ij f_j``."""
        if self.includes_measure:
            return self.entries
        return self.entries * self.grid.measure[None, :]

    @property
    def kernel(self):
        """Kernel values ``kappa(r_i, r_j)`` without the measure."""
        if self.includes_measure:
            return self.entries / self.grid.measure[None, :]
        return self.entries

    @classmethod
    def from_action(cls, grid, action):
        return cls(grid, np.asarray(action, dtype=complex), includes_measure=True)


@dataclass(frozen=True)
class WeightSpec:
    """Polynomial weight ``<r>^gamma`` with ``<r> = sqrt(1 + r^2)``."""

    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ConfigurationError("weight exponent must be finite")

    def __call__(self, r):
        return (1.0 + np.asarray(r) ** 2) ** (self.gamma / 2.0)


def _check_grids(a, b):
    if not a.same_as(b):
        raise GridMismatchError("objects live on different radial grids")


def make_grid(m, rmax, n):
    """Uniform radial grid ``r_i = i rmax / n`` with trapezoidal weights.

    Parameters
    ----------
    m : int
        Even dimension, at least 4.
    rmax : float
        Domain radius, positive.
    n : int
        Number of nodes, at least 4.

    Raises
    ------
    ConfigurationError
        For odd or too small ``m``, non-positive ``rmax`` or ``n < 4``.
    """
    if int(m) != m or m % 2 or m < 4:
        raise ConfigurationError(f"dimension must be an even integer >= 4, got {m}")
    if not np.isfinite(rmax) or rmax <= 0:
        raise ConfigurationError(f"rmax must be positive, got {rmax}")
    if int(n) != n or n < 4:
        raise ConfigurationError(f"node count must be an integer >= 4, got {n}")
    n = int(n)
    h = rmax / n
    nodes = h * np.arange(1, n + 1, dtype=float)
    weights = np.full(n, h)
    weights[-1] = h / 2.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return RadialGrid(int(m), nodes, weights, float(rmax))


def trapezoid_moment(grid, k):
    """Trapezoid value of ``int_0^rmax r^k dr`` with the Euler-Maclaurin end term.

    The ``r = 0`` end value is restored and the ``h^2/12`` derivative
    correction added, which makes the rule exact for cubics.
    """
    h = grid.h
    val = np.sum(grid.weights * grid.nodes**k) + (h / 2.0 if k == 0 else 0.0)
    dfb = k * grid.rmax ** (k - 1) if k >= 1 else 0.0
    dfa = 1.0 if k == 1 else 0.0
    return val - h**2 / 12.0 * (dfb - dfa)


def lp_norm(f, p):
    """``L^p(R^m)`` norm of a radial function.

    Parameters
    ----------
    f : RadialFunction
    p : float
        Exponent in ``[1, inf]``.
    """
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    a = np.abs(f.samples)
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    g = f.grid
    return float((g.sphere * np.sum(a**p * g.measure)) ** (1.0 / p))


def weighted_l2_inner(f, g, w=WeightSpec(0.0)):
    """Inner product ``int conj(f) g <r>^{2 gamma} dx`` over R^m."""
    _check_grids(f.grid, g.grid)
    gr = f.grid
    wt = w(gr.nodes) ** 2
    return complex(gr.sphere * np.sum(np.conj(f.samples) * g.samples * wt * gr.measure))


def _angular_rule(nodes):
    x, w = roots_legendre(nodes)
    return x, w


def reduce_kernel(profile, grid, nodes=64, near=0.1, chunk=2048):
    """Angular reduction of a radial convolution kernel.

    Computes ``kappa(r, s) = |S^{m-2}| int_0^pi k(d(theta)) sin^{m-2}(theta) dtheta``
    with ``d(theta)^2 = r^2 + s^2 - 2 r s cos(theta)`` by Gauss-Legendre in
    ``theta``. Pairs with ``|r - s| < near * min(r, s)`` use four geometric
    panels refined toward ``theta = 0`` where the kernel may be singular.

    Parameters
    ----------
    profile : callable
        Vectorized map from distance to kernel value.
    grid : RadialGrid
    nodes : int
        Gauss-Legendre nodes per panel.
    near : float
        Relative distance below which the panelled rule is used.
    chunk : int
        Number of ``(r, s)`` pairs evaluated per profile call.

    Returns
    -------
    ReducedKernel
    """
    m = grid.m
    r = grid.nodes
    n = r.size
    c = sphere_area(m - 1)
    x, w = _angular_rule(nodes)

    R = r[:, None]
    S = r[None, :]
    close = np.abs(R - S) < near * np.minimum(R, S)
    out = np.empty((n, n), dtype=complex)

    # plain rule on (0, pi)
    th = 0.5 * np.pi * (x + 1.0)
    wt = 0.5 * np.pi * w * np.sin(th) ** (m - 2)
    ii_all, jj_all = np.nonzero(~close)
    for lo in range(0, ii_all.size, chunk):
        ii = ii_all[lo:lo + chunk]
        jj = jj_all[lo:lo + chunk]
        rr = r[ii][:, None]
        ss = r[jj][:, None]
        d = np.sqrt(np.maximum(rr**2 + ss**2 - 2 * rr * ss * np.cos(th)[None, :], 0.0))
        vals = np.asarray(profile(d), dtype=complex)
        _check_finite(vals, r[ii], r[jj])
        out[ii, jj] = c * (vals @ wt)

    # panelled rule near the diagonal
    ii, jj = np.nonzero(close)
    if ii.size:
        rr = r[ii]
        ss = r[jj]
        eps = np.abs(rr - ss) / np.sqrt(rr * ss)
        eps = np.clip(eps, 1e-3, np.pi / 8)
        q = (np.pi / eps) ** (1.0 / 3.0)
        breaks = np.stack([np.zeros_like(eps), eps, eps * q, eps * q**2, np.full_like(eps, np.pi)], 1)
        acc = np.zeros(ii.size, dtype=complex)
        for p in range(4):
            a = breaks[:, p][:, None]
            b = breaks[:, p + 1][:, None]
            thp = a + 0.5 * (b - a) * (x[None, :] + 1.0)
            wtp = 0.5 * (b - a) * w[None, :] * np.sin(thp) ** (m - 2)
            d = np.sqrt(np.maximum(rr[:, None] ** 2 + ss[:, None] ** 2 - 2 * (rr * ss)[:, None] * np.cos(thp), 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.asarray(profile(d), dtype=complex)
            # at r = s the point theta = 0 is not a node, but guard anyway
            vals = np.where(d == 0.0, 0.0, vals)
            _check_finite(vals, rr, ss)
            acc += np.sum(vals * wtp, axis=1)
        out[ii, jj] = c * acc
    return ReducedKernel(grid, out)


def _check_finite(vals, rr, ss):
    bad = ~np.all(np.isfinite(vals), axis=1)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NumericalError(
            f"profile returned non-finite values at (r, s) = ({rr[k]:.6g}, {ss[k]:.6g})"
        )


def apply_kernel(K, f):
    """Apply a reduced kernel: ``(K f)(r_i) = sum_j kappa_ij f_j w_j r_j^{m-1}``."""
    _check_grids(K.grid, f.grid)
    return RadialFunction(f.grid, K.action @ f.samples)


def weighted_opnorm(K, sigma_left, sigma_right=None):
    """Operator norm of ``<r>^{-sigma_left} K <r>^{-sigma_right}`` on radial ``L^2(R^m)``."""
    if sigma_right is None:
        sigma_right = sigma_left
    g = K.grid
    s = np.sqrt(g.measure)
    left = s * (1.0 + g.nodes**2) ** (-sigma_left / 2.0)
    right = s * (1.0 + g.nodes**2) ** (-sigma_right / 2.0)
    mat = left[:, None] * K.kernel * right[None, :]
    return float(np.linalg.norm(mat, 2))
