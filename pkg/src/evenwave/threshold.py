"""Discretized radial Hamiltonians, bound states and the zero-energy space.

The radial ``l = 0`` part of ``H = -Delta + V`` is discretized in the
variable ``w = r^{(m-1)/2} u``, for which

    H w = -w'' + ((m-1)(m-3) / (4 r^2) + V(r)) w

on the half line, with second-order central differences on the grid nodes.
The left end is Dirichlet at ``r = 0``. The right end is Dirichlet one step
beyond ``rmax`` (``boundary="dirichlet"``) or the Robin condition
``w' = -(m-3)/(2r) w`` satisfied by the zero-energy tail ``r^{2-m}``
(``boundary="threshold"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import AmbiguityError, ConfigurationError, ConvergenceError, GridMismatchError, NumericalError
from .radial import RadialFunction, sphere_area

__all__ = [
    "PotentialSpec",
    "Hamiltonian",
    "EigenData",
    "ThresholdClassification",
    "zero_potential",
    "gaussian_potential",
    "tabulated_potential",
    "read_tabulated_potential",
    "make_exceptional_potential",
    "exceptional_phi",
    "build_hamiltonian",
    "eigensolve",
    "lowest_free_level",
    "default_e_tol",
    "tail_slope",
    "classify",
    "pc_project",
    "tune_threshold",
]


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A radial potential ``V(r)`` with its decay metadata.

    Attributes
    ----------
    kind : str
        ``"zero"``, ``"gaussian"``, ``"exceptional_m6"`` or ``"tabulated"``.
    v0, width : float
        Gaussian depth and width, ``V = v0 exp(-(r/width)^2)``.
    table : tuple of ndarray or None
        ``(r, V)`` samples for tabulated potentials (linear interpolation,
        zero beyond the last radius).
    delta : float
        Claimed decay exponent in ``|V| <= C <r>^{-delta}`` (``inf`` for
        compact support).
    bound : float
        The constant ``C``.
    coupling : float
        Multiplier applied to the profile. Used to re-tune discretized
        threshold potentials.
    """

    kind: str
    v0: float = 0.0
    width: float = 1.0
    table: tuple | None = None
    delta: float = np.inf
    bound: float = 0.0
    coupling: float = 1.0

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            v = np.zeros_like(r)
        elif self.kind == "gaussian":
            v = self.v0 * np.exp(-((r / self.width) ** 2))
        elif self.kind == "exceptional_m6":
            v = np.where(r <= 1.0, 96.0 * (r**2 - 1.0) / (3 * r**4 - 8 * r**2 + 6), 0.0)
        elif self.kind == "tabulated":
            rt, vt = self.table
            v = np.interp(r, rt, vt, left=vt[0], right=0.0)
        else:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        return v

    def __call__(self, r):
        return self.coupling * self.profile(r)

    @property
    def is_zero(self):
        return self.kind == "zero" or self.coupling == 0.0

    def with_coupling(self, c):
        return replace(self, coupling=float(c))

    def check_bound(self, grid):
        """True if ``|V(r_i)| <r_i>^delta <= 1.05 C`` on the grid."""
        v = np.abs(self(grid.nodes))
        if np.isinf(self.delta):
            support = self.support_radius()
            return bool(np.all(v[grid.nodes > support] == 0) and np.all(v <= 1.05 * self.bound))
        return bool(np.all(v * (1 + grid.nodes**2) ** (self.delta / 2) <= 1.05 * self.bound))

    def support_radius(self):
        if self.kind == "zero":
            return 0.0
        if self.kind == "exceptional_m6":
            return 1.0
        if self.kind == "tabulated":
            return float(self.table[0][-1])
        return np.inf


def zero_potential():
    return PotentialSpec("zero", delta=np.inf, bound=0.0)


def gaussian_potential(v0, width=1.0, delta=12.0):
    """``V = v0 exp(-(r / width)^2)`` with bound constant for ``<r>^{-delta}`` decay."""
    if width <= 0:
        raise ConfigurationError("gaussian width must be positive")
    r = np.linspace(0.0, 20.0 * width + 2.0 * np.sqrt(delta) * width, 20001)
    c = float(np.max(abs(v0) * np.exp(-((r / width) ** 2)) * (1 + r**2) ** (delta / 2)))
    return PotentialSpec("gaussian", v0=float(v0), width=float(width), delta=float(delta), bound=c)


def tabulated_potential(r, v, delta=np.inf):
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if r.ndim != 1 or r.shape != v.shape or r.size < 2:
        raise ConfigurationError("tabulated potential needs two equal-length columns")
    if np.any(np.diff(r) <= 0) or not np.all(np.isfinite(v)):
        raise ConfigurationError("tabulated radii must increase and values be finite")
    if np.isinf(delta):
        c = float(np.max(np.abs(v)))
    else:
        c = float(np.max(np.abs(v) * (1 + r**2) ** (delta / 2)))
    return PotentialSpec("tabulated", table=(r, v), delta=float(delta), bound=c)


def read_tabulated_potential(path, delta=np.inf):
    """Read a two-column text file ``r V(r)`` (``#`` comments allowed)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ConfigurationError(f"{path}: expected two columns, got {data.shape[1]}")
    return tabulated_potential(data[:, 0], data[:, 1], delta)


def exceptional_phi(r):
    """Zero-energy solution glued from ``6 - 8r^2 + 3r^4`` and ``r^{-4}`` at ``r = 1``."""
    r = np.asarray(r, dtype=float)
    inner = 6.0 - 8.0 * r**2 + 3.0 * r**4
    with np.errstate(divide="ignore"):
        outer = r**-4.0
    return np.where(r <= 1.0, inner, outer)


def make_exceptional_potential(m=6):
    """Compactly supported potential of exceptional type in six dimensions.

    ``V = Delta phi / phi = 96 (r^2 - 1) / (3 r^4 - 8 r^2 + 6)`` on ``[0, 1]``
    and zero outside, where ``phi`` is :func:`exceptional_phi`.
    """
    if m != 6:
        raise ConfigurationError("only m = 6 has a shipped closed-form exceptional potential")
    # max |V| sits at r^2 = 1 - 1/sqrt(3)
    return PotentialSpec("exceptional_m6", delta=np.inf, bound=24.0 * (np.sqrt(3.0) - 1.0))


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Symmetric finite-difference matrix of ``-Delta + V`` in ``w`` variables.

    Attributes
    ----------
    grid : RadialGrid
    potential : PotentialSpec
    diag, offdiag : ndarray
        Tridiagonal entries.
    boundary : str
    """

    grid: object
    potential: PotentialSpec
    diag: np.ndarray
    offdiag: np.ndarray
    boundary: str = "dirichlet"

    @property
    def matrix(self):
        n = self.diag.size
        a = np.diag(self.diag)
        a[np.arange(n - 1), np.arange(1, n)] = self.offdiag
        a[np.arange(1, n), np.arange(n - 1)] = self.offdiag
        return a

    @property
    def scaling(self):
        """Map ``u -> w``: ``w_i = s_i u_i`` with ``s_i = sqrt(|S| h) r_i^{(m-1)/2}``."""
        g = self.grid
        return np.sqrt(sphere_area(g.m) * g.h) * g.nodes ** ((g.m - 1) / 2.0)

    @property
    def norm(self):
        return float(np.max(np.abs(self.diag)) + 2 * np.max(np.abs(self.offdiag), initial=0.0))

    def apply(self, u):
        """Apply ``H`` to samples of ``u`` (returns samples of ``H u``)."""
        s = self.scaling
        w = s * u
        hw = self.diag * w
        hw[:-1] += self.offdiag * w[1:]
        hw[1:] += self.offdiag * w[:-1]
        return hw / s


def build_hamiltonian(grid, V, boundary="dirichlet"):
    """Second-order central-difference Hamiltonian.

    Raises
    ------
    NumericalError
        If the potential has non-finite samples.
    """
    m = grid.m
    r = grid.nodes
    h = grid.h
    v = V(r)
    if not np.all(np.isfinite(v)):
        raise NumericalError("potential has non-finite samples on the grid")
    diag = 2.0 / h**2 + (m - 1) * (m - 3) / (4.0 * r**2) + v
    if boundary == "threshold":
        diag = diag.copy()
        diag[-1] -= (1.0 - (m - 3) / 2.0 * h / r[-1]) / h**2
    elif boundary != "dirichlet":
        raise ConfigurationError(f"unknown boundary {boundary!r}")
    off = np.full(r.size - 1, -1.0 / h**2)
    return Hamiltonian(grid, V, diag, off, boundary)


@dataclass(frozen=True, eq=False)
class EigenData:
    """Eigen-decomposition of a Hamiltonian.

    ``vectors`` are orthonormal in ``w`` variables; :meth:`functions` returns
    the corresponding ``u`` samples, orthonormal in ``L^2(R^m)`` for the
    uniform-weight inner product of the Hamiltonian.
    """

    hamiltonian: Hamiltonian
    values: np.ndarray
    vectors: np.ndarray

    @property
    def grid(self):
        return self.hamiltonian.grid

    def functions(self, idx=None):
        s = self.hamiltonian.scaling
        v = self.vectors if idx is None else self.vectors[:, idx]
        return v / s[:, None] if v.ndim == 2 else v / s

    def residuals(self):
        a = self.hamiltonian.matrix
        return np.linalg.norm(a @ self.vectors - self.vectors * self.values[None, :], axis=0)

    def to_w(self, u):
        return self.hamiltonian.scaling * u

    def from_w(self, w):
        return w / self.hamiltonian.scaling

    def function_of(self, f):
        """Matrix of ``f(H)`` acting on ``u`` samples."""
        s = self.hamiltonian.scaling
        mat = (self.vectors * f(self.values)[None, :]) @ self.vectors.T
        return mat * (1.0 / s)[:, None] * s[None, :]


def eigensolve(H, select=None):
    """Full (or index-selected) spectrum of the tridiagonal Hamiltonian.

    Eigenvalues ascend; each eigenvector's first component above
    ``1e-8 max|v|`` is made positive.

    Raises
    ------
    ConvergenceError
        If LAPACK fails; the message carries a condition estimate.
    """
    try:
        if select is None:
            vals, vecs = eigh_tridiagonal(H.diag, H.offdiag)
        else:
            vals, vecs = eigh_tridiagonal(H.diag, H.offdiag, select="i", select_range=select)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigensolver failed (norm estimate {H.norm:.3e}): {exc}") from exc
    big = np.abs(vecs) > 1e-8 * np.max(np.abs(vecs), axis=0)
    first = np.argmax(big, axis=0)
    signs = np.sign(vecs[first, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return EigenData(H, vals, vecs * signs[None, :])


def lowest_free_level(grid):
    """Lowest eigenvalue of the free Dirichlet Hamiltonian on the grid."""
    h0 = build_hamiltonian(grid, zero_potential())
    return float(eigensolve(h0, select=(0, 0)).values[0])


def default_e_tol(grid):
    """``10 * E_1 / N`` with ``E_1`` the lowest free Dirichlet eigenvalue of the grid."""
    return 10.0 * lowest_free_level(grid) / grid.n


@dataclass(frozen=True, eq=False)
class ThresholdClassification:
    """Generic/exceptional verdict with the zero-energy space.

    Attributes
    ----------
    kind : str
        ``"generic"`` or ``"exceptional"``.
    d : int
        Dimension of the zero-energy space.
    basis : ndarray
        ``N x d`` samples of ``phi_j``, normalized by ``<-V phi_i, phi_j> = delta_ij``.
    p0 : ndarray
        Action matrix of the ``L^2`` orthogonal projection onto span(phi).
    q : ndarray
        Action matrix of ``Q = -sum phi_j (x) V phi_j``.
    energies : ndarray
        Eigenvalues of the selected zero modes.
    tail_slopes : ndarray
        Fitted tail exponents of all candidates.
    e_tol : float
    """

    kind: str
    d: int
    basis: np.ndarray
    p0: np.ndarray
    q: np.ndarray
    energies: np.ndarray
    tail_slopes: np.ndarray
    e_tol: float


def tail_slope(u, grid, boundary="dirichlet"):
    """Fitted exponent of ``|u|`` against ``r`` on ``[rmax/2, rmax]``.

    With a Dirichlet wall at ``R = rmax + h`` the free zero-energy tail is
    ``r^{2-m} - R^{2-m}``; that wall factor is divided out before fitting.
    """
    r = grid.nodes
    m = grid.m
    sel = r >= grid.rmax / 2
    a = np.abs(u[sel])
    if boundary == "dirichlet":
        rd = grid.rmax + grid.h
        a = a / (1.0 - (r[sel] / rd) ** (m - 2))
    if np.any(a <= 0):
        return np.nan
    return float(np.polyfit(np.log(r[sel]), np.log(a), 1)[0])


def classify(H, e_tol=None, eig=None, slope_tol=0.5):
    """Decide whether ``H`` is of generic or exceptional type.

    Zero modes are eigenpairs with ``|E| <= e_tol`` whose eigenfunctions
    decay like ``r^{2-m}`` (fitted tail exponent within ``slope_tol``).

    Raises
    ------
    AmbiguityError
        When a state within ``e_tol`` fails the tail test (the tolerance
        reaches the discrete continuum) or ``e_tol`` exceeds the lowest free
        level.
    """
    grid = H.grid
    m = grid.m
    if m < 6:
        raise ConfigurationError("classification by zero eigenvalues requires m >= 6")
    if e_tol is None:
        e_tol = default_e_tol(grid)
    e1 = lowest_free_level(grid)
    if e_tol >= e1:
        raise AmbiguityError(f"e_tol={e_tol:.3e} is not below the lowest free level {e1:.3e}", [e1])
    if eig is None:
        eig = eigensolve(H)
    cand = np.nonzero(np.abs(eig.values) <= e_tol)[0]
    slopes = []
    keep = []
    for i in cand:
        u = eig.functions(i)
        s = tail_slope(u, grid, H.boundary)
        slopes.append(s)
        if np.isfinite(s) and abs(s - (2 - m)) <= slope_tol:
            keep.append(i)
    if len(keep) < len(cand):
        raise AmbiguityError(
            "states within e_tol fail the r^(2-m) tail test", list(eig.values[cand])
        )
    n = grid.n
    d = len(keep)
    wts = sphere_area(m) * grid.h * grid.nodes ** (m - 1)
    vv = H.potential(grid.nodes)
    if d == 0:
        z = np.zeros((n, n))
        return ThresholdClassification("generic", 0, np.zeros((n, 0)), z, z.copy(), np.zeros(0), np.array(slopes), e_tol)
    phi = eig.functions(np.array(keep))
    # orthonormal basis for P0 in the uniform-weight L^2 product
    gram = phi.T @ (phi * wts[:, None])
    c = np.linalg.cholesky(gram)
    on = np.linalg.solve(c, phi.T).T
    p0 = on @ (on * wts[:, None]).T
    # normalization <-V phi_i, phi_j> = delta_ij
    form = -(phi * vv[:, None]).T @ (phi * wts[:, None])
    form = 0.5 * (form + form.T)
    evals, evecs = np.linalg.eigh(form)
    if np.any(evals <= 0):
        raise NumericalError("-(V phi, phi) is not positive definite on the zero modes")
    basis = phi @ evecs / np.sqrt(evals)[None, :]
    q = -basis @ (basis * (vv * wts)[:, None]).T
    return ThresholdClassification(
        "exceptional", d, basis, p0, q, eig.values[keep], np.array(slopes), e_tol
    )


def pc_project(E, f, e_threshold=None):
    """Remove components of ``f`` along eigenvectors with ``E < e_threshold``.

    The default threshold is the classification tolerance
    :func:`default_e_tol`, so bound states and zero modes are removed.
    """
    grid = E.grid
    if not grid.same_as(f.grid):
        raise GridMismatchError("eigen-data and function live on different grids")
    if e_threshold is None:
        e_threshold = default_e_tol(grid)
    idx = np.nonzero(E.values < e_threshold)[0]
    if idx.size == 0:
        return f
    w = E.to_w(f.samples)
    v = E.vectors[:, idx]
    w = w - v @ (v.T @ w)
    return RadialFunction(grid, E.from_w(w))


def tune_threshold(grid, V, boundary="dirichlet", bracket=(0.8, 1.2), xtol=1e-14):
    """Rescale the coupling of ``V`` so the discrete Hamiltonian has ``E = 0`` exactly.

    Exceptional type is destroyed by discretization error; this restores it
    on the given grid. Returns the re-tuned :class:`PotentialSpec`.
    """

    def e0(c):
        h = build_hamiltonian(grid, V.with_coupling(c), boundary)
        return eigensolve(h, select=(0, 0)).values[0]

    a, b = bracket
    fa, fb = e0(a), e0(b)
    if fa * fb > 0:
        raise ConvergenceError(f"no threshold crossing of the lowest level in coupling bracket {bracket}")
    c = brentq(e0, a, b, xtol=xtol, rtol=1e-15)
    return V.with_coupling(c)
