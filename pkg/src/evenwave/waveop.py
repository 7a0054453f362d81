"""Born terms, the stationary wave operator and a time-dependent oracle.

All operators are Nystrom action matrices on the radial grid. The spectral
measure of ``H0`` enters through ``G0(lambda) - G0(-lambda) = i pi
lambda^{m-2} A(lambda)``; ``A(lambda)`` has the rank-one reduced kernel
``jt(lambda r) jt(lambda s)``, so every lambda node adds a rank-one term.
"""

from __future__ import annotations

import warnings
from math import comb
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .errors import ConfigurationError, ConvergenceError, DomainError, NumericalError
from .inversion import singular_fit
from .parallel import ordered_map
from .radial import ReducedKernel
from .resolvent import _htilde, _jtilde, g0_reduced
from .threshold import build_hamiltonian, eigensolve, zero_potential

__all__ = [
    "CutoffPair",
    "LambdaQuadrature",
    "BornTermMatrix",
    "WaveOpMatrix",
    "PropagatorOracle",
    "TimeDependentW",
    "G0lBoundReport",
    "smoothstep",
    "lowpass_kernels",
    "kernel_decay_slope",
    "born_term",
    "stationary_w",
    "time_dependent_w",
    "test_functions",
    "band_limited_probes",
    "intertwine_residual",
    "SurrogateK",
    "surrogate_k",
    "omega_low",
    "admissibility_score",
    "g0l_bound_check",
]


def smoothstep(x):
    """C-infinity step ``f(x) / (f(x) + f(1 - x))`` with ``f(x) = exp(-1/x)``.

    Equal to 0 for ``x <= 0`` and 1 for ``x >= 1``; every derivative
    vanishes at both ends.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffPair:
    """Smooth partition ``Phi^2 + Psi^2 = 1`` in the energy variable.

    ``Phi(E) = cos(pi S / 2)`` and ``Psi(E) = sin(pi S / 2)`` with
    ``S = smoothstep((|E|/lambda0^2 - flat) / (1 - flat))``, so ``Phi = 1``
    for ``|E| <= flat lambda0^2``, ``Phi = 0`` for ``|E| >= lambda0^2`` and
    both are C-infinity. The auxiliary momentum cutoff ``phi_tilde`` equals
    1 on ``[0, lambda0]`` and vanishes beyond ``2 lambda0``.
    """

    lambda0: float = 0.3
    flat: float = 0.5

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ConfigurationError("lambda0 must be positive")
        if not 0.0 < self.flat < 1.0:
            raise ConfigurationError("flat fraction must lie in (0, 1)")

    def _s(self, energy):
        x = (np.abs(np.asarray(energy, dtype=float)) / self.lambda0**2 - self.flat) / (1.0 - self.flat)
        return smoothstep(x)

    def phi(self, energy):
        s = self._s(energy)
        # cos(pi/2) is not exactly zero in floating point
        return np.where(s >= 1.0, 0.0, np.cos(0.5 * np.pi * s))

    def psi(self, energy):
        return np.sin(0.5 * np.pi * self._s(energy))

    def phi2(self, energy):
        return self.phi(energy) ** 2

    def psi2(self, energy):
        return self.psi(energy) ** 2

    def phi_tilde(self, lam):
        return 1.0 - smoothstep(np.abs(np.asarray(lam, dtype=float)) / self.lambda0 - 1.0)

    @property
    def transition(self):
        """Momentum interval where ``Phi`` falls from 1 to 0."""
        return (self.lambda0 * np.sqrt(self.flat), self.lambda0)


@dataclass(frozen=True)
class LambdaQuadrature:
    """Composite Gauss-Legendre rule in momentum.

    Low part: ``low_panels`` log-spaced panels on ``[lambda_min_factor *
    lambda0, lambda0]`` plus a break at the start of the cutoff transition.
    High part: linear panels of width ``high_width`` (default ``10 / rmax``)
    from ``lambda0`` to ``lam_max`` (default ``2 sqrt(largest grid eigenvalue)``).
    """

    lambda_min_factor: float = 1e-4
    low_panels: int = 10
    high_width: float | None = None
    nodes_per_panel: int = 8
    lam_max: float | None = None

    def __post_init__(self):
        if not 0 < self.lambda_min_factor < 1:
            raise ConfigurationError("lambda_min_factor must lie in (0, 1)")
        if self.low_panels < 1 or self.nodes_per_panel < 2:
            raise ConfigurationError("need at least one low panel and two nodes per panel")
        if self.high_width is not None and not self.high_width > 0:
            raise ConfigurationError("high_width must be positive")

    def width(self, grid):
        # the integrand oscillates like exp(i lambda (r + s)), r + s <= 2 rmax
        return self.high_width if self.high_width is not None else 10.0 / grid.rmax

    def upper_limit(self, grid):
        if self.lam_max is not None:
            return float(self.lam_max)
        h = build_hamiltonian(grid, zero_potential())
        return 2.0 * np.sqrt(h.norm)

    def breaks(self, grid, cut):
        lo = self.lambda_min_factor * cut.lambda0
        low = np.geomspace(lo, cut.lambda0, self.low_panels + 1)
        low = np.union1d(low, [cut.transition[0]])
        lmax = self.upper_limit(grid)
        if lmax <= cut.lambda0:
            return low[low <= lmax] if lmax < cut.lambda0 else low
        k = max(1, int(np.ceil((lmax - cut.lambda0) / self.width(grid))))
        high = np.linspace(cut.lambda0, lmax, k + 1)
        return np.union1d(low, high)

    def nodes(self, grid, cut, refine=1):
        """Nodes and weights, panel by panel in increasing order."""
        x, w = roots_legendre(self.nodes_per_panel * refine)
        br = self.breaks(grid, cut)
        a, b = br[:-1, None], br[1:, None]
        lam = (a + (b - a) * (x[None, :] + 1.0) / 2.0).ravel()
        wt = ((b - a) * w[None, :] / 2.0).ravel()
        return lam, wt


@dataclass(frozen=True, eq=False)
class BornTermMatrix:
    """Action matrix of the ``n``-th Born term with its quadrature record."""

    order: int
    matrix: np.ndarray
    quadrature: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class WaveOpMatrix:
    """Stationary wave operator ``W = W_low + W_high`` (action matrices)."""

    total: np.ndarray
    low: np.ndarray
    high: np.ndarray
    quadrature: dict = field(default_factory=dict)


def _spectral_vector(lam, grid):
    return _jtilde((grid.m - 2) / 2.0, lam * grid.nodes)


def _support(v, rel=1e-18):
    """Nodes where ``|V|`` exceeds ``rel`` times its maximum.

    Dropping the rest changes products with ``V`` only below double precision.
    """
    a = np.abs(v)
    return np.nonzero(a > rel * a.max())[0]


def _g0_columns(lam, grid, cols):
    """Columns ``cols`` of the ``G0(lambda)`` action matrix (``lambda > 0``)."""
    m = grid.m
    r = grid.nodes
    nu = (m - 2) / 2.0
    jt = _jtilde(nu, lam * r)
    ht = _htilde(nu, lam * r)
    i = np.arange(r.size)[:, None]
    j = cols[None, :]
    kap = np.where(i <= j, jt[i] * ht[j], jt[j] * ht[i])
    return 0.5j * np.pi * lam ** (m - 2) * kap * grid.measure[cols][None, :]


def _doubling(fn, quad, grid, cut, fail, warn):
    """Evaluate ``fn(lam, wt)`` on the rule and on the doubled rule."""
    lam1, wt1 = quad.nodes(grid, cut, 1)
    lam2, wt2 = quad.nodes(grid, cut, 2)
    coarse = fn(lam1, wt1)
    fine = fn(lam2, wt2)
    ref = max(np.linalg.norm(fine[0]), 1e-300)
    change = float(np.linalg.norm(fine[0] - coarse[0]) / ref) if np.linalg.norm(fine[0]) > 0 else 0.0
    if change > fail:
        raise ConvergenceError(f"lambda quadrature not converged: doubling changes result by {change:.2e}")
    record = {
        "nodes": int(lam2.size),
        "lambda_min": float(lam2.min()),
        "lambda_max": float(quad.upper_limit(grid)),
        "doubling_change": change,
        "converged": change <= warn,
    }
    return fine, record


def born_term(n, grid, V, quad=None, cut=None, threads=None, fail=1e-3, warn=1e-5):
    """``n``-th Born term ``Omega_n = int (G0(l) V)^n A(l) l^{m-1} dl``.

    ``W = I - sum_n (-1)^{n-1} Omega_n`` for small coupling.

    Raises
    ------
    DomainError
        If ``n < 1``.
    ConvergenceError
        If node doubling changes the Frobenius norm by more than ``fail``.
    """
    if int(n) != n or n < 1:
        raise DomainError("Born order must be a positive integer")
    n = int(n)
    quad = quad or LambdaQuadrature()
    cut = cut or CutoffPair()
    v = V(grid.nodes)
    size = grid.n
    if not np.any(v):
        return BornTermMatrix(n, np.zeros((size, size), dtype=complex), {"converged": True, "doubling_change": 0.0})
    mu = grid.measure
    m = grid.m

    sup = _support(v)
    vs = v[sup]

    def one(lam):
        g = _g0_columns(lam, grid, sup)
        j = _spectral_vector(lam, grid)
        y = j.astype(complex)
        for _ in range(n):
            y = g @ (vs * y[sup])
        return y, j

    def assemble(lam, wt):
        cols = ordered_map(one, lam, threads)
        ys = np.stack([c[0] for c in cols], axis=1)
        js = np.stack([c[1] for c in cols], axis=1)
        c = wt * lam ** (m - 1)
        return ((ys * c[None, :]) @ (js * mu[:, None]).T,)

    (mat,), rec = _doubling(assemble, quad, grid, cut, fail, warn)
    return BornTermMatrix(n, mat, rec)


def stationary_w(grid, V, cut=None, quad=None, singular=None, model_below=1e-3, threads=None,
                 fail=1e-3, warn=1e-5):
    """Stationary wave operator ``W_-``.

    ``W = I - int M(l)^{-1} G0(l) V A(l) l^{m-1} dl`` with the integrand
    weighted by ``Phi(l^2)^2`` (low part) and ``Psi(l^2)^2`` (high part).
    Since ``A(l) Phi(H0)^2 = Phi(l^2)^2 A(l)``, the parts are ``W Phi(H0)^2``
    and ``W Psi(H0)^2`` with the identity split by the discrete ``Phi(H0)^2``.

    Parameters
    ----------
    singular : SingularFit or "auto", optional
        Fitted threshold model used in place of ``M(l)^{-1}`` for
        ``l < model_below`` (exceptional potentials). ``"auto"`` fits it here.

    Raises
    ------
    ConvergenceError
        If node doubling changes ``W - I`` by more than ``fail``.
    """
    cut = cut or CutoffPair()
    quad = quad or LambdaQuadrature()
    size = grid.n
    v = V(grid.nodes)
    eye = np.eye(size, dtype=complex)
    free = eigensolve(build_hamiltonian(grid, zero_potential()))
    low_id = free.function_of(cut.phi2)
    high_id = eye - low_id
    if not np.any(v):
        rec = {"converged": True, "doubling_change": 0.0, "model_nodes": 0}
        return WaveOpMatrix(eye.copy(), low_id.astype(complex), high_id.astype(complex), rec)
    if isinstance(singular, str):
        if singular != "auto":
            raise ConfigurationError(f"unknown singular option {singular!r}")
        singular = singular_fit(grid, V)
    mu = grid.measure
    m = grid.m
    smallest = []

    sup = _support(v)
    vs = v[sup]
    eye_s = np.eye(sup.size)

    def one(lam):
        # (1 + G0 V) y = G0 V j only couples the support of V:
        # solve there, then y = G0 V (j - y) everywhere.
        j = _spectral_vector(lam, grid)
        if singular is not None and lam < model_below:
            g = g0_reduced(lam, grid).action
            return singular.model(lam) @ (g @ (v * j)), j, True
        g = _g0_columns(lam, grid, sup)
        ys = np.linalg.solve(eye_s + g[sup] * vs[None, :], g[sup] @ (vs * j[sup]))
        y = g @ (vs * (j[sup] - ys))
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite solve at lambda={lam:g}")
        return y, j, False

    def assemble(lam, wt):
        cols = ordered_map(one, lam, threads)
        ys = np.stack([c[0] for c in cols], axis=1)
        js = np.stack([c[1] for c in cols], axis=1) * mu[:, None]
        smallest.append(int(sum(c[2] for c in cols)))
        c = wt * lam ** (m - 1)
        e = lam**2
        lo = (ys * (c * cut.phi2(e))[None, :]) @ js.T
        hi = (ys * (c * cut.psi2(e))[None, :]) @ js.T
        return lo + hi, lo, hi

    (corr, lo, hi), rec = _doubling(assemble, quad, grid, cut, fail, warn)
    rec["model_nodes"] = smallest[-1]
    w_low = low_id - lo
    w_high = high_id - hi
    return WaveOpMatrix(w_low + w_high, w_low, w_high, rec)


class PropagatorOracle:
    """Exact propagators of the discrete ``H`` and ``H0`` by eigen-decomposition.

    Matrices act on ``u`` samples of the grid.
    """

    def __init__(self, grid, V, boundary="dirichlet"):
        self.grid = grid
        self.full = eigensolve(build_hamiltonian(grid, V, boundary))
        self.free = eigensolve(build_hamiltonian(grid, zero_potential(), boundary))
        self._s = self.full.hamiltonian.scaling

    def _to_u(self, mat_w):
        return mat_w * (1.0 / self._s)[:, None] * self._s[None, :]

    def propagator(self, t, free=False):
        """Matrix of ``exp(-i t H)`` (or ``H0``)."""
        e = self.free if free else self.full
        return self._to_u((e.vectors * np.exp(-1j * t * e.values)[None, :]) @ e.vectors.T)

    def evolve(self, u, t, free=False):
        """Samples of ``exp(-i t H) u``."""
        e = self.free if free else self.full
        w = self._s * np.asarray(u)
        c = e.vectors.T @ w
        return (e.vectors @ (np.exp(-1j * t * e.values) * c)) / self._s

    def wave(self, t):
        """``exp(i t H) exp(-i t H0)``."""
        a, b = self.full, self.free
        overlap = a.vectors.T @ b.vectors
        phase = np.exp(1j * t * a.values)[:, None] * np.exp(-1j * t * b.values)[None, :]
        return self._to_u(a.vectors @ (phase * overlap) @ b.vectors.T)

    def abel(self, t):
        """Abel mean ``eps int_0^inf e^{-eps s} W(sign(t) s) ds`` with ``eps = 1/|t|``."""
        if t == 0:
            raise DomainError("Abel averaging needs t != 0")
        a, b = self.full, self.free
        eps = 1.0 / abs(t)
        diff = a.values[:, None] - b.values[None, :]
        factor = eps / (eps - 1j * np.sign(t) * diff)
        overlap = a.vectors.T @ b.vectors
        return self._to_u(a.vectors @ (factor * overlap) @ b.vectors.T)


@dataclass(frozen=True, eq=False)
class TimeDependentW:
    """``exp(itH) exp(-itH0)`` on a time list with diagnostics.

    Attributes
    ----------
    times : ndarray
    matrices : list of ndarray or None
        Omitted when the caller only needs the diagnostics.
    differences : ndarray
        ``max_u ||(W(t_k) - W(t_{k-1})) u|| / ||u||`` over the probes, one per
        consecutive pair of times.
    boundary_mass : ndarray
        Largest fraction of probe mass in the outer 10% of the domain after
        free evolution to each time.
    reliable : bool
        False when some boundary mass exceeds 1%.
    """

    times: np.ndarray
    matrices: list | None
    differences: np.ndarray
    boundary_mass: np.ndarray
    reliable: bool


def test_functions(grid, count=10, width=1.5):
    """Gaussian bumps ``exp(-((r - c)/width)^2)`` with centers ``0, 0.5, ...``."""
    r = grid.nodes
    return [np.exp(-(((r - 0.5 * k) / width) ** 2)) for k in range(count)]


def band_limited_probes(grid, count=5, width=1.5, fraction=0.1):
    """Test bumps smoothly cut off above ``fraction`` of the discrete ``H0`` band.

    The three-point scheme represents data with ``u(0) != 0`` with a small
    component near the top of the discrete band, where the group velocity
    vanishes; such modes never leave the potential and stall the ``t``-scan.
    """
    free = eigensolve(build_hamiltonian(grid, zero_potential()))
    cut = CutoffPair(np.sqrt(fraction * free.values.max()), 0.5)
    f = free.function_of(cut.phi2)
    return [f @ u for u in test_functions(grid, count, width)]


def _l2(u, grid):
    return float(np.sqrt(np.sum(np.abs(u) ** 2 * grid.measure)))


def time_dependent_w(grid, V, t_list, averaging="none", probes=None, boundary="dirichlet", keep_matrices=True):
    """Time-dependent wave operator ``W(t) = exp(itH) exp(-itH0)`` on ``t_list``.

    Diagnostics are computed on ``probes`` (default
    :func:`band_limited_probes`). A reliability warning is issued when a
    probe's free evolution puts more than 1% of its mass into the outer 10%
    of the domain.

    Raises
    ------
    DomainError
        If ``t_list`` is not increasing in magnitude or ``averaging`` is unknown.
    """
    t = np.asarray(t_list, dtype=float)
    if t.size == 0 or np.any(np.diff(np.abs(t)) <= 0):
        raise DomainError("t_list must be non-empty and strictly increasing in magnitude")
    if averaging not in ("none", "abel"):
        raise DomainError(f"unknown averaging {averaging!r}")
    if averaging == "abel" and np.any(t == 0):
        raise DomainError("Abel averaging needs t != 0")
    oracle = PropagatorOracle(grid, V, boundary)
    probes = band_limited_probes(grid) if probes is None else probes
    outer = grid.nodes > 0.9 * grid.nodes[-1]
    mats, masses, images = [], [], []
    for tk in t:
        if keep_matrices:
            mats.append(oracle.wave(tk) if averaging == "none" else oracle.abel(tk))
        frac = 0.0
        row = []
        for u in probes:
            e = oracle.evolve(u, tk, free=True)
            dens = np.abs(e) ** 2 * grid.measure
            frac = max(frac, float(dens[outer].sum() / dens.sum()))
            if keep_matrices:
                row.append(mats[-1] @ u)
            elif averaging == "none":
                row.append(oracle.evolve(e, -tk))
            else:
                row.append(oracle.abel(tk) @ u)
        masses.append(frac)
        images.append(row)
    diffs = []
    for a, b in zip(images[:-1], images[1:]):
        diffs.append(max(_l2(y - x, grid) / _l2(u, grid) for x, y, u in zip(a, b, probes)))
    masses = np.array(masses)
    reliable = bool(np.all(masses <= 0.01))
    if not reliable:
        warnings.warn(
            f"boundary reflection: probe mass near rmax reaches {masses.max():.2%}", RuntimeWarning, stacklevel=2
        )
    return TimeDependentW(t, mats if keep_matrices else None, np.array(diffs), masses, reliable)


def intertwine_residual(W, grid, V, tests=None, boundary="dirichlet"):
    """``max_u ||H W u - W H0 u|| / ||u||_{H^2}`` over a fixed test set.

    ``||u||_{H^2}^2 = ||u||^2 + ||H0 u||^2`` with the discrete ``H0``.
    """
    W = np.asarray(W)
    h = build_hamiltonian(grid, V, boundary)
    h0 = build_hamiltonian(grid, zero_potential(), boundary)
    tests = test_functions(grid) if tests is None else tests
    worst = 0.0
    for u in tests:
        u = np.asarray(u, dtype=complex)
        h0u = h0.apply(u)
        res = h.apply(W @ u) - W @ h0u
        den = np.sqrt(_l2(u, grid) ** 2 + _l2(h0u, grid) ** 2)
        worst = max(worst, _l2(res, grid) / den)
    return worst


def lowpass_kernels(cut, which, grid, V=None, eig=None):
    """Reduced kernel of ``Phi(H0)`` (``which="free"``) or ``Phi(H)`` (``"full"``).

    Raises
    ------
    ConfigurationError
        If ``which="full"`` and neither ``V`` nor ``eig`` is given.
    """
    if which == "free":
        e = eigensolve(build_hamiltonian(grid, zero_potential()))
    elif which == "full":
        if eig is None:
            if V is None:
                raise ConfigurationError("Phi(H) needs eigen-data or a potential")
            eig = eigensolve(build_hamiltonian(grid, V))
        e = eig
    else:
        raise ConfigurationError(f"unknown kernel kind {which!r}")
    return ReducedKernel.from_action(grid, e.function_of(cut.phi).astype(complex))


def kernel_decay_slope(K, band=(5.0, 30.0), bins=12):
    """Slope of ``log max|kappa(r, s)|`` against ``log <r - s>`` over ``band``.

    The envelope takes, in each log-spaced bin of ``|r - s|``, the largest
    kernel magnitude.
    """
    g = K.grid
    kap = np.abs(K.kernel)
    d = np.abs(g.nodes[:, None] - g.nodes[None, :])
    edges = np.geomspace(band[0], band[1], bins + 1)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (d >= a) & (d < b)
        if np.any(sel):
            val = kap[sel].max()
            if val > 0:
                xs.append(np.log(np.sqrt(1.0 + (0.5 * (a + b)) ** 2)))
                ys.append(np.log(val))
    if len(xs) < 3:
        raise DomainError("decay band does not contain enough separated pairs")
    return float(np.polyfit(xs, ys, 1)[0])


class SurrogateK:
    """Family ``lambda -> V (M(lambda)^{-1} - I) G0(lambda) V``.

    Calling it returns the full action matrix; :meth:`apply` computes
    ``K(lambda) x`` through the support of ``V`` only.
    """

    def __init__(self, grid, V):
        self.grid = grid
        self.v = V(grid.nodes)
        self.support = _support(self.v) if np.any(self.v) else np.array([], dtype=int)

    def __call__(self, lam):
        g = g0_reduced(lam, self.grid).action
        eye = np.eye(self.grid.n)
        minv = np.linalg.inv(eye + g * self.v[None, :])
        return self.v[:, None] * ((minv - eye) @ g) * self.v[None, :]

    def apply(self, lam, x):
        out = np.zeros(self.grid.n, dtype=complex)
        sup = self.support
        if sup.size == 0:
            return out
        vs = self.v[sup]
        g = _g0_columns(lam, self.grid, sup)[sup]
        z = g @ (vs * x[sup])
        y = np.linalg.solve(np.eye(sup.size) + g * vs[None, :], z)
        out[sup] = vs * (y - z)
        return out


def surrogate_k(grid, V):
    """The ``V (M^{-1} - I) G0 V`` family used to exercise :func:`omega_low`."""
    return SurrogateK(grid, V)


def omega_low(kfam, cut, grid, V=None, quad=None, threads=None, fail=1e-3, warn=1e-5):
    """Kernel of ``Omega = int Phi(H) G0 K (G0(l) - G0(-l)) Phi(H0) l Phi~(l) dl``.

    With ``(G0(l) - G0(-l)) Phi(H0) = i pi l^{m-2} Phi(l^2) A(l)`` the
    integrand is rank one per node and supported on ``l <= lambda0``.
    ``V`` determines ``Phi(H)`` (free when omitted). ``kfam`` maps ``lambda``
    to an action matrix; an ``apply(lam, x)`` method, when present, is used
    instead of forming the matrix.
    """
    quad = quad or LambdaQuadrature()
    m = grid.m
    mu = grid.measure
    phi_h = lowpass_kernels(cut, "full" if V is not None else "free", grid, V).action
    low_quad = LambdaQuadrature(quad.lambda_min_factor, quad.low_panels, quad.high_width,
                                quad.nodes_per_panel, lam_max=cut.lambda0)
    fast = getattr(kfam, "apply", None)

    def one(lam):
        j = _spectral_vector(lam, grid)
        kj = fast(lam, j) if fast is not None else np.asarray(kfam(lam)) @ j
        nz = np.nonzero(kj)[0]
        if nz.size < grid.n // 2:
            return _g0_columns(lam, grid, nz) @ kj[nz], j
        return g0_reduced(lam, grid).action @ kj, j

    def assemble(lam, wt):
        cols = ordered_map(one, lam, threads)
        ys = np.stack([c[0] for c in cols], axis=1)
        js = np.stack([c[1] for c in cols], axis=1) * mu[:, None]
        c = 1j * np.pi * wt * lam ** (m - 1) * cut.phi2(lam**2) * cut.phi_tilde(lam)
        return (phi_h @ ((ys * c[None, :]) @ js.T),)

    (mat,), rec = _doubling(assemble, low_quad, grid, cut, fail, warn)
    return ReducedKernel.from_action(grid, mat)


def admissibility_score(K):
    """Radial Schur-test proxy: larger of the max weighted row and column sums."""
    g = K.grid
    a = np.abs(K.kernel)
    mu = g.measure
    rows = (a * mu[None, :]).sum(axis=1)
    cols = (a * mu[:, None]).sum(axis=0)
    return float(max(rows.max(initial=0.0), cols.max(initial=0.0)))


@dataclass(frozen=True)
class G0lBoundReport:
    """Ratios of weighted ``lambda``-derivative norms of ``G_0l`` to the bound profile.

    ``ratios[i, k]`` belongs to ``lambdas[i]`` and ``ys[k]``.
    """

    beta: int
    lambdas: np.ndarray
    ys: np.ndarray
    ratios: np.ndarray

    @property
    def max_ratio(self):
        return float(self.ratios.max())

    @property
    def bounded(self):
        return bool(np.all(np.isfinite(self.ratios)))


def g0l_bound_check(lambdas, beta, grid, ys, cut=None, eps=0.1, step=None):
    """Scan ``||<x>^{-beta-eps-m/2} d^beta/dl^beta G_0l(l, ., y)||`` against its bound.

    ``G_0l(l, x, y) = exp(-i l y) (G0(l) Phi0(., y))(x)`` with ``Phi0`` the
    kernel of ``Phi(H0)`` (column of the source node nearest ``y``).
    Derivatives are central differences of order ``beta`` with step ``step``
    (default ``min(lambdas) / (beta + 1)``). The bound profile is
    ``l^{min(0, (m-3)/2 - beta)} <y>^{-(m-1)/2}``.

    Raises
    ------
    DomainError
        If ``beta`` is outside ``0..(m+2)/2`` or the stencil reaches ``l <= 0``.
    """
    m = grid.m
    cut = cut or CutoffPair()
    if int(beta) != beta or beta < 0 or beta > (m + 2) // 2:
        raise DomainError(f"beta must be an integer in 0..{(m + 2) // 2}")
    beta = int(beta)
    lam = np.asarray(lambdas, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(lam <= 0) or np.any(lam >= cut.lambda0):
        raise DomainError("lambdas must lie in (0, lambda0)")
    if step is None:
        step = lam.min() / (beta + 1.0)
    if np.any(lam - 0.5 * beta * step <= 0):
        raise DomainError("beta too high for the lambda lattice: stencil reaches lambda <= 0")
    phi0 = lowpass_kernels(cut, "free", grid).kernel
    cols = [int(np.argmin(np.abs(grid.nodes - y))) for y in ys]
    src = phi0[:, cols]
    wx = (1.0 + grid.nodes**2) ** (-(beta + eps + m / 2.0) / 2.0)
    ks = np.arange(beta + 1)
    coef = np.array([(-1.0) ** (beta - k) * comb(beta, k) for k in ks]) / step**beta
    offs = (ks - beta / 2.0) * step
    ratios = np.empty((lam.size, ys.size))
    for i, l0 in enumerate(lam):
        acc = np.zeros_like(src, dtype=complex)
        for c, o in zip(coef, offs):
            lk = l0 + o
            g = g0_reduced(lk, grid).action
            acc += c * np.exp(-1j * lk * ys)[None, :] * (g @ src)
        for k, y in enumerate(ys):
            norm = _l2(wx * acc[:, k], grid)
            bound = l0 ** min(0.0, (m - 3) / 2.0 - beta) * (1.0 + y**2) ** (-(m - 1) / 4.0)
            ratios[i, k] = norm / bound
    return G0lBoundReport(beta, lam, ys, ratios)

