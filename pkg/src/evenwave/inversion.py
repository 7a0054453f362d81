"""``M(lambda) = 1 + G0(lambda) V``, its inverse and the threshold singularity.

Operators are represented by Nystrom action matrices on the radial grid:
``(G0 V f)_i = sum_j kappa_ij V_j f_j w_j r_j^{m-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, NearSingularError, NumericalError
from .resolvent import g0_reduced

__all__ = [
    "MLambdaMatrix",
    "FeshbachDecomposition",
    "SingularFit",
    "KPropertyReport",
    "operator_norm",
    "g0_action",
    "m_lambda",
    "invert_m",
    "tune_nystrom_threshold",
    "feshbach_split",
    "feshbach_invert",
    "singular_basis",
    "singular_fit",
    "kproperty_probe",
]


def operator_norm(action, grid, left=None, right=None):
    """``L^2(R^m)`` operator norm of an action matrix with optional weights.

    ``left`` and ``right`` are multiplier samples applied as
    ``diag(left) A diag(right)``.
    """
    s = np.sqrt(grid.measure)
    a = np.asarray(action)
    if left is not None:
        a = left[:, None] * a
    if right is not None:
        a = a * right[None, :]
    return float(np.linalg.norm(s[:, None] * a / s[None, :], 2))


def g0_action(lam, grid):
    """Action matrix of ``G0(lambda)``."""
    return g0_reduced(lam, grid).action


@dataclass(frozen=True, eq=False)
class MLambdaMatrix:
    """Matrix of ``1 + G0(lambda) V`` with a 2-norm condition estimate."""

    lam: float
    matrix: np.ndarray
    condition: float
    smallest_singular_value: float


def m_lambda(lam, grid, V):
    """Assemble ``M(lambda) = 1 + G0(lambda) V`` on the grid."""
    n = grid.n
    v = V(grid.nodes)
    if not np.any(v):
        eye = np.eye(n, dtype=complex)
        return MLambdaMatrix(float(lam), eye, 1.0, 1.0)
    mat = np.eye(n, dtype=complex) + g0_action(lam, grid) * v[None, :]
    sv = np.linalg.svd(mat, compute_uv=False)
    return MLambdaMatrix(float(lam), mat, float(sv[0] / sv[-1]), float(sv[-1]))


def invert_m(M, max_condition=1e12, tol=1e-8):
    """Dense inverse of ``M(lambda)``.

    Raises
    ------
    NearSingularError
        If the condition estimate exceeds ``max_condition``.
    NumericalError
        If ``||M M^{-1} - I||_max > tol``.
    """
    if M.condition > max_condition:
        raise NearSingularError(
            f"M({M.lam:g}) is numerically singular (condition {M.condition:.3e})",
            M.smallest_singular_value,
        )
    inv = np.linalg.inv(M.matrix)
    res = np.abs(M.matrix @ inv - np.eye(inv.shape[0])).max()
    if res > tol:
        raise NumericalError(f"inverse residual {res:.3e} exceeds {tol:g}")
    return inv


def tune_nystrom_threshold(grid, V):
    """Rescale the coupling of ``V`` so ``M(0)`` of the Nystrom model is exactly singular.

    The eigenvalue ``mu`` of ``G0(0) V`` closest to ``-1`` is moved to ``-1``
    by multiplying the coupling by ``-1 / mu``.
    """
    a = g0_action(0.0, grid).real * V(grid.nodes)[None, :]
    mu = np.linalg.eigvals(a)
    k = int(np.argmin(np.abs(mu + 1.0)))
    if abs(mu[k].imag) > 1e-8 * abs(mu[k]):
        raise NumericalError("eigenvalue of G0(0)V nearest -1 is not real")
    return V.with_coupling(V.coupling * (-1.0 / mu[k].real))


@dataclass(frozen=True, eq=False)
class FeshbachDecomposition:
    """Block form of ``L`` for the split ``X = ran(1 - P) + ran P``.

    Attributes
    ----------
    blocks : tuple
        ``(L00, L01, L10, L11)`` in the adapted coordinates.
    basis : ndarray
        Columns spanning ``ran(1 - P)`` then ``ran P``.
    k : int
        Dimension of ``ran(1 - P)``.
    """

    blocks: tuple
    basis: np.ndarray
    k: int

    @property
    def schur(self):
        l00, l01, l10, l11 = self.blocks
        return l11 - l10 @ np.linalg.solve(l00, l01)

    def reassemble(self):
        l00, l01, l10, l11 = self.blocks
        full = np.block([[l00, l01], [l10, l11]])
        t = self.basis
        return t @ full @ np.linalg.inv(t)


def _range_basis(p, tol=1e-8):
    u, s, _ = np.linalg.svd(p)
    rank = int(np.sum(s > tol * max(s[0], 1.0))) if s.size else 0
    return u[:, :rank]


def feshbach_split(L, P):
    """Block decomposition of ``L`` with respect to the projection ``P``.

    ``P`` need not be orthogonal; the adapted basis is formed from the ranges
    of ``1 - P`` and ``P``.
    """
    L = np.asarray(L)
    P = np.asarray(P)
    n = L.shape[0]
    if np.abs(P @ P - P).max() > 1e-8 * max(1.0, np.abs(P).max()):
        raise ConfigurationError("split operator is not a projection")
    b0 = _range_basis(np.eye(n) - P)
    b1 = _range_basis(P)
    if b0.shape[1] + b1.shape[1] != n:
        raise NumericalError("projection ranges do not span the space")
    t = np.hstack([b0, b1])
    lt = np.linalg.solve(t, L @ t)
    k = b0.shape[1]
    blocks = (lt[:k, :k], lt[:k, k:], lt[k:, :k], lt[k:, k:])
    return FeshbachDecomposition(blocks, t, k)


def feshbach_invert(F, refine=1):
    """Inverse of ``L`` through the Schur complement ``C = L11 - L10 L00^{-1} L01``.

    Blocks of the inverse are ``L00^{-1} + L00^{-1} L01 C^{-1} L10 L00^{-1}``,
    ``-L00^{-1} L01 C^{-1}``, ``-C^{-1} L10 L00^{-1}`` and ``C^{-1}``.
    Rounding in the block formula grows like ``cond(L00) cond(C)``; each of
    the ``refine`` Newton steps ``X <- X + X (I - L X)`` squares the residual.

    Raises
    ------
    NearSingularError
        If ``L00`` or ``C`` is singular.
    """
    l00, l01, l10, l11 = F.blocks

    def check(a, name):
        if a.size == 0:
            return
        s = np.linalg.svd(a, compute_uv=False)
        if s[-1] <= 1e-14 * s[0]:
            raise NearSingularError(f"{name} is singular", s[-1])

    check(l00, "L00")
    k = F.k
    if k:
        x01 = np.linalg.solve(l00, l01)  # L00^{-1} L01
        x10 = np.linalg.solve(l00.T, l10.T).T  # L10 L00^{-1}
        c = l11 - l10 @ x01
    else:
        x01 = l01
        x10 = l10
        c = l11
    check(c, "Schur complement C")
    if c.size:
        ic = np.linalg.inv(c)
    else:
        ic = c
    if k:
        i00 = np.linalg.inv(l00)
        b00 = i00 + x01 @ ic @ x10
    else:
        b00 = l00
    full = np.block([[b00, -x01 @ ic], [-ic @ x10, ic]])
    t = F.basis
    x = t @ full @ np.linalg.inv(t)
    if refine:
        L = F.reassemble()
        eye = np.eye(L.shape[0])
        for _ in range(int(refine)):
            x = x + x @ (eye - L @ x)
    return x


def singular_basis(lam, log_terms=True):
    """Columns of the threshold fit basis evaluated at ``lam``.

    Plain basis: ``lambda^-2, 1``. Log basis adds
    ``lambda^j log^k lambda`` for ``j = 0, 1, 2`` and ``k = 1, 2``.
    """
    lam = np.asarray(lam, dtype=float)
    cols = [lam**-2.0, np.ones_like(lam)]
    if log_terms:
        lg = np.log(lam)
        for j in range(3):
            for k in (1, 2):
                cols.append(lam**j * lg**k)
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class SingularFit:
    """Least-squares fit of ``M(lambda)^{-1} - I`` near ``lambda = 0``.

    Attributes
    ----------
    lambdas : ndarray
    fitted_p0v : ndarray
        Coefficient of ``lambda^-2`` (log basis), an action matrix.
    fitted_p0v_plain : ndarray
        Coefficient of ``lambda^-2`` with the plain basis.
    residual_plain, residual_log : float
        Relative Frobenius residuals of the two fits.
    rank : int
        Numerical rank of ``fitted_p0v`` (singular values above 1e-3 of the largest).
    coefficients : ndarray
        All log-basis coefficients, shape ``(8, N, N)``.
    """

    lambdas: np.ndarray
    fitted_p0v: np.ndarray
    fitted_p0v_plain: np.ndarray
    residual_plain: float
    residual_log: float
    rank: int
    coefficients: np.ndarray

    def model(self, lam):
        """Fitted ``M(lambda)^{-1}`` (identity plus the log-basis expansion)."""
        b = singular_basis(np.array([float(lam)]), True)[0]
        n = self.coefficients.shape[1]
        return np.eye(n) + np.tensordot(b, self.coefficients, axes=1)


def singular_fit(grid, V, lambdas=None):
    """Fit ``M(lambda)^{-1} - I`` against the threshold singular basis.

    Raises
    ------
    DomainError
        With fewer than six samples.
    """
    if lambdas is None:
        lambdas = np.geomspace(1e-3, 1e-1, 12)
    lam = np.asarray(lambdas, dtype=float)
    if lam.size < 6:
        raise DomainError("singular fit needs at least 6 lambda samples")
    n = grid.n
    data = np.empty((lam.size, n * n), dtype=complex)
    for i, x in enumerate(lam):
        M = m_lambda(x, grid, V)
        data[i] = (np.linalg.inv(M.matrix) - np.eye(n)).ravel()

    def fit(log_terms):
        b = singular_basis(lam, log_terms)
        # column scaling keeps the normal equations well conditioned
        sc = np.linalg.norm(b, axis=0)
        coef, *_ = np.linalg.lstsq(b / sc, data, rcond=None)
        coef = coef / sc[:, None]
        res = np.linalg.norm(b @ coef - data) / np.linalg.norm(data)
        return coef.reshape(-1, n, n), float(res)

    c_plain, r_plain = fit(False)
    c_log, r_log = fit(True)
    p_log = c_log[0]
    sv = np.linalg.svd(p_log, compute_uv=False)
    rank = int(np.sum(sv > 1e-3 * sv[0])) if sv[0] > 0 else 0
    return SingularFit(lam, p_log, c_plain[0], r_plain, r_log, rank, c_log)


@dataclass(frozen=True)
class KPropertyReport:
    """Sup norms of weighted lambda-derivatives of an operator family.

    Attributes
    ----------
    lambdas : ndarray
    norms : ndarray
        ``norms[j, i]`` is the weighted norm of the j-th derivative at ``lambdas[i]``.
    growth : ndarray
        Per order, blow-up rate ``-d log(norm / <log lambda>^2) / d log lambda``
        fitted over the lower half (in ``log lambda``) of the lattice.
    violated : bool
    """

    lambdas: np.ndarray
    norms: np.ndarray
    growth: np.ndarray
    violated: bool


def kproperty_probe(kfam, rho, orders, grid, lambdas, gamma=3.0, growth_limit=0.25):
    """Probe property ``(K)_rho`` on a lambda lattice.

    Finite-difference derivatives (``numpy.gradient`` on the lattice) of
    ``<r>^{rho-gamma} K(lambda) <r>^{rho-gamma}`` are measured in the
    ``L^2`` operator norm. A family is flagged when some order grows faster
    than ``<log lambda>^2`` toward 0: the norm divided by ``<log lambda>^2``
    behaves like ``lambda^-growth`` with ``growth > growth_limit``.

    Parameters
    ----------
    kfam : callable
        ``lambda -> action matrix``.
    orders : int
        Highest derivative order, at most 2.
    """
    lam = np.sort(np.asarray(lambdas, dtype=float))
    if orders > 2 or orders < 0:
        raise DomainError("orders must lie in 0..2")
    if lam.size < orders + 3:
        raise DomainError("lambda lattice too coarse for the requested order")
    wt = (1.0 + grid.nodes**2) ** ((rho - gamma) / 2.0)
    mats = np.array([wt[:, None] * np.asarray(kfam(x)) * wt[None, :] for x in lam])
    derivs = [mats]
    for _ in range(orders):
        derivs.append(np.gradient(derivs[-1], lam, axis=0))
    norms = np.array([[operator_norm(d[i], grid) for i in range(lam.size)] for d in derivs])
    scale = 1.0 + np.log(lam) ** 2
    scaled = norms / scale[None, :]
    x = np.log(lam)
    low = x <= 0.5 * (x[0] + x[-1])
    if low.sum() < 2:
        low[:2] = True
    growth = np.zeros(len(derivs))
    floor = 1e-12 * max(float(norms.max()), 1e-300)
    for j in range(len(derivs)):
        y = scaled[j, low]
        if np.all(y > floor):
            growth[j] = -np.polyfit(x[low], np.log(y), 1)[0]
    return KPropertyReport(lam, norms, growth, bool(np.any(growth > growth_limit)))
