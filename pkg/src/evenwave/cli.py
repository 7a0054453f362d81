"""Batch experiment runner.

Usage::

    evenwave <subcommand> --config <path> --out <path> [--threads N] [--seed N]

Exit codes: 0 success, 2 invalid configuration or arguments (no output
written), 3 numerical failure or a failed convergence gate (a table marked
``converged: false`` is written when one could be assembled).
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from .config import SUBCOMMANDS, load_config
from .errors import AmbiguityError, ConfigurationError, DomainError, NumericalError
from .parallel import THREADS_ENV, thread_count
from .results import ResultTable, module_versions

__all__ = ["main", "run", "OUTPUT_FORMAT"]

OUTPUT_FORMAT = {
    "resolvent": "csv",
    "classify": "json",
    "inversion": "json",
    "waveop": "json",
    "decay": "csv",
    "harmonic": "csv",
}


class _GateFailure(Exception):
    """A numerical error raised after part of a table was assembled."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


def _l2(u, grid):
    return float(np.sqrt(np.sum(np.abs(u) ** 2 * grid.measure)))


def _potential(cfg, grid, boundary="dirichlet"):
    from .threshold import tune_threshold

    V = cfg.make_potential()
    if cfg.potential.tune:
        V = tune_threshold(grid, V, boundary)
    return V


# ---------------------------------------------------------------------------
# subcommands


def _resolvent(cfg, table, threads, rng):
    from .resolvent import expansion_check, g0_hankel, g0_point, static_constant

    m = cfg.m
    p = cfg.params
    table.columns = ["lambda", "rho", "g0_re", "g0_im", "oracle_re", "oracle_im", "rel_error"]
    table.expected_rows = len(p["lambdas"]) * len(p["rhos"])
    worst = 0.0
    for lam in p["lambdas"]:
        for rho in p["rhos"]:
            v = complex(g0_point(lam, rho, m))
            if lam == 0:
                o = complex(static_constant(m) * rho ** (2.0 - m))
            else:
                o = complex(g0_hankel(lam, rho, m))
            err = abs(v - o) / abs(o)
            worst = max(worst, err)
            table.add(lam, rho, v.real, v.imag, o.real, o.imag, err)
    static = complex(g0_point(0.0, 1.0, m)).real
    rep = expansion_check(cfg.make_grid(), p["expansion_lambdas"])
    table.summary.update(
        max_rel_error=worst,
        static_value=static,
        static_reference=static_constant(m),
        expansion_exponent=rep.fitted_exponent,
        expansion_target=4.0 if m == 6 else None,
        evenness_defect=rep.evenness_defect,
    )
    table.convergence["oracle_rel_error_le_1e-6"] = worst <= 1e-6
    table.convergence["expansion_remainders_finite"] = bool(np.all(np.isfinite(rep.remainder_norms)))


def _classify(cfg, table, threads, rng):
    from .threshold import build_hamiltonian, classify

    grid = cfg.make_grid()
    boundary = cfg.params["boundary"]
    V = _potential(cfg, grid, boundary)
    H = build_hamiltonian(grid, V, boundary)
    try:
        c = classify(H, cfg.params["e_tol"])
    except AmbiguityError as exc:
        table.columns = ["candidate_energy"]
        for e in exc.candidates:
            table.add(float(np.real(e)))
        table.summary.update(kind="ambiguous", d=None)
        table.convergence["classification_decided"] = False
        raise _GateFailure(str(exc), table) from exc
    table.columns = ["mode", "energy"]
    table.expected_rows = c.d
    for i, e in enumerate(c.energies):
        table.add(i, float(e))
    table.summary.update(
        kind=c.kind,
        d=c.d,
        e_tol=c.e_tol,
        coupling=V.coupling,
        candidate_tail_slopes=c.tail_slopes,
        boundary=boundary,
    )
    table.convergence["classification_decided"] = True


def _feshbach_trials(rng, trials, size):
    from .inversion import feshbach_invert, feshbach_split

    worst = 0.0
    for _ in range(trials):
        # redraw until the direct-inverse oracle is itself accurate to the tolerance
        L = np.eye(size) + 0.3 * rng.standard_normal((size, size))
        while np.linalg.cond(L) > 1e3:
            L = np.eye(size) + 0.3 * rng.standard_normal((size, size))
        k = int(rng.integers(1, size))
        q, _ = np.linalg.qr(rng.standard_normal((size, k)))
        P = q @ q.T  # random orthogonal split of rank k
        inv = feshbach_invert(feshbach_split(L, P))
        worst = max(worst, float(np.abs(inv - np.linalg.inv(L)).max()))
    return worst


def _inversion(cfg, table, threads, rng):
    from .inversion import operator_norm, singular_fit, tune_nystrom_threshold
    from .threshold import build_hamiltonian, classify, tune_threshold

    grid = cfg.make_grid()
    p = cfg.params
    V = cfg.make_potential()
    vmax = float(np.max(np.abs(V(grid.nodes)))) if not V.is_zero else 0.0
    table.columns = ["quantity", "value"]
    if cfg.potential.tune:
        # zero space from the finite-difference model, M(lambda) from the Nystrom model
        vfd = tune_threshold(grid, V, "threshold")
        cls = classify(build_hamiltonian(grid, vfd, "threshold"))
        V = tune_nystrom_threshold(grid, V)
    else:
        cls = classify(build_hamiltonian(grid, V))
    fit = singular_fit(grid, V, p["lambdas"])
    coef_norm = operator_norm(fit.fitted_p0v, grid)
    table.add("residual_plain", fit.residual_plain)
    table.add("residual_log", fit.residual_log)
    table.add("rank", fit.rank)
    table.add("singular_coefficient_norm", coef_norm)
    summary = {"kind": cls.kind, "d": cls.d, "rank": fit.rank, "singular_coefficient_norm": coef_norm}
    if cls.d > 0:
        p0v = cls.p0 * V(grid.nodes)[None, :]
        ref = operator_norm(p0v, grid)
        rel = operator_norm(fit.fitted_p0v - p0v, grid) / ref
        table.add("p0v_norm", ref)
        table.add("p0v_rel_error", rel)
        summary.update(p0v_rel_error=rel, p0v_within_5pct=rel <= 0.05)
        table.convergence["fit_residual_small"] = fit.residual_log <= 1e-3
    else:
        ratio = coef_norm / vmax if vmax > 0 else 0.0
        table.add("singular_coefficient_over_v", ratio)
        summary.update(singular_coefficient_over_v=ratio, generic_control_ok=ratio <= 1e-3)
        table.convergence["fit_residual_small"] = fit.residual_log <= 1e-3 or vmax == 0
    fe = _feshbach_trials(rng, p["feshbach_trials"], p["feshbach_size"])
    table.add("feshbach_max_error", fe)
    summary.update(feshbach_trials=p["feshbach_trials"], feshbach_max_error=fe)
    table.summary.update(summary)
    table.convergence["feshbach_le_1e-10"] = fe <= 1e-10


def _waveop(cfg, table, threads, rng):
    from .radial import make_grid
    from .threshold import build_hamiltonian, eigensolve, pc_project
    from .waveop import intertwine_residual, stationary_w, test_functions, time_dependent_w

    grid = cfg.make_grid()
    p = cfg.params
    V = _potential(cfg, grid)
    singular = "auto" if p["singular"] == "auto" else None
    W = stationary_w(grid, V, cfg.cut(), cfg.quad(), singular=singular, threads=threads)
    tests = test_functions(grid, p["tests"])
    n = grid.n
    og = p["oracle_grid"]
    big = make_grid(cfg.m, og.rmax, og.n)
    if abs(big.h - grid.h) > 1e-12 * grid.h or big.n < n:
        raise ConfigurationError("params.oracle_grid must extend the grid with the same spacing")
    td = time_dependent_w(big, V, p["times"])
    table.columns = ["time", "max_rel_diff"]
    table.expected_rows = len(p["times"])
    diffs = []
    for t, Wt in zip(td.times, td.matrices):
        d = max(_l2((W.total - Wt[:n, :n]) @ u, grid) / _l2(u, grid) for u in tests)
        diffs.append(d)
        table.add(float(t), d)
    eig = eigensolve(build_hamiltonian(grid, V))
    iso = 0.0
    for u in tests:
        pu = pc_project(eig, grid.function(u)).samples
        iso = max(iso, abs(_l2(W.total @ pu, grid) / _l2(pu, grid) - 1.0))
    eye_dev = float(np.abs(W.total - np.eye(n)).max())
    table.summary.update(
        oracle_rel_diff=diffs[-1],
        oracle_within_tolerance=diffs[-1] <= 1e-2,
        isometry_defect=iso,
        intertwining_residual=intertwine_residual(W.total, grid, V, tests),
        max_abs_w_minus_i=eye_dev,
        oracle_boundary_mass=td.boundary_mass,
        doubling_change=W.quadrature.get("doubling_change"),
    )
    table.convergence["lambda_quadrature"] = bool(W.quadrature.get("converged", False))
    table.convergence["oracle_reflection_free"] = bool(td.reliable)


def _decay(cfg, table, threads, rng):
    from .dispersive import decay_scan, gaussian_data
    from .waveop import PropagatorOracle

    grid = cfg.make_grid()
    p = cfg.params
    V = _potential(cfg, grid)
    u0 = gaussian_data(grid, p["sigma"])
    oracle = PropagatorOracle(grid, V)
    table.columns = ["p", "time", "norm", "boundary_mass", "fitted_slope", "theoretical_slope"]
    truncated = False
    for q in p["p_list"]:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            d = decay_scan(grid, V, u0, q, p["times"], oracle=oracle, energy_cutoff=p["energy_cutoff"])
        truncated |= d.truncated or any(issubclass(w.category, RuntimeWarning) for w in caught)
        for t, nrm, bm in zip(d.times, d.norms, d.boundary_mass):
            table.add(q, float(t), float(nrm), float(bm), d.fitted_slope, d.theoretical_slope)
        table.summary[f"fitted_slope_p{q:g}"] = d.fitted_slope
        table.summary[f"fit_window_p{q:g}"] = d.fit_window
    # unitarity of the spectral propagator in the norm it conserves
    t = float(p["times"][-1])
    u = oracle.evolve(u0.samples, t)
    s = oracle.full.hamiltonian.scaling
    drift = abs(np.linalg.norm(s * u) / np.linalg.norm(s * u0.samples) - 1.0)
    table.summary["l2_drift"] = drift
    table.summary["window_truncated"] = truncated
    table.convergence["unitary_propagator"] = drift <= 1e-8


def _harmonic(cfg, table, threads, rng):
    from .harmonic import (
        ap_admissible,
        k3_identity,
        pairing,
        pairing_oracle,
        spherical_average,
        tjk_bound_check,
        weighted_opnorm_probe,
    )
    from .radial import make_grid

    p = cfg.params
    cut = cfg.cut()
    m = cfg.m
    table.columns = ["table", "case", "x", "y", "value", "reference", "rel_error"]
    pg = make_grid(m, p["pairing_grid"].rmax, p["pairing_grid"].n)
    widths = [(1.0, 0.7), (0.5, 1.3), (2.0, 0.4)]
    worst_pair = 0.0
    for i, (a, b) in enumerate(widths):
        psi = pg.function(lambda r, a=a: np.exp(-a * r**2) * (1 + 0.3 * r))
        uf = (lambda r, b=b: np.exp(-b * r**2))
        u = pg.function(uf)
        M = spherical_average(psi, uf)
        for lam in p["pairing_lambdas"]:
            ref = pairing_oracle(psi, u, lam)
            val = pairing(psi, u, lam, M=M)
            err = abs(val - ref) / abs(ref)
            worst_pair = max(worst_pair, err)
            table.add("pairing", i, lam, None, abs(val), abs(ref), err)
    worst_k3 = 0.0
    for i in range(p["k3_inputs"]):
        a = 0.5 + 0.25 * i
        psi = pg.function(lambda r, a=a: np.exp(-a * r**2))
        uf = (lambda r, a=a: np.exp(-0.7 * r**2) * (1 + 0.2 * a * r))
        res = k3_identity(spherical_average(psi, uf), cut)
        worst_k3 = max(worst_k3, res)
        table.add("k3", i, a, None, res, 0.0, res)
    stab = 0.0
    finite = True
    for (j, k, variant) in [(0, 1, "t2est"), (1, 0, "t2est"), (1, 1, "t2est"), (0, 1, "t01")]:
        rep = tjk_bound_check(j, k, cut, m, p["tjk_extent"], p["tjk_step"], variant)
        table.add(f"tjk_{variant}", f"{j}{k}", p["tjk_step"], p["tjk_step"] / 2,
                  rep.max_ratio_fine, rep.max_ratio, rep.stability)
        stab = max(stab, rep.stability)
        finite &= rep.finite
    for a, q in p["ap_tests"]:
        table.add("ap_verdict", f"a={a},p={q}", float(a), float(q), int(ap_admissible(a, q)),
                  int(-1 < a < q - 1), 0.0)
    ops = ["hilbert"] if p["skip_probe_max"] else ["hilbert", "max"]
    growth, steps = {}, {}
    for op in ops:
        ratios = []
        for a in p["probe_a"]:
            rep = weighted_opnorm_probe(op, a, p["probe_p"])
            step = rep.max_ratio / ratios[-1] if ratios else None
            table.add(f"ap_probe_{op}", f"a={a},p={p['probe_p']}", float(a), float(p["probe_p"]),
                      rep.max_ratio, step, rep.variation)
            ratios.append(rep.max_ratio)
        # the first weight is the bounded reference; growth is read along the rest
        growth[op] = ratios[-1] / ratios[1]
        steps[op] = min(b / a for a, b in zip(ratios[1:-1], ratios[2:]))
    table.summary.update(
        pairing_max_rel_error=worst_pair,
        k3_max_residual=worst_k3,
        tjk_max_stability=stab,
        probe_growth=growth,
        probe_min_step=steps,
    )
    table.convergence["pairing_le_1e-5"] = worst_pair <= 1e-5
    table.convergence["k3_le_1e-4"] = worst_k3 <= 1e-4
    table.convergence["tjk_finite"] = finite
    table.convergence["tjk_grid_stable_10pct"] = stab <= 0.1


RUNNERS = {
    "resolvent": _resolvent,
    "classify": _classify,
    "inversion": _inversion,
    "waveop": _waveop,
    "decay": _decay,
    "harmonic": _harmonic,
}


def run(subcommand, config_path, out_path, threads=None, seed=0, stderr=None):
    """Run one experiment and write its table. Returns the exit code."""
    stderr = stderr or sys.stderr
    try:
        cfg = load_config(config_path, subcommand)
        nthreads = thread_count(threads)
    except ConfigurationError as exc:
        print(f"evenwave: configuration error: {exc}", file=stderr)
        return 2
    table = ResultTable(subcommand, [])
    table.provenance = {
        "config_sha256": cfg.digest,
        "versions": module_versions(),
        "threads": nthreads,
        "seed": seed,
    }
    rng = np.random.default_rng(seed)
    code = 0
    try:
        RUNNERS[subcommand](cfg, table, nthreads, rng)
    except (ConfigurationError, DomainError) as exc:
        print(f"evenwave: invalid input: {exc}", file=stderr)
        return 2
    except _GateFailure as exc:
        print(f"evenwave: numerical failure: {exc}", file=stderr)
        table = exc.table or table
        code = 3
    except (NumericalError, AmbiguityError) as exc:
        print(f"evenwave: numerical failure: {exc}", file=stderr)
        table.convergence[type(exc).__name__] = False
        table.expected_rows = None
        table.summary["error"] = str(exc)
        code = 3
    if not table.converged:
        failed = sorted(k for k, v in table.convergence.items() if not v)
        print(f"evenwave: convergence gate failed: {', '.join(failed)}", file=stderr)
        code = 3
    if code == 3:
        table.expected_rows = None
        if not table.columns:
            table.columns = ["note"]
    table.write(out_path, OUTPUT_FORMAT[subcommand])
    return code


def build_parser():
    ap = argparse.ArgumentParser(
        prog="evenwave",
        description="Numerical experiments for wave operators of radial Schrodinger operators in even dimensions.",
        epilog=f"Thread count: --threads, else ${THREADS_ENV}, else the CPU count.",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} experiment ({OUTPUT_FORMAT[name].upper()} output)")
        sp.add_argument("--config", required=True, help="JSON experiment configuration")
        sp.add_argument("--out", required=True, help="output file")
        sp.add_argument("--threads", type=int, default=None, help="worker threads")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    return run(args.subcommand, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
