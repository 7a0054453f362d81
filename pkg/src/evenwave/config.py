"""Experiment configuration: a JSON tree validated before any computation.

Top-level keys (keys starting with ``_`` are comments and ignored)::

    m            even dimension >= 4 (>= 6 for classify)
    grid         {"rmax": float > 0, "n": int >= 16}
    potential    {"kind": "zero" | "gaussian" | "exceptional_m6" | "tabulated",
                  "v0": float, "width": float > 0, "delta": float > 0,
                  "path": str (tabulated), "tune": bool}
    lambda0      float in (0, 10]
    quadrature   {"lambda_min_factor": (0,1), "panels": int >= 1,
                  "nodes_per_panel": int >= 2}
    params       subcommand-specific block, see ``PARAM_SCHEMAS``
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .radial import make_grid
from .threshold import (
    gaussian_potential,
    make_exceptional_potential,
    read_tabulated_potential,
    zero_potential,
)
from .waveop import CutoffPair, LambdaQuadrature

__all__ = [
    "SUBCOMMANDS",
    "PARAM_SCHEMAS",
    "GridConfig",
    "PotentialConfig",
    "QuadratureConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]

SUBCOMMANDS = ("resolvent", "classify", "inversion", "waveop", "decay", "harmonic")


def _fail(msg):
    raise ConfigurationError(msg)


def _number(v, name, lo=None, hi=None, integer=False, open_lo=False, open_hi=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{name} must be a number, got {v!r}")
    if integer and (int(v) != v):
        _fail(f"{name} must be an integer, got {v!r}")
    if not np.isfinite(v):
        _fail(f"{name} must be finite")
    if lo is not None and (v < lo or (open_lo and v == lo)):
        _fail(f"{name} = {v} is below its range")
    if hi is not None and (v > hi or (open_hi and v == hi)):
        _fail(f"{name} = {v} is above its range")
    return int(v) if integer else float(v)


def _number_list(v, name, min_len=1, **kw):
    if not isinstance(v, list) or len(v) < min_len:
        _fail(f"{name} must be a list with at least {min_len} entries")
    return [_number(x, f"{name}[{i}]", **kw) for i, x in enumerate(v)]


def _exponent(v, name):
    # p may be "inf"
    if v == "inf":
        return float("inf")
    return _number(v, name, lo=1.0)


def _rational(v, name):
    if isinstance(v, bool):
        _fail(f"{name} must be a rational, got {v!r}")
    try:
        return Fraction(v) if isinstance(v, (str, int)) else Fraction(float(v))
    except (ValueError, ZeroDivisionError, TypeError):
        _fail(f"{name} must be a rational such as \"3/2\", got {v!r}")


def _keys(tree, allowed, where):
    if not isinstance(tree, dict):
        _fail(f"{where} must be an object")
    extra = [k for k in tree if k not in allowed and not str(k).startswith("_")]
    if extra:
        _fail(f"unknown keys in {where}: {', '.join(sorted(extra))}")


@dataclass(frozen=True)
class GridConfig:
    rmax: float = 40.0
    n: int = 300


@dataclass(frozen=True)
class PotentialConfig:
    kind: str = "zero"
    v0: float = 0.0
    width: float = 1.0
    delta: float = 12.0
    path: str | None = None
    tune: bool = False


@dataclass(frozen=True)
class QuadratureConfig:
    lambda_min_factor: float = 1e-4
    panels: int = 10
    nodes_per_panel: int = 8


# name -> (validator, default)
def _p_list(lo=None, hi=None, min_len=1, **kw):
    return lambda v, n: _number_list(v, n, min_len=min_len, lo=lo, hi=hi, **kw)


def _p_num(lo=None, hi=None, **kw):
    return lambda v, n: _number(v, n, lo=lo, hi=hi, **kw)


def _p_choice(*opts):
    def check(v, n):
        if v not in opts:
            _fail(f"{n} must be one of {opts}, got {v!r}")
        return v
    return check


def _p_bool(v, n):
    if not isinstance(v, bool):
        _fail(f"{n} must be true or false")
    return v


def _p_opt_num(lo=None, hi=None, **kw):
    return lambda v, n: None if v is None else _number(v, n, lo=lo, hi=hi, **kw)


def _p_exponents(v, n):
    if not isinstance(v, list) or not v:
        _fail(f"{n} must be a non-empty list")
    return [_exponent(x, f"{n}[{i}]") for i, x in enumerate(v)]


def _p_pairs(v, n):
    if not isinstance(v, list) or not v:
        _fail(f"{n} must be a non-empty list of [a, p] pairs")
    out = []
    for i, pr in enumerate(v):
        if not isinstance(pr, list) or len(pr) != 2:
            _fail(f"{n}[{i}] must be a pair [a, p]")
        a, p = _rational(pr[0], f"{n}[{i}][0]"), _rational(pr[1], f"{n}[{i}][1]")
        if p <= 1:
            _fail(f"{n}[{i}]: p must exceed 1")
        out.append((a, p))
    return out


def _p_rationals(v, n):
    if not isinstance(v, list) or not v:
        _fail(f"{n} must be a non-empty list")
    return [_rational(x, f"{n}[{i}]") for i, x in enumerate(v)]


def _p_probe_a(v, n):
    out = _p_rationals(v, n)
    if len(out) < 2:
        _fail(f"{n} needs a reference weight and at least one more")
    return out


def _p_probe_p(v, n):
    p = _rational(v, n)
    if p <= 1:
        _fail(f"{n} must exceed 1")
    return p


def _p_grid(v, n):
    _keys(v, {"rmax", "n"}, n)
    return GridConfig(_number(v.get("rmax"), f"{n}.rmax", lo=0, open_lo=True),
                      _number(v.get("n"), f"{n}.n", lo=16, integer=True))


PARAM_SCHEMAS = {
    "resolvent": {
        "lambdas": (_p_list(lo=0.0), [0.01, 0.1, 0.5, 1.0, 2.0, 5.0]),
        "rhos": (_p_list(lo=0.0, open_lo=True), [0.1, 0.5, 1.0, 2.0, 5.0]),
        "expansion_lambdas": (_p_list(lo=0.0, hi=0.125, open_lo=True, open_hi=True, min_len=3),
                              [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1]),
    },
    "classify": {
        "boundary": (_p_choice("dirichlet", "threshold"), "dirichlet"),
        "e_tol": (_p_opt_num(lo=0.0, open_lo=True), None),
    },
    "inversion": {
        "lambdas": (_p_list(lo=0.0, hi=1.0, open_lo=True, min_len=6),
                    [0.001, 0.0015, 0.0023, 0.0035, 0.0053, 0.0081, 0.0123, 0.0187, 0.0285, 0.0433, 0.0658, 0.1]),
        "feshbach_trials": (_p_num(lo=1, hi=10000, integer=True), 100),
        "feshbach_size": (_p_num(lo=2, hi=500, integer=True), 20),
    },
    "waveop": {
        "tests": (_p_num(lo=1, hi=50, integer=True), 5),
        "oracle_grid": (_p_grid, GridConfig(120.0, 900)),
        "times": (_p_list(hi=0.0, open_hi=True), [-5.0, -10.0, -20.0]),
        "singular": (_p_choice("none", "auto"), "none"),
    },
    "decay": {
        "p_list": (_p_exponents, [2.0, float("inf")]),
        "times": (_p_list(min_len=3), [6.6, 8.5, 11.0, 14.2, 18.4, 23.8, 30.7, 39.7, 51.2, 66.0]),
        "sigma": (_p_num(lo=0.0, open_lo=True), 1.0),
        "energy_cutoff": (lambda v, n: v if v in ("auto", None) else _number(v, n, lo=0, open_lo=True), "auto"),
    },
    "harmonic": {
        "pairing_lambdas": (_p_list(lo=0.0, open_lo=True), [0.1, 0.5, 1.0, 2.0]),
        "k3_inputs": (_p_num(lo=1, hi=20, integer=True), 5),
        "tjk_extent": (_p_num(lo=1.0, hi=200.0), 50.0),
        "tjk_step": (_p_num(lo=0.05, hi=5.0), 0.5),
        "pairing_grid": (_p_grid, GridConfig(12.0, 240)),
        "ap_tests": (_p_pairs, _p_pairs([["0", "2"], ["1", "2"], ["3/2", "3"], ["-1", "2"], ["1/2", "2"]], "")),
        "probe_a": (_p_probe_a, _p_rationals(["1/2", "9/10", "99/100", "999/1000"], "")),
        "probe_p": (_p_probe_p, Fraction(2)),
        "skip_probe_max": (_p_bool, False),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    Attributes
    ----------
    subcommand : str
    m : int
    grid : GridConfig
    potential : PotentialConfig
    lambda0 : float
    quadrature : QuadratureConfig
    params : dict
        Validated subcommand parameters with defaults filled in.
    canonical : str
        Canonical JSON of the input tree, the basis of the provenance hash.
    """

    subcommand: str
    m: int
    grid: GridConfig
    potential: PotentialConfig
    lambda0: float
    quadrature: QuadratureConfig
    params: dict = field(default_factory=dict)
    canonical: str = ""

    @property
    def digest(self):
        return hashlib.sha256(self.canonical.encode()).hexdigest()

    def make_grid(self):
        return make_grid(self.m, self.grid.rmax, self.grid.n)

    def make_potential(self):
        p = self.potential
        if p.kind == "zero":
            return zero_potential()
        if p.kind == "gaussian":
            return gaussian_potential(p.v0, p.width, p.delta)
        if p.kind == "exceptional_m6":
            return make_exceptional_potential(self.m)
        return read_tabulated_potential(p.path, p.delta)

    def cut(self):
        return CutoffPair(self.lambda0)

    def quad(self):
        q = self.quadrature
        return LambdaQuadrature(q.lambda_min_factor, q.panels, None, q.nodes_per_panel)


def parse_config(tree, subcommand, base_dir=None):
    """Validate a configuration tree for ``subcommand``.

    Raises
    ------
    ConfigurationError
        On any schema or range violation.
    """
    if subcommand not in SUBCOMMANDS:
        _fail(f"unknown subcommand {subcommand!r}")
    _keys(tree, {"m", "grid", "potential", "lambda0", "quadrature", "params"}, "config")
    m = _number(tree.get("m", 6), "m", lo=4, integer=True)
    if m % 2:
        _fail(f"m must be even, got {m}")
    if subcommand == "classify" and m < 6:
        _fail("classify needs m >= 6")
    grid = _p_grid(tree.get("grid", {"rmax": 40.0, "n": 300}), "grid")

    pt = tree.get("potential", {"kind": "zero"})
    _keys(pt, {"kind", "v0", "width", "delta", "path", "tune"}, "potential")
    kind = pt.get("kind", "zero")
    if kind not in ("zero", "gaussian", "exceptional_m6", "tabulated"):
        _fail(f"unknown potential kind {kind!r}")
    path = pt.get("path")
    if kind == "tabulated":
        if not isinstance(path, str):
            _fail("tabulated potentials need a path")
        pp = Path(path)
        if not pp.is_absolute() and base_dir is not None:
            pp = Path(base_dir) / pp
        if not pp.is_file():
            _fail(f"potential table {path!r} not found")
        path = str(pp)
    if kind == "exceptional_m6" and m != 6:
        _fail("the exceptional_m6 potential needs m = 6")
    pot = PotentialConfig(
        kind,
        _number(pt.get("v0", 0.0), "potential.v0"),
        _number(pt.get("width", 1.0), "potential.width", lo=0, open_lo=True),
        _number(pt.get("delta", 12.0), "potential.delta", lo=0, open_lo=True),
        path,
        _p_bool(pt.get("tune", False), "potential.tune"),
    )
    lambda0 = _number(tree.get("lambda0", 0.3), "lambda0", lo=0, hi=10, open_lo=True)

    qt = tree.get("quadrature", {})
    _keys(qt, {"lambda_min_factor", "panels", "nodes_per_panel"}, "quadrature")
    quad = QuadratureConfig(
        _number(qt.get("lambda_min_factor", 1e-4), "quadrature.lambda_min_factor", lo=0, hi=1,
                open_lo=True, open_hi=True),
        _number(qt.get("panels", 10), "quadrature.panels", lo=1, integer=True),
        _number(qt.get("nodes_per_panel", 8), "quadrature.nodes_per_panel", lo=2, integer=True),
    )

    schema = PARAM_SCHEMAS[subcommand]
    raw = tree.get("params", {})
    _keys(raw, set(schema), "params")
    params = {}
    for name, (check, default) in schema.items():
        params[name] = check(raw[name], f"params.{name}") if name in raw else default
    if subcommand == "decay":
        if any(abs(t) < 5 for t in params["times"]):
            _fail("decay times must satisfy |t| >= 5")
        if any(p < 2 for p in params["p_list"]):
            _fail("decay exponents must satisfy p >= 2")

    canonical = json.dumps({"subcommand": subcommand, "config": _strip(tree)}, sort_keys=True,
                           separators=(",", ":"))
    return ExperimentConfig(subcommand, m, grid, pot, lambda0, quad, params, canonical)


def _strip(tree):
    if isinstance(tree, dict):
        return {k: _strip(v) for k, v in tree.items() if not str(k).startswith("_")}
    if isinstance(tree, list):
        return [_strip(v) for v in tree]
    return tree


def load_config(path, subcommand):
    """Read and validate a JSON configuration file.

    Raises
    ------
    ConfigurationError
        If the file is unreadable, not JSON or fails validation.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        _fail(f"cannot read config {path}: {exc}")
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        _fail(f"config {path} is not valid JSON: {exc}")
    return parse_config(tree, subcommand, base_dir=p.parent)
