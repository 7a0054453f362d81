"""Result tables with provenance, written as CSV or JSON."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np
import scipy

from .errors import ConfigurationError

__all__ = ["ResultTable", "module_versions"]


def module_versions():
    """Versions of the package and its numerical dependencies."""
    try:
        own = metadata.version("evenwave")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"evenwave": own, "numpy": np.__version__, "scipy": scipy.__version__}


def _plain(v):
    # deterministic, JSON-safe scalars
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(format(v, ".15g"))
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": _plain(v.real), "im": _plain(v.imag)}
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".15g")
    return str(v)


@dataclass
class ResultTable:
    """Typed rows with a provenance block.

    Attributes
    ----------
    subcommand : str
    columns : list of str
    rows : list of list
    provenance : dict
        Config hash, module versions, threads, seed.
    convergence : dict
        Named quadrature / fit gates, each True when passed.
    summary : dict
        Verdict-style scalars (JSON output) or header facts (CSV output).
    expected_rows : int or None
        Declared experiment size; checked on write.
    """

    subcommand: str
    columns: list
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    expected_rows: int | None = None

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ConfigurationError(f"row has {len(values)} values for {len(self.columns)} columns")
        self.rows.append(list(values))

    @property
    def converged(self):
        return all(bool(v) for v in self.convergence.values())

    def _check(self):
        if self.expected_rows is not None and len(self.rows) != self.expected_rows:
            raise ConfigurationError(
                f"{self.subcommand}: {len(self.rows)} rows, expected {self.expected_rows}"
            )
        if not self.convergence:
            raise ConfigurationError("result table carries no convergence flags")

    def to_json(self):
        self._check()
        doc = {
            "subcommand": self.subcommand,
            "provenance": _plain(self.provenance),
            "convergence": {k: bool(v) for k, v in self.convergence.items()},
            "converged": self.converged,
            "result": _plain(self.summary),
            "columns": list(self.columns),
            "rows": _plain(self.rows),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        self._check()
        buf = io.StringIO()
        buf.write(f"# subcommand: {self.subcommand}\n")
        for k in sorted(self.provenance):
            buf.write(f"# provenance.{k}: {json.dumps(_plain(self.provenance[k]), sort_keys=True)}\n")
        for k in sorted(self.convergence):
            buf.write(f"# convergence.{k}: {'true' if self.convergence[k] else 'false'}\n")
        buf.write(f"# converged: {'true' if self.converged else 'false'}\n")
        for k in sorted(self.summary):
            buf.write(f"# summary.{k}: {json.dumps(_plain(self.summary[k]), sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def write(self, path, fmt):
        """Write atomically as ``fmt`` (``"csv"`` or ``"json"``)."""
        text = self.to_csv() if fmt == "csv" else self.to_json()
        path = os.fspath(path)
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".evenwave-")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def read_csv_table(path):
    """Parse a CSV written by :meth:`ResultTable.to_csv` into (header, columns, rows)."""
    header = {}
    lines = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].rstrip("\n").partition(": ")
                header[k] = v
            else:
                lines.append(line)
    reader = csv.reader(lines)
    cols = next(reader)
    return header, cols, [r for r in reader]


__all__.append("read_csv_table")
