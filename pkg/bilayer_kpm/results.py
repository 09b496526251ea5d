"""
CSV output with run provenance.

Every file starts with ``# run: <RunConfig JSON>``, followed by ``# key: value``
lines of derived provenance, a column header and the data. Floats carry 17
significant digits so a file reproduces the in-memory values exactly.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .config import RunConfig
from .dos import ConvergenceReport, DosCurve
from .exceptions import ConfigError
from .geometry import ShiftVector
from .kpm import LdosSample, MomentTable

logger = logging.getLogger(__name__)

RUN_PREFIX = "# run: "
COMMENT = "# "

DOS_COLUMNS = ("energy_eV", "dos_per_eV")
LDOS_COLUMNS = ("shift_frac_1", "shift_frac_2", "energy_eV", "ldos_per_eV")
CONVERGENCE_COLUMNS = ("param", "error", "log_error")
MOMENT_COLUMNS = ("m", "mu")
EQUIDIST_COLUMNS = ("r_angstrom", "sites", "discrepancy", "fourier_abs")


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_table(
    path: str | Path,
    config: RunConfig,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    provenance: Mapping[str, Any] | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        f.write(RUN_PREFIX + config.to_json() + "\n")
        for key, value in (provenance or {}).items():
            f.write(f"{COMMENT}{key}: {format_value(value)}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return path


def write_dos(path: str | Path, config: RunConfig, curve: DosCurve) -> Path:
    provenance = {"label": curve.label, "nu": curve.nu, "eta": curve.eta, "r_angstrom": curve.r, "p": curve.p, "n_disc": curve.n_disc, "kernel": curve.kernel}
    return write_table(path, config, DOS_COLUMNS, zip(curve.epsilons, curve.values), provenance)


def write_ldos(path: str | Path, config: RunConfig, field: Mapping[ShiftVector, list[LdosSample]], provenance: Mapping[str, Any] | None = None) -> Path:
    rows = ((b.frac[0], b.frac[1], s.epsilon, s.value) for b, samples in field.items() for s in samples)
    return write_table(path, config, LDOS_COLUMNS, rows, provenance)


def write_convergence(path: str | Path, config: RunConfig, report: ConvergenceReport) -> Path:
    provenance = {
        "axis": report.axis,
        "fitted_slope": report.fitted_slope,
        "r_squared": report.r_squared,
        "reference": report.reference,
        "flags": ",".join(report.flags) or "none",
    }
    rows = zip(report.params, report.errors, report.log_errors)
    return write_table(path, config, CONVERGENCE_COLUMNS, rows, provenance)


def write_moments(path: str | Path, config: RunConfig, moments: MomentTable) -> Path:
    provenance = {
        "j": moments.j,
        "alpha": moments.alpha,
        "b_x": moments.b.b[0],
        "b_y": moments.b.b[1],
        "b_frac_1": moments.b.frac[0],
        "b_frac_2": moments.b.frac[1],
        "r_angstrom": moments.r,
        "eta": moments.eta,
    }
    return write_table(path, config, MOMENT_COLUMNS, enumerate(moments.mu), provenance)


def write_equidist(path: str | Path, config: RunConfig, rows: Iterable[Sequence[Any]], provenance: Mapping[str, Any] | None = None) -> Path:
    return write_table(path, config, EQUIDIST_COLUMNS, rows, provenance)


def read_header(path: str | Path) -> RunConfig:
    """The RunConfig a file was produced with."""
    with open(path) as f:
        first = f.readline()
    if not first.startswith(RUN_PREFIX):
        raise ConfigError(f"{path} has no run header")
    return RunConfig.from_json(first[len(RUN_PREFIX) :])


def read_provenance(path: str | Path) -> dict[str, str]:
    provenance = {}
    with open(path) as f:
        for line in f:
            if not line.startswith(COMMENT):
                break
            if line.startswith(RUN_PREFIX):
                continue
            key, _, value = line[len(COMMENT) :].rstrip("\n").partition(": ")
            provenance[key] = value
    return provenance


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith(COMMENT)]
    reader = csv.reader(lines)
    try:
        columns = next(reader)
    except StopIteration:
        raise ConfigError(f"{path} has no column header") from None
    return columns, [row for row in reader]


def _expect(path: str | Path, columns: Sequence[str], expected: Sequence[str]):
    if tuple(columns) != tuple(expected):
        raise ConfigError(f"{path}: expected columns {list(expected)}, got {list(columns)}")


def read_dos(path: str | Path) -> DosCurve:
    columns, rows = read_table(path)
    _expect(path, columns, DOS_COLUMNS)
    provenance = read_provenance(path)
    data = np.array(rows, dtype=float).reshape(-1, 2)
    return DosCurve(
        epsilons=data[:, 0],
        values=data[:, 1],
        nu=float(provenance["nu"]),
        r=float(provenance["r_angstrom"]),
        p=int(provenance["p"]),
        n_disc=int(provenance["n_disc"]),
        eta=float(provenance["eta"]),
        label=provenance["label"],
        kernel=provenance.get("kernel", "jackson"),
    )


def read_moments(path: str | Path) -> MomentTable:
    """Load a moment table for offline reconstruction on another energy grid."""
    columns, rows = read_table(path)
    _expect(path, columns, MOMENT_COLUMNS)
    provenance = read_provenance(path)
    mu = np.array([float(row[1]) for row in rows])
    b = ShiftVector(
        (float(provenance["b_x"]), float(provenance["b_y"])),
        (float(provenance["b_frac_1"]), float(provenance["b_frac_2"])),
    )
    return MomentTable(
        mu=mu,
        j=int(provenance["j"]),
        alpha=provenance["alpha"],
        b=b,
        r=float(provenance["r_angstrom"]),
        eta=float(provenance["eta"]),
    )
