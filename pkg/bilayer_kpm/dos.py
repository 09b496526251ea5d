"""
Total density of states by shift-grid quadrature, observables and convergence studies.

The total DoS is

    D(e) = nu / N^2 * sum_j sum_{alpha in A_j} sum_{b in S_{P_j}} |Gamma_{P_j}| L_alpha[H_{r,j}(b)](e)

where L is the Jackson-damped LDoS of the center orbital. Every (j, b) cluster
is an independent job; jobs run on a thread pool and results are gathered in
submission order before the fixed-order reduction sheet -> orbital -> shift.
"""

from __future__ import annotations

import logging
import math
import os
import time
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks
from scipy.special import expit
from scipy.stats import linregress

from .exceptions import InsufficientSampleError, InvalidParameterError, MissingDofError
from .geometry import ShiftGrid, ShiftVector, shift_grid
from .hamiltonian import assemble
from .kpm import LdosSample, MomentTable, chebyshev_moments, jackson_coefficients, ldos_values, reconstruct, scaled_energies
from .model import SpectralWindow, TBModel, spectral_bound

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 401
DEFAULT_GRID_FRACTION = 0.98
DEFAULT_KT = 0.025
DEFAULT_MU = 0.0
MIN_CONVERGENCE_SAMPLES = 4
REFERENCE_R_FACTOR = 1.5
REFERENCE_P_FACTOR = 1.5
REFERENCE_N_DISC_FACTOR = 2
REFERENCE_KERNEL_FACTOR = 2
RELATIVE_ERROR_FLOOR = 1e-12
PEAK_PROMINENCE = 1e-3

# fitted log-log slopes for the coupled sweep
C2_SLOPE_RANGE = (-2.5, -1.5)
LIPSCHITZ_SLOPE_RANGE = (-1.5, -0.5)


@dataclass(frozen=True, eq=False)
class DosCurve:
    epsilons: np.ndarray
    values: np.ndarray
    nu: float
    r: float
    p: int
    n_disc: int
    eta: float
    label: str
    kernel: str = "jackson"

    def __post_init__(self):
        if len(self.epsilons) != len(self.values):
            raise InvalidParameterError(f"DoS curve has {len(self.epsilons)} energies but {len(self.values)} values")

    @property
    def params(self) -> dict[str, Any]:
        return {"r": self.r, "p": self.p, "n_disc": self.n_disc, "eta": self.eta, "label": self.label, "kernel": self.kernel}

    def __len__(self) -> int:
        return len(self.epsilons)


@dataclass(frozen=True)
class Observable:
    """
    A test function g(e) integrated against the DoS.

    Use the factory classmethods; ``evaluator`` must be vectorized over energies.
    """

    kind: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def fermi_energy(cls, mu: float = DEFAULT_MU, kT: float = DEFAULT_KT) -> Observable:
        """Band energy density U_T: e / (1 + exp((e - mu) / kT))."""
        _check_temperature(kT)
        return cls("fermi_energy_weighted", lambda e: e * expit(-(e - mu) / kT), {"mu": mu, "kT": kT})

    @classmethod
    def fermi_occupation(cls, mu: float = DEFAULT_MU, kT: float = DEFAULT_KT) -> Observable:
        """Electron count F_T: 1 / (1 + exp((e - mu) / kT))."""
        _check_temperature(kT)
        return cls("fermi_occupation", lambda e: expit(-(e - mu) / kT), {"mu": mu, "kT": kT})

    @classmethod
    def indicator(cls, lo: float, hi: float) -> Observable:
        if not lo < hi:
            raise InvalidParameterError(f"Indicator needs lo < hi, got [{lo}, {hi}]")
        return cls("indicator", lambda e: np.where((e >= lo) & (e <= hi), 1.0, 0.0), {"lo": lo, "hi": hi})

    @classmethod
    def custom(cls, evaluator: Callable[[np.ndarray], np.ndarray], **params: float) -> Observable:
        return cls("custom", evaluator, dict(params))

    def __call__(self, epsilons) -> np.ndarray:
        epsilons = np.asarray(epsilons, dtype=float)
        return np.broadcast_to(np.asarray(self.evaluator(epsilons), dtype=float), epsilons.shape)


def _check_temperature(kT: float):
    if not (np.isfinite(kT) and kT > 0):
        raise InvalidParameterError(f"kT must be positive, got {kT}")


@dataclass(frozen=True)
class ConvergenceReport:
    axis: str
    samples: tuple[tuple[float, float], ...]
    fitted_slope: float
    r_squared: float
    reference: str
    flags: tuple[str, ...] = ()

    @property
    def params(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples], dtype=float)

    @property
    def errors(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples], dtype=float)

    @property
    def log_errors(self) -> np.ndarray:
        errors = self.errors
        with np.errstate(divide="ignore"):
            return np.where(errors > 0, np.log(np.where(errors > 0, errors, 1.0)), -np.inf)


@dataclass(frozen=True)
class VhsReport:
    """Local maxima around the Dirac-point minimum of a DoS curve."""

    minimum: float | None
    left_peak: float | None
    right_peak: float | None
    peaks: tuple[float, ...]

    @property
    def split(self) -> bool:
        return self.left_peak is not None and self.right_peak is not None

    @property
    def separation(self) -> float | None:
        return self.right_peak - self.left_peak if self.split else None


def default_energy_grid(window: SpectralWindow, count: int = DEFAULT_GRID_POINTS, fraction: float = DEFAULT_GRID_FRACTION) -> np.ndarray:
    """``count`` uniform energies spanning ``fraction`` of the scaled window [-E, E]."""
    if count < 2:
        raise InvalidParameterError(f"Energy grid needs at least 2 points, got {count}")
    if not 0 < fraction < 1:
        raise InvalidParameterError(f"Window fraction must lie in (0, 1), got {fraction}")
    edge = fraction * window.e_bound
    return np.linspace(-edge, edge, count)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise InvalidParameterError(f"threads must be >= 1, got {threads}")
    return int(threads)


def _gather(job: Callable, items: Sequence, threads: int | None) -> list:
    """Run ``job`` over ``items`` and return results in item order; the first failure propagates."""
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers == 1:
        return [job(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(job, items))


@dataclass(frozen=True, eq=False)
class _Term:
    weight: float
    moments: MomentTable


def _collect_moments(model: TBModel, r: float, p: int, n_disc: int, window: SpectralWindow, threads: int | None) -> list[_Term]:
    """Moment tables of every quadrature term, ordered sheet -> orbital -> shift."""
    jobs = []
    for j in (1, 2):
        if not len(model.orbitals(j)):
            continue
        grid = shift_grid(model.lattice(model.opposite(j)), n_disc)
        jobs.extend((j, point) for point in grid)

    def run(job: tuple[int, ShiftVector]) -> list[MomentTable]:
        j, point = job
        H = assemble(model, r, j, point, window=window)
        logger.debug(f"Cluster j={j} b={point.frac}: n={H.n}, nnz={H.nnz}")
        return [chebyshev_moments(H, alpha, p) for alpha in model.orbitals(j).ids]

    start = time.perf_counter()
    logger.info(f"Computing {len(jobs)} clusters (r={r:g} A, p={p}, n_disc={n_disc}) on {min(resolve_threads(threads), len(jobs))} threads")
    results = _gather(run, jobs, threads)
    logger.info(f"Finished {len(jobs)} clusters in {time.perf_counter() - start:.2f}s")

    by_job = dict(zip(jobs, results))
    terms = []
    for j in (1, 2):
        orbitals = model.orbitals(j)
        if not len(orbitals):
            continue
        weight = model.nu * model.lattice(model.opposite(j)).cell_area / n_disc**2
        for index, _ in enumerate(orbitals):
            for job in jobs:
                if job[0] == j:
                    terms.append(_Term(weight, by_job[job][index]))
    return terms


def _reduce(terms: Iterable[_Term], p: int, epsilons: np.ndarray, kernel: str = "jackson") -> np.ndarray:
    coefficients = jackson_coefficients(p, kernel)
    rows = [
        term.weight * ldos_values(term.moments if term.moments.p == p else term.moments.truncated(p), coefficients, epsilons)
        for term in terms
    ]
    if not rows:
        return np.zeros(len(epsilons))
    # pairwise summation over terms, along the contiguous axis
    return np.sum(np.ascontiguousarray(np.stack(rows).T), axis=1)


def _prepare(model: TBModel, window: SpectralWindow | None, epsilons) -> tuple[SpectralWindow, np.ndarray]:
    window = window or spectral_bound(model)
    epsilons = default_energy_grid(window) if epsilons is None else np.atleast_1d(np.asarray(epsilons, dtype=float))
    scaled_energies(epsilons, window.eta)
    return window, epsilons


def _check_order(p: int):
    if int(p) != p or p < 1:
        raise InvalidParameterError(f"Polynomial order p must be a positive integer, got {p}")


def total_dos(
    model: TBModel,
    r: float,
    p: int,
    n_disc: int,
    epsilons=None,
    threads: int | None = None,
    window: SpectralWindow | None = None,
    kernel: str = "jackson",
) -> DosCurve:
    """
    Approximate DoS D(e) on ``epsilons`` from n_disc^2 shifted clusters per sheet.

    Args:
        model: The bilayer model.
        r: Cluster radius in Angstrom.
        p: Chebyshev order.
        n_disc: Shift samples per unit-cell axis.
        epsilons: Energies in eV, default 401 points over 98% of the window.
        threads: Worker threads, default one per CPU.
        window: Spectral window, default from the Gershgorin bound.
        kernel: Damping kernel, see ``jackson_coefficients``.
    """
    if not r > 0:
        raise InvalidParameterError(f"Cluster radius must be positive, got {r}")
    _check_order(p)
    window, epsilons = _prepare(model, window, epsilons)
    terms = _collect_moments(model, r, int(p), n_disc, window, threads)
    values = _reduce(terms, int(p), epsilons, kernel)
    return DosCurve(epsilons, values, model.nu, float(r), int(p), int(n_disc), window.eta, model.label, kernel)


def observable(curve: DosCurve, obs: Observable) -> float:
    """Trapezoid quadrature of D(e) g(e) over the curve's energy grid."""
    g = obs(curve.epsilons)
    if not np.all(np.isfinite(g)):
        raise InvalidParameterError(f"Observable {obs.kind} is not finite on the energy grid")
    return float(trapezoid(curve.values * g, curve.epsilons))


def ldos_field(
    model: TBModel,
    r: float,
    p: int,
    j: int,
    alpha: str,
    grid: ShiftGrid,
    epsilons=None,
    threads: int | None = None,
    window: SpectralWindow | None = None,
    kernel: str = "jackson",
) -> dict[ShiftVector, list[LdosSample]]:
    """LDoS of center orbital ``alpha`` of sheet ``j`` for every shift of ``grid``."""
    if j not in (1, 2):
        raise InvalidParameterError(f"j must be 1 or 2, got {j}")
    if alpha not in model.orbitals(j).ids:
        raise MissingDofError(f"Orbital {alpha!r} is not on sheet {j}; available: {list(model.orbitals(j).ids)}")
    _check_order(p)
    window, epsilons = _prepare(model, window, epsilons)
    coefficients = jackson_coefficients(p, kernel)

    def run(point: ShiftVector) -> list[LdosSample]:
        H = assemble(model, r, j, point, window=window, fold=False)
        return reconstruct(chebyshev_moments(H, alpha, p), coefficients, epsilons)

    points = list(grid)
    return dict(zip(points, _gather(run, points, threads)))


def _check_sweep(values: Sequence[float], name: str) -> list[float]:
    values = list(values)
    if len(values) < MIN_CONVERGENCE_SAMPLES:
        raise InsufficientSampleError(f"{name} needs at least {MIN_CONVERGENCE_SAMPLES} values, got {len(values)}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidParameterError(f"{name} must be strictly increasing, got {values}")
    return values


def _errors(values: Sequence[float], reference: float) -> tuple[np.ndarray, list[str]]:
    values = np.asarray(values, dtype=float)
    if abs(reference) < RELATIVE_ERROR_FLOOR:
        return np.abs(values - reference), ["absolute-error"]
    return np.abs(values - reference) / abs(reference), []


def _fit(x: np.ndarray, errors: np.ndarray, flags: list[str]) -> tuple[float, float]:
    """Least-squares slope of log(error) against x over the positive errors."""
    positive = errors > 0
    if np.count_nonzero(positive) < MIN_CONVERGENCE_SAMPLES:
        flags.append("too-few-positive-errors")
        return math.nan, math.nan
    fit = linregress(x[positive], np.log(errors[positive]))
    return float(fit.slope), float(fit.rvalue**2)


def _report(axis: str, params: Sequence[float], errors: np.ndarray, fit_x: np.ndarray, reference: str, flags: list[str]) -> ConvergenceReport:
    slope, r_squared = _fit(fit_x, errors, flags)
    report = ConvergenceReport(
        axis=axis,
        samples=tuple((float(a), float(e)) for a, e in zip(params, errors)),
        fitted_slope=slope,
        r_squared=r_squared,
        reference=reference,
        flags=tuple(flags),
    )
    logger.info(f"Convergence along {axis}: slope={slope:.4g}, R^2={r_squared:.4g}, flags={list(report.flags)}")
    return report


def _center_ldos(model: TBModel, r: float, p: int, j: int, alpha: str, b, epsilon: float, window: SpectralWindow, kernel: str) -> float:
    H = assemble(model, r, j, b, window=window)
    return float(ldos_values(chebyshev_moments(H, alpha, p), jackson_coefficients(p, kernel), [epsilon])[0])


def converge_r(
    model: TBModel,
    p: int,
    b: ShiftVector,
    r_list: Sequence[float],
    epsilon: float,
    j: int = 1,
    alpha: str | None = None,
    window: SpectralWindow | None = None,
    kernel: str = "jackson",
) -> ConvergenceReport:
    """
    Relative error of the center LDoS L(r) at ``epsilon`` against a reference at 1.5 max(r).

    The slope is fitted to log(error) against r, so exponential decay shows as
    a negative slope with a high R^2.
    """
    r_list = _check_sweep(r_list, "r_list")
    _check_order(p)
    alpha = alpha or model.orbitals(j).ids[0]
    window, _ = _prepare(model, window, [epsilon])
    r_ref = REFERENCE_R_FACTOR * r_list[-1]
    reference = _center_ldos(model, r_ref, p, j, alpha, b, epsilon, window, kernel)
    values = [_center_ldos(model, r, p, j, alpha, b, epsilon, window, kernel) for r in r_list]
    errors, flags = _errors(values, reference)
    description = f"center LDoS of {alpha} (j={j}, b={b.frac}) at r={r_ref:g} A, p={p}, e={epsilon:g} eV: {reference:.17g}"
    return _report("r", r_list, errors, np.asarray(r_list, dtype=float), description, flags)


def coupled_parameters(p: int, c_r: float, c_n: float) -> tuple[float, int]:
    """r = c_r p log p and n_disc = max(1, round(c_n p log p))."""
    scale = p * math.log(p)
    return c_r * scale, max(1, round(c_n * scale))


def converge_coupled(
    model: TBModel,
    p_list: Sequence[int],
    c_r: float,
    c_n: float,
    epsilon: float,
    threads: int | None = None,
    window: SpectralWindow | None = None,
    kernel: str = "jackson",
) -> ConvergenceReport:
    """
    Pointwise DoS error with r and n_disc growing like p log p.

    The slope is fitted to log(error) against log(p); a smooth DoS gives about
    -2, a merely Lipschitz one about -1.
    """
    p_list = _check_sweep(p_list, "p_list")
    if not (c_r > 0 and c_n > 0):
        raise InvalidParameterError(f"c_r and c_n must be positive, got {c_r}, {c_n}")
    window, _ = _prepare(model, window, [epsilon])

    def value(p: int) -> float:
        r, n_disc = coupled_parameters(p, c_r, c_n)
        logger.info(f"Coupled sample p={p}: r={r:.4g} A, n_disc={n_disc}")
        return float(total_dos(model, r, p, n_disc, [epsilon], threads=threads, window=window, kernel=kernel).values[0])

    p_ref = round(REFERENCE_P_FACTOR * p_list[-1])
    reference = value(p_ref)
    errors, flags = _errors([value(p) for p in p_list], reference)
    report = _report(
        "p_coupled",
        p_list,
        errors,
        np.log(np.asarray(p_list, dtype=float)),
        f"D({epsilon:g} eV) at p={p_ref} with c_r={c_r:g}, c_n={c_n:g}: {reference:.17g}",
        flags,
    )
    return _classify(report)


def _classify(report: ConvergenceReport) -> ConvergenceReport:
    slope = report.fitted_slope
    if C2_SLOPE_RANGE[0] <= slope <= C2_SLOPE_RANGE[1]:
        label = "consistent-with-C2"
    elif LIPSCHITZ_SLOPE_RANGE[0] <= slope <= LIPSCHITZ_SLOPE_RANGE[1]:
        label = "consistent-with-Lipschitz"
    else:
        label = "inconclusive"
    return ConvergenceReport(report.axis, report.samples, report.fitted_slope, report.r_squared, report.reference, (*report.flags, label))


def quadrature_error_probe(
    model: TBModel,
    r: float,
    p: int,
    n_disc_list: Sequence[int],
    epsilon: float,
    threads: int | None = None,
    window: SpectralWindow | None = None,
    kernel: str = "jackson",
) -> ConvergenceReport:
    """Error of the shift-grid sum at fixed r and p as n_disc grows, against 2 max(n_disc)."""
    n_disc_list = _check_sweep(n_disc_list, "n_disc_list")
    _check_order(p)
    window, _ = _prepare(model, window, [epsilon])
    n_ref = REFERENCE_N_DISC_FACTOR * n_disc_list[-1]

    def value(n_disc: int) -> float:
        return float(total_dos(model, r, p, n_disc, [epsilon], threads=threads, window=window, kernel=kernel).values[0])

    reference = value(n_ref)
    errors, flags = _errors([value(n) for n in n_disc_list], reference)
    return _report(
        "n_disc",
        n_disc_list,
        errors,
        np.asarray(n_disc_list, dtype=float),
        f"D({epsilon:g} eV) at n_disc={n_ref}, r={r:g} A, p={p}: {reference:.17g}",
        flags,
    )


def converge_p(
    model: TBModel,
    r: float,
    n_disc: int,
    p_list: Sequence[int],
    epsilon: float,
    threads: int | None = None,
    window: SpectralWindow | None = None,
    kernel: str = "jackson",
) -> ConvergenceReport:
    """
    Kernel-order sweep at fixed r and n_disc against a reference at 2 max(p).

    Moments are computed once to the reference order and truncated, since
    mu_m does not depend on the order it is computed to.
    """
    p_list = _check_sweep(p_list, "p_list")
    for p in p_list:
        _check_order(p)
    window, _ = _prepare(model, window, [epsilon])
    p_ref = REFERENCE_KERNEL_FACTOR * int(p_list[-1])
    terms = _collect_moments(model, r, p_ref, n_disc, window, threads)
    energies = np.array([epsilon])
    reference = float(_reduce(terms, p_ref, energies, kernel)[0])
    values = [float(_reduce(terms, int(p), energies, kernel)[0]) for p in p_list]
    errors, flags = _errors(values, reference)
    return _report(
        "p",
        p_list,
        errors,
        np.log(np.asarray(p_list, dtype=float)),
        f"D({epsilon:g} eV) at p={p_ref}, r={r:g} A, n_disc={n_disc}: {reference:.17g}",
        flags,
    )


def vhs_peaks(curve: DosCurve, center: float = 0.0, half_width: float = 1.0, prominence: float = PEAK_PROMINENCE) -> VhsReport:
    """
    Van Hove peaks flanking the lowest local minimum of D(e) in [center - half_width, center + half_width].

    ``prominence`` is relative to the largest DoS value in the range.
    """
    inside = np.abs(curve.epsilons - center) <= half_width
    epsilons = curve.epsilons[inside]
    values = curve.values[inside]
    if len(values) < 3:
        return VhsReport(None, None, None, ())
    threshold = prominence * float(np.max(np.abs(values)))
    maxima, _ = find_peaks(values, prominence=threshold)
    minima, _ = find_peaks(-values, prominence=threshold)
    peaks = tuple(float(e) for e in epsilons[maxima])
    if not len(minima):
        return VhsReport(None, None, None, peaks)
    lowest = minima[int(np.argmin(values[minima]))]
    left = [i for i in maxima if i < lowest]
    right = [i for i in maxima if i > lowest]
    return VhsReport(
        minimum=float(epsilons[lowest]),
        left_peak=float(epsilons[left[-1]]) if left else None,
        right_peak=float(epsilons[right[0]]) if right else None,
        peaks=peaks,
    )
