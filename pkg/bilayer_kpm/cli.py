#!/usr/bin/env python3
"""
Command-line front end for bilayer-kpm.

Usage:
    bilayer-kpm dos --model tbg --twist 6 --r 60 --p 300 --ndisc 3
    bilayer-kpm dos --model monolayer_graphene --r 40 --p 256
    bilayer-kpm ldos --twist 6 --r 30 --p 128 --j 1 --alpha A1 --b 0 0
    bilayer-kpm converge --axis r --twist 6 --p 64 --values 20 30 40 50 60
    bilayer-kpm converge --axis p_coupled --twist 6 --values 32 48 64 96 128 --epsilon 1.5
    bilayer-kpm equidist --twist 6 --values 100 200 400
    bilayer-kpm bench list                 # List available benchmarks
    bilayer-kpm bench run --quick          # Run benchmarks locally

Exit codes: 0 on success, 2 on usage or configuration errors, 1 otherwise.
"""

from __future__ import annotations

import argparse
import importlib
import inspect
import logging
import sys
import time
import warnings
from itertools import product
from typing import Any

import numpy as np

from . import __version__
from .config import RunConfig, build_model, load_config_file
from .dos import Observable, converge_coupled, converge_p, converge_r, ldos_field, observable, quadrature_error_probe, total_dos, vhs_peaks
from .exceptions import (
    BilayerKpmError,
    CommensurabilityWarning,
    ConfigError,
    InsufficientSampleError,
    InvalidBasisError,
    InvalidParameterError,
    MissingDofError,
    OutOfWindowError,
)
from .geometry import ShiftGrid, equidistribution_discrepancy, fourier_mode_average, lattice_points_in_ball, modulate, shift_grid, write_sites
from .hamiltonian import assemble, write_coo
from .kpm import chebyshev_moments
from .model import spectral_bound
from .results import write_convergence, write_dos, write_equidist, write_ldos, write_moments

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

USAGE_ERRORS = (ConfigError, InvalidParameterError, InvalidBasisError, MissingDofError, OutOfWindowError, InsufficientSampleError)

DEFAULT_EPSILON = 0.0
# c_r in r_units per p log p, c_n in shifts per p log p
DEFAULT_COUPLED_C_R = 0.1
DEFAULT_COUPLED_C_N = 0.004
DEFAULT_FOURIER_MODE = (1, 0)

# Benchmark modules to discover
BENCHMARK_MODULES = [
    "bilayer_kpm.benchmarks.bench_geometry",
    "bilayer_kpm.benchmarks.bench_hamiltonian",
    "bilayer_kpm.benchmarks.bench_kpm",
]


def _print_value(name: str, value: Any):
    if isinstance(value, float):
        print(f"{name}: {value:.17g}")
    else:
        print(f"{name}: {value}")


def _output(config: RunConfig) -> str:
    return config.output_path or f"{config.command}.csv"


def _kernel(config: RunConfig) -> str:
    return config.options.get("kernel", "jackson")


def cmd_dos(config: RunConfig) -> int:
    """Total DoS curve to CSV, optionally with Van Hove peak detection."""
    model = build_model(config.model)
    window = spectral_bound(model)
    r = config.radius(model)
    curve = total_dos(model, r, config.p, config.n_disc, config.energies(), threads=config.threads, window=window, kernel=_kernel(config))
    write_dos(_output(config), config, curve)

    _print_value("integral", observable(curve, Observable.custom(np.ones_like)))
    _print_value("band_energy", observable(curve, Observable.fermi_energy()))

    options = config.options
    if options.get("vhs"):
        report = vhs_peaks(curve, center=options.get("vhs_center", 0.0), half_width=options.get("vhs_half_width", 1.0))
        _print_value("vhs_minimum", report.minimum)
        _print_value("vhs_left", report.left_peak)
        _print_value("vhs_right", report.right_peak)
        _print_value("vhs_split", report.split)
    if options.get("dump_matrix"):
        write_coo(assemble(model, r, 1, np.zeros(2), window=window), options["dump_matrix"])
    return EXIT_OK


def _ldos_grid(config: RunConfig, model, j: int) -> ShiftGrid:
    basis = model.lattice(model.opposite(j))
    b = config.options.get("b")
    if b is None:
        return shift_grid(basis, config.n_disc)
    return ShiftGrid(basis=basis, n_disc=1, points=(modulate(basis, b),))


def cmd_ldos(config: RunConfig) -> int:
    """LDoS of one center orbital over a single shift or a shift grid."""
    model = build_model(config.model)
    window = spectral_bound(model)
    r = config.radius(model)
    j = int(config.options.get("j", 1))
    if j not in (1, 2):
        raise ConfigError(f"--j must be 1 or 2, got {j}")
    alpha = config.options.get("alpha") or model.orbitals(j).ids[0]
    grid = _ldos_grid(config, model, j)
    field = ldos_field(model, r, config.p, j, alpha, grid, config.energies(), threads=config.threads, window=window, kernel=_kernel(config))
    write_ldos(_output(config), config, field, {"label": model.label, "j": j, "alpha": alpha, "eta": window.eta, "r_angstrom": r})

    if config.options.get("moments_output"):
        H = assemble(model, r, j, grid.points[0], window=window)
        write_moments(config.options["moments_output"], config, chebyshev_moments(H, alpha, config.p))
    return EXIT_OK


def cmd_converge(config: RunConfig) -> int:
    """Convergence sweep along r, p_coupled, n_disc or p; prints the fitted slope."""
    model = build_model(config.model)
    window = spectral_bound(model)
    options = config.options
    axis = options.get("axis", "r")
    values = options.get("values") or []
    epsilon = float(options.get("epsilon", DEFAULT_EPSILON))

    if axis == "r":
        j = int(options.get("j", 1))
        basis = model.lattice(model.opposite(j))
        b = modulate(basis, options.get("b") or (0.0, 0.0))
        r_list = [config.length(v, model) for v in values]
        report = converge_r(model, config.p, b, r_list, epsilon, j=j, alpha=options.get("alpha"), window=window, kernel=_kernel(config))
    elif axis == "p_coupled":
        c_r = config.length(float(options.get("c_r", DEFAULT_COUPLED_C_R)), model)
        c_n = float(options.get("c_n", DEFAULT_COUPLED_C_N))
        report = converge_coupled(model, [int(v) for v in values], c_r, c_n, epsilon, threads=config.threads, window=window, kernel=_kernel(config))
    elif axis == "n_disc":
        r = config.radius(model)
        report = quadrature_error_probe(model, r, config.p, [int(v) for v in values], epsilon, threads=config.threads, window=window, kernel=_kernel(config))
    elif axis == "p":
        r = config.radius(model)
        report = converge_p(model, r, config.n_disc, [int(v) for v in values], epsilon, threads=config.threads, window=window, kernel=_kernel(config))
    else:
        raise ConfigError(f"Unknown convergence axis {axis!r}")

    write_convergence(_output(config), config, report)
    for param, error in report.samples:
        print(f"{param:.17g} {error:.17g}")
    _print_value("fitted_slope", report.fitted_slope)
    _print_value("r_squared", report.r_squared)
    _print_value("flags", ",".join(report.flags) or "none")
    return EXIT_OK


def cmd_equidist(config: RunConfig) -> int:
    """Equidistribution diagnostics of sheet 1 folded into the unit cell of sheet 2."""
    model = build_model(config.model)
    options = config.options
    mode = tuple(int(m) for m in options.get("mode", DEFAULT_FOURIER_MODE))
    radii = [config.length(v, model) for v in options.get("values") or []]
    if not radii:
        raise ConfigError("equidist needs --values with at least one radius")

    rows = []
    commensurate = False
    for r in radii:
        sites = len(lattice_points_in_ball(model.lattice1, r)[0])
        try:
            discrepancy = equidistribution_discrepancy(model.lattice1, model.lattice2, r)
        except InsufficientSampleError as e:
            logger.warning(f"Skipping discrepancy at r={r:g} A: {e}")
            discrepancy = float("nan")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CommensurabilityWarning)
            average = fourier_mode_average(model.lattice1, model.lattice2, mode, r)
        commensurate = commensurate or any(issubclass(w.category, CommensurabilityWarning) for w in caught)
        rows.append((r, sites, discrepancy, abs(average)))
        print(f"{r:.17g} {sites} {discrepancy:.17g} {abs(average):.17g}")

    write_equidist(_output(config), config, rows, {"label": model.label, "mode": f"{mode[0]},{mode[1]}", "commensurate": commensurate})
    _print_value("commensurate", commensurate)
    if options.get("dump_sites"):
        write_sites(model.lattice1, radii[-1], options["dump_sites"])
    return EXIT_OK


def discover_benchmarks() -> dict[str, dict[str, Any]]:
    """Suites named ``<module>.<Class>`` for every ``*Suite`` class with ``time_*`` methods."""
    suites = {}
    for module_name in BENCHMARK_MODULES:
        try:
            module = importlib.import_module(module_name)
        except ImportError as e:
            logger.warning(f"Skipping benchmark module {module_name}: {e}")
            continue
        prefix = module_name.rsplit(".", 1)[-1].removeprefix("bench_")
        for name, cls in inspect.getmembers(module, inspect.isclass):
            methods = [m for m in dir(cls) if m.startswith("time_") and callable(getattr(cls, m))]
            if name.endswith("Suite") and methods:
                suites[f"{prefix}.{name}"] = {
                    "class": cls,
                    "module": module_name,
                    "methods": methods,
                    "params": getattr(cls, "params", None),
                    "param_names": getattr(cls, "param_names", None),
                }
    return suites


def list_benchmarks() -> int:
    suites = discover_benchmarks()
    if not suites:
        print("No benchmarks found.")
        return EXIT_RUNTIME
    print("Available benchmark suites:\n")
    for suite_name, info in sorted(suites.items()):
        print(f"  {suite_name}")
        grid = _normalize_params(info["params"])
        if grid:
            print("    Parameters: " + ", ".join(f"{k}={v}" for k, v in zip(info["param_names"] or [], grid)))
        print("".join(f"    - {m}\n" for m in info["methods"]))
    return EXIT_OK


def _normalize_params(params: Any) -> list[list]:
    """ASV accepts one flat list for a single parameter; always return a list per parameter."""
    if not params:
        return []
    return [list(p) for p in params] if isinstance(params[0], (list, tuple)) else [params]


def _get_param_combinations(params: Any, param_names: list[str] | None, quick: bool = False) -> list[dict]:
    grid = _normalize_params(params)
    if not grid:
        return [{}]
    names = param_names or [f"param{i}" for i in range(len(grid))]
    if quick:
        grid = [values[:1] for values in grid]
    return [dict(zip(names, combo)) for combo in product(*grid)]


def run_benchmark_method(instance: Any, method_name: str, params: dict, num_runs: int = 3) -> dict:
    """Warm up once, then time ``num_runs`` calls; any exception becomes ``{"error": ...}``."""
    method = getattr(instance, method_name)
    args = tuple(params.values())
    times = []
    try:
        method(*args)
        for _ in range(num_runs):
            start = time.perf_counter()
            method(*args)
            times.append(time.perf_counter() - start)
    except Exception as e:
        return {"error": str(e)}
    return {"min": min(times), "max": max(times), "mean": sum(times) / len(times), "runs": num_runs}


_TIME_UNITS = ((1e-6, 1e9, "ns", 2), (1e-3, 1e6, "µs", 2), (1.0, 1e3, "ms", 2))


def format_time(seconds: float) -> str:
    for limit, scale, unit, digits in _TIME_UNITS:
        if seconds < limit:
            return f"{seconds * scale:.{digits}f} {unit}"
    return f"{seconds:.3f} s"


def _run_suite(info: dict, method_filter: str | None, quick: bool, num_runs: int, verbose: bool) -> tuple[int, int]:
    passed = failed = 0
    methods = [m for m in info["methods"] if not method_filter or method_filter.lower() in m.lower()]
    for params in _get_param_combinations(info["params"], info["param_names"], quick):
        instance = info["class"]()
        try:
            getattr(instance, "setup", lambda *_: None)(*params.values())
        except Exception as e:
            print(f"  Setup failed for {params}: {e}")
            failed += 1
            continue
        suffix = f"({', '.join(f'{k}={v}' for k, v in params.items())})" if params else ""
        for method_name in methods:
            label = method_name.removeprefix("time_") + suffix
            result = run_benchmark_method(instance, method_name, params, num_runs)
            if "error" in result:
                print(f"  ✗ {label}: ERROR - {result['error']}")
                failed += 1
                continue
            spread = f" (min={format_time(result['min'])}, max={format_time(result['max'])})" if verbose else ""
            print(f"  ✓ {label}: {format_time(result['mean'])}{spread}")
            passed += 1
    return passed, failed


def run_benchmarks(
    suite_filter: str | None = None,
    method_filter: str | None = None,
    quick: bool = False,
    num_runs: int = 3,
    verbose: bool = False,
) -> int:
    suites = {k: v for k, v in discover_benchmarks().items() if not suite_filter or suite_filter.lower() in k.lower()}
    if not suites:
        print(f"No benchmarks matching '{suite_filter}' found." if suite_filter else "No benchmarks found.")
        return EXIT_RUNTIME

    import scipy

    print(f"bilayer-kpm {__version__}, numpy {np.__version__}, scipy {scipy.__version__} (quick={quick}, runs={num_runs})")
    passed = failed = 0
    for suite_name, info in sorted(suites.items()):
        print(f"\n{suite_name}")
        suite_passed, suite_failed = _run_suite(info, method_filter, quick, num_runs, verbose)
        passed += suite_passed
        failed += suite_failed
    print(f"\nResults: {passed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def cmd_bench(args: argparse.Namespace) -> int:
    if args.bench_command == "list":
        return list_benchmarks()
    return run_benchmarks(args.suite, args.method, args.quick, args.runs, args.verbose)


COMMANDS = {
    "dos": cmd_dos,
    "ldos": cmd_ldos,
    "converge": cmd_converge,
    "equidist": cmd_equidist,
}


def _model_args() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parent.add_argument("--config", "-c", help="TOML file with [run] settings and a [model] description")
    parent.add_argument("--model", help="Built-in model (tbg, monolayer_graphene)")
    parent.add_argument("--twist", type=float, help="Twist angle in degrees (tbg)")
    parent.add_argument("--interlayer-scale", type=float, help="Scale factor on the interlayer hopping (0 decouples the sheets)")
    parent.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="Further model parameter override")
    parent.add_argument("--r", type=float, help="Cluster radius")
    parent.add_argument("--r-units", choices=["a", "angstrom"], help="Unit of radii: lattice constants (default) or Angstrom")
    parent.add_argument("--p", type=int, help="Chebyshev order (default: 256)")
    parent.add_argument("--ndisc", type=int, help="Shift samples per unit-cell axis (default: 2)")
    parent.add_argument("--energies", nargs=3, type=float, metavar=("MIN", "MAX", "COUNT"), help="Energy grid in eV")
    parent.add_argument("--kernel", choices=["jackson", "printed"], help="Damping kernel (default: jackson)")
    parent.add_argument("--threads", type=int, help="Worker threads (default: one per CPU)")
    parent.add_argument("--seed", type=int, help="Random seed")
    parent.add_argument("--output", "-o", help="Output CSV path (default: <command>.csv)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Density of states of incommensurate bilayers by the kernel polynomial method",
        prog="bilayer-kpm",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    parent = _model_args()

    dos_parser = subparsers.add_parser("dos", parents=[parent], help="Total density of states")
    dos_parser.add_argument("--vhs", action="store_true", help="Report Van Hove peaks around the Dirac point")
    dos_parser.add_argument("--vhs-half-width", type=float, help="Half width in eV of the Van Hove search (default: 1.0)")
    dos_parser.add_argument("--dump-matrix", help="Write H_(r,1)(0) as CSV (row, col, value)")

    ldos_parser = subparsers.add_parser("ldos", parents=[parent], help="Local density of states of a center orbital")
    ldos_parser.add_argument("--j", type=int, help="Sheet of the center orbital (default: 1)")
    ldos_parser.add_argument("--alpha", help="Orbital id (default: first orbital of sheet j)")
    ldos_parser.add_argument("--b", nargs=2, type=float, metavar=("X", "Y"), help="Single shift in Angstrom (default: n_disc x n_disc grid)")
    ldos_parser.add_argument("--moments-output", help="Also write the Chebyshev moments of the first shift")

    converge_parser = subparsers.add_parser("converge", parents=[parent], help="Convergence study")
    converge_parser.add_argument("--axis", choices=["r", "p_coupled", "n_disc", "p"], help="Swept parameter (default: r)")
    converge_parser.add_argument("--values", nargs="+", type=float, help="Swept values (at least 4)")
    converge_parser.add_argument("--epsilon", type=float, help="Energy in eV (default: 0)")
    converge_parser.add_argument("--j", type=int, help="Sheet of the center orbital for the r axis")
    converge_parser.add_argument("--alpha", help="Orbital id for the r axis")
    converge_parser.add_argument("--b", nargs=2, type=float, metavar=("X", "Y"), help="Shift in Angstrom for the r axis")
    converge_parser.add_argument("--c-r", type=float, help="r = c_r p log p, in r units")
    converge_parser.add_argument("--c-n", type=float, help="n_disc = round(c_n p log p)")

    equidist_parser = subparsers.add_parser("equidist", parents=[parent], help="Equidistribution diagnostics")
    equidist_parser.add_argument("--values", nargs="+", type=float, help="Radii")
    equidist_parser.add_argument("--mode", nargs=2, type=int, metavar=("M1", "M2"), help="Fourier mode (default: 1 0)")
    equidist_parser.add_argument("--dump-sites", help="Write the sheet-1 sites of the largest ball as CSV")

    bench_parser = subparsers.add_parser("bench", help="Run performance suites locally")
    bench_subparsers = bench_parser.add_subparsers(dest="bench_command", required=True)
    bench_subparsers.add_parser("list", help="List available benchmarks")
    run_parser = bench_subparsers.add_parser("run", help="Run benchmarks")
    run_parser.add_argument("--suite", "-s", help="Filter to specific suite (e.g., 'kpm', 'hamiltonian')")
    run_parser.add_argument("--method", "-m", help="Filter to specific method name pattern")
    run_parser.add_argument("--quick", "-q", action="store_true", help="Quick mode: smallest parameters only")
    run_parser.add_argument("--runs", "-r", type=int, default=3, help="Number of runs per benchmark (default: 3)")
    run_parser.add_argument("--verbose", "-v", action="store_true", help="Show detailed timing info (min/max)")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides = {}
    if args.twist is not None:
        overrides["twist_degrees"] = args.twist
    if args.interlayer_scale is not None:
        overrides["interlayer_scale"] = args.interlayer_scale
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            overrides[key] = float(value)
        except ValueError:
            raise ConfigError(f"--param {key} must be a number, got {value!r}") from None
    return overrides


OPTION_FLAGS = ("kernel", "vhs", "vhs_half_width", "dump_matrix", "j", "alpha", "b", "moments_output", "axis", "values", "epsilon", "c_r", "c_n", "mode", "dump_sites")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig from parsed flags, layered over an optional TOML config file."""
    file_values = load_config_file(args.config) if args.config else {}
    options = {}
    for name in OPTION_FLAGS:
        value = getattr(args, name, None)
        if value is None or value is False:
            continue
        options[name] = list(value) if isinstance(value, (list, tuple)) else value
    cli_values = {
        "command": args.command,
        "r": args.r,
        "r_units": args.r_units,
        "p": args.p,
        "n_disc": args.ndisc,
        "energy_grid": (args.energies[0], args.energies[1], args.energies[2]) if args.energies else None,
        "output_path": args.output,
        "threads": args.threads,
        "seed": args.seed,
        "model": {"builtin": args.model, "overrides": _overrides(args)},
        "options": options,
    }
    if args.energies and int(args.energies[2]) != args.energies[2]:
        raise ConfigError(f"Energy grid COUNT must be an integer, got {args.energies[2]}")
    return RunConfig.from_sources(file_values, cli_values)


def _configure_logging(verbose: bool):
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)


def main(argv: list[str] | None = None) -> int:
    """Main entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    _configure_logging(getattr(args, "verbose", False))

    if args.command == "bench":
        return cmd_bench(args)

    try:
        config = config_from_args(args)
        logger.info(f"bilayer-kpm {__version__}: {args.command} {config.to_json()}")
        return COMMANDS[args.command](config)
    except USAGE_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except BilayerKpmError as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug("Traceback", exc_info=True)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"Run failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
