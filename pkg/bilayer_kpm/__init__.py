__version__ = "0.1.0"

from .dos import (
    ConvergenceReport,
    DosCurve,
    Observable,
    VhsReport,
    converge_coupled,
    converge_p,
    converge_r,
    default_energy_grid,
    ldos_field,
    observable,
    quadrature_error_probe,
    total_dos,
    vhs_peaks,
)
from .exceptions import *
from .geometry import LatticeBasis, ShiftGrid, ShiftVector, SitePoint, equidistribution_discrepancy, fourier_mode_average, modulate, shift_grid, sites_in_ball
from .hamiltonian import ClusterHamiltonian, assemble, dense_form, matvec
from .kpm import KernelCoefficients, LdosSample, MomentTable, chebyshev_moments, dense_oracle, jackson_coefficients, reconstruct
from .model import HoppingFunction, Orbital, OrbitalSet, SpectralWindow, TBModel, builtin_model, spectral_bound, validate_decay
