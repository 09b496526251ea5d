"""
KPM benchmarks - the moment recursion is the hot loop of every study.
"""

import numpy as np

from bilayer_kpm.geometry import ShiftVector
from bilayer_kpm.hamiltonian import assemble
from bilayer_kpm.kpm import chebyshev_moments, jackson_coefficients, ldos_values
from bilayer_kpm.model import builtin_model, spectral_bound


class MomentsSuite:
    """
    Benchmarks for the three-term Chebyshev recursion.
    """

    params = [[64, 256, 1024], [20.0, 60.0]]
    param_names = ["p", "radius"]

    def setup(self, p, radius):
        model = builtin_model("tbg", {"twist_degrees": 6.0})
        self.H = assemble(model, radius, 1, ShiftVector.zero(), window=spectral_bound(model))

    def time_chebyshev_moments(self, p, radius):
        """Benchmark p sparse products on the center orbital."""
        chebyshev_moments(self.H, "A1", p)


class ReconstructionSuite:
    """
    Benchmarks for evaluating the damped series on an energy grid.
    """

    params = [[64, 256, 1024], [101, 401, 2001]]
    param_names = ["p", "points"]

    def setup(self, p, points):
        model = builtin_model("tbg", {"twist_degrees": 6.0})
        window = spectral_bound(model)
        H = assemble(model, 20.0, 1, ShiftVector.zero(), window=window)
        self.moments = chebyshev_moments(H, "A1", p)
        self.kernel = jackson_coefficients(p)
        self.epsilons = np.linspace(-0.9 * window.e_bound, 0.9 * window.e_bound, points)

    def time_jackson_coefficients(self, p, points):
        """Benchmark the damping factors."""
        jackson_coefficients(p)

    def time_ldos_values(self, p, points):
        """Benchmark the vectorized series evaluation."""
        ldos_values(self.moments, self.kernel, self.epsilons)
