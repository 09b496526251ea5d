"""
Hamiltonian benchmarks - cluster assembly and sparse products.
"""

import numpy as np

from bilayer_kpm.geometry import ShiftVector
from bilayer_kpm.hamiltonian import assemble, matvec
from bilayer_kpm.model import builtin_model, spectral_bound


class AssemblySuite:
    """
    Benchmarks for H_(r,j)(b) assembly on twisted bilayer graphene.
    """

    params = [20.0, 40.0, 80.0]
    param_names = ["radius"]

    def setup(self, radius):
        self.model = builtin_model("tbg", {"twist_degrees": 6.0})
        self.window = spectral_bound(self.model)
        self.H = assemble(self.model, radius, 1, ShiftVector.zero(), window=self.window)
        self.v = np.random.default_rng(0).standard_normal(self.H.n)

    def time_assemble(self, radius):
        """Benchmark neighbor search and CSR construction."""
        assemble(self.model, radius, 1, ShiftVector.zero(), window=self.window)

    def time_matvec(self, radius):
        """Benchmark one sparse matrix-vector product."""
        matvec(self.H, self.v)


class SpectralBoundSuite:
    """
    Benchmarks for the Gershgorin spectral window.
    """

    def setup(self):
        self.model = builtin_model("tbg", {"twist_degrees": 6.0})

    def time_spectral_bound(self):
        """Benchmark row sums over the default shift sample."""
        spectral_bound(self.model)
