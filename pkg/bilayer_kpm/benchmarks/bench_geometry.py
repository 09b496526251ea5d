"""
Geometry benchmarks - site enumeration and folding into unit cells.
"""

from bilayer_kpm.geometry import LatticeBasis, equidistribution_discrepancy, fourier_mode_average, lattice_points_in_ball


class SitesSuite:
    """
    Benchmarks for lattice site enumeration.
    """

    params = [50.0, 200.0, 800.0]
    param_names = ["radius"]

    def setup(self, radius):
        self.lattice2 = LatticeBasis.hexagonal()
        self.lattice1 = self.lattice2.rotated(6.0)

    def time_points_in_ball(self, radius):
        """Benchmark enumeration of the sites of B_r."""
        lattice_points_in_ball(self.lattice1, radius)

    def time_discrepancy(self, radius):
        """Benchmark the binned equidistribution discrepancy."""
        equidistribution_discrepancy(self.lattice1, self.lattice2, radius)

    def time_fourier_mode(self, radius):
        """Benchmark a single Fourier-mode ball average."""
        fourier_mode_average(self.lattice1, self.lattice2, (1, 0), radius)
