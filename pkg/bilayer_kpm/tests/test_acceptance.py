"""
Desk-scale reproduction runs for twisted bilayer graphene at 6 degrees.

These take minutes each and are deselected by default; run with ``pytest -m slow``.
"""

import numpy as np
import pytest

A = 2.46

pytestmark = pytest.mark.slow


class TestDosAcceptance:
    """Total DoS of the 6 degree bilayer."""

    def test_normalization(self, tbg6, tbg6_window):
        """Test that the DoS integrates to one at r = 30a, p = 256, n_disc = 2."""
        from bilayer_kpm.dos import Observable, observable, total_dos

        curve = total_dos(tbg6, 30 * A, 256, 2, window=tbg6_window)
        assert observable(curve, Observable.custom(np.ones_like)) == pytest.approx(1.0, abs=2e-2)
        assert curve.values.min() >= -1e-9

    def test_van_hove_peaks(self, tbg6, tbg6_window, monolayer):
        """Test split maxima around the Dirac point of the bilayer and none for the monolayer at r = 60a, p = 300, n_disc = 3."""
        from bilayer_kpm.dos import total_dos, vhs_peaks

        epsilons = np.linspace(-1.0, 1.0, 201)
        curve = total_dos(tbg6, 60 * A, 300, 3, epsilons, window=tbg6_window)
        report = vhs_peaks(curve, half_width=1.0)
        assert report.split
        assert report.left_peak < report.minimum < report.right_peak

        single = total_dos(monolayer, 60 * A, 300, 3, epsilons)
        assert not vhs_peaks(single, half_width=1.0).split

    def test_parallel_output_identical(self, tmp_path):
        """Test that runs with one and four threads write byte-identical data rows."""
        from bilayer_kpm.cli import main

        outputs = []
        for threads in ("1", "4"):
            output = tmp_path / f"dos_{threads}.csv"
            argv = ["dos", "--twist", "6", "--r", "30", "--p", "128", "--ndisc", "2", "--threads", threads, "--output", str(output)]
            assert main(argv) == 0
            outputs.append(output.read_bytes())
        # the header records the thread count, the data must not depend on it
        data = [b"\n".join(line for line in o.splitlines() if not line.startswith(b"# run:")) for o in outputs]
        assert data[0] == data[1]


class TestConvergenceAcceptance:
    """Convergence sweeps."""

    def test_radius_convergence(self, tbg6, tbg6_window):
        """Test that the center LDoS error decays exponentially in r at p = 64, e = 0."""
        from bilayer_kpm.dos import converge_r
        from bilayer_kpm.geometry import ShiftVector

        report = converge_r(tbg6, 64, ShiftVector.zero(), [20 * A, 30 * A, 40 * A, 50 * A, 60 * A], 0.0, window=tbg6_window)
        assert report.fitted_slope < 0.0
        assert report.r_squared > 0.9

    def test_coupled_convergence(self, tbg6, tbg6_window):
        """Test that the coupled sweep error falls like p^-2."""
        from bilayer_kpm.dos import converge_coupled

        report = converge_coupled(tbg6, [32, 48, 64, 96, 128], 0.1 * A, 0.004, 1.5, window=tbg6_window)
        assert -2.5 <= report.fitted_slope <= -1.5
        assert "consistent-with-C2" in report.flags
        assert report.errors[-1] < report.errors[0]


class TestEquidistributionAcceptance:
    """Equidistribution of the 6 degree lattice pair."""

    def test_discrepancy_decreases(self, tbg6):
        """Test monotone decay of the binned discrepancy along r = 100a, 200a, 400a."""
        from bilayer_kpm.geometry import equidistribution_discrepancy

        values = [equidistribution_discrepancy(tbg6.lattice1, tbg6.lattice2, k * A) for k in (100, 200, 400)]
        assert values[0] > values[1] > values[2]

    def test_fourier_average_decays(self, tbg6):
        """Test that the (1, 0) mode average shrinks from 200a to 400a."""
        from bilayer_kpm.geometry import fourier_mode_average

        def windowed(r):
            return max(abs(fourier_mode_average(tbg6.lattice1, tbg6.lattice2, (1, 0), r * (1.0 + 0.02 * k))) for k in range(10))

        assert windowed(400 * A) <= 0.6 * windowed(200 * A)
