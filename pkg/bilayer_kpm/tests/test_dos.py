"""Tests for the total DoS, observables, LDoS fields and convergence studies."""

import numpy as np
import pytest

A = 2.46


class TestTotalDos:
    """Tests for the shift-grid quadrature of the DoS."""

    def test_onsite_model(self, onsite_model, wide_window):
        """Test that H = e0 I reproduces chi_p(., e0) exactly."""
        from bilayer_kpm.dos import total_dos
        from bilayer_kpm.kpm import jackson_coefficients, kernel_delta

        epsilons = np.linspace(-1.9, 1.9, 381)
        curve = total_dos(onsite_model, 10.0, 96, 2, epsilons, threads=1, window=wide_window)
        expected = kernel_delta(jackson_coefficients(96), wide_window.eta, epsilons, 0.5)
        assert np.allclose(curve.values, expected, rtol=1e-10, atol=1e-12)
        assert abs(epsilons[np.argmax(curve.values)] - 0.5) <= epsilons[1] - epsilons[0]

    def test_decoupled_matches_monolayer(self, decoupled, monolayer):
        """Test that two uncoupled aligned sheets give the monolayer DoS."""
        from bilayer_kpm.dos import total_dos
        from bilayer_kpm.model import SpectralWindow

        window = SpectralWindow(9.0)
        epsilons = np.linspace(-8.0, 8.0, 81)
        bilayer = total_dos(decoupled, 8 * A, 64, 2, epsilons, threads=1, window=window)
        single = total_dos(monolayer, 8 * A, 64, 2, epsilons, threads=1, window=window)
        assert np.allclose(bilayer.values, single.values, rtol=1e-10, atol=1e-12)

    def test_thread_count_does_not_change_result(self, tbg6, tbg6_window):
        """Test that parallel evaluation is bitwise identical to serial evaluation."""
        from bilayer_kpm.dos import total_dos

        epsilons = np.linspace(-3.0, 3.0, 41)
        serial = total_dos(tbg6, 5 * A, 48, 2, epsilons, threads=1, window=tbg6_window)
        parallel = total_dos(tbg6, 5 * A, 48, 2, epsilons, threads=4, window=tbg6_window)
        assert np.array_equal(serial.values, parallel.values)

    def test_matches_ldos_sum(self, tbg6, tbg6_window):
        """Test D = nu / N^2 sum_j sum_alpha sum_b |Gamma_(P_j)| L."""
        from bilayer_kpm.dos import ldos_field, total_dos
        from bilayer_kpm.geometry import shift_grid

        r, p, n_disc = 4 * A, 32, 2
        epsilons = np.linspace(-2.0, 2.0, 9)
        curve = total_dos(tbg6, r, p, n_disc, epsilons, threads=1, window=tbg6_window)
        expected = np.zeros(len(epsilons))
        for j in (1, 2):
            basis = tbg6.lattice(tbg6.opposite(j))
            grid = shift_grid(basis, n_disc)
            for alpha in tbg6.orbitals(j).ids:
                field = ldos_field(tbg6, r, p, j, alpha, grid, epsilons, threads=1, window=tbg6_window)
                for samples in field.values():
                    expected += tbg6.nu * basis.cell_area / n_disc**2 * np.array([s.value for s in samples])
        assert np.allclose(curve.values, expected, rtol=1e-12, atol=1e-14)

    def test_quadrature_weights_sum_to_one(self, tbg6, tbg6_window):
        """Test nu / N^2 sum_j |A_j| N^2 |Gamma_(P_j)| = 1."""
        from bilayer_kpm.dos import _collect_moments

        terms = _collect_moments(tbg6, 3 * A, 4, 3, tbg6_window, threads=1)
        assert len(terms) == 2 * 2 * 9
        assert sum(term.weight for term in terms) == pytest.approx(1.0, rel=1e-12)
        assert [term.moments.j for term in terms[:18]] == [1] * 18
        assert [term.moments.alpha for term in terms[:9]] == ["A1"] * 9

    def test_reduction_close_to_exact_sum(self, tbg6, tbg6_window):
        """Test that the weighted sum over terms agrees with a correctly rounded sum."""
        import math

        from bilayer_kpm.dos import _collect_moments, _reduce
        from bilayer_kpm.kpm import jackson_coefficients, ldos_values

        epsilons = np.linspace(-2.0, 2.0, 7)
        terms = _collect_moments(tbg6, 3 * A, 24, 3, tbg6_window, threads=1)
        kernel = jackson_coefficients(24)
        rows = [term.weight * ldos_values(term.moments, kernel, epsilons) for term in terms]
        exact = [math.fsum(row[k] for row in rows) for k in range(len(epsilons))]
        assert np.allclose(_reduce(terms, 24, epsilons), exact, rtol=1e-14, atol=1e-16)
        assert np.array_equal(_reduce([], 24, epsilons), np.zeros(7))

    def test_particle_hole_symmetry(self, monolayer):
        """Test that the bipartite monolayer has D(e) = D(-e) and half filling at mu = 0."""
        from bilayer_kpm.dos import Observable, observable, total_dos

        curve = total_dos(monolayer, 10 * A, 128, 1, threads=1)
        assert np.allclose(curve.values, curve.values[::-1], rtol=1e-9, atol=1e-12)
        integral = observable(curve, Observable.custom(np.ones_like))
        assert integral == pytest.approx(1.0, abs=2e-2)
        assert observable(curve, Observable.custom(lambda e: e)) == pytest.approx(0.0, abs=1e-6)
        assert observable(curve, Observable.fermi_occupation()) == pytest.approx(0.5 * integral, abs=1e-9)
        assert curve.values.min() >= -1e-9

    def test_curve_metadata(self, tbg6, tbg6_window):
        """Test the provenance carried by a DoS curve."""
        from bilayer_kpm.dos import total_dos

        curve = total_dos(tbg6, 3 * A, 16, 1, threads=1, window=tbg6_window, kernel="printed")
        assert len(curve) == 401
        assert curve.nu == tbg6.nu
        assert curve.eta == tbg6_window.eta
        assert curve.params == {"r": 3 * A, "p": 16, "n_disc": 1, "eta": tbg6_window.eta, "label": "tbg_6deg", "kernel": "printed"}

    def test_out_of_window(self, tbg6, tbg6_window):
        """Test that energies beyond the window raise OutOfWindowError."""
        from bilayer_kpm.dos import total_dos
        from bilayer_kpm.exceptions import OutOfWindowError

        with pytest.raises(OutOfWindowError):
            total_dos(tbg6, 3 * A, 16, 1, [0.0, 2.0 * tbg6_window.e_bound], threads=1, window=tbg6_window)

    def test_invalid_arguments(self, tbg6, tbg6_window):
        """Test that r <= 0 and p < 1 raise InvalidParameterError."""
        from bilayer_kpm.dos import total_dos
        from bilayer_kpm.exceptions import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            total_dos(tbg6, -1.0, 16, 1, [0.0], window=tbg6_window)
        with pytest.raises(InvalidParameterError):
            total_dos(tbg6, 5.0, 0, 1, [0.0], window=tbg6_window)
        with pytest.raises(InvalidParameterError):
            total_dos(tbg6, 5.0, 16, 1, [0.0], threads=0, window=tbg6_window)


class TestDefaultEnergyGrid:
    """Tests for the default energy grid."""

    def test_spans_window(self, wide_window):
        """Test 401 points over 98% of [-E, E]."""
        from bilayer_kpm.dos import default_energy_grid

        grid = default_energy_grid(wide_window)
        assert len(grid) == 401
        assert grid[0] == pytest.approx(-1.96)
        assert grid[-1] == pytest.approx(1.96)

    def test_invalid_grid(self, wide_window):
        """Test that fewer than 2 points raises InvalidParameterError."""
        from bilayer_kpm.dos import default_energy_grid
        from bilayer_kpm.exceptions import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            default_energy_grid(wide_window, count=1)


class TestObservable:
    """Tests for integrals of the DoS against test functions."""

    @pytest.fixture
    def onsite_curve(self, onsite_model, wide_window):
        from bilayer_kpm.dos import total_dos

        return total_dos(onsite_model, 10.0, 128, 1, np.linspace(-1.99, 1.99, 2001), threads=1, window=wide_window)

    def test_integral(self, onsite_curve):
        """Test that the DoS of one orbital per cell integrates to one."""
        from bilayer_kpm.dos import Observable, observable

        assert observable(onsite_curve, Observable.custom(np.ones_like)) == pytest.approx(1.0, abs=1e-3)

    def test_fermi_occupation(self, onsite_curve):
        """Test that a level below mu is fully occupied and one above is empty."""
        from bilayer_kpm.dos import Observable, observable

        assert observable(onsite_curve, Observable.fermi_occupation(mu=1.0)) == pytest.approx(1.0, abs=1e-3)
        assert observable(onsite_curve, Observable.fermi_occupation(mu=0.0)) == pytest.approx(0.0, abs=1e-3)

    def test_fermi_energy(self, onsite_curve):
        """Test that an occupied level at 0.5 eV contributes 0.5 eV."""
        from bilayer_kpm.dos import Observable, observable

        assert observable(onsite_curve, Observable.fermi_energy(mu=1.0)) == pytest.approx(0.5, abs=2e-3)

    def test_indicator(self, onsite_curve):
        """Test an indicator window around the level."""
        from bilayer_kpm.dos import Observable, observable

        assert observable(onsite_curve, Observable.indicator(0.3, 0.7)) == pytest.approx(1.0, abs=1e-2)

    def test_invalid_observables(self):
        """Test that kT <= 0 and lo >= hi raise InvalidParameterError."""
        from bilayer_kpm.dos import Observable
        from bilayer_kpm.exceptions import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            Observable.fermi_energy(kT=0.0)
        with pytest.raises(InvalidParameterError):
            Observable.indicator(1.0, 1.0)

    def test_non_finite_observable(self, onsite_curve):
        """Test that a test function with poles raises InvalidParameterError."""
        from bilayer_kpm.dos import Observable, observable
        from bilayer_kpm.exceptions import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            with np.errstate(divide="ignore", invalid="ignore"):
                observable(onsite_curve, Observable.custom(lambda e: 1.0 / (e - e)))


class TestLdosField:
    """Tests for the LDoS over a shift grid."""

    def test_field_shape(self, tbg6, tbg6_window):
        """Test one sample list per shift with the shift recorded on every sample."""
        from bilayer_kpm.dos import ldos_field
        from bilayer_kpm.geometry import shift_grid

        grid = shift_grid(tbg6.lattice2, 2)
        epsilons = np.linspace(-1.0, 1.0, 5)
        field = ldos_field(tbg6, 3 * A, 24, 1, "A1", grid, epsilons, threads=2, window=tbg6_window)
        assert list(field) == list(grid)
        for b, samples in field.items():
            assert len(samples) == 5
            assert all(s.b == b and s.alpha == "A1" and s.j == 1 for s in samples)
            assert min(s.value for s in samples) >= -1e-10

    def test_decoupled_field_independent_of_shift(self, decoupled):
        """Test that without interlayer hopping the LDoS does not see the shift."""
        from bilayer_kpm.dos import ldos_field
        from bilayer_kpm.geometry import shift_grid
        from bilayer_kpm.model import SpectralWindow

        epsilons = np.linspace(-6.0, 6.0, 13)
        field = ldos_field(decoupled, 5 * A, 48, 1, "B1", shift_grid(decoupled.lattice2, 2), epsilons, threads=1, window=SpectralWindow(9.0))
        curves = [np.array([s.value for s in samples]) for samples in field.values()]
        assert len(curves) == 4
        for curve in curves[1:]:
            assert np.allclose(curve, curves[0], rtol=1e-12, atol=1e-14)

    def test_limit_periodicity(self, tbg6, tbg6_window):
        """Test that the LDoS at b and b + A_2 (1, 0) draws together as r doubles."""
        from bilayer_kpm.dos import ldos_field
        from bilayer_kpm.geometry import ShiftGrid, ShiftVector

        basis = tbg6.lattice2
        b = basis.to_cartesian((0.25, 0.4))
        b_next = b + basis.to_cartesian((1, 0))
        grid = ShiftGrid(
            basis=basis,
            n_disc=1,
            points=(ShiftVector(tuple(map(float, b)), (0.25, 0.4)), ShiftVector(tuple(map(float, b_next)), (1.25, 0.4))),
        )
        epsilons = np.linspace(-2.0, 2.0, 9)

        def gap(r):
            field = ldos_field(tbg6, r, 24, 1, "A1", grid, epsilons, threads=1, window=tbg6_window)
            first, second = ([s.value for s in samples] for samples in field.values())
            return np.max(np.abs(np.subtract(first, second)))

        near, far = gap(3 * A), gap(6 * A)
        assert near > 0.0
        assert far < near

    def test_orbital_on_wrong_sheet(self, tbg6, tbg6_window):
        """Test that an orbital of the other sheet raises MissingDofError."""
        from bilayer_kpm.dos import ldos_field
        from bilayer_kpm.exceptions import MissingDofError
        from bilayer_kpm.geometry import shift_grid

        with pytest.raises(MissingDofError):
            ldos_field(tbg6, 3 * A, 24, 2, "B1", shift_grid(tbg6.lattice1, 1), [0.0], window=tbg6_window)


class TestConvergence:
    """Tests for convergence sweeps."""

    def test_too_few_values(self, tbg6, tbg6_window):
        """Test that fewer than four sweep values raise InsufficientSampleError."""
        from bilayer_kpm.dos import converge_r
        from bilayer_kpm.exceptions import InsufficientSampleError
        from bilayer_kpm.geometry import ShiftVector

        with pytest.raises(InsufficientSampleError):
            converge_r(tbg6, 16, ShiftVector.zero(), [10.0, 20.0, 30.0], 0.0, window=tbg6_window)

    def test_not_increasing(self, tbg6, tbg6_window):
        """Test that a non-increasing sweep raises InvalidParameterError."""
        from bilayer_kpm.dos import converge_p
        from bilayer_kpm.exceptions import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            converge_p(tbg6, 3 * A, 1, [8, 16, 16, 32], 0.0, window=tbg6_window)

    def test_decoupled_radius_errors_vanish(self, decoupled):
        """Test that a decoupled center row saturates once the ball holds every path of length p."""
        from bilayer_kpm.dos import converge_r
        from bilayer_kpm.geometry import ShiftVector
        from bilayer_kpm.model import SpectralWindow

        report = converge_r(decoupled, 8, ShiftVector.zero(), [3 * A, 4 * A, 5 * A, 6 * A], 0.3, window=SpectralWindow(9.0))
        assert max(report.errors) <= 1e-12

    def test_converge_p_matches_direct_runs(self, tbg6, tbg6_window):
        """Test that truncated reference moments agree with separate DoS runs."""
        from bilayer_kpm.dos import converge_p, total_dos

        r, n_disc, epsilon = 4 * A, 1, 0.7
        report = converge_p(tbg6, r, n_disc, [8, 16, 24, 32], epsilon, threads=1, window=tbg6_window)
        reference = total_dos(tbg6, r, 64, n_disc, [epsilon], threads=1, window=tbg6_window).values[0]
        value = total_dos(tbg6, r, 16, n_disc, [epsilon], threads=1, window=tbg6_window).values[0]
        assert report.axis == "p"
        assert report.params.tolist() == [8.0, 16.0, 24.0, 32.0]
        assert report.errors[1] == pytest.approx(abs(value - reference) / abs(reference), rel=1e-9, abs=1e-15)
        assert "p=64" in report.reference

    def test_constant_values_flagged(self, onsite_model, wide_window):
        """Test that exact agreement with the reference leaves no slope to fit."""
        from bilayer_kpm.dos import converge_r
        from bilayer_kpm.geometry import ShiftVector

        report = converge_r(onsite_model, 32, ShiftVector.zero(), [4.0, 6.0, 8.0, 10.0], 0.4, window=wide_window)
        assert np.all(report.errors == 0.0)
        assert np.isnan(report.fitted_slope)
        assert "too-few-positive-errors" in report.flags
        assert np.all(np.isneginf(report.log_errors))

    def test_quadrature_probe(self, tbg6, tbg6_window):
        """Test the n_disc sweep report."""
        from bilayer_kpm.dos import quadrature_error_probe

        report = quadrature_error_probe(tbg6, 3 * A, 16, [1, 2, 3, 4], 0.5, threads=1, window=tbg6_window)
        assert report.axis == "n_disc"
        assert len(report.samples) == 4
        assert np.all(report.errors >= 0.0)
        assert "n_disc=8" in report.reference

    def test_coupled_parameters(self):
        """Test r = c_r p log p and n_disc = round(c_n p log p)."""
        from bilayer_kpm.dos import coupled_parameters

        r, n_disc = coupled_parameters(100, 0.1, 0.004)
        assert r == pytest.approx(10.0 * np.log(100.0))
        assert n_disc == 2
        assert coupled_parameters(2, 0.1, 1e-6)[1] == 1

    def test_invalid_coupling(self, tbg6, tbg6_window):
        """Test that non-positive coupling constants raise InvalidParameterError."""
        from bilayer_kpm.dos import converge_coupled
        from bilayer_kpm.exceptions import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            converge_coupled(tbg6, [8, 16, 24, 32], 0.0, 0.004, 0.0, window=tbg6_window)

    @pytest.mark.parametrize(
        "slope,label",
        [(-2.0, "consistent-with-C2"), (-1.0, "consistent-with-Lipschitz"), (-0.1, "inconclusive"), (float("nan"), "inconclusive")],
    )
    def test_classification(self, slope, label):
        """Test the smoothness label attached to coupled sweeps."""
        from bilayer_kpm.dos import ConvergenceReport, _classify

        report = ConvergenceReport("p_coupled", ((32.0, 0.1),), slope, 0.9, "ref")
        assert _classify(report).flags[-1] == label


class TestVhsPeaks:
    """Tests for Van Hove peak detection."""

    @staticmethod
    def _curve(values, epsilons):
        from bilayer_kpm.dos import DosCurve

        return DosCurve(epsilons, values, nu=1.0, r=1.0, p=1, n_disc=1, eta=0.1, label="synthetic")

    def test_split_peaks(self):
        """Test two peaks around a central minimum."""
        from bilayer_kpm.dos import vhs_peaks

        e = np.linspace(-1.5, 1.5, 301)
        values = 1.0 + np.exp(-(((e - 0.5) / 0.1) ** 2)) + np.exp(-(((e + 0.5) / 0.1) ** 2)) - 0.5 * np.exp(-((e / 0.2) ** 2))
        report = vhs_peaks(self._curve(values, e))
        assert report.minimum == pytest.approx(0.0, abs=1e-9)
        assert report.left_peak == pytest.approx(-0.5, abs=0.02)
        assert report.right_peak == pytest.approx(0.5, abs=0.02)
        assert report.split
        assert report.separation == pytest.approx(1.0, abs=0.04)

    def test_single_peak(self):
        """Test that a single maximum is not split."""
        from bilayer_kpm.dos import vhs_peaks

        e = np.linspace(-1.5, 1.5, 301)
        report = vhs_peaks(self._curve(np.exp(-(e**2)), e))
        assert report.minimum is None
        assert not report.split
        assert report.separation is None
        assert report.peaks == pytest.approx((0.0,), abs=1e-9)

    def test_length_mismatch(self):
        """Test that energies and values must have equal length."""
        from bilayer_kpm.exceptions import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            self._curve(np.zeros(3), np.zeros(4))
