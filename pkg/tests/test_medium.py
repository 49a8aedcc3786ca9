import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq

from qpms.engine import propagate_sfg
from qpms.errors import ConfigurationError
from qpms.medium import (
    CrystalSpec,
    calibrate_kappa,
    linear_step_operator,
    phase_matching_curve,
    phase_mismatch,
    sf_wavelength,
    transverse_phase,
    walkoff_rate_from_curve,
)
from qpms.modes import C_NM_THZ, SpatialGrid, SpatioTemporalField, TemporalGrid, hg_temporal_mode


def sampled_fwhm(length, rate=1.2, center=1551.0):
    """Half-maximum crossings of sinc^2(pi rho L dnu) found by root bracketing, in nm."""
    def eff(lam):
        x = math.pi * rate * length * (C_NM_THZ / lam - C_NM_THZ / center)
        return (math.sin(x) / x) ** 2 if x else 1.0

    hi = brentq(lambda lam: eff(lam) - 0.5, center + 1e-9, center + 20.0 / length)
    lo = brentq(lambda lam: eff(lam) - 0.5, center - 20.0 / length, center - 1e-9)
    return hi - lo


class TestCrystalSpec:
    def test_walkoff_values(self):
        assert_allclose(CrystalSpec(length=1.0).walkoff, 1.2)
        assert_allclose(CrystalSpec(length=2.5).walkoff, 3.0)

    @pytest.mark.parametrize("kw", [{"length": 0.0}, {"nz_steps": 15}, {"walkoff_rate": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            CrystalSpec(**kw)

    def test_dict_round_trip(self):
        c = CrystalSpec(length=1.0, delta_k=0.3, diffraction=True)
        assert CrystalSpec.from_dict(c.to_dict()) == c

    def test_kappa_calibration_value(self):
        assert_allclose(calibrate_kappa(0.01), 0.1)
        with pytest.raises(ConfigurationError):
            calibrate_kappa(0.0)

    def test_kappa_calibration_cw(self):
        """A flat 1 W pump over 1 cm converts 1% of a flat signal."""
        sgrid, tgrid = SpatialGrid(16, 16, 100.0, 100.0), TemporalGrid(64, 40.0)
        flat_x = np.ones((16, 16), dtype=complex)
        pump = SpatioTemporalField(sgrid, tgrid, 1551.0, separable_cache=(flat_x, np.ones(64, dtype=complex)))
        signal = SpatioTemporalField(sgrid, tgrid, 1559.0,
                                     separable_cache=(flat_x, np.full(64, 0.1, dtype=complex)))
        crystal = CrystalSpec(length=1.0, walkoff_rate=0.0, kappa=calibrate_kappa(0.01))
        res = propagate_sfg(pump, signal, crystal)
        assert_allclose(res.sf_energy / signal.energy(), 0.01, rtol=1e-10)


class TestPhaseMatching:
    def test_peak_and_null(self):
        c = CrystalSpec(length=2.5)
        assert_allclose(phase_matching_curve(c, [1551.0]).efficiency, [1.0])
        detuned = c.replace(delta_k=2 * math.pi / c.length)
        assert phase_matching_curve(detuned, [1551.0]).efficiency[0] < 1e-30
        # the same null reached by wavelength detuning: pi rho L dnu = pi
        lam = C_NM_THZ / (C_NM_THZ / 1551.0 + 1.0 / c.walkoff)
        assert phase_matching_curve(c, [lam]).efficiency[0] < 1e-25

    def test_mismatch_linear_in_frequency(self):
        c = CrystalSpec()
        dk = phase_mismatch(c, [1551.0, 1552.0], 1551.0)
        assert dk[0] == 0.0
        assert_allclose(dk[1], 2 * math.pi * 1.2 * (C_NM_THZ / 1552.0 - C_NM_THZ / 1551.0))

    def test_fwhm_inverse_length(self):
        wl = np.linspace(1545.0, 1557.0, 2401)
        short = phase_matching_curve(CrystalSpec(length=1.0), wl)
        long = phase_matching_curve(CrystalSpec(length=2.5), wl)
        assert_allclose(long.bandwidth / short.bandwidth, 1 / 2.5, rtol=0.01)
        assert_allclose(short.bandwidth, sampled_fwhm(1.0), rtol=0.01)
        assert_allclose(long.bandwidth, sampled_fwhm(2.5), rtol=0.01)
        assert_allclose(long.bandwidth * 2.5, short.bandwidth * 1.0, rtol=0.01)
        assert_allclose(long.center, 1551.0, atol=0.01)

    def test_walkoff_recovered_from_curve(self):
        wl = np.linspace(1547.0, 1555.0, 1601)
        curve = phase_matching_curve(CrystalSpec(length=2.5), wl)
        assert_allclose(walkoff_rate_from_curve(curve, 2.5), 1.2, rtol=1e-3)

    def test_input_validation(self):
        with pytest.raises(ConfigurationError):
            phase_matching_curve(CrystalSpec(), [])
        with pytest.raises(ConfigurationError):
            phase_matching_curve(CrystalSpec(), [1552.0, 1551.0])


class TestLinearOperator:
    def test_dc_unmoved(self, tgrid):
        for dz in (0.01, 0.5, 2.5):
            assert linear_step_operator(CrystalSpec(), "sf", dz, tgrid)[0] == 1.0

    def test_walkoff_shift(self, tgrid):
        c = CrystalSpec(length=2.5)
        u = hg_temporal_mode(0, 2.0, tgrid)
        out = np.fft.ifft(np.fft.fft(u) * linear_step_operator(c, "sf", c.length, tgrid))
        assert_allclose(out, hg_temporal_mode(0, 2.0, tgrid, delay=3.0), atol=1e-9)
        assert_allclose(np.sum(np.abs(out) ** 2), np.sum(np.abs(u) ** 2), rtol=1e-12)

    def test_pump_signal_identity_without_diffraction(self, tgrid):
        for role in ("pump", "signal"):
            op = linear_step_operator(CrystalSpec(), role, 0.3, tgrid)
            assert op.shape == (tgrid.nt,)
            assert np.all(op == 1.0)

    def test_unit_modulus(self, tgrid):
        sgrid = SpatialGrid(32, 32, 900.0, 900.0)
        c = CrystalSpec(diffraction=True)
        for role in ("pump", "signal", "sf"):
            op = linear_step_operator(c, role, 0.1, tgrid, sgrid, 1551.0)
            assert op.shape == (32, 32, tgrid.nt)
            assert_allclose(np.abs(op), 1.0, atol=1e-14)

    def test_diffraction_needs_grid(self, tgrid):
        with pytest.raises(ConfigurationError):
            linear_step_operator(CrystalSpec(diffraction=True), "sf", 0.1, tgrid)
        with pytest.raises(ConfigurationError):
            linear_step_operator(CrystalSpec(), "idler", 0.1, tgrid)

    def test_diffraction_spreads_gaussian(self):
        """Paraxial step against the closed-form Gaussian beam width w(z)."""
        sgrid = SpatialGrid(128, 128, 600.0, 600.0)
        w0, lam, z = 50.0, 1.551, 2.5  # um, um, cm
        X, Y = np.meshgrid(sgrid.x, sgrid.y, indexing="ij")
        u = np.exp(-(X ** 2 + Y ** 2) / w0 ** 2)
        out = np.fft.ifft2(np.fft.fft2(u) * transverse_phase(sgrid, lam * 1e3, z))
        zr = math.pi * w0 ** 2 / lam
        w = w0 * math.sqrt(1 + (z * 1e4 / zr) ** 2)
        r2 = np.sum((X ** 2 + Y ** 2) * np.abs(out) ** 2) / np.sum(np.abs(out) ** 2)
        assert_allclose(math.sqrt(r2), w / math.sqrt(2), rtol=1e-3)

    def test_sf_wavelength(self):
        assert_allclose(sf_wavelength(1551.0, 1559.0), 1551.0 * 1559.0 / 3110.0, rtol=1e-14)
