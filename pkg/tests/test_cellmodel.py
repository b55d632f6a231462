import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from kitsim.cellmodel import (
    AdmittanceSpectrum,
    BiasState,
    CellElectricals,
    DielectricProperties,
    FilmProperties,
    LinearCapacitance,
    ParallelPlateCapacitance,
    UnitCellGeometry,
    biased_inductance,
    cell_area,
    cell_capacitance_closed_form,
    cell_inductance,
    combine_fits,
    design_curve,
    fit_line_params,
    input_capacitance_model,
    input_inductance_model,
    kinetic_inductance,
    line_input_admittance,
    mixing_coefficients,
    permittivity_from_resonance,
    pump_modulation_depth,
    resonance_frequency,
    sheet_inductance_from_rt,
    stub_length_for_impedance,
    supercell_impedance,
)
from kitsim.errors import DomainError, FitError, NoRegionError

FILM = FilmProperties(30e-12, 2e-3)
DIEL = DielectricProperties(9.1, 100e-9)
GEOM = UnitCellGeometry(1e-6, 1e-6, 1e-6, 12.1e-6)

# Calibration rows per film thickness: d (nm) -> L (pH), [(l_um, C_fF) for 78 and 48 ohm]
TABLE_S2 = {
    100: (60.6, [(3.9, 9.9), (12.1, 26.3)]),
    150: (60.6, [(5.9, 10.0), (17.4, 26.3)]),
    200: (60.6, [(7.8, 10.0), (22.4, 26.3)]),
    300: (60.7, [(11.2, 10.0), (31.5, 26.3)]),
    400: (60.7, [(14.3, 10.0), (40.0, 26.4)]),
}


class TestNonlinearInductance:
    def test_zero_current(self):
        assert kinetic_inductance(FILM, 60e-12, 0.0) == pytest.approx(60e-12)

    def test_quadratic_value(self):
        assert kinetic_inductance(FILM, 1.0, 1e-3) == pytest.approx(1.25)

    def test_expansion_domain(self):
        with pytest.raises(DomainError):
            kinetic_inductance(FILM, 1.0, 2e-3)

    def test_quartic_term(self):
        film = FilmProperties(30e-12, 2e-3, 1.95e-3)
        i = 1e-3
        want = 1 + (i / 2e-3) ** 2 + (i / 1.95e-3) ** 4
        assert kinetic_inductance(film, 1.0, i) == pytest.approx(want, rel=1e-14)

    @given(st.floats(0, 1.9e-3))
    def test_even_in_current(self, i):
        assert kinetic_inductance(FILM, 1.0, i) == kinetic_inductance(FILM, 1.0, -i)

    @given(st.floats(0, 1.9e-3), st.floats(0, 1.9e-3))
    def test_monotone_in_magnitude(self, a, b):
        lo, hi = sorted((a, b))
        assert kinetic_inductance(FILM, 1.0, lo) <= kinetic_inductance(FILM, 1.0, hi)

    def test_mixing_coefficients(self):
        eps, xi = mixing_coefficients(220e-6, 2e-3)
        den = (2e-3) ** 2 + (220e-6) ** 2
        assert eps == pytest.approx(2 * 220e-6 / den)
        assert xi == pytest.approx(1 / den)

    def test_no_dc_no_three_wave_mixing(self):
        eps, _ = mixing_coefficients(0.0, 2e-3)
        assert eps == 0.0

    def test_biased_inductance(self):
        assert biased_inductance(60.6e-12, 220e-6, 2e-3) == pytest.approx(60.6e-12 * 1.0121)

    def test_modulation_depth(self):
        assert pump_modulation_depth(220e-6, 100e-6, 2e-3) == pytest.approx(2 * 220e-6 * 100e-6 / (4e-6 + 220e-6**2))

    def test_bias_warning(self):
        with pytest.warns(RuntimeWarning):
            assert not BiasState(1.5e-3, 0.6e-3).check(FILM)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert BiasState(220e-6, 100e-6).check(FILM)


class TestGeometry:
    def test_area_oracle(self):
        # 2 * 12.1 * 1 + 2 * 1 = 26.2 um^2
        assert cell_area(GEOM) == pytest.approx(26.2e-12)

    def test_closed_form_capacitance(self):
        c = cell_capacitance_closed_form(GEOM, DIEL)
        want = 8.8541878128e-12 * 9.1 / 100e-9 * 26.2e-12
        assert c == pytest.approx(want, rel=1e-9)
        assert c == pytest.approx(21.1e-15, rel=5e-3)

    def test_inductance_two_squares(self):
        assert GEOM.n_squares == 2
        assert cell_inductance(GEOM, FILM) == pytest.approx(60e-12)

    def test_wider_spacing_squares(self):
        # s = 2, 3 um give 90 and 120 pH per cell at 30 pH/sq
        for s, want in ((2e-6, 90e-12), (3e-6, 120e-12)):
            g = UnitCellGeometry(1e-6, 1e-6, s, 10e-6)
            assert cell_inductance(g, FILM) == pytest.approx(want)

    def test_invalid_geometry(self):
        with pytest.raises(DomainError):
            UnitCellGeometry(0.0, 1e-6, 1e-6, 1e-6)
        with pytest.raises(DomainError):
            DielectricProperties(9.1, 0.0)


class TestLineFits:
    @pytest.mark.parametrize("boundary", ["shorted", "open"])
    def test_generator_matches_abcd_oracle(self, boundary):
        w = 2 * np.pi * np.linspace(1e6, 100e6, 20)
        got = line_input_admittance(60.6e-12, 26.3e-15, 320, w, boundary)
        want = oracles.line_y11(60.6e-12, 26.3e-15, 320, w, boundary)
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def _spectrum(self, boundary, f=None):
        f = np.linspace(2e6, 100e6, 50) if f is None else f
        y = oracles.line_y11(60.6e-12, 26.3e-15, 320, 2 * np.pi * f, boundary)
        return AdmittanceSpectrum(f, y, boundary, 320)

    def test_round_trip(self):
        s = fit_line_params(self._spectrum("shorted"))
        o = fit_line_params(self._spectrum("open"))
        assert s.inductance == pytest.approx(60.6e-12, rel=1e-3)
        assert o.capacitance == pytest.approx(26.3e-15, rel=1e-3)
        cell = combine_fits(s, o)
        assert cell.characteristic_impedance == pytest.approx(oracles.Z0_48, rel=1e-3)

    def test_series_models_vs_exact(self):
        # within the quasi-static window the series agree with tan/cot to 1e-4
        lc = 60.6e-12 * 26.3e-15
        f = np.linspace(1e6, 0.3 / (2 * np.pi * 320 * math.sqrt(lc)), 40)
        w = 2 * np.pi * f
        y_s = oracles.line_y11(60.6e-12, 26.3e-15, 320, w, "shorted")
        y_o = oracles.line_y11(60.6e-12, 26.3e-15, 320, w, "open")
        l_exact = np.imag(1 / y_s) / w
        c_exact = -1 / (w * np.imag(1 / y_o))
        np.testing.assert_allclose(input_inductance_model(60.6e-12, 26.3e-15, 320, w), l_exact, rtol=1e-4)
        np.testing.assert_allclose(input_capacitance_model(60.6e-12, 26.3e-15, 320, w), c_exact, rtol=1e-4)

    def test_printed_quartic_coefficient_is_worse(self):
        lc = 60.6e-12 * 26.3e-15
        w = 0.3 / (320 * math.sqrt(lc))
        y = oracles.line_y11(60.6e-12, 26.3e-15, 320, w, "shorted")[0]
        exact = np.imag(1 / y) / w
        good = input_inductance_model(60.6e-12, 26.3e-15, 320, w)
        printed = input_inductance_model(60.6e-12, 26.3e-15, 320, w, quartic_coefficient=1 / 15)
        assert abs(good / exact - 1) < abs(printed / exact - 1)

    def test_single_frequency_is_underdetermined(self):
        with pytest.raises(FitError):
            fit_line_params(self._spectrum("shorted", np.array([50e6])))

    def test_wrong_sign(self):
        sp = self._spectrum("open")
        flipped = AdmittanceSpectrum(sp.frequencies, sp.y11, "shorted", 320)
        with pytest.raises(FitError):
            fit_line_params(flipped)


class TestDesign:
    def test_table_s2_impedances(self):
        u = CellElectricals(60.6e-12, 26.3e-15)
        l = CellElectricals(60.6e-12, 9.9e-15)
        assert u.characteristic_impedance == pytest.approx(48.0, rel=5e-3)
        assert l.characteristic_impedance == pytest.approx(78.2, rel=5e-3)
        assert supercell_impedance(30, 4, u, l) == pytest.approx(49.9, rel=5e-3)
        assert supercell_impedance(30, 4, u, l) == pytest.approx(oracles.Z0_SC, rel=1e-12)

    def test_supercell_limits(self):
        u = CellElectricals(60.6e-12, 26.3e-15)
        l = CellElectricals(60.6e-12, 9.9e-15)
        assert supercell_impedance(30, 0, u, l) == pytest.approx(u.characteristic_impedance)
        with pytest.raises(DomainError):
            supercell_impedance(0, 0, u, l)

    @pytest.mark.parametrize("d", sorted(TABLE_S2))
    def test_stub_lengths_from_calibrated_rows(self, d):
        ind, table = TABLE_S2[d]
        model = LinearCapacitance.from_rows([(l * 1e-6, c * 1e-15) for l, c in table])
        diel = DielectricProperties(9.1, d * 1e-9)
        kw = dict(inductance=ind * 1e-12, capacitance_model=model)
        l78 = stub_length_for_impedance(78.0, GEOM, FILM, diel, **kw)
        l48 = stub_length_for_impedance(48.0, GEOM, FILM, diel, **kw)
        (want78, _), (want48, _) = table
        assert l48 * 1e6 == pytest.approx(want48, abs=0.15)
        assert l78 * 1e6 == pytest.approx(want78, abs=0.15)

    def test_design_curve_decreasing(self):
        model = LinearCapacitance.from_rows([(3.9e-6, 9.9e-15), (12.1e-6, 26.3e-15)])
        c = design_curve(np.linspace(1e-6, 40e-6, 200), 60.6e-12, model)
        assert np.all(np.diff(c.z0) < 0)

    def test_unachievable_target(self):
        with pytest.raises(NoRegionError):
            stub_length_for_impedance(5.0, GEOM, FILM, DIEL)

    def test_closed_form_design_is_longer(self):
        # without fringing the parallel-plate estimate needs a longer stub for 48 ohm
        ell = stub_length_for_impedance(48.0, GEOM, FILM, DIEL, inductance=60.6e-12)
        assert ell > 12.1e-6
        pp = ParallelPlateCapacitance(GEOM, DIEL)
        assert math.sqrt(60.6e-12 / float(pp(ell))) == pytest.approx(48.0, rel=1e-10)

    @given(st.floats(20.0, 120.0))
    def test_inversion_round_trip(self, z):
        model = LinearCapacitance(1.0e-15, 2.0e-9)
        diel = DIEL
        try:
            ell = stub_length_for_impedance(z, GEOM, FILM, diel, inductance=60.6e-12, capacitance_model=model)
        except NoRegionError:
            return
        assert math.sqrt(60.6e-12 / float(model(ell))) == pytest.approx(z, rel=1e-9)


class TestProcessControl:
    def _rt(self, tc=14.0, rn=50000.0):
        t = np.linspace(2, 30, 400)
        r = rn / (1 + np.exp(-(t - tc) / 0.1))
        return t, r

    def test_rt_inversion(self):
        t, r = self._rt()
        res = sheet_inductance_from_rt(t, r, n_squares=500)
        want = 1.054571817e-34 * (50000 / 500) / (1.76 * math.pi * 1.380649e-23 * 14.0)
        assert res.critical_temperature == pytest.approx(14.0, abs=0.01)
        assert res.sheet_inductance == pytest.approx(want, rel=2e-3)

    def test_rt_without_transition(self):
        t = np.linspace(2, 30, 50)
        with pytest.raises(NoRegionError):
            sheet_inductance_from_rt(t, np.full_like(t, 100.0))

    def test_resonance_round_trip(self):
        f = resonance_frequency(2e-9, 1e-9, 100e-9, 9.1)
        fit = permittivity_from_resonance(f, 2e-9, 1e-9, 100e-9)
        assert fit.relative_permittivity == pytest.approx(9.1, rel=1e-12)

    @pytest.mark.parametrize("version,lk,eps", [("v1", 30, 9.59), ("v2", 28, 8.07), ("v3", 36, 8.14)])
    def test_table_s3_fixture_rows(self, version, lk, eps):
        from kitsim import io as kio
        from conftest import FIXTURES

        table = kio.read_csv(FIXTURES / "test_structures.csv", ("version", "lk_ph_per_sq", "eps_r"))
        row = int(version[1:]) - 1
        assert table["lk_ph_per_sq"][row] == lk
        assert table["eps_r"][row] == eps
        f = resonance_frequency(lk * 1e-12 * 1000, 4e-9, 100e-9, eps)
        assert permittivity_from_resonance(f, lk * 1e-12 * 1000, 4e-9, 100e-9).relative_permittivity == pytest.approx(eps)

    def test_nonphysical_permittivity(self):
        with pytest.raises(DomainError):
            permittivity_from_resonance(1e12, 1e-9, 1e-9, 100e-9)
