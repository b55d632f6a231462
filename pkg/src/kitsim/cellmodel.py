"""Electrical model of the stub-loaded inverted-microstrip unit cell.

Covers the current-dependent kinetic inductance expansion, the three- and
four-wave-mixing coefficients, closed-form cell estimates, the low-frequency
input-reactance models used to fit per-cell inductance and capacitance from a
one-port admittance spectrum, stub-length design curves and the dc/rf process
control extractions (sheet inductance from R(T), permittivity from a lumped
resonator).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from scipy import optimize

from kitsim.constants import CONSTANTS
from kitsim.errors import DomainError, FitError, NoRegionError

#: Quasi-static fit window on the electrical length omega*n*sqrt(LC) of the segment.
QUASI_STATIC_WINDOW = 0.3
#: Taylor coefficient of x**4 in tan(x)/x.
TAN_QUARTIC = 2.0 / 15.0


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilmProperties:
    """Superconducting film parameters.

    ``sheet_inductance`` is in H per square; currents in A. ``scaling_current_4``
    may be ``inf`` when only the quadratic nonlinearity is modelled.
    """

    sheet_inductance: float
    scaling_current_2: float
    scaling_current_4: float = math.inf
    critical_current: Optional[float] = None

    def __post_init__(self):
        if not self.sheet_inductance > 0:
            raise DomainError("sheet_inductance must be > 0")
        if not self.scaling_current_2 > 0 or not self.scaling_current_4 > 0:
            raise DomainError("scaling currents must be > 0")
        if self.critical_current is not None and not (
            0 < self.critical_current < self.scaling_current_2
        ):
            raise DomainError("critical_current must lie in (0, I*2)")


@dataclass(frozen=True)
class DielectricProperties:
    relative_permittivity: float
    thickness: float

    def __post_init__(self):
        if self.relative_permittivity < 1:
            raise DomainError("relative_permittivity must be >= 1")
        if not self.thickness > 0:
            raise DomainError("dielectric thickness must be > 0")

    @property
    def specific_capacitance(self) -> float:
        """Parallel-plate capacitance per area, F/m^2."""
        return CONSTANTS.epsilon_0 * self.relative_permittivity / self.thickness


@dataclass(frozen=True)
class UnitCellGeometry:
    """Lengths in meters.

    The cell pitch is one stub width plus one stub spacing, so the central
    line carries ``(stub_spacing + stub_width) / center_width`` squares unless
    ``squares_per_cell`` overrides it.
    """

    center_width: float
    stub_width: float
    stub_spacing: float
    stub_length: float
    squares_per_cell: Optional[float] = None

    def __post_init__(self):
        for name in ("center_width", "stub_width", "stub_spacing"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")
        if self.stub_length < 0:
            raise DomainError("stub_length must be >= 0")
        if self.squares_per_cell is not None and not self.squares_per_cell > 0:
            raise DomainError("squares_per_cell must be > 0")

    @property
    def pitch(self) -> float:
        return self.stub_spacing + self.stub_width

    @property
    def n_squares(self) -> float:
        if self.squares_per_cell is not None:
            return self.squares_per_cell
        return self.pitch / self.center_width

    def with_stub_length(self, length: float) -> "UnitCellGeometry":
        return UnitCellGeometry(
            self.center_width, self.stub_width, self.stub_spacing, length, self.squares_per_cell
        )


@dataclass(frozen=True)
class CellElectricals:
    """Per-cell lumped values: series L (H), total shunt C (F), stub finger L_f (H).

    ``pitch`` (m) is carried along so per-length quantities can be formed.
    """

    series_inductance: float
    shunt_capacitance: float
    finger_inductance: float = 0.0
    pitch: float = 2e-6

    def __post_init__(self):
        if not (self.series_inductance > 0 and self.shunt_capacitance > 0):
            raise DomainError("cell inductance and capacitance must be > 0")
        if self.finger_inductance < 0:
            raise DomainError("finger_inductance must be >= 0")
        if not self.pitch > 0:
            raise DomainError("pitch must be > 0")

    @property
    def characteristic_impedance(self) -> float:
        return math.sqrt(self.series_inductance / self.shunt_capacitance)

    @property
    def stub_resonance(self) -> float:
        """Angular frequency of the shunt branch pole, 2/(L_f C) = omega^2."""
        if self.finger_inductance == 0:
            return math.inf
        return math.sqrt(2.0 / (self.finger_inductance * self.shunt_capacitance))

    @classmethod
    def from_geometry(
        cls,
        geometry: UnitCellGeometry,
        film: FilmProperties,
        dielectric: DielectricProperties,
        fringing: float = 1.0,
    ) -> "CellElectricals":
        """Closed-form estimate (no fringing unless ``fringing`` > 1)."""
        return cls(
            cell_inductance(geometry, film),
            fringing * cell_capacitance_closed_form(geometry, dielectric),
            finger_inductance(geometry, film),
            geometry.pitch,
        )


@dataclass(frozen=True)
class BiasState:
    dc_current: float = 0.0
    pump_amplitude: float = 0.0
    signal_amplitude: float = 0.0

    def __post_init__(self):
        if self.dc_current < 0 or self.pump_amplitude < 0 or self.signal_amplitude < 0:
            raise DomainError("bias currents must be >= 0")

    def check(self, film: FilmProperties) -> bool:
        """Warn (do not raise) when dc + pump reaches the scaling current."""
        ok = self.dc_current + self.pump_amplitude < film.scaling_current_2
        if not ok:
            warnings.warn(
                "I_dc + I_p0 >= I*2: outside the small-signal expansion", RuntimeWarning
            )
        return ok


@dataclass(frozen=True)
class AdmittanceSpectrum:
    frequencies: np.ndarray
    y11: np.ndarray
    boundary: Literal["shorted", "open"]
    cell_count: int

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        y = np.asarray(self.y11, dtype=complex)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "y11", y)
        if f.shape != y.shape or f.ndim != 1:
            raise DomainError("frequencies and y11 must be 1-D arrays of equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise DomainError("frequencies must be strictly increasing")
        if self.boundary not in ("shorted", "open"):
            raise DomainError("boundary must be 'shorted' or 'open'")
        if self.cell_count < 1:
            raise DomainError("cell_count must be >= 1")


# ---------------------------------------------------------------------------
# Nonlinear kinetic inductance
# ---------------------------------------------------------------------------


def kinetic_inductance(film: FilmProperties, l0: float, current):
    """Small-signal expansion l0 * [1 + (I/I*2)^2 + (I/I*4)^4]."""
    current = np.asarray(current, dtype=float)
    if np.any(np.abs(current) >= film.scaling_current_2):
        raise DomainError("|I| must be below I*2 for the Taylor expansion")
    out = l0 * (
        1.0
        + (current / film.scaling_current_2) ** 2
        + (current / film.scaling_current_4) ** 4
    )
    return out if out.ndim else float(out)


def mixing_coefficients(dc_current: float, scaling_current: float) -> tuple[float, float]:
    """Return (epsilon, xi), the 3WM [1/A] and 4WM [1/A^2] strengths."""
    if not scaling_current > 0:
        raise DomainError("scaling current must be > 0")
    denom = scaling_current**2 + dc_current**2
    return 2.0 * dc_current / denom, 1.0 / denom


def biased_inductance(l0: float, dc_current: float, scaling_current: float) -> float:
    if not scaling_current > 0:
        raise DomainError("scaling current must be > 0")
    return l0 * (1.0 + dc_current**2 / scaling_current**2)


def pump_modulation_depth(dc_current, pump_amplitude, scaling_current_2):
    """First-order pump-induced inductance modulation 2 I_p I_dc / (I*^2 + I_dc^2)."""
    if np.any(np.asarray(dc_current) < 0) or np.any(np.asarray(pump_amplitude) < 0):
        raise DomainError("currents must be nonnegative")
    return 2.0 * pump_amplitude * dc_current / (scaling_current_2**2 + dc_current**2)


# ---------------------------------------------------------------------------
# Closed-form cell values
# ---------------------------------------------------------------------------


def cell_area(geometry: UnitCellGeometry) -> float:
    """Metal area facing the ground plane: two stubs plus one pitch of center line."""
    return 2.0 * geometry.stub_length * geometry.stub_width + geometry.pitch * geometry.center_width


def cell_capacitance_closed_form(
    geometry: UnitCellGeometry, dielectric: DielectricProperties
) -> float:
    return dielectric.specific_capacitance * cell_area(geometry)


def cell_inductance(geometry: UnitCellGeometry, film: FilmProperties) -> float:
    return geometry.n_squares * film.sheet_inductance


def finger_inductance(geometry: UnitCellGeometry, film: FilmProperties) -> float:
    """Lumped series inductance of one open stub.

    A distributed open stub of total series inductance L_s looks like
    1/(jwC) + jw L_s/3 at low frequency, so L_f = L0 * (l / w1) / 3.
    """
    return film.sheet_inductance * geometry.stub_length / geometry.stub_width / 3.0


# ---------------------------------------------------------------------------
# Input-reactance models and fits
# ---------------------------------------------------------------------------


def _electrical_length_sq(inductance, capacitance, n, omega):
    return np.asarray(omega, dtype=float) ** 2 * n**2 * inductance * capacitance


def input_inductance_model(
    inductance: float,
    capacitance: float,
    n: int,
    omega,
    quartic_coefficient: float = TAN_QUARTIC,
):
    """Low-frequency input inductance of a shorted n-cell segment.

    L1 = L n [1 + x^2/3 + q x^4] with x = omega n sqrt(LC). ``q`` defaults to
    the tan(x)/x Taylor coefficient 2/15.
    """
    x2 = _electrical_length_sq(inductance, capacitance, n, omega)
    if np.any(x2 >= 1.0):
        raise DomainError("omega*n*sqrt(LC) must be < 1 for the series model")
    out = inductance * n * (1.0 + x2 / 3.0 + quartic_coefficient * x2**2)
    return out if out.ndim else float(out)


def input_capacitance_model(inductance: float, capacitance: float, n: int, omega):
    """Low-frequency input capacitance of an open n-cell segment."""
    x2 = _electrical_length_sq(inductance, capacitance, n, omega)
    denom = 45.0 - 15.0 * x2 - x2**2
    if np.any(x2 >= 1.0) or np.any(denom <= 0):
        raise DomainError("omega*n*sqrt(LC) outside the series validity window")
    out = capacitance * n * 45.0 / denom
    return out if out.ndim else float(out)


def line_input_admittance(
    inductance: float,
    capacitance: float,
    n: int,
    omega,
    boundary: Literal["shorted", "open"],
):
    """Exact Y11 of a lossless n-cell line, used to synthesize test spectra."""
    omega = np.asarray(omega, dtype=float)
    z0 = math.sqrt(inductance / capacitance)
    bl = omega * n * math.sqrt(inductance * capacitance)
    if boundary == "shorted":
        zin = 1j * z0 * np.tan(bl)
    else:
        zin = -1j * z0 / np.tan(bl)
    return 1.0 / zin


@dataclass(frozen=True)
class LineFit:
    inductance: float
    capacitance: float
    residual: float
    boundary: str
    n_points: int

    @property
    def characteristic_impedance(self) -> float:
        return math.sqrt(self.inductance / self.capacitance)


def fit_line_params(
    spectrum: AdmittanceSpectrum,
    window: float = QUASI_STATIC_WINDOW,
    min_points: int = 5,
) -> LineFit:
    """Least-squares per-cell (L, C) from a shorted or open admittance spectrum.

    The shorted spectrum is reduced to L1 = Im(1/Y11)/omega, the open one to
    C1 = -1/(omega Im(1/Y11)); either is then fit with the matching series
    model. Initial values come from a straight-line fit in omega^2.
    """
    n = spectrum.cell_count
    omega = 2 * np.pi * spectrum.frequencies
    if omega.size < 2 or np.any(omega <= 0):
        raise FitError("need at least two positive frequencies to constrain both L and C")
    x_im = np.imag(1.0 / spectrum.y11)
    if spectrum.boundary == "shorted":
        data = x_im / omega
    else:
        data = -1.0 / (omega * x_im)
    if np.any(~np.isfinite(data)) or np.any(data <= 0):
        raise FitError(f"reactance has the wrong sign for a {spectrum.boundary} line")

    # both models are data0 * (1 + x^2/3 + O(x^4)); data0 = n*L (shorted) or n*C (open)
    a1, a0 = np.polyfit(omega**2, data, 1)
    if a0 <= 0:
        raise FitError("nonpositive quasi-static intercept")
    lc = 3.0 * a1 / (a0 * n**2)
    if spectrum.boundary == "shorted":
        l_init = a0 / n
        c_init = lc / l_init if lc > 0 else np.nan
    else:
        c_init = a0 / n
        l_init = lc / c_init if lc > 0 else np.nan

    x_max = float(omega.max() * n * math.sqrt(max(lc, 0.0)))
    if not np.isfinite(c_init * l_init) or x_max**2 < 1e-6:
        raise FitError("spectrum is too deep in the quasi-static regime to constrain L*C")

    keep = omega * n * math.sqrt(lc) <= window
    if keep.sum() < min_points:
        raise FitError(f"fewer than {min_points} points inside the quasi-static window")
    omega, data = omega[keep], data[keep]

    if spectrum.boundary == "shorted":
        def model(p):
            return input_inductance_model(p[0] * l_init, p[1] * c_init, n, omega)
    else:
        def model(p):
            return input_capacitance_model(p[0] * l_init, p[1] * c_init, n, omega)

    res = optimize.least_squares(
        lambda p: model(p) / data - 1.0,
        x0=[1.0, 1.0],
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        method="lm",
    )
    if not res.success:
        raise FitError(f"line-parameter fit did not converge: {res.message}")
    ind, cap = res.x[0] * l_init, res.x[1] * c_init
    if not (ind > 0 and cap > 0):
        raise FitError("fit returned nonphysical parameters")
    return LineFit(
        float(ind),
        float(cap),
        float(np.sqrt(np.mean(res.fun**2))),
        spectrum.boundary,
        int(keep.sum()),
    )


def combine_fits(shorted: LineFit, open_: LineFit, finger_inductance: float = 0.0, pitch: float = 2e-6) -> CellElectricals:
    """Inductance from the shorted fit, capacitance from the open fit."""
    if shorted.boundary != "shorted" or open_.boundary != "open":
        raise DomainError("expected one shorted and one open fit")
    return CellElectricals(shorted.inductance, open_.capacitance, finger_inductance, pitch)


# ---------------------------------------------------------------------------
# Design curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearCapacitance:
    """Per-cell capacitance linear in stub length: C(l) = offset + slope * l."""

    offset: float
    slope: float

    def __call__(self, length):
        return self.offset + self.slope * np.asarray(length, dtype=float)

    @classmethod
    def from_rows(cls, rows) -> "LinearCapacitance":
        """Calibrate from (stub_length, capacitance) pairs, e.g. EM-fit rows."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 2:
            raise DomainError("need at least two (length, capacitance) rows")
        slope, offset = np.polyfit(rows[:, 0], rows[:, 1], 1)
        return cls(float(offset), float(slope))


@dataclass(frozen=True)
class ParallelPlateCapacitance:
    template: UnitCellGeometry
    dielectric: DielectricProperties
    fringing: float = 1.0

    def __call__(self, length):
        length = np.asarray(length, dtype=float)
        g = self.template
        area = 2.0 * length * g.stub_width + g.pitch * g.center_width
        return self.fringing * self.dielectric.specific_capacitance * area


@dataclass(frozen=True)
class DesignCurve:
    stub_length: np.ndarray
    z0: np.ndarray
    inductance: np.ndarray
    capacitance: np.ndarray


def design_curve(lengths, inductance: float, capacitance_model: Callable) -> DesignCurve:
    lengths = np.asarray(lengths, dtype=float)
    cap = np.asarray(capacitance_model(lengths), dtype=float)
    ind = np.full_like(lengths, inductance)
    return DesignCurve(lengths, np.sqrt(ind / cap), ind, cap)


def stub_length_for_impedance(
    z_target: float,
    geometry: UnitCellGeometry,
    film: FilmProperties,
    dielectric: DielectricProperties,
    *,
    inductance: Optional[float] = None,
    capacitance_model: Optional[Callable] = None,
    bounds: tuple[float, float] = (0.0, 80e-6),
    fringing: float = 1.0,
) -> float:
    """Invert the monotone Z0(l) curve by bisection.

    ``inductance`` defaults to the closed-form n_sq * L0; ``capacitance_model``
    to the parallel-plate estimate scaled by ``fringing``. Pass fitted values
    (e.g. a :class:`LinearCapacitance` calibrated on EM-fit rows) to design
    from simulation.
    """
    ind = cell_inductance(geometry, film) if inductance is None else inductance
    cap_model = capacitance_model or ParallelPlateCapacitance(geometry, dielectric, fringing)

    def excess(length):
        return math.sqrt(ind / float(cap_model(length))) - z_target

    lo, hi = bounds
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo * f_hi > 0:
        raise NoRegionError(
            f"Z0 = {z_target} ohm not achievable for stub lengths in [{lo}, {hi}] m"
        )
    return float(optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=1e-14))


def supercell_impedance(n_u: int, n_l: int, cell_u: CellElectricals, cell_l: CellElectricals) -> float:
    if n_u < 0 or n_l < 0 or n_u + n_l == 0:
        raise DomainError("need N_u, N_l >= 0 and not both zero")
    ind = n_u * cell_u.series_inductance + n_l * cell_l.series_inductance
    cap = n_u * cell_u.shunt_capacitance + n_l * cell_l.shunt_capacitance
    return math.sqrt(ind / cap)


# ---------------------------------------------------------------------------
# Process control structures
# ---------------------------------------------------------------------------

#: hbar / (1.76 pi k_B), ohm*s/K
_RT_PREFACTOR = CONSTANTS.hbar / (1.76 * math.pi * CONSTANTS.k_B)


@dataclass(frozen=True)
class RtResult:
    sheet_inductance: float
    normal_resistance: float
    critical_temperature: float
    n_squares: float


def sheet_inductance_from_rt(
    temperature,
    resistance,
    n_squares: float = 500.0,
    plateau_fraction: float = 0.1,
    plateau_tolerance: float = 0.05,
) -> RtResult:
    """Sheet kinetic inductance L0 = hbar R_n / (1.76 pi k_B T_c).

    R_n is the mean resistance over the hottest ``plateau_fraction`` of the
    samples, T_c the (linearly interpolated) temperature where R first rises
    through R_n/2. Resistances are divided by ``n_squares``.
    """
    t = np.asarray(temperature, dtype=float)
    r = np.asarray(resistance, dtype=float)
    if t.shape != r.shape or t.size < 4:
        raise DomainError("need matching temperature/resistance arrays (>= 4 points)")
    order = np.argsort(t, kind="stable")
    t, r = t[order], r[order]

    cut = np.quantile(t, 1.0 - plateau_fraction)
    top = r[t >= cut]
    r_n = float(top.mean())
    if r_n <= 0 or top.std() > plateau_tolerance * r_n:
        raise NoRegionError("no normal-state plateau at the high-temperature end")
    half = 0.5 * r_n
    above = r >= half
    if above[0] or not above.any():
        raise NoRegionError("no superconducting transition in the trace")
    i = int(np.argmax(above))
    t_c = float(np.interp(half, [r[i - 1], r[i]], [t[i - 1], t[i]]))
    return RtResult(_RT_PREFACTOR * (r_n / n_squares) / t_c, r_n, t_c, n_squares)


@dataclass(frozen=True)
class ResonatorFit:
    relative_permittivity: float
    specific_capacitance: float
    capacitance: float


def permittivity_from_resonance(
    f_res: float, total_inductance: float, plate_area: float, thickness: float
) -> ResonatorFit:
    """Invert f = 1/(2 pi sqrt(L eps0 eps_r a / d)).

    Only ``specific_capacitance`` (eps0 eps_r / d) is measured; ``relative_permittivity``
    assumes the nominal thickness.
    """
    if not (f_res > 0 and total_inductance > 0 and plate_area > 0 and thickness > 0):
        raise DomainError("resonator parameters must be positive")
    cap = 1.0 / ((2 * math.pi * f_res) ** 2 * total_inductance)
    c_spec = cap / plate_area
    eps_r = c_spec * thickness / CONSTANTS.epsilon_0
    if eps_r < 1:
        raise DomainError(f"nonphysical relative permittivity {eps_r:.3g} < 1")
    return ResonatorFit(eps_r, c_spec, cap)


def resonance_frequency(total_inductance: float, plate_area: float, thickness: float, eps_r: float) -> float:
    cap = CONSTANTS.epsilon_0 * eps_r * plate_area / thickness
    return 1.0 / (2 * math.pi * math.sqrt(total_inductance * cap))
