"""Analysis of auxiliary device measurements.

Scaling currents from the probe-tone phase shift versus dc bias, critical
current from the transmission collapse, impedance profiles from TDR step
reflections, and input-referred compression/intercept points from two-tone
power sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from kitsim.errors import DomainError, FitError, NoRegionError


# ---------------------------------------------------------------------------
# Phase versus bias
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseBiasTrace:
    """Probe phase versus dc bias.

    ``zero_phase`` defaults to the phase at the first bias point. ``traversal_time``
    is the TDR-measured delay; when absent, pass ``model_delay`` (the design value
    x sqrt(L_d C)) and the fit records that the reference phase is model-derived.
    """

    bias: np.ndarray
    phase: np.ndarray
    frequency: float
    traversal_time: Optional[float] = None
    zero_phase: Optional[float] = None
    model_delay: Optional[float] = None

    def __post_init__(self):
        b = np.asarray(self.bias, dtype=float)
        p = np.asarray(self.phase, dtype=float)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "phase", p)
        if b.shape != p.shape or b.ndim != 1 or b.size == 0:
            raise DomainError("bias and phase must be equal-length 1-D arrays")
        if not self.frequency > 0:
            raise DomainError("probe frequency must be > 0")
        tau = self.traversal_time if self.traversal_time is not None else self.model_delay
        if tau is None or not tau > 0:
            raise DomainError("need a positive traversal time (TDR) or model delay")

    @property
    def theta0(self) -> float:
        return float(self.phase[0] if self.zero_phase is None else self.zero_phase)

    @property
    def tau(self) -> float:
        return self.traversal_time if self.traversal_time is not None else self.model_delay

    @property
    def tau_source(self) -> str:
        return "tdr" if self.traversal_time is not None else "model"

    @property
    def reference_phase(self) -> float:
        """theta_r = w tau / 2."""
        return 2 * math.pi * self.frequency * self.tau / 2.0


@dataclass(frozen=True)
class ScalingFit:
    scaling_current_2: float
    scaling_current_4: float
    residual: float
    quartic_resolved: bool
    tau_source: str
    n_points: int
    coefficients: tuple

    def as_dict(self) -> dict:
        return {
            "scaling_current_2_a": self.scaling_current_2,
            "scaling_current_4_a": self.scaling_current_4,
            "residual_rms": self.residual,
            "quartic_resolved": self.quartic_resolved,
            "tau_source": self.tau_source,
            "n_points": self.n_points,
        }


def phase_shift_model(bias, scaling_current_2, scaling_current_4):
    """(theta - theta0)/theta_r = -(I/I*2)^2 - (I/I*4)^4."""
    b = np.asarray(bias, dtype=float)
    return -((b / scaling_current_2) ** 2) - (b / scaling_current_4) ** 4


def fit_scaling_currents(trace: PhaseBiasTrace, min_points: int = 8) -> ScalingFit:
    """Weighted linear least squares in u = 1/I*2^2, v = 1/I*4^4.

    Residuals are relative (weights 1/|y|), matching multiplicative phase noise.
    A nonpositive quartic coefficient means I*4 is unresolved; it is reported
    as ``inf`` with ``quartic_resolved=False``.
    """
    y = (trace.phase - trace.theta0) / trace.reference_phase
    b = trace.bias
    use = np.abs(b) > 0
    if use.sum() < min_points:
        raise FitError(f"need at least {min_points} nonzero bias points")
    b, y = b[use], y[use]
    if np.mean(y) >= 0:
        raise FitError("phase shift must be negative (inductance grows with bias)")
    w = 1.0 / np.maximum(np.abs(y), 1e-12 * np.abs(y).max())
    design = np.column_stack([-(b**2), -(b**4)]) * w[:, None]
    coef, *_ = np.linalg.lstsq(design, y * w, rcond=None)
    u, v = coef
    if not np.all(np.isfinite(coef)) or u <= 0:
        raise FitError("quadratic coefficient is nonpositive; data not described by the model")
    resolved = v > 0
    i2 = 1.0 / math.sqrt(u)
    i4 = v ** -0.25 if resolved else math.inf
    resid = design @ coef - y * w
    return ScalingFit(
        i2, i4, float(np.sqrt(np.mean(resid**2))), bool(resolved),
        trace.tau_source, int(use.sum()), (float(u), float(v)),
    )


# ---------------------------------------------------------------------------
# Critical current
# ---------------------------------------------------------------------------


def critical_current(bias, s21_db, threshold_db: float = 10.0, baseline_fraction: float = 0.25) -> float:
    """First bias whose transmission is ``threshold_db`` below the low-bias median."""
    b = np.asarray(bias, dtype=float)
    s = np.asarray(s21_db, dtype=float)
    if b.shape != s.shape or b.size < 3:
        raise DomainError("need matching bias/transmission arrays (>= 3 points)")
    if np.any(np.diff(b) <= 0):
        raise DomainError("bias sweep must be strictly increasing")
    n0 = max(3, int(baseline_fraction * b.size))
    base = float(np.median(s[:n0]))
    hits = np.flatnonzero(s < base - threshold_db)
    if hits.size == 0:
        raise NoRegionError(f"no transmission drop of {threshold_db} dB found")
    return float(b[hits[0]])


# ---------------------------------------------------------------------------
# TDR
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TdrTrace:
    time: np.ndarray
    rho: np.ndarray
    z_ref: float = 50.0

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        r = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "rho", r)
        if t.shape != r.shape or t.ndim != 1 or t.size == 0:
            raise DomainError("time and rho must be equal-length 1-D arrays")
        if not self.z_ref > 0:
            raise DomainError("Z_ref must be > 0")


@dataclass(frozen=True)
class TdrProfile:
    time: np.ndarray
    impedance: np.ndarray
    start: Optional[float]
    stop: Optional[float]
    mean_impedance: Optional[float]
    threshold: float

    def as_dict(self) -> dict:
        return {
            "device_start_s": self.start,
            "device_stop_s": self.stop,
            "mean_impedance_ohm": self.mean_impedance,
            "threshold_ohm": self.threshold,
        }


def reflection_to_impedance(rho, z_ref: float = 50.0):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) >= 1):
        raise DomainError("|rho| >= 1: open/short singularity in the impedance transform")
    return z_ref * (1 + rho) / (1 - rho)


def impedance_to_reflection(z, z_ref: float = 50.0):
    z = np.asarray(z, dtype=float)
    return (z - z_ref) / (z + z_ref)


def tdr_impedance_profile(trace: TdrTrace, threshold: float = 1.0) -> TdrProfile:
    """Z(t) = Z_ref (1 + rho)/(1 - rho) and the device bracket.

    The device spans the first to last sample deviating from Z_ref by more
    than ``threshold`` ohm; its mean impedance is averaged over that span.
    """
    z = reflection_to_impedance(trace.rho, trace.z_ref)
    off = np.flatnonzero(np.abs(z - trace.z_ref) > threshold)
    if off.size == 0:
        return TdrProfile(trace.time, z, None, None, None, threshold)
    i0, i1 = off[0], off[-1]
    return TdrProfile(
        trace.time, z, float(trace.time[i0]), float(trace.time[i1]),
        float(np.mean(z[i0:i1 + 1])), threshold,
    )


# ---------------------------------------------------------------------------
# Two-tone compression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoToneSweep:
    pin_dbm: np.ndarray
    pout_f1_dbm: np.ndarray
    pout_f2_dbm: np.ndarray
    pout_imd_dbm: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=float) for k in
                ("pin_dbm", "pout_f1_dbm", "pout_f2_dbm", "pout_imd_dbm")]
        for k, a in zip(("pin_dbm", "pout_f1_dbm", "pout_f2_dbm", "pout_imd_dbm"), arrs):
            object.__setattr__(self, k, a)
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise DomainError("two-tone arrays must be equal-length 1-D")
        if np.any(np.diff(arrs[0]) <= 0):
            raise DomainError("input power must be strictly increasing")


@dataclass(frozen=True)
class CompressionResult:
    iip1_dbm: float
    iip3_dbm: float
    gain_db: float
    imd_offset_db: float
    fundamental_slope: float
    imd_slope: float
    fundamental_residual: float
    imd_residual: float
    window: tuple

    def as_dict(self) -> dict:
        return {
            "iip1_dbm": self.iip1_dbm,
            "iip3_dbm": self.iip3_dbm,
            "small_signal_gain_db": self.gain_db,
            "fundamental_slope": self.fundamental_slope,
            "imd_slope": self.imd_slope,
            "fundamental_residual_db": self.fundamental_residual,
            "imd_residual_db": self.imd_residual,
            "fit_window_dbm": list(self.window),
        }


def _slope(x, y):
    p = np.polyfit(x, y, 1)
    return p[0], float(np.sqrt(np.mean((np.polyval(p, x) - y) ** 2)))


def extract_compression(
    sweep: TwoToneSweep,
    slope_tolerance: float = 0.05,
    compression_db: float = 1.0,
    noise_floor_dbm: Optional[float] = None,
    min_points: int = 4,
    linear_db: float = 0.05,
) -> CompressionResult:
    """Input-referred 1 dB compression and third-order intercept.

    The fit window grows from the lowest input powers while the fundamental
    stays within ``linear_db`` of its low-power gain; the slopes fitted over it
    must lie within ``slope_tolerance`` of 1 (fundamental) and 3 x
    ``slope_tolerance`` of 3 (IMD). Lines of fixed slope 1 and 3 are fit over
    that window; IIP3 is their intersection and IIP1 the input power where the
    fundamental falls ``compression_db`` below its slope-1 line.
    """
    pin = sweep.pin_dbm
    f1 = sweep.pout_f1_dbm
    imd = sweep.pout_imd_dbm
    valid = np.isfinite(imd)
    if noise_floor_dbm is not None:
        valid &= imd > noise_floor_dbm
    if valid.sum() < min_points:
        raise FitError("IMD product buried below the noise floor")
    first = int(np.argmax(valid))
    if not valid[first:first + min_points].all():
        raise FitError("IMD product buried below the noise floor over the low-power region")

    # the linear window ends where the fundamental leaves its low-power gain
    base = slice(first, first + min_points)
    g0 = float(np.mean(f1[base] - pin[base]))
    stop = first + min_points
    while stop < pin.size and valid[stop] and abs(f1[stop] - pin[stop] - g0) <= linear_db:
        stop += 1
    best = slice(first, stop)
    s1, _ = _slope(pin[best], f1[best])
    s3, _ = _slope(pin[best], imd[best])
    if abs(s1 - 1) > slope_tolerance or abs(s3 - 3) > 3 * slope_tolerance:
        raise NoRegionError(
            f"no low-power region with fundamental slope 1 and IMD slope 3 (got {s1:.3f}, {s3:.3f})"
        )

    x = pin[best]
    s1, r1 = _slope(x, f1[best])
    s3, r3 = _slope(x, imd[best])
    gain = float(np.mean(f1[best] - x))
    offset = float(np.mean(imd[best] - 3 * x))
    iip3 = 0.5 * (gain - offset)

    dev = (pin + gain) - f1
    over = np.flatnonzero(dev >= compression_db)
    over = over[over >= best.stop - 1] if over.size else over
    if over.size == 0:
        raise FitError("fundamental never compresses by the requested amount; IIP1 undefined")
    j = over[0]
    if j == 0:
        raise FitError("compressed already at the lowest input power")
    iip1 = float(np.interp(compression_db, [dev[j - 1], dev[j]], [pin[j - 1], pin[j]]))
    return CompressionResult(
        iip1, float(iip3), gain, offset, float(s1), float(s3), r1, r3,
        (float(x[0]), float(x[-1])),
    )


def amplitude_to_dbm(amplitude, resistance: float = 50.0):
    """Peak sinusoid amplitude (V) into ``resistance`` -> dBm."""
    a = np.asarray(amplitude, dtype=float)
    return 10 * np.log10(a**2 / (2 * resistance) / 1e-3)


def dbm_to_amplitude(dbm, resistance: float = 50.0):
    return np.sqrt(2 * resistance * 1e-3 * 10 ** (np.asarray(dbm, dtype=float) / 10))


# ---------------------------------------------------------------------------
# Resonances
# ---------------------------------------------------------------------------


def resonance_peak(frequencies, magnitude_db, kind: str = "dip") -> float:
    """Resonance frequency from a transmission trace, with parabolic refinement."""
    f = np.asarray(frequencies, dtype=float)
    m = np.asarray(magnitude_db, dtype=float)
    if f.shape != m.shape or f.size < 3:
        raise DomainError("need at least three points")
    if kind not in ("dip", "peak"):
        raise DomainError("kind must be 'dip' or 'peak'")
    y = -m if kind == "dip" else m
    i = int(np.argmax(y))
    if i == 0 or i == f.size - 1:
        raise NoRegionError("resonance extremum at the edge of the trace")
    x3, y3 = f[i - 1:i + 2], y[i - 1:i + 2]
    a, b, _ = np.polyfit(x3 - f[i], y3, 2)
    if a >= 0:
        return float(f[i])
    return float(f[i] - b / (2 * a))
