"""Three-wave-mixing gain: closed forms, coupled-mode integration and sweeps.

The coupled-mode system evolves the complex current amplitudes of pump,
signal, idler (and optionally the 2 w_p pump harmonic) along the line:

    dA_s/dx = (k_s eps/4) A_p A_i* e^{i dk x} + i (k_s xi/8)(|A_s|^2 + 2|A_i|^2 + 2|A_p|^2) A_s
    dA_i/dx = (k_i eps/4) A_p A_s* e^{i dk x} + i (k_i xi/8)(|A_i|^2 + 2|A_s|^2 + 2|A_p|^2) A_i
    dA_p/dx = -(k_p eps/4) A_s A_i e^{-i dk x} + i (k_p xi/8)(|A_p|^2 + 2|A_s|^2 + 2|A_i|^2) A_p

with dk = k_p - k_s - k_i. Freezing |A_p| leaves an effective mismatch equal to
:func:`phase_mismatch` and a small-signal growth rate eps I_p0 sqrt(k_s k_i)/4,
so the phase-matched limit is exactly cosh^2(g3 x). The quantities
|A_s|^2/k_s - |A_i|^2/k_i and |A_p|^2/k_p + |A_s|^2/k_s are conserved
(photon-flux balance).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from kitsim import _kernels
from kitsim.cascade import DeviceSpec, DispersionCurve, bloch_phase
from kitsim.cellmodel import mixing_coefficients
from kitsim.errors import DomainError, KitsimError

DEFAULT_SMOOTHING = 51

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def phase_mismatch(k_p, k_s, k_i, xi, pump_amplitude):
    """Delta_beta = (k_p - k_s - k_i) + (xi I_p0^2 / 8)(k_p - 2 k_s - 2 k_i)."""
    k_p, k_s, k_i = (np.asarray(v, dtype=float) for v in (k_p, k_s, k_i))
    out = (k_p - k_s - k_i) + xi * pump_amplitude**2 / 8.0 * (k_p - 2 * k_s - 2 * k_i)
    return out if out.ndim else float(out)


def growth_rate(eps, pump_amplitude, k_s, k_i):
    """g3 = eps I_p0 sqrt(k_s k_i) / 4 (1/m)."""
    return eps * pump_amplitude * np.sqrt(np.asarray(k_s) * np.asarray(k_i)) / 4.0


def analytic_gain(g3, x):
    """Phase-matched power gain cosh^2(g3 x)."""
    out = np.cosh(np.asarray(g3, dtype=float) * np.asarray(x, dtype=float)) ** 2
    return out if out.ndim else float(out)


def mismatched_gain(g3, delta_beta, x):
    """Small-signal undepleted gain with constant mismatch.

    |cosh(g x) + i (db/2) sinh(g x)/g|^2, g = sqrt(g3^2 - (db/2)^2); reduces to
    :func:`analytic_gain` at db = 0 and oscillates (no gain) when |db| > 2 g3.
    """
    g3 = np.asarray(g3, dtype=float)
    half = 0.5 * np.asarray(delta_beta, dtype=float)
    g = np.sqrt((g3**2 - half**2).astype(complex))
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(np.abs(g) > 0, np.sinh(g * x) / np.where(np.abs(g) > 0, g, 1.0), x)
    amp = np.cosh(g * x) + 1j * half * sinc
    out = np.abs(amp) ** 2
    return out if out.ndim else float(out)


def explicit_gain(dc_current, pump_amplitude, scaling_current, omega_p, inductance_per_length,
                  capacitance_per_length, x):
    """Degenerate-point gain written in device parameters.

    cosh^2( (1/4) I_dc I_p/(I*^2 + I_dc^2) w_p sqrt(L_d C) x ), with L_d and C per
    unit length, i.e. g3 at k_s = k_i = k_p/2 on a linear line.
    """
    coupling = dc_current * pump_amplitude / (scaling_current**2 + dc_current**2)
    k_p = omega_p * math.sqrt(inductance_per_length * capacitance_per_length)
    return analytic_gain(0.25 * coupling * k_p, x)


def to_db(g):
    return 10.0 * np.log10(g)


# ---------------------------------------------------------------------------
# Ripple
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RippleModel:
    reflection: float
    transmittivity: float
    gain: float

    def __post_init__(self):
        if not 0 <= self.reflection < 1:
            raise DomainError("|Gamma| must lie in [0, 1)")
        if not 0 < self.transmittivity <= 1:
            raise DomainError("eta must lie in (0, 1]")
        if self.gain < 0:
            raise DomainError("gain must be >= 0")

    @property
    def ripple_db(self) -> float:
        return gain_ripple(self.gain, self.transmittivity, self.reflection)


def gain_ripple(gain, transmittivity, reflection):
    """Peak-to-peak ripple 10 log10((1 + G eta |Gamma|^2)/(1 - G eta |Gamma|^2)) in dB."""
    g = np.asarray(gain, dtype=float)
    eta = np.asarray(transmittivity, dtype=float)
    gam = np.abs(np.asarray(reflection))
    if np.any(g < 0) or np.any(eta <= 0) or np.any(eta > 1) or np.any(gam >= 1):
        raise DomainError("need G >= 0, 0 < eta <= 1, 0 <= |Gamma| < 1")
    loop = g * eta * gam**2
    if np.any(loop >= 1):
        raise DomainError("G eta |Gamma|^2 >= 1: ripple diverges (the line oscillates)")
    out = 10.0 * np.log10((1 + loop) / (1 - loop))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Coupled-mode integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CMEConfig:
    """Operating point and integrator controls.

    ``length`` defaults to the device length. Tolerances apply to amplitudes
    normalized by the scaling current. ``checkpoints`` > 0 records the field
    at that many equally spaced positions (plus the input).
    """

    pump_frequency: float
    pump_amplitude: float
    signal_amplitude: float
    signal_frequencies: np.ndarray
    harmonics: bool = False
    depleted: bool = False
    rtol: float = 1e-8
    atol: float = 1e-12
    length: Optional[float] = None
    checkpoints: int = 0
    allow_degenerate: bool = False

    def __post_init__(self):
        fs = np.atleast_1d(np.asarray(self.signal_frequencies, dtype=float))
        if self.pump_frequency <= 0:
            raise DomainError("pump frequency must be > 0")
        if self.pump_amplitude < 0 or self.signal_amplitude < 0:
            raise DomainError("amplitudes must be >= 0")
        if not self.allow_degenerate:
            # the exact degenerate point is one mode, not a signal/idler pair
            fs = fs[np.abs(fs - 0.5 * self.pump_frequency) >= 1e-9 * self.pump_frequency]
        object.__setattr__(self, "signal_frequencies", fs)
        if fs.size == 0 or np.any(fs <= 0) or np.any(fs >= self.pump_frequency):
            raise DomainError("signal frequencies must be nonempty and lie in (0, f_p) for 3WM")
        if not (self.rtol > 0 and self.atol > 0):
            raise DomainError("tolerances must be > 0")
        if self.length is not None and not self.length > 0:
            raise DomainError("length must be > 0")

    @property
    def small_signal(self) -> bool:
        return self.signal_amplitude <= 0.1 * self.pump_amplitude

    @property
    def idler_frequencies(self) -> np.ndarray:
        return self.pump_frequency - self.signal_frequencies

    def with_pump(self, pump_frequency: float, symmetric: bool = True) -> "CMEConfig":
        """Same template at another pump.

        With ``symmetric`` the signal grid is clipped to [f_min, f_p - f_min] so the
        band is symmetric about f_p/2 and signal and idler both stay on the grid.
        """
        fs = self.signal_frequencies
        keep = fs < pump_frequency
        if symmetric:
            keep &= fs <= pump_frequency - fs.min() + 1e-9 * pump_frequency
        return replace(self, pump_frequency=pump_frequency, signal_frequencies=fs[keep])


@dataclass(frozen=True)
class GainProfile:
    signal_frequencies: np.ndarray
    gain: np.ndarray
    pump_frequency: float
    idler_gain: Optional[np.ndarray] = None
    pump_fraction: Optional[np.ndarray] = None
    insertion_loss_db: Optional[np.ndarray] = None
    trajectory_x: Optional[np.ndarray] = None
    trajectory: Optional[np.ndarray] = None
    wavenumbers: Optional[dict] = None

    def __post_init__(self):
        if np.any(np.asarray(self.gain) < 0):
            raise DomainError("gain must be >= 0")

    @property
    def idler_frequencies(self) -> np.ndarray:
        return self.pump_frequency - self.signal_frequencies

    @property
    def gain_db(self) -> np.ndarray:
        return to_db(self.gain)

    @property
    def true_gain_db(self) -> Optional[np.ndarray]:
        """On/off gain reduced by the insertion loss (dB, loss given as a positive number)."""
        if self.insertion_loss_db is None:
            return None
        return self.gain_db - self.insertion_loss_db

    def with_insertion_loss(self, loss_db) -> "GainProfile":
        loss = np.broadcast_to(np.asarray(loss_db, dtype=float), self.gain.shape).copy()
        if np.any(loss < 0):
            raise DomainError("insertion loss is given as a nonnegative number of dB")
        return replace(self, insertion_loss_db=loss)


def bloch_dispersion(spec: DeviceSpec, f_max: float, step: float = 1e6) -> DispersionCurve:
    """Bloch-wavenumber dispersion on [0, f_max] without S-parameters."""
    n = int(math.ceil(f_max / step)) + 1
    f = np.linspace(0.0, (n - 1) * step, n)
    phi, amb = bloch_phase(spec, f)
    k = phi / spec.supercell_length
    theta = phi * spec.n_supercells
    zeros = np.zeros_like(f)
    return DispersionCurve(f, theta, zeros, k, phi, k, spec.length, amb, "bloch")


def _stopband_edges(dispersion: DispersionCurve) -> list[tuple[float, float]]:
    """Intervals where the Bloch phase is pinned at a multiple of pi."""
    phi = dispersion.bloch_phase
    f = dispersion.frequencies
    if phi.size < 3:
        return []
    pinned = np.isclose(np.mod(phi + 1e-12, np.pi), 0.0, atol=1e-9) & (phi > 0.5)
    flat = np.zeros_like(pinned)
    flat[1:] = pinned[1:] & pinned[:-1] & (np.diff(phi) == 0)
    edges = np.diff(np.concatenate([[0], flat.astype(int), [0]]))
    lo, hi = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1
    return [(float(f[max(a - 1, 0)]), float(f[b])) for a, b in zip(lo, hi)]


def solve_cmes(
    spec: DeviceSpec,
    config: CMEConfig,
    dispersion: DispersionCurve,
    backend=None,
) -> GainProfile:
    """Integrate the coupled-mode system and return the signal power gain."""
    kern = backend or _kernels.backend
    bias = spec.bias
    i_star = spec.film.scaling_current_2
    eps, xi = mixing_coefficients(bias.dc_current, i_star)
    fp = config.pump_frequency
    fs = config.signal_frequencies
    fi = fp - fs
    kp = float(dispersion.k(fp))
    ks = dispersion.k(fs)
    ki = dispersion.k(fi)
    kh = float(dispersion.k(2 * fp)) if config.harmonics else 0.0
    if np.any(ks <= 0) or np.any(ki <= 0) or kp <= 0:
        raise DomainError("wavenumbers must be positive at pump, signal and idler")
    length = spec.length if config.length is None else config.length

    n = fs.size
    y0 = np.zeros((n, 4), dtype=complex)
    y0[:, 0] = config.pump_amplitude / i_star
    y0[:, 1] = config.signal_amplitude / i_star
    if config.checkpoints > 0:
        x_eval = np.linspace(0.0, length, config.checkpoints + 1)
    else:
        x_eval = np.array([0.0, length])
    if config.signal_amplitude == 0:
        raise DomainError("signal amplitude must be > 0 to define gain")

    try:
        traj, _ = kern.cme_integrate(
            kp, ks, ki, kh, eps * i_star, xi * i_star**2, y0, x_eval,
            rtol=config.rtol, atol=config.atol,
            depleted=config.depleted, harmonic=config.harmonics,
        )
    except RuntimeError as exc:
        raise KitsimError(f"CME integration failed: {exc}") from exc

    a_s = traj[-1, :, 1]
    a_i = traj[-1, :, 2]
    s0 = abs(y0[0, 1]) ** 2
    gain = np.abs(a_s) ** 2 / s0
    idler_gain = np.abs(a_i) ** 2 / s0

    p0 = abs(y0[0, 0]) ** 2
    if p0 > 0:
        if config.depleted:
            frac = np.sqrt(np.abs(traj[:, :, 0]) ** 2 / p0).min(axis=0)
        else:
            # photon-flux balance gives the pump the frozen-pump run implicitly drains
            drained = (np.abs(traj[:, :, 1]) ** 2 - s0) * kp / ks
            frac = np.sqrt(np.clip(1.0 - drained / p0, 0.0, None)).min(axis=0)
            if np.any(frac < 0.9):
                warnings.warn(
                    "pump depletion beyond 10% in undepleted-pump mode; rerun with depleted=True",
                    RuntimeWarning,
                )
    else:
        frac = np.ones(n)

    keep_traj = config.checkpoints > 0
    return GainProfile(
        fs.copy(), gain, fp, idler_gain, frac,
        trajectory_x=x_eval if keep_traj else None,
        trajectory=traj * i_star if keep_traj else None,
        wavenumbers={"k_p": kp, "k_s": ks, "k_i": ki, "k_h": kh},
    )


# ---------------------------------------------------------------------------
# Band metrics and sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandMetrics:
    peak_frequency: float
    peak_gain_db: float
    f_low: float
    f_high: float
    b3db: float
    mean_gain_db: float
    gbp: float
    truncated_low: bool
    truncated_high: bool
    window: int
    raw: Optional["BandMetrics"] = None

    @property
    def truncated(self) -> bool:
        return self.truncated_low or self.truncated_high

    @property
    def gbp_ghz_db(self) -> float:
        return self.gbp / 1e9

    def as_dict(self) -> dict:
        out = {
            "peak_frequency_hz": self.peak_frequency,
            "peak_gain_db": self.peak_gain_db,
            "f_low_hz": self.f_low,
            "f_high_hz": self.f_high,
            "b3db_hz": self.b3db,
            "mean_gain_db": self.mean_gain_db,
            "gbp_hz_db": self.gbp,
            "truncated_low": self.truncated_low,
            "truncated_high": self.truncated_high,
            "smoothing_window": self.window,
        }
        if self.raw is not None:
            out["raw"] = self.raw.as_dict()
        return out


def smooth(values, window: int):
    values = np.asarray(values, dtype=float)
    if window <= 1 or values.size < 2:
        return values.copy()
    return uniform_filter1d(values, size=min(window, values.size), mode="nearest")


def _metrics(f, g, window):
    peak = int(np.argmax(g))
    thr = g[peak] - 3.0

    def crossing(i_in, i_out):
        return f[i_in] + (thr - g[i_in]) * (f[i_out] - f[i_in]) / (g[i_out] - g[i_in])

    j = peak
    while j > 0 and g[j - 1] >= thr:
        j -= 1
    trunc_lo = j == 0
    f_lo = f[0] if trunc_lo else crossing(j, j - 1)
    lo_idx = j
    j = peak
    while j < f.size - 1 and g[j + 1] >= thr:
        j += 1
    trunc_hi = j == f.size - 1
    f_hi = f[-1] if trunc_hi else crossing(j, j + 1)
    hi_idx = j

    xs = np.concatenate([[f_lo], f[lo_idx:hi_idx + 1], [f_hi]])
    ys = np.concatenate([[thr if not trunc_lo else g[0]], g[lo_idx:hi_idx + 1],
                         [thr if not trunc_hi else g[-1]]])
    width = f_hi - f_lo
    if width > 0:
        mean = float(_trapezoid(ys, xs) / width)
    else:
        mean = float(g[peak])
    return BandMetrics(
        float(f[peak]), float(g[peak]), float(f_lo), float(f_hi), float(width),
        mean, mean * float(width), bool(trunc_lo), bool(trunc_hi), window,
    )


def band_metrics(profile: GainProfile, window: int = DEFAULT_SMOOTHING) -> BandMetrics:
    """3 dB bandwidth around the (smoothed) gain maximum, mean gain across it, and GBP.

    Crossings are linearly interpolated; a side with no crossing is clamped to
    the grid edge and flagged. GBP = mean gain (dB) x B3dB (Hz). Metrics on the
    unsmoothed curve are attached as ``raw``.
    """
    f = np.asarray(profile.signal_frequencies, dtype=float)
    g = profile.gain_db
    if f.size < 2:
        raise DomainError("need at least two signal points")
    raw = _metrics(f, g, 1)
    if window <= 1:
        return raw
    return replace(_metrics(f, smooth(g, window), window), raw=raw)


@dataclass(frozen=True)
class SweepResult:
    pump_frequencies: np.ndarray
    profiles: list
    metrics: list

    @property
    def b3db(self) -> np.ndarray:
        return np.array([m.b3db for m in self.metrics])

    @property
    def mean_gain_db(self) -> np.ndarray:
        return np.array([m.mean_gain_db for m in self.metrics])

    @property
    def peak_gain_db(self) -> np.ndarray:
        return np.array([m.peak_gain_db for m in self.metrics])

    @property
    def gbp(self) -> np.ndarray:
        return np.array([m.gbp for m in self.metrics])

    @property
    def best_gain_index(self) -> int:
        return int(np.argmax(self.mean_gain_db))

    @property
    def best_gbp_index(self) -> int:
        return int(np.argmax(self.gbp))

    def summary(self) -> dict:
        i, j = self.best_gain_index, self.best_gbp_index
        return {
            "max_mean_gain_pump_hz": float(self.pump_frequencies[i]),
            "max_mean_gain_db": float(self.mean_gain_db[i]),
            "max_gbp_pump_hz": float(self.pump_frequencies[j]),
            "max_gbp_hz_db": float(self.gbp[j]),
            "max_peak_gain_db": float(self.peak_gain_db.max()),
            "per_pump": [
                {"pump_hz": float(fp), **m.as_dict()}
                for fp, m in zip(self.pump_frequencies, self.metrics)
            ],
        }


def default_pump_grid(n: int = 50, start: float = 12.6e9, stop: float = 15.0e9) -> np.ndarray:
    return np.linspace(start, stop, n)


def default_signal_grid(start: float = 3e9, stop: float = 9e9, step: float = 10e6) -> np.ndarray:
    n = int(round((stop - start) / step)) + 1
    return np.linspace(start, stop, n)


def pump_sweep(
    spec: DeviceSpec,
    template: CMEConfig,
    pump_frequencies: Sequence[float],
    dispersion: Optional[DispersionCurve] = None,
    threads: int = 1,
    window: int = DEFAULT_SMOOTHING,
    backend=None,
) -> SweepResult:
    """Gain profiles and band metrics at each pump frequency.

    Pumps at or below the first stopband's upper edge raise a warning. Per-pump
    work is independent and results keep the order of ``pump_frequencies``.
    """
    pumps = np.asarray(pump_frequencies, dtype=float)
    if pumps.ndim != 1 or pumps.size == 0:
        raise DomainError("pump grid must be a nonempty 1-D sequence")
    f_need = float(pumps.max()) * (2.0 if template.harmonics else 1.0)
    if dispersion is None:
        dispersion = bloch_dispersion(spec, f_need * 1.001 + 1e6)
    gaps = _stopband_edges(dispersion)
    if gaps:
        upper = gaps[0][1]
        if np.any(pumps <= upper):
            warnings.warn(
                f"pump frequencies at or below the stopband upper edge ({upper / 1e9:.3f} GHz)",
                RuntimeWarning,
            )

    def run(fp):
        cfg = template.with_pump(float(fp))
        prof = solve_cmes(spec, cfg, dispersion, backend)
        return prof, band_metrics(prof, window)

    if threads > 1 and pumps.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(run, pumps))
    else:
        out = [run(fp) for fp in pumps]
    return SweepResult(pumps, [o[0] for o in out], [o[1] for o in out])
