"""Shot-noise-calibrated system noise analysis.

Noise powers are in quanta (units of the photon energy per unit bandwidth).
The photon energy convention is selectable: ``"angular"`` uses hbar*omega with
omega = 2 pi f (default); ``"quoted"`` uses hbar*omega/2 = h f/2, under which
the high-bias asymptote becomes e|V|/(h f) (0.48 quanta at 10 uV, 5 GHz, versus
0.242 for the angular convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from kitsim.constants import CONSTANTS
from kitsim.errors import DomainError, FitError, NoRegionError

PhotonConvention = Literal["angular", "quoted"]
DbConvention = Literal["amplitude", "power"]

_E = CONSTANTS.e
_HBAR = CONSTANTS.hbar
_KB = CONSTANTS.k_B


def photon_energy(omega, convention: PhotonConvention = "angular"):
    """Energy (J) that normalizes one quantum at angular frequency ``omega``."""
    if convention == "angular":
        return _HBAR * np.asarray(omega, dtype=float)
    if convention == "quoted":
        return 0.5 * _HBAR * np.asarray(omega, dtype=float)
    raise DomainError("photon convention must be 'angular' or 'quoted'")


def _x_coth(x, a):
    """x coth(x / a), with the x -> 0 limit a."""
    x = np.asarray(x, dtype=float)
    u = x / a
    small = np.abs(u) < 1e-8
    safe = np.where(small, 1.0, u)
    with np.errstate(over="ignore"):
        val = x / np.tanh(safe)
    return np.where(small, a + x * u / 3.0, val)


def sntj_psd(voltage, omega, electron_temperature, convention: PhotonConvention = "angular"):
    """Output PSD of a voltage-biased tunnel junction (quanta).

    N = [(eV + hw)/(4hw)] coth((eV + hw)/(2 k T)) + [(eV - hw)/(4hw)] coth((eV - hw)/(2 k T)).
    The coth singularity at eV = hw is removable and evaluated by its limit.
    """
    if not electron_temperature > 0:
        raise DomainError("electron temperature must be > 0")
    if np.any(np.asarray(omega) <= 0):
        raise DomainError("omega must be > 0")
    ev = _E * np.asarray(voltage, dtype=float)
    hw = photon_energy(omega, convention)
    a = 2 * _KB * electron_temperature
    out = (_x_coth(ev + hw, a) + _x_coth(ev - hw, a)) / (4 * hw)
    return out if np.ndim(out) else float(out)


def sntj_psd_asymptotic(voltage, omega, convention: PhotonConvention = "angular"):
    """High-bias asymptote e|V|/(2 hbar omega)."""
    out = _E * np.abs(np.asarray(voltage, dtype=float)) / (2 * photon_energy(omega, convention))
    return out if np.ndim(out) else float(out)


def thermal_occupancy(temperature, omega):
    """(1/2) coth(hbar w / 2 k T): Bose occupancy plus the vacuum half quantum."""
    t = np.asarray(temperature, dtype=float)
    if np.any(t < 0):
        raise DomainError("temperature must be >= 0")
    hw = _HBAR * np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        x = np.where(t > 0, hw / (2 * _KB * np.where(t > 0, t, 1.0)), np.inf)
        out = 0.5 / np.tanh(x)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Transmittivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransmittivityChain:
    components: tuple = ()
    convention: DbConvention = "amplitude"

    def __post_init__(self):
        comps = tuple((str(n), float(db)) for n, db in self.components)
        object.__setattr__(self, "components", comps)
        if self.convention not in ("amplitude", "power"):
            raise DomainError("convention must be 'amplitude' or 'power'")
        for name, db in comps:
            if db > 0:
                raise DomainError(f"component {name!r} has positive insertion loss {db} dB")

    @classmethod
    def from_losses(cls, losses_db: Sequence[float], convention: DbConvention = "amplitude"):
        return cls(tuple((f"c{j}", db) for j, db in enumerate(losses_db)), convention)

    @property
    def total_db(self) -> float:
        return float(sum(db for _, db in self.components))

    @property
    def eta(self) -> float:
        return chain_transmittivity(self)

    def __add__(self, other: "TransmittivityChain") -> "TransmittivityChain":
        if other.convention != self.convention:
            raise DomainError("cannot join chains with different dB conventions")
        return TransmittivityChain(self.components + other.components, self.convention)


def chain_transmittivity(chain: TransmittivityChain) -> float:
    """10^(sum dB / 20) (amplitude) or 10^(sum dB / 10) (power)."""
    div = 20.0 if chain.convention == "amplitude" else 10.0
    return float(10 ** (chain.total_db / div))


# ---------------------------------------------------------------------------
# System noise fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SntjTrace:
    voltage: np.ndarray
    noise: np.ndarray
    frequency: float
    electron_temperature: float
    unit: Literal["quanta", "w_per_hz"] = "quanta"

    def __post_init__(self):
        v = np.asarray(self.voltage, dtype=float)
        n = np.asarray(self.noise, dtype=float)
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "noise", n)
        if v.shape != n.shape or v.ndim != 1 or v.size == 0:
            raise DomainError("voltage and noise must be equal-length 1-D arrays")
        if np.any(v < 0):
            raise DomainError("only the V >= 0 half of the ramp is accepted")
        if not (self.frequency > 0 and self.electron_temperature > 0):
            raise DomainError("frequency and electron temperature must be > 0")
        if self.unit not in ("quanta", "w_per_hz"):
            raise DomainError("unit must be 'quanta' or 'w_per_hz'")

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.frequency

    def in_quanta(self) -> np.ndarray:
        if self.unit == "quanta":
            return self.noise
        return self.noise / (_HBAR * self.omega)


@dataclass(frozen=True)
class NoiseFitResult:
    system_gain: float
    excess_noise: float
    covariance: np.ndarray
    excess_noise_unconstrained: float
    clipped: bool
    n_points: int
    frequency: float
    idler_frequency: Optional[float]
    gain_ratio: float
    eta0: float
    eta1: float
    photon_convention: str

    def as_dict(self) -> dict:
        return {
            "frequency_hz": self.frequency,
            "idler_frequency_hz": self.idler_frequency,
            "system_gain": self.system_gain,
            "excess_noise_quanta": self.excess_noise,
            "excess_noise_unconstrained": self.excess_noise_unconstrained,
            "excess_noise_clipped": self.clipped,
            "gain_sigma": float(math.sqrt(self.covariance[0, 0])),
            "excess_noise_sigma": float(self.excess_sigma),
            "n_points": self.n_points,
            "gain_ratio": self.gain_ratio,
            "eta0": self.eta0,
            "eta1": self.eta1,
            "photon_convention": self.photon_convention,
        }

    @property
    def excess_sigma(self) -> float:
        return float(math.sqrt(max(self.covariance[1, 1], 0.0)))


def noise_model_input(voltage, omega_s, electron_temperature, eta0, eta1,
                      gain_ratio=1.0, omega_i=None, convention: PhotonConvention = "angular"):
    """eta0 eta1 [N_SNTJ(V, w_s) + r N_SNTJ(V, w_i)] referred to the amplifier input."""
    n = sntj_psd(voltage, omega_s, electron_temperature, convention)
    if gain_ratio:
        wi = omega_s if omega_i is None else omega_i
        n = n + gain_ratio * sntj_psd(voltage, wi, electron_temperature, convention)
    return eta0 * eta1 * np.asarray(n)


def forward_noise(voltage, frequency, electron_temperature, system_gain, excess_noise,
                  eta0, eta1, gain_ratio=1.0, idler_frequency=None,
                  convention: PhotonConvention = "angular"):
    """N_out = G (N_in^s + r N_in^i + N_ex)."""
    wi = None if idler_frequency is None else 2 * math.pi * idler_frequency
    n_in = noise_model_input(voltage, 2 * math.pi * frequency, electron_temperature,
                             eta0, eta1, gain_ratio, wi, convention)
    return system_gain * (n_in + excess_noise)


def fit_system_noise(
    trace: SntjTrace,
    eta0: float,
    eta1: float,
    gain_ratio: float = 1.0,
    idler_frequency: Optional[float] = None,
    convention: PhotonConvention = "angular",
    min_bias_ratio: float = 5.0,
    min_points: int = 5,
    sigma=None,
    region: str = "full",
) -> NoiseFitResult:
    """Weighted linear fit N_out = G x + G N_ex with x the modelled input noise.

    The trace must reach the linear high-bias regime: at least ``min_points``
    samples with eV >= ``min_bias_ratio`` x hbar w. With ``region="full"`` the
    exact coth model is fitted over every sample, which pins the intercept far
    better than the high-bias window alone; ``region="asymptotic"`` restricts
    the fit to that window. Weights default to relative (1/N_out), i.e.
    multiplicative trace noise. Negative excess noise is clipped to 0 and
    flagged.
    """
    if region not in ("full", "asymptotic"):
        raise DomainError("region must be 'full' or 'asymptotic'")
    for name, eta in (("eta0", eta0), ("eta1", eta1)):
        if not 0 < eta <= 1:
            raise DomainError(f"{name} must lie in (0, 1]")
    if gain_ratio < 0:
        raise DomainError("gain ratio must be >= 0")
    w = trace.omega
    wi = None if idler_frequency is None else 2 * math.pi * idler_frequency
    hw = photon_energy(w if wi is None else max(w, wi), convention)
    keep = _E * trace.voltage >= min_bias_ratio * hw
    if keep.sum() < min_points:
        raise FitError(
            f"fewer than {min_points} samples with eV >= {min_bias_ratio} hbar w; asymptote invalid"
        )
    if region == "full":
        keep = np.ones_like(keep)
    v = trace.voltage[keep]
    y = trace.in_quanta()[keep]
    x = noise_model_input(v, w, trace.electron_temperature, eta0, eta1, gain_ratio, wi, convention)
    if sigma is None:
        s = np.abs(y)
    else:
        s = np.broadcast_to(np.asarray(sigma, dtype=float), trace.voltage.shape)[keep]
    if np.any(s <= 0):
        raise FitError("nonpositive weights")
    a = np.column_stack([x, np.ones_like(x)]) / s[:, None]
    coef, res, rank, _ = np.linalg.lstsq(a, y / s, rcond=None)
    if rank < 2:
        raise FitError("degenerate design: input-noise values do not vary")
    gain, intercept = coef
    if not gain > 0:
        raise FitError("nonpositive system gain")
    resid = a @ coef - y / s
    dof = max(x.size - 2, 1)
    chi2 = float(resid @ resid) / dof
    cov_gb = np.linalg.inv(a.T @ a) * (chi2 if sigma is None else 1.0)
    if np.any(np.diag(cov_gb) < 0):
        raise FitError("negative variance in the fit covariance")
    n_ex = intercept / gain
    jac = np.array([[1.0, 0.0], [-intercept / gain**2, 1.0 / gain]])
    cov = jac @ cov_gb @ jac.T
    return NoiseFitResult(
        float(gain), float(max(n_ex, 0.0)), cov, float(n_ex), bool(n_ex < 0),
        int(keep.sum()), trace.frequency, idler_frequency, gain_ratio, eta0, eta1, convention,
    )


# ---------------------------------------------------------------------------
# Reference plane and bandwidth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferencePlaneResult:
    excess_noise: np.ndarray
    gain_ratio: np.ndarray
    thermal_occupancy: float


def transform_reference_plane(excess_signal, excess_idler, eta_signal, eta_idler, gain_ratio,
                              thermal):
    """Refer excess noise through the output loss eta1 back to the amplifier.

    N~ = [(1 - eta_s) N_T + N_s]/eta_s + r [(1 - eta_i) N_T + N_i]/eta_i.
    """
    es = np.asarray(eta_signal, dtype=float)
    ei = np.asarray(eta_idler, dtype=float)
    if np.any(es <= 0) or np.any(es > 1) or np.any(ei <= 0) or np.any(ei > 1):
        raise DomainError("eta must lie in (0, 1]")
    out = ((1 - es) * thermal + np.asarray(excess_signal)) / es + np.asarray(gain_ratio) * (
        (1 - ei) * thermal + np.asarray(excess_idler)
    ) / ei
    return out if np.ndim(out) else float(out)


def transform_even_split(excess, eta, gain_ratio, thermal, eta_idler=None):
    """Reference-plane transform with the excess split evenly between signal and idler."""
    half = 0.5 * np.asarray(excess, dtype=float)
    ei = eta if eta_idler is None else eta_idler
    return transform_reference_plane(half, half, eta, ei, gain_ratio, thermal)


def noise_bandwidth(frequencies, excess, floor: float, factor: float = 2.0):
    """Width (Hz) of the widest contiguous region with N_ex <= factor x floor.

    Edges are linearly interpolated to the threshold crossing; a region that
    touches the grid edge ends there.
    """
    f = np.asarray(frequencies, dtype=float)
    n = np.asarray(excess, dtype=float)
    if f.shape != n.shape or f.size < 2 or np.any(np.diff(f) <= 0):
        raise DomainError("need an increasing frequency grid with matching values")
    thr = factor * floor
    inside = n <= thr
    if not inside.any():
        raise NoRegionError("excess noise exceeds the threshold everywhere")
    edges = np.diff(np.concatenate([[0], inside.astype(int), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1

    def cross(i_in, i_out):
        if not np.isfinite(thr):
            return f[i_in]
        return f[i_in] + (thr - n[i_in]) * (f[i_out] - f[i_in]) / (n[i_out] - n[i_in])

    best = 0.0
    for a, b in zip(starts, stops):
        lo = cross(a, a - 1) if a > 0 else f[a]
        hi = cross(b, b + 1) if b < f.size - 1 else f[b]
        best = max(best, hi - lo)
    return float(best)
