"""ABCD cascades of the dispersion-engineered line.

Unit cell -> supercell (N_u/2 unloaded, N_l loaded, N_u/2 unloaded) -> device
(N_sc supercells). S-parameters follow from the standard equal-reference
conversion; the dispersion relation is read from the supercell Bloch phase
and the finite-device transmission phase.

Phase convention: matrices use B = +j w L, so arg(S21) is a phase lag. The
``arg_s21`` reported by :func:`dispersion` is the accumulated (positive) lag.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import mpmath
import numpy as np

from kitsim import _kernels
from kitsim.cellmodel import BiasState, CellElectricals, FilmProperties, biased_inductance
from kitsim.errors import DomainError, NoRegionError, PoleError

#: Device-matrix entries above this magnitude are recomputed in high precision.
ESCALATION_THRESHOLD = 1e4


@dataclass(frozen=True)
class TwoPortABCD:
    """Chain matrix entries; scalars or equal-shape arrays over frequency."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @classmethod
    def from_stack(cls, t: np.ndarray) -> "TwoPortABCD":
        t = np.asarray(t, dtype=complex)
        return cls(t[..., 0, 0], t[..., 0, 1], t[..., 1, 0], t[..., 1, 1])

    def as_stack(self) -> np.ndarray:
        a = np.asarray(self.a, dtype=complex)
        out = np.empty(a.shape + (2, 2), dtype=complex)
        out[..., 0, 0], out[..., 0, 1] = self.a, self.b
        out[..., 1, 0], out[..., 1, 1] = self.c, self.d
        return out

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "TwoPortABCD") -> "TwoPortABCD":
        return TwoPortABCD.from_stack(self.as_stack() @ other.as_stack())

    def __getitem__(self, idx) -> "TwoPortABCD":
        return TwoPortABCD(self.a[idx], self.b[idx], self.c[idx], self.d[idx])


@dataclass(frozen=True)
class DeviceMatrix(TwoPortABCD):
    """Device chain matrix with high-precision copies at evanescent points.

    ``exact`` maps grid index -> high-precision matrix. Where present, ``det``
    and the S-parameters are evaluated from it; float64 entries hold the
    rounded values.
    """

    evanescent: np.ndarray = None
    exact: dict = field(default_factory=dict)

    @property
    def det(self):
        out = np.atleast_1d(np.asarray(self.a * self.d - self.b * self.c, dtype=complex)).copy()
        for k, e in self.exact.items():
            out[k] = e.det()
        return out if np.ndim(self.a) else out[0]


@dataclass(frozen=True)
class DeviceSpec:
    unloaded: CellElectricals
    loaded: CellElectricals
    n_unloaded: int
    n_loaded: int
    n_supercells: int
    bias: BiasState
    film: FilmProperties
    z_ref: float = 50.0

    def __post_init__(self):
        if self.n_unloaded < 0 or self.n_unloaded % 2:
            raise DomainError("N_u must be even and >= 0 (split symmetrically about the loaded cells)")
        if self.n_loaded < 0 or self.n_unloaded + self.n_loaded == 0:
            raise DomainError("supercell must contain at least one cell")
        if self.n_supercells < 1:
            raise DomainError("N_sc must be >= 1")
        if not self.z_ref > 0:
            raise DomainError("Z_ref must be > 0")

    @property
    def cells_per_supercell(self) -> int:
        return self.n_unloaded + self.n_loaded

    @property
    def n_cells(self) -> int:
        return self.cells_per_supercell * self.n_supercells

    @property
    def supercell_length(self) -> float:
        return self.n_unloaded * self.unloaded.pitch + self.n_loaded * self.loaded.pitch

    @property
    def length(self) -> float:
        return self.supercell_length * self.n_supercells

    def dressed_inductance(self, cell: CellElectricals) -> float:
        return biased_inductance(
            cell.series_inductance, self.bias.dc_current, self.film.scaling_current_2
        )

    def replace(self, **changes) -> "DeviceSpec":
        from dataclasses import replace

        return replace(self, **changes)

    def _kernel_args(self):
        u, l = self.unloaded, self.loaded
        return (
            self.dressed_inductance(u), u.shunt_capacitance, u.finger_inductance,
            self.dressed_inductance(l), l.shunt_capacitance, l.finger_inductance,
            self.n_unloaded, self.n_loaded,
        )


@dataclass(frozen=True)
class SParamSpectrum:
    frequencies: np.ndarray
    s11: np.ndarray
    s21: np.ndarray
    s12: np.ndarray
    s22: np.ndarray
    pole: np.ndarray
    evanescent: np.ndarray
    det: np.ndarray
    z_ref: float = 50.0

    @property
    def s21_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20 * np.log10(np.abs(self.s21))


@dataclass(frozen=True)
class DispersionCurve:
    """Dispersion of a device on a frequency grid.

    ``arg_s21``: accumulated transmission phase lag (rad, 0 at dc).
    ``k_star``: arg_s21 minus the linear baseline (rad, whole device).
    ``wavenumber``: arg_s21 / device length (rad/m).
    ``bloch_phase``: per-supercell Bloch phase (rad); ``bloch_wavenumber`` is
    that divided by the supercell length and is what the CME solver reads.
    """

    frequencies: np.ndarray
    arg_s21: np.ndarray
    k_star: np.ndarray
    wavenumber: np.ndarray
    bloch_phase: np.ndarray
    bloch_wavenumber: np.ndarray
    length: float
    ambiguous: np.ndarray
    baseline: str = "unloaded"

    def k(self, freq) -> np.ndarray:
        """Bloch wavenumber (rad/m) at ``freq`` by linear interpolation."""
        freq = np.asarray(freq, dtype=float)
        f = self.frequencies
        if np.any(freq < f[0] - 1e-9 * f[-1]) or np.any(freq > f[-1] * (1 + 1e-12)):
            raise DomainError(
                f"frequency outside the dispersion grid [{f[0]:.6g}, {f[-1]:.6g}] Hz"
            )
        return np.interp(freq, f, self.bloch_wavenumber)

    @classmethod
    def linear(cls, frequencies, phase_velocity: float, length: float) -> "DispersionCurve":
        """Dispersionless line k = w / v_ph; handy for analytic checks."""
        f = np.asarray(frequencies, dtype=float)
        k = 2 * np.pi * f / phase_velocity
        zeros = np.zeros_like(f)
        return cls(f, k * length, zeros, k, k * length, k, length, zeros.astype(bool), "linear")

    @classmethod
    def from_wavenumber(cls, frequencies, wavenumber, length: float) -> "DispersionCurve":
        f = np.asarray(frequencies, dtype=float)
        k = np.asarray(wavenumber, dtype=float)
        zeros = np.zeros_like(f)
        return cls(f, k * length, zeros, k, k * length, k, length, zeros.astype(bool), "user")


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


def cell_abcd(cell: CellElectricals, dressed_inductance: float, omega) -> TwoPortABCD:
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr < 0):
        raise DomainError("omega must be >= 0")
    t, pole = _kernels.python_backend.cell_abcd(
        dressed_inductance, cell.shunt_capacitance, cell.finger_inductance, omega_arr
    )
    if np.any(pole):
        raise PoleError("frequency at the stub resonance 2 - L_f C w^2 = 0")
    return TwoPortABCD.from_stack(t)


def _grid(omega):
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(w < 0):
        raise DomainError("omega must be >= 0")
    return np.ascontiguousarray(w)


def supercell_abcd(spec: DeviceSpec, omega) -> TwoPortABCD:
    w = _grid(omega)
    tsc, _, pole = _kernels.device_abcd(w, *spec._kernel_args(), 1)
    if np.any(pole):
        raise PoleError("stub resonance on the grid")
    out = TwoPortABCD.from_stack(tsc)
    return out if np.ndim(omega) else out[0]


def _mp_cell(ld, c, lf, w):
    den = 2 - lf * c * w**2
    return mpmath.matrix([[1, 1j * w * ld], [2j * c * w / den, 1 - 2 * ld * c * w**2 / den]])


def _mp_pow(m, n):
    out = mpmath.eye(2)
    base = m
    while n:
        if n & 1:
            out = out * base
        n >>= 1
        if n:
            base = base * base
    return out


def _exact_device(spec: DeviceSpec, w: float, magnitude: float):
    """Device matrix in arbitrary precision sized to the entry magnitude."""
    dps = int(2 * math.log10(max(magnitude, 10.0))) + 40
    ld_u, c_u, lf_u, ld_l, c_l, lf_l, n_u, n_l = spec._kernel_args()
    with mpmath.workdps(dps):
        mw = mpmath.mpf(w)
        th = _mp_pow(_mp_cell(mpmath.mpf(ld_u), mpmath.mpf(c_u), mpmath.mpf(lf_u), mw), n_u // 2)
        tl = _mp_pow(_mp_cell(mpmath.mpf(ld_l), mpmath.mpf(c_l), mpmath.mpf(lf_l), mw), n_l)
        return _mp_pow(th * tl * th, spec.n_supercells), dps


def device_abcd(
    spec: DeviceSpec, omega, *, high_precision: bool = True, renormalize: bool = True
) -> DeviceMatrix:
    """T_sc^N_sc by binary exponentiation with guarded sqrt(det) renormalization.

    Points where entries grow beyond :data:`ESCALATION_THRESHOLD` (stopband
    evanescence) are recomputed with mpmath when ``high_precision``.
    """
    w = _grid(omega)
    tsc, tdev, pole = _kernels.device_abcd(w, *spec._kernel_args(), spec.n_supercells, renormalize)
    if not np.all(np.isfinite(tdev[~pole])):
        raise OverflowError("device matrix entries exceed float64 range")
    mag = np.abs(tdev).max(axis=(1, 2))
    half = 0.5 * (tsc[:, 0, 0] + tsc[:, 1, 1]).real
    evanescent = np.abs(half) > 1.0
    exact = {}
    if high_precision:
        for k in np.flatnonzero((mag > ESCALATION_THRESHOLD) & ~pole):
            m, dps = _exact_device(spec, float(w[k]), float(mag[k]))
            exact[int(k)] = _Exact(m, dps)
            tdev[k] = np.array([[complex(m[0, 0]), complex(m[0, 1])], [complex(m[1, 0]), complex(m[1, 1])]])
    res = DeviceMatrix(
        tdev[:, 0, 0], tdev[:, 0, 1], tdev[:, 1, 0], tdev[:, 1, 1], evanescent, exact
    )
    if np.ndim(omega):
        return res
    return DeviceMatrix(res.a[0], res.b[0], res.c[0], res.d[0], evanescent[:1], exact)


class _Exact:
    """mpmath matrix bundled with the working precision it was built at."""

    __slots__ = ("m", "dps")

    def __init__(self, m, dps):
        self.m, self.dps = m, dps

    def __getitem__(self, idx):
        return self.m[idx]

    def det(self):
        with mpmath.workdps(self.dps):
            return complex(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])

    def s_params(self, z_ref):
        with mpmath.workdps(self.dps):
            a, b, c, d = self.m[0, 0], self.m[0, 1], self.m[1, 0], self.m[1, 1]
            z = mpmath.mpf(z_ref)
            den = a + b / z + c * z + d
            det = a * d - b * c
            return (
                complex((a + b / z - c * z - d) / den),
                complex(2 / den),
                complex(2 * det / den),
                complex((-a + b / z - c * z + d) / den),
            )


def abcd_to_s(t: TwoPortABCD, z_ref: float = 50.0):
    """(S11, S21, S12, S22) for equal source/load reference impedance."""
    if not z_ref > 0:
        raise DomainError("Z_ref must be > 0")
    a, b, c, d = (np.asarray(v, dtype=complex) for v in (t.a, t.b, t.c, t.d))
    den = a + b / z_ref + c * z_ref + d
    if np.any(den == 0):
        raise DomainError("degenerate ABCD -> S denominator")
    s11 = (a + b / z_ref - c * z_ref - d) / den
    s21 = 2.0 / den
    s12 = 2.0 * (a * d - b * c) / den
    s22 = (-a + b / z_ref - c * z_ref + d) / den
    return s11, s21, s12, s22


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


def _chunks(n: int, parts: int):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(parts) if bounds[i + 1] > bounds[i]]


def s21_spectrum(spec: DeviceSpec, frequencies: Sequence[float], threads: int = 1) -> SParamSpectrum:
    """Device S-parameters on ``frequencies``; pole points are NaN and flagged."""
    f = np.asarray(frequencies, dtype=float)
    if f.ndim != 1 or f.size == 0 or np.any(np.diff(f) <= 0):
        raise DomainError("frequency grid must be nonempty and strictly increasing")
    w = 2 * np.pi * f

    def work(sl):
        dm = device_abcd(spec, w[sl])
        s = list(abcd_to_s(dm, spec.z_ref))
        for k, e in dm.exact.items():
            for j, v in enumerate(e.s_params(spec.z_ref)):
                s[j][k] = v
        # pole flag recomputed from the cell matrices
        _, pu = _kernels.python_backend.cell_abcd(1.0, spec.unloaded.shunt_capacitance, spec.unloaded.finger_inductance, w[sl])
        _, pl = _kernels.python_backend.cell_abcd(1.0, spec.loaded.shunt_capacitance, spec.loaded.finger_inductance, w[sl])
        pole = (pu & (spec.n_unloaded > 0)) | (pl & (spec.n_loaded > 0))
        return s, pole, dm.evanescent, dm.det

    parts = _chunks(f.size, max(1, int(threads)))
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, parts))
    else:
        results = [work(sl) for sl in parts]
    s = [np.concatenate([r[0][j] for r in results]) for j in range(4)]
    pole = np.concatenate([r[1] for r in results])
    evan = np.concatenate([r[2] for r in results])
    det = np.concatenate([r[3] for r in results])
    for arr in s:
        arr[pole] = np.nan
    return SParamSpectrum(f, s[0], s[1], s[2], s[3], pole, evan, det, spec.z_ref)


def bloch_phase(spec: DeviceSpec, frequencies) -> tuple[np.ndarray, np.ndarray]:
    """Continuous supercell Bloch phase from dc, plus an ambiguity mask.

    The branch of arccos((A+D)/2) is chosen as the smallest candidate not
    below the previous value (the Bloch phase of a lossless reactive ladder
    is nondecreasing in frequency); inside stopbands the real part is pinned
    at the band-edge multiple of pi. A continuation step from dc is prepended
    when the grid does not start at 0.
    """
    f = np.asarray(frequencies, dtype=float)
    if f.size and f[0] > 0:
        n_lead = max(8, int(np.ceil(f[0] / max(np.min(np.diff(f)) if f.size > 1 else f[0], 1.0))))
        n_lead = min(n_lead, 20000)
        lead = np.linspace(0.0, f[0], n_lead, endpoint=False)
    else:
        lead = np.empty(0)
    full = np.concatenate([lead, f])
    tsc = supercell_abcd(spec, 2 * np.pi * full)
    half = np.atleast_1d(0.5 * (tsc.a + tsc.d).real)
    phi = np.empty_like(half)
    amb = np.zeros(half.shape, dtype=bool)
    prev = 0.0
    tol = 1e-9
    for j, a in enumerate(half):
        m0 = math.floor(prev / math.pi)
        if abs(a) <= 1.0:
            r = math.acos(a)
            cands = []
            for m in (m0 - 1, m0, m0 + 1, m0 + 2):
                base = 2 * math.pi * math.floor((m + 1) / 2)
                cands.extend((base - r, base + r))
        else:
            parity = 0 if a > 0 else 1
            cands = [math.pi * m for m in range(m0 - 1, m0 + 3) if m % 2 == parity]
        valid = [c for c in cands if c >= prev - tol]
        cur = min(valid)
        if cur - prev > 0.5 * math.pi:
            amb[j] = True
        phi[j] = cur
        prev = cur
    return phi[lead.size:], amb[lead.size:]


def dispersion(
    spec: DeviceSpec,
    spectrum: SParamSpectrum,
    baseline: Literal["unloaded", "supercell"] = "unloaded",
) -> DispersionCurve:
    """Unwrapped transmission phase, nonlinear residual k*, and k(w)."""
    f = spectrum.frequencies
    w = 2 * np.pi * f
    phi, amb = bloch_phase(spec, f)
    n = spec.n_supercells
    with np.errstate(invalid="ignore"):
        resid = np.angle(spectrum.s21 * np.exp(1j * n * phi))
    resid = np.where(np.isfinite(resid), resid, 0.0)
    theta = n * phi - resid
    ld = spec.dressed_inductance(spec.unloaded)
    if baseline == "unloaded":
        lin = w * math.sqrt(ld * spec.unloaded.shunt_capacitance) * spec.n_cells
    elif baseline == "supercell":
        ll = spec.dressed_inductance(spec.loaded)
        lsum = spec.n_unloaded * ld + spec.n_loaded * ll
        csum = spec.n_unloaded * spec.unloaded.shunt_capacitance + spec.n_loaded * spec.loaded.shunt_capacitance
        lin = w * math.sqrt(lsum * csum) * n
    else:
        raise DomainError("baseline must be 'unloaded' or 'supercell'")
    k_star = theta - lin
    jumps = np.zeros(f.shape, dtype=bool)
    if f.size > 1:
        jumps[1:] = np.abs(np.diff(k_star)) > math.pi
    return DispersionCurve(
        f, theta, k_star, theta / spec.length, phi, phi / spec.supercell_length,
        spec.length, amb | jumps, baseline,
    )


def find_bandgap(spectrum: SParamSpectrum, threshold_db: float = -10.0) -> tuple[float, float, float]:
    """Edges and midpoint of the widest contiguous |S21| < threshold region."""
    f = spectrum.frequencies
    db = spectrum.s21_db
    below = np.where(np.isfinite(db), db < threshold_db, False)
    if not below.any():
        raise NoRegionError(f"no region with |S21| below {threshold_db} dB")
    edges = np.diff(np.concatenate([[0], below.astype(int), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1

    def crossing(i0, i1):
        y0, y1 = db[i0], db[i1]
        if not (np.isfinite(y0) and np.isfinite(y1)) or y0 == y1:
            return 0.5 * (f[i0] + f[i1])
        return f[i0] + (threshold_db - y0) * (f[i1] - f[i0]) / (y1 - y0)

    best = None
    for s0, s1 in zip(starts, stops):
        lo = crossing(s0 - 1, s0) if s0 > 0 else f[s0]
        hi = crossing(s1, s1 + 1) if s1 < f.size - 1 else f[s1]
        if best is None or hi - lo > best[1] - best[0]:
            best = (float(lo), float(hi))
    return best[0], best[1], 0.5 * (best[0] + best[1])
