"""Trace and artifact file formats.

CSV tables have one header row naming the columns and may be preceded by
``# key=value`` metadata lines. Number formatting uses ``repr`` so output is
byte-stable and round-trips exactly. Touchstone v1 two-port files (``.s2p``)
are written in RI format with frequencies in Hz.
"""

from __future__ import annotations

import io as _io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from kitsim.errors import TraceFormatError

PathLike = Union[str, Path]

#: column sets of the supported trace and artifact tables
FORMATS = {
    "admittance": ("freq_hz", "re_y11", "im_y11"),
    "rt": ("temp_k", "resistance_ohm"),
    "design": ("stub_length_m", "z0_ohm", "l_per_cell_h", "c_per_cell_f"),
    "dispersion": ("freq_hz", "arg_s21_rad", "k_star_rad"),
    "gain": ("pump_hz", "signal_hz", "gain_db"),
    "scaling": ("bias_a", "phase_rad"),
    "tdr": ("time_s", "rho"),
    "iip": ("pin_dbm", "pout_f1_dbm", "pout_f2_dbm", "pout_imd_dbm"),
    "ic": ("bias_a", "s21_db"),
    "sntj": ("v_volt", "nout_quanta"),
    "resonance": ("freq_hz", "s21_db"),
}


@dataclass
class Table:
    columns: tuple
    data: np.ndarray
    metadata: dict = field(default_factory=dict)
    source: str = "<memory>"

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def meta_float(self, key: str, default: Optional[float] = None) -> float:
        if key not in self.metadata:
            if default is None:
                raise TraceFormatError(f"{self.source}: missing '# {key}=' header line")
            return default
        try:
            return float(self.metadata[key])
        except ValueError:
            raise TraceFormatError(
                f"{self.source}: header '# {key}=' is not a number: {self.metadata[key]!r}"
            ) from None


def fmt(x: float) -> str:
    """Shortest round-trip representation; stable across runs and platforms."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def parse_csv(text: str, expected: Optional[Sequence[str]] = None, source: str = "<string>") -> Table:
    """Parse a numeric CSV table; errors name the file and 1-based line number."""
    metadata: dict = {}
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and header is None:
                key, _, value = body.partition("=")
                metadata[key.strip()] = value.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = tuple(cells)
            if expected is not None and header != tuple(expected):
                raise TraceFormatError(
                    f"{source}:{lineno}: header {','.join(header)!r} does not match "
                    f"expected {','.join(expected)!r}"
                )
            continue
        if len(cells) != len(header):
            raise TraceFormatError(
                f"{source}:{lineno}: expected {len(header)} fields, found {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise TraceFormatError(f"{source}:{lineno}: not a number: {bad!r}") from None
    if header is None:
        raise TraceFormatError(f"{source}: no header row")
    if not rows:
        raise TraceFormatError(f"{source}: no data rows")
    return Table(header, np.array(rows, dtype=float), metadata, source)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv(path: PathLike, expected: Optional[Sequence[str]] = None) -> Table:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TraceFormatError(f"{path}: {exc.strerror}") from exc
    return parse_csv(text, expected, str(path))


def read_trace(path: PathLike, kind: str) -> Table:
    return read_csv(path, FORMATS[kind])


def csv_text(columns: Sequence[str], data, metadata: Optional[dict] = None) -> str:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[1] != len(columns):
        raise ValueError("column count mismatch")
    buf = _io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}={value}\n")
    buf.write(",".join(columns) + "\n")
    for row in arr:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(path: PathLike, columns: Sequence[str], data, metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(columns, data, metadata))
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(path: PathLike, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(obj))
    return path


# ---------------------------------------------------------------------------
# Touchstone v1
# ---------------------------------------------------------------------------

_FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}


@dataclass(frozen=True)
class Touchstone:
    frequencies: np.ndarray
    s: np.ndarray  # (n, 2, 2)
    z_ref: float
    comments: tuple = ()


def touchstone_text(frequencies, s11, s21, s12, s22, z_ref: float = 50.0,
                    comments: Iterable[str] = ()) -> str:
    """Touchstone v1 two-port text, RI format, Hz. NaN entries are written as 'nan'."""
    f = np.asarray(frequencies, dtype=float)
    cols = [np.asarray(x, dtype=complex) for x in (s11, s21, s12, s22)]
    buf = _io.StringIO()
    for c in comments:
        buf.write(f"! {c}\n")
    buf.write(f"# HZ S RI R {fmt(z_ref)}\n")
    for i in range(f.size):
        parts = [fmt(f[i])]
        for c in cols:
            parts += [fmt(c[i].real), fmt(c[i].imag)]
        buf.write(" ".join(parts) + "\n")
    return buf.getvalue()


def write_touchstone(path: PathLike, frequencies, s11, s21, s12, s22, z_ref: float = 50.0,
                     comments: Iterable[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(touchstone_text(frequencies, s11, s21, s12, s22, z_ref, comments))
    return path


def parse_touchstone(text: str, source: str = "<string>") -> Touchstone:
    """Read a Touchstone v1 two-port file (RI, MA or DB; any frequency unit)."""
    unit, fmt_, z_ref = 1e9, "MA", 50.0  # v1 defaults
    seen_option = False
    comments = []
    values: list[float] = []
    lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line, _, comment = raw.partition("!")
        if comment.strip() and not line.strip():
            comments.append(comment.strip())
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if seen_option:
                continue  # v1: only the first option line counts
            seen_option = True
            tokens = line[1:].upper().split()
            i = 0
            while i < len(tokens):
                t = tokens[i]
                if t in _FREQ_UNITS:
                    unit = _FREQ_UNITS[t]
                elif t in ("RI", "MA", "DB"):
                    fmt_ = t
                elif t == "R" and i + 1 < len(tokens):
                    try:
                        z_ref = float(tokens[i + 1])
                    except ValueError:
                        raise TraceFormatError(
                            f"{source}:{lineno}: bad reference impedance {tokens[i + 1]!r}"
                        ) from None
                    i += 1
                elif t != "S":
                    raise TraceFormatError(f"{source}:{lineno}: unsupported option {t!r}")
                i += 1
            continue
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise TraceFormatError(f"{source}:{lineno}: not a number: {tok!r}") from None
            lines.append(lineno)
    if len(values) % 9:
        raise TraceFormatError(
            f"{source}:{lines[-1] if lines else 0}: two-port data must come in groups of 9 values"
        )
    if not values:
        raise TraceFormatError(f"{source}: no data")
    arr = np.array(values).reshape(-1, 9)
    f = arr[:, 0] * unit
    if np.any(np.diff(f) <= 0):
        bad = int(np.argmax(np.diff(f) <= 0)) + 1
        raise TraceFormatError(f"{source}:{lines[9 * bad]}: frequencies must increase")
    a, b = arr[:, 1::2], arr[:, 2::2]
    if fmt_ == "RI":
        z = a + 1j * b
    elif fmt_ == "MA":
        z = a * np.exp(1j * np.deg2rad(b))
    else:
        z = 10 ** (a / 20) * np.exp(1j * np.deg2rad(b))
    # v1 two-port column order: S11 S21 S12 S22
    s = np.empty((f.size, 2, 2), dtype=complex)
    s[:, 0, 0], s[:, 1, 0], s[:, 0, 1], s[:, 1, 1] = z[:, 0], z[:, 1], z[:, 2], z[:, 3]
    return Touchstone(f, s, z_ref, tuple(comments))


def read_touchstone(path: PathLike) -> Touchstone:
    path = Path(path)
    return parse_touchstone(path.read_text(), str(path))
