"""Regenerate the synthetic trace fixtures in this directory.

Every trace comes from a closed-form model with a fixed seed, so the files are
reproducible byte for byte. Run ``python3 tests/fixtures/make_fixtures.py``.
"""

import math
from pathlib import Path

import numpy as np

from kitsim.io import write_csv
from kitsim.noisecal import forward_noise

HERE = Path(__file__).resolve().parent
HBAR = 1.054571817e-34
E = 1.602176634e-19


def scaling(rng):
    bias = np.linspace(0.0, 1.0e-3, 21)
    freq, tau = 6.0e9, 50e-9
    theta_r = 2 * math.pi * freq * tau / 2
    y = -((bias / 2.14e-3) ** 2) - (bias / 1.95e-3) ** 4
    y[1:] *= 1 + 0.01 * rng.standard_normal(bias.size - 1)
    phase = 1.25 + theta_r * y
    write_csv(HERE / "scaling.csv", ("bias_a", "phase_rad"), np.column_stack([bias, phase]),
              {"freq_hz": repr(freq), "tau_s": repr(tau)})


def ic(rng):
    bias = np.arange(0.0, 1.0e-3 + 1e-12, 10e-6)
    s21 = -1.0 + 1.0 * np.sin(bias / 37e-6) + 0.2 * rng.standard_normal(bias.size)
    s21[bias >= 650e-6 - 1e-12] -= 20.0
    write_csv(HERE / "ic.csv", ("bias_a", "s21_db"), np.column_stack([bias, s21]))


def tdr():
    t = np.arange(0.0, 100e-9, 0.25e-9)
    z = np.full(t.size, 50.0)
    z[(t >= 10e-9) & (t < 60e-9)] = 45.0
    rho = (z - 50.0) / (z + 50.0)
    write_csv(HERE / "tdr.csv", ("time_s", "rho"), np.column_stack([t, rho]))


def rt(rng):
    t = np.linspace(2.0, 20.0, 181)
    tc, rn = 10.0, 500 * 217.0
    r = rn / (1 + np.exp(-(t - tc) / 0.05))
    r[r < 1e-6 * rn] = 0.0
    r += 1e-3 * rn * rng.standard_normal(t.size) * (t > tc + 0.5)
    write_csv(HERE / "rt.csv", ("temp_k", "resistance_ohm"), np.column_stack([t, r]))


def iip():
    """Device-like two-tone sweep with IIP1 = -68 dBm and IIP3 = -55 dBm."""
    pin = np.arange(-100.0, -59.0, 1.0)
    gain, iip1, iip3 = 18.0, -68.0, -55.0
    # soft compression 10 log10(1 + (P/P_c)^2) reaches 1 dB at P = iip1
    pc = iip1 - 10 * math.log10(10 ** 0.1 - 1) / 2
    f1 = pin + gain - 10 * np.log10(1 + 10 ** ((pin - pc) / 5))
    imd = 3 * pin + gain - 2 * iip3
    write_csv(HERE / "iip.csv", ("pin_dbm", "pout_f1_dbm", "pout_f2_dbm", "pout_imd_dbm"),
              np.column_stack([pin, f1, f1, imd]), {"iip1_dbm": "-68", "iip3_dbm": "-55"})


def resonance():
    f = np.linspace(4.0e9, 6.0e9, 401)
    f0, width = 5.0123e9, 8e6
    s21 = -3.0 - 25.0 / (1 + ((f - f0) / width) ** 2)
    write_csv(HERE / "resonance.csv", ("freq_hz", "s21_db"), np.column_stack([f, s21]),
              {"f0_hz": repr(f0)})


def sntj(rng):
    """Three noise traces with a shallow excess-noise minimum near 6 GHz."""
    eta0, eta1 = 10 ** (-0.6 / 20), 10 ** (-0.45 / 20)
    te = 0.06
    for f, g, n_ex in ((5.0e9, 2.0e4, 1.4), (6.0e9, 2.5e4, 1.1), (7.0e9, 2.2e4, 1.6)):
        hw = HBAR * 2 * math.pi * f
        v = np.linspace(0.0, 60 * hw / E, 241)
        n = forward_noise(v, f, te, g, n_ex, eta0, eta1, 1.0, 12e9 - f)
        n = n * (1 + 0.003 * rng.standard_normal(v.size))
        write_csv(HERE / f"sntj_{int(f / 1e9)}ghz.csv", ("v_volt", "nout_quanta"),
                  np.column_stack([v, n]),
                  {"freq_hz": repr(f), "idler_hz": repr(12e9 - f), "te_k": repr(te),
                   "excess_noise_quanta": repr(n_ex)})


def main():
    rng = np.random.default_rng(20240917)
    scaling(rng)
    ic(rng)
    tdr()
    rt(rng)
    iip()
    resonance()
    sntj(rng)


if __name__ == "__main__":
    main()
