"""Compare the compiled and numpy kernel backends on exemplar-device workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times the batched ABCD cascade over the 1901-point 1-20 GHz grid and one
depleted-pump coupled-mode profile (3-9 GHz signals, 14 GHz pump), checks
that both backends agree, and prints the best-of-N wall time per kernel.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from kitsim import _kernels
from kitsim.cellmodel import mixing_coefficients
from kitsim.config import load_config
from kitsim.gainsim import bloch_dispersion

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "table1.yaml"


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workloads():
    cfg = load_config(CONFIG)
    spec = cfg.device_spec()
    omega = 2 * np.pi * np.linspace(1e9, 20e9, 1901)
    args = spec._kernel_args()

    def cascade(backend):
        return lambda: backend.device_abcd(omega, *args, spec.n_supercells, True)

    disp = bloch_dispersion(spec, 15e9)
    i_star = spec.film.scaling_current_2
    eps, xi = mixing_coefficients(spec.bias.dc_current, i_star)
    fp = 14e9
    fs = np.linspace(3e9, 9e9, 601)
    fs = fs[np.abs(fs - fp / 2) > 1.0]
    kp, ks, ki = float(disp.k(fp)), disp.k(fs), disp.k(fp - fs)
    y0 = np.zeros((fs.size, 4), dtype=complex)
    y0[:, 0] = spec.bias.pump_amplitude / i_star
    y0[:, 1] = 1.4e-6 / i_star
    x_eval = np.array([0.0, spec.length])

    def cme(backend):
        return lambda: backend.cme_integrate(kp, ks, ki, 0.0, eps * i_star, xi * i_star**2, y0, x_eval,
                                             depleted=True)

    return {"device_abcd (1901 freqs)": cascade, "cme_integrate (600 signals)": cme}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = {"python": _kernels.python_backend}
    if _kernels.compiled_backend is not None:
        backends["cython"] = _kernels.compiled_backend
    else:
        print("compiled backend not built; timing the numpy fallback only")

    print(f"{'kernel':<30}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for label, make in workloads().items():
        times, outs = {}, {}
        for name, backend in backends.items():
            times[name], outs[name] = best_of(make(backend), args.repeat)
        row = f"{label:<30}" + "".join(f"{times[n]:>11.3f}s" for n in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
            a, b = outs["python"][0], outs["cython"][0]
            finite = np.isfinite(a) & np.isfinite(b) & (np.abs(a) < 1e4)
            err = float(np.max(np.abs(a[finite] - b[finite]))) if finite.any() else 0.0
            row += f"   max |diff| {err:.1e}"
        print(row)


if __name__ == "__main__":
    main()
