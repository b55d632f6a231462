"""Pure-numpy implementations of the hot loops.

Used when the compiled extension is unavailable, and as the reference the
compiled path is benchmarked and cross-checked against.
"""

import numpy as np

#: Renormalize T by sqrt(det T) only while det is resolvable in float64.
RENORM_LIMIT = 1e-10

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


def cell_abcd(ld, c, lf, omega):
    """Batched unit-cell matrices, shape (n, 2, 2). Returns (T, pole_mask)."""
    omega = np.asarray(omega, dtype=float)
    den = 2.0 - lf * c * omega**2
    pole = np.abs(den) <= 1e-14
    safe = np.where(pole, 1.0, den)
    t = np.empty(omega.shape + (2, 2), dtype=complex)
    t[..., 0, 0] = 1.0
    t[..., 0, 1] = 1j * omega * ld
    t[..., 1, 0] = 2j * c * omega / safe
    t[..., 1, 1] = 1.0 - 2.0 * ld * c * omega**2 / safe
    return t, pole


def _renorm(t):
    a, b, c, d = t[..., 0, 0], t[..., 0, 1], t[..., 1, 0], t[..., 1, 1]
    ad, bc = a * d, b * c
    scale = np.abs(ad) + np.abs(bc)
    ok = np.finfo(float).eps * scale < RENORM_LIMIT
    if ok.any():
        root = np.sqrt(ad - bc)
        t[ok] /= root[ok, None, None]
    return t


def matpow(t, n, renormalize=True):
    """Batched binary exponentiation of 2x2 matrices."""
    if n < 0:
        raise ValueError("power must be >= 0")
    result = np.broadcast_to(np.eye(2, dtype=complex), t.shape).copy()
    base = t.copy()
    first = True
    while n:
        if n & 1:
            result = base.copy() if first else result @ base
            first = False
            if renormalize:
                _renorm(result)
        n >>= 1
        if n:
            base = base @ base
            if renormalize:
                _renorm(base)
    return result


def device_abcd(omega, ld_u, c_u, lf_u, ld_l, c_l, lf_l, n_u, n_l, n_sc, renormalize=True):
    """Supercell and device matrices on a frequency grid.

    Returns (T_sc, T_dev, pole_mask). ``n_u`` must be even.
    """
    tu, pu = cell_abcd(ld_u, c_u, lf_u, omega)
    tl, pl = cell_abcd(ld_l, c_l, lf_l, omega)
    th = matpow(tu, n_u // 2, renormalize)
    tsc = th @ matpow(tl, n_l, renormalize) @ th
    if renormalize:
        _renorm(tsc)
    tdev = matpow(tsc, n_sc, renormalize)
    pole = (pu & (n_u > 0)) | (pl & (n_l > 0))
    return tsc, tdev, pole


def _cme_rhs(x, y, kp, ks, ki, kh, dk, dh, eps, xi, depleted, harmonic):
    p, s, i, h = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
    pp = p.real**2 + p.imag**2
    ss = s.real**2 + s.imag**2
    ii = i.real**2 + i.imag**2
    e = np.exp(1j * dk * x)
    out = np.empty_like(y)
    out[:, 1] = 0.25 * ks * eps * p * np.conj(i) * e + 0.125j * ks * xi * (ss + 2 * ii + 2 * pp) * s
    out[:, 2] = 0.25 * ki * eps * p * np.conj(s) * e + 0.125j * ki * xi * (ii + 2 * ss + 2 * pp) * i
    if depleted:
        out[:, 0] = (
            -0.25 * kp * eps * s * i * np.conj(e)
            + 0.125j * kp * xi * (pp + 2 * ss + 2 * ii) * p
        )
    else:
        out[:, 0] = 0.125j * kp * xi * pp * p
    if harmonic:
        eh = np.exp(1j * dh * x)
        out[:, 3] = -0.125 * kh * eps * p * p * eh
        if depleted:
            out[:, 0] += 0.25 * kp * eps * h * np.conj(p) * np.conj(eh)
    else:
        out[:, 3] = 0.0
    return out


def cme_integrate(
    kp, ks, ki, kh, eps, xi, y0, x_eval, rtol=1e-8, atol=1e-12,
    depleted=False, harmonic=False, max_steps=200000,
):
    """Integrate the pump/signal/idler/harmonic system for a batch of signals.

    ``y0`` has shape (n, 4) with columns (pump, signal, idler, harmonic);
    amplitudes are dimensionless (normalized by the scaling current) and
    ``eps``/``xi`` are normalized to match. The batch shares one adaptive step,
    sized by the worst member. Returns an array (len(x_eval), n, 4) and the number
    of accepted steps.
    """
    ks = np.asarray(ks, dtype=float)
    ki = np.asarray(ki, dtype=float)
    y = np.array(y0, dtype=complex)
    dk = kp - ks - ki
    dh = 2 * kp - kh
    x_eval = np.asarray(x_eval, dtype=float)
    out = np.empty((x_eval.size,) + y.shape, dtype=complex)
    args = (kp, ks, ki, kh, dk, dh, eps, xi, depleted, harmonic)

    x = 0.0
    span = x_eval[-1] if x_eval.size else 0.0
    h = span / 100.0 if span > 0 else 0.0
    steps = 0
    k1 = _cme_rhs(x, y, *args)
    for j, target in enumerate(x_eval):
        while x < target:
            if steps >= max_steps:
                raise RuntimeError("CME integrator exceeded the step budget")
            hs = min(h, target - x)
            k = [k1]
            for stage in range(1, 7):
                yi = y + hs * sum(a * kk for a, kk in zip(_A[stage], k))
                k.append(_cme_rhs(x + _C[stage] * hs, yi, *args))
            y_new = y + hs * sum(b * kk for b, kk in zip(_B5, k) if b != 0.0)
            err = hs * sum(e * kk for e, kk in zip(_E, k) if e != 0.0)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = np.sqrt(np.mean((np.abs(err) / scale) ** 2, axis=1)).max()
            if en <= 1.0:
                x = target if hs == target - x else x + hs
                y = y_new
                k1 = k[6]
                steps += 1
                fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en**-0.2))
                if hs == h or fac < 1.0:
                    h = hs * fac
            else:
                h = hs * max(0.2, 0.9 * en**-0.2)
            if h < 1e-14 * max(span, 1.0):
                raise RuntimeError("CME integrator step size underflow")
        out[j] = y
    return out, steps
