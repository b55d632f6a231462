# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: batched ABCD cascade and per-signal adaptive CME integration.

Both release the GIL so callers may fan out over threads.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, cos, sin, pow, fmax, fmin

cnp.import_array()

cdef double RENORM_LIMIT = 1e-10
cdef double EPS = 2.220446049250313e-16


cdef inline double abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double cabs(double complex z) nogil:
    return sqrt(abs2(z))


cdef inline double complex conj(double complex z) nogil:
    return z.conjugate()


cdef inline double complex csqrt(double complex z) nogil:
    """Principal square root."""
    cdef double r = cabs(z), re, im
    if r == 0.0:
        return 0.0
    re = sqrt(0.5 * (r + z.real))
    im = sqrt(0.5 * (r - z.real))
    if z.imag < 0:
        im = -im
    return re + 1j * im


# --------------------------------------------------------------------------
# 2x2 complex matrices stored as double complex[4] = (a, b, c, d)
# --------------------------------------------------------------------------

cdef inline void mat_mul(const double complex* x, const double complex* y,
                         double complex* out) nogil:
    cdef double complex a = x[0] * y[0] + x[1] * y[2]
    cdef double complex b = x[0] * y[1] + x[1] * y[3]
    cdef double complex c = x[2] * y[0] + x[3] * y[2]
    cdef double complex d = x[2] * y[1] + x[3] * y[3]
    out[0] = a
    out[1] = b
    out[2] = c
    out[3] = d


cdef inline void mat_renorm(double complex* t) nogil:
    cdef double complex ad = t[0] * t[3]
    cdef double complex bc = t[1] * t[2]
    cdef double complex root
    cdef int j
    if EPS * (cabs(ad) + cabs(bc)) < RENORM_LIMIT:
        root = csqrt(ad - bc)
        for j in range(4):
            t[j] = t[j] / root


cdef void mat_pow(const double complex* t, long n, bint renorm, double complex* out) nogil:
    cdef double complex base[4]
    cdef int j
    cdef bint first = True
    for j in range(4):
        base[j] = t[j]
    out[0] = 1.0
    out[1] = 0.0
    out[2] = 0.0
    out[3] = 1.0
    while n:
        if n & 1:
            if first:
                for j in range(4):
                    out[j] = base[j]
                first = False
            else:
                mat_mul(out, base, out)
            if renorm:
                mat_renorm(out)
        n >>= 1
        if n:
            mat_mul(base, base, base)
            if renorm:
                mat_renorm(base)


cdef inline bint cell_mat(double ld, double c, double lf, double w, double complex* t) nogil:
    cdef double den = 2.0 - lf * c * w * w
    cdef bint pole = fabs(den) <= 1e-14
    if pole:
        den = 1.0
    t[0] = 1.0
    t[1] = 1j * w * ld
    t[2] = 2j * c * w / den
    t[3] = 1.0 - 2.0 * ld * c * w * w / den
    return pole


def device_abcd(double[::1] omega, double ld_u, double c_u, double lf_u,
                double ld_l, double c_l, double lf_l, long n_u, long n_l, long n_sc,
                bint renormalize=True):
    """Supercell and device matrices on a frequency grid; see the numpy twin."""
    cdef Py_ssize_t n = omega.shape[0], k
    tsc_arr = np.empty((n, 2, 2), dtype=np.complex128)
    tdev_arr = np.empty((n, 2, 2), dtype=np.complex128)
    pole_arr = np.zeros(n, dtype=np.bool_)
    cdef double complex[:, :, ::1] tsc = tsc_arr
    cdef double complex[:, :, ::1] tdev = tdev_arr
    cdef cnp.npy_bool[::1] pole = pole_arr
    cdef double complex tu[4]
    cdef double complex tl[4]
    cdef double complex th[4]
    cdef double complex tlp[4]
    cdef double complex s[4]
    cdef double complex d[4]
    cdef bint pu, pl
    cdef int j
    with nogil:
        for k in range(n):
            pu = cell_mat(ld_u, c_u, lf_u, omega[k], tu)
            pl = cell_mat(ld_l, c_l, lf_l, omega[k], tl)
            pole[k] = (pu and n_u > 0) or (pl and n_l > 0)
            mat_pow(tu, n_u // 2, renormalize, th)
            mat_pow(tl, n_l, renormalize, tlp)
            mat_mul(th, tlp, s)
            mat_mul(s, th, s)
            if renormalize:
                mat_renorm(s)
            mat_pow(s, n_sc, renormalize, d)
            for j in range(4):
                tsc[k, j // 2, j % 2] = s[j]
                tdev[k, j // 2, j % 2] = d[j]
    return tsc_arr, tdev_arr, pole_arr


# --------------------------------------------------------------------------
# Coupled-mode equations
# --------------------------------------------------------------------------

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784
cdef double B6 = 11.0 / 84
cdef double E1 = 35.0 / 384 - 5179.0 / 57600
cdef double E3 = 500.0 / 1113 - 7571.0 / 16695
cdef double E4 = 125.0 / 192 - 393.0 / 640
cdef double E5 = -2187.0 / 6784 + 92097.0 / 339200
cdef double E6 = 11.0 / 84 - 187.0 / 2100
cdef double E7 = -1.0 / 40


cdef struct CmeParams:
    double kp, ks, ki, kh, dk, dh, eps, xi
    bint depleted, harmonic


cdef inline double complex expi(double t) nogil:
    return cos(t) + 1j * sin(t)


cdef void cme_rhs(double x, const double complex* y, const CmeParams* q,
                  double complex* out) nogil:
    cdef double complex p = y[0], s = y[1], i = y[2], h = y[3]
    cdef double pp = abs2(p), ss = abs2(s), ii = abs2(i)
    cdef double complex e = expi(q.dk * x), eh
    out[1] = 0.25 * q.ks * q.eps * p * conj(i) * e + 0.125j * q.ks * q.xi * (ss + 2 * ii + 2 * pp) * s
    out[2] = 0.25 * q.ki * q.eps * p * conj(s) * e + 0.125j * q.ki * q.xi * (ii + 2 * ss + 2 * pp) * i
    if q.depleted:
        out[0] = -0.25 * q.kp * q.eps * s * i * conj(e) + 0.125j * q.kp * q.xi * (pp + 2 * ss + 2 * ii) * p
    else:
        out[0] = 0.125j * q.kp * q.xi * pp * p
    if q.harmonic:
        eh = expi(q.dh * x)
        out[3] = -0.125 * q.kh * q.eps * p * p * eh
        if q.depleted:
            out[0] = out[0] + 0.25 * q.kp * q.eps * h * conj(p) * conj(eh)
    else:
        out[3] = 0.0


cdef int integrate_one(CmeParams* q, double complex* y, const double* xe, Py_ssize_t ne,
                       double rtol, double atol, long max_steps,
                       double complex* out, long* nsteps) nogil:
    """Adaptive DP45 for one signal; writes y at each xe into out[ne*4]. Returns 0 on success."""
    cdef double complex k1[4]
    cdef double complex k2[4]
    cdef double complex k3[4]
    cdef double complex k4[4]
    cdef double complex k5[4]
    cdef double complex k6[4]
    cdef double complex k7[4]
    cdef double complex yt[4]
    cdef double complex yn[4]
    cdef double x = 0.0, hs, h, target, en, sc, fac, span
    cdef double complex errj
    cdef Py_ssize_t j, m
    cdef bint last
    span = xe[ne - 1] if ne > 0 else 0.0
    h = span / 100.0 if span > 0 else 0.0
    cme_rhs(x, y, q, k1)
    for j in range(ne):
        target = xe[j]
        while x < target:
            if nsteps[0] >= max_steps:
                return 1
            last = h >= target - x
            hs = target - x if last else h
            for m in range(4):
                yt[m] = y[m] + hs * A21 * k1[m]
            cme_rhs(x + C2 * hs, yt, q, k2)
            for m in range(4):
                yt[m] = y[m] + hs * (A31 * k1[m] + A32 * k2[m])
            cme_rhs(x + C3 * hs, yt, q, k3)
            for m in range(4):
                yt[m] = y[m] + hs * (A41 * k1[m] + A42 * k2[m] + A43 * k3[m])
            cme_rhs(x + C4 * hs, yt, q, k4)
            for m in range(4):
                yt[m] = y[m] + hs * (A51 * k1[m] + A52 * k2[m] + A53 * k3[m] + A54 * k4[m])
            cme_rhs(x + C5 * hs, yt, q, k5)
            for m in range(4):
                yt[m] = y[m] + hs * (A61 * k1[m] + A62 * k2[m] + A63 * k3[m] + A64 * k4[m]
                                     + A65 * k5[m])
            cme_rhs(x + hs, yt, q, k6)
            for m in range(4):
                yn[m] = y[m] + hs * (B1 * k1[m] + B3 * k3[m] + B4 * k4[m] + B5 * k5[m]
                                     + B6 * k6[m])
            cme_rhs(x + hs, yn, q, k7)
            en = 0.0
            for m in range(4):
                errj = hs * (E1 * k1[m] + E3 * k3[m] + E4 * k4[m] + E5 * k5[m] + E6 * k6[m]
                             + E7 * k7[m])
                sc = atol + rtol * fmax(cabs(y[m]), cabs(yn[m]))
                en += abs2(errj) / (sc * sc)
            en = sqrt(en / 4.0)
            if en <= 1.0:
                x = target if last else x + hs
                for m in range(4):
                    y[m] = yn[m]
                    k1[m] = k7[m]
                nsteps[0] += 1
                fac = 5.0 if en == 0.0 else fmin(5.0, fmax(0.2, 0.9 * pow(en, -0.2)))
                if not last or fac < 1.0:
                    h = hs * fac
            else:
                h = hs * fmax(0.2, 0.9 * pow(en, -0.2))
            if h < 1e-14 * fmax(span, 1.0):
                return 2
        for m in range(4):
            out[j * 4 + m] = y[m]
    return 0


def cme_integrate(double kp, ks, ki, double kh, double eps, double xi, y0, x_eval,
                  double rtol=1e-8, double atol=1e-12, bint depleted=False,
                  bint harmonic=False, long max_steps=200000):
    """Per-signal adaptive integration; same contract as the numpy twin.

    The step count returned is the maximum over the batch.
    """
    cdef double[::1] ksv = np.ascontiguousarray(ks, dtype=np.float64)
    cdef double[::1] kiv = np.ascontiguousarray(ki, dtype=np.float64)
    cdef double complex[:, ::1] y0v = np.ascontiguousarray(y0, dtype=np.complex128)
    cdef double[::1] xev = np.ascontiguousarray(x_eval, dtype=np.float64)
    cdef Py_ssize_t n = ksv.shape[0], ne = xev.shape[0], s, j, m
    out_arr = np.empty((ne, n, 4), dtype=np.complex128)
    cdef double complex[:, :, ::1] outv = out_arr
    buf_arr = np.empty((n, ne * 4), dtype=np.complex128)
    cdef double complex[:, ::1] buf = buf_arr
    cdef double complex y[4]
    cdef CmeParams q
    cdef long steps, worst = 0
    cdef int status = 0, rc
    q.kp = kp
    q.kh = kh
    q.eps = eps
    q.xi = xi
    q.dh = 2 * kp - kh
    q.depleted = depleted
    q.harmonic = harmonic
    with nogil:
        for s in range(n):
            q.ks = ksv[s]
            q.ki = kiv[s]
            q.dk = kp - ksv[s] - kiv[s]
            for m in range(4):
                y[m] = y0v[s, m]
            steps = 0
            rc = integrate_one(&q, y, &xev[0], ne, rtol, atol, max_steps, &buf[s, 0], &steps)
            if rc != 0:
                status = rc
                break
            if steps > worst:
                worst = steps
    if status == 1:
        raise RuntimeError("CME integrator exceeded the step budget")
    if status == 2:
        raise RuntimeError("CME integrator step size underflow")
    for s in range(n):
        for j in range(ne):
            for m in range(4):
                outv[j, s, m] = buf[s, j * 4 + m]
    return out_arr, int(worst)
