# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Same functions, signatures and status codes as ``_kernels_py``; see that
module for the parameter and ground vector layouts.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, exp, fabs, sqrt, INFINITY, NAN, isfinite

cnp.import_array()

NAME = "compiled"

CONTACT_OK = 0
CONTACT_AVERAGED = 1
CONTACT_SINGULAR = 2
SIM_OK = 0
SIM_PENETRATION = 3
SIM_NONFINITE = 4

cdef enum:
    C_OK = 0
    C_AVERAGED = 1
    C_SINGULAR = 2
    S_OK = 0
    S_PENETRATION = 3
    S_NONFINITE = 4
    NP = 16



cdef inline void _load(const double[::1] src, double* p):
    cdef int i
    for i in range(NP):
        p[i] = src[i]


cdef void _accel(double th, double phd, double thd, double um, double ft,
                 const double* p, double* out) noexcept nogil:
    cdef double mb = p[0], mw = p[1], Ib = p[2], Iw = p[3], r = p[4], beta = p[5]
    cdef double bx = p[6], by = p[7], ty = p[9], g = p[11], k1 = p[12], k2 = p[13]
    cdef double c = cos(th), s = sin(th), cb = cos(beta), sb = sin(beta)
    cdef double m = mb + mw
    cdef double rbx = c * bx + s * by
    cdef double rby = -s * bx + c * by
    cdef double abx = -s * bx + c * by
    cdef double aby = -c * bx - s * by
    cdef double M11 = m * r * r + Iw
    cdef double M12 = mb * r * (cb * abx + sb * aby)
    cdef double M22 = mb * (bx * bx + by * by) + Ib
    cdef double M12p = -mb * r * (cb * rbx + sb * rby)
    cdef double h1 = M12p * thd * thd + m * g * r * sb + k2 * phd
    cdef double h2 = mb * g * aby - k2 * phd
    cdef double f1 = k1 * um + r * cos(th + beta) * ft - h1
    cdef double f2 = -k1 * um + ty * ft - h2
    cdef double det = M11 * M22 - M12 * M12
    out[0] = (M22 * f1 - M12 * f2) / det
    out[1] = (M11 * f2 - M12 * f1) / det


cdef void _accel_jac(double th, double phd, double thd, double um, double ft,
                     const double* p, double* out) noexcept nogil:
    """out: phdd, thdd, then (phdd, thdd) partials w.r.t. theta, phi_dot, theta_dot, u_m, f_t."""
    cdef double mb = p[0], mw = p[1], Ib = p[2], Iw = p[3], r = p[4], beta = p[5]
    cdef double bx = p[6], by = p[7], ty = p[9], g = p[11], k1 = p[12], k2 = p[13]
    cdef double c = cos(th), s = sin(th), cb = cos(beta), sb = sin(beta)
    cdef double m = mb + mw
    cdef double rbx = c * bx + s * by
    cdef double rby = -s * bx + c * by
    cdef double abx = -s * bx + c * by
    cdef double aby = -c * bx - s * by
    cdef double M11 = m * r * r + Iw
    cdef double M12 = mb * r * (cb * abx + sb * aby)
    cdef double M22 = mb * (bx * bx + by * by) + Ib
    cdef double M12p = -mb * r * (cb * rbx + sb * rby)
    cdef double h1 = M12p * thd * thd + m * g * r * sb + k2 * phd
    cdef double h2 = mb * g * aby - k2 * phd
    cdef double ced = cos(th + beta), sed = sin(th + beta)
    cdef double f1 = k1 * um + r * ced * ft - h1
    cdef double f2 = -k1 * um + ty * ft - h2
    cdef double det = M11 * M22 - M12 * M12
    cdef double phdd = (M22 * f1 - M12 * f2) / det
    cdef double thdd = (M11 * f2 - M12 * f1) / det
    cdef double g1, g2
    out[0] = phdd
    out[1] = thdd
    g1 = -r * sed * ft + M12 * thd * thd - M12p * thdd
    g2 = mb * g * rby - M12p * phdd
    out[2] = (M22 * g1 - M12 * g2) / det
    out[3] = (M11 * g2 - M12 * g1) / det
    out[4] = (-M22 * k2 - M12 * k2) / det
    out[5] = (M11 * k2 + M12 * k2) / det
    g1 = -2.0 * M12p * thd
    out[6] = M22 * g1 / det
    out[7] = -M12 * g1 / det
    out[8] = (M22 * k1 + M12 * k1) / det
    out[9] = (-M11 * k1 - M12 * k1) / det
    g1 = r * ced
    out[10] = (M22 * g1 - M12 * ty) / det
    out[11] = (M11 * ty - M12 * g1) / det


cdef double _lu_solve(double* A, double* rhs, int nrhs) noexcept nogil:
    """Partial-pivot elimination on row-major 4x4 ``A`` (destroyed).

    ``rhs`` holds ``nrhs`` consecutive 4-vectors solved in place.  Returns the
    largest/smallest pivot magnitude ratio.
    """
    cdef int k, i, j, q, piv
    cdef double pmax = 0.0, pmin = INFINITY, best, mag, akk, f, tmp, acc
    for k in range(4):
        piv = k
        best = fabs(A[4 * k + k])
        for i in range(k + 1, 4):
            if fabs(A[4 * i + k]) > best:
                best = fabs(A[4 * i + k])
                piv = i
        if piv != k:
            for j in range(4):
                tmp = A[4 * k + j]
                A[4 * k + j] = A[4 * piv + j]
                A[4 * piv + j] = tmp
            for q in range(nrhs):
                tmp = rhs[4 * q + k]
                rhs[4 * q + k] = rhs[4 * q + piv]
                rhs[4 * q + piv] = tmp
        akk = A[4 * k + k]
        mag = fabs(akk)
        if mag > pmax:
            pmax = mag
        if mag < pmin:
            pmin = mag
        if mag == 0.0:
            return INFINITY
        for i in range(k + 1, 4):
            f = A[4 * i + k] / akk
            if f != 0.0:
                for j in range(k + 1, 4):
                    A[4 * i + j] -= f * A[4 * k + j]
                for q in range(nrhs):
                    rhs[4 * q + i] -= f * rhs[4 * q + k]
    for q in range(nrhs):
        for i in range(3, -1, -1):
            acc = rhs[4 * q + i]
            for j in range(i + 1, 4):
                acc -= A[4 * i + j] * rhs[4 * q + j]
            rhs[4 * q + i] = acc / A[4 * i + i]
    return pmax / pmin


cdef void _contact_system(double th, double phd, double um, double ft, double phdd,
                          double thdd, const double* p, double* A, double* b) noexcept nogil:
    cdef double mw = p[1], Ib = p[2], Iw = p[3], r = p[4], beta = p[5]
    cdef double bx = p[6], by = p[7], ltz = p[10], g = p[11], k1 = p[12], k2 = p[13]
    cdef double c = cos(th), s = sin(th), cb = cos(beta), sb = sin(beta)
    cdef double rhox = -(c * bx + s * by)
    cdef double rhoy = -(-s * bx + c * by)
    cdef double tau = k1 * um - k2 * phd
    A[0] = 1.0; A[1] = 0.0; A[2] = cb; A[3] = -sb
    A[4] = 0.0; A[5] = 1.0; A[6] = sb; A[7] = cb
    A[8] = 0.0; A[9] = 0.0; A[10] = r; A[11] = 0.0
    A[12] = -rhoy; A[13] = rhox; A[14] = 0.0; A[15] = 0.0
    b[0] = mw * r * phdd * cb
    b[1] = mw * r * phdd * sb + mw * g
    b[2] = tau - Iw * phdd
    b[3] = Ib * thdd + tau - (ltz - by) * ft


cdef double _singular_measure(double th, const double* p) noexcept nogil:
    cdef double c = cos(th), s = sin(th), bx = p[6], by = p[7], beta = p[5]
    cdef double rhox = -(c * bx + s * by)
    cdef double rhoy = -(-s * bx + c * by)
    return (rhox * cos(beta) + rhoy * sin(beta)) / sqrt(rhox * rhox + rhoy * rhoy)


cdef double _contact_direct(double th, double phd, double thd, double um, double ft,
                            const double* p, double* z) noexcept nogil:
    cdef double acc[2]
    cdef double A[16]
    _accel(th, phd, thd, um, ft, p, acc)
    _contact_system(th, phd, um, ft, acc[0], acc[1], p, A, z)
    return _lu_solve(A, z, 1)


cdef double _contact_jac_direct(double th, double phd, double thd, double um, double ft,
                                const double* p, double* z, double* Zx, double* Zu) noexcept nogil:
    """z (4), Zx row-major 4x4, Zu row-major 4x2; returns the pivot ratio."""
    cdef double J[12]
    cdef double A[16]
    cdef double A2[16]
    cdef double rhs[24]
    cdef double corr[4]
    cdef double mw = p[1], Ib = p[2], Iw = p[3], r = p[4], beta = p[5]
    cdef double bx = p[6], by = p[7], ltz = p[10], k1 = p[12], k2 = p[13]
    cdef double cb = cos(beta), sb = sin(beta)
    cdef double c, s, abx, aby, ratio
    cdef int i, col
    cdef double dq0, dq1, dtau
    _accel_jac(th, phd, thd, um, ft, p, J)
    _contact_system(th, phd, um, ft, J[0], J[1], p, A, rhs)
    # derivative right-hand sides in order: theta, phi_dot, theta_dot, u_m, f_t
    for col in range(5):
        dq0 = J[2 + 2 * col]
        dq1 = J[3 + 2 * col]
        dtau = 0.0
        if col == 1:
            dtau = -k2
        elif col == 3:
            dtau = k1
        rhs[4 * (col + 1) + 0] = mw * r * cb * dq0
        rhs[4 * (col + 1) + 1] = mw * r * sb * dq0
        rhs[4 * (col + 1) + 2] = dtau - Iw * dq0
        rhs[4 * (col + 1) + 3] = Ib * dq1 + dtau
    rhs[4 * 5 + 3] -= ltz - by
    for i in range(16):
        A2[i] = A[i]
    ratio = _lu_solve(A, rhs, 6)
    c = cos(th)
    s = sin(th)
    abx = -s * bx + c * by
    aby = -c * bx - s * by
    corr[0] = 0.0
    corr[1] = 0.0
    corr[2] = 0.0
    corr[3] = aby * rhs[0] - abx * rhs[1]
    _lu_solve(A2, corr, 1)
    for i in range(4):
        z[i] = rhs[i]
        Zx[4 * i + 0] = 0.0
        Zx[4 * i + 1] = rhs[4 + i] - corr[i]
        Zx[4 * i + 2] = rhs[8 + i]
        Zx[4 * i + 3] = rhs[12 + i]
        Zu[2 * i + 0] = rhs[16 + i]
        Zu[2 * i + 1] = rhs[20 + i]
    return ratio


cdef int _contact(double th, double phd, double thd, double um, double ft, const double* p,
                  double dtheta, double band, double cond_max, double* z) noexcept nogil:
    cdef double zp[4]
    cdef double zm[4]
    cdef double ratio, rp, rm
    cdef double z1[4]
    cdef double d = dtheta
    cdef int pass_
    cdef int i
    if fabs(_singular_measure(th, p)) >= band:
        ratio = _contact_direct(th, phd, thd, um, ft, p, z)
        if ratio <= cond_max:
            return C_OK
    for pass_ in range(2):
        rp = _contact_direct(th + d, phd, thd, um, ft, p, zp)
        rm = _contact_direct(th - d, phd, thd, um, ft, p, zm)
        if not (rp <= cond_max and rm <= cond_max):
            for i in range(4):
                z[i] = NAN
            return C_SINGULAR
        if pass_ == 0:
            for i in range(4):
                z1[i] = 0.5 * (zp[i] + zm[i])
        d = 0.5 * dtheta
    for i in range(4):
        z[i] = (4.0 * (0.5 * (zp[i] + zm[i])) - z1[i]) / 3.0
    return C_AVERAGED


cdef int _contact_jac(double th, double phd, double thd, double um, double ft, const double* p,
                      double dtheta, double band, double cond_max,
                      double* z, double* Zx, double* Zu) noexcept nogil:
    cdef double zp[4]
    cdef double zm[4]
    cdef double Zxp[16]
    cdef double Zxm[16]
    cdef double Zup[8]
    cdef double Zum[8]
    cdef double ratio, rp, rm
    cdef double z1[4]
    cdef double Zx1[16]
    cdef double Zu1[8]
    cdef double d = dtheta
    cdef int pass_
    cdef int i
    if fabs(_singular_measure(th, p)) >= band:
        ratio = _contact_jac_direct(th, phd, thd, um, ft, p, z, Zx, Zu)
        if ratio <= cond_max:
            return C_OK
    for pass_ in range(2):
        rp = _contact_jac_direct(th + d, phd, thd, um, ft, p, zp, Zxp, Zup)
        rm = _contact_jac_direct(th - d, phd, thd, um, ft, p, zm, Zxm, Zum)
        if not (rp <= cond_max and rm <= cond_max):
            for i in range(4):
                z[i] = NAN
            for i in range(16):
                Zx[i] = NAN
            for i in range(8):
                Zu[i] = NAN
            return C_SINGULAR
        if pass_ == 0:
            for i in range(4):
                z1[i] = 0.5 * (zp[i] + zm[i])
            for i in range(16):
                Zx1[i] = 0.5 * (Zxp[i] + Zxm[i])
            for i in range(8):
                Zu1[i] = 0.5 * (Zup[i] + Zum[i])
        d = 0.5 * dtheta
    for i in range(4):
        z[i] = (4.0 * (0.5 * (zp[i] + zm[i])) - z1[i]) / 3.0
    for i in range(16):
        Zx[i] = (4.0 * (0.5 * (Zxp[i] + Zxm[i])) - Zx1[i]) / 3.0
    for i in range(8):
        Zu[i] = (4.0 * (0.5 * (Zup[i] + Zum[i])) - Zu1[i]) / 3.0
    return C_AVERAGED


def xdot(x, u, p):
    cdef double pp[NP]
    cdef double acc[2]
    _load(np.ascontiguousarray(p, dtype=float), pp)
    _accel(x[1], x[2], x[3], u[0], u[1], pp, acc)
    return np.array([x[2], x[3], acc[0], acc[1]])


def xdot_jac(x, u, p):
    cdef double pp[NP]
    cdef double J[12]
    _load(np.ascontiguousarray(p, dtype=float), pp)
    _accel_jac(x[1], x[2], x[3], u[0], u[1], pp, J)
    xd = np.array([x[2], x[3], J[0], J[1]])
    Fx = np.zeros((4, 4))
    Fx[0, 2] = 1.0
    Fx[1, 3] = 1.0
    Fx[2, 1], Fx[2, 2], Fx[2, 3] = J[2], J[4], J[6]
    Fx[3, 1], Fx[3, 2], Fx[3, 3] = J[3], J[5], J[7]
    Fu = np.zeros((4, 2))
    Fu[2, 0], Fu[2, 1] = J[8], J[10]
    Fu[3, 0], Fu[3, 1] = J[9], J[11]
    return xd, Fx, Fu


def contact_direct(x, u, p):
    cdef double pp[NP]
    cdef double z[4]
    _load(np.ascontiguousarray(p, dtype=float), pp)
    ratio = _contact_direct(x[1], x[2], x[3], u[0], u[1], pp, z)
    return np.array([z[0], z[1], z[2], z[3]]), ratio


def contact_system(x, u, p):
    cdef double pp[NP]
    cdef double acc[2]
    cdef double A[16]
    cdef double b[4]
    _load(np.ascontiguousarray(p, dtype=float), pp)
    _accel(x[1], x[2], x[3], u[0], u[1], pp, acc)
    _contact_system(x[1], x[2], u[0], u[1], acc[0], acc[1], pp, A, b)
    return np.array([A[i] for i in range(16)]).reshape(4, 4), np.array([b[0], b[1], b[2], b[3]])


def contact(x, u, p, double dtheta, double band, double cond_max):
    cdef double pp[NP]
    cdef double z[4]
    _load(np.ascontiguousarray(p, dtype=float), pp)
    st = _contact(x[1], x[2], x[3], u[0], u[1], pp, dtheta, band, cond_max, z)
    return np.array([z[0], z[1], z[2], z[3]]), st


def contact_jac(x, u, p, double dtheta, double band, double cond_max):
    cdef double pp[NP]
    cdef double z[4]
    cdef double[:, ::1] Zx = np.empty((4, 4))
    cdef double[:, ::1] Zu = np.empty((4, 2))
    _load(np.ascontiguousarray(p, dtype=float), pp)
    st = _contact_jac(x[1], x[2], x[3], u[0], u[1], pp, dtheta, band, cond_max,
                      z, &Zx[0, 0], &Zu[0, 0])
    return np.array([z[0], z[1], z[2], z[3]]), np.asarray(Zx), np.asarray(Zu), st


def evaluate(x0, U, double dt, p, double margin, double dtheta, double band, double cond_max):
    cdef double pp[NP]
    cdef double z[4]
    cdef double acc[2]
    cdef const double[:, ::1] Uv = np.ascontiguousarray(U, dtype=float)
    cdef Py_ssize_t n = Uv.shape[0], k
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xa = np.empty((n + 1, 4))
    cdef cnp.ndarray[double, ndim=1, mode="c"] Ha = np.empty(2 * n)
    cdef double[:, ::1] X = Xa
    cdef double[::1] Hc = Ha
    cdef double mu2
    cdef int st, status = C_OK
    _load(np.ascontiguousarray(p, dtype=float), pp)
    mu2 = pp[14] * pp[14]
    for k in range(4):
        X[0, k] = x0[k]
    with nogil:
        for k in range(n):
            st = _contact(X[k, 1], X[k, 2], X[k, 3], Uv[k, 0], Uv[k, 1], pp,
                          dtheta, band, cond_max, z)
            if st > status:
                status = st
            Hc[2 * k] = -z[3] + margin
            Hc[2 * k + 1] = z[2] * z[2] - mu2 * z[3] * z[3] + margin
            _accel(X[k, 1], X[k, 2], X[k, 3], Uv[k, 0], Uv[k, 1], pp, acc)
            X[k + 1, 0] = X[k, 0] + dt * X[k, 2]
            X[k + 1, 1] = X[k, 1] + dt * X[k, 3]
            X[k + 1, 2] = X[k, 2] + dt * acc[0]
            X[k + 1, 3] = X[k, 3] + dt * acc[1]
    return Xa, Ha, status


def shooting(x0, U, double dt, p, double margin, double dtheta, double band, double cond_max):
    cdef double pp[NP]
    cdef double z[4]
    cdef double Zx[16]
    cdef double Zu[8]
    cdef double J[12]
    cdef double dh1[4]
    cdef double dh2[4]
    cdef double Fx[16]
    cdef double FS[4]
    cdef const double[:, ::1] Uv = np.ascontiguousarray(U, dtype=float)
    cdef Py_ssize_t n = Uv.shape[0], nu = 2 * Uv.shape[0], k, i, j, col
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xa = np.empty((n + 1, 4))
    cdef cnp.ndarray[double, ndim=3, mode="c"] Sa = np.zeros((n + 1, 4, nu))
    cdef cnp.ndarray[double, ndim=1, mode="c"] Ha = np.empty(nu)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ga = np.zeros((nu, nu))
    cdef double[:, ::1] X = Xa
    cdef double[:, :, ::1] S = Sa
    cdef double[::1] Hc = Ha
    cdef double[:, ::1] G = Ga
    cdef double mu2, a1, a2, um, ft
    cdef int st, status = C_OK
    _load(np.ascontiguousarray(p, dtype=float), pp)
    mu2 = pp[14] * pp[14]
    for k in range(4):
        X[0, k] = x0[k]
    with nogil:
        for k in range(n):
            um = Uv[k, 0]
            ft = Uv[k, 1]
            st = _contact_jac(X[k, 1], X[k, 2], X[k, 3], um, ft, pp, dtheta, band, cond_max,
                              z, Zx, Zu)
            if st > status:
                status = st
            Hc[2 * k] = -z[3] + margin
            Hc[2 * k + 1] = z[2] * z[2] - mu2 * z[3] * z[3] + margin
            for j in range(4):
                dh1[j] = -Zx[12 + j]
                dh2[j] = 2.0 * z[2] * Zx[8 + j] - 2.0 * mu2 * z[3] * Zx[12 + j]
            for col in range(nu):
                a1 = 0.0
                a2 = 0.0
                for j in range(4):
                    a1 += dh1[j] * S[k, j, col]
                    a2 += dh2[j] * S[k, j, col]
                G[2 * k, col] = a1
                G[2 * k + 1, col] = a2
            for j in range(2):
                G[2 * k, 2 * k + j] += -Zu[6 + j]
                G[2 * k + 1, 2 * k + j] += 2.0 * z[2] * Zu[4 + j] - 2.0 * mu2 * z[3] * Zu[6 + j]
            _accel_jac(X[k, 1], X[k, 2], X[k, 3], um, ft, pp, J)
            for i in range(16):
                Fx[i] = 0.0
            Fx[2] = 1.0
            Fx[7] = 1.0
            Fx[9] = J[2]
            Fx[10] = J[4]
            Fx[11] = J[6]
            Fx[13] = J[3]
            Fx[14] = J[5]
            Fx[15] = J[7]
            X[k + 1, 0] = X[k, 0] + dt * X[k, 2]
            X[k + 1, 1] = X[k, 1] + dt * X[k, 3]
            X[k + 1, 2] = X[k, 2] + dt * J[0]
            X[k + 1, 3] = X[k, 3] + dt * J[1]
            for col in range(nu):
                for i in range(4):
                    a1 = 0.0
                    for j in range(4):
                        a1 += Fx[4 * i + j] * S[k, j, col]
                    FS[i] = a1
                for i in range(4):
                    S[k + 1, i, col] = S[k, i, col] + dt * FS[i]
            S[k + 1, 2, 2 * k] += dt * J[8]
            S[k + 1, 2, 2 * k + 1] += dt * J[10]
            S[k + 1, 3, 2 * k] += dt * J[9]
            S[k + 1, 3, 2 * k + 1] += dt * J[11]
    return Xa, Sa, Ha, Ga, status


# ---------------------------------------------------------------------------
# compliant-ground truth simulator


cdef void _ground_force(const double* s, const double* p, const double* gr,
                        double* out) noexcept nogil:
    cdef double r = p[4], beta = p[5]
    cdef double k = gr[0], cg = gr[1], mus = gr[2], muc = gr[3], vs = gr[4], vreg = gr[5]
    cdef double cb = cos(beta), sb = sin(beta)
    cdef double pen = r - (-sb * s[0] + cb * s[1])
    cdef double vn = -sb * s[4] + cb * s[5]
    cdef double fn = 0.0, ft = 0.0, vslip, q, mu, sat
    if pen > 0.0:
        fn = k * pen - cg * vn
        if fn < 0.0:
            fn = 0.0
    vslip = cb * s[4] + sb * s[5] - r * s[6]
    if fn > 0.0:
        q = vslip / vs
        mu = muc + (mus - muc) * exp(-q * q)
        sat = vslip / vreg
        if sat > 1.0:
            sat = 1.0
        elif sat < -1.0:
            sat = -1.0
        ft = -fn * mu * sat
    out[0] = ft
    out[1] = fn
    out[2] = vslip
    out[3] = pen


cdef void _free_accel(const double* s, double um, double ft, const double* p,
                      const double* gr, const double* f, double* acc) noexcept nogil:
    cdef double mb = p[0], mw = p[1], Ib = p[2], Iw = p[3], r = p[4], beta = p[5]
    cdef double bx = p[6], by = p[7], ty = p[9], g = p[11], k1 = p[12], k2 = p[13]
    cdef double m = mb + mw
    cdef double th = s[3], thd = s[7]
    cdef double c = cos(th), sn = sin(th), cb = cos(beta), sb = sin(beta)
    cdef double rbx = c * bx + sn * by
    cdef double rby = -sn * bx + c * by
    cdef double abx = -sn * bx + c * by
    cdef double aby = -c * bx - sn * by
    cdef double fgx = f[0], fgn = f[1]
    cdef double tau = k1 * um - k2 * s[6]
    cdef double Fx = ft * c + fgx * cb - fgn * sb + mb * rbx * thd * thd
    cdef double Fy = -ft * sn + fgx * sb + fgn * cb - m * g + mb * rby * thd * thd
    cdef double Qt = ft * ty - tau - mb * g * aby
    cdef double M22 = mb * (bx * bx + by * by) + Ib
    cdef double schur = M22 - mb * mb * (abx * abx + aby * aby) / m
    cdef double thdd = (Qt - mb * (abx * Fx + aby * Fy) / m) / schur
    acc[0] = (Fx - mb * abx * thdd) / m
    acc[1] = (Fy - mb * aby * thdd) / m
    acc[2] = (tau - r * fgx) / Iw
    acc[3] = thdd


def ground_force(s, p, ground):
    cdef double pp[NP]
    cdef double ss[8]
    cdef double gg[6]
    cdef double out[4]
    cdef int i
    _load(np.ascontiguousarray(p, dtype=float), pp)
    for i in range(8):
        ss[i] = s[i]
    for i in range(6):
        gg[i] = ground[i]
    _ground_force(ss, pp, gg, out)
    return out[0], out[1], out[2], out[3]


def free_accel(s, u, p, ground):
    cdef double pp[NP]
    cdef double ss[8]
    cdef double gg[6]
    cdef double f[4]
    cdef double acc[4]
    cdef int i
    _load(np.ascontiguousarray(p, dtype=float), pp)
    for i in range(8):
        ss[i] = s[i]
    for i in range(6):
        gg[i] = ground[i]
    _ground_force(ss, pp, gg, f)
    _free_accel(ss, u[0], u[1], pp, gg, f, acc)
    return acc[0], acc[1], acc[2], acc[3]


def truth_advance(s, u, p, ground, double dt, long nsub, double pen_max):
    cdef double pp[NP]
    cdef double st[8]
    cdef double gg[6]
    cdef double f[4]
    cdef double acc[4]
    cdef double um = u[0], ft = u[1]
    cdef double sum_fx = 0.0, sum_fn = 0.0, slip_max = 0.0, pen_seen = -INFINITY
    cdef long i
    cdef int j, code = S_OK
    cdef long done = nsub
    _load(np.ascontiguousarray(p, dtype=float), pp)
    for j in range(8):
        st[j] = s[j]
    for j in range(6):
        gg[j] = ground[j]
    with nogil:
        for i in range(nsub):
            _ground_force(st, pp, gg, f)
            sum_fx += f[0]
            sum_fn += f[1]
            if fabs(f[2]) > slip_max:
                slip_max = fabs(f[2])
            if f[3] > pen_seen:
                pen_seen = f[3]
            if f[3] > pen_max:
                code = S_PENETRATION
                done = i + 1
                break
            _free_accel(st, um, ft, pp, gg, f, acc)
            for j in range(4):
                st[4 + j] += dt * acc[j]
                st[j] += dt * st[4 + j]
            for j in range(8):
                if not isfinite(st[j]):
                    code = S_NONFINITE
            if code != S_OK:
                done = i + 1
                break
    out = np.array([st[j] for j in range(8)])
    return out, sum_fx / done, sum_fn / done, slip_max, pen_seen, code
