"""Pure-Python numerical kernels.

Reference implementation of the hot loops.  ``_kernels.pyx`` mirrors every
function here with identical signatures and results; ``thrustmip._backend``
picks the compiled module when it is importable.

Parameter vector layout (see ``RobotParams.as_array``)::

    0 m_b  1 m_w  2 I_b  3 I_w  4 r  5 beta  6 l_bx  7 l_by  8 l_tx  9 l_ty
    10 l_tz  11 g  12 k1  13 k2  14 mu_s  15 f_t_max

Ground vector layout: ``k, c, mu_static, mu_coulomb, v_stribeck, v_reg``.

Contact status codes: 0 direct solve, 1 averaged across the singular pitch
(symmetric means at +-dtheta and +-dtheta/2, Richardson-combined),
2 unresolvable singularity.  Truth-simulator status codes: 0 ok,
3 penetration above limit, 4 non-finite state.
"""

import math

import numpy as np

NAME = "python"

CONTACT_OK = 0
CONTACT_AVERAGED = 1
CONTACT_SINGULAR = 2
SIM_OK = 0
SIM_PENETRATION = 3
SIM_NONFINITE = 4


def _accel(th, phd, thd, um, ft, p):
    mb, mw, Ib, Iw, r, beta, bx, by = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    ty, g, k1, k2 = p[9], p[11], p[12], p[13]
    c, s = math.cos(th), math.sin(th)
    cb, sb = math.cos(beta), math.sin(beta)
    m = mb + mw
    rbx = c * bx + s * by
    rby = -s * bx + c * by
    abx = -s * bx + c * by
    aby = -c * bx - s * by
    M11 = m * r * r + Iw
    M12 = mb * r * (cb * abx + sb * aby)
    M22 = mb * (bx * bx + by * by) + Ib
    M12p = -mb * r * (cb * rbx + sb * rby)
    h1 = M12p * thd * thd + m * g * r * sb + k2 * phd
    h2 = mb * g * aby - k2 * phd
    f1 = k1 * um + r * math.cos(th + beta) * ft - h1
    f2 = -k1 * um + ty * ft - h2
    det = M11 * M22 - M12 * M12
    phdd = (M22 * f1 - M12 * f2) / det
    thdd = (M11 * f2 - M12 * f1) / det
    return phdd, thdd


def xdot(x, u, p):
    phdd, thdd = _accel(x[1], x[2], x[3], u[0], u[1], p)
    return np.array([x[2], x[3], phdd, thdd])


def _accel_jac(th, phd, thd, um, ft, p):
    """Accelerations and their partials w.r.t. (theta, phi_dot, theta_dot, u_m, f_t)."""
    mb, mw, Ib, Iw, r, beta, bx, by = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    ty, g, k1, k2 = p[9], p[11], p[12], p[13]
    c, s = math.cos(th), math.sin(th)
    cb, sb = math.cos(beta), math.sin(beta)
    m = mb + mw
    rbx = c * bx + s * by
    rby = -s * bx + c * by
    abx = -s * bx + c * by
    aby = -c * bx - s * by
    M11 = m * r * r + Iw
    M12 = mb * r * (cb * abx + sb * aby)
    M22 = mb * (bx * bx + by * by) + Ib
    M12p = -mb * r * (cb * rbx + sb * rby)
    h1 = M12p * thd * thd + m * g * r * sb + k2 * phd
    h2 = mb * g * aby - k2 * phd
    ced = math.cos(th + beta)
    sed = math.sin(th + beta)
    f1 = k1 * um + r * ced * ft - h1
    f2 = -k1 * um + ty * ft - h2
    det = M11 * M22 - M12 * M12
    phdd = (M22 * f1 - M12 * f2) / det
    thdd = (M11 * f2 - M12 * f1) / det
    # d/dtheta of the right-hand side minus dM/dtheta * qdd
    g1 = -r * sed * ft + M12 * thd * thd - M12p * thdd
    g2 = mb * g * rby - M12p * phdd
    d_th = ((M22 * g1 - M12 * g2) / det, (M11 * g2 - M12 * g1) / det)
    d_phd = ((-M22 * k2 - M12 * k2) / det, (M11 * k2 + M12 * k2) / det)
    g1 = -2.0 * M12p * thd
    d_thd = (M22 * g1 / det, -M12 * g1 / det)
    d_um = ((M22 * k1 + M12 * k1) / det, (-M11 * k1 - M12 * k1) / det)
    g1 = r * ced
    d_ft = ((M22 * g1 - M12 * ty) / det, (M11 * ty - M12 * g1) / det)
    return phdd, thdd, d_th, d_phd, d_thd, d_um, d_ft


def xdot_jac(x, u, p):
    phdd, thdd, d_th, d_phd, d_thd, d_um, d_ft = _accel_jac(x[1], x[2], x[3], u[0], u[1], p)
    xd = np.array([x[2], x[3], phdd, thdd])
    Fx = np.zeros((4, 4))
    Fx[0, 2] = 1.0
    Fx[1, 3] = 1.0
    Fx[2, 1], Fx[2, 2], Fx[2, 3] = d_th[0], d_phd[0], d_thd[0]
    Fx[3, 1], Fx[3, 2], Fx[3, 3] = d_th[1], d_phd[1], d_thd[1]
    Fu = np.zeros((4, 2))
    Fu[2, 0], Fu[2, 1] = d_um[0], d_ft[0]
    Fu[3, 0], Fu[3, 1] = d_um[1], d_ft[1]
    return xd, Fx, Fu


def _lu_solve(A, rhs):
    """Gaussian elimination with partial pivoting on a 4x4 system.

    ``rhs`` is a list of right-hand-side lists, solved in place.  Returns the
    ratio of largest to smallest pivot magnitude (inf when a pivot vanishes).
    """
    a = [row[:] for row in A]
    n = 4
    pmax = 0.0
    pmin = math.inf
    for k in range(n):
        piv = max(range(k, n), key=lambda i: abs(a[i][k]))
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            for b in rhs:
                b[k], b[piv] = b[piv], b[k]
        akk = a[k][k]
        mag = abs(akk)
        pmax = max(pmax, mag)
        pmin = min(pmin, mag)
        if mag == 0.0:
            return math.inf
        for i in range(k + 1, n):
            f = a[i][k] / akk
            if f != 0.0:
                ai, ak = a[i], a[k]
                for j in range(k + 1, n):
                    ai[j] -= f * ak[j]
                for b in rhs:
                    b[i] -= f * b[k]
    for b in rhs:
        for i in range(n - 1, -1, -1):
            acc = b[i]
            ai = a[i]
            for j in range(i + 1, n):
                acc -= ai[j] * b[j]
            b[i] = acc / ai[i]
    return pmax / pmin


def _contact_system(th, phd, um, ft, phdd, thdd, p):
    mb, mw, Ib, Iw, r, beta, bx, by = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    ltz, g, k1, k2 = p[10], p[11], p[12], p[13]
    c, s = math.cos(th), math.sin(th)
    cb, sb = math.cos(beta), math.sin(beta)
    # rho = p_w - p_b = -R(theta) l_b
    rhox = -(c * bx + s * by)
    rhoy = -(-s * bx + c * by)
    tau = k1 * um - k2 * phd
    A = [
        [1.0, 0.0, cb, -sb],
        [0.0, 1.0, sb, cb],
        [0.0, 0.0, r, 0.0],
        [-rhoy, rhox, 0.0, 0.0],
    ]
    b = [
        mw * r * phdd * cb,
        mw * r * phdd * sb + mw * g,
        tau - Iw * phdd,
        Ib * thdd + tau - (ltz - by) * ft,
    ]
    return A, b


def _singular_measure(th, p):
    """Sine of the angle between the axle->CoM direction and the slope normal."""
    c, s = math.cos(th), math.sin(th)
    bx, by, beta = p[6], p[7], p[5]
    rhox = -(c * bx + s * by)
    rhoy = -(-s * bx + c * by)
    nx, ny = -math.sin(beta), math.cos(beta)
    return (rhox * ny - rhoy * nx) / math.hypot(rhox, rhoy)


def contact_direct(x, u, p):
    """Solve A_c z = b_c at x without the singularity workaround.

    Returns ``(z, pivot_ratio)``.
    """
    phdd, thdd = _accel(x[1], x[2], x[3], u[0], u[1], p)
    A, b = _contact_system(x[1], x[2], u[0], u[1], phdd, thdd, p)
    rhs = [b]
    ratio = _lu_solve(A, rhs)
    return np.array(rhs[0]), ratio


def contact_system(x, u, p):
    phdd, thdd = _accel(x[1], x[2], x[3], u[0], u[1], p)
    A, b = _contact_system(x[1], x[2], u[0], u[1], phdd, thdd, p)
    return np.array(A), np.array(b)


def _contact_jac_direct(x, u, p):
    th, phd, thd, um, ft = x[1], x[2], x[3], u[0], u[1]
    phdd, thdd, d_th, d_phd, d_thd, d_um, d_ft = _accel_jac(th, phd, thd, um, ft, p)
    A, b = _contact_system(th, phd, um, ft, phdd, thdd, p)
    mw, Ib, Iw, r, beta, bx, by = p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    ltz, k1, k2 = p[10], p[12], p[13]
    cb, sb = math.cos(beta), math.sin(beta)

    def db(dq, dtau):
        return [
            mw * r * cb * dq[0],
            mw * r * sb * dq[0],
            dtau - Iw * dq[0],
            Ib * dq[1] + dtau,
        ]

    z = b[:]
    r_th = db(d_th, 0.0)
    r_phd = db(d_phd, -k2)
    r_thd = db(d_thd, 0.0)
    r_um = db(d_um, k1)
    r_ft = db(d_ft, 0.0)
    r_ft[3] -= ltz - by
    rhs = [z, r_th, r_phd, r_thd, r_um, r_ft]
    ratio = _lu_solve(A, rhs)
    # dA/dtheta only touches the moment row: (dA z)_3 = a_by z0 - a_bx z1
    c, s = math.cos(th), math.sin(th)
    abx = -s * bx + c * by
    aby = -c * bx - s * by
    corr = [0.0, 0.0, 0.0, aby * z[0] - abx * z[1]]
    _lu_solve(A, [corr])
    Zx = np.zeros((4, 4))
    Zu = np.zeros((4, 2))
    for i in range(4):
        Zx[i, 1] = r_th[i] - corr[i]
        Zx[i, 2] = r_phd[i]
        Zx[i, 3] = r_thd[i]
        Zu[i, 0] = r_um[i]
        Zu[i, 1] = r_ft[i]
    return np.array(z), Zx, Zu, ratio


def contact(x, u, p, dtheta, band, cond_max):
    """Contact forces z = [c_x, c_y, f_gx, f_gn] with the singular-pitch workaround.

    Returns ``(z, status)``.
    """
    th = x[1]
    if abs(_singular_measure(th, p)) >= band:
        z, ratio = contact_direct(x, u, p)
        if ratio <= cond_max:
            return z, CONTACT_OK
    zs = []
    for d in (dtheta, 0.5 * dtheta):
        zp, rp = contact_direct([x[0], th + d, x[2], x[3]], u, p)
        zm, rm = contact_direct([x[0], th - d, x[2], x[3]], u, p)
        if not (rp <= cond_max and rm <= cond_max):
            return np.full(4, math.nan), CONTACT_SINGULAR
        zs.append(0.5 * (zp + zm))
    # the symmetric mean is off by O(dtheta^2); Richardson removes that term
    return (4.0 * zs[1] - zs[0]) / 3.0, CONTACT_AVERAGED


def contact_jac(x, u, p, dtheta, band, cond_max):
    """Contact forces and their Jacobians ``(z, dz/dx, dz/du, status)``."""
    th = x[1]
    if abs(_singular_measure(th, p)) >= band:
        z, Zx, Zu, ratio = _contact_jac_direct(x, u, p)
        if ratio <= cond_max:
            return z, Zx, Zu, CONTACT_OK
    means = []
    for d in (dtheta, 0.5 * dtheta):
        zp, Zxp, Zup, rp = _contact_jac_direct([x[0], th + d, x[2], x[3]], u, p)
        zm, Zxm, Zum, rm = _contact_jac_direct([x[0], th - d, x[2], x[3]], u, p)
        if not (rp <= cond_max and rm <= cond_max):
            nan = math.nan
            return np.full(4, nan), np.full((4, 4), nan), np.full((4, 2), nan), CONTACT_SINGULAR
        means.append((0.5 * (zp + zm), 0.5 * (Zxp + Zxm), 0.5 * (Zup + Zum)))
    (z1, Zx1, Zu1), (z2, Zx2, Zu2) = means
    return ((4.0 * z2 - z1) / 3.0, (4.0 * Zx2 - Zx1) / 3.0, (4.0 * Zu2 - Zu1) / 3.0,
            CONTACT_AVERAGED)


def evaluate(x0, U, dt, p, margin, dtheta, band, cond_max):
    """Explicit-Euler rollout and stacked no-slip constraints.

    Returns ``(X, Hc, status)`` with X of shape (n+1, 4) and Hc of length 2n
    ordered ``[h1_0, h2_0, h1_1, ...]``; status is the worst contact status.
    """
    n = U.shape[0]
    mu2 = p[14] * p[14]
    X = np.empty((n + 1, 4))
    Hc = np.empty(2 * n)
    X[0] = x0
    status = CONTACT_OK
    for k in range(n):
        xk = X[k]
        uk = U[k]
        z, st = contact(xk, uk, p, dtheta, band, cond_max)
        status = max(status, st)
        Hc[2 * k] = -z[3] + margin
        Hc[2 * k + 1] = z[2] * z[2] - mu2 * z[3] * z[3] + margin
        phdd, thdd = _accel(xk[1], xk[2], xk[3], uk[0], uk[1], p)
        X[k + 1, 0] = xk[0] + dt * xk[2]
        X[k + 1, 1] = xk[1] + dt * xk[3]
        X[k + 1, 2] = xk[2] + dt * phdd
        X[k + 1, 3] = xk[3] + dt * thdd
    return X, Hc, status


def shooting(x0, U, dt, p, margin, dtheta, band, cond_max):
    """Rollout, constraints and their sensitivities w.r.t. the flattened inputs.

    Returns ``(X, S, Hc, G, status)`` where ``S[k] = dX[k]/dU`` has shape
    (n+1, 4, 2n) and ``G = dHc/dU`` has shape (2n, 2n).
    """
    n = U.shape[0]
    nu = 2 * n
    mu2 = p[14] * p[14]
    X = np.empty((n + 1, 4))
    S = np.zeros((n + 1, 4, nu))
    Hc = np.empty(nu)
    G = np.zeros((nu, nu))
    X[0] = x0
    status = CONTACT_OK
    for k in range(n):
        xk = X[k]
        uk = U[k]
        z, Zx, Zu, st = contact_jac(xk, uk, p, dtheta, band, cond_max)
        status = max(status, st)
        Hc[2 * k] = -z[3] + margin
        Hc[2 * k + 1] = z[2] * z[2] - mu2 * z[3] * z[3] + margin
        dh1x = -Zx[3]
        dh2x = 2.0 * z[2] * Zx[2] - 2.0 * mu2 * z[3] * Zx[3]
        G[2 * k] = dh1x @ S[k]
        G[2 * k + 1] = dh2x @ S[k]
        G[2 * k, 2 * k:2 * k + 2] += -Zu[3]
        G[2 * k + 1, 2 * k:2 * k + 2] += 2.0 * z[2] * Zu[2] - 2.0 * mu2 * z[3] * Zu[3]
        xd, Fx, Fu = xdot_jac(xk, uk, p)
        X[k + 1] = xk + dt * xd
        S[k + 1] = S[k] + dt * (Fx @ S[k])
        S[k + 1, :, 2 * k:2 * k + 2] += dt * Fu
    return X, S, Hc, G, status


# ---------------------------------------------------------------------------
# compliant-ground truth simulator


def ground_force(s, p, ground):
    """Compliant normal force and Stribeck friction at the wheel contact.

    Returns ``(f_gx, f_gn, v_slip, penetration)``.
    """
    r, beta = p[4], p[5]
    k, cg, mus, muc, vs, vreg = ground[0], ground[1], ground[2], ground[3], ground[4], ground[5]
    cb, sb = math.cos(beta), math.sin(beta)
    pen = r - (-sb * s[0] + cb * s[1])
    vn = -sb * s[4] + cb * s[5]
    fn = 0.0
    if pen > 0.0:
        fn = k * pen - cg * vn
        if fn < 0.0:
            fn = 0.0
    vslip = cb * s[4] + sb * s[5] - r * s[6]
    ft = 0.0
    if fn > 0.0:
        q = vslip / vs
        mu = muc + (mus - muc) * math.exp(-q * q)
        sat = vslip / vreg
        if sat > 1.0:
            sat = 1.0
        elif sat < -1.0:
            sat = -1.0
        ft = -fn * mu * sat
    return ft, fn, vslip, pen


def free_accel(s, u, p, ground):
    """Accelerations ``[x_dd, y_dd, phi_dd, theta_dd]`` of the free planar model."""
    mb, mw, Ib, Iw, r, beta, bx, by = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    ty, g, k1, k2 = p[9], p[11], p[12], p[13]
    m = mb + mw
    th, thd = s[3], s[7]
    c, sn = math.cos(th), math.sin(th)
    cb, sb = math.cos(beta), math.sin(beta)
    rbx = c * bx + sn * by
    rby = -sn * bx + c * by
    abx = -sn * bx + c * by
    aby = -c * bx - sn * by
    fgx, fgn, _, _ = ground_force(s, p, ground)
    um, ft = u[0], u[1]
    tau = k1 * um - k2 * s[6]
    Fx = ft * c + fgx * cb - fgn * sb + mb * rbx * thd * thd
    Fy = -ft * sn + fgx * sb + fgn * cb - m * g + mb * rby * thd * thd
    Qt = ft * ty - tau - mb * g * aby
    M22 = mb * (bx * bx + by * by) + Ib
    schur = M22 - mb * mb * (abx * abx + aby * aby) / m
    thdd = (Qt - mb * (abx * Fx + aby * Fy) / m) / schur
    xdd = (Fx - mb * abx * thdd) / m
    ydd = (Fy - mb * aby * thdd) / m
    phdd = (tau - r * fgx) / Iw
    return xdd, ydd, phdd, thdd


def truth_advance(s, u, p, ground, dt, nsub, pen_max):
    """Advance the free model ``nsub`` semi-implicit Euler steps under held input.

    Returns ``(s_new, fgx_mean, fgn_mean, slip_abs_max, pen_max_seen, status)``;
    force means are over the substeps.
    """
    st = [float(v) for v in s]
    sum_fx = 0.0
    sum_fn = 0.0
    slip_max = 0.0
    pen_seen = -math.inf
    for i in range(nsub):
        fgx, fgn, vslip, pen = ground_force(st, p, ground)
        sum_fx += fgx
        sum_fn += fgn
        if abs(vslip) > slip_max:
            slip_max = abs(vslip)
        if pen > pen_seen:
            pen_seen = pen
        if pen > pen_max:
            return np.array(st), sum_fx / (i + 1), sum_fn / (i + 1), slip_max, pen_seen, SIM_PENETRATION
        acc = free_accel(st, u, p, ground)
        for j in range(4):
            st[4 + j] += dt * acc[j]
            st[j] += dt * st[4 + j]
        if not all(math.isfinite(v) for v in st):
            return np.array(st), sum_fx / (i + 1), sum_fn / (i + 1), slip_max, pen_seen, SIM_NONFINITE
    return np.array(st), sum_fx / nsub, sum_fn / nsub, slip_max, pen_seen, SIM_OK
