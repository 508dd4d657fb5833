"""Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.

Solves::

    min 1/2 x'Hx + g'x   s.t.   A x >= b

The dual method starts from the unconstrained minimizer and adds violated
constraints one at a time, so it needs no feasible starting point and
detects infeasibility directly.  The factorization of the active normals is
recomputed by QR after every change of the working set; problems here have
at most a few dozen variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QPInfeasible(ArithmeticError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray
    active: list
    iterations: int


def solve_qp(H, g, A, b, tol=1e-10, max_iter=500) -> QPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    n = H.shape[0]
    m = b.shape[0]
    L = np.linalg.cholesky(H)
    Linv = np.linalg.solve(L, np.eye(n))
    J0 = Linv.T
    x = -(J0 @ (J0.T @ g))
    lam = np.zeros(m)
    active: list[int] = []
    u = np.zeros(0)
    J = J0
    R = np.zeros((0, 0))
    scale = np.maximum(1.0, np.linalg.norm(A, axis=1))

    def refactor(idx):
        if not idx:
            return J0, np.zeros((0, 0))
        Q, RR = np.linalg.qr(Linv @ A[idx].T, mode="complete")
        return J0 @ Q, RR[: len(idx)]

    it = 0
    while True:
        slack = (A @ x - b) / scale
        if active:
            slack[active] = np.inf
        p = int(np.argmin(slack)) if m else -1
        if m == 0 or slack[p] >= -tol:
            lam[:] = 0.0
            lam[active] = u
            return QPResult(x, lam, sorted(active), it)
        n_p = A[p]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise QPInfeasible("active-set iteration limit reached")
            q = len(active)
            d = J.T @ n_p
            z = J[:, q:] @ d[q:]
            r = np.linalg.solve(R, d[:q]) if q else np.zeros(0)
            # partial (dual) step limit from multipliers hitting zero
            t1 = np.inf
            drop = -1
            for j in range(q):
                if r[j] > 0.0:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1, drop = ratio, j
            zn = z @ n_p
            viol = n_p @ x - b[p]
            t2 = -viol / zn if abs(zn) > 1e-14 * max(1.0, n_p @ n_p) else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise QPInfeasible(f"constraint {p} cannot be satisfied")
            if np.isfinite(t2):
                x = x + t * z
            u = u - t * r
            u_p += t
            if t == t2:
                active.append(p)
                u = np.append(u, u_p)
                J, R = refactor(active)
                break
            del active[drop]
            u = np.delete(u, drop)
            J, R = refactor(active)
