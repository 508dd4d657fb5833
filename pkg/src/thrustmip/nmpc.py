"""Single-shooting nonlinear MPC over the explicit-Euler reduced model.

Decision variables are the inputs ``u_0 .. u_{n_h-1}`` flattened as
``[u_m0, f_t0, u_m1, f_t1, ...]``.  Each SQP iteration builds a Gauss-Newton
QP from analytic sensitivities of the rollout and of the no-slip constraints,
solves it with the dual active-set method and globalizes with a backtracking
line search on the l1 exact-penalty merit function.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from thrustmip._backend import kernels as _default_kernels
from thrustmip.contact import COND_MAX, SINGULAR_BAND, SINGULAR_DTHETA, ContactSingularityError
from thrustmip.dynamics import ModelError
from thrustmip.params import RobotParams
from thrustmip.qp import QPInfeasible, solve_qp

CONVERGED = "converged"
MAX_ITERS = "max-iters"
INFEASIBLE_RELAXED = "infeasible-relaxed"


@dataclass(frozen=True)
class MpcConfig:
    n_h: int = 10
    dt: float = 0.005
    Q: tuple = (10.0, 10000.0, 5.0, 25.0)
    R: tuple = (5.0, 0.5)
    u_min: tuple = (-1.0, 0.0)
    u_max: tuple = (1.0, 43.2)
    cone_margin: float = 0.0
    sqp_max_iters: int = 20
    sqp_tol: float = 1e-6
    reg_hessian: float = 1e-8
    use_constraints: bool = True
    elastic_penalty: float = 1e4
    terminal: str = "lqr"

    def __post_init__(self):
        object.__setattr__(self, "Q", tuple(float(v) for v in self.Q))
        object.__setattr__(self, "R", tuple(float(v) for v in self.R))
        object.__setattr__(self, "u_min", tuple(float(v) for v in self.u_min))
        object.__setattr__(self, "u_max", tuple(float(v) for v in self.u_max))
        if int(self.n_h) != self.n_h or self.n_h < 1:
            raise ValueError("n_h must be a positive integer")
        if not self.dt > 0.0:
            raise ValueError("dt must be > 0")
        if len(self.Q) != 4 or len(self.R) != 2:
            raise ValueError("Q needs 4 and R needs 2 diagonal entries")
        if min(self.Q) < 0.0 or min(self.R) < 0.0:
            raise ValueError("weights must be >= 0")
        if len(self.u_min) != 2 or len(self.u_max) != 2:
            raise ValueError("input bounds must be 2-vectors")
        if any(lo > hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ValueError("u_min must not exceed u_max")
        if self.terminal not in ("lqr", "none"):
            raise ValueError("terminal must be 'lqr' or 'none'")

    @classmethod
    def for_params(cls, params: RobotParams, **kw) -> "MpcConfig":
        kw.setdefault("u_max", (1.0, params.f_t_max))
        return cls(**kw)


@dataclass
class MpcSolution:
    u_seq: np.ndarray
    x_pred: np.ndarray
    cost: float
    max_constraint_violation: float
    status: str
    iters: int
    constraints: np.ndarray = field(repr=False)
    merit_steps: list = field(default_factory=list, repr=False)
    wall_time: float = 0.0
    objective: float = 0.0


def reference_window(ref, n_h: int) -> np.ndarray:
    """First ``n_h + 1`` reference rows; the last row is held if ``ref`` is short."""
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    if ref.shape[1] != 4:
        raise ValueError("reference rows must have 4 components")
    if not np.all(np.isfinite(ref)):
        raise ValueError("reference must be finite")
    if ref.shape[0] >= n_h + 1:
        return ref[: n_h + 1]
    pad = np.repeat(ref[-1:], n_h + 1 - ref.shape[0], axis=0)
    return np.vstack([ref, pad])


def rollout(x0, u_seq, params: RobotParams, dt: float, kernels=_default_kernels) -> np.ndarray:
    """Explicit-Euler prediction ``x_{k+1} = x_k + dt * xdot(x_k, u_k)``."""
    U = np.atleast_2d(np.asarray(u_seq, dtype=float))
    X, _, _ = kernels.evaluate(
        np.asarray(x0, dtype=float), U, dt, params.as_array(), 0.0,
        SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX,
    )
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite state in rollout")
    return X


def cost(x_pred, u_seq, ref, config: MpcConfig) -> float:
    """Tracking cost summed over k = 1..n_h, pairing e_k with u_{k-1}."""
    X = np.asarray(x_pred, dtype=float)
    U = np.atleast_2d(np.asarray(u_seq, dtype=float))
    n = U.shape[0]
    if X.shape[0] != n + 1:
        raise ValueError("x_pred must have one more row than u_seq")
    E = reference_window(ref, n)[1:] - X[1:]
    return float(np.sum(E * E * np.asarray(config.Q)) + np.sum(U * U * np.asarray(config.R)))


def constraint_stack(x0, u_seq, params: RobotParams, config: MpcConfig, kernels=_default_kernels):
    """No-slip constraint values plus margin along the rollout, ``2 n_h`` entries."""
    U = np.atleast_2d(np.asarray(u_seq, dtype=float))
    _, Hc, status = kernels.evaluate(
        np.asarray(x0, dtype=float), U, config.dt, params.as_array(), config.cone_margin,
        SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX,
    )
    if status == kernels.CONTACT_SINGULAR:
        raise ContactSingularityError("singular contact system along the rollout")
    return Hc


def shift_warm_start(prev) -> np.ndarray:
    """Drop the first input and repeat the last one."""
    U = prev.u_seq if isinstance(prev, MpcSolution) else prev
    U = np.atleast_2d(np.asarray(U, dtype=float))
    return np.vstack([U[1:], U[-1:]])


class _Problem:
    """Per-solve scratch: rollout, residuals and their derivatives."""

    def __init__(self, x0, xr, params, config, kernels, terminal_factor=None):
        self.x0 = np.asarray(x0, dtype=float)
        self.xr = xr
        self.p = params.as_array()
        self.config = config
        self.kernels = kernels
        self.n = config.n_h
        self.sq = np.sqrt(np.asarray(config.Q))
        self.sr = np.sqrt(np.asarray(config.R))
        self.C = terminal_factor
        self.args = (config.dt, self.p, config.cone_margin, SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX)

    def _check(self, X, status):
        if status == self.kernels.CONTACT_SINGULAR:
            raise ContactSingularityError("singular contact system along the rollout")
        if not np.all(np.isfinite(X)):
            raise ModelError("non-finite state in rollout")

    def _terminal(self, X):
        if self.C is None:
            return 0.0
        t = self.C @ (self.xr[-1] - X[-1])
        return float(t @ t)

    def values(self, U):
        """``(X, stage cost, objective, constraints)``."""
        X, Hc, status = self.kernels.evaluate(self.x0, U, *self.args)
        self._check(X, status)
        E = self.xr[1:] - X[1:]
        J = float(np.sum(E * E * self.sq**2) + np.sum(U * U * self.sr**2))
        return X, J, J + self._terminal(X), Hc

    def derivatives(self, U):
        X, S, Hc, G, status = self.kernels.shooting(self.x0, U, *self.args)
        self._check(X, status)
        n = self.n
        res = [(self.sq * (self.xr[1:] - X[1:])).ravel(), (self.sr * U).ravel()]
        jac = [-(self.sq[None, :, None] * S[1:]).reshape(4 * n, 2 * n), np.diag(np.tile(self.sr, n))]
        if self.C is not None:
            res.append(self.C @ (self.xr[-1] - X[-1]))
            jac.append(-self.C @ S[-1])
        return X, np.concatenate(res), np.vstack(jac), Hc, G


def lqr_terminal_weight(params: RobotParams, config: MpcConfig, x_ref, u_ref) -> np.ndarray:
    """Infinite-horizon cost-to-go of the Euler model linearized at ``(x_ref, u_ref)``.

    Inputs whose reference value sits on a bound are left out of the Riccati
    design, since they cannot act in both directions.
    """
    _, Fx, Fu = _default_kernels.xdot_jac(
        np.asarray(x_ref, dtype=float), np.asarray(u_ref, dtype=float), params.as_array()
    )
    A = np.eye(4) + config.dt * Fx
    u_ref = np.asarray(u_ref, dtype=float)
    span = np.asarray(config.u_max) - np.asarray(config.u_min)
    free = [
        i for i in range(2)
        if span[i] > 0.0
        and config.u_min[i] + 1e-3 * span[i] < u_ref[i] < config.u_max[i] - 1e-3 * span[i]
    ]
    if 0 not in free:
        free.insert(0, 0)
    B = config.dt * Fu[:, free]
    Rm = np.diag(np.asarray(config.R)[free])
    Qm = np.diag(config.Q)
    return scipy.linalg.solve_discrete_are(A, B, Qm, Rm)


def _violation(Hc) -> float:
    return float(np.max(Hc, initial=0.0)) if Hc.size else 0.0


def solve_mpc(
    x0,
    ref,
    warm_start,
    params: RobotParams,
    config: MpcConfig,
    kernels=_default_kernels,
    terminal_weight=None,
) -> MpcSolution:
    """Solve the receding-horizon problem from ``x0`` by SQP.

    With ``config.terminal == "lqr"`` the objective adds
    ``e_N' P e_N``; ``P`` is computed at the final reference row unless
    ``terminal_weight`` supplies it.  ``MpcSolution.cost`` is always the stage
    sum alone.
    """
    t_start = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (4,) or not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be a finite 4-vector")
    n = config.n_h
    nu = 2 * n
    xr = reference_window(ref, n)
    lb = np.tile(config.u_min, n)
    ub = np.tile(config.u_max, n)
    if warm_start is None:
        U = np.zeros(nu)
    else:
        U = np.atleast_2d(np.asarray(warm_start, dtype=float)).reshape(-1)
        if U.size != nu:
            raise ValueError(f"warm start must hold {n} inputs")
    U = np.clip(U, lb, ub)
    factor = None
    if config.terminal == "lqr":
        P = terminal_weight
        if P is None:
            P = lqr_terminal_weight(params, config, xr[-1], U[-2:])
        factor = np.linalg.cholesky(0.5 * (P + P.T)).T
    prob = _Problem(x0, xr, params, config, kernels, factor)
    use_c = config.use_constraints
    eye = np.eye(nu)
    nu_pen = 0.0
    relaxed = False
    status = MAX_ITERS
    merit_steps = []
    iters = 0
    for iters in range(1, config.sqp_max_iters + 1):
        X, res, Jr, Hc, G = prob.derivatives(U.reshape(n, 2))
        J = float(res @ res)
        grad = 2.0 * Jr.T @ res
        H = 2.0 * Jr.T @ Jr + config.reg_hessian * eye
        A_box = np.vstack([eye, -eye])
        b_box = np.concatenate([lb - U, U - ub])
        viol = _violation(Hc) if use_c else 0.0
        lam_c = np.zeros(0)
        relaxed = False
        if use_c:
            try:
                qp = solve_qp(H, grad, np.vstack([-G, A_box]), np.concatenate([Hc, b_box]))
                step = qp.x
                lam_c = qp.multipliers[:nu]
            except QPInfeasible:
                step, lam_c = _elastic_step(H, grad, G, Hc, A_box, b_box, config.elastic_penalty)
                relaxed = True
        else:
            step = solve_qp(H, grad, A_box, b_box).x
        step_norm = float(np.max(np.abs(step)))
        if step_norm < config.sqp_tol and viol <= 10 * config.sqp_tol:
            status = CONVERGED
            break
        if lam_c.size:
            nu_pen = max(nu_pen, 1.1 * float(np.max(np.abs(lam_c))) + 1e-6)
        merit0 = J + nu_pen * float(np.sum(np.maximum(Hc, 0.0)))
        slope = float(grad @ step) - nu_pen * float(np.sum(np.maximum(Hc, 0.0)))
        alpha = 1.0
        accepted = False
        while alpha > 1e-10:
            U_try = np.clip(U + alpha * step, lb, ub)
            _, _, J_try, Hc_try = prob.values(U_try.reshape(n, 2))
            viol_try = float(np.sum(np.maximum(Hc_try, 0.0))) if use_c else 0.0
            merit_try = J_try + nu_pen * viol_try
            if merit_try <= merit0 + 1e-4 * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = CONVERGED if step_norm < 1e3 * config.sqp_tol else MAX_ITERS
            break
        merit_steps.append((merit0, merit_try))
        U = U_try
        if alpha * step_norm < config.sqp_tol:
            status = CONVERGED
            break
    U2 = U.reshape(n, 2)
    X, J, objective, Hc = prob.values(U2)
    viol = _violation(Hc) if use_c else 0.0
    if use_c and viol > 10 * config.sqp_tol and (relaxed or status == CONVERGED):
        status = INFEASIBLE_RELAXED
    return MpcSolution(
        u_seq=U2.copy(),
        x_pred=X,
        cost=J,
        max_constraint_violation=viol,
        status=status,
        iters=iters,
        constraints=Hc,
        merit_steps=merit_steps,
        wall_time=time.perf_counter() - t_start,
        objective=objective,
    )


def _elastic_step(H, grad, G, Hc, A_box, b_box, penalty):
    """QP with nonnegative slacks on the linearized constraints, l1-penalized."""
    nu = H.shape[0]
    nc = Hc.size
    H_aug = np.zeros((nu + nc, nu + nc))
    H_aug[:nu, :nu] = H
    H_aug[nu:, nu:] = 1e-6 * np.eye(nc)
    g_aug = np.concatenate([grad, penalty * np.ones(nc)])
    A = np.vstack(
        [
            np.hstack([-G, np.eye(nc)]),
            np.hstack([np.zeros((nc, nu)), np.eye(nc)]),
            np.hstack([A_box, np.zeros((A_box.shape[0], nc))]),
        ]
    )
    b = np.concatenate([Hc, np.zeros(nc), b_box])
    qp = solve_qp(H_aug, g_aug, A, b)
    return qp.x[:nu], qp.multipliers[:nc]


class MpcController:
    """Receding-horizon wrapper holding the warm start between calls."""

    def __init__(self, params: RobotParams, config: MpcConfig, kernels=_default_kernels):
        self.params = params
        self.config = config
        self.kernels = kernels
        self.warm = None
        self.last: MpcSolution | None = None
        self._terminal_cache: dict = {}

    def seed(self, u) -> None:
        """Initialize the warm start with a constant input (bumpless switch)."""
        u = np.clip(np.asarray(u, dtype=float), self.config.u_min, self.config.u_max)
        self.warm = np.tile(u, (self.config.n_h, 1))

    def terminal_weight(self, ref_row, u_ref):
        """Riccati weight at the reference pose, cached per pitch and thrust."""
        key = (round(float(ref_row[1]), 6), round(float(u_ref[1]), 3))
        P = self._terminal_cache.get(key)
        if P is None:
            x_lin = np.array([0.0, ref_row[1], 0.0, 0.0])
            P = lqr_terminal_weight(self.params, self.config, x_lin, u_ref)
            self._terminal_cache[key] = P
        return P

    def solve(self, x, ref, u_ref=None) -> MpcSolution:
        """Solve from ``x``; ``u_ref`` is the input used to linearize the terminal weight."""
        P = None
        if self.config.terminal == "lqr":
            if u_ref is None:
                u_ref = self.warm[-1] if self.warm is not None else np.zeros(2)
            P = self.terminal_weight(reference_window(ref, self.config.n_h)[-1], u_ref)
        sol = solve_mpc(x, ref, self.warm, self.params, self.config, self.kernels, P)
        self.last = sol
        self.warm = shift_warm_start(sol)
        return sol
