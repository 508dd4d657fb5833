"""Reduced rolling model against an independent symbolic Euler-Lagrange derivation."""

import math

import numpy as np
import pytest
import sympy as sp

from conftest import random_input, random_state
from thrustmip.dynamics import (
    ModelError,
    accelerations,
    drift_and_input_matrix,
    dynamics_terms,
    equilibrium_input,
    input_mappings,
    motor_torque,
    state_derivative,
    total_energy,
    upright_pitch,
    wheel_kinematics,
)
from thrustmip.params import RobotParams


def _symbolic_model():
    """Equations of motion derived from positions and energies alone.

    Returns a function of (params, x, qdd, u) giving the Euler-Lagrange
    residual d/dt dL/dqdot - dL/dq - Q.
    """
    t = sp.symbols("t")
    mb, mw, Ib, Iw, r, beta, bx, by, ty, g, k1, k2 = sp.symbols(
        "mb mw Ib Iw r beta bx by ty g k1 k2"
    )
    um, ft = sp.symbols("um ft")
    phi = sp.Function("phi")(t)
    th = sp.Function("theta")(t)
    # wheel rolls without slip along the slope, clockwise-positive angles
    e = sp.Matrix([sp.cos(beta), sp.sin(beta)])
    p_w = r * phi * e
    R = sp.Matrix([[sp.cos(th), sp.sin(th)], [-sp.sin(th), sp.cos(th)]])
    p_b = p_w + R * sp.Matrix([bx, by])
    p_t = p_w + R * sp.Matrix([0, ty])
    v_w = p_w.diff(t)
    v_b = p_b.diff(t)
    T = (mw * v_w.dot(v_w) + mb * v_b.dot(v_b) + Iw * phi.diff(t) ** 2 + Ib * th.diff(t) ** 2) / 2
    V = g * (mw * p_w[1] + mb * p_b[1])
    L = T - V
    tau = k1 * um - k2 * phi.diff(t)
    d = sp.Matrix([sp.cos(th), -sp.sin(th)])
    Q = [
        tau + p_t.diff(phi).dot(d) * ft,
        -tau + p_t.diff(th).dot(d) * ft,
    ]
    qs = [phi, th]
    res = [sp.diff(L.diff(q.diff(t)), t) - L.diff(q) - Qi for q, Qi in zip(qs, Q)]
    a, b, ad, bd, add, bdd = sp.symbols("a b ad bd add bdd")
    subs = {
        phi.diff(t, 2): add, th.diff(t, 2): bdd,
        phi.diff(t): ad, th.diff(t): bd,
        phi: a, th: b,
    }
    res = [expr.subs(subs) for expr in res]
    args = (mb, mw, Ib, Iw, r, beta, bx, by, ty, g, k1, k2, a, b, ad, bd, add, bdd, um, ft)
    fn = sp.lambdify(args, res, "math")

    def residual(p, x, qdd, u):
        return np.array(fn(p.m_b, p.m_w, p.I_b, p.I_w, p.r, p.beta, p.l_b[0], p.l_b[1],
                           p.l_t[1], p.g, p.k1, p.k2, *x, *qdd, *u))

    return residual


@pytest.fixture(scope="module")
def el_residual():
    return _symbolic_model()


def random_params(rng):
    ty = rng.uniform(0.3, 0.8)
    return RobotParams(
        m_b=rng.uniform(2, 8), m_w=rng.uniform(0.5, 3), I_b=rng.uniform(0.1, 1),
        I_w=rng.uniform(0.005, 0.05), r=rng.uniform(0.05, 0.2),
        beta=rng.uniform(-0.8, 0.8), l_b=(rng.uniform(-0.05, 0.05), rng.uniform(0.2, 0.5)),
        l_t=(0.0, ty), l_tz=ty, k1=rng.uniform(1, 5), k2=rng.uniform(0, 0.2),
    )


def test_mass_matrix_symmetric_positive_definite(rng):
    for _ in range(1000):
        p = random_params(rng)
        M = dynamics_terms(random_state(rng), p).M
        assert np.array_equal(M, M.T)
        assert np.all(np.linalg.eigvalsh(M) > 0.0)


def test_euler_lagrange_residual(rng, el_residual):
    worst = 0.0
    for _ in range(200):
        p = random_params(rng)
        x = random_state(rng)
        u = random_input(rng, p)
        qdd = state_derivative(x, u, p)[2:]
        res = el_residual(p, x, qdd, u)
        worst = max(worst, float(np.max(np.abs(res))))
    assert worst < 1e-10


def test_terms_match_symbolic_model(rng, el_residual, params):
    # M qdd + h - B u reproduces the symbolic residual for arbitrary qdd
    for _ in range(50):
        x = random_state(rng)
        u = random_input(rng, params)
        qdd = rng.normal(size=2) * 10
        terms = dynamics_terms(x, params)
        mine = terms.M @ qdd + terms.h - terms.B_q @ u
        np.testing.assert_allclose(mine, el_residual(params, x, qdd, u), atol=1e-10)


def test_thrust_map_matches_finite_difference_jacobian(rng, params):
    h = 1e-6
    for _ in range(200):
        x = random_state(rng)
        _, B_t = input_mappings(x, params)
        d = np.array([math.cos(x[1]), -math.sin(x[1])])
        J = np.zeros((2, 2))
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            J[:, j] = (wheel_kinematics(xp, params)[2] - wheel_kinematics(xm, params)[2]) / (2 * h)
        fd = J.T @ d
        assert np.max(np.abs(fd - B_t)) / np.max(np.abs(B_t)) < 1e-5


def _rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@pytest.mark.parametrize("beta", [0.0, math.radians(15), math.radians(45)])
def test_energy_conserved_without_damping_or_input(params, kernels, beta):
    p = params.replace(k2=0.0, beta=beta)
    pv = p.as_array()
    u = np.zeros(2)
    x = np.array([0.0, 0.3, 1.0, -0.5])
    E0 = sum(total_energy(x, p))
    scale = sum(abs(v) for v in total_energy(x, p)) + p.total_mass * p.g * p.l_b[1]
    h = 1e-4
    worst = 0.0
    for _ in range(int(round(1.0 / h))):
        x = _rk4(lambda s: np.asarray(kernels.xdot(s, u, pv)), x, h)
        worst = max(worst, abs(sum(total_energy(x, p)) - E0))
    assert worst / scale < 1e-6


def test_damping_dissipates(params):
    x = np.array([0.0, 0.0, 5.0, 0.0])
    f = lambda s: state_derivative(s, (0.0, 0.0), params)
    E = [sum(total_energy(x, params))]
    for _ in range(200):
        x = _rk4(f, x, 1e-3)
        E.append(sum(total_energy(x, params)))
    assert E[-1] < E[0]


def test_kernel_matches_reference_solve(rng, params, kernels):
    for _ in range(200):
        x = random_state(rng)
        u = random_input(rng, params)
        np.testing.assert_allclose(
            kernels.xdot(x, u, params.as_array())[2:], accelerations(x, u, params), rtol=1e-11,
            atol=1e-11,
        )


def test_kernel_jacobian_matches_finite_differences(rng, params, kernels):
    h = 1e-6
    pv = params.as_array()
    for _ in range(50):
        x = random_state(rng)
        u = random_input(rng, params)
        _, Fx, Fu = kernels.xdot_jac(x, u, pv)
        for j in range(4):
            dx = np.zeros(4)
            dx[j] = h
            fd = (kernels.xdot(x + dx, u, pv) - kernels.xdot(x - dx, u, pv)) / (2 * h)
            np.testing.assert_allclose(Fx[:, j], fd, rtol=1e-6, atol=1e-6)
        for j in range(2):
            du = np.zeros(2)
            du[j] = h
            fd = (kernels.xdot(x, u + du, pv) - kernels.xdot(x, u - du, pv)) / (2 * h)
            np.testing.assert_allclose(Fu[:, j], fd, rtol=1e-6, atol=1e-6)


def test_control_affine_split(rng, params):
    for _ in range(20):
        x = random_state(rng)
        u = random_input(rng, params)
        f, g = drift_and_input_matrix(x, params)
        np.testing.assert_allclose(f + g @ u, state_derivative(x, u, params), rtol=1e-10, atol=1e-10)


def test_resting_equilibrium_on_incline(params):
    # at the balanced pitch with the holding duty the robot stays at rest
    from thrustmip.control import equilibrium_pitch

    p = params.replace(beta=math.radians(15))
    th = equilibrium_pitch(p)
    u = equilibrium_input(th, 0.0, p)
    xd = state_derivative([0.0, th, 0.0, 0.0], u, p)
    assert np.max(np.abs(xd)) < 1e-10
    assert th == pytest.approx(0.12356, abs=1e-5)
    assert u.u_m == pytest.approx(0.635, abs=1e-3)


def test_upright_pitch_flat(params):
    assert upright_pitch(params) == 0.0
    assert upright_pitch(params.replace(l_b=(0.02, 0.35))) == pytest.approx(-math.atan2(0.02, 0.35))


def test_invalid_inputs(params):
    with pytest.raises(ValueError):
        state_derivative([0.0, 0.0, 0.0], (0.0, 0.0), params)
    with pytest.raises(ValueError):
        state_derivative([0.0, float("nan"), 0.0, 0.0], (0.0, 0.0), params)
    with pytest.raises(ValueError):
        motor_torque(1.5, 0.0, params)
    assert isinstance(ModelError("x"), ArithmeticError)
