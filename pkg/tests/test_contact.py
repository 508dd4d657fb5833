import math

import numpy as np
import pytest

from conftest import random_input, random_state
from thrustmip.contact import (
    COND_MAX,
    SINGULAR_BAND,
    SINGULAR_DTHETA,
    ContactSingularityError,
    constraint_values,
    noslip_constraints,
    singular_pitch,
    solve_contact_forces,
)
from thrustmip.control import equilibrium_pitch
from thrustmip.dynamics import (
    equilibrium_input,
    position_jacobians,
    rotation,
    slope_normal,
    slope_tangent,
    state_derivative,
    thrust_direction,
)
from thrustmip.truth import GroundModel, TruthPlant, from_reduced


def _linear_momentum_residual(x, u, p, forces):
    """m_w a_w + m_b a_b minus all external forces on the robot."""
    xd = state_derivative(x, u, p)
    qd, qdd = x[2:], xd[2:]
    J_w, J_b, _ = position_jacobians(x, p)
    a_w = J_w @ qdd
    # d/dt (J_b qd): the theta column rotates, R'' l_b = -R l_b
    a_b = J_b @ qdd - rotation(x[1]) @ np.asarray(p.l_b) * qd[1] ** 2
    ground = forces.f_gx * slope_tangent(p) + forces.f_gn * slope_normal(p)
    ext = ground + u[1] * thrust_direction(x[1]) - np.array([0.0, p.total_mass * p.g])
    return p.m_w * a_w + p.m_b * a_b - ext


def test_whole_robot_force_balance(rng, params):
    worst = 0.0
    for _ in range(1000):
        p = params.replace(beta=rng.uniform(-0.8, 0.8))
        x = random_state(rng)
        u = random_input(rng, p)
        if abs(x[1] - singular_pitch(p)) < 1e-2:
            continue
        f = solve_contact_forces(x, u, p)
        worst = max(worst, float(np.max(np.abs(_linear_momentum_residual(x, u, p, f)))))
    assert worst < 1e-8


def test_wheel_spin_balance(rng, params):
    for _ in range(200):
        x = random_state(rng)
        u = random_input(rng, params)
        f = solve_contact_forces(x, u, params)
        phdd = state_derivative(x, u, params)[2]
        tau = params.k1 * u[0] - params.k2 * x[2]
        assert params.I_w * phdd == pytest.approx(tau - params.r * f.f_gx, abs=1e-9)


def test_flat_static_normal_force(params):
    f = solve_contact_forces([0.0, 0.0, 0.0, 0.0], (0.0, 0.0), params)
    assert f.f_gn == pytest.approx(params.total_mass * params.g, rel=1e-9)
    assert abs(f.f_gx) < 1e-9


@pytest.mark.parametrize("deg", [5.0, 15.0, 30.0])
def test_incline_statics(params, deg):
    p = params.replace(beta=math.radians(deg))
    th = equilibrium_pitch(p)
    f = solve_contact_forces([0.0, th, 0.0, 0.0], equilibrium_input(th, 0.0, p), p)
    W = p.total_mass * p.g
    assert f.f_gx == pytest.approx(W * math.sin(p.beta), rel=1e-9)
    assert f.f_gn == pytest.approx(W * math.cos(p.beta), rel=1e-9)


def test_15_degree_operating_point(params):
    p = params.replace(beta=math.radians(15))
    th = equilibrium_pitch(p)
    h = noslip_constraints([0.0, th, 0.0, 0.0], equilibrium_input(th, 0.0, p), p)
    assert h.feasible
    assert -h.h1 == pytest.approx(56.85, abs=0.01)


@pytest.mark.parametrize("beta", [0.0, 0.26, -0.4])
def test_continuity_across_singular_pitch(params, beta):
    p = params.replace(beta=beta)
    th_s = singular_pitch(p)
    x = np.array([0.0, th_s, 0.4, 0.3])
    u = np.array([0.2, 5.0])
    ref = solve_contact_forces(x, u, p)
    for off in (-3e-3, -1e-3, -2e-5, 2e-5, 1e-3, 3e-3):
        f = solve_contact_forces(x + np.array([0.0, off, 0.0, 0.0]), u, p)
        for a, b in ((f.f_gn, ref.f_gn), (f.f_gx, ref.f_gx)):
            assert abs(a - b) <= 1e-3 * max(abs(ref.f_gn), 1.0)


def test_singular_pitch_flat_is_upright(params):
    assert singular_pitch(params) == 0.0
    assert singular_pitch(params.replace(beta=0.3)) == pytest.approx(-0.3)


def test_unresolvable_singularity_raises(params):
    with pytest.raises(ContactSingularityError):
        solve_contact_forces([0.0, 0.0, 0.0, 0.0], (0.0, 0.0), params, cond_max=1.0)


def test_constraint_definitions():
    h = constraint_values(3.0, 10.0, 0.5)
    assert h.h1 == -10.0 and h.h2 == 9.0 - 25.0 and h.feasible
    assert not constraint_values(6.0, 10.0, 0.5).feasible
    assert not constraint_values(0.0, -1.0, 0.5).feasible


def test_contact_jacobians_match_finite_differences(rng, params, kernels):
    pv = params.as_array()
    h = 1e-6
    for _ in range(50):
        x = random_state(rng)
        if abs(x[1] - singular_pitch(params)) < 0.05:
            continue
        u = random_input(rng, params)
        _, Zx, Zu, st = kernels.contact_jac(x, u, pv, SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX)
        assert st == kernels.CONTACT_OK
        for j in range(4):
            d = np.zeros(4)
            d[j] = h
            zp = kernels.contact(x + d, u, pv, SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX)[0]
            zm = kernels.contact(x - d, u, pv, SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX)[0]
            np.testing.assert_allclose(Zx[:, j], (zp - zm) / (2 * h), rtol=1e-5, atol=1e-5)
        for j in range(2):
            d = np.zeros(2)
            d[j] = h
            zp = kernels.contact(x, u + d, pv, SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX)[0]
            zm = kernels.contact(x, u - d, pv, SINGULAR_DTHETA, SINGULAR_BAND, COND_MAX)[0]
            np.testing.assert_allclose(Zu[:, j], (zp - zm) / (2 * h), rtol=1e-5, atol=1e-5)


def test_large_duty_on_low_friction_ground_slips(params):
    # sweep the duty at rest until the cone is left, then confirm slip in the simulator
    p = params.replace(mu_s=0.2)
    x = np.zeros(4)
    duties = np.linspace(0.0, 1.0, 101)
    h2 = np.array([noslip_constraints(x, (d, 0.0), p).h2 for d in duties])
    assert h2[0] < 0.0 and h2[-1] > 0.0
    d_slip = duties[np.argmax(h2 > 0.0)]
    ground = GroundModel.matching(p)
    for duty, slips in ((0.5 * d_slip, False), (min(1.0, 1.5 * d_slip), True)):
        plant = TruthPlant(from_reduced(x, p, ground), p, ground)
        sample = plant.advance((duty, 0.0), 0.05)
        assert (sample.v_slip > 10 * ground.v_reg) == slips


@pytest.mark.parametrize("beta", [0.0, math.radians(15)])
def test_grid_jump_through_singular_pitch(params, beta):
    p = params.replace(beta=beta)
    th_s = singular_pitch(p)
    u = (0.3, 4.0)
    grid = th_s + 1e-4 * np.arange(-30, 31)
    fn = np.array([solve_contact_forces([0.0, th, 0.2, -0.1], u, p).f_gn for th in grid])
    jumps = np.abs(np.diff(fn))
    assert np.all(jumps < 1e-3 * np.abs(fn[1:]))
    near = solve_contact_forces([0.0, th_s + 1e-9, 0.2, -0.1], u, p).f_gn
    assert near == pytest.approx(fn[30], rel=1e-6)
