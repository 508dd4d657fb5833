import math

import numpy as np
import pytest

from thrustmip._backend import kernels as default_kernels
from thrustmip.contact import noslip_constraints
from thrustmip.control import PidController, PidGains, equilibrium_pitch
from thrustmip.dynamics import equilibrium_input
from thrustmip.harness import _integrate_reduced
from thrustmip.truth import (
    FreeState,
    GroundModel,
    SimulationAbort,
    TruthPlant,
    compliant_contact_force,
    free_dynamics,
    from_reduced,
    mechanical_energy,
    simulate,
)


def _at_rest(params, y_w, phi_dot=0.0):
    return FreeState(0.0, y_w, 0.0, 0.0, 0.0, 0.0, phi_dot, 0.0)


def test_ground_model_validation():
    with pytest.raises(ValueError):
        GroundModel(k_ground=-1.0)
    with pytest.raises(ValueError):
        GroundModel(mu_static=0.5, mu_coulomb=0.6)


def test_separated_contact_has_no_force(params):
    s = compliant_contact_force(_at_rest(params, params.r + 0.01), GroundModel(), params)
    assert s.f_gx == 0.0 and s.f_gn == 0.0


def test_static_penetration_is_pure_spring(params):
    g = GroundModel()
    d = 3e-4
    s = compliant_contact_force(_at_rest(params, params.r - d), g, params)
    assert s.f_gn == pytest.approx(g.k_ground * d, rel=1e-12)
    assert s.f_gx == 0.0 and s.v_slip == 0.0


def test_friction_is_odd_and_saturates(params):
    g = GroundModel()
    lo = compliant_contact_force(_at_rest(params, params.r - 1e-3, phi_dot=0.004), g, params)
    hi = compliant_contact_force(_at_rest(params, params.r - 1e-3, phi_dot=-0.004), g, params)
    assert lo.f_gx == pytest.approx(-hi.f_gx)
    fast = compliant_contact_force(_at_rest(params, params.r - 1e-3, phi_dot=-40.0), g, params)
    # far past the Stribeck scale the coefficient is the Coulomb value
    assert abs(fast.f_gx) == pytest.approx(g.mu_coulomb * fast.f_gn, rel=1e-9)


def test_free_fall(params):
    s = FreeState(0.0, 1.0, 0.0, 0.2, 0.4, -1.0, 3.0, 0.0)
    d = free_dynamics(s, (0.0, 0.0), GroundModel(), params.replace(k2=0.0))
    np.testing.assert_allclose(d[4:6] + np.array([0.0, params.g]), 0.0, atol=1e-12)
    assert d[6] == 0.0 and abs(d[7]) < 1e-12


def test_compliant_static_equilibrium_flat(params):
    from scipy.optimize import brentq

    g = GroundModel()

    def vertical_accel(y):
        return free_dynamics(_at_rest(params, y), (0.0, 0.0), g, params)[5]

    y_eq = brentq(vertical_accel, params.r - 0.01, params.r, xtol=1e-15)
    d = free_dynamics(_at_rest(params, y_eq), (0.0, 0.0), g, params)
    assert np.max(np.abs(d)) < 1e-6
    assert params.r - y_eq == pytest.approx(params.total_mass * params.g / g.k_ground, rel=1e-6)


def test_incline_hold_matches_statics(params):
    # regularized friction has no true static state on a slope, only slow creep
    p = params.replace(beta=math.radians(15))
    g = GroundModel.matching(p)
    th = equilibrium_pitch(p)
    u = equilibrium_input(th, 0.0, p)
    fs = from_reduced([0.0, th, 0.0, 0.0], p, g, u)
    plant = TruthPlant(fs, p, g)
    sample = plant.advance(u, 0.5)
    W = p.total_mass * p.g
    assert sample.f_gn == pytest.approx(W * math.cos(p.beta), rel=1e-4)
    assert sample.f_gx == pytest.approx(W * math.sin(p.beta), rel=1e-3)


def test_penetration_abort(params):
    s = FreeState(0.0, params.r, 0.0, 0.0, 0.0, -20.0, 0.0, 0.0)
    plant = TruthPlant(s, params, GroundModel(), max_penetration=0.005)
    with pytest.raises(SimulationAbort):
        plant.advance((0.0, 0.0), 0.05)


def test_physics_step_limit(params):
    with pytest.raises(ValueError):
        TruthPlant(_at_rest(params, params.r), params, GroundModel(), dt_physics=1e-3)


def test_energy_never_gained_without_friction(params):
    p = params.replace(k2=0.0)
    g = GroundModel(mu_static=0.0, mu_coulomb=0.0)
    s = FreeState(0.0, p.r + 0.05, 0.0, 0.2, 0.3, 0.0, 2.0, -0.5)
    plant = TruthPlant(s, p, g)
    E = [mechanical_energy(plant.state, g, p)]
    for _ in range(100):
        plant.advance((0.0, 0.0), 0.002)
        E.append(mechanical_energy(plant.state, g, p))
    E = np.array(E)
    gains = np.diff(E) / np.abs(E[:-1])
    assert np.max(gains) < 1e-6
    assert E[-1] < E[0]


def test_slip_fidelity(params):
    # torque 20% past the cone bound at rest gives sustained slip within 0.2 s
    p = params.replace(mu_s=0.3)
    g = GroundModel.matching(p)
    x = np.zeros(4)
    duties = np.linspace(0.0, 1.0, 2001)
    h2 = np.array([noslip_constraints(x, (d, 0.0), p).h2 for d in duties])
    bound = duties[np.argmax(h2 > 0.0)]
    plant = TruthPlant(from_reduced(x, p, g), p, g)
    samples = [plant.advance((1.2 * bound, 0.0), 0.005) for _ in range(40)]
    slip = np.array([abs(s.v_slip) for s in samples])
    first = int(np.argmax(slip > g.v_reg))
    assert slip[first:].min() > g.v_reg
    assert (first + 1) * 0.005 <= 0.2


def test_simulate_is_deterministic(params):
    g = GroundModel.matching(params)
    pid = PidGains()

    def run():
        c = PidController(pid)
        ctl = lambda t, fs: c.step(fs.reduced(), np.zeros(4), 0.005)
        return simulate(from_reduced([0.0, 0.05, 0.0, 0.0], params, g), ctl, g, params, 0.3)

    a, b = run().arrays(), run().arrays()
    for key in a:
        assert np.array_equal(a[key], b[key])


def _closed_loop_gap(p, ground, dt_physics, t_end=5.0, dt=0.005):
    """Largest (phi, theta) gap between reduced and compliant plants under the same PID.

    Both plants run the same feedback law; replaying one open-loop input log
    on an unstable plant would only measure the divergence rate.
    """
    th = equilibrium_pitch(p)
    uff = equilibrium_input(th, 0.0, p).u_m
    x0 = np.array([0.0, th + 0.05, 0.0, 0.0])
    ref = np.array([0.0, th, 0.0, 0.0])
    n = int(round(t_end / dt))
    pid = PidController(PidGains())
    x = x0.copy()
    X = []
    for _ in range(n):
        X.append(x)
        u = pid.step(x, ref, dt, u_ff=uff)
        x = _integrate_reduced(x, np.asarray(u), p, dt, default_kernels)
    X = np.array(X)
    pid = PidController(PidGains())
    plant = TruthPlant(from_reduced(x0, p, ground), p, ground, dt_physics=dt_physics)
    Y = []
    for _ in range(n):
        y = plant.free_state.reduced()
        Y.append(y)
        plant.advance(pid.step(y, ref, dt, u_ff=uff), dt)
    Y = np.array(Y)
    return max(np.max(np.abs(Y[:, j] - X[:, j])) / np.ptp(X[:, j]) for j in (0, 1))


@pytest.mark.parametrize("deg", [0.0, 15.0])
def test_default_stiffness_tracks_reduced_model(params, deg):
    p = params.replace(beta=math.radians(deg))
    assert _closed_loop_gap(p, GroundModel.matching(p), 2e-5) < 0.02


def test_stiffness_sweep_on_flat_ground(params):
    gaps = []
    for k in (1e5, 1e6, 1e7):
        g = GroundModel.matching(params, k_ground=k, c_ground=2e3 * math.sqrt(k / 1e5))
        gaps.append(_closed_loop_gap(params, g, 2e-5))
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.skipif(default_kernels.NAME != "compiled", reason="needs the compiled kernels")
def test_joint_refinement_converges_on_incline(params):
    # stiffness alone stalls at the creep floor set by v_reg; refining both converges
    p = params.replace(beta=math.radians(15))
    gaps = []
    for level in range(3):
        k = 1e5 * 10**level
        g = GroundModel.matching(p, k_ground=k, c_ground=2e3 * math.sqrt(k / 1e5),
                                 v_reg=1e-3 / 10**level)
        gaps.append(_closed_loop_gap(p, g, 2e-5 / 10**level))
    assert gaps[0] > 5 * gaps[1] > 25 * gaps[2]
