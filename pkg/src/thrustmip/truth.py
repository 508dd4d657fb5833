"""Planar compliant-ground simulator that allows wheel slip and lift-off.

The wheel centre gets two translational degrees of freedom, so the rolling
constraint of the reduced model is replaced by a spring-damper normal force
and a regularized Stribeck friction law at the contact point.  Its purpose is
to check the reduced model and the contact-force estimate against a plant
that does not assume them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from thrustmip._backend import kernels
from thrustmip.dynamics import ControlInput, slope_normal, slope_tangent
from thrustmip.params import RobotParams

DEFAULT_DT_PHYSICS = 2e-5
DEFAULT_CONTROL_DT = 0.005
DEFAULT_MAX_PENETRATION = 0.02


class SimulationAbort(RuntimeError):
    """Nonphysical penetration or a non-finite state."""


class FreeState(NamedTuple):
    x_w: float
    y_w: float
    phi: float
    theta: float
    x_w_dot: float
    y_w_dot: float
    phi_dot: float
    theta_dot: float

    def reduced(self) -> np.ndarray:
        """``[phi, theta, phi_dot, theta_dot]`` as seen by the controllers."""
        return np.array([self.phi, self.theta, self.phi_dot, self.theta_dot])


@dataclass(frozen=True)
class GroundModel:
    k_ground: float = 1e5
    c_ground: float = 2e3
    mu_static: float = 0.7
    mu_coulomb: float = 0.6
    v_stribeck: float = 0.01
    v_reg: float = 1e-3
    _vec: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("k_ground", "c_ground", "v_stribeck", "v_reg"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.mu_coulomb <= self.mu_static:
            raise ValueError("need 0 <= mu_coulomb <= mu_static")
        vec = np.array(
            [self.k_ground, self.c_ground, self.mu_static, self.mu_coulomb,
             self.v_stribeck, self.v_reg],
            dtype=float,
        )
        vec.setflags(write=False)
        object.__setattr__(self, "_vec", vec)

    def as_array(self) -> np.ndarray:
        return self._vec

    @classmethod
    def matching(cls, params: RobotParams, **overrides) -> "GroundModel":
        """Ground whose static friction equals the robot's ``mu_s``."""
        kw = {"mu_static": params.mu_s, "mu_coulomb": min(0.6, params.mu_s)}
        kw.update(overrides)
        return cls(**kw)


class ContactSample(NamedTuple):
    f_gx: float
    f_gn: float
    v_slip: float
    penetration: float


def compliant_contact_force(fstate, ground: GroundModel, params: RobotParams) -> ContactSample:
    """Normal spring-damper force and Stribeck friction at the contact point.

    The slip velocity is the along-slope velocity of the wheel material at
    the contact point, ``t . v_w - r * phi_dot``.
    """
    s = np.asarray(fstate, dtype=float)
    return ContactSample(*kernels.ground_force(s, params.as_array(), ground.as_array()))


def free_dynamics(fstate, u, ground: GroundModel, params: RobotParams) -> np.ndarray:
    """Time derivative of the 8-component free state."""
    s = np.asarray(fstate, dtype=float)
    acc = kernels.free_accel(s, np.asarray(u, dtype=float), params.as_array(), ground.as_array())
    return np.concatenate([s[4:], acc])


def body_positions(fstate, params: RobotParams):
    s = np.asarray(fstate, dtype=float)
    c, sn = math.cos(s[3]), math.sin(s[3])
    R = np.array([[c, sn], [-sn, c]])
    p_w = s[:2]
    return p_w, p_w + R @ np.asarray(params.l_b)


def mechanical_energy(fstate, ground: GroundModel, params: RobotParams) -> float:
    """Kinetic + gravitational + contact-spring energy."""
    s = np.asarray(fstate, dtype=float)
    p = params
    th, thd = s[3], s[7]
    c, sn = math.cos(th), math.sin(th)
    bx, by = p.l_b
    a_b = np.array([-sn * bx + c * by, -c * bx - sn * by])
    v_w = s[4:6]
    v_b = v_w + thd * a_b
    _, p_b = body_positions(s, p)
    kinetic = 0.5 * (p.m_w * v_w @ v_w + p.m_b * v_b @ v_b + p.I_w * s[6] ** 2 + p.I_b * thd**2)
    potential = p.g * (p.m_w * s[1] + p.m_b * p_b[1])
    pen = p.r - slope_normal(p) @ s[:2]
    spring = 0.5 * ground.k_ground * pen**2 if pen > 0.0 else 0.0
    return kinetic + potential + spring


def from_reduced(x, params: RobotParams, ground: GroundModel, u=(0.0, 0.0)) -> FreeState:
    """Free state matching a rolling state, with the static spring sag applied."""
    from thrustmip.contact import solve_contact_forces

    x = np.asarray(x, dtype=float)
    f_gn = solve_contact_forces(x, u, params).f_gn
    sag = max(f_gn, 0.0) / ground.k_ground
    t = slope_tangent(params)
    n = slope_normal(params)
    p_w = x[0] * params.r * t + (params.r - sag) * n
    v_w = x[2] * params.r * t
    return FreeState(p_w[0], p_w[1], x[0], x[1], v_w[0], v_w[1], x[2], x[3])


@dataclass
class TruthLog:
    t: list = field(default_factory=list)
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    f_gx: list = field(default_factory=list)
    f_gn: list = field(default_factory=list)
    v_slip: list = field(default_factory=list)
    penetration: list = field(default_factory=list)

    def arrays(self) -> dict:
        return {name: np.asarray(getattr(self, name)) for name in self.__dataclass_fields__}


class TruthPlant:
    """Stateful stepper: holds one input for one control period per call."""

    def __init__(
        self,
        initial: FreeState,
        params: RobotParams,
        ground: GroundModel,
        dt_physics: float = DEFAULT_DT_PHYSICS,
        max_penetration: float = DEFAULT_MAX_PENETRATION,
    ):
        if not dt_physics <= 1e-4:
            raise ValueError("dt_physics must be <= 1e-4 s for the stiff contact")
        self.params = params
        self.ground = ground
        self.dt_physics = dt_physics
        self.max_penetration = max_penetration
        self.state = np.asarray(initial, dtype=float).copy()

    def advance(self, u, duration: float) -> ContactSample:
        """Integrate ``duration`` seconds under the held input.

        Returns the interval-mean ground forces, the peak slip speed and the
        peak penetration.
        """
        nsub = max(1, int(round(duration / self.dt_physics)))
        s, fx, fn, slip, pen, status = kernels.truth_advance(
            self.state,
            np.asarray(u, dtype=float),
            self.params.as_array(),
            self.ground.as_array(),
            self.dt_physics,
            nsub,
            self.max_penetration,
        )
        self.state = np.asarray(s)
        if status == kernels.SIM_PENETRATION:
            raise SimulationAbort(f"penetration {pen:.4g} m above limit {self.max_penetration}")
        if status == kernels.SIM_NONFINITE:
            raise SimulationAbort("non-finite simulator state")
        return ContactSample(fx, fn, slip, pen)

    @property
    def free_state(self) -> FreeState:
        return FreeState(*self.state)


def simulate(
    initial: FreeState,
    controller: Callable[[float, FreeState], ControlInput],
    ground: GroundModel,
    params: RobotParams,
    t_end: float,
    dt_physics: float = DEFAULT_DT_PHYSICS,
    control_dt: float = DEFAULT_CONTROL_DT,
    max_penetration: float = DEFAULT_MAX_PENETRATION,
) -> TruthLog:
    """Closed-loop run with the controller sampled every ``control_dt`` (zero-order hold)."""
    plant = TruthPlant(initial, params, ground, dt_physics, max_penetration)
    log = TruthLog()
    n_steps = int(round(t_end / control_dt))
    for k in range(n_steps):
        t = k * control_dt
        fs = plant.free_state
        u = controller(t, fs)
        sample = plant.advance(u, control_dt)
        log.t.append(t)
        log.states.append(np.asarray(fs))
        log.inputs.append(np.asarray(u, dtype=float))
        log.f_gx.append(sample.f_gx)
        log.f_gn.append(sample.f_gn)
        log.v_slip.append(sample.v_slip)
        log.penetration.append(sample.penetration)
    return log
