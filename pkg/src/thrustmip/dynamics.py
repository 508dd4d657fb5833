"""Reduced-order planar MIP on an incline under the rolling (no-slip) constraint.

Generalized coordinates are the wheel angle ``phi`` and the body pitch
``theta``, both clockwise-positive, so that ``phi > 0`` rolls the wheel up the
slope and ``theta > 0`` leans the body the same way.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from thrustmip._backend import kernels
from thrustmip.params import RobotParams


class ModelError(ArithmeticError):
    """The reduced model produced a non-finite or singular quantity."""


class State(NamedTuple):
    phi: float
    theta: float
    phi_dot: float
    theta_dot: float


class ControlInput(NamedTuple):
    u_m: float
    f_t: float

    def check(self, params: RobotParams) -> "ControlInput":
        if not -1.0 <= self.u_m <= 1.0:
            raise ValueError(f"motor duty u_m={self.u_m} outside [-1, 1]")
        if not 0.0 <= self.f_t <= params.f_t_max:
            raise ValueError(f"thrust f_t={self.f_t} outside [0, {params.f_t_max}]")
        return self


class DynamicsTerms(NamedTuple):
    M: np.ndarray
    h: np.ndarray
    B_q: np.ndarray


def rotation(theta: float) -> np.ndarray:
    """Body-to-inertial rotation for a clockwise-positive pitch angle."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def rotation_derivative(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, c], [-c, -s]])


def slope_tangent(params: RobotParams) -> np.ndarray:
    return np.array([math.cos(params.beta), math.sin(params.beta)])


def slope_normal(params: RobotParams) -> np.ndarray:
    return np.array([-math.sin(params.beta), math.cos(params.beta)])


def as_state(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (4,):
        raise ValueError(f"state must have 4 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state components must be finite")
    return arr


def as_input(u) -> np.ndarray:
    arr = np.asarray(u, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"input must have 2 components, got shape {arr.shape}")
    return arr


def wheel_kinematics(state, params: RobotParams):
    """Wheel centre, body CoM and thruster positions ``(p_w, p_b, p_t)``."""
    x = as_state(state)
    p_w = x[0] * params.r * slope_tangent(params)
    R = rotation(x[1])
    return p_w, p_w + R @ np.asarray(params.l_b), p_w + R @ np.asarray(params.l_t)


def position_jacobians(state, params: RobotParams):
    """Jacobians of ``(p_w, p_b, p_t)`` with respect to ``q = (phi, theta)``."""
    x = as_state(state)
    e = params.r * slope_tangent(params)
    dR = rotation_derivative(x[1])
    J_w = np.column_stack([e, np.zeros(2)])
    J_b = np.column_stack([e, dR @ np.asarray(params.l_b)])
    J_t = np.column_stack([e, dR @ np.asarray(params.l_t)])
    return J_w, J_b, J_t


def thrust_direction(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), -math.sin(theta)])


def input_mappings(state, params: RobotParams):
    """Generalized-force maps of motor torque and thrust, ``(B_tau, B_t)``."""
    x = as_state(state)
    _, _, J_t = position_jacobians(x, params)
    return np.array([1.0, -1.0]), J_t.T @ thrust_direction(x[1])


def motor_torque(u_m: float, phi_dot: float, params: RobotParams) -> float:
    if not -1.0 <= u_m <= 1.0:
        raise ValueError(f"motor duty u_m={u_m} outside [-1, 1]")
    return params.k1 * u_m - params.k2 * phi_dot


def dynamics_terms(state, params: RobotParams) -> DynamicsTerms:
    """``M(q)``, ``h(q, qdot)`` and ``B_q(q)`` of ``M qdd + h = B_q u``.

    The back-EMF term ``k2 * phi_dot`` is carried in ``h`` and the torque
    constant ``k1`` in the first column of ``B_q``.
    """
    x = as_state(state)
    p = params
    theta, phi_dot, theta_dot = x[1], x[2], x[3]
    m = p.total_mass
    e = slope_tangent(p)
    R = rotation(theta)
    l_b = np.asarray(p.l_b)
    a_b = rotation_derivative(theta) @ l_b
    M12 = p.m_b * p.r * (e @ a_b)
    M = np.array(
        [
            [m * p.r**2 + p.I_w, M12],
            [M12, p.m_b * (l_b @ l_b) + p.I_b],
        ]
    )
    dM12 = -p.m_b * p.r * (e @ (R @ l_b))
    h = np.array(
        [
            dM12 * theta_dot**2 + m * p.g * p.r * math.sin(p.beta) + p.k2 * phi_dot,
            p.m_b * p.g * a_b[1] - p.k2 * phi_dot,
        ]
    )
    B_tau, B_t = input_mappings(x, p)
    B_q = np.column_stack([p.k1 * B_tau, B_t])
    return DynamicsTerms(M, h, B_q)


def accelerations(state, u, params: RobotParams) -> np.ndarray:
    """``qdd = M^-1 (B_q u - h)`` from the explicit terms (reference path)."""
    terms = dynamics_terms(state, params)
    qdd = np.linalg.solve(terms.M, terms.B_q @ as_input(u) - terms.h)
    if not np.all(np.isfinite(qdd)):
        raise ModelError("non-finite accelerations")
    return qdd


def state_derivative(state, u, params: RobotParams) -> np.ndarray:
    """Control-affine state derivative ``[qdot; M^-1 (B_q u - h)]``."""
    x = as_state(state)
    xd = kernels.xdot(x, as_input(u), params.as_array())
    if not np.all(np.isfinite(xd)):
        raise ModelError("non-finite state derivative")
    return xd


def drift_and_input_matrix(state, params: RobotParams):
    """Split of the state derivative into ``f(x)`` and ``g(x)``."""
    x = as_state(state)
    terms = dynamics_terms(x, params)
    Minv = np.linalg.inv(terms.M)
    f = np.concatenate([x[2:], -Minv @ terms.h])
    g = np.vstack([np.zeros((2, 2)), Minv @ terms.B_q])
    return f, g


def total_energy(state, params: RobotParams):
    """Kinetic and potential energy ``(T, V)`` of body plus wheel."""
    x = as_state(state)
    p = params
    p_w, p_b, _ = wheel_kinematics(x, p)
    J_w, J_b, _ = position_jacobians(x, p)
    qd = x[2:]
    v_w = J_w @ qd
    v_b = J_b @ qd
    kinetic = 0.5 * (
        p.m_b * (v_b @ v_b) + p.I_b * qd[1] ** 2 + p.m_w * (v_w @ v_w) + p.I_w * qd[0] ** 2
    )
    potential = p.g * (p.m_b * p_b[1] + p.m_w * p_w[1])
    return kinetic, potential


def upright_pitch(params: RobotParams) -> float:
    """Pitch placing the body CoM vertically above the axle."""
    bx, by = params.l_b
    return math.atan2(-bx, by)


def equilibrium_input(theta: float, f_t: float, params: RobotParams) -> ControlInput:
    """Motor duty holding a resting pose at ``theta`` given thrust ``f_t``.

    Only the wheel-row balance is used; the pose is a true equilibrium only
    when ``theta`` also satisfies the pitch-row balance.
    """
    p = params
    holding = p.total_mass * p.g * p.r * math.sin(p.beta) - p.r * math.cos(theta + p.beta) * f_t
    return ControlInput(holding / p.k1, f_t)
