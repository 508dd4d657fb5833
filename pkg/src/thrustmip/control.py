"""Baseline PID balancing, climb reference generation and PID/MPC scheduling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from thrustmip.dynamics import ControlInput
from thrustmip.nmpc import INFEASIBLE_RELAXED, MpcController, MpcSolution
from thrustmip.params import RobotParams

log = logging.getLogger(__name__)

PID = "pid"
MPC = "mpc"


@dataclass(frozen=True)
class PidGains:
    """Cascaded gains: wheel-velocity loop -> pitch set-point -> motor duty.

    The velocity loop leans the set-point back when the wheel runs faster than
    its reference, ``theta_sp = theta_ref - kp_vel * e_v - ki_vel * int(e_v)``
    with ``e_v = phi_dot - phi_dot_ref``.
    """

    kp_pitch: float = 40.0
    ki_pitch: float = 10.0
    kd_pitch: float = 5.0
    kp_vel: float = 0.02
    ki_vel: float = 0.01
    pitch_sp_limit: float = 0.3
    u_min: float = -1.0
    u_max: float = 1.0

    def __post_init__(self):
        values = (self.kp_pitch, self.ki_pitch, self.kd_pitch, self.kp_vel, self.ki_vel,
                  self.pitch_sp_limit)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("PID gains must be finite")
        if not -1.0 <= self.u_min < self.u_max <= 1.0:
            raise ValueError("PID output limits must lie within [-1, 1]")


class PidController:
    """Flat-ground balancing controller; thrusters are never used."""

    def __init__(self, gains: PidGains = PidGains()):
        self.gains = gains
        self.i_pitch = 0.0
        self.i_vel = 0.0
        self.saturated = False

    def reset(self) -> None:
        self.i_pitch = 0.0
        self.i_vel = 0.0

    def step(self, state, ref, dt: float, u_ff: float = 0.0) -> ControlInput:
        k = self.gains
        x = np.asarray(state, dtype=float)
        xr = np.asarray(ref, dtype=float)
        e_v = x[2] - xr[2]
        pitch_sp = xr[1] - k.kp_vel * e_v - k.ki_vel * self.i_vel
        pitch_sp = min(max(pitch_sp, xr[1] - k.pitch_sp_limit), xr[1] + k.pitch_sp_limit)
        e_p = x[1] - pitch_sp
        raw = u_ff + k.kp_pitch * e_p + k.ki_pitch * self.i_pitch + k.kd_pitch * (x[3] - xr[3])
        u_m = min(max(raw, k.u_min), k.u_max)
        self.saturated = u_m != raw
        # clamping anti-windup: integrators hold while the output saturates
        if not self.saturated:
            self.i_pitch += e_p * dt
            self.i_vel += e_v * dt
        return ControlInput(u_m, 0.0)


def pid_step(state, ref, gains: PidGains, dt: float, controller: PidController | None = None):
    """One PID evaluation; a fresh controller (zero integrators) when none is given."""
    ctl = controller if controller is not None else PidController(gains)
    return ctl.step(state, ref, dt)


def equilibrium_pitch(params: RobotParams, f_t: float = 0.0) -> float:
    """Pitch at which a resting robot is balanced on the incline with thrust ``f_t``.

    Root of the summed wheel and pitch balances of the rolling model at rest,
    bracketed around the upright pose.
    """
    p = params
    bx, by = p.l_b
    m = p.total_mass

    def residual(th):
        a_by = -math.cos(th) * bx - math.sin(th) * by
        return m * p.g * p.r * math.sin(p.beta) + p.m_b * p.g * a_by - (
            p.r * math.cos(th + p.beta) + p.l_t[1]
        ) * f_t

    up = math.atan2(-bx, by)
    lo, hi = up - math.pi / 2 + 1e-9, up + math.pi / 2 - 1e-9
    if residual(lo) * residual(hi) > 0.0:
        raise ValueError(f"no balanced pitch for thrust {f_t} N on this incline")
    return brentq(residual, lo, hi, xtol=1e-14, rtol=1e-15)


@dataclass(frozen=True)
class ClimbProfile:
    """Trapezoidal wheel-speed profile; times are absolute (s)."""

    t_start: float = 1.0
    ramp_up: float = 1.0
    cruise_speed: float = 4.0
    cruise_time: float = 3.0
    ramp_down: float = 0.0
    phi0: float = 0.0
    thrust_allocation: float = 0.0

    def __post_init__(self):
        if min(self.ramp_up, self.cruise_time, self.ramp_down, self.t_start) < 0.0:
            raise ValueError("profile durations must be >= 0")

    @property
    def cruise_window(self):
        t0 = self.t_start + self.ramp_up
        return t0, t0 + self.cruise_time


def _speed_and_distance(profile: ClimbProfile, t: float):
    v = profile.cruise_speed
    t1 = profile.t_start
    t2 = t1 + profile.ramp_up
    t3 = t2 + profile.cruise_time
    t4 = t3 + profile.ramp_down
    if t <= t1:
        return 0.0, 0.0
    if t <= t2:
        tau = t - t1
        a = v / profile.ramp_up
        return a * tau, 0.5 * a * tau * tau
    d2 = 0.5 * v * profile.ramp_up
    if t <= t3 or profile.ramp_down == 0.0:
        return v, d2 + v * (t - t2)
    d3 = d2 + v * profile.cruise_time
    if t <= t4:
        tau = t - t3
        a = v / profile.ramp_down
        return v - a * tau, d3 + v * tau - 0.5 * a * tau * tau
    return 0.0, d3 + 0.5 * v * profile.ramp_down


def generate_climb_reference(profile: ClimbProfile, t: float, params: RobotParams,
                             theta_eq: float | None = None) -> np.ndarray:
    """Reference state ``[phi, theta, phi_dot, theta_dot]`` at time ``t``."""
    if theta_eq is None:
        theta_eq = equilibrium_pitch(params, profile.thrust_allocation)
    speed, dist = _speed_and_distance(profile, t)
    return np.array([profile.phi0 + dist, theta_eq, speed, 0.0])


@dataclass(frozen=True)
class SchedulerConfig:
    t_mpc_enable: float = 1.0
    thrust_enable: bool = True

    def __post_init__(self):
        if not self.t_mpc_enable >= 0.0:
            raise ValueError("t_mpc_enable must be >= 0")


@dataclass
class ScheduledOutput:
    u: ControlInput
    active: str
    solution: MpcSolution | None = None
    fallback: bool = False


class Scheduler:
    """PID before ``t_mpc_enable`` and MPC afterwards.

    The first MPC call is warm-started from the last PID output.  A relaxed
    (infeasible) MPC solve hands that step back to the PID.
    """

    def __init__(self, config: SchedulerConfig, pid: PidController, mpc: MpcController,
                 params: RobotParams, profile: ClimbProfile, control_dt: float):
        self.config = config
        self.pid = pid
        self.mpc = mpc
        self.params = params
        self.profile = profile
        self.dt = control_dt
        self.theta_eq = equilibrium_pitch(params, profile.thrust_allocation if config.thrust_enable else 0.0)
        self.theta_eq_pid = equilibrium_pitch(params, 0.0)
        self._last_u = ControlInput(0.0, 0.0)
        self._mpc_started = False
        self.fallbacks = 0

    def reference(self, t: float) -> np.ndarray:
        return generate_climb_reference(self.profile, t, self.params, self.theta_eq)

    def reference_window(self, t: float) -> np.ndarray:
        n = self.mpc.config.n_h
        return np.array([self.reference(t + k * self.dt) for k in range(n + 1)])

    def equilibrium_input(self, thrust: float) -> ControlInput:
        p = self.params
        th = self.theta_eq if thrust > 0.0 else self.theta_eq_pid
        holding = p.total_mass * p.g * p.r * math.sin(p.beta) - p.r * math.cos(th + p.beta) * thrust
        return ControlInput(min(max(holding / p.k1, -1.0), 1.0), thrust)

    def _pid(self, t, state):
        ref = self.reference(t)
        ref[1] = self.theta_eq_pid
        u_ff = self.equilibrium_input(0.0).u_m
        return self.pid.step(state, ref, self.dt, u_ff=u_ff)

    def step(self, t: float, state) -> ScheduledOutput:
        if t < self.config.t_mpc_enable:
            u = self._pid(t, state)
            self._last_u = u
            return ScheduledOutput(u, PID)
        thrust_ref = self.profile.thrust_allocation if self.config.thrust_enable else 0.0
        if not self._mpc_started:
            seed = self._last_u if self.config.t_mpc_enable > 0.0 else self.equilibrium_input(thrust_ref)
            self.mpc.seed(seed)
            self._mpc_started = True
        u_lin = self.equilibrium_input(thrust_ref)
        sol = self.mpc.solve(np.asarray(state, dtype=float), self.reference_window(t), u_lin)
        if sol.status == INFEASIBLE_RELAXED:
            self.fallbacks += 1
            log.info("t=%.3f: MPC relaxed (violation %.3g), PID fallback", t, sol.max_constraint_violation)
            u = self._pid(t, state)
            self._last_u = u
            return ScheduledOutput(u, PID, sol, fallback=True)
        u = ControlInput(float(sol.u_seq[0, 0]), float(sol.u_seq[0, 1]))
        self._last_u = u
        return ScheduledOutput(u, MPC, sol)
