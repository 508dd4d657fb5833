"""Ground contact forces of the rolling model and the no-slip constraints.

The wheel is treated as a free body acted on by the body (force ``c`` at the
axle), gravity and the ground.  Together with the wheel spin balance and the
body pitch balance about its CoM this gives four linear equations in
``z = [c_x, c_y, f_gx, f_gn]`` once the accelerations of the rolling model
are known.  ``f_gx`` acts along the slope tangent, ``f_gn`` along the outward
slope normal.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from thrustmip._backend import kernels
from thrustmip.dynamics import as_input, as_state
from thrustmip.params import RobotParams

#: pitch offset used on either side of the singular pose
SINGULAR_DTHETA = 1e-3
#: angular half-width of the band treated as singular
SINGULAR_BAND = 1e-4
#: pivot-ratio condition estimate above which the direct solve is rejected
COND_MAX = 1e10


class ContactSingularityError(ArithmeticError):
    """Both perturbed contact systems are numerically singular."""


class ContactForces(NamedTuple):
    c: np.ndarray
    f_gx: float
    f_gn: float


class ConstraintValues(NamedTuple):
    h1: float
    h2: float

    @property
    def feasible(self) -> bool:
        return self.h1 < 0.0 and self.h2 < 0.0


def cross2(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def contact_system(state, u, params: RobotParams):
    """``(A_c, b_c)`` of the linear system for ``z = [c, f_gx, f_gn]``."""
    return kernels.contact_system(as_state(state), as_input(u), params.as_array())


def singular_pitch(params: RobotParams) -> float:
    """Pitch at which the axle-to-CoM line lies along the slope normal.

    There the moment balance loses its dependence on ``f_gn`` and ``A_c`` is
    singular.  With a purely vertical ``l_b`` this is ``-beta``.
    """
    bx, by = params.l_b
    # R(theta) l_b parallel to n = [-sin beta, cos beta]
    return -params.beta - math.atan2(bx, by)


def solve_contact_forces(
    state,
    u,
    params: RobotParams,
    dtheta: float = SINGULAR_DTHETA,
    band: float = SINGULAR_BAND,
    cond_max: float = COND_MAX,
) -> ContactForces:
    """Contact forces from the rolling model at ``(state, u)``.

    Inside the singular band the forces are the mean of the solutions at
    ``theta +- dtheta``.
    """
    z, status = kernels.contact(
        as_state(state), as_input(u), params.as_array(), dtheta, band, cond_max
    )
    if status == kernels.CONTACT_SINGULAR:
        raise ContactSingularityError(
            f"contact system singular at theta={state[1]!r} and both perturbations"
        )
    return ContactForces(np.array(z[:2]), float(z[2]), float(z[3]))


def constraint_values(f_gx: float, f_gn: float, mu_s: float) -> ConstraintValues:
    return ConstraintValues(-f_gn, f_gx * f_gx - (mu_s * f_gn) ** 2)


def noslip_constraints(state, u, params: RobotParams, **kwargs) -> ConstraintValues:
    """No-slip constraint values; the contact is feasible iff both are negative."""
    forces = solve_contact_forces(state, u, params, **kwargs)
    return constraint_values(forces.f_gx, forces.f_gn, params.mu_s)
