"""Wrench allocation, static hovering thrust, and the leveled CoG frame.

For a configuration (q, psi) the rotors map thrusts to a wrench through a
6xN allocation matrix.  Because the tilted rotors act on all three force
axes, the frame in which hover is level is not the link plane: we first
build the allocation in the candidate frame {C} (root-link orientation,
origin at the mass center), solve a relaxed 4x4 system for the thrust
direction that yields pure vertical force and zero torque, scale it to
balance gravity, and then rotate the whole allocation by the roll/pitch
pair (alpha_x, alpha_y) that aligns the resulting force with +z.  The
rotated frame is the {CoG} frame used by the controller.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import rot_x, rot_y
from .model import aggregate_inertia, forward_kinematics


class SingularAllocation(Exception):
    """The relaxed static-thrust system is rank deficient for this form."""


class ZeroForce(Exception):
    """No resultant force to orient the CoG frame against."""


#: Relative singular-value cutoff below which the 4x4 stack is treated as
#: rank deficient.
RANK_TOLERANCE = 1e-8


@dataclass
class AllocationBundle:
    """Allocation in the {CoG} frame plus the hover operating point.

    Qt, Qr: 3xN force / torque allocation (per newton of thrust).
    lambda_s: static thrust vector balancing gravity with zero torque.
    alpha_x, alpha_y: roll/pitch from {C} to {CoG}.
    r_cog_c: rotation matrix mapping {C} coordinates into {CoG}.
    feasible: True when every static thrust entry is strictly positive.
    """

    Qt: np.ndarray
    Qr: np.ndarray
    lambda_s: np.ndarray
    lambda_dash: np.ndarray
    alpha_x: float
    alpha_y: float
    r_cog_c: np.ndarray
    feasible: bool


def rotor_wrench_basis(frames, model, inertia):
    """Unit-thrust force and torque columns in the candidate frame {C}.

    Column i of the force part is the rotor's thrust direction; the torque
    part adds the moment of that force about the mass center and the rotor
    drag moment ``kappa_i`` acting along the thrust axis.
    """
    b3 = np.array([0.0, 0.0, 1.0])
    f_cols = frames.rotor_rot @ b3
    p_rel = frames.rotor_pos - inertia.cog_origin
    kappa = np.asarray(model.drag_ratios)
    tau_cols = np.cross(p_rel, f_cols) + kappa[:, None] * f_cols
    return f_cols.T.copy(), tau_cols.T.copy()


def solve_static_thrust(qt_c, qr_c, model):
    """Thrust vector achieving unit-z force and zero torque, scaled to hover.

    Stacks the z row of the force allocation on the torque allocation and
    solves for 1 N of vertical force with zero torque; for more than four
    rotors the minimum-norm solution is used.  The result is rescaled so
    the force magnitude equals the vehicle weight.
    """
    stack = np.vstack([qt_c[2:3, :], qr_c])
    rhs = np.array([1.0, 0.0, 0.0, 0.0])
    svals = np.linalg.svd(stack, compute_uv=False)
    if svals[-1] < RANK_TOLERANCE * svals[0]:
        raise SingularAllocation(
            "static thrust system is rank deficient; the form cannot hover"
        )
    if stack.shape[0] == stack.shape[1]:
        lam_dash = np.linalg.solve(stack, rhs)
    else:
        lam_dash = np.linalg.lstsq(stack, rhs, rcond=None)[0]
    force = qt_c @ lam_dash
    lam_s = (model.total_mass * model.gravity / np.linalg.norm(force)) * lam_dash
    return lam_dash, lam_s


def cog_orientation(force):
    """Roll/pitch (alpha_x, alpha_y) and R = Ry(alpha_y) @ Rx(alpha_x)
    rotating ``force`` onto the +z axis."""
    f = np.asarray(force, dtype=float)
    norm = np.linalg.norm(f)
    if norm < 1e-12:
        raise ZeroForce("cannot orient the CoG frame for a zero force")
    alpha_x = np.arctan2(f[1], f[2])
    alpha_y = np.arctan2(-f[0], np.hypot(f[1], f[2]))
    rotation = rot_y(alpha_y) @ rot_x(alpha_x)
    return float(alpha_x), float(alpha_y), rotation


def allocation_in_cog(qt_c, qr_c, rotation):
    """Rotate candidate-frame allocation columns into the {CoG} frame."""
    return rotation @ qt_c, rotation @ qr_c


def allocate(model, config, frames=None, inertia=None):
    """Full allocation pipeline for one configuration.

    Optionally reuses precomputed kinematics.  Raises SingularAllocation
    when the form cannot produce a torque-free vertical force.
    """
    if frames is None:
        frames = forward_kinematics(model, config)
    if inertia is None:
        inertia = aggregate_inertia(model, frames)
    qt_c, qr_c = rotor_wrench_basis(frames, model, inertia)
    lam_dash, lam_s = solve_static_thrust(qt_c, qr_c, model)
    alpha_x, alpha_y, rotation = cog_orientation(qt_c @ lam_s)
    qt, qr = allocation_in_cog(qt_c, qr_c, rotation)
    return AllocationBundle(
        Qt=qt,
        Qr=qr,
        lambda_s=lam_s,
        lambda_dash=lam_dash,
        alpha_x=alpha_x,
        alpha_y=alpha_y,
        r_cog_c=rotation,
        feasible=bool(np.all(lam_s > 0.0)),
    )
