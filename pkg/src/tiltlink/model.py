"""Joint-chain kinematics and inertia aggregation for the multilink airframe.

The robot is a planar chain of N identical link modules.  Each module is a
rod of length ``link_length`` carrying one rotor at its midpoint.  The rotor
mount is steered about the link z axis by a vectoring angle ``psi`` and is
tilted away from that axis by the fixed angle ``tilt_beta``, so the unit
thrust direction in the link frame is::

    [sin(beta) * cos(psi), sin(beta) * sin(psi), cos(beta)]

Joints rotate about z only, which keeps the deformation two-dimensional.
All quantities produced here are expressed in the root link frame {L1}; the
candidate frame {C} used by the allocation stage shares that orientation
with its origin moved to the center of mass.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import rot_y, rot_z, wrap_angle

GRAVITY = 9.80665

_B3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class RobotModel:
    """Immutable physical description of the airframe.

    ``rotor_height`` is the vertical offset of the propeller plane above the
    link rod axis.  ``prop_cog_distance`` is the design distance from the
    propeller plane down to the vehicle center of mass; the battery slung
    under each rod is sized so the nominal CoG lands exactly there.
    """

    n_links: int = 4
    link_masses: tuple = (1.175, 1.175, 1.175, 1.175)
    link_length: float = 0.6
    tilt_beta: float = 0.34
    drag_ratios: tuple = (0.006, -0.006, 0.006, -0.006)
    lambda_max: float = 20.0
    rotor_height: float = 0.05
    prop_cog_distance: float = 0.1
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.n_links < 2:
            raise ValueError("need at least two links")
        if len(self.link_masses) != self.n_links:
            raise ValueError("one mass per link required")
        if any(m <= 0.0 for m in self.link_masses):
            raise ValueError("link masses must be positive")
        if self.link_length <= 0.0:
            raise ValueError("link length must be positive")
        if not 0.0 <= self.tilt_beta < np.pi / 2.0:
            raise ValueError("tilt angle must lie in [0, pi/2)")
        if self.lambda_max <= 0.0:
            raise ValueError("thrust limit must be positive")
        if len(self.drag_ratios) != self.n_links:
            raise ValueError("one drag ratio per rotor required")
        signs = np.sign(self.drag_ratios)
        if any(s == 0 for s in signs) or any(
            signs[i] == signs[i + 1] for i in range(self.n_links - 1)
        ):
            raise ValueError("rotor drag ratios must alternate sign")
        if not 0.0 < self.rotor_height < self.prop_cog_distance:
            raise ValueError("rotor height must lie in (0, prop_cog_distance)")

    @property
    def total_mass(self):
        return float(sum(self.link_masses))

    @property
    def battery_fraction(self):
        """Share of each link's mass assigned to the slung battery point mass.

        Chosen so the rod (at z = 0) plus the battery (at z = -(h + d))
        place the link center of mass at z = h - d, i.e. the distance from
        the propeller plane down to the mass center equals ``d``.
        """
        h, d = self.rotor_height, self.prop_cog_distance
        return (d - h) / (d + h)

    @property
    def battery_drop(self):
        """Depth of the battery point mass below the link rod axis."""
        return self.rotor_height + self.prop_cog_distance

    def with_overrides(self, **kwargs):
        values = {
            "n_links": self.n_links,
            "link_masses": self.link_masses,
            "link_length": self.link_length,
            "tilt_beta": self.tilt_beta,
            "drag_ratios": self.drag_ratios,
            "lambda_max": self.lambda_max,
            "rotor_height": self.rotor_height,
            "prop_cog_distance": self.prop_cog_distance,
            "gravity": self.gravity,
        }
        values.update(kwargs)
        return RobotModel(**values)


@dataclass(frozen=True)
class Configuration:
    """Joint angles q (length N-1) and vectoring angles psi (length N)."""

    q: np.ndarray
    psi: np.ndarray

    def __init__(self, q, psi):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        psi = wrap_angle(np.atleast_1d(np.asarray(psi, dtype=float)))
        if np.any(np.abs(q) > np.pi / 2.0 + 1e-9):
            raise ValueError("joint angles must lie within [-pi/2, pi/2]")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "psi", psi)

    @property
    def n_links(self):
        return self.psi.shape[0]


@dataclass
class FrameSet:
    """Per-link poses in the root frame {L1}.

    ``link_rot[i]`` / ``link_pos[i]`` locate the i-th link frame,
    ``com_pos[i]`` its center of mass, and ``rotor_rot[i]`` /
    ``rotor_pos[i]`` the rotor frame whose z axis carries the thrust.
    """

    link_rot: np.ndarray
    link_pos: np.ndarray
    com_pos: np.ndarray
    rotor_rot: np.ndarray
    rotor_pos: np.ndarray

    @property
    def n_links(self):
        return self.link_pos.shape[0]


@dataclass
class InertiaSummary:
    total_mass: float
    cog_origin: np.ndarray
    inertia: np.ndarray


def forward_kinematics(model, config):
    """Compose the chain of link frames and locate rotors and mass centers.

    Consecutive link frames are related by a translation of one link length
    along the local x axis followed by a joint rotation about z.  The rotor
    sits at the link midpoint, raised by ``rotor_height``, and its frame is
    the link frame rotated by Rz(psi) then Ry(tilt_beta).
    """
    n = model.n_links
    if config.q.shape[0] != n - 1 or config.psi.shape[0] != n:
        raise ValueError(
            f"configuration sized for {config.psi.shape[0]} links, model has {n}"
        )

    tilt = rot_y(model.tilt_beta)
    mid = np.array([model.link_length / 2.0, 0.0, 0.0])
    rotor_lift = np.array([0.0, 0.0, model.rotor_height])
    com_local = np.array(
        [
            model.link_length / 2.0,
            0.0,
            model.rotor_height - model.prop_cog_distance,
        ]
    )
    step = np.array([model.link_length, 0.0, 0.0])

    link_rot = np.zeros((n, 3, 3))
    link_pos = np.zeros((n, 3))
    com_pos = np.zeros((n, 3))
    rotor_rot = np.zeros((n, 3, 3))
    rotor_pos = np.zeros((n, 3))

    rot = np.eye(3)
    pos = np.zeros(3)
    for i in range(n):
        link_rot[i] = rot
        link_pos[i] = pos
        com_pos[i] = pos + rot @ com_local
        rotor_pos[i] = pos + rot @ (mid + rotor_lift)
        rotor_rot[i] = rot @ rot_z(config.psi[i]) @ tilt
        if i < n - 1:
            pos = pos + rot @ step
            rot = rot @ rot_z(config.q[i])

    return FrameSet(link_rot, link_pos, com_pos, rotor_rot, rotor_pos)


def _link_component_masses(model, i):
    """(rod mass, battery mass) split for link i."""
    mu = model.battery_fraction
    m = model.link_masses[i]
    return m * (1.0 - mu), m * mu


def aggregate_inertia(model, frames):
    """Total mass, mass center, and inertia about it in {C} orientation.

    Each link contributes a uniform slender rod along its x axis plus the
    battery point mass below the rod; both are transported to the common
    center of mass with the parallel-axis theorem.
    """
    n = frames.n_links
    masses = np.asarray(model.link_masses)
    total = float(masses.sum())
    cog = (masses[:, None] * frames.com_pos).sum(axis=0) / total

    length = model.link_length
    rod_mid = np.array([length / 2.0, 0.0, 0.0])
    bat_off = np.array([length / 2.0, 0.0, -model.battery_drop])

    inertia = np.zeros((3, 3))
    for i in range(n):
        m_rod, m_bat = _link_component_masses(model, i)
        rot = frames.link_rot[i]
        # Slender rod about its own center, then rotated into {C}.
        i_rod = np.diag([0.0, m_rod * length**2 / 12.0, m_rod * length**2 / 12.0])
        i_rod = rot @ i_rod @ rot.T
        for m_c, i_c, off in ((m_rod, i_rod, rod_mid), (m_bat, None, bat_off)):
            r = frames.link_pos[i] + rot @ off - cog
            shift = m_c * (np.dot(r, r) * np.eye(3) - np.outer(r, r))
            inertia += shift if i_c is None else i_c + shift

    inertia = 0.5 * (inertia + inertia.T)
    return InertiaSummary(total, cog, inertia)


def thrust_direction_local(model, psi):
    """Unit thrust direction in the link frame for one vectoring angle."""
    return rot_z(psi) @ rot_y(model.tilt_beta) @ _B3
