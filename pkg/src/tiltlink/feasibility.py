"""Feasible-control-torque zonotope and the guaranteed minimum torque.

With thrusts confined to 0 <= lambda_i <= lambda_max, the reachable torque
set is the zonotope spanned by the per-rotor torque vectors v_i.  Its faces
have normals v_i x v_j, and the distance from the origin to the face along
such a normal is the support sum of the clipped projections.  The smallest
face distance is the radius of the largest origin-centered torque ball that
fits inside, which certifies three-axis rotational controllability when it
is strictly positive.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .model import aggregate_inertia, forward_kinematics

#: Pairs whose cross product is smaller than this (relative to the vector
#: magnitudes) do not define a face normal and are skipped.
DEGENERACY_TOLERANCE = 1e-9


@dataclass
class TorqueBasis:
    """Per-rotor torque directions v_i (N*m per N of thrust) in {C}."""

    vectors: np.ndarray
    lambda_max: float

    @property
    def n_rotors(self):
        return self.vectors.shape[0]


@dataclass
class FeasibilityReport:
    tau_min: float
    face_distances: dict
    degenerate_pairs: list
    all_degenerate: bool
    singular_class: str = field(default="unknown")


def torque_basis(model, config, frames=None, inertia=None):
    """Build the torque basis for one configuration without solving hover."""
    if frames is None:
        frames = forward_kinematics(model, config)
    if inertia is None:
        inertia = aggregate_inertia(model, frames)
    b3 = np.array([0.0, 0.0, 1.0])
    f_cols = frames.rotor_rot @ b3
    p_rel = frames.rotor_pos - inertia.cog_origin
    kappa = np.asarray(model.drag_ratios)
    vectors = np.cross(p_rel, f_cols) + kappa[:, None] * f_cols
    return TorqueBasis(vectors=vectors, lambda_max=model.lambda_max)


def tau_min(basis):
    """Guaranteed minimum control torque of the thrust-bounded torque set.

    Iterates ordered rotor pairs so both signs of every face normal are
    covered; degenerate (near-parallel) pairs are recorded and skipped.
    When no pair defines a normal the set is flat and the radius is zero.
    """
    v = np.asarray(basis.vectors, dtype=float)
    n = v.shape[0]
    if n < 3:
        raise ValueError("need at least three rotors for a torque volume")

    norms = np.linalg.norm(v, axis=1)
    face_distances = {}
    degenerate = []
    for i, j in combinations(range(n), 2):
        normal = np.cross(v[i], v[j])
        normal_len = np.linalg.norm(normal)
        if normal_len < DEGENERACY_TOLERANCE * norms[i] * norms[j]:
            degenerate.append((i, j))
            continue
        unit = normal / normal_len
        proj = basis.lambda_max * (v @ unit)
        face_distances[(i, j)] = float(np.clip(proj, 0.0, None).sum())
        face_distances[(j, i)] = float(np.clip(-proj, 0.0, None).sum())

    all_degenerate = not face_distances
    value = 0.0 if all_degenerate else min(face_distances.values())
    return FeasibilityReport(
        tau_min=value,
        face_distances=face_distances,
        degenerate_pairs=degenerate,
        all_degenerate=all_degenerate,
    )


def detect_singular_class(q, tol=1e-8):
    """Classify a quad-type joint vector against the two singular families.

    The first family holds q1 = -q3 with q2 = 0 (the torque allocation
    loses rank without rotor tilt); the second holds q1 = -q2 = q3, which
    places every rotor on one straight line.  The zero form satisfies both.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (3,):
        raise ValueError("singular classification is defined for 4-link forms")
    s1 = abs(q[0] + q[2]) <= tol and abs(q[1]) <= tol
    s2 = abs(q[0] + q[1]) <= tol and abs(q[1] + q[2]) <= tol
    if s1 and s2:
        return "both"
    if s1:
        return "S1"
    if s2:
        return "S2"
    return "none"


def analyze(model, config, tol=1e-8):
    """Torque-feasibility report with the singular class filled in."""
    report = tau_min(torque_basis(model, config))
    if model.n_links == 4:
        report.singular_class = detect_singular_class(config.q, tol)
    return report


def zonotope_vertices(basis):
    """Candidate vertices (all 0/lambda_max thrust corners) for plotting."""
    n = basis.n_rotors
    if n > 16:
        raise ValueError("vertex enumeration is limited to 16 rotors")
    corners = np.array(
        [[(k >> i) & 1 for i in range(n)] for k in range(2**n)], dtype=float
    )
    return corners * basis.lambda_max @ basis.vectors
