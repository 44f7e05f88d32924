"""Torque margins of the singular forms, with and without rotor tilt.

Without tilt, the two singular joint families have an exactly flat
feasible-torque set (zero guaranteed margin).  With the tilt and planner-
chosen vectoring angles, every form keeps a solid three-axis margin.
"""

import numpy as np

from tiltlink import Configuration, RobotModel, analyze, optimize_vectoring, torque_basis, tau_min

FORMS = {
    "square  q=[ pi/2,  0.00,  pi/2]*": [np.pi / 2, np.pi / 2, np.pi / 2],
    "staple  q=[-pi/2,  0.00,  pi/2]": [-np.pi / 2, 0.0, np.pi / 2],
    "line    q=[ 0.00,  0.00,  0.00]": [0.0, 0.0, 0.0],
}

robot = RobotModel()
flat = robot.with_overrides(tilt_beta=0.0)

print(f"{'form':38s} {'class':6s} {'beta=0':>10s} {'beta=0.34 (planned)':>22s}")
for label, q in FORMS.items():
    report_flat = analyze(flat, Configuration(q, [0.0, 1.0, -1.0, 2.0]))
    plan = optimize_vectoring(robot, q)
    print(f"{label:38s} {report_flat.singular_class:6s} "
          f"{report_flat.tau_min:10.2e} {plan.tau_min:18.3f} N*m")

print()
print("Planned vectoring angles for the line form:",
      np.round(optimize_vectoring(robot, [0.0] * 3).psi_bar, 2))
print()
print("Margins scale linearly with the thrust limit; doubling lambda_max:")
basis = torque_basis(robot, Configuration([0.0] * 3,
                                          optimize_vectoring(robot, [0.0] * 3).psi_bar))
from tiltlink.feasibility import TorqueBasis

doubled = TorqueBasis(vectors=basis.vectors, lambda_max=2 * basis.lambda_max)
print(f"  {tau_min(basis).tau_min:.3f} -> {tau_min(doubled).tau_min:.3f} N*m")
