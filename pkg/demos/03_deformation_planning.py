"""Deformation planning: continuity, singular passes, and a corner case.

Plans vectoring angles along a square-to-line deformation (the margin
stays positive all the way to the hardest form), then shows a joint
vector whose reversed-vectoring twin is useless — the reason some linear
deformation paths are impossible and must be detected.
"""

import numpy as np

from tiltlink import (
    PlanBreak,
    RobotModel,
    detect_corner_case,
    dual_solution,
    linear_joint_schedule,
    plan_deformation,
)

robot = RobotModel()

print("== square -> line deformation (0.25 rad/s joints, 20 Hz replanning) ==")
schedule = linear_joint_schedule([np.pi / 2] * 3, [0.0] * 3,
                                 joint_rate=0.25, planner_rate=20.0)
trace = plan_deformation(robot, schedule)
print(f"  {len(trace)} planning steps over {trace.steps[-1].t:.1f} s")
print(f"  torque margin floor: {trace.tau_min_floor:.3f} N*m (stays positive)")
print(f"  largest vectoring step: {trace.max_psi_step:.3f} rad "
      f"(continuity bound 0.2)")
for k in np.linspace(0, len(trace) - 1, 6).astype(int):
    s = trace.steps[k]
    print(f"    t={s.t:5.2f}s q={np.round(s.q, 2)} "
          f"psi={np.round(s.result.psi_bar, 2)} tau={s.result.tau_min:.2f}")

print()
print("== corner case: a form whose reversed twin loses all margin ==")
is_corner, tau_primal, tau_dual = detect_corner_case(robot, [0.11] * 3)
print(f"  q = [0.11, 0.11, 0.11]: primal margin {tau_primal:.2f} N*m, "
      f"reversed twin {tau_dual:.3f} N*m -> corner case: {is_corner}")

print()
print("== the linear corner-to-corner transition is impossible ==")
try:
    plan_deformation(robot, linear_joint_schedule([0.11] * 3, [-0.11] * 3,
                                                  joint_rate=0.25,
                                                  planner_rate=20.0))
    print("  unexpectedly completed")
except PlanBreak as exc:
    print(f"  PlanBreak at t={exc.t:.2f}s, q={np.round(exc.q, 3)}")
    print(f"  reason: {exc.reason}")
