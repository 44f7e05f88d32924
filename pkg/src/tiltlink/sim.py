"""Deterministic rigid-body simulator closing the planner/controller loop.

The vehicle is integrated as a time-varying rigid body: mass properties
and allocation follow the (kinematically driven) joint and vectoring
angles, while the continuous state holds the root-frame attitude so that
swapping to a new form never teleports the physical structure.  The
controller sees the CoG-frame view derived through the current allocation
bundle.  Fixed-step RK4 with per-step re-orthonormalization keeps runs
bit-reproducible and fourth-order accurate.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .allocation import allocate
from .control import CascadeController, RankDeficientQr
from .feasibility import tau_min as tau_min_report
from .feasibility import torque_basis
from .geometry import euler_zyx, hat, orthonormalize, rot_z, wrap_angle
from .model import Configuration, aggregate_inertia, forward_kinematics
from .planner import (
    PlanBreak,
    PlanConstraints,
    PlanWeights,
    Infeasible,
    OptimizerStalled,
    optimize_vectoring,
)

log = logging.getLogger(__name__)


class EmptyTelemetry(Exception):
    """Metrics requested for an empty record list."""


@dataclass
class RigidBodyState:
    """Continuous state: CoG position/velocity in the world frame, the
    root-link-frame attitude, and body rates expressed in that frame."""

    r: np.ndarray
    v: np.ndarray
    rot: np.ndarray
    omega: np.ndarray
    t: float = 0.0

    def copy(self):
        return RigidBodyState(
            self.r.copy(), self.v.copy(), self.rot.copy(), self.omega.copy(), self.t
        )


@dataclass
class PlantParams:
    """Per-form quantities the integrator needs, in the root-frame view."""

    qt_c: np.ndarray
    qr_c: np.ndarray
    inertia_c: np.ndarray
    i_inv_c: np.ndarray
    mass: float
    gravity: float

    @classmethod
    def from_form(cls, model, config, frames=None, inertia=None, bundle=None):
        if frames is None:
            frames = forward_kinematics(model, config)
        if inertia is None:
            inertia = aggregate_inertia(model, frames)
        if bundle is None:
            bundle = allocate(model, config, frames, inertia)
        r = bundle.r_cog_c
        return cls(
            qt_c=r.T @ bundle.Qt,
            qr_c=r.T @ bundle.Qr,
            inertia_c=inertia.inertia,
            i_inv_c=np.linalg.inv(inertia.inertia),
            mass=model.total_mass,
            gravity=model.gravity,
        )


def dynamics_step(state, lam, plant, dt, force_c=None, torque_c=None):
    """One RK4 step of the full nonlinear rigid-body dynamics.

    ``lam`` is held constant across the step (zero-order hold).  Optional
    constant disturbances are a body-frame force and torque.  The returned
    attitude is re-projected onto SO(3).
    """
    lam = np.asarray(lam, dtype=float)
    thrust_c = plant.qt_c @ lam
    torque = plant.qr_c @ lam
    if torque_c is not None:
        torque = torque + torque_c
    gravity_w = np.array([0.0, 0.0, -plant.gravity])
    inertia, i_inv = plant.inertia_c, plant.i_inv_c
    mass = plant.mass
    f_body = thrust_c if force_c is None else thrust_c + force_c

    def deriv(r, v, rot, omega):
        v_dot = rot @ f_body / mass + gravity_w
        rot_dot = rot @ hat(omega)
        omega_dot = i_inv @ (torque - np.cross(omega, inertia @ omega))
        return v, v_dot, rot_dot, omega_dot

    r0, v0, rot0, w0 = state.r, state.v, state.rot, state.omega
    k1 = deriv(r0, v0, rot0, w0)
    k2 = deriv(
        r0 + 0.5 * dt * k1[0],
        v0 + 0.5 * dt * k1[1],
        rot0 + 0.5 * dt * k1[2],
        w0 + 0.5 * dt * k1[3],
    )
    k3 = deriv(
        r0 + 0.5 * dt * k2[0],
        v0 + 0.5 * dt * k2[1],
        rot0 + 0.5 * dt * k2[2],
        w0 + 0.5 * dt * k2[3],
    )
    k4 = deriv(
        r0 + dt * k3[0], v0 + dt * k3[1], rot0 + dt * k3[2], w0 + dt * k3[3]
    )
    sixth = dt / 6.0
    return RigidBodyState(
        r=r0 + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        v=v0 + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        rot=orthonormalize(rot0 + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])),
        omega=w0 + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        t=state.t + dt,
    )


@dataclass
class Scenario:
    """Everything needed for one reproducible closed-loop run."""

    name: str = "hover"
    duration: float = 10.0
    q0: tuple = (np.pi / 2, np.pi / 2, np.pi / 2)
    psi0: tuple = None
    joint_waypoints: tuple = ()
    reference: dict = field(default_factory=lambda: {"kind": "hover"})
    control_rate: float = 200.0
    planner_rate: float = 20.0
    dynamics_rate: float = 1000.0
    disturbance_force: tuple = (0.0, 0.0, 0.0)
    disturbance_torque: tuple = (0.0, 0.0, 0.0)
    noise_std: float = 0.0
    seed: int = 0
    servo_lag_tau: float = 0.0
    r0_offset: tuple = (0.0, 0.0, 0.0)
    max_joint_rate: float = 0.25

    def __post_init__(self):
        if min(self.control_rate, self.planner_rate, self.dynamics_rate) <= 0.0:
            raise ValueError("all rates must be positive")
        if self.dynamics_rate < self.control_rate:
            raise ValueError("dynamics must run at least as fast as control")
        waypoints = [(float(t), np.asarray(q, dtype=float)) for t, q in self.joint_waypoints]
        for (t0, a), (t1, b) in zip(waypoints, waypoints[1:]):
            if t1 <= t0:
                raise ValueError("joint waypoint times must increase")
            if np.abs(b - a).max() > self.max_joint_rate * (t1 - t0) + 1e-9:
                raise ValueError("joint waypoints exceed the joint rate limit")


@dataclass
class TelemetryRecord:
    t: float
    r: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    omega: np.ndarray
    r_des: np.ndarray
    yaw_des: float
    lambda_des: np.ndarray
    lambda_s: np.ndarray
    psi: np.ndarray
    q: np.ndarray
    tau_min: float
    alpha_x: float
    alpha_y: float
    saturated: bool


@dataclass
class SimResult:
    records: list
    completed: bool
    abort_reason: str = ""
    final_state: RigidBodyState = None

    def __iter__(self):
        return iter(self.records)


def reference_at(ref, t):
    """(r_des, v_des, a_des, yaw_des, yaw_rate_des) for one reference table."""
    kind = ref.get("kind", "hover")
    if kind == "hover":
        pos = np.asarray(ref.get("position", (0.0, 0.0, 1.0)), dtype=float)
        return pos, np.zeros(3), np.zeros(3), float(ref.get("yaw", 0.0)), 0.0
    if kind == "circle":
        radius = float(ref.get("radius", 1.0))
        period = float(ref.get("period", 30.0))
        center = np.asarray(ref.get("center", (0.0, 0.0, 1.0)), dtype=float)
        yaw0 = float(ref.get("yaw", 0.0))
        turns = float(ref.get("yaw_turns", 0.0))
        omega = 2.0 * np.pi / period
        phase = omega * t
        pos = center + radius * np.array([np.cos(phase), np.sin(phase), 0.0])
        vel = radius * omega * np.array([-np.sin(phase), np.cos(phase), 0.0])
        acc = -radius * omega**2 * np.array([np.cos(phase), np.sin(phase), 0.0])
        # Yaw sweeps ``yaw_turns`` per circle period, so trimming the run
        # duration does not change the yaw rate.
        yaw_rate = 2.0 * np.pi * turns / period
        return pos, vel, acc, yaw0 + yaw_rate * t, yaw_rate
    if kind == "waypoints":
        points = [
            (float(p[0]), np.asarray(p[1:4], dtype=float), float(p[4]))
            for p in ref["points"]
        ]
        if t <= points[0][0]:
            return points[0][1], np.zeros(3), np.zeros(3), points[0][2], 0.0
        for (t0, p0, y0), (t1, p1, y1) in zip(points, points[1:]):
            if t <= t1:
                s = (t - t0) / (t1 - t0)
                vel = (p1 - p0) / (t1 - t0)
                yaw_rate = (y1 - y0) / (t1 - t0)
                return p0 + s * (p1 - p0), vel, np.zeros(3), y0 + s * (y1 - y0), yaw_rate
        return points[-1][1], np.zeros(3), np.zeros(3), points[-1][2], 0.0
    raise ValueError(f"unknown reference kind: {kind!r}")


def _joints_at(scenario, t):
    waypoints = [(float(tt), np.asarray(q, dtype=float)) for tt, q in scenario.joint_waypoints]
    if not waypoints:
        return np.asarray(scenario.q0, dtype=float)
    if t <= waypoints[0][0]:
        return waypoints[0][1]
    for (t0, a), (t1, b) in zip(waypoints, waypoints[1:]):
        if t <= t1:
            return a + (b - a) * ((t - t0) / (t1 - t0))
    return waypoints[-1][1]


def run_scenario(
    model,
    scenario,
    lqi=None,
    position_gains=None,
    plan_weights=None,
    plan_constraints=None,
    limits=None,
):
    """Execute one scenario; planner, controller, and plant run at their
    configured rates and telemetry is recorded at the control rate.

    Returns a SimResult; planning failures and rank-deficient forms abort
    the run with the telemetry gathered so far and a nonzero reason.
    """
    plan_weights = plan_weights or PlanWeights()
    plan_constraints = plan_constraints or PlanConstraints()
    controller = CascadeController(model, lqi, position_gains, limits)
    rng = np.random.default_rng(scenario.seed)

    q_cmd = np.asarray(scenario.q0, dtype=float)
    q_act = q_cmd.copy()
    if scenario.psi0 is not None:
        psi_cmd = np.asarray(scenario.psi0, dtype=float)
        plan_tau = tau_min_report(
            torque_basis(model, Configuration(q_act, psi_cmd))
        ).tau_min
    else:
        plan = optimize_vectoring(
            model, q_act, plan_weights, plan_constraints, seed=scenario.seed
        )
        psi_cmd = plan.psi_bar
        plan_tau = plan.tau_min
    psi_act = psi_cmd.copy()

    config = Configuration(q_act, psi_act)
    frames = forward_kinematics(model, config)
    inertia = aggregate_inertia(model, frames)
    bundle = allocate(model, config, frames, inertia)
    plant = PlantParams.from_form(model, config, frames, inertia, bundle)
    controller.set_form(bundle, inertia)

    r_des0, _, _, yaw0, _ = reference_at(scenario.reference, 0.0)
    state = RigidBodyState(
        r=r_des0 + np.asarray(scenario.r0_offset, dtype=float),
        v=np.zeros(3),
        rot=rot_z(yaw0) @ bundle.r_cog_c,
        omega=np.zeros(3),
        t=0.0,
    )

    dt_control = 1.0 / scenario.control_rate
    n_sub = max(int(round(scenario.dynamics_rate / scenario.control_rate)), 1)
    dt_dyn = dt_control / n_sub
    planner_every = max(int(round(scenario.control_rate / scenario.planner_rate)), 1)
    n_ticks = int(round(scenario.duration * scenario.control_rate))
    force_dist = np.asarray(scenario.disturbance_force, dtype=float)
    torque_dist = np.asarray(scenario.disturbance_torque, dtype=float)
    has_torque = np.any(torque_dist != 0.0)

    records = []
    completed = True
    abort_reason = ""
    warm_psi = psi_cmd
    last_planned_q = q_act.copy()
    q_built, psi_built = q_act.copy(), psi_act.copy()

    for tick in range(n_ticks):
        t = tick * dt_control

        if tick % planner_every == 0 and tick > 0:
            q_cmd = _joints_at(scenario, t)
            if not np.array_equal(q_cmd, last_planned_q):
                try:
                    plan = optimize_vectoring(
                        model,
                        q_cmd,
                        plan_weights,
                        plan_constraints,
                        warm_start=warm_psi,
                        seed=scenario.seed,
                    )
                except (Infeasible, OptimizerStalled, PlanBreak) as exc:
                    completed = False
                    abort_reason = f"planning failed at t={t:.3f}s: {exc}"
                    break
                psi_cmd = plan.psi_bar
                plan_tau = plan.tau_min
                warm_psi = psi_cmd
                last_planned_q = q_cmd.copy()

        if scenario.servo_lag_tau > 0.0:
            blend = 1.0 - np.exp(-dt_control / scenario.servo_lag_tau)
            q_act = q_act + blend * (q_cmd - q_act)
            psi_act = psi_act + blend * (psi_cmd - psi_act)
            # Gains and mass properties are refreshed once the servos have
            # moved appreciably, not at every control tick.
            stale = max(
                np.abs(q_act - q_built).max(), np.abs(psi_act - psi_built).max()
            )
            form_changed = stale > 0.02
        else:
            form_changed = not (
                np.array_equal(q_act, q_cmd) and np.array_equal(psi_act, psi_cmd)
            )
            q_act, psi_act = q_cmd.copy(), psi_cmd.copy()

        if form_changed:
            config = Configuration(q_act, psi_act)
            frames = forward_kinematics(model, config)
            inertia = aggregate_inertia(model, frames)
            bundle = allocate(model, config, frames, inertia)
            plant = PlantParams.from_form(model, config, frames, inertia, bundle)
            try:
                controller.set_form(bundle, inertia)
            except RankDeficientQr as exc:
                completed = False
                abort_reason = f"controller lost rank at t={t:.3f}s: {exc}"
                break
            q_built, psi_built = q_act.copy(), psi_act.copy()

        r_des, v_des, a_des, yaw_des, yaw_rate_des = reference_at(
            scenario.reference, t
        )
        r_world_cog = state.rot @ bundle.r_cog_c.T
        omega_cog = bundle.r_cog_c @ state.omega
        try:
            lam, info = controller.step(
                state.r,
                state.v,
                r_world_cog,
                omega_cog,
                {
                    "r_des": r_des,
                    "v_des": v_des,
                    "a_des": a_des,
                    "yaw_des": yaw_des,
                    "yaw_rate_des": yaw_rate_des,
                },
                dt_control,
            )
        except RankDeficientQr as exc:
            completed = False
            abort_reason = f"controller lost rank at t={t:.3f}s: {exc}"
            break

        force_c = force_dist.copy() if np.any(force_dist != 0.0) else None
        if scenario.noise_std > 0.0:
            noise = rng.normal(0.0, scenario.noise_std, size=3)
            force_c = noise if force_c is None else force_c + noise
        torque_c = torque_dist if has_torque else None
        for _ in range(n_sub):
            state = dynamics_step(state, lam, plant, dt_dyn, force_c, torque_c)

        records.append(
            TelemetryRecord(
                t=t + dt_control,
                r=state.r.copy(),
                v=state.v.copy(),
                alpha=np.array(euler_zyx(state.rot @ bundle.r_cog_c.T)),
                omega=(bundle.r_cog_c @ state.omega),
                r_des=r_des,
                yaw_des=yaw_des,
                lambda_des=lam,
                lambda_s=bundle.lambda_s.copy(),
                psi=psi_act.copy(),
                q=q_act.copy(),
                tau_min=plan_tau,
                alpha_x=bundle.alpha_x,
                alpha_y=bundle.alpha_y,
                saturated=info["saturated"],
            )
        )

    if not completed:
        log.warning("scenario %s aborted: %s", scenario.name, abort_reason)
    return SimResult(
        records=records,
        completed=completed,
        abort_reason=abort_reason,
        final_state=state,
    )


def metrics(records):
    """Tracking-error and margin summary over a telemetry list."""
    records = list(records)
    if not records:
        raise EmptyTelemetry("no telemetry records")
    pos_err = np.array([rec.r - rec.r_des for rec in records])
    yaw_err = np.array([wrap_angle(rec.alpha[2] - rec.yaw_des) for rec in records])
    psis = np.array([rec.psi for rec in records])
    psi_steps = np.abs(np.diff(psis, axis=0)).max() if len(psis) > 1 else 0.0
    return {
        "pos_rms": np.sqrt((pos_err**2).mean(axis=0)).tolist(),
        "pos_max": np.abs(pos_err).max(axis=0).tolist(),
        "yaw_rms": float(np.sqrt((yaw_err**2).mean())),
        "yaw_max": float(np.abs(yaw_err).max()),
        "tau_min_min": float(min(rec.tau_min for rec in records)),
        "psi_step_max": float(psi_steps),
        "saturation_fraction": float(
            sum(rec.saturated for rec in records) / len(records)
        ),
        "duration": records[-1].t,
        "samples": len(records),
    }


TELEMETRY_COLUMNS = (
    ["t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw"]
    + ["wx", "wy", "wz", "x_des", "y_des", "z_des", "yaw_des"]
)


def telemetry_columns(n_links):
    cols = list(TELEMETRY_COLUMNS)
    cols += [f"lambda_des_{i+1}" for i in range(n_links)]
    cols += [f"lambda_s_{i+1}" for i in range(n_links)]
    cols += [f"psi_{i+1}" for i in range(n_links)]
    cols += [f"q_{i+1}" for i in range(n_links - 1)]
    cols += ["tau_min", "alpha_x", "alpha_y", "saturated"]
    return cols


def write_telemetry_csv(records, path):
    """One row per control tick, in the documented column order."""
    records = list(records)
    if not records:
        raise EmptyTelemetry("no telemetry records")
    n = records[0].lambda_des.shape[0]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(telemetry_columns(n))
        for rec in records:
            row = (
                [rec.t]
                + rec.r.tolist()
                + rec.v.tolist()
                + rec.alpha.tolist()
                + rec.omega.tolist()
                + rec.r_des.tolist()
                + [rec.yaw_des]
                + rec.lambda_des.tolist()
                + rec.lambda_s.tolist()
                + rec.psi.tolist()
                + rec.q.tolist()
                + [rec.tau_min, rec.alpha_x, rec.alpha_y, int(rec.saturated)]
            )
            writer.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in row])
