"""Cascaded near-hover flight control.

The attitude loop is an LQI regulator on the nine-dimensional error state
[e_x, de_x, e_y, de_y, e_z, de_z, int e_x, int e_y, int e_z] built from the
linearized rotational dynamics of the current form.  Its input weight adds
Qt' W2 Qt on top of the usual effort penalty so attitude corrections avoid
producing net translational force, which for this vehicle is the channel
through which attitude control would otherwise disturb position.

The position loop is PID on the CoG position; its output force demand is
converted to desired roll/pitch plus a collective thrust rescaling of the
static hover thrust, and the two thrust contributions sum per rotor.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.signal import place_poles

from .geometry import euler_zyx, rot_z, wrap_angle
from .model import GRAVITY


class SingularInertia(Exception):
    """The inertia matrix cannot be inverted."""


class AREFailed(Exception):
    """Riccati iteration failed to converge or the pair is not stabilizable."""


class RankDeficientQr(Exception):
    """The torque allocation lost rank; an unresolved singular form reached
    the controller."""


class ZeroThrustDemand(Exception):
    """Total force demand vanished; no attitude can be extracted."""


@dataclass
class LQIWeights:
    """Diagonal LQI weights; defaults are the flight-tested values."""

    m_diag: tuple = (1100.0, 80.0, 1100.0, 80.0, 100.0, 50.0, 10.0, 10.0, 0.5)
    w1_diag: tuple = (1.0, 1.0, 1.0, 1.0)
    w2_diag: tuple = (20.0, 20.0, 20.0)

    def state_weight(self):
        return np.diag(self.m_diag)

    def input_weight(self, qt):
        """N = W1 + Qt^T W2 Qt for the current force allocation."""
        qt = np.asarray(qt)
        return np.diag(self.w1_diag) + qt.T @ np.diag(self.w2_diag) @ qt


@dataclass
class PositionGains:
    kp: tuple = (2.3, 2.3, 3.6)
    ki: tuple = (0.02, 0.02, 3.4)
    kd: tuple = (4.0, 4.0, 1.55)

    def __post_init__(self):
        if min(min(self.kp), min(self.ki), min(self.kd)) < 0.0:
            raise ValueError("position gains must be nonnegative")


@dataclass
class AttitudeGains:
    k_x: np.ndarray
    riccati_p: np.ndarray
    residual: float


def build_state_matrices(i_sigma, qr):
    """State matrices of the linearized attitude-error dynamics.

    A wires the error/rate/integral chains, B carries -I^-1 Qr into the
    rate-error rows (the error shrinks when torque is applied), and D
    injects the gyroscopic acceleration into the same rows.
    """
    i_sigma = np.asarray(i_sigma, dtype=float)
    qr = np.asarray(qr, dtype=float)
    svals = np.linalg.svd(i_sigma, compute_uv=False)
    if svals[-1] <= 1e-12 * svals[0]:
        raise SingularInertia("inertia matrix is singular")
    body_gain = np.linalg.solve(i_sigma, qr)

    n = qr.shape[1]
    a = np.zeros((9, 9))
    a[0, 1] = a[2, 3] = a[4, 5] = 1.0
    a[6, 0] = a[7, 2] = a[8, 4] = 1.0
    b = np.zeros((9, n))
    b[1] = -body_gain[0]
    b[3] = -body_gain[1]
    b[5] = -body_gain[2]
    d = np.zeros((9, 3))
    d[1, 0] = d[3, 1] = d[5, 2] = 1.0
    return a, b, d


def _stabilizing_gain(a, b):
    """Initial gain with A - B K Hurwitz, via pole placement.

    B is reduced to its column space first so rank-deficient input maps
    (four rotors but only three torque axes) stay well posed.
    """
    n = a.shape[0]
    if np.all(np.linalg.eigvals(a).real < 0.0):
        return np.zeros((b.shape[1], n))
    u, s, vt = np.linalg.svd(b, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    bu = u[:, :rank]
    mixing = s[:rank, None] * vt[:rank]
    poles = -1.0 - 0.35 * np.arange(n)
    try:
        placed = place_poles(a, bu, poles)
    except ValueError as exc:
        raise AREFailed(f"could not stabilize the pair: {exc}") from exc
    return np.linalg.pinv(mixing) @ placed.gain_matrix


def solve_lqi_gain(a, b, state_weight, input_weight, max_iter=80, residual_tol=1e-8):
    """LQR/LQI gain via Newton-Kleinman iteration on the Riccati equation.

    Starting from a stabilizing gain, each step solves the Lyapunov
    equation of the closed loop and refreshes K = N^-1 B^T P.  Near the
    floating-point floor the iterates dither, so the best-residual pair is
    kept.  Returns gains for the convention u = -K x.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = np.asarray(state_weight, dtype=float)
    n_in = np.asarray(input_weight, dtype=float)

    def riccati_residual(p):
        return float(
            np.linalg.norm(
                a.T @ p + p @ a - p @ b @ np.linalg.solve(n_in, b.T @ p) + m
            )
        )

    k = _stabilizing_gain(a, b)
    best = None
    for _ in range(max_iter):
        a_cl = a - b @ k
        try:
            p = scipy.linalg.solve_continuous_lyapunov(
                a_cl.T, -(m + k.T @ n_in @ k)
            )
        except Exception as exc:
            raise AREFailed(f"Lyapunov solve failed: {exc}") from exc
        if not np.all(np.isfinite(p)):
            raise AREFailed("Riccati iteration diverged")
        p = 0.5 * (p + p.T)
        residual = riccati_residual(p)
        if best is None or residual < best[0]:
            best = (residual, p)
        k = np.linalg.solve(n_in, b.T @ p)
        if residual < 0.1 * residual_tol:
            break
    residual, p = best
    if residual > residual_tol:
        raise AREFailed(f"Riccati residual {residual:.2e} above tolerance")
    k = np.linalg.solve(n_in, b.T @ p)
    if np.any(np.linalg.eigvals(a - b @ k).real >= 0.0):
        raise AREFailed("closed loop is not Hurwitz")
    return AttitudeGains(k_x=k, riccati_p=p, residual=residual)


def attitude_control(x, omega, i_sigma, qr, gains):
    """Rotor thrusts from attitude error feedback plus gyroscopic feedforward.

    The feedforward resolves omega x (I omega) through the pseudo-inverse
    of the torque allocation, which must have full row rank.
    """
    qr = np.asarray(qr, dtype=float)
    svals = np.linalg.svd(qr, compute_uv=False)
    if svals[-1] < 1e-8 * svals[0]:
        raise RankDeficientQr("torque allocation is rank deficient")
    omega = np.asarray(omega, dtype=float)
    gyro = np.cross(omega, np.asarray(i_sigma) @ omega)
    return -gains.k_x @ np.asarray(x, dtype=float) + np.linalg.pinv(qr) @ gyro


def position_control(e_r, e_r_dot, e_r_int, accel_ff, gains, total_mass):
    """PID force demand (gravity excluded; the hover balance is carried by
    the collective-thrust path)."""
    return total_mass * (
        np.asarray(gains.kp) * e_r
        + np.asarray(gains.ki) * e_r_int
        + np.asarray(gains.kd) * e_r_dot
        + accel_ff
    )


def desired_attitude(f_total, yaw):
    """Desired roll/pitch aligning the thrust axis with the total force demand.

    ``f_total`` must already include the weight term; it is expressed in
    the yaw-aligned frame before extracting the two angles.
    """
    f_total = np.asarray(f_total, dtype=float)
    if np.linalg.norm(f_total) < 1e-12:
        raise ZeroThrustDemand("total force demand is zero")
    f = rot_z(-yaw) @ f_total
    alpha_x_des = np.arctan2(-f[1], np.hypot(f[0], f[2]))
    alpha_y_des = np.arctan2(f[0], f[2])
    return float(alpha_x_des), float(alpha_y_des)


def collective_thrust(f_total, r_world_cog, lambda_s, total_mass, gravity=GRAVITY):
    """Scale the static thrust by the force demand along the body thrust axis.

    Because lambda_s produces zero torque, any multiple of it changes only
    the collective force, so the position loop cannot disturb attitude.
    """
    f_t = float((np.asarray(r_world_cog) @ np.array([0.0, 0.0, 1.0])) @ f_total)
    return np.asarray(lambda_s) * (f_t / (total_mass * gravity))


@dataclass
class ControlLimits:
    """Anti-windup clamps and the thrust saturation bound handling."""

    attitude_integral_limit: float = 0.5
    position_integral_limit: float = 10.0


class CascadeController:
    """Stateful position + attitude cascade for one vehicle.

    Holds the integrator states and the gains synthesized for the current
    form; call :meth:`set_form` whenever the joint or vectoring angles
    change so the allocation, inertia, and LQI gain stay in sync.
    """

    def __init__(self, model, lqi=None, position_gains=None, limits=None):
        self.model = model
        self.lqi = lqi or LQIWeights()
        self.position_gains = position_gains or PositionGains()
        self.limits = limits or ControlLimits()
        self.att_integral = np.zeros(3)
        self.pos_integral = np.zeros(3)
        self.bundle = None
        self.inertia_cog = None
        self.gains = None
        self.saturation_events = 0
        self.steps = 0

    def set_form(self, bundle, inertia):
        """Synthesize gains for a new allocation/inertia pair."""
        r = bundle.r_cog_c
        self.inertia_cog = r @ inertia.inertia @ r.T
        a, b, _ = build_state_matrices(self.inertia_cog, bundle.Qr)
        n_total = self.lqi.input_weight(bundle.Qt)
        self.gains = solve_lqi_gain(a, b, self.lqi.state_weight(), n_total)
        self.bundle = bundle

    def reset(self):
        self.att_integral[:] = 0.0
        self.pos_integral[:] = 0.0
        self.saturation_events = 0
        self.steps = 0

    def step(self, r, v, r_world_cog, omega_cog, refs, dt):
        """One control tick; returns (thrust commands, diagnostics dict).

        ``refs`` carries r_des, v_des, a_des, yaw_des, yaw_rate_des.
        Integrators advance with ``dt`` under their anti-windup clamps and
        thrusts are clamped to [0, lambda_max] with saturation counted.
        """
        model = self.model
        bundle = self.bundle
        e_r = refs["r_des"] - r
        e_r_dot = refs.get("v_des", np.zeros(3)) - v
        lim = self.limits.position_integral_limit
        self.pos_integral = np.clip(self.pos_integral + e_r * dt, -lim, lim)
        f_des = position_control(
            e_r,
            e_r_dot,
            self.pos_integral,
            refs.get("a_des", np.zeros(3)),
            self.position_gains,
            model.total_mass,
        )
        f_total = f_des + np.array([0.0, 0.0, model.total_mass * model.gravity])

        roll, pitch, yaw = euler_zyx(r_world_cog)
        alpha_x_des, alpha_y_des = desired_attitude(f_total, yaw)
        e_att = np.array(
            [
                alpha_x_des - roll,
                alpha_y_des - pitch,
                wrap_angle(refs["yaw_des"] - yaw),
            ]
        )
        e_rate = np.array([0.0, 0.0, refs.get("yaw_rate_des", 0.0)]) - omega_cog
        lim = self.limits.attitude_integral_limit
        self.att_integral = np.clip(self.att_integral + e_att * dt, -lim, lim)
        x = np.array(
            [
                e_att[0],
                e_rate[0],
                e_att[1],
                e_rate[1],
                e_att[2],
                e_rate[2],
                self.att_integral[0],
                self.att_integral[1],
                self.att_integral[2],
            ]
        )
        lam_att = attitude_control(
            x, omega_cog, self.inertia_cog, bundle.Qr, self.gains
        )
        lam_pos = collective_thrust(
            f_total, r_world_cog, bundle.lambda_s, model.total_mass, model.gravity
        )
        lam = lam_att + lam_pos
        clamped = np.clip(lam, 0.0, model.lambda_max)
        saturated = bool(np.any(clamped != lam))
        self.saturation_events += int(saturated)
        self.steps += 1
        return clamped, {
            "lambda_att": lam_att,
            "lambda_pos": lam_pos,
            "f_des": f_des,
            "alpha_des": (alpha_x_des, alpha_y_des),
            "attitude_error": e_att,
            "saturated": saturated,
        }
