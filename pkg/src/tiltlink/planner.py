"""Vectoring-angle optimization and deformation planning.

For fixed joint angles the planner searches the vectoring angles for the
best compromise between rotational controllability (the guaranteed minimum
control torque), hover efficiency (small static-thrust norm), and control
margin (small spread between the static thrusts), while keeping the hover
attitude of the link plane nearly level.  During deformation each solve is
warm started from the previous answer inside a +/- delta_psi box so the
vectoring servos move continuously.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .allocation import SingularAllocation, allocate
from .feasibility import tau_min, torque_basis
from .geometry import wrap_angle
from .model import Configuration, aggregate_inertia, forward_kinematics


class Infeasible(Exception):
    """No vectoring angles in the search region satisfy the constraints."""


class OptimizerStalled(Exception):
    """Iteration budget exhausted without a constraint-satisfying point."""


class InfeasibleDesign(Exception):
    """The tilt-angle design constraints admit no solution."""


class PlanBreak(Exception):
    """A deformation step could not be planned.

    Carries the failing time and joint vector plus the partial trace, so a
    caller can report exactly where the deformation becomes impossible.
    """

    def __init__(self, t, q, reason, partial=None):
        super().__init__(f"planning broke at t={t:.3f}s (q={np.round(q, 4)}): {reason}")
        self.t = t
        self.q = np.asarray(q)
        self.reason = reason
        self.partial = partial


@dataclass(frozen=True)
class PlanWeights:
    """Positive weights for controllability / efficiency / margin terms.

    ``variance_floor`` (N^2) bounds the thrust-spread term w3/var so that
    near-identical static thrusts cannot dominate the torque-margin term;
    below the floor the spread is already immaterial for control margin.
    """

    w1: float = 1.0
    w2: float = 2.0
    w3: float = 0.01
    variance_floor: float = 1.0

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3) <= 0.0:
            raise ValueError("planner weights must be positive")
        if self.variance_floor <= 0.0:
            raise ValueError("variance floor must be positive")


@dataclass(frozen=True)
class PlanConstraints:
    alpha_min: float = -0.01
    alpha_max: float = 0.01
    delta_psi: float = 0.2
    tolerance: float = 1e-5
    max_iterations: int = 200
    #: Constraint violation above this (rad) makes a result infeasible.
    alpha_tolerance: float = 1e-4
    #: A warm-started tau_min below this fraction of the trace's initial
    #: value is treated as a collapse (the deformation path is invalid).
    tau_collapse_ratio: float = 0.10

    def __post_init__(self):
        if self.alpha_min >= self.alpha_max:
            raise ValueError("alpha_min must be below alpha_max")
        if self.delta_psi <= 0.0:
            raise ValueError("delta_psi must be positive")


@dataclass
class PlanResult:
    psi_bar: np.ndarray
    objective: float
    tau_min: float
    lambda_s: np.ndarray
    alpha: tuple
    feasible: bool
    iterations: int


@dataclass
class PlanStep:
    t: float
    q: np.ndarray
    result: PlanResult
    warm_started: bool
    active_constraints: list


@dataclass
class PlanTrace:
    steps: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)

    @property
    def tau_min_floor(self):
        return min(s.result.tau_min for s in self.steps)

    @property
    def max_psi_step(self):
        psis = np.array([s.result.psi_bar for s in self.steps])
        if len(psis) < 2:
            return 0.0
        return float(np.abs(np.diff(psis, axis=0)).max())


_PENALTY = -1.0e3


class _FormContext:
    """Cached per-joint-vector quantities for fast objective evaluation.

    For fixed joints only the thrust directions depend on the vectoring
    angles, so kinematics, mass properties, and rotor positions are built
    once and each candidate costs a handful of small dense operations.
    """

    def __init__(self, model, q):
        config = Configuration(q, np.zeros(model.n_links))
        frames = forward_kinematics(model, config)
        inertia = aggregate_inertia(model, frames)
        self.model = model
        self.q = np.asarray(q, dtype=float)
        self.link_rot = frames.link_rot
        self.p_rel = frames.rotor_pos - inertia.cog_origin
        self.kappa = np.asarray(model.drag_ratios)
        self.sin_beta = np.sin(model.tilt_beta)
        self.cos_beta = np.cos(model.tilt_beta)
        self.weight_force = model.total_mass * model.gravity
        self.lambda_max = model.lambda_max
        n = model.n_links
        self.pair_i, self.pair_j = np.triu_indices(n, k=1)
        # COBYLA probes the objective and each constraint at the same
        # point back to back; memoize the last evaluation.
        self._cache_key = None
        self._cache_value = None

    def wrench_columns(self, psi):
        local = np.empty((self.model.n_links, 3))
        local[:, 0] = self.sin_beta * np.cos(psi)
        local[:, 1] = self.sin_beta * np.sin(psi)
        local[:, 2] = self.cos_beta
        f_cols = np.einsum("nij,nj->ni", self.link_rot, local)
        tau_cols = np.cross(self.p_rel, f_cols) + self.kappa[:, None] * f_cols
        return f_cols, tau_cols

    def tau_min(self, tau_cols):
        vi, vj = tau_cols[self.pair_i], tau_cols[self.pair_j]
        normals = np.cross(vi, vj)
        lengths = np.linalg.norm(normals, axis=1)
        scale = np.linalg.norm(vi, axis=1) * np.linalg.norm(vj, axis=1)
        valid = lengths > 1e-9 * scale
        if not np.any(valid):
            return 0.0
        units = normals[valid] / lengths[valid, None]
        proj = self.lambda_max * (units @ tau_cols.T)
        d_pos = np.clip(proj, 0.0, None).sum(axis=1)
        d_neg = np.clip(-proj, 0.0, None).sum(axis=1)
        return float(min(d_pos.min(), d_neg.min()))

    def evaluate(self, psi, weights):
        """(objective, tau_min, lambda_s, (alpha_x, alpha_y)) for one psi."""
        key = (np.asarray(psi).tobytes(), id(weights))
        if key == self._cache_key:
            return self._cache_value
        result = self._evaluate(psi, weights)
        self._cache_key = key
        self._cache_value = result
        return result

    def _evaluate(self, psi, weights):
        f_cols, tau_cols = self.wrench_columns(psi)
        stack = np.empty((4, self.model.n_links))
        stack[0] = f_cols[:, 2]
        stack[1:] = tau_cols.T
        svals = np.linalg.svd(stack, compute_uv=False)
        if svals[-1] < 1e-8 * svals[0]:
            return _PENALTY, 0.0, None, (0.0, 0.0)
        if stack.shape[1] == 4:
            lam_dash = np.linalg.solve(stack, _RHS_UNIT_Z)
        else:
            lam_dash = np.linalg.lstsq(stack, _RHS_UNIT_Z, rcond=None)[0]
        force = lam_dash @ f_cols
        lam_s = (self.weight_force / np.linalg.norm(force)) * lam_dash
        alpha_x = float(np.arctan2(force[1], force[2]))
        alpha_y = float(np.arctan2(-force[0], np.hypot(force[1], force[2])))
        tau = self.tau_min(tau_cols)
        variance = max(float(np.var(lam_s)), weights.variance_floor)
        objective = (
            weights.w1 * tau
            + weights.w2 / float(np.linalg.norm(lam_s))
            + weights.w3 / variance
        )
        return objective, tau, lam_s, (alpha_x, alpha_y)


_RHS_UNIT_Z = np.array([1.0, 0.0, 0.0, 0.0])


def evaluate_candidate(model, q, psi, weights):
    """Objective value and diagnostics for one set of vectoring angles.

    Returns (objective, tau_min, lambda_s, (alpha_x, alpha_y)).  Forms where
    the hover allocation is singular score a large penalty so local search
    moves away from them.  This is the reference implementation built on
    the allocation and feasibility modules; the optimizer runs a cached
    equivalent (`_FormContext.evaluate`) that must agree with it.
    """
    config = Configuration(q, psi)
    frames = forward_kinematics(model, config)
    inertia = aggregate_inertia(model, frames)
    try:
        bundle = allocate(model, config, frames, inertia)
    except SingularAllocation:
        return _PENALTY, 0.0, None, (0.0, 0.0)
    report = tau_min(torque_basis(model, config, frames, inertia))
    lam = bundle.lambda_s
    variance = max(float(np.var(lam)), weights.variance_floor)
    objective = (
        weights.w1 * report.tau_min
        + weights.w2 / float(np.linalg.norm(lam))
        + weights.w3 / variance
    )
    return objective, report.tau_min, lam, (bundle.alpha_x, bundle.alpha_y)


def _alpha_constraints(context, weights, constraints):
    def alpha_of(psi):
        _, _, _, alpha = context.evaluate(psi, weights)
        return alpha

    return [
        {"type": "ineq", "fun": lambda p: alpha_of(p)[0] - constraints.alpha_min},
        {"type": "ineq", "fun": lambda p: constraints.alpha_max - alpha_of(p)[0]},
        {"type": "ineq", "fun": lambda p: alpha_of(p)[1] - constraints.alpha_min},
        {"type": "ineq", "fun": lambda p: constraints.alpha_max - alpha_of(p)[1]},
    ]


def _box_constraints(center, half_width):
    cons = []
    for i in range(center.shape[0]):
        cons.append(
            {"type": "ineq", "fun": lambda p, i=i: p[i] - (center[i] - half_width)}
        )
        cons.append(
            {"type": "ineq", "fun": lambda p, i=i: (center[i] + half_width) - p[i]}
        )
    return cons


def _local_solve(context, weights, constraints, x0, box_center=None, rhobeg=0.5):
    """One COBYLA descent on the negated objective; returns (psi, nfev)."""
    cons = _alpha_constraints(context, weights, constraints)
    if box_center is not None:
        cons += _box_constraints(box_center, constraints.delta_psi)

    def cost(psi):
        value, _, _, _ = context.evaluate(psi, weights)
        return -value

    res = minimize(
        cost,
        np.asarray(x0, dtype=float),
        method="COBYLA",
        constraints=cons,
        options={
            "rhobeg": rhobeg,
            "maxiter": constraints.max_iterations,
            "tol": constraints.tolerance,
        },
    )
    psi = res.x
    if box_center is not None:
        psi = np.clip(
            psi, box_center - constraints.delta_psi, box_center + constraints.delta_psi
        )
    return psi, int(res.get("nfev", constraints.max_iterations))


def _score(context, psi, weights, constraints):
    """Re-evaluate a candidate at its final point and check feasibility."""
    objective, tau, lam, alpha = context.evaluate(psi, weights)
    tol = constraints.alpha_tolerance
    alpha_ok = all(
        constraints.alpha_min - tol <= a <= constraints.alpha_max + tol for a in alpha
    )
    feasible = alpha_ok and lam is not None and bool(np.all(lam > 0.0))
    return PlanResult(
        psi_bar=np.asarray(psi, dtype=float),
        objective=objective,
        tau_min=tau,
        lambda_s=lam,
        alpha=alpha,
        feasible=feasible,
        iterations=0,
    )


def _global_seeds(n_rotors, seed=0):
    """Multi-start seeds: a 16-point lattice over the vectoring torus."""
    if n_rotors == 4:
        half = np.pi / 2.0
        lattice = np.array(
            [
                [s0, s1, s2, s3]
                for s0 in (-half, half)
                for s1 in (-half, half)
                for s2 in (-half, half)
                for s3 in (-half, half)
            ]
        )
        return lattice
    rng = np.random.default_rng(seed)
    return rng.uniform(-np.pi, np.pi, size=(16, n_rotors))


def optimize_vectoring(model, q, weights=None, constraints=None, warm_start=None, seed=0):
    """Best vectoring angles for joint vector ``q``.

    Without a warm start a global search runs from 16 lattice seeds plus
    the reversed version of the best one; with a warm start a single local
    solve is confined to the +/- delta_psi box around it (the temporal
    continuity constraint).  Raises Infeasible when no candidate meets the
    attitude constraints, OptimizerStalled when the iteration budget ran
    out on a near-feasible candidate.
    """
    weights = weights or PlanWeights()
    constraints = constraints or PlanConstraints()
    q = np.asarray(q, dtype=float)
    context = _FormContext(model, q)

    best = None
    best_key = None
    evals = 0

    def consider(psi, warm_ref=None):
        nonlocal best, best_key
        result = _score(context, psi, weights, constraints)
        anchor = warm_ref if warm_ref is not None else np.zeros_like(result.psi_bar)
        key = (
            not result.feasible,
            -result.objective,
            float(np.abs(result.psi_bar - anchor).max()),
            tuple(result.psi_bar),
        )
        if best_key is None or key < best_key:
            best, best_key = result, key

    if warm_start is not None:
        center = np.asarray(warm_start, dtype=float)
        psi, nfev = _local_solve(
            context,
            weights,
            constraints,
            center,
            box_center=center,
            rhobeg=constraints.delta_psi / 2.0,
        )
        evals += nfev
        consider(psi, warm_ref=center)
    else:
        for x0 in _global_seeds(model.n_links, seed):
            psi, nfev = _local_solve(context, weights, constraints, x0)
            evals += nfev
            consider(wrap_angle(psi))
        # The reversed-vectoring twin often competes; polish it too.
        dual_seed = dual_solution(best.psi_bar)
        psi, nfev = _local_solve(context, weights, constraints, dual_seed)
        evals += nfev
        consider(wrap_angle(psi))
        # COBYLA can stop short on this kinked objective; one restart at
        # the incumbent with a fresh trust region recovers the last bit.
        psi, nfev = _local_solve(
            context, weights, constraints, best.psi_bar, rhobeg=0.1
        )
        evals += nfev
        consider(wrap_angle(psi))

    best.iterations = evals
    if not best.feasible:
        if best.lambda_s is None:
            raise Infeasible(f"no hover-capable vectoring angles found for q={q}")
        worst = max(
            constraints.alpha_min - min(best.alpha),
            max(best.alpha) - constraints.alpha_max,
        )
        if worst > constraints.alpha_tolerance:
            raise Infeasible(
                f"attitude constraint violated by {worst:.2e} rad for q={q}"
            )
        raise OptimizerStalled(
            f"optimizer stopped before satisfying constraints for q={q}"
        )
    return best


def dual_solution(psi_bar):
    """The reversed-vectoring twin: every angle advanced by pi, wrapped."""
    return wrap_angle(np.asarray(psi_bar, dtype=float) + np.pi)


def detect_corner_case(model, q, weights=None, constraints=None, threshold=1e-6):
    """Check whether the reversed twin of the optimum loses controllability.

    Returns (is_corner, tau_primal, tau_dual).  A form is a corner case
    when the optimized angles give a solid torque margin but reversing all
    vectoring angles collapses it below 5% of the primal value; such forms
    block deformation paths that would need to swap between the twins.
    """
    weights = weights or PlanWeights()
    constraints = constraints or PlanConstraints()
    primal = optimize_vectoring(model, q, weights, constraints)
    twin = dual_solution(primal.psi_bar)
    report = tau_min(torque_basis(model, Configuration(q, twin)))
    is_corner = primal.tau_min > threshold and report.tau_min < 0.05 * primal.tau_min
    return is_corner, primal.tau_min, report.tau_min


def plan_deformation(
    model,
    joint_schedule,
    weights=None,
    constraints=None,
    max_joint_rate=0.25,
    seed=0,
):
    """Plan vectoring angles along a time-stamped joint schedule.

    The first form is solved globally; every later step is warm started
    from its predecessor so consecutive vectoring angles differ by at most
    delta_psi per element.  Raises PlanBreak (with the partial trace) when
    a step is infeasible or its torque margin collapses relative to the
    initial form.
    """
    weights = weights or PlanWeights()
    constraints = constraints or PlanConstraints()

    schedule = [(float(t), np.asarray(q, dtype=float)) for t, q in joint_schedule]
    if not schedule:
        raise ValueError("empty joint schedule")
    for (t0, q0), (t1, q1) in zip(schedule, schedule[1:]):
        if t1 <= t0:
            raise ValueError("schedule times must increase")
        if np.abs(q1 - q0).max() > max_joint_rate * (t1 - t0) + 1e-9:
            raise ValueError(
                f"joint step at t={t1:.3f}s exceeds {max_joint_rate} rad/s"
            )

    trace = PlanTrace()
    previous = None
    tau_floor = None
    for t, q in schedule:
        warm = previous.psi_bar if previous is not None else None
        if previous is not None and trace.steps and np.array_equal(
            q, trace.steps[-1].q
        ):
            # Stationary joints: the previous optimum stays optimal.
            result = previous
        else:
            try:
                result = optimize_vectoring(
                    model, q, weights, constraints, warm_start=warm, seed=seed
                )
            except (Infeasible, OptimizerStalled, SingularAllocation) as exc:
                raise PlanBreak(t, q, str(exc), partial=trace) from exc
        if tau_floor is None:
            tau_floor = constraints.tau_collapse_ratio * result.tau_min
        elif result.tau_min < tau_floor:
            raise PlanBreak(
                t,
                q,
                f"torque margin collapsed to {result.tau_min:.3e} N*m "
                f"(floor {tau_floor:.3e})",
                partial=trace,
            )
        trace.steps.append(
            PlanStep(
                t=t,
                q=q,
                result=result,
                warm_started=warm is not None,
                active_constraints=_active_constraints(result, warm, constraints),
            )
        )
        previous = result
    return trace


def _active_constraints(result, warm, constraints, slack=1e-6):
    active = []
    for name, value in (("alpha_x", result.alpha[0]), ("alpha_y", result.alpha[1])):
        if value - constraints.alpha_min <= slack:
            active.append(f"{name}_min")
        if constraints.alpha_max - value <= slack:
            active.append(f"{name}_max")
    if warm is not None:
        gap = constraints.delta_psi - np.abs(result.psi_bar - np.asarray(warm))
        for i in np.nonzero(gap <= slack)[0]:
            active.append(f"psi_{i}_box")
    return active


def linear_joint_schedule(q_start, q_end, joint_rate=0.25, planner_rate=20.0, t0=0.0):
    """Dense (t, q) schedule moving all joints together at ``joint_rate``."""
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    span = float(np.abs(q_end - q_start).max())
    duration = span / joint_rate
    steps = max(int(np.ceil(duration * planner_rate)), 1)
    times = np.linspace(0.0, duration, steps + 1)
    return [
        (t0 + t, q_start + (q_end - q_start) * (t / duration if duration else 1.0))
        for t in times
    ]


def sequential_joint_schedule(
    q_start, q_end, joint_rate=0.25, planner_rate=20.0, t0=0.0
):
    """Dense schedule moving one joint at a time, in index order."""
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    schedule = [(t0, q_start.copy())]
    current = q_start.copy()
    t = t0
    for j in range(q_start.shape[0]):
        target = current.copy()
        target[j] = q_end[j]
        leg = linear_joint_schedule(current, target, joint_rate, planner_rate, t)
        schedule.extend(leg[1:])
        t = schedule[-1][0]
        current = target
    return schedule


def design_tilt_angle(gamma1, gamma2, link_length, prop_cog_distance):
    """Smallest rotor tilt meeting efficiency and line-form torque bounds.

    Minimizing the tilt subject to 1/cos(beta) <= gamma1 (hover thrust
    overhead) and 4*sin(beta)*d/l >= gamma2 (torque about the rotor line
    relative to the normal-form torque scale) makes the torque bound
    active, so beta = arcsin(gamma2 * l / (4 * d)) whenever that angle
    also satisfies the efficiency bound.
    """
    if gamma1 <= 1.0:
        raise ValueError("gamma1 must exceed 1")
    if gamma2 <= 0.0 or link_length <= 0.0 or prop_cog_distance <= 0.0:
        raise ValueError("gamma2, link length, and CoG distance must be positive")
    argument = gamma2 * link_length / (4.0 * prop_cog_distance)
    if argument > 1.0:
        raise InfeasibleDesign(
            f"torque bound needs sin(beta) = {argument:.3f} > 1"
        )
    beta = float(np.arcsin(argument))
    ceiling = float(np.arccos(1.0 / gamma1))
    if beta > ceiling:
        raise InfeasibleDesign(
            f"torque bound needs beta = {beta:.4f} rad but efficiency caps it "
            f"at {ceiling:.4f} rad"
        )
    return beta
