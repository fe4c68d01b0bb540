"""Kinematic bicycle execution and path tracking.

Planned trajectories live in route arc length; execution happens in the plane
with a front-steered bicycle integrated by plain forward Euler. A small
feedback controller keeps the body on the route centerline and the arc-length
progress locked to the plan, since open-loop Euler drift would otherwise
accumulate a few centimeters per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .geometry import RouteSpec, pose_extrapolated

MAX_STEER = 0.6
LATERAL_FAIL = 2.0


class TrackingError(RuntimeError):
    """Vehicle strayed too far from its route to keep simulating."""


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.remainder(a, 2 * math.pi)
    return a if a != -math.pi else math.pi


@dataclass
class BicycleState:
    """Center-of-body planar pose and speed."""
    x: float
    y: float
    psi: float
    v: float


def bicycle_step(state: BicycleState, accel: float, steer: float, dt: float,
                 wheelbase: float, n_substeps: int = 1) -> BicycleState:
    """Forward-Euler step of the front-steered bicycle.

    Speed is kept non-negative by clamping the applied deceleration, never by
    clipping the state afterwards, so v always equals the integral of the
    accelerations actually applied.
    """
    h = dt / n_substeps
    x, y, psi, v = state.x, state.y, state.psi, state.v
    for _ in range(n_substeps):
        a = max(accel, -v / h)
        beta = math.atan(math.tan(steer) / 2)
        x += v * math.cos(psi + beta) * h
        y += v * math.sin(psi + beta) * h
        psi = wrap_angle(psi + v * math.cos(beta) / wheelbase * math.tan(steer) * h)
        v += a * h
    return BicycleState(x, y, psi, v)


def steady_turn_radius(steer: float, wheelbase: float) -> float:
    """Turning circle radius of the bicycle at a constant steering angle."""
    beta = math.atan(math.tan(steer) / 2)
    return wheelbase / (math.cos(beta) * abs(math.tan(steer)))


def feedforward_steer(curvature: float, wheelbase: float) -> float:
    """Steering angle whose steady-state path curvature matches the route.

    Solves tan(d) = L k / cos(beta(d)) by fixed-point sweeps from the no-slip
    guess; six sweeps land within 1e-8 for any curvature the routes use.
    """
    lk = wheelbase * curvature
    d = math.atan(lk)
    for _ in range(6):
        beta = math.atan(math.tan(d) / 2)
        d = math.atan(lk / math.cos(beta))
    return d


@dataclass
class PathTracker:
    """Lateral PID composed with a heading-error feedforward in slip space.

    The body center moves along psi + beta, and beta = atan(tan(d)/2) answers
    the steering input instantly, so commanding the slip that cancels the
    heading-vs-tangent error keeps the center velocity aligned with the route
    even across the line-to-arc curvature steps; the PID on the signed lateral
    offset then only trims residual drift. The tangent is sampled half a step
    ahead to cancel the first-order hold bias on arcs.
    """
    kp: float = 1.2
    ki: float = 0.05
    kd: float = 0.0
    v_soft: float = 1.0
    integral_cap: float = 1.0
    _integ: float = field(default=0.0, repr=False)
    _prev_e: float | None = field(default=None, repr=False)

    def steer(self, route: RouteSpec, state: BicycleState, dt: float,
              wheelbase: float) -> tuple[float, float]:
        """Steering command and the lateral error it was computed from."""
        s, e = route.project((state.x, state.y))
        if abs(e) > LATERAL_FAIL:
            raise TrackingError(f"{abs(e):.2f} m off route {route.name}")
        _, _, psi_t = pose_extrapolated(route, s + state.v * dt / 2)
        self._integ = min(max(self._integ + e * dt, -self.integral_cap),
                          self.integral_cap)
        de = 0.0 if self._prev_e is None else (e - self._prev_e) / dt
        self._prev_e = e
        pid = self.kp * e + self.ki * self._integ + self.kd * de
        corr = math.atan(pid / max(state.v, self.v_soft))
        beta_max = math.atan(math.tan(MAX_STEER) / 2)
        beta_cmd = -wrap_angle(state.psi - psi_t) - corr
        beta_cmd = min(max(beta_cmd, -beta_max), beta_max)
        cmd = math.atan(2 * math.tan(beta_cmd))
        return min(max(cmd, -MAX_STEER), MAX_STEER), e


def longitudinal_accel(a_plan: float, x_plan: float, v_plan: float,
                       s_front: float, v: float, a_min: float, a_max: float,
                       kx: float = 0.6, kv: float = 1.6) -> float:
    """Planned acceleration corrected by progress and speed error feedback."""
    a = a_plan + kx * (x_plan - s_front) + kv * (v_plan - v)
    return min(max(a, a_min), a_max)


def execute_step(route: RouteSpec, state: BicycleState, tracker: PathTracker,
                 x_plan: float, v_mid: float, a_plan: float, dt: float,
                 veh_length: float, a_min: float, a_max: float,
                 n_substeps: int = 1) -> tuple[BicycleState, float]:
    """One closed-loop execution step; returns the new state and applied accel.

    x_plan is the planned front-bumper arc length for the START of this step
    and v_mid the mean of the step's planned endpoint speeds. Euler advances
    position by v*dt, so holding v at the step's midpoint speed reproduces the
    plan's trapezoidal displacement exactly; the progress term mops up the
    rest. Controls are held for the full step; n_substeps only refines the
    integration, which tightens displacement during saturated accel phases
    where feedback has no authority.
    """
    steer, _ = tracker.steer(route, state, dt, veh_length)
    s_cg, _ = route.project((state.x, state.y))
    s_front = s_cg + veh_length / 2
    a = longitudinal_accel(a_plan, x_plan, v_mid, s_front, state.v, a_min, a_max)
    new = bicycle_step(state, a, steer, dt, veh_length, n_substeps)
    applied = (new.v - state.v) / dt
    return new, applied
