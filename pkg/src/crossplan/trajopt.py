"""Speed-profile planning as a linear program.

A trajectory is a speed sequence on a fixed time grid; position follows by
trapezoidal integration. Maximizing total displacement subject to per-step
speed and position corridors yields the most eager profile that still honors
every subzone gate (stay out until the reserved arrival), every subzone
deadline (be fully clear by the reserved departure), the in-box speed cap,
and any leader gap. When no profile exists, the whole reservation is slid
later in fixed increments until one does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import lil_matrix

TIME_GRID_EPS = 1e-9
RELAX_STEP = 0.5
RELAX_MAX = 60.0
MIN_HORIZON = 20.0
MAX_HORIZON = 120.0
HORIZON_MARGIN = 8.0


class Unplannable(RuntimeError):
    """No feasible speed profile within the relaxation budget."""


@dataclass
class TrajOptProblem:
    dt: float
    n_steps: int
    v0: float
    v_hi: np.ndarray     # (n_steps + 1,)
    x_lo: np.ndarray
    x_hi: np.ndarray
    a_min: float
    a_max: float


@dataclass
class Trajectory:
    """Planned motion on the step grid: absolute front position, speed, accel."""
    t0: float
    step0: int
    dt: float
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    applied_delay: float

    def __len__(self) -> int:
        return len(self.x)

    @property
    def end_step(self) -> int:
        return self.step0 + len(self.x) - 1

    def at_step(self, step: int) -> tuple[float, float, float]:
        i = min(max(step - self.step0, 0), len(self.x) - 1)
        return float(self.x[i]), float(self.v[i]), float(self.a[i])


def solve(problem: TrajOptProblem):
    """Solve the profile LP. Returns (v, x) arrays or None when infeasible."""
    n = problem.n_steps
    nv = n + 1
    dt = problem.dt
    # variables: v_0..v_n, x_0..x_n
    c = np.zeros(2 * nv)
    c[1:nv] = -dt
    a_eq = lil_matrix((n, 2 * nv))
    for i in range(n):
        a_eq[i, nv + i + 1] = 1.0
        a_eq[i, nv + i] = -1.0
        a_eq[i, i] = -dt / 2
        a_eq[i, i + 1] = -dt / 2
    a_ub = lil_matrix((2 * n, 2 * nv))
    b_ub = np.empty(2 * n)
    for i in range(n):
        a_ub[i, i + 1] = 1.0
        a_ub[i, i] = -1.0
        b_ub[i] = problem.a_max * dt
        a_ub[n + i, i + 1] = -1.0
        a_ub[n + i, i] = 1.0
        b_ub[n + i] = -problem.a_min * dt
    bounds = [(problem.v0, problem.v0)]
    bounds += [(0.0, problem.v_hi[i]) for i in range(1, nv)]
    bounds += [(0.0, 0.0)]
    bounds += [(problem.x_lo[i], problem.x_hi[i]) for i in range(1, nv)]
    res = linprog(c, A_ub=a_ub.tocsr(), b_ub=b_ub, A_eq=a_eq.tocsr(),
                  b_eq=np.zeros(n), bounds=bounds, method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        raise RuntimeError(f"speed-profile LP failed with status {res.status}: "
                           f"{res.message}")
    return res.x[:nv], res.x[nv:]


def check_solution(problem: TrajOptProblem, v: np.ndarray, x: np.ndarray,
                   tol: float = 1e-6) -> list[str]:
    """All constraint violations beyond tol, empty when the profile is valid."""
    bad = []
    dt = problem.dt
    if abs(v[0] - problem.v0) > tol:
        bad.append("initial speed")
    if abs(x[0]) > tol:
        bad.append("initial position")
    gap = x[1:] - x[:-1] - dt / 2 * (v[:-1] + v[1:])
    if np.max(np.abs(gap)) > tol:
        bad.append("integration")
    dv = np.diff(v)
    if np.max(dv) > problem.a_max * dt + tol:
        bad.append("accel limit")
    if np.min(dv) < problem.a_min * dt - tol:
        bad.append("decel limit")
    if np.min(v) < -tol:
        bad.append("negative speed")
    if np.max(v[1:] - problem.v_hi[1:]) > tol:
        bad.append("speed corridor")
    if np.max(problem.x_lo[1:] - x[1:]) > tol:
        bad.append("position floor")
    if np.max(x[1:] - problem.x_hi[1:]) > tol:
        bad.append("position ceiling")
    return bad


def horizon_steps(sched, intervals_by_zone, route_length: float, shift: float,
                  t0: float, dt: float, v_max: float) -> int:
    """Steps needed to cover the shifted reservation plus the run-out to the
    route end, clamped to [MIN_HORIZON, MAX_HORIZON] whole seconds."""
    last_td = max(sched.t_depart) + shift
    last_x1 = max(intervals_by_zone[z].x_end for z in sched.zone_ids)
    need = (last_td - t0) + (route_length - last_x1) / v_max + HORIZON_MARGIN
    secs = math.ceil(min(MAX_HORIZON, max(MIN_HORIZON, need)))
    return int(round(secs / dt))


def build_bounds(*, dt: float, n_steps: int, t0: float, s_now: float, v0: float,
                 sched, intervals_by_zone, veh_length: float, v_max: float,
                 a_min: float, a_max: float, cap: float | None = None,
                 cap_window: tuple[float, float] | None = None,
                 extra_x_hi: np.ndarray | None = None) -> TrajOptProblem:
    """Assemble the LP corridors from a (possibly shifted) subzone schedule.

    Gates keep the front out of each subzone until its reserved arrival;
    deadlines require the rear to have cleared by the reserved departure;
    cap_window limits speed while the vehicle traverses the turn arc.
    """
    nv = n_steps + 1
    t_i = t0 + dt * np.arange(nv)
    v_hi = np.full(nv, v_max)
    x_lo = np.zeros(nv)
    x_hi = np.full(nv, np.inf)
    for z, t_a, t_d in zip(sched.zone_ids, sched.t_arrive, sched.t_depart):
        iv = intervals_by_zone[z]
        gate = t_i < t_a - TIME_GRID_EPS
        if gate.any():
            np.minimum(x_hi, np.where(gate, iv.x_start - s_now, np.inf), out=x_hi)
        done = t_i >= t_d - TIME_GRID_EPS
        if done.any():
            np.maximum(x_lo, np.where(done, iv.x_end + veh_length - s_now, 0.0),
                       out=x_lo)
    if cap is not None and cap_window is not None:
        lo, hi = cap_window
        inside = (t_i >= lo - TIME_GRID_EPS) & (t_i <= hi + TIME_GRID_EPS)
        v_hi = np.where(inside, np.minimum(v_hi, cap), v_hi)
    if extra_x_hi is not None:
        np.minimum(x_hi, extra_x_hi, out=x_hi)
    return TrajOptProblem(dt=dt, n_steps=n_steps, v0=min(v0, v_max), v_hi=v_hi,
                          x_lo=x_lo, x_hi=x_hi, a_min=a_min, a_max=a_max)


def entry_leader_bound(lead_traj: Trajectory, n_steps: int, dt: float,
                       step0: int, lead_length: float, gap: float,
                       lane_length: float) -> np.ndarray:
    """Front-position ceiling from a leader still on the shared entry lane."""
    out = np.full(n_steps + 1, np.inf)
    for i in range(n_steps + 1):
        xl, _, _ = lead_traj.at_step(step0 + i)
        rear = xl - lead_length
        if rear <= lane_length:
            out[i] = rear - gap
    return out


def exit_leader_bound(lead_traj: Trajectory, n_steps: int, dt: float,
                      step0: int, lead_length: float, gap: float,
                      frame_offset: float, ego_route_length: float,
                      lane_length: float) -> np.ndarray:
    """Ceiling from a leader ahead on the shared exit lane.

    frame_offset maps the leader's arc length onto the ego route (both routes
    end at the same point, so it is the difference of route lengths).
    """
    out = np.full(n_steps + 1, np.inf)
    for i in range(n_steps + 1):
        xl, _, _ = lead_traj.at_step(step0 + i)
        rear = xl + frame_offset - lead_length
        if rear >= ego_route_length - lane_length:
            out[i] = rear - gap
    return out


def plan_with_relaxation(make_problem, s_now: float, t0: float, step0: int,
                         relax_step: float = RELAX_STEP,
                         relax_max: float = RELAX_MAX):
    """Try schedule shifts 0, relax_step, 2*relax_step, ... until the LP is
    feasible. Returns (Trajectory, shift). Raises Unplannable on exhaustion."""
    m = 0
    while True:
        shift = m * relax_step
        if shift > relax_max + 1e-9:
            raise Unplannable(f"no feasible profile within +{relax_max:.0f} s")
        problem = make_problem(shift)
        sol = solve(problem)
        if sol is not None:
            v, x = sol
            a = np.append(np.diff(v) / problem.dt, 0.0)
            traj = Trajectory(t0=t0, step0=step0, dt=problem.dt,
                              x=s_now + x, v=v, a=a, applied_delay=shift)
            return traj, shift
        m += 1
