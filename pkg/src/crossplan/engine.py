"""Closed-loop episode driver: arrivals, scheduling, planning, execution."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .collision import find_collisions
from .config import SimConfig
from .geometry import build_intersection, pose_extrapolated
from .kinematics import InfeasibleDeceleration, LongState, free_flow_time
from .order_search import PlannedVehicle, SearchPrep, fifo_order, obs_search, pp_search
from .scheduling import ReservationTable, commit_schedule, schedule_crossing
from .trajopt import (Trajectory, Unplannable, build_bounds,
                      entry_leader_bound, exit_leader_bound, horizon_steps,
                      plan_with_relaxation)
from .vehicle_exec import BicycleState, PathTracker, execute_step

ROUTE_KINDS = ("straight", "left", "right")
_EXIT_OFFSET = {"straight": 2, "left": 3, "right": 1}


@dataclass
class VehicleRecord:
    """Per-vehicle episode bookkeeping that survives retirement."""
    vid: int
    route: str
    kind: str
    spawn_step: int
    free_flow: float
    done_step: int | None = None
    delay: float | None = None


@dataclass
class ReplanRecord:
    step: int
    order: list[int]
    delay: float
    leaves: int
    walltime: float
    n_candidates: int


@dataclass
class _Active:
    """Mutable state of a vehicle currently on its route."""
    vid: int
    route_id: tuple[int, int]
    kind: str
    state: BicycleState
    tracker: PathTracker
    s_front: float
    schedule: object
    traj: Trajectory
    stale: bool = False
    plan_seq: int = 0


@dataclass
class EpisodeLog:
    """Everything one episode produced, ready for serialization."""
    config_id: str
    method: str
    seed: int
    horizon: int
    dt: float
    vehicles: list[VehicleRecord] = field(default_factory=list)
    collisions: list[tuple[int, int, int]] = field(default_factory=list)
    replans: list[ReplanRecord] = field(default_factory=list)
    extensions: int = 0
    schedules: list = field(default_factory=list)
    trajectories: list[tuple[int, Trajectory]] = field(default_factory=list)
    poses: list[tuple[float, int, float, float, float, float]] | None = None
    search_rows: list[dict] | None = None

    def summary(self) -> dict:
        done = [r for r in self.vehicles if r.done_step is not None]
        span = self.horizon * self.dt

        def mean_delay(rows):
            return float(np.mean([r.delay for r in rows])) if rows else None

        out = {
            "config_id": self.config_id,
            "method": self.method,
            "seed": self.seed,
            "spawned": len(self.vehicles),
            "completed": len(done),
            "active": len(self.vehicles) - len(done),
            "collisions": len(self.collisions),
            "mean_delay": mean_delay(done),
            "throughput": len(done) * 3600.0 / span if span > 0 else 0.0,
            "replans": len(self.replans),
            "extensions": self.extensions,
        }
        for kind in ROUTE_KINDS:
            out[f"delay_{kind}"] = mean_delay([r for r in done if r.kind == kind])
        return out

    def write_jsonl(self, path) -> None:
        """One JSON object per line; wall-clock timings are left out so the
        file is bit-identical across reruns of the same config and seed."""
        with open(path, "w") as fh:
            def emit(obj):
                fh.write(json.dumps(obj, sort_keys=True) + "\n")
            emit({"type": "meta", "config_id": self.config_id,
                  "method": self.method, "seed": self.seed,
                  "horizon": self.horizon, "dt": self.dt})
            for r in self.vehicles:
                emit({"type": "vehicle", "vid": r.vid, "route": r.route,
                      "kind": r.kind, "spawn_step": r.spawn_step,
                      "done_step": r.done_step, "free_flow": r.free_flow,
                      "delay": r.delay})
            for step, a, b in self.collisions:
                emit({"type": "collision", "step": step, "a": a, "b": b})
            for r in self.replans:
                emit({"type": "replan", "step": r.step, "order": r.order,
                      "delay": r.delay, "leaves": r.leaves,
                      "n_candidates": r.n_candidates})
            emit({"type": "summary", **self.summary()})


def write_pose_csv(path, log: EpisodeLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "vehicle", "x_x", "x_y", "psi", "v"])
        for t, vid, x, y, psi, v in log.poses or []:
            w.writerow([repr(round(t, 9)), vid, repr(x), repr(y), repr(psi), repr(v)])


def write_trajectory_csv(path, log: EpisodeLog) -> None:
    """Latest committed plan per vehicle, one row per grid step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle", "t", "x", "v", "a", "applied_delay"])
        for vid, traj in sorted(log.trajectories):
            for i in range(len(traj)):
                t = traj.t0 + i * traj.dt
                w.writerow([vid, repr(round(t, 9)), repr(float(traj.x[i])),
                            repr(float(traj.v[i])), repr(float(traj.a[i])),
                            repr(traj.applied_delay)])


def write_search_jsonl(path, log: EpisodeLog) -> None:
    with open(path, "w") as fh:
        for row in log.search_rows or []:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


class Simulation:
    """One deterministic episode under a fixed config and seed."""

    def __init__(self, config: SimConfig, record_poses: bool = False,
                 record_search: bool = False):
        config.validate()
        self.cfg = config
        self.model = build_intersection(config.intersection(),
                                        vehicle_width=config.veh_width,
                                        speed_caps=config.speed_caps())
        self.limits = config.limits()
        self.rng_traffic = np.random.default_rng([config.seed, 0])
        self.rng_search = np.random.default_rng([config.seed, 1])
        self.active: dict[int, _Active] = {}
        self.log = EpisodeLog(config.config_id(), config.method, config.seed,
                              config.horizon, config.dt)
        if record_poses:
            self.log.poses = []
        if record_search and config.method == "obs":
            self.log.search_rows = []
        rates = config.arrival_rates()
        self.next_due = [0.0 if r > 0 else float("inf") for r in rates]
        self.interval = [3600.0 / r if r > 0 else float("inf") for r in rates]
        self.pending: list[list[str]] = [[], [], [], []]
        self.next_vid = 0
        self.plan_counter = 0
        # a fresh leader must be this far down the lane before the next spawn
        self.spawn_clear = 2 * config.veh_length + config.standstill_gap

    # ------------------------------------------------------------- arrivals

    def _draw_kind(self) -> str:
        k = int(self.rng_traffic.choice(3, p=self.cfg.route_probs))
        return ROUTE_KINDS[k]

    def _lane_blocked(self, road: int) -> bool:
        return any(v.route_id[0] == road and v.s_front < self.spawn_clear
                   for v in self.active.values())

    def _spawn(self, road: int, kind: str, h: int) -> None:
        cfg = self.cfg
        rid = (road, (road + _EXIT_OFFSET[kind]) % 4)
        route = self.model.routes[rid]
        vid = self.next_vid
        self.next_vid += 1
        x, y, psi = pose_extrapolated(route, -cfg.veh_length / 2)
        veh = _Active(vid=vid, route_id=rid, kind=kind,
                      state=BicycleState(x, y, psi, cfg.spawn_speed),
                      tracker=PathTracker(), s_front=0.0, schedule=None,
                      traj=None)
        t_now = h * cfg.dt
        sched = schedule_crossing(
            vid, rid, self.model.crossing[rid], cfg.veh_length,
            LongState(0.0, cfg.spawn_speed), self.limits, self.table, t_now,
            literal_departure_divisor=cfg.literal_departure_divisor)
        traj, shift = self._plan(veh, sched, t_now, h)
        veh.schedule = sched.shifted(shift)
        veh.traj = traj
        self.plan_counter += 1
        veh.plan_seq = self.plan_counter
        commit_schedule(self.table, veh.schedule)
        self.active[vid] = veh
        ff = free_flow_time(route.length, route.x_mid, cfg.spawn_speed,
                            self.model.crossing_cap(rid), kind != "straight",
                            self.limits)
        self.log.vehicles.append(VehicleRecord(
            vid=vid, route=route.name, kind=kind, spawn_step=h, free_flow=ff))
        if self.log.poses is not None:
            self.log.poses.append((t_now, vid, x, y, psi, cfg.spawn_speed))

    def _spawn_due(self, h: int) -> None:
        t = h * self.cfg.dt
        for road in range(4):
            while self.next_due[road] <= t + 1e-9:
                self.pending[road].append(self._draw_kind())
                self.next_due[road] += self.interval[road]
            while self.pending[road] and not self._lane_blocked(road):
                self._spawn(road, self.pending[road].pop(0), h)

    # ------------------------------------------------------------- planning

    def _reorder_safe(self, veh: _Active) -> bool:
        """Whether the vehicle can still honor an arbitrarily late schedule.

        Requires room to brake to a stop and then rebuild the crossing speed
        before the first gate; vehicles past that point keep their commitment.
        """
        cfg = self.cfg
        cap = self.model.crossing_cap(veh.route_id)
        v = veh.state.v
        need = (v * v / (2 * abs(cfg.a_min)) + cap * cap / (2 * cfg.a_max)
                + 2 * cfg.v_max * cfg.dt + 1.0)
        return veh.s_front + need <= self.model.first_gate(veh.route_id)

    def _brake_floor(self, v0: float, n_steps: int) -> np.ndarray:
        """Front positions forced by full braking from v0; the lowest profile
        any admissible control can produce, so a valid floor for ceilings."""
        cfg = self.cfg
        v = np.maximum(0.0, v0 + cfg.a_min * cfg.dt * np.arange(n_steps + 1))
        dx = (v[:-1] + v[1:]) / 2 * cfg.dt
        return np.concatenate([[0.0], np.cumsum(dx)])

    def _entry_leader(self, veh: _Active) -> _Active | None:
        best = None
        for other in self.active.values():
            if other.vid == veh.vid or other.route_id[0] != veh.route_id[0]:
                continue
            if other.s_front > veh.s_front and other.traj is not None:
                if best is None or other.s_front < best.s_front:
                    best = other
        return best

    def _exit_leader(self, veh: _Active, t_exit: float) -> _Active | None:
        """Nearest-in-time predecessor onto the same exit lane, if any.

        Vehicles whose schedule is about to be rebuilt later in the current
        replan pass are skipped; their eventual exit times land after ours, so
        the follower side of the gap is enforced when they are planned.
        """
        best = None
        for other in self.active.values():
            if other.vid == veh.vid or other.route_id[1] != veh.route_id[1]:
                continue
            if other.schedule is None or other.traj is None or other.stale:
                continue
            if other.schedule.t_exit < t_exit - 1e-9:
                if best is None or other.schedule.t_exit > best.schedule.t_exit:
                    best = other
        return best

    def _plan(self, veh: _Active, sched, t_now: float, h: int,
              relax_max: float | None = None):
        cfg = self.cfg
        route = self.model.routes[veh.route_id]
        ivs = self.model.crossing[veh.route_id]
        by_zone = {iv.zone_id: iv for iv in ivs}
        lead_in = self._entry_leader(veh)
        cap = self.model.crossing_cap(veh.route_id)
        is_turn = veh.kind != "straight"
        s_now, v_now = veh.s_front, veh.state.v

        def make_problem(shift):
            sh = sched.shifted(shift)
            n = horizon_steps(sh, by_zone, route.length, 0.0, t_now, cfg.dt,
                              cfg.v_max)
            extra = np.full(n + 1, np.inf)
            if lead_in is not None:
                np.minimum(extra, entry_leader_bound(
                    lead_in.traj, n, cfg.dt, h, cfg.veh_length,
                    cfg.standstill_gap, cfg.lane_length) - s_now, out=extra)
            lead_out = self._exit_leader(veh, sh.t_exit)
            if lead_out is not None:
                lead_route = self.model.routes[lead_out.route_id]
                np.minimum(extra, exit_leader_bound(
                    lead_out.traj, n, cfg.dt, h, cfg.veh_length,
                    cfg.standstill_gap, route.length - lead_route.length,
                    route.length, cfg.lane_length) - s_now, out=extra)
            window = (sh.t_first, sh.t_exit) if is_turn else None
            prob = build_bounds(
                dt=cfg.dt, n_steps=n, t0=t_now, s_now=s_now, v0=v_now,
                sched=sh, intervals_by_zone=by_zone, veh_length=cfg.veh_length,
                v_max=cfg.v_max, a_min=cfg.a_min, a_max=cfg.a_max,
                cap=cap if is_turn else None, cap_window=window,
                extra_x_hi=extra)
            # execution jitter can park the ego a shade past a constant-gap
            # ceiling (or a gate it stopped at); positions full braking cannot
            # avoid are not plannable away, so they must stay admissible
            np.maximum(prob.x_hi, self._brake_floor(v_now, n), out=prob.x_hi)
            return prob

        return plan_with_relaxation(
            make_problem, s_now, t_now, h, cfg.relax_step,
            cfg.relax_max if relax_max is None else relax_max)

    def _replan(self, h: int) -> None:
        cfg = self.cfg
        t_now = h * cfg.dt
        ordered = [self.active[v] for v in sorted(self.active)]
        approach = [v for v in ordered
                    if v.s_front < self.model.first_gate(v.route_id)]
        k_set = [v for v in approach if self._reorder_safe(v)]
        keep = {v.vid for v in k_set}
        # near-gate vehicles cannot honor an arbitrary postponement; they keep
        # their place in the commitment sequence but get their slots refreshed
        pinned = sorted((v for v in approach if v.vid not in keep),
                        key=lambda v: v.plan_seq)
        loose = keep | {v.vid for v in pinned}
        self.table = ReservationTable.empty(self.model.n_zones)
        for veh in ordered:
            veh.stale = veh.vid in loose
            if not veh.stale:
                commit_schedule(self.table, veh.schedule)
        for veh in pinned:
            # a refresh is accepted only when it moves the slot earlier, keeps
            # the granted crossing speed (a downgraded speed would relax the
            # deadlines, let the plan creep to the gate, and stretch the zone
            # occupancy), and the LP realizes it unshifted; otherwise the
            # committed plan stands. Refreshing in commitment order keeps the
            # table append-only, so no reservation is overtaken.
            try:
                sched = schedule_crossing(
                    veh.vid, veh.route_id, self.model.crossing[veh.route_id],
                    cfg.veh_length, LongState(veh.s_front, veh.state.v),
                    self.limits, self.table, t_now,
                    literal_departure_divisor=cfg.literal_departure_divisor)
                if (sched.t_first <= veh.schedule.t_first + 1e-6
                        and sched.crossing_speed
                        >= veh.schedule.crossing_speed - 1e-9):
                    traj, _ = self._plan(veh, sched, t_now, h, relax_max=0.0)
                    veh.schedule = sched
                    veh.traj = traj
            except (InfeasibleDeceleration, Unplannable):
                pass
            veh.stale = False
            commit_schedule(self.table, veh.schedule)
        base_dep = self.table.dep.copy()
        planned = [PlannedVehicle(v.vid, v.route_id, v.s_front, v.state.v)
                   for v in k_set]
        prep = SearchPrep(self.model, planned, self.limits, cfg.veh_length,
                          t_now,
                          literal_departure_divisor=cfg.literal_departure_divisor)
        trace = None
        if self.log.search_rows is not None:
            trace = self.log.search_rows.append
        t_start = time.perf_counter()
        if not k_set:
            result = None
        elif cfg.method == "fifo":
            result = fifo_order(prep, base_dep)
        elif cfg.method == "pp":
            result = pp_search(prep, base_dep, cfg.n_orders, self.rng_search)
        else:
            result = obs_search(prep, base_dep, cfg.n_orders,
                                rng=self.rng_search, trace=trace)
        wall = time.perf_counter() - t_start
        order = result.order if result else []
        assert prep.lane_consistent(order)
        for vid in order:
            veh = self.active[vid]
            sched = schedule_crossing(
                vid, veh.route_id, self.model.crossing[veh.route_id],
                cfg.veh_length, LongState(veh.s_front, veh.state.v),
                self.limits, self.table, t_now,
                literal_departure_divisor=cfg.literal_departure_divisor)
            traj, shift = self._plan(veh, sched, t_now, h)
            veh.schedule = sched.shifted(shift)
            veh.traj = traj
            veh.stale = False
            self.plan_counter += 1
            veh.plan_seq = self.plan_counter
            commit_schedule(self.table, veh.schedule)
        self.log.replans.append(ReplanRecord(
            step=h, order=list(order),
            delay=result.total_delay if result else 0.0,
            leaves=result.leaves if result else 0,
            walltime=wall, n_candidates=len(k_set)))

    def _extend(self, veh: _Active, h: int) -> None:
        """Re-solve a nearly exhausted plan against the unchanged schedule."""
        t_now = h * self.cfg.dt
        traj, _ = self._plan(veh, veh.schedule, t_now, h, relax_max=0.0)
        veh.traj = traj
        self.log.extensions += 1

    # ------------------------------------------------------------ execution

    def _execute(self, h: int) -> None:
        cfg = self.cfg
        for vid in sorted(self.active):
            veh = self.active[vid]
            route = self.model.routes[veh.route_id]
            x_p, v_a, a_p = veh.traj.at_step(h)
            _, v_b, _ = veh.traj.at_step(h + 1)
            state, _ = execute_step(
                route, veh.state, veh.tracker, x_p, (v_a + v_b) / 2, a_p,
                cfg.dt, cfg.veh_length, cfg.a_min, cfg.a_max,
                n_substeps=cfg.exec_substeps)
            veh.state = state
            s_cg, _ = route.project((state.x, state.y))
            veh.s_front = s_cg + cfg.veh_length / 2
            if self.log.poses is not None:
                self.log.poses.append(((h + 1) * cfg.dt, vid, state.x, state.y,
                                       state.psi, state.v))

    def _retire(self, h: int) -> None:
        gone = [v for v in self.active.values()
                if v.s_front >= self.model.routes[v.route_id].length]
        for veh in gone:
            rec = self.log.vehicles[veh.vid]
            rec.done_step = h + 1
            rec.delay = (h + 1 - rec.spawn_step) * self.cfg.dt - rec.free_flow
            self.log.schedules.append(veh.schedule)
            self.log.trajectories.append((veh.vid, veh.traj))
            del self.active[veh.vid]

    def _check_collisions(self, h: int) -> None:
        poses = [(vid, v.state.x, v.state.y, v.state.psi)
                 for vid, v in sorted(self.active.items())]
        for a, b in find_collisions(poses, self.cfg.veh_length,
                                    self.cfg.veh_width):
            self.log.collisions.append((h + 1, a, b))

    # ------------------------------------------------------------------ run

    def run(self) -> EpisodeLog:
        cfg = self.cfg
        self.table = ReservationTable.empty(self.model.n_zones)
        for h in range(cfg.horizon):
            if h and h % cfg.replan_period == 0:
                self._replan(h)
            self._spawn_due(h)
            for vid in sorted(self.active):
                veh = self.active[vid]
                if h >= veh.traj.end_step - 1:
                    self._extend(veh, h)
            self._execute(h)
            self._retire(h)
            self._check_collisions(h)
        for veh in [self.active[v] for v in sorted(self.active)]:
            self.log.schedules.append(veh.schedule)
            self.log.trajectories.append((veh.vid, veh.traj))
        self.log.schedules.sort(key=lambda s: s.vehicle)
        return self.log


def run_episode(config: SimConfig, record_poses: bool = False,
                record_search: bool = False) -> EpisodeLog:
    """Simulate one full episode and return its log."""
    sim = Simulation(config, record_poses=record_poses,
                     record_search=record_search)
    return sim.run()
