"""Subzone reservation timing for constant-speed intersection crossings.

A vehicle reserves every subzone its route touches. It picks a single crossing
speed when its schedule is computed (the lowest of its route's zone limits and
what it can actually reach at the first zone boundary), then all arrival and
departure times follow rigidly from the time it reaches that first boundary.
Delaying a vehicle therefore means sliding its whole crossing later; the
earliest admissible slide is what schedule_crossing computes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .geometry import SubzoneInterval
from .kinematics import KinematicLimits, LongState, min_arrival

SPEED_EPS = 1e-9


@dataclass
class ReservationTable:
    """Latest committed departure time per subzone (-inf where unreserved)."""
    dep: np.ndarray

    @classmethod
    def empty(cls, n_zones: int) -> "ReservationTable":
        return cls(np.full(n_zones, -np.inf))

    def copy(self) -> "ReservationTable":
        return ReservationTable(self.dep.copy())


@dataclass(frozen=True)
class SubzoneSchedule:
    """One vehicle's reserved crossing, zone by zone, in absolute time."""
    vehicle: int
    route_id: tuple[int, int]
    zone_ids: tuple[int, ...]
    t_arrive: tuple[float, ...]
    t_depart: tuple[float, ...]
    crossing_speed: float
    t_min_first: float          # earliest possible first-zone arrival

    @property
    def t_first(self) -> float:
        return self.t_arrive[0]

    @property
    def t_exit(self) -> float:
        return max(self.t_depart)

    @property
    def delay(self) -> float:
        return self.t_arrive[0] - self.t_min_first

    def shifted(self, offset: float) -> "SubzoneSchedule":
        return replace(self,
                       t_arrive=tuple(t + offset for t in self.t_arrive),
                       t_depart=tuple(t + offset for t in self.t_depart))


def crossing_profile(intervals: tuple[SubzoneInterval, ...], veh_length: float,
                     state: LongState, limits: KinematicLimits, *,
                     literal_departure_divisor: bool = False):
    """Crossing speed plus per-zone arrival/departure offsets from first entry.

    Returns (t_rel_min, v_cross, deltas, dep_offsets): time from now to the
    earliest first-boundary arrival, the constant crossing speed, and for each
    zone the arrival and rear-clear times relative to first-boundary entry.
    """
    x_first = intervals[0].x_start
    cap = min(iv.v_limit for iv in intervals)
    t_rel, v_cross = min_arrival(state, x_first, cap, limits)
    if v_cross <= SPEED_EPS:
        raise ValueError("stopped at the first zone boundary; cannot cross")
    deltas = np.array([(iv.x_start - x_first) / v_cross for iv in intervals])
    if literal_departure_divisor:
        # per-zone limit as the in-zone divisor, optimistic where limits differ
        dep_offsets = deltas + np.array(
            [(iv.x_end - iv.x_start + veh_length) / iv.v_limit for iv in intervals])
    else:
        dep_offsets = np.array(
            [(iv.x_end + veh_length - x_first) / v_cross for iv in intervals])
    return t_rel, v_cross, deltas, dep_offsets


def schedule_crossing(vehicle: int, route_id: tuple[int, int],
                      intervals: tuple[SubzoneInterval, ...], veh_length: float,
                      state: LongState, limits: KinematicLimits,
                      table: ReservationTable, t_now: float = 0.0, *,
                      literal_departure_divisor: bool = False) -> SubzoneSchedule:
    """Earliest admissible crossing schedule against the reservation table.

    The first-zone arrival is pushed past both the vehicle's own earliest
    arrival and every commitment in the table, shifted by the constant-speed
    travel offset to the zone in question.
    """
    t_rel, v_cross, deltas, dep_offsets = crossing_profile(
        intervals, veh_length, state, limits,
        literal_departure_divisor=literal_departure_divisor)
    t_min = t_now + t_rel
    zone_ids = np.array([iv.zone_id for iv in intervals])
    t_first = max(t_min, float(np.max(table.dep[zone_ids] - deltas)))
    return SubzoneSchedule(
        vehicle=vehicle, route_id=route_id, zone_ids=tuple(int(z) for z in zone_ids),
        t_arrive=tuple(t_first + deltas), t_depart=tuple(t_first + dep_offsets),
        crossing_speed=v_cross, t_min_first=t_min)


def commit_schedule(table: ReservationTable, sched: SubzoneSchedule) -> None:
    for z, t_d in zip(sched.zone_ids, sched.t_depart):
        if t_d > table.dep[z]:
            table.dep[z] = t_d


def total_delay(schedules) -> float:
    return sum(s.delay for s in schedules)


def dump_schedules_csv(path, schedules) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle", "subzone", "t_a", "t_d"])
        for s in schedules:
            for z, ta, td in zip(s.zone_ids, s.t_arrive, s.t_depart):
                w.writerow([s.vehicle, z, repr(float(ta)), repr(float(td))])
