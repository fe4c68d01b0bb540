"""Closed-form longitudinal timing under bounded acceleration.

All motions here are bang-bang in acceleration: accelerate at the upper bound,
optionally cruise at the speed limit, brake at the lower bound to hit a target
speed. That is the time-optimal profile for reaching a downstream point at or
below a speed cap, which is all the scheduler needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TIME_EPS = 1e-9


class InfeasibleDeceleration(ValueError):
    """Vehicle cannot slow to the required speed before the target point."""


@dataclass(frozen=True)
class KinematicLimits:
    a_min: float = -5.0
    a_max: float = 3.0
    v_max: float = 13.0

    def validate(self) -> None:
        if self.a_min >= 0 or self.a_max <= 0 or self.v_max <= 0:
            raise ValueError(f"bad limits {self}")


@dataclass(frozen=True)
class LongState:
    """Longitudinal state along a route: front-bumper arc length and speed."""
    x: float
    v: float


def min_arrival(state: LongState, target_x: float, cap: float,
                limits: KinematicLimits) -> tuple[float, float]:
    """Earliest time to reach target_x arriving at speed <= cap, and that speed.

    Returns (t, v_arrive). v_arrive equals min(cap, best attainable) so the
    caller knows the crossing speed. Raises InfeasibleDeceleration when the
    vehicle is already too fast to brake down to cap in the available distance.
    """
    d = target_x - state.x
    if d < -TIME_EPS:
        raise ValueError(f"target {target_x} behind state x {state.x}")
    d = max(d, 0.0)
    v0 = min(state.v, limits.v_max)
    cap_eff = min(cap, limits.v_max)
    a_up = limits.a_max
    a_dn = -limits.a_min
    if v0 > cap_eff:
        need = (v0 * v0 - cap_eff * cap_eff) / (2 * a_dn)
        if need > d + TIME_EPS:
            raise InfeasibleDeceleration(
                f"need {need:.3f} m to slow {v0:.2f} -> {cap_eff:.2f}, have {d:.3f}")
    if d == 0.0:
        return 0.0, min(v0, cap_eff)
    # accelerate the whole way if that still lands at or under the cap
    v1_sq = v0 * v0 + 2 * a_up * d
    if v1_sq <= cap_eff * cap_eff + TIME_EPS:
        v1 = min(math.sqrt(max(v1_sq, 0.0)), cap_eff)
        if v1 > v0 + 1e-15:
            t = (v1 - v0) / a_up
        else:
            # pinned at the cap for the whole distance
            t = d / v0 if v0 > 0 else math.inf
        return t, v1
    # accelerate to a peak, then brake to the cap
    vp_sq = (2 * a_up * a_dn * d + a_dn * v0 * v0 + a_up * cap_eff * cap_eff) / (a_up + a_dn)
    vp = math.sqrt(max(vp_sq, 0.0))
    if vp <= limits.v_max + 1e-12:
        t = max(vp - v0, 0.0) / a_up + max(vp - cap_eff, 0.0) / a_dn
        return t, cap_eff
    # clip the peak at v_max and cruise in between
    vm = limits.v_max
    d_up = max(vm * vm - v0 * v0, 0.0) / (2 * a_up)
    d_dn = max(vm * vm - cap_eff * cap_eff, 0.0) / (2 * a_dn)
    d_cruise = d - d_up - d_dn
    t = max(vm - v0, 0.0) / a_up + d_cruise / vm + max(vm - cap_eff, 0.0) / a_dn
    return t, cap_eff


def min_traverse_time(d: float, v0: float, limits: KinematicLimits) -> float:
    """Fastest time over distance d starting at v0 with no terminal speed bound."""
    if d <= 0:
        return 0.0
    v0 = min(v0, limits.v_max)
    v1_sq = v0 * v0 + 2 * limits.a_max * d
    if v1_sq <= limits.v_max ** 2:
        return (math.sqrt(v1_sq) - v0) / limits.a_max
    d_up = (limits.v_max ** 2 - v0 * v0) / (2 * limits.a_max)
    return (limits.v_max - v0) / limits.a_max + (d - d_up) / limits.v_max


def free_flow_time(route_length: float, x_mid: float, v0: float,
                   crossing_cap: float, is_turn: bool,
                   limits: KinematicLimits) -> float:
    """Unimpeded travel time for the whole route from a standing start at v0.

    Straight routes run flat out. Turning routes must pass the arc midpoint at
    or below the turn's speed cap, then accelerate freely to the route end.
    """
    if not is_turn:
        return min_traverse_time(route_length, v0, limits)
    t1, v_mid = min_arrival(LongState(0.0, v0), x_mid, crossing_cap, limits)
    return t1 + min_traverse_time(route_length - x_mid, v_mid, limits)
