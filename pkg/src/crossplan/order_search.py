"""Crossing-order construction.

Three planners produce a lane-order-consistent permutation of the vehicles
waiting to cross, scored by total first-zone delay against a shared
reservation table:

* fifo_order: sort by earliest possible first-zone arrival.
* pp_search: randomized priority rollouts guided by pairwise earliest-arrival
  dominance, best of n_orders.
* obs_search: budgeted depth-first branch and bound over pairwise precedence
  constraints, committing vehicles greedily whenever one provably cannot harm
  the rest and branching both ways on the tightest undecided pair.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .kinematics import InfeasibleDeceleration, KinematicLimits, LongState
from .scheduling import crossing_profile

DELAY_TOL = 1e-12
DOM_EPS = 1e-9


class NoFeasibleOrder(RuntimeError):
    """Some vehicle's state admits no crossing at its required speed."""


@dataclass(frozen=True)
class PlannedVehicle:
    vid: int
    route_id: tuple[int, int]
    x: float        # front-bumper arc length
    v: float


@dataclass
class CrossingOrder:
    order: list[int]
    total_delay: float
    leaves: int = 0      # obs: leaves visited; pp: rollouts evaluated


class SearchPrep:
    """Per-vehicle crossing timings flattened to (n, n_zones) arrays."""

    def __init__(self, model, vehicles, limits: KinematicLimits,
                 veh_length: float, t_now: float = 0.0, *,
                 literal_departure_divisor: bool = False):
        n = len(vehicles)
        nz = model.n_zones
        self.vehicles = list(vehicles)
        self.vids = [veh.vid for veh in vehicles]
        self.n = n
        self.nz = nz
        self.t_min0 = np.zeros(n)
        self.onzone = np.zeros((n, nz), dtype=bool)
        self.delta = np.zeros((n, nz))
        self.depoff = np.zeros((n, nz))
        self.arrmin = np.full((n, nz), np.inf)
        self.lane = np.array([veh.route_id[0] for veh in vehicles], dtype=int)
        for i, veh in enumerate(vehicles):
            ivs = model.crossing[veh.route_id]
            try:
                t_rel, v_cross, deltas, depoffs = crossing_profile(
                    ivs, veh_length, LongState(veh.x, veh.v), limits,
                    literal_departure_divisor=literal_departure_divisor)
            except InfeasibleDeceleration as exc:
                raise NoFeasibleOrder(f"vehicle {veh.vid}: {exc}") from exc
            zids = [iv.zone_id for iv in ivs]
            self.t_min0[i] = t_now + t_rel
            self.onzone[i, zids] = True
            self.delta[i, zids] = deltas
            self.depoff[i, zids] = depoffs
            self.arrmin[i, zids] = self.t_min0[i] + deltas
        # lane chains ordered nearest-the-intersection first
        self.chain_pos = np.zeros(n, dtype=int)
        self.chain_pred = np.full(n, -1, dtype=int)
        for ln in sorted(set(self.lane.tolist())):
            chain = [i for i in range(n) if self.lane[i] == ln]
            chain.sort(key=lambda i: (-self.vehicles[i].x, self.vehicles[i].vid))
            for pos, i in enumerate(chain):
                self.chain_pos[i] = pos
                if pos:
                    self.chain_pred[i] = chain[pos - 1]

    def sort_key(self, i: int):
        return (self.t_min0[i], self.lane[i], self.vids[i])

    def eval_order(self, order_vids, base_dep: np.ndarray) -> float:
        """Total delay of scheduling vehicles one by one in the given order."""
        index = {vid: i for i, vid in enumerate(self.vids)}
        avail = base_dep.copy()
        delay = 0.0
        for vid in order_vids:
            i = index[vid]
            m = self.onzone[i]
            t_first = max(self.t_min0[i], float(np.max(avail[m] - self.delta[i, m])))
            delay += t_first - self.t_min0[i]
            avail[m] = np.maximum(avail[m], t_first + self.depoff[i, m])
        return delay

    def lane_consistent(self, order_vids) -> bool:
        rank = {vid: r for r, vid in enumerate(order_vids)}
        for i in range(self.n):
            p = self.chain_pred[i]
            if p >= 0 and rank[self.vids[p]] > rank[self.vids[i]]:
                return False
        return True


def fifo_order(prep: SearchPrep, base_dep: np.ndarray) -> CrossingOrder:
    """First come, first served on earliest possible first-zone arrival.

    A follower can never overtake its leader, so the effective key is the
    running maximum of earliest arrivals down each lane chain.
    """
    eff = prep.t_min0.copy()
    for i in sorted(range(prep.n), key=lambda i: prep.chain_pos[i]):
        p = prep.chain_pred[i]
        if p >= 0:
            eff[i] = max(eff[i], eff[p])
    idx = sorted(range(prep.n), key=lambda i: (eff[i], prep.lane[i], prep.chain_pos[i]))
    order = [prep.vids[i] for i in idx]
    return CrossingOrder(order, prep.eval_order(order, base_dep))


def _pairwise_dominance(prep: SearchPrep):
    """strict[i, j]: i's earliest arrival beats j's in every shared zone."""
    a_i = prep.arrmin[:, None, :]
    a_j = prep.arrmin[None, :, :]
    shared = prep.onzone[:, None, :] & prep.onzone[None, :, :]
    strict = ~np.any(shared & (a_i >= a_j), axis=2)
    weak = ~np.any(shared & (a_i > a_j), axis=2)
    return strict, weak


def pp_search(prep: SearchPrep, base_dep: np.ndarray, n_orders: int,
              rng: np.random.Generator) -> CrossingOrder:
    """Best of n_orders randomized priority rollouts.

    Each rollout repeatedly takes, from the heads of the lane chains, the
    vehicle that strictly beats every rival to all shared subzones; failing
    that it draws uniformly among the weakly undominated heads, and if even
    those are empty, among all heads.
    """
    if prep.n == 0:
        return CrossingOrder([], 0.0)
    strict, weak = _pairwise_dominance(prep)
    heads0 = [i for i in range(prep.n) if prep.chain_pred[i] < 0]
    succ = {}
    for j in range(prep.n):
        if prep.chain_pred[j] >= 0:
            succ[prep.chain_pred[j]] = j

    def rollout():
        frontier = list(heads0)
        order = []
        while frontier:
            frontier.sort(key=prep.sort_key)
            doms = [i for i in frontier
                    if all(strict[i, j] for j in frontier if j != i)]
            if len(doms) == 1:
                pick = doms[0]
            else:
                pool = [i for i in frontier
                        if all(weak[i, j] for j in frontier if j != i)]
                if not pool:
                    pool = frontier
                pick = pool[rng.integers(len(pool))] if len(pool) > 1 else pool[0]
            order.append(prep.vids[pick])
            frontier.remove(pick)
            if pick in succ:
                frontier.append(succ[pick])
        return order

    best = None
    for _ in range(max(n_orders, 1)):
        order = rollout()
        delay = prep.eval_order(order, base_dep)
        if best is None or delay < best.total_delay - DELAY_TOL:
            best = CrossingOrder(order, delay)
    best.leaves = max(n_orders, 1)
    return best


class _ObsState:
    """Mutable search node state with an undo log for depth-first traversal."""

    def __init__(self, prep: SearchPrep, base_dep: np.ndarray):
        self.prep = prep
        self.base_dep = base_dep
        n, nz = prep.n, prep.nz
        self.preds = [[] for _ in range(n)]
        self.succs = [[] for _ in range(n)]
        self.popped = np.zeros(n, dtype=bool)
        self.pop_order: list[int] = []
        self.t_first = np.zeros(n)
        self.dep = np.full((n, nz), -np.inf)
        self.cumdep = np.full((n, nz), -np.inf)
        self.cumarr = prep.arrmin.copy()
        self.log: list[tuple] = []
        for i in range(n):
            p = prep.chain_pred[i]
            if p >= 0:
                self.preds[i].append(p)
                self.succs[p].append(i)
        for i in self._topo(range(n)):
            self._reschedule(i, log=False)
        for i in reversed(self._topo(range(n))):
            self._pull_cumarr(i, log=False)

    # -- undo log ---------------------------------------------------------

    def mark(self) -> int:
        return len(self.log)

    def rollback(self, frame: int) -> None:
        while len(self.log) > frame:
            entry = self.log.pop()
            kind = entry[0]
            if kind == "row":
                _, arr, i, old = entry
                arr[i] = old
            elif kind == "t":
                _, i, old = entry
                self.t_first[i] = old
            elif kind == "edge":
                _, a, b = entry
                assert self.succs[a][-1] == b and self.preds[b][-1] == a
                self.succs[a].pop()
                self.preds[b].pop()
            else:
                _, i = entry
                self.popped[i] = False
                assert self.pop_order[-1] == i
                self.pop_order.pop()

    def _save_row(self, arr, i):
        self.log.append(("row", arr, i, arr[i].copy()))

    # -- schedule maintenance --------------------------------------------

    def _topo(self, nodes) -> list[int]:
        nodes = set(nodes)
        indeg = {i: sum(1 for p in self.preds[i] if p in nodes) for i in nodes}
        ready = sorted((i for i in nodes if indeg[i] == 0), key=self.prep.sort_key)
        out = []
        while ready:
            i = ready.pop(0)
            out.append(i)
            changed = False
            for s in self.succs[i]:
                if s in nodes:
                    indeg[s] -= 1
                    if indeg[s] == 0:
                        ready.append(s)
                        changed = True
            if changed:
                ready.sort(key=self.prep.sort_key)
        assert len(out) == len(nodes)
        return out

    def _reschedule(self, i: int, log: bool = True) -> None:
        prep = self.prep
        avail = self.base_dep.copy()
        for p in self.preds[i]:
            np.maximum(avail, self.cumdep[p], out=avail)
        m = prep.onzone[i]
        t = max(prep.t_min0[i], float(np.max(avail[m] - prep.delta[i, m])))
        if log:
            self.log.append(("t", i, self.t_first[i]))
            self._save_row(self.dep, i)
            self._save_row(self.cumdep, i)
        self.t_first[i] = t
        self.dep[i, :] = -np.inf
        self.dep[i, m] = t + prep.depoff[i, m]
        cum = self.dep[i].copy()
        for p in self.preds[i]:
            np.maximum(cum, self.cumdep[p], out=cum)
        self.cumdep[i] = cum

    def _pull_cumarr(self, i: int, log: bool = True) -> None:
        if log:
            self._save_row(self.cumarr, i)
        cum = self.prep.arrmin[i].copy()
        for s in self.succs[i]:
            np.minimum(cum, self.cumarr[s], out=cum)
        self.cumarr[i] = cum

    def _descendants(self, b: int) -> set[int]:
        out = set()
        stack = [b]
        while stack:
            i = stack.pop()
            if i in out:
                continue
            out.add(i)
            stack.extend(self.succs[i])
        return out

    def add_edge(self, a: int, b: int) -> None:
        self.log.append(("edge", a, b))
        self.succs[a].append(b)
        self.preds[b].append(a)
        affected = self._descendants(b)
        for i in self._topo(affected):
            self._reschedule(i)
        if not self.popped[a]:
            # arrival envelopes tighten upward through unpopped ancestors
            up = set()
            stack = [a]
            while stack:
                i = stack.pop()
                if i in up or self.popped[i]:
                    continue
                up.add(i)
                stack.extend(self.preds[i])
            for i in reversed(self._topo(up)):
                self._pull_cumarr(i)

    def pop(self, i: int) -> None:
        self.log.append(("pop", i))
        self.popped[i] = True
        self.pop_order.append(i)

    def frontier(self) -> list[int]:
        out = [i for i in range(self.prep.n)
               if not self.popped[i] and all(self.popped[p] for p in self.preds[i])]
        out.sort(key=self.prep.sort_key)
        return out

    def dominates(self, i: int, j: int) -> bool:
        return bool(np.all(self.cumdep[i] <= self.cumarr[j] + DOM_EPS))

    def total_delay(self) -> float:
        return float(np.sum(self.t_first - self.prep.t_min0))


def obs_search(prep: SearchPrep, base_dep: np.ndarray, n_orders: int,
               rng: np.random.Generator | None = None,
               trace=None) -> CrossingOrder:
    """Budgeted branch and bound over pairwise crossing precedences.

    Starts from the lane-chain precedence graph, greedily commits any frontier
    vehicle whose worst-case departures beat every remaining vehicle's
    best-case arrivals, and otherwise branches both ways on the first
    undecided frontier pair. n_orders bounds the number of leaves explored,
    split half toward the preferred side of each branch. rng is accepted for
    interface symmetry but the search is fully deterministic.
    """
    if prep.n == 0:
        return CrossingOrder([], 0.0)
    state = _ObsState(prep, base_dep)
    best = {"delay": math.inf, "order": None, "leaves": 0}

    def commit_phase(depth: int) -> None:
        while True:
            fr = state.frontier()
            if not fr:
                return
            if len(fr) == 1:
                if trace:
                    trace({"depth": depth, "frontier": 1, "action": "commit",
                           "delay": state.total_delay()})
                state.pop(fr[0])
                continue
            pick = None
            for k in fr:
                if all(state.dominates(k, j) for j in fr if j != k):
                    pick = k
                    break
            if pick is None:
                return
            if trace:
                trace({"depth": depth, "frontier": len(fr), "action": "commit",
                       "delay": state.total_delay()})
            state.pop(pick)
            for j in fr:
                if j != pick:
                    state.add_edge(pick, j)

    def pick_pair(fr: list[int]) -> tuple[int, int]:
        for k in fr:
            mates = [j for j in fr if j != k
                     and not state.dominates(k, j) and not state.dominates(j, k)]
            if mates:
                return k, mates[0]
        for k in fr:
            mates = [j for j in fr if j != k and not state.dominates(k, j)]
            if mates:
                return k, mates[0]
        return fr[0], fr[1]

    def explore(budget: int, depth: int) -> int:
        frame = state.mark()
        commit_phase(depth)
        fr = state.frontier()
        if not fr:
            delay = state.total_delay()
            if trace:
                trace({"depth": depth, "frontier": 0, "action": "leaf",
                       "delay": delay})
            if delay < best["delay"] - DELAY_TOL:
                best["delay"] = delay
                best["order"] = [prep.vids[i] for i in state.pop_order]
            best["leaves"] += 1
            state.rollback(frame)
            return 1
        k, k2 = pick_pair(fr)
        if trace:
            trace({"depth": depth, "frontier": len(fr), "action": "branch",
                   "delay": state.total_delay()})
        used = 0
        frame2 = state.mark()
        state.add_edge(k, k2)
        used += explore((budget + 1) // 2, depth + 1)
        state.rollback(frame2)
        if budget - used > 0:
            state.add_edge(k2, k)
            used += explore(budget - used, depth + 1)
            state.rollback(frame2)
        state.rollback(frame)
        return used

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 20000))
    try:
        explore(max(n_orders, 1), 0)
    finally:
        sys.setrecursionlimit(old_limit)
    order = best["order"]
    delay = prep.eval_order(order, base_dep)
    assert abs(delay - best["delay"]) <= 1e-6
    return CrossingOrder(order, delay, best["leaves"])
