"""Intersection geometry: lanes, routes, reservation subzones, crossing intervals.

World frame: the intersection square is centered at the origin. Roads are indexed
counterclockwise 0=S, 1=E, 2=N, 3=W; traffic keeps right. Route arc length is
measured from the start of the entering lane, so the intersection boundary sits
at x = lane_length for every route.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

ROAD_NAMES = ("S", "E", "N", "W")

# Inbound unit direction of travel for each road.
_ROAD_DIR = ((0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (1.0, 0.0))

_KIND_BY_TURN = {1: "right", 2: "straight", 3: "left"}

DEFAULT_SPEED_CAPS = {"straight": 13.0, "left": 6.5, "right": 4.5}


class InvalidConfigError(ValueError):
    """Configuration that does not describe a buildable intersection."""


def _right_of(d):
    return (d[1], -d[0])


@dataclass(frozen=True)
class IntersectionConfig:
    lane_width: float = 4.5
    lane_length: float = 250.0
    left_turn_radius: float = 13.5
    right_turn_radius: float = 9.0
    intersection_edge: float = 22.5
    subzone_grid: int = 4
    subzone_style: str = "corner_band"

    def validate(self) -> None:
        for name in ("lane_width", "lane_length", "left_turn_radius",
                     "right_turn_radius", "intersection_edge"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.subzone_grid < 1:
            raise InvalidConfigError("subzone_grid must be >= 1")
        if self.subzone_style not in ("corner_band", "grid"):
            raise InvalidConfigError(f"unknown subzone_style {self.subzone_style!r}")
        if self.intersection_edge < 2 * self.lane_width:
            raise InvalidConfigError("intersection_edge too small for two crossing roads")
        half = self.intersection_edge / 2
        w2 = self.lane_width / 2
        # A turn whose lane tangency point lies outside the square would bulge
        # out of its lane before reaching the intersection.
        if self.right_turn_radius > half - w2 + 1e-9:
            raise InvalidConfigError("right_turn_radius pushes the turn outside the square")
        if self.left_turn_radius > half + w2 + 1e-9:
            raise InvalidConfigError("left_turn_radius pushes the turn outside the square")


@dataclass(frozen=True)
class _Segment:
    kind: str                 # "line" | "arc"
    length: float
    p0: tuple[float, float] = (0.0, 0.0)
    direction: tuple[float, float] = (1.0, 0.0)   # line only
    center: tuple[float, float] = (0.0, 0.0)      # arc only
    radius: float = 0.0
    ang0: float = 0.0
    dang: float = 0.0                             # signed sweep, ccw positive


@dataclass(frozen=True)
class RouteSpec:
    route_id: tuple[int, int]
    kind: str
    segments: tuple[_Segment, ...]
    length: float
    x_mid: float
    entry_road: int
    exit_road: int

    @property
    def name(self) -> str:
        return f"{ROAD_NAMES[self.entry_road]}-{ROAD_NAMES[self.exit_road]}"

    def _locate(self, s):
        """Segment index and local offset for scalar arc length s (clamped)."""
        rem = s
        for idx, seg in enumerate(self.segments):
            if rem <= seg.length or idx == len(self.segments) - 1:
                return idx, rem
            rem -= seg.length
        raise AssertionError

    def point(self, s: np.ndarray | float) -> np.ndarray:
        """Centerline point(s) at arc length s; shape (..., 2)."""
        s_arr = np.asarray(s, dtype=float)
        out = np.zeros(s_arr.shape + (2,))
        start = 0.0
        last = len(self.segments) - 1
        for idx, seg in enumerate(self.segments):
            lo, hi = start, start + seg.length
            mask = (s_arr > lo) if idx > 0 else np.ones(s_arr.shape, dtype=bool)
            if idx < last:
                mask &= s_arr <= hi
            u = s_arr[mask] - lo
            if seg.kind == "line":
                out[mask, 0] = seg.p0[0] + u * seg.direction[0]
                out[mask, 1] = seg.p0[1] + u * seg.direction[1]
            else:
                ang = seg.ang0 + math.copysign(1.0, seg.dang) * u / seg.radius
                out[mask, 0] = seg.center[0] + seg.radius * np.cos(ang)
                out[mask, 1] = seg.center[1] + seg.radius * np.sin(ang)
            start = hi
        return out if s_arr.shape else out.reshape(2)

    def heading(self, s: np.ndarray | float) -> np.ndarray:
        s_arr = np.asarray(s, dtype=float)
        out = np.zeros(s_arr.shape)
        start = 0.0
        last = len(self.segments) - 1
        for idx, seg in enumerate(self.segments):
            lo, hi = start, start + seg.length
            mask = (s_arr > lo) if idx > 0 else np.ones(s_arr.shape, dtype=bool)
            if idx < last:
                mask &= s_arr <= hi
            u = s_arr[mask] - lo
            if seg.kind == "line":
                out[mask] = math.atan2(seg.direction[1], seg.direction[0])
            else:
                sgn = math.copysign(1.0, seg.dang)
                ang = seg.ang0 + sgn * u / seg.radius
                out[mask] = ang + sgn * math.pi / 2
            start = hi
        return out if s_arr.shape else float(out)

    def normal(self, s: np.ndarray | float) -> np.ndarray:
        """Unit left normal(s) of the centerline; shape (..., 2)."""
        psi = self.heading(s)
        return np.stack([-np.sin(psi), np.cos(psi)], axis=-1)

    def curvature(self, s: float) -> float:
        """Signed centerline curvature at s (ccw positive)."""
        idx, _ = self._locate(min(max(s, 0.0), self.length))
        seg = self.segments[idx]
        if seg.kind == "line":
            return 0.0
        return math.copysign(1.0 / seg.radius, seg.dang)

    def project(self, p, hint: float | None = None) -> tuple[float, float]:
        """Arc length and signed lateral offset (left positive) of point p.

        The first and last segments extrapolate beyond the route ends so poses
        slightly off either end still project.
        """
        px, py = float(p[0]), float(p[1])
        best = None
        start = 0.0
        for idx, seg in enumerate(self.segments):
            if seg.kind == "line":
                dx, dy = seg.direction
                u = (px - seg.p0[0]) * dx + (py - seg.p0[1]) * dy
                lo = -math.inf if idx == 0 else 0.0
                hi = math.inf if idx == len(self.segments) - 1 else seg.length
                u = min(max(u, lo), hi)
                qx, qy = seg.p0[0] + u * dx, seg.p0[1] + u * dy
                lat = (px - qx) * (-dy) + (py - qy) * dx
                s_here = start + u
                dist = math.hypot(px - qx, py - qy)
            else:
                ang = math.atan2(py - seg.center[1], px - seg.center[0])
                sgn = math.copysign(1.0, seg.dang)
                rel = (ang - seg.ang0) * sgn
                rel = (rel + math.pi) % (2 * math.pi) - math.pi
                rel = min(max(rel, 0.0), abs(seg.dang))
                u = rel * seg.radius
                a = seg.ang0 + sgn * rel
                qx = seg.center[0] + seg.radius * math.cos(a)
                qy = seg.center[1] + seg.radius * math.sin(a)
                psi = a + sgn * math.pi / 2
                lat = -(px - qx) * math.sin(psi) + (py - qy) * math.cos(psi)
                s_here = start + u
                dist = math.hypot(px - qx, py - qy)
            if best is None or dist < best[0] - 1e-12:
                best = (dist, s_here, lat)
            start += seg.length
        return best[1], best[2]


@dataclass(frozen=True)
class Subzone:
    zone_id: int
    label: str
    # corner-band descriptor
    quadrant: int = -1
    band: int = -1            # 0 near the square corner, 1 far
    edge_road: int = -1
    # grid descriptor
    cell: tuple[int, int] = (-1, -1)


@dataclass(frozen=True)
class SubzoneInterval:
    zone_id: int
    x_start: float
    x_end: float
    v_limit: float


# Distance from a point to each square edge line, as linear coefficients
# (a, b, c) with d = a*x + b*y + c, valid inside the square.
def _edge_dist_coeffs(road: int, half: float):
    return {
        0: (0.0, 1.0, half),    # S edge y = -half
        1: (-1.0, 0.0, half),   # E edge x = +half
        2: (0.0, -1.0, half),   # N edge y = +half
        3: (1.0, 0.0, half),    # W edge x = -half
    }[road]


_QUAD_NAMES = ("NE", "NW", "SW", "SE")
# Quadrant index -> (x sign, y sign), counterclockwise from NE.
_QUAD_SIGNS = ((1, 1), (-1, 1), (-1, -1), (1, -1))
# Roads whose edges bound each quadrant, sorted ascending.
_QUAD_EDGES = ((1, 2), (2, 3), (0, 3), (0, 1))


def _build_subzones(config: IntersectionConfig) -> tuple[Subzone, ...]:
    if config.subzone_style == "grid":
        n = config.subzone_grid
        zones = []
        for row in range(n):
            for col in range(n):
                zones.append(Subzone(zone_id=row * n + col,
                                     label=f"r{row}c{col}", cell=(row, col)))
        return tuple(zones)
    zones = []
    for q in range(4):
        edges = _QUAD_EDGES[q]
        for band in (0, 1):
            for h, road in enumerate(edges):
                zid = 4 * q + 2 * band + h
                band_name = "near" if band == 0 else "far"
                zones.append(Subzone(zone_id=zid,
                                     label=f"{_QUAD_NAMES[q]}-{band_name}-{ROAD_NAMES[road]}",
                                     quadrant=q, band=band, edge_road=road))
    return tuple(zones)


def _rotation_permutation(zones: tuple[Subzone, ...], config: IntersectionConfig) -> tuple[int, ...]:
    """zone_id -> zone_id under a 90 degree ccw rotation of the plane."""
    if config.subzone_style == "grid":
        n = config.subzone_grid
        perm = [0] * len(zones)
        for z in zones:
            row, col = z.cell
            # ccw: (x, y) -> (-y, x), so cell (row, col) -> (col, n-1-row)
            perm[z.zone_id] = col * n + (n - 1 - row)
        return tuple(perm)
    by_desc = {(z.quadrant, z.band, z.edge_road): z.zone_id for z in zones}
    perm = [0] * len(zones)
    for z in zones:
        q2 = (z.quadrant + 1) % 4
        e2 = (z.edge_road + 1) % 4
        perm[z.zone_id] = by_desc[(q2, z.band, e2)]
    return tuple(perm)


class _ZoneGeom:
    """Closed-form membership and segment-occupancy tests for one subzone."""

    def __init__(self, zone: Subzone, config: IntersectionConfig):
        half = config.intersection_edge / 2
        self.zone = zone
        if config.subzone_style == "grid":
            n = config.subzone_grid
            cell = config.intersection_edge / n
            row, col = zone.cell
            self.box = (-half + col * cell, -half + (col + 1) * cell,
                        -half + row * cell, -half + (row + 1) * cell)
            self.halfplane = None
            self.circle = None
            return
        sx, sy = _QUAD_SIGNS[zone.quadrant]
        self.box = (min(0.0, sx * half), max(0.0, sx * half),
                    min(0.0, sy * half), max(0.0, sy * half))
        self.corner = (sx * half, sy * half)
        a0, b0, c0 = _edge_dist_coeffs(zone.edge_road, half)
        other = [r for r in _QUAD_EDGES[zone.quadrant] if r != zone.edge_road][0]
        a1, b1, c1 = _edge_dist_coeffs(other, half)
        # membership: dist to own edge <= dist to the other edge
        self.halfplane = (a0 - a1, b0 - b1, c0 - c1)
        rho = (config.right_turn_radius + config.left_turn_radius) / 2
        self.circle = (self.corner, rho, zone.band)   # band 0: inside, 1: outside

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized membership for points of shape (..., 2)."""
        x, y = pts[..., 0], pts[..., 1]
        x0, x1, y0, y1 = self.box
        ok = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        if self.halfplane is not None:
            a, b, c = self.halfplane
            ok &= a * x + b * y + c <= 1e-12
        if self.circle is not None:
            (cx, cy), rho, band = self.circle
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            ok &= d2 <= rho * rho if band == 0 else d2 >= rho * rho
        return ok

    def segment_hits(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """True where segment a[i] -> b[i] intersects the zone. Shapes (m, 2)."""
        ax, ay = a[:, 0], a[:, 1]
        dx, dy = b[:, 0] - ax, b[:, 1] - ay
        t0 = np.zeros(len(a))
        t1 = np.ones(len(a))
        x0, x1, y0, y1 = self.box
        for p, d, q0, q1 in ((ax, dx, x0, x1), (ay, dy, y0, y1)):
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (q0 - p) / d
                tb = (q1 - p) / d
            lo = np.minimum(ta, tb)
            hi = np.maximum(ta, tb)
            flat = np.abs(d) < 1e-15
            inside = (p >= q0) & (p <= q1)
            t0 = np.where(flat, np.where(inside, t0, 1.0), np.maximum(t0, lo))
            t1 = np.where(flat, np.where(inside, t1, 0.0), np.minimum(t1, hi))
        if self.halfplane is not None:
            ha, hb, hc = self.halfplane
            g0 = ha * ax + hb * ay + hc
            gd = ha * dx + hb * dy
            with np.errstate(divide="ignore", invalid="ignore"):
                tc = -g0 / gd
            flat = np.abs(gd) < 1e-15
            inside = g0 <= 1e-12
            # g(t) <= 0 on one side of tc
            lo_side = gd > 0
            t0 = np.where(flat, np.where(inside, t0, 1.0),
                          np.where(lo_side, t0, np.maximum(t0, tc)))
            t1 = np.where(flat, np.where(inside, t1, 0.0),
                          np.where(lo_side, np.minimum(t1, tc), t1))
        if self.circle is None:
            return t0 <= t1 + 1e-15
        (cx, cy), rho, band = self.circle
        fx, fy = ax - cx, ay - cy
        qa = dx * dx + dy * dy
        qb = 2 * (fx * dx + fy * dy)
        qc = fx * fx + fy * fy - rho * rho
        disc = qb * qb - 4 * qa * qc
        sq = np.sqrt(np.maximum(disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r0 = (-qb - sq) / (2 * qa)
            r1 = (-qb + sq) / (2 * qa)
        has_roots = (disc >= 0) & (qa > 1e-15)
        if band == 0:
            # inside the disk: intersect [t0, t1] with [r0, r1]
            hit = has_roots & (np.maximum(t0, r0) <= np.minimum(t1, r1) + 1e-15)
            return hit & (t0 <= t1 + 1e-15)
        # outside the disk: [t0, t1] minus (r0, r1), nonempty either side
        no_cut = ~has_roots
        left = t0 <= np.minimum(t1, r0) + 1e-15
        right = np.maximum(t0, r1) <= t1 + 1e-15
        return (t0 <= t1 + 1e-15) & (no_cut | left | right)


@dataclass
class IntersectionModel:
    config: IntersectionConfig
    vehicle_width: float
    routes: dict[tuple[int, int], RouteSpec]
    subzones: tuple[Subzone, ...]
    crossing: dict[tuple[int, int], tuple[SubzoneInterval, ...]]
    zones_of: dict[tuple[int, int], frozenset[int]]
    rotation: tuple[int, ...]
    speed_caps: dict[str, float]

    @property
    def n_zones(self) -> int:
        return len(self.subzones)

    def route_ids(self):
        return sorted(self.routes)

    def crossing_cap(self, route_id) -> float:
        """Constant crossing-speed cap for a route (min over its subzone limits)."""
        return min(iv.v_limit for iv in self.crossing[route_id])

    def first_gate(self, route_id) -> float:
        """Arc length of the first subzone boundary along the route."""
        return self.crossing[route_id][0].x_start

    def turn_families(self):
        """The two sets of four simultaneous turns that must be subzone-disjoint."""
        fam1 = ((0, 3), (2, 1), (3, 0), (1, 2))   # S,N left + W,E right
        fam2 = ((1, 0), (3, 2), (0, 1), (2, 3))   # E,W left + S,N right
        return fam1, fam2

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["route_id", "subzone_id", "x_start", "x_end", "v_limit"])
            for rid in self.route_ids():
                route = self.routes[rid]
                for iv in self.crossing[rid]:
                    w.writerow([route.name, iv.zone_id, repr(iv.x_start),
                                repr(iv.x_end), repr(iv.v_limit)])


def _build_route(config: IntersectionConfig, i: int, j: int) -> RouteSpec:
    half = config.intersection_edge / 2
    w2 = config.lane_width / 2
    L = config.lane_length
    d = _ROAD_DIR[i]
    r_in = _right_of(d)
    b_in = (-d[0] * half + r_in[0] * w2, -d[1] * half + r_in[1] * w2)
    start = (b_in[0] - d[0] * L, b_in[1] - d[1] * L)
    turn = (j - i) % 4
    kind = _KIND_BY_TURN[turn]
    o = (-_ROAD_DIR[j][0], -_ROAD_DIR[j][1])      # outbound direction on road j
    r_out = _right_of(o)
    b_out = (-_ROAD_DIR[j][0] * half + r_out[0] * w2,
             -_ROAD_DIR[j][1] * half + r_out[1] * w2)
    if kind == "straight":
        length = 2 * L + config.intersection_edge
        seg = _Segment("line", length, p0=start, direction=d)
        return RouteSpec((i, j), kind, (seg,), length, L + half, i, j)
    radius = config.right_turn_radius if kind == "right" else config.left_turn_radius
    sgn = -1.0 if kind == "right" else 1.0        # cw for right turns
    n_in = r_in if kind == "right" else (-r_in[0], -r_in[1])
    n_out = r_out if kind == "right" else (-r_out[0], -r_out[1])
    # center satisfies (c - b_in) . n_in = radius and (c - b_out) . n_out = radius
    a_mat = np.array([[n_in[0], n_in[1]], [n_out[0], n_out[1]]])
    rhs = np.array([radius + b_in[0] * n_in[0] + b_in[1] * n_in[1],
                    radius + b_out[0] * n_out[0] + b_out[1] * n_out[1]])
    cx, cy = np.linalg.solve(a_mat, rhs)
    t_in_u = (cx - b_in[0]) * d[0] + (cy - b_in[1]) * d[1]
    t_in = (b_in[0] + t_in_u * d[0], b_in[1] + t_in_u * d[1])
    t_out_u = (cx - b_out[0]) * o[0] + (cy - b_out[1]) * o[1]
    t_out = (b_out[0] + t_out_u * o[0], b_out[1] + t_out_u * o[1])
    ang0 = math.atan2(t_in[1] - cy, t_in[0] - cx)
    ang1 = math.atan2(t_out[1] - cy, t_out[0] - cx)
    dang = sgn * math.pi / 2   # four-way right-angle crossing, always a quarter arc
    assert abs(math.remainder(ang0 + dang - ang1, 2 * math.pi)) < 1e-9
    entry_len = L + t_in_u
    arc_len = radius * math.pi / 2
    # distance from the exit tangency to the end of the exit lane
    end = (b_out[0] + o[0] * L, b_out[1] + o[1] * L)
    exit_len = math.hypot(end[0] - t_out[0], end[1] - t_out[1])
    segs = (
        _Segment("line", entry_len, p0=start, direction=d),
        _Segment("arc", arc_len, center=(float(cx), float(cy)), radius=radius,
                 ang0=ang0, dang=dang),
        _Segment("line", exit_len, p0=t_out, direction=o),
    )
    length = entry_len + arc_len + exit_len
    return RouteSpec((i, j), kind, segs, length, entry_len + arc_len / 2, i, j)


def compute_subzone_intervals(route: RouteSpec, vehicle_width: float,
                              zone_geoms, config: IntersectionConfig,
                              v_limit: float) -> list[SubzoneInterval]:
    """Arc-length interval per subzone over which the width strip touches it.

    The strip is the vehicle-width cross-section centered on the route, swept
    along arc length. Coarse 2 cm scan bracketed down to 1e-7 m by bisection.
    """
    L = config.lane_length
    lo = max(0.0, L - 2.0)
    hi = min(route.length, route.length - L + 2.0)
    n = int(math.ceil((hi - lo) / 0.02)) + 1
    s_grid = np.linspace(lo, hi, n)
    pts = route.point(s_grid)
    nrm = route.normal(s_grid)
    a = pts - nrm * (vehicle_width / 2)
    b = pts + nrm * (vehicle_width / 2)

    def occupied_at(geom, s: float) -> bool:
        p = route.point(np.array([s]))
        nv = route.normal(np.array([s]))
        aa = p - nv * (vehicle_width / 2)
        bb = p + nv * (vehicle_width / 2)
        return bool(geom.segment_hits(aa, bb)[0])

    def refine(geom, s_occ: float, s_free: float) -> float:
        for _ in range(40):
            mid = 0.5 * (s_occ + s_free)
            if occupied_at(geom, mid):
                s_occ = mid
            else:
                s_free = mid
            if abs(s_occ - s_free) < 1e-7:
                break
        return 0.5 * (s_occ + s_free)

    out = []
    for geom in zone_geoms:
        occ = geom.segment_hits(a, b)
        idx = np.nonzero(occ)[0]
        if len(idx) == 0:
            continue
        first, last = idx[0], idx[-1]
        if first == 0 or last == n - 1:
            raise InvalidConfigError(
                f"sweep window too narrow for route {route.name}, zone {geom.zone.zone_id}")
        x_start = refine(geom, s_grid[first], s_grid[first - 1])
        x_end = refine(geom, s_grid[last], s_grid[last + 1])
        out.append(SubzoneInterval(geom.zone.zone_id, float(x_start), float(x_end), v_limit))
    out.sort(key=lambda iv: (iv.x_start, iv.x_end, iv.zone_id))
    return out


def build_intersection(config: IntersectionConfig, vehicle_width: float = 2.0,
                       speed_caps: dict[str, float] | None = None) -> IntersectionModel:
    """Construct the full intersection model: 12 routes, subzones, crossing intervals."""
    config.validate()
    caps = dict(DEFAULT_SPEED_CAPS if speed_caps is None else speed_caps)
    zones = _build_subzones(config)
    geoms = [_ZoneGeom(z, config) for z in zones]
    routes = {}
    crossing = {}
    zones_of = {}
    for i in range(4):
        for turn in (1, 2, 3):
            j = (i + turn) % 4
            route = _build_route(config, i, j)
            ivs = compute_subzone_intervals(route, vehicle_width, geoms, config,
                                            caps[route.kind])
            if not ivs:
                raise InvalidConfigError(f"route {route.name} crosses no subzone")
            routes[(i, j)] = route
            crossing[(i, j)] = tuple(ivs)
            zones_of[(i, j)] = frozenset(iv.zone_id for iv in ivs)
    return IntersectionModel(
        config=config, vehicle_width=vehicle_width, routes=routes,
        subzones=zones, crossing=crossing, zones_of=zones_of,
        rotation=_rotation_permutation(zones, config), speed_caps=caps)


def route_pose(route: RouteSpec, x: float) -> tuple[float, float, float]:
    """Centerline pose (x_x, x_y, heading) at arc length x in [0, length]."""
    if x < -1e-9 or x > route.length + 1e-9:
        raise ValueError(f"arc length {x} outside route {route.name}")
    p = route.point(float(x))
    return float(p[0]), float(p[1]), float(route.heading(float(x)))


def pose_extrapolated(route: RouteSpec, x: float) -> tuple[float, float, float]:
    """Pose at arc length x, extrapolating linearly beyond either route end."""
    if 0.0 <= x <= route.length:
        return route_pose(route, x)
    if x < 0.0:
        px, py, psi = route_pose(route, 0.0)
        return px + x * math.cos(psi), py + x * math.sin(psi), psi
    px, py, psi = route_pose(route, route.length)
    d = x - route.length
    return px + d * math.cos(psi), py + d * math.sin(psi), psi
