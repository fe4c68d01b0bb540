import itertools
import math

import numpy as np

from crossplan.geometry import (IntersectionConfig, build_intersection,
                                route_pose, _ZoneGeom)

cfg = IntersectionConfig()
model = build_intersection(cfg)

print("n routes:", len(model.routes))
for rid in model.route_ids():
    r = model.routes[rid]
    ivs = model.crossing[rid]
    print(f"{r.name:5s} {r.kind:8s} len={r.length:.4f} x_mid={r.x_mid:.4f} "
          f"zones={len(ivs)} first_gate={ivs[0].x_start:.6f}")
    for iv in ivs:
        z = model.subzones[iv.zone_id]
        print(f"    z{iv.zone_id:2d} {z.label:12s} [{iv.x_start:10.4f}, {iv.x_end:10.4f}] "
              f"v<={iv.v_limit}")

print("\nexpected lengths: straight 522.5, left", 500 + math.pi * 13.5 / 2,
      "right", 500 + math.pi * 9 / 2)

# rotation permutation symmetry: intervals of rotated route == intervals of
# base route with zone ids mapped
perm = model.rotation
ok = True
for (i, j), ivs in model.crossing.items():
    i2, j2 = (i + 1) % 4, (j + 1) % 4
    ivs2 = model.crossing[(i2, j2)]
    mapped = sorted((perm[iv.zone_id], round(iv.x_start, 5), round(iv.x_end, 5)) for iv in ivs)
    direct = sorted((iv.zone_id, round(iv.x_start, 5), round(iv.x_end, 5)) for iv in ivs2)
    if mapped != direct:
        ok = False
        print("rotation mismatch", (i, j), "->", (i2, j2))
        print("  mapped:", mapped)
        print("  direct:", direct)
print("rotation symmetry:", ok)

# turn family disjointness
for fam in model.turn_families():
    pairs_ok = True
    for a, b in itertools.combinations(fam, 2):
        inter = model.zones_of[a] & model.zones_of[b]
        if inter:
            pairs_ok = False
            print("  overlap", a, b, inter)
    print("family", fam, "disjoint:", pairs_ok)

# grid mode: straight route should cross 4 cells
gm = build_intersection(IntersectionConfig(subzone_style="grid", subzone_grid=4))
print("\ngrid straight S-N zones:", len(gm.crossing[(0, 2)]),
      [iv.zone_id for iv in gm.crossing[(0, 2)]])
g1 = build_intersection(IntersectionConfig(subzone_style="grid", subzone_grid=1))
print("grid1 straight S-N zones:", len(g1.crossing[(0, 2)]),
      [iv.zone_id for iv in g1.crossing[(0, 2)]])

# poses
for rid in [(0, 2), (0, 1), (0, 3)]:
    r = model.routes[rid]
    print(r.name, "start", route_pose(r, 0.0), "end", route_pose(r, r.length))

# projection round trip
r = model.routes[(0, 3)]
for s in [0.0, 100.0, 250.0, 255.0, 263.0, 400.0, r.length]:
    p = r.point(s)
    n = r.normal(s)
    q = p + 0.3 * n
    s2, lat = r.project(q)
    assert abs(s2 - s) < 1e-6 and abs(lat - 0.3) < 1e-6, (s, s2, lat)
print("projection round trip ok")
