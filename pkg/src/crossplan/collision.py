"""Oriented-rectangle collision checks between vehicle bodies."""

from __future__ import annotations

import math

import numpy as np

PREFILTER_DIST = 30.0


def rect_corners(cx: float, cy: float, psi: float, length: float,
                 width: float) -> np.ndarray:
    """Corners of a centered, heading-aligned rectangle, ccw, shape (4, 2)."""
    ca, sa = math.cos(psi), math.sin(psi)
    hl, hw = length / 2, width / 2
    local = np.array([(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)])
    rot = np.array([(ca, -sa), (sa, ca)])
    return local @ rot.T + (cx, cy)


def rects_overlap(c1: np.ndarray, c2: np.ndarray) -> bool:
    """Separating-axis test over both rectangles' edge normals.

    Touching counts as overlap: a separating axis must leave a strictly
    positive gap.
    """
    for rect in (c1, c2):
        for i in range(2):
            edge = rect[(i + 1) % 4] - rect[i]
            axis = np.array([-edge[1], edge[0]])
            p1 = c1 @ axis
            p2 = c2 @ axis
            if p1.max() < p2.min() or p2.max() < p1.min():
                return False
    return True


def find_collisions(poses, length: float, width: float):
    """Colliding pairs among (vid, cx, cy, psi) tuples, sorted, each once."""
    out = []
    n = len(poses)
    corners = {}
    for i in range(n):
        vi, xi, yi, pi = poses[i]
        for j in range(i + 1, n):
            vj, xj, yj, pj = poses[j]
            if (xi - xj) ** 2 + (yi - yj) ** 2 > PREFILTER_DIST ** 2:
                continue
            if i not in corners:
                corners[i] = rect_corners(xi, yi, pi, length, width)
            if j not in corners:
                corners[j] = rect_corners(xj, yj, pj, length, width)
            if rects_overlap(corners[i], corners[j]):
                out.append(tuple(sorted((vi, vj))))
    out.sort()
    return out
