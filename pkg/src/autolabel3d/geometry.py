"""Small geometric helpers shared across modules."""
from __future__ import annotations

import numpy as np


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def rot_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rigid(yaw=0.0, translation=(0.0, 0.0, 0.0)):
    T = np.eye(4)
    T[:3, :3] = rot_z(yaw)
    T[:3, 3] = translation
    return T


def apply(T, points):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return points @ T[:3, :3].T + T[:3, 3]


def yaw_of(T):
    return float(np.arctan2(T[1, 0], T[0, 0]))


def rect_corners(cx, cy, length, width, heading):
    """BEV rectangle corners, counter-clockwise."""
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    R = np.array([[c, -s], [s, c]])
    return local @ R.T + np.array([cx, cy])


def polygon_area(poly):
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_halfplane(poly, keep):
    """Sutherland-Hodgman step; ``keep(p)`` returns a signed value, >= 0 inside."""
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        fa, fb = keep(a), keep(b)
        if fa >= 0:
            out.append(a)
        if (fa >= 0) != (fb >= 0):
            t = fa / (fa - fb)
            out.append(a + t * (b - a))
    return out


def clip_convex(subject, clipper):
    """Intersection of a polygon with a convex counter-clockwise polygon (2D)."""
    poly = [np.asarray(p, dtype=float) for p in subject]
    clipper = np.asarray(clipper, dtype=float)
    m = len(clipper)
    for i in range(m):
        if not poly:
            break
        a, b = clipper[i], clipper[(i + 1) % m]
        e = b - a
        poly = _clip_halfplane(poly, lambda p, a=a, e=e: e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0]))
    return np.array(poly).reshape(-1, 2)


def clip_polygon_to_aabb(poly3d, lo, hi):
    """Clip a planar 3D polygon against an axis-aligned box [lo, hi]."""
    poly = [np.asarray(p, dtype=float) for p in poly3d]
    for axis in range(3):
        if not poly:
            break
        poly = _clip_halfplane(poly, lambda p, ax=axis: p[ax] - lo[ax])
        if not poly:
            break
        poly = _clip_halfplane(poly, lambda p, ax=axis: hi[ax] - p[ax])
    return np.array(poly).reshape(-1, 3)


def polygon_area_3d(poly):
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    s = np.zeros(3)
    for i in range(len(poly)):
        s += np.cross(poly[i], poly[(i + 1) % len(poly)])
    return 0.5 * float(np.linalg.norm(s))
