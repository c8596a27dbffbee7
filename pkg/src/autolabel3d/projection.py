"""LiDAR -> camera -> image projection with frustum culling."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ProjectedPoint(NamedTuple):
    point_index: int
    pixel: tuple
    depth: float


class Projection:
    """Columnar result of :func:`project_frame`.

    Iterating yields :class:`ProjectedPoint` records; the arrays are what the
    rest of the pipeline uses.
    """

    __slots__ = ("indices", "uv", "depth")

    def __init__(self, indices, uv, depth):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        self.depth = np.asarray(depth, dtype=float)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        for i, (u, v), d in zip(self.indices, self.uv, self.depth):
            yield ProjectedPoint(int(i), (float(u), float(v)), float(d))

    def __getitem__(self, k):
        return ProjectedPoint(int(self.indices[k]), tuple(map(float, self.uv[k])), float(self.depth[k]))

    @property
    def pixels(self):
        """Integer pixel cells (floor rasterization)."""
        return np.floor(self.uv).astype(np.int64)


def to_camera(points, calib):
    """p_cam = R p_lidar + t, for one point or an (N, 3) array."""
    points = np.asarray(points, dtype=float)
    return points @ calib.rotation.T + calib.translation


def pixels_from_camera(cam_points, calib):
    """Vectorized pinhole projection. Returns (uv, valid) with culled rows invalid."""
    cam = np.asarray(cam_points, dtype=float).reshape(-1, 3)
    z = cam[:, 2]
    valid = z > 0
    safe = np.where(valid, z, 1.0)
    u = calib.fx * cam[:, 0] / safe + calib.cx
    v = calib.fy * cam[:, 1] / safe + calib.cy
    valid &= (u >= 0) & (u < calib.image_width) & (v >= 0) & (v < calib.image_height)
    return np.stack([u, v], axis=1), valid


def to_pixel(cam_point, calib):
    """(u, v) for a camera-frame point, or ``None`` when behind the camera or off-image."""
    uv, valid = pixels_from_camera(cam_point, calib)
    if not valid[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def project_points(points, calib):
    cam = to_camera(np.asarray(points, dtype=float).reshape(-1, 3), calib)
    uv, valid = pixels_from_camera(cam, calib)
    idx = np.flatnonzero(valid)
    return Projection(idx, uv[idx], cam[idx, 2])


def project_frame(frame, calib):
    """Project a frame into one view, keeping in-image points in input order."""
    return project_points(frame.points, calib)


def unproject(uv, depth, calib):
    """Camera-frame points from pixels and depth (inverse of the pinhole model)."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    depth = np.asarray(depth, dtype=float).reshape(-1)
    x = (uv[:, 0] - calib.cx) * depth / calib.fx
    y = (uv[:, 1] - calib.cy) * depth / calib.fy
    return np.stack([x, y, depth], axis=1)


def in_any_view(points, calibs):
    """Mask of points (LiDAR frame) that project into at least one camera image."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    hit = np.zeros(len(points), dtype=bool)
    for calib in (calibs.values() if isinstance(calibs, dict) else calibs):
        hit[project_points(points, calib).indices] = True
    return hit
