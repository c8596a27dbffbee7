"""Oriented 3D boxes from instance point sets.

Static tracks are aggregated in the global frame and fitted once; dynamic
tracks are fitted per frame, their sizes pinned to a per-track anchor, and the
resulting trajectory smoothed with a constant-velocity Kalman/RTS smoother.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import median_filter
from scipy.spatial import cKDTree

from .geometry import rect_corners, wrap_angle
from .sampling import farthest_point_indices

log = logging.getLogger(__name__)

STATIC = "static"
DYNAMIC = "dynamic"


class DegenerateFitError(ValueError):
    pass


@dataclass(eq=False)
class Box3D:
    center: np.ndarray
    dims: np.ndarray  # length, width, height
    heading: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3).copy()
        self.dims = np.asarray(self.dims, dtype=float).reshape(3).copy()
        heading = float(self.heading)
        if self.dims[1] > self.dims[0]:
            self.dims[[0, 1]] = self.dims[[1, 0]]
            heading += np.pi / 2
        self.heading = float(wrap_angle(heading))

    def __repr__(self):
        c, d = np.round(self.center, 3).tolist(), np.round(self.dims, 3).tolist()
        return f"Box3D(center={c}, dims={d}, heading={self.heading:.4f})"

    @property
    def volume(self):
        return float(np.prod(self.dims))

    def bev_corners(self):
        return rect_corners(self.center[0], self.center[1], self.dims[0], self.dims[1], self.heading)

    def to_local(self, points):
        """Points expressed in the box frame (x along heading)."""
        p = np.asarray(points, dtype=float).reshape(-1, 3) - self.center
        c, s = np.cos(self.heading), np.sin(self.heading)
        return np.stack([c * p[:, 0] + s * p[:, 1], -s * p[:, 0] + c * p[:, 1], p[:, 2]], axis=1)

    def contains(self, points, inflate=0.0):
        """Mask of points inside the box scaled by (1 + inflate)."""
        loc = self.to_local(points)
        half = self.dims * (1.0 + inflate) / 2.0 + 1e-9
        return (np.abs(loc) <= half).all(axis=1)

    def transformed(self, T):
        """The same physical box under the rigid transform ``T`` (4x4)."""
        T = np.asarray(T, dtype=float)
        d = T[:3, :3] @ np.array([np.cos(self.heading), np.sin(self.heading), 0.0])
        return Box3D(T[:3, :3] @ self.center + T[:3, 3], self.dims, float(np.arctan2(d[1], d[0])))

    def with_dims(self, dims):
        return Box3D(self.center, dims, self.heading)


@dataclass
class Rect2D:
    center: np.ndarray
    length: float
    width: float
    heading: float
    score: float = 0.0


# ---------------------------------------------------------------------------
# L-shape fitting (closeness criterion)

CLOSENESS_D0 = 0.01


def _closeness(c, lo, hi):
    return np.minimum(np.abs(hi - c), np.abs(c - lo))


def _score_angles(pts, angles, d0):
    cos, sin = np.cos(angles), np.sin(angles)
    c1 = pts[:, :1] * cos + pts[:, 1:2] * sin
    c2 = -pts[:, :1] * sin + pts[:, 1:2] * cos
    d = np.minimum(_closeness(c1, c1.min(0), c1.max(0)), _closeness(c2, c2.min(0), c2.max(0)))
    return (1.0 / np.maximum(d, d0)).sum(axis=0)


def _check_fit_input(pts):
    if len(pts) < 3:
        raise DegenerateFitError(f"L-shape fit needs >= 3 points, got {len(pts)}")
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-12):
        raise DegenerateFitError("points are collinear")


def _principal_angle(pts):
    cov = pts.T @ pts
    w, v = np.linalg.eigh(cov)
    major = v[:, -1]
    return float(np.arctan2(major[1], major[0]) % (np.pi / 2))


def l_shape_fit(points, angle_step=np.deg2rad(1.0), refine=True, d0=CLOSENESS_D0, search=None):
    """Best BEV rectangle by the closeness criterion.

    A quarter turn of headings is scanned at ``angle_step`` and the best one is
    refined on a 20x finer grid around it. ``search`` optionally
    gives (center_angle, half_range) to scan instead of the full quarter turn.
    The returned rectangle has length >= width and heading in [-pi/2, pi/2).
    """
    pts = np.asarray(points, dtype=float)[:, :2]
    _check_fit_input(pts)
    origin = pts.mean(axis=0)
    pts = pts - origin
    if search is None:
        # grid anchored to the principal axis so the fit commutes with rotations
        angles = _principal_angle(pts) + np.arange(0.0, np.pi / 2, angle_step)
    else:
        c, half = search
        angles = c + np.arange(-half, half + angle_step / 2, angle_step)
    scores = _score_angles(pts, angles, d0)
    best = angles[int(np.argmax(scores))]
    if refine:
        fine = best + np.linspace(-angle_step, angle_step, 41)
        fs = _score_angles(pts, fine, d0)
        best = fine[int(np.argmax(fs))]
        best_score = float(fs.max())
    else:
        best_score = float(scores.max())
    cos, sin = np.cos(best), np.sin(best)
    c1 = pts[:, 0] * cos + pts[:, 1] * sin
    c2 = -pts[:, 0] * sin + pts[:, 1] * cos
    lo1, hi1, lo2, hi2 = c1.min(), c1.max(), c2.min(), c2.max()
    m1, m2 = (lo1 + hi1) / 2, (lo2 + hi2) / 2
    center = origin + np.array([m1 * cos - m2 * sin, m1 * sin + m2 * cos])
    length, width, heading = hi1 - lo1, hi2 - lo2, best
    if width > length:
        length, width, heading = width, length, heading + np.pi / 2
    heading = float((heading + np.pi / 2) % np.pi - np.pi / 2)
    return Rect2D(center, float(length), float(width), heading, best_score)


def footprint_points(points, clearance):
    """Points at least ``clearance`` above the lowest one.

    Ground returns that bleed into an object's mask sit at its base, so the
    footprint is fitted above that band. All points are returned when fewer
    than three clear it or the survivors are collinear in BEV.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if clearance <= 0 or len(pts) < 3:
        return pts
    high = pts[pts[:, 2] >= pts[:, 2].min() + clearance]
    try:
        _check_fit_input(high[:, :2])
    except DegenerateFitError:
        return pts
    return high


def box_from_points(points, angle_step=np.deg2rad(1.0), search=None, clearance=0.0):
    """L-shape footprint plus the vertical extent of the points.

    The footprint ignores the lowest ``clearance`` metres (see ``footprint_points``).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    rect = l_shape_fit(footprint_points(pts, clearance)[:, :2], angle_step=angle_step, search=search)
    zlo, zhi = pts[:, 2].min(), pts[:, 2].max()
    height = max(zhi - zlo, 1e-3)
    return Box3D([rect.center[0], rect.center[1], (zlo + zhi) / 2], [max(rect.length, 1e-3), max(rect.width, 1e-3), height],
                 rect.heading)


# ---------------------------------------------------------------------------
# configuration and track container


@dataclass
class SmoothConfig:
    process_noise: float = 0.5  # m/s^2, white-noise acceleration
    measurement_noise: float = 0.3  # m
    heading_gate_deg: float = 5.0  # max RMS residual for the linear heading fit


@dataclass
class BoxConfig:
    motion_threshold: float = 1.0  # m of global centroid drift
    drift_rate: float = 0.02  # m/s allowance added over long tracks
    n_fit_static: int = 4096
    n_fit_dynamic: int = 512
    inflate: float = 0.1
    outlier_radius: float = 0.5  # metres; density gate applied before the initial fit
    outlier_neighbors: int = 3
    heading_window_deg: float = 15.0
    angle_step_deg: float = 1.0
    min_points: int = 3
    consistency_window: int = 5  # frames in the running median of centroids
    ground_clearance: float = 0.25  # m above a track's lowest point ignored by footprint fits
    pedestrian_ratio: float = 1.2
    smoothing: SmoothConfig = field(default_factory=SmoothConfig)


@dataclass
class ObjectTrack:
    instance_id: int
    category: str
    points: dict  # frame -> (N, 3) LiDAR frame
    motion_state: Optional[str] = None
    boxes: dict = field(default_factory=dict)  # frame -> Box3D, LiDAR frame
    trajectory: dict = field(default_factory=dict)  # frame -> global center
    anchor: Optional[np.ndarray] = None
    interpolated: set = field(default_factory=set)

    def frames_with_points(self, min_points=1):
        return sorted(f for f, p in self.points.items() if len(p) >= min_points)


def _pose_matrix(pose):
    return np.asarray(getattr(pose, "transform", pose), dtype=float)


def _to_global(points, pose):
    T = _pose_matrix(pose)
    return np.asarray(points, float).reshape(-1, 3) @ T[:3, :3].T + T[:3, 3]


def consistent_frames(points_by_frame, poses, limit=1.0, window=5):
    """Frames whose global centroid stays within ``limit`` of a running median.

    A running median leaves monotone (moving) and constant (static) centroid
    sequences untouched, so only isolated jumps are dropped, such as a frame
    whose points were captured from a neighbouring object's edge.
    """
    frames = sorted(f for f, p in points_by_frame.items() if len(p))
    if len(frames) < 3:
        return frames
    cents = np.array([_to_global(points_by_frame[f], poses[f]).mean(axis=0)[:2] for f in frames])
    med = median_filter(cents, size=(min(window, len(frames)), 1), mode="nearest")
    dev = np.hypot(*(cents - med).T)
    return [f for f, d in zip(frames, dev) if d <= limit]


def swept_growth(global_points):
    """How much longer the union of the frames is than its longest single frame.

    Lengths are BEV extents along the principal axes of the union. Partial
    views of a static object all lie inside its footprint, so the union is no
    longer than the best single view of it; a mover sweeps out extra length.
    """
    frames = [np.asarray(p, dtype=float)[:, :2] for p in global_points if len(p)]
    union = np.concatenate(frames)
    centred = union - union.mean(axis=0)
    _, vecs = np.linalg.eigh(centred.T @ centred)
    growth = 0.0
    for axis in vecs.T:
        proj = centred @ axis
        single = max(float(np.ptp((f - union.mean(axis=0)) @ axis)) for f in frames)
        growth = max(growth, float(np.ptp(proj)) - single)
    return growth


def classify_motion(points_by_frame, poses, timestamps=None, threshold=1.0, drift_rate=0.02):
    """``'dynamic'`` iff the track has moved by more than the drift limit.

    Two readings must both exceed the limit: the largest displacement between
    per-frame global centroids, and the swept growth of the aggregated points
    (``swept_growth``). The second keeps partially observed static objects,
    whose visible centroid slides as the viewpoint changes, from being called
    dynamic.
    """
    frames = sorted(f for f, p in points_by_frame.items() if len(p))
    if len(frames) < 2:
        log.info("motion state of a single-frame track defaults to static")
        return STATIC
    glob = [_to_global(points_by_frame[f], poses[f]) for f in frames]
    cents = np.array([g.mean(axis=0) for g in glob])
    diff = cents[:, None, :2] - cents[None, :, :2]
    drift = float(np.sqrt((diff ** 2).sum(-1)).max())
    limit = threshold
    if timestamps is not None:
        limit = max(drift_rate * (timestamps[frames[-1]] - timestamps[frames[0]]), threshold)
    if drift <= limit:
        return STATIC
    return DYNAMIC if swept_growth(glob) > limit else STATIC


# ---------------------------------------------------------------------------
# static path


def dense_points(points, radius, min_neighbors):
    """Mask of points with at least ``min_neighbors`` others within ``radius``.

    Falls back to all points when the gate would leave fewer than three.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if min_neighbors <= 0 or len(pts) == 0:
        return np.ones(len(pts), dtype=bool)
    counts = cKDTree(pts).query_ball_point(pts, r=radius, return_length=True) - 1
    keep = counts >= min_neighbors
    return keep if keep.sum() >= 3 else np.ones(len(pts), dtype=bool)


def _subsample(points, n):
    # a full-size FPS draw is only a permutation, which the fits ignore
    if len(points) <= n:
        return points
    return points[farthest_point_indices(points, n)]


def fit_static(points_by_frame, poses, completer=None, category="", cfg=None):
    """One global box for a static track, expressed in every frame with points.

    Returns (per-frame LiDAR-frame boxes, global box).
    """
    cfg = cfg or BoxConfig()
    frames = [f for f in sorted(points_by_frame) if len(points_by_frame[f])]
    if not frames:
        raise DegenerateFitError("static track has no points")
    agg = np.concatenate([_to_global(points_by_frame[f], poses[f]) for f in frames])
    agg = agg[dense_points(agg, cfg.outlier_radius, cfg.outlier_neighbors)]
    if completer is not None:
        agg = np.asarray(completer(agg, category), dtype=float).reshape(-1, 3)
    step = np.deg2rad(cfg.angle_step_deg)
    initial = box_from_points(agg, angle_step=step, clearance=cfg.ground_clearance)
    inliers = agg[initial.contains(agg, inflate=cfg.inflate)]
    if len(inliers) < 3:
        inliers = agg
    sample = _subsample(inliers, cfg.n_fit_static)
    refined = box_from_points(sample, angle_step=step, clearance=cfg.ground_clearance)
    boxes = {}
    for f in frames:
        T = _pose_matrix(poses[f])
        boxes[f] = refined.transformed(np.linalg.inv(T))
    return boxes, refined


# ---------------------------------------------------------------------------
# dynamic path


def _place_axis(lo, hi, size, sensor):
    if hi - lo >= size:
        return (lo + hi) / 2
    if sensor <= lo:
        return lo + size / 2
    if sensor >= hi:
        return hi - size / 2
    return (lo + hi) / 2


def anchored_fit(points, dims, heading_guess, window, angle_step, sensor=(0.0, 0.0), d0=CLOSENESS_D0,
                 clearance=0.0):
    """Place a box of fixed ``dims`` on ``points``; only center and heading vary.

    Along each box axis (vertical included) the box hugs the face seen from
    ``sensor`` when the points cover less than the anchor size. The footprint
    ignores the lowest ``clearance`` metres of points.
    """
    allpts = np.asarray(points, dtype=float).reshape(-1, 3)
    pts = footprint_points(allpts, clearance)
    L, W, H = dims
    sensor = np.asarray(sensor, dtype=float)[:2]
    fine = angle_step / 20
    angles = heading_guess + np.arange(-window, window + fine / 2, angle_step)
    best = None
    for stage in range(2):
        for a in angles:
            cos, sin = np.cos(a), np.sin(a)
            c1 = pts[:, 0] * cos + pts[:, 1] * sin
            c2 = -pts[:, 0] * sin + pts[:, 1] * cos
            s1 = sensor[0] * cos + sensor[1] * sin
            s2 = -sensor[0] * sin + sensor[1] * cos
            m1 = _place_axis(c1.min(), c1.max(), L, s1)
            m2 = _place_axis(c2.min(), c2.max(), W, s2)
            d1 = np.abs(np.abs(c1 - m1) - L / 2)
            d2 = np.abs(np.abs(c2 - m2) - W / 2)
            score = float((1.0 / np.maximum(np.minimum(d1, d2), d0)).sum())
            if best is None or score > best[0]:
                best = (score, a, m1, m2)
        angles = best[1] + np.arange(-angle_step, angle_step + fine / 2, fine)
    _, a, m1, m2 = best
    cos, sin = np.cos(a), np.sin(a)
    zc = _place_axis(allpts[:, 2].min(), allpts[:, 2].max(), H, 0.0)
    return Box3D([m1 * cos - m2 * sin, m1 * sin + m2 * cos, zc], [L, W, H], a)


def fit_dynamic(points_by_frame, poses=None, completer=None, category="", cfg=None):
    """Per-frame boxes with sizes pinned to the per-track median anchor.

    Returns (per-frame LiDAR-frame boxes, anchor dims, initial boxes).
    Frames with fewer than ``cfg.min_points`` points get no box.
    """
    cfg = cfg or BoxConfig()
    step = np.deg2rad(cfg.angle_step_deg)
    initial = {}
    for f in sorted(points_by_frame):
        pts = np.asarray(points_by_frame[f], dtype=float).reshape(-1, 3)
        if completer is not None and len(pts) >= cfg.min_points:
            pts = np.asarray(completer(pts, category), dtype=float).reshape(-1, 3)
        if len(pts) < cfg.min_points:
            continue
        sub = _subsample(pts, cfg.n_fit_dynamic)
        try:
            initial[f] = (box_from_points(sub, angle_step=step, clearance=cfg.ground_clearance), pts)
        except DegenerateFitError:
            log.info("frame %d: degenerate initial fit skipped", f)
    if not initial:
        return {}, None, {}
    anchor = np.median(np.array([b.dims for b, _ in initial.values()]), axis=0)
    window = np.deg2rad(cfg.heading_window_deg)
    boxes = {}
    for f, (box, pts) in initial.items():
        boxes[f] = anchored_fit(pts, anchor, box.heading, window, step, clearance=cfg.ground_clearance)
    return boxes, anchor, {f: b for f, (b, _) in initial.items()}


# ---------------------------------------------------------------------------
# trajectory smoothing


def _align_headings(headings):
    out = [headings[0]]
    for h in headings[1:]:
        prev = out[-1]
        k = np.round((prev - h) / np.pi)
        out.append(h + k * np.pi)
    return np.array(out)


def kalman_smooth(times, measurements, process_noise=0.5, measurement_noise=0.3):
    """Constant-velocity Kalman filter + RTS smoother over 3D positions.

    ``measurements`` has one row per time with NaN rows for gaps. Returns
    smoothed positions and velocities at every time.
    """
    t = np.asarray(times, dtype=float)
    z = np.asarray(measurements, dtype=float).reshape(len(t), -1)
    dim = z.shape[1]
    obs = ~np.isnan(z).any(axis=1)
    idx = np.flatnonzero(obs)
    if len(idx) == 0:
        raise ValueError("no measurements")
    r2 = measurement_noise ** 2
    q = process_noise ** 2
    I = np.eye(dim)
    Z = np.zeros((dim, dim))
    H = np.hstack([I, Z])
    R = r2 * I

    if len(idx) > 1:
        # two-point start at the second observation: position z1, velocity
        # (z1 - z0) / dt, with the exact covariance of that estimate
        i0, i1 = idx[0], idx[1]
        dt01 = t[i1] - t[i0]
        start = i1
        x = np.concatenate([z[i1], (z[i1] - z[i0]) / dt01])
        P = np.block([[r2 * I, r2 / dt01 * I], [r2 / dt01 * I, 2 * r2 / dt01 ** 2 * I]])
    else:
        start = idx[0]
        x = np.concatenate([z[start], np.zeros(dim)])
        P = np.diag(np.concatenate([np.full(dim, r2), np.full(dim, 1e4)]))

    n = len(t)
    xs_f = np.zeros((n, 2 * dim))
    Ps_f = np.zeros((n, 2 * dim, 2 * dim))
    xs_p = np.zeros((n, 2 * dim))
    Ps_p = np.zeros((n, 2 * dim, 2 * dim))
    Fs = np.zeros((n, 2 * dim, 2 * dim))
    # the start state already holds the measurements up to ``start``
    for k in range(start, n):
        if k > start:
            dt = t[k] - t[k - 1]
            F = np.block([[I, dt * I], [Z, I]])
            Q = q * np.block([[dt ** 3 / 3 * I, dt ** 2 / 2 * I], [dt ** 2 / 2 * I, dt * I]])
            x = F @ x
            P = F @ P @ F.T + Q
            Fs[k] = F
        xs_p[k], Ps_p[k] = x, P
        if obs[k] and k > start:
            y = z[k] - H @ x
            S = H @ P @ H.T + R
            K = np.linalg.solve(S, H @ P).T
            x = x + K @ y
            P = (np.eye(2 * dim) - K @ H) @ P
        xs_f[k], Ps_f[k] = x, P
    xs = xs_f.copy()
    for k in range(n - 2, start - 1, -1):
        C = np.linalg.solve(Ps_p[k + 1].T, (Ps_f[k] @ Fs[k + 1].T).T).T
        xs[k] = xs_f[k] + C @ (xs[k + 1] - xs_p[k + 1])
    # earlier times follow the smoothed state back at constant velocity
    for k in range(start - 1, -1, -1):
        dt = t[k] - t[k + 1]
        xs[k, :dim] = xs[k + 1, :dim] + dt * xs[k + 1, dim:]
        xs[k, dim:] = xs[k + 1, dim:]
    return xs[:, :dim], xs[:, dim:]


def smooth_trajectory(boxes, timestamps, frames=None, cfg=None):
    """Smooth global-frame boxes over time and fill gaps.

    ``boxes`` maps frame -> Box3D (global frame); ``timestamps`` maps frame ->
    seconds. Output covers ``frames`` (default: every timestamped frame from
    the first to the last box).
    """
    cfg = cfg or SmoothConfig()
    have = sorted(boxes)
    if not have:
        return {}
    if frames is None:
        frames = [f for f in sorted(timestamps) if have[0] <= f <= have[-1]]
    frames = sorted(frames)
    if len(have) == 1:
        b = boxes[have[0]]
        return {f: Box3D(b.center, b.dims, b.heading) for f in frames}
    t = np.array([timestamps[f] for f in frames])
    z = np.full((len(frames), 3), np.nan)
    pos = {f: i for i, f in enumerate(frames)}
    for f in have:
        if f in pos:
            z[pos[f]] = boxes[f].center
    centers, _ = kalman_smooth(t, z, cfg.process_noise, cfg.measurement_noise)

    th = np.array([timestamps[f] for f in have])
    hd = _align_headings([boxes[f].heading for f in have])
    A = np.stack([np.ones_like(th), th - th[0]], axis=1)
    coef, *_ = np.linalg.lstsq(A, hd, rcond=None)
    resid = hd - A @ coef
    if np.sqrt(np.mean(resid ** 2)) <= np.deg2rad(cfg.heading_gate_deg):
        headings = coef[0] + coef[1] * (t - th[0])
    else:
        headings = np.interp(t, th, hd)
    dims_src = np.array([boxes[f].dims for f in have])
    out = {}
    for i, f in enumerate(frames):
        j = int(np.argmin(np.abs(th - t[i])))
        out[f] = Box3D(centers[i], dims_src[j], headings[i])
    return out


# ---------------------------------------------------------------------------
# track-level driver


def interpret_track(track, poses, timestamps, cfg=None, completer=None):
    """Classify, fit and (for dynamic tracks) smooth one track in place."""
    cfg = cfg or BoxConfig()
    observed = {f: p for f, p in track.points.items() if len(p) >= 1}
    pts = observed
    keep = consistent_frames(pts, poses, cfg.motion_threshold, cfg.consistency_window)
    if len(keep) < len(pts):
        log.info("track %s: %d frame(s) with inconsistent centroids dropped", track.instance_id, len(pts) - len(keep))
        pts = {f: pts[f] for f in keep}
    track.motion_state = classify_motion(pts, poses, timestamps, cfg.motion_threshold, cfg.drift_rate)
    if track.motion_state == STATIC:
        _, glob = fit_static(pts, poses, completer, track.category, cfg)
        # the global box also holds for frames dropped as inconsistent
        track.boxes = {f: glob.transformed(np.linalg.inv(_pose_matrix(poses[f])))
                       for f, p in observed.items() if len(p) >= cfg.min_points}
        track.anchor = glob.dims.copy()
        track.trajectory = {f: glob.center.copy() for f in track.boxes}
        return track

    boxes, anchor, _ = fit_dynamic(pts, poses, completer, track.category, cfg)
    track.anchor = anchor
    if not boxes:
        track.boxes = {}
        return track
    glob = {f: b.transformed(_pose_matrix(poses[f])) for f, b in boxes.items()}
    smoothed = smooth_trajectory(glob, {f: timestamps[f] for f in poses if f in timestamps}, cfg=cfg.smoothing)
    if anchor is not None and anchor[0] < cfg.pedestrian_ratio * anchor[1] and len(smoothed) > 1:
        fs = sorted(smoothed)
        c = np.array([smoothed[f].center for f in fs])
        tt = np.array([timestamps[f] for f in fs])
        vel = np.gradient(c[:, :2], tt, axis=0)
        for i, f in enumerate(fs):
            if np.hypot(*vel[i]) > 0.2:
                smoothed[f] = Box3D(smoothed[f].center, smoothed[f].dims, float(np.arctan2(vel[i, 1], vel[i, 0])))
    track.boxes = {f: b.transformed(np.linalg.inv(_pose_matrix(poses[f]))) for f, b in smoothed.items()}
    track.interpolated = set(smoothed) - set(boxes)
    track.trajectory = {f: b.center.copy() for f, b in smoothed.items()}
    return track


# ---------------------------------------------------------------------------
# box tables

BOX_FIELDS = ["frame_index", "instance_id", "category", "cx", "cy", "cz", "length", "width", "height",
              "heading", "motion_state", "confidence"]


@dataclass
class BoxRecord:
    frame_index: int
    instance_id: int
    category: str
    box: Box3D
    motion_state: str = STATIC
    confidence: float = 1.0


def write_box_table(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BOX_FIELDS)
        for r in sorted(records, key=lambda r: (r.frame_index, r.instance_id)):
            b = r.box
            w.writerow([r.frame_index, r.instance_id, r.category, *map(repr, map(float, b.center)),
                        *map(repr, map(float, b.dims)), repr(float(b.heading)), r.motion_state, repr(float(r.confidence))])


def read_box_table(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            box = Box3D([float(row["cx"]), float(row["cy"]), float(row["cz"])],
                        [float(row["length"]), float(row["width"]), float(row["height"])], float(row["heading"]))
            out.append(BoxRecord(int(row["frame_index"]), int(row["instance_id"]), row["category"], box,
                                 row["motion_state"], float(row.get("confidence") or 1.0)))
    return out
