"""Synthetic scenes with exact ground truth.

Objects are boxes resting on a ground plane at z = 0, optionally framed by
vertical walls. LiDAR returns and camera masks are both produced by analytic
ray casting (first hit wins), so labels, boxes and occupancy are known
exactly. Cameras sit below the LiDAR, which is what produces parallax.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .boxes import DYNAMIC, STATIC, Box3D, BoxRecord, write_box_table
from .geometry import rot_z
from .occupancy import AreaAccumulator, GridConfig, grid_spec_for_poses, horizontal_rect_areas, write_grid
from .scene import (CameraCalibration, EgoPose, MaskTrack2D, PointCloudFrame, SceneBundle, save_bundle,
                    tight_box)
from .segmentation import LABEL_DTYPE

log = logging.getLogger(__name__)

NONE, GROUND, WALL, OBJECT = 0, 1, 2, 3

DEFAULT_VOCABULARY = ["road", "building", "car", "truck", "pedestrian", "cyclist"]


@dataclass
class ObjectSpec:
    category: str = "car"
    dims: tuple = (4.5, 1.8, 1.5)  # length, width, height
    position: tuple = (10.0, 0.0)  # global x, y at t = 0
    heading: float = 0.0
    velocity: tuple = (0.0, 0.0)  # m/s, global
    yaw_rate: float = 0.0

    @property
    def moving(self):
        return bool(np.any(np.asarray(self.velocity) != 0) or self.yaw_rate != 0)

    def box_at(self, t):
        x, y = np.asarray(self.position, float) + np.asarray(self.velocity, float) * t
        return Box3D([x, y, self.dims[2] / 2], self.dims, self.heading + self.yaw_rate * t)


@dataclass
class WallSpec:
    start: tuple = (16.8, -15.0)
    end: tuple = (16.8, 15.0)
    height: float = 4.1
    category: str = "building"


@dataclass
class EgoSpec:
    position: tuple = (0.0, 0.0)
    heading: float = 0.0
    speed: float = 0.0
    yaw_rate: float = 0.0


@dataclass
class LidarSpec:
    height: float = 2.0
    beams: int = 64
    azimuths: int = 1024
    elevation_deg: tuple = (-25.0, 5.0)
    azimuth_deg: Optional[tuple] = None  # (min, max) sector; full turn when None
    max_range: float = 80.0
    range_noise: float = 0.0


@dataclass
class CameraRig:
    n_views: int = 3
    image_width: int = 480
    image_height: int = 240
    hfov_deg: Optional[float] = None  # per view; None tiles the full turn
    fx: Optional[float] = None  # overrides hfov_deg
    center_yaw_deg: float = 0.0
    drop: float = 0.8  # camera below the LiDAR, metres
    render: bool = True

    def view_hfov(self):
        if self.fx is not None:
            return 2 * np.arctan(self.image_width / 2 / self.fx)
        if self.hfov_deg is not None:
            return np.deg2rad(self.hfov_deg)
        return 2 * np.pi / self.n_views


@dataclass
class ScenarioSpec:
    seed: int = 0
    n_frames: int = 1
    dt: float = 0.1
    ego: EgoSpec = field(default_factory=EgoSpec)
    lidar: LidarSpec = field(default_factory=LidarSpec)
    cameras: CameraRig = field(default_factory=CameraRig)
    objects: list = field(default_factory=list)
    walls: list = field(default_factory=list)
    ground: bool = True
    ground_category: str = "road"
    appearance_dim: int = 128
    appearance_noise: float = 0.05  # max cosine distance between a mask feature and its object's feature
    vocabulary: Optional[list] = None
    truth_occupancy: bool = False
    grid: GridConfig = field(default_factory=GridConfig)

    def __post_init__(self):
        self.objects = [o if isinstance(o, ObjectSpec) else ObjectSpec(**o) for o in self.objects]
        self.walls = [w if isinstance(w, WallSpec) else WallSpec(**w) for w in self.walls]
        for name, cls in (("ego", EgoSpec), ("lidar", LidarSpec), ("cameras", CameraRig), ("grid", GridConfig)):
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, cls(**v))
        if self.cameras.drop <= 0:
            raise ValueError("cameras must sit strictly below the LiDAR (drop > 0)")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")

    @property
    def categories(self):
        vocab = list(self.vocabulary or DEFAULT_VOCABULARY)
        for c in [self.ground_category] + [w.category for w in self.walls] + [o.category for o in self.objects]:
            if c not in vocab:
                vocab.append(c)
        return vocab

    def to_dict(self):
        return asdict(self)


def _from_dict(cls, doc):
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**doc)


def scenario_from_dict(doc):
    """ScenarioSpec from a plain mapping; ``{"preset": name, ...}`` selects a preset."""
    doc = dict(doc)
    if "preset" in doc:
        name = doc.pop("preset")
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return PRESETS[name](**doc)
    return _from_dict(ScenarioSpec, doc)


# ---------------------------------------------------------------------------
# ray casting


def ray_box(origin, dirs, box: Box3D):
    """Entry distance of rays into an oriented box (inf on a miss).

    ``dirs`` must be unit vectors. Rays that miss the bounding sphere are
    culled before the slab test.
    """
    origin = np.asarray(origin, float)
    out = np.full(len(dirs), np.inf)
    rel = box.center - origin
    along = dirs @ rel
    radius = 0.5 * float(np.linalg.norm(box.dims))
    perp2 = rel @ rel - along ** 2
    near = np.flatnonzero((perp2 <= radius ** 2) & (along > -radius))
    if not len(near):
        return out
    R = rot_z(box.heading)
    o = -rel @ R
    d = dirs[near] @ R
    half = box.dims / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    lo, hi = np.fmin(t1, t2), np.fmax(t1, t2)
    tmin = np.fmax(np.fmax(lo[:, 0], lo[:, 1]), lo[:, 2])
    tmax = np.fmin(np.fmin(hi[:, 0], hi[:, 1]), hi[:, 2])
    hit = (tmax >= tmin) & (tmin > 1e-9)
    out[near] = np.where(hit, tmin, np.inf)
    return out


def ray_ground(origin, dirs):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -origin[2] / dirs[:, 2]
    return np.where((dirs[:, 2] < 0) & (t > 1e-9), t, np.inf)


def ray_wall(origin, dirs, wall: WallSpec):
    a = np.array([*wall.start, 0.0])
    b = np.array([*wall.end, 0.0])
    e = b - a
    n = np.array([-e[1], e[0], 0.0])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((a - origin) @ n) / (dirs @ n)
        q = origin + t[:, None] * dirs
        s = (q - a) @ e / (e @ e)
        ok = (t > 1e-9) & (s >= 0) & (s <= 1) & (q[:, 2] >= 0) & (q[:, 2] <= wall.height)
    return np.where(ok, t, np.inf)


def cast(origin, dirs, boxes, walls, ground=True):
    """First hit of every ray: (distance, kind, index into boxes/walls)."""
    origin = np.asarray(origin, dtype=float)
    n = len(dirs)
    best = np.full(n, np.inf)
    kind = np.zeros(n, dtype=np.int64)
    index = np.full(n, -1, dtype=np.int64)
    cands = []
    if ground:
        cands.append((GROUND, 0, ray_ground(origin, dirs)))
    for i, w in enumerate(walls):
        cands.append((WALL, i, ray_wall(origin, dirs, w)))
    for i, b in enumerate(boxes):
        cands.append((OBJECT, i, ray_box(origin, dirs, b)))
    for k, i, t in cands:
        better = t < best
        best[better] = t[better]
        kind[better] = k
        index[better] = i
    return best, kind, index


# ---------------------------------------------------------------------------
# sensors


def ego_pose(spec: ScenarioSpec, t):
    e = spec.ego
    yaw = e.heading + e.yaw_rate * t
    if abs(e.yaw_rate) < 1e-12:
        xy = np.asarray(e.position, float) + e.speed * t * np.array([np.cos(e.heading), np.sin(e.heading)])
    else:
        r = e.speed / e.yaw_rate
        xy = np.asarray(e.position, float) + r * np.array([np.sin(yaw) - np.sin(e.heading),
                                                            np.cos(e.heading) - np.cos(yaw)])
    T = np.eye(4)
    T[:3, :3] = rot_z(yaw)
    T[:3, 3] = [xy[0], xy[1], spec.lidar.height]
    return T


def lidar_directions(lidar: LidarSpec):
    el = np.deg2rad(np.linspace(*lidar.elevation_deg, lidar.beams))
    if lidar.azimuth_deg is None:
        az = np.arange(lidar.azimuths) * (2 * np.pi / lidar.azimuths)
    else:
        az = np.deg2rad(np.linspace(*lidar.azimuth_deg, lidar.azimuths))
    E, A = np.meshgrid(el, az, indexing="ij")
    return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)


def camera_rig(rig: CameraRig):
    """Calibrations for the rig; panoramic index 0 is the leftmost view."""
    hfov = rig.view_hfov()
    fx = rig.fx if rig.fx is not None else rig.image_width / 2 / np.tan(hfov / 2)
    center = np.deg2rad(rig.center_yaw_deg)
    calibs = []
    for k in range(rig.n_views):
        yaw = center + ((rig.n_views - 1) / 2 - k) * hfov
        fwd = np.array([np.cos(yaw), np.sin(yaw), 0.0])
        right = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        R = np.stack([right, down, fwd])
        c = np.array([0.0, 0.0, -rig.drop])
        calibs.append(CameraCalibration(f"cam{k}", R, -R @ c, fx, fx, rig.image_width / 2, rig.image_height / 2,
                                        rig.image_width, rig.image_height, k))
    return calibs


def camera_center(calib):
    return -calib.rotation.T @ calib.translation


def pixel_rays(calib):
    """Unit ray directions (LiDAR frame) through every pixel center, row-major."""
    v, u = np.mgrid[0:calib.image_height, 0:calib.image_width]
    x = (u.ravel() + 0.5 - calib.cx) / calib.fx
    y = (v.ravel() + 0.5 - calib.cy) / calib.fy
    d = np.stack([x, y, np.ones_like(x)], axis=1) @ calib.rotation
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _noisy_unit(base, noise, rng):
    """Unit vector at cosine distance U[0, noise] from ``base``."""
    if noise <= 0:
        return base.copy()
    g = rng.standard_normal(len(base))
    g -= (g @ base) * base
    g /= np.linalg.norm(g)
    cos = 1.0 - noise * rng.uniform()
    return cos * base + np.sqrt(max(0.0, 1 - cos ** 2)) * g


# ---------------------------------------------------------------------------
# generation


@dataclass
class GroundTruth:
    boxes: list  # BoxRecord in the LiDAR frame, only where the object has LiDAR points
    semantic: dict  # frame -> per-point semantic id
    instance: dict  # frame -> per-point instance id (object index + 1, 0 for background)
    global_boxes: dict  # (frame, instance) -> Box3D in the global frame
    mask_objects: dict  # (view_id, local id) -> instance id
    occupancy: dict = field(default_factory=dict)  # frame -> OccupancyGrid
    grid_spec: object = None
    vocabulary: list = field(default_factory=list)


def generate(spec: ScenarioSpec):
    """Render a bundle and its exact ground truth."""
    if not spec.objects and not spec.walls and not spec.ground:
        raise ValueError("degenerate scenario: no objects and no surfaces")
    rng = np.random.default_rng(spec.seed)
    vocab = spec.categories
    sem_of = {c: i for i, c in enumerate(vocab)}
    calibs = camera_rig(spec.cameras)
    n_obj = len(spec.objects)

    def unit(dim):
        v = rng.standard_normal(dim)
        return v / np.linalg.norm(v)

    obj_feat = [unit(spec.appearance_dim) for _ in range(n_obj)]
    stuff_feat = {c: unit(spec.appearance_dim) for c in vocab}
    local_ids = {c.view_id: rng.permutation(n_obj) + 1 for c in calibs}
    mask_objects = {(v, int(ids[k])): k + 1 for v, ids in local_ids.items() for k in range(n_obj)}
    dirs_l = lidar_directions(spec.lidar) if spec.lidar.beams > 0 and spec.lidar.azimuths > 0 else np.zeros((0, 3))
    rays = {c.view_id: pixel_rays(c) for c in calibs} if spec.cameras.render else {}

    frames, poses, masks, boxes_tab = [], [], [], []
    truth_sem, truth_inst, gboxes = {}, {}, {}
    for f in range(spec.n_frames):
        t = f * spec.dt
        T = ego_pose(spec, t)
        Rg, og = T[:3, :3], T[:3, 3]
        boxes = [o.box_at(t) for o in spec.objects]
        for k, b in enumerate(boxes):
            gboxes[(f, k + 1)] = b

        # LiDAR
        d = dirs_l @ Rg.T
        dist, kind, idx = cast(og, d, boxes, spec.walls, spec.ground)
        hit = np.isfinite(dist) & (dist <= spec.lidar.max_range)
        dist, kind, idx, dl = dist[hit], kind[hit], idx[hit], dirs_l[hit]
        if spec.lidar.range_noise > 0:
            dist = dist + rng.normal(0.0, spec.lidar.range_noise, len(dist))
        pts = dl * dist[:, None]
        sem = np.empty(len(pts), dtype=np.int64)
        inst = np.zeros(len(pts), dtype=np.int64)
        sem[kind == GROUND] = sem_of[spec.ground_category]
        for i, w in enumerate(spec.walls):
            sem[(kind == WALL) & (idx == i)] = sem_of[w.category]
        for k, o in enumerate(spec.objects):
            sel = (kind == OBJECT) & (idx == k)
            sem[sel] = sem_of[o.category]
            inst[sel] = k + 1
        frames.append(PointCloudFrame(f, t, pts, np.zeros(len(pts))))
        poses.append(EgoPose(f, T))
        truth_sem[f], truth_inst[f] = sem, inst
        counts = np.bincount(inst, minlength=n_obj + 1)
        Tinv = np.linalg.inv(T)
        for k, o in enumerate(spec.objects):
            if counts[k + 1] > 0:
                boxes_tab.append(BoxRecord(f, k + 1, o.category, boxes[k].transformed(Tinv),
                                           DYNAMIC if o.moving else STATIC, 1.0))

        # cameras
        for c in calibs:
            if not spec.cameras.render:
                break
            cc = Rg @ camera_center(c) + og
            _, kind_p, idx_p = cast(cc, rays[c.view_id] @ Rg.T, boxes, spec.walls, spec.ground)
            W = c.image_width
            flat = np.arange(len(kind_p))

            def emit(sel, instance_id, category, feat):
                pix = np.stack([flat[sel] % W, flat[sel] // W], axis=1)
                if len(pix) == 0:
                    return
                masks.append(MaskTrack2D(c.view_id, f, instance_id, category, pix, tight_box(pix),
                                         _noisy_unit(feat, spec.appearance_noise, rng), 1.0))

            for k, o in enumerate(spec.objects):
                emit((kind_p == OBJECT) & (idx_p == k), int(local_ids[c.view_id][k]), o.category, obj_feat[k])
            if spec.ground:
                emit(kind_p == GROUND, None, spec.ground_category, stuff_feat[spec.ground_category])
            for cat in dict.fromkeys(w.category for w in spec.walls):
                sel = np.zeros(len(kind_p), dtype=bool)
                for i, w in enumerate(spec.walls):
                    if w.category == cat:
                        sel |= (kind_p == WALL) & (idx_p == i)
                emit(sel, None, cat, stuff_feat[cat])

    bundle = SceneBundle(frames, calibs, poses, masks, vocab)
    truth = GroundTruth(boxes_tab, truth_sem, truth_inst, gboxes, mask_objects, vocabulary=vocab)
    truth.grid_spec = grid_spec_for_poses(poses, spec.grid)
    if spec.truth_occupancy:
        truth.occupancy = truth_occupancy(spec, truth.grid_spec)
    return bundle, truth


# ---------------------------------------------------------------------------
# surfaces: exact occupancy and dense sampling


def object_faces(box: Box3D):
    """Side and top faces of a box resting on the ground (bottom omitted)."""
    c = box.bev_corners()
    z0, z1 = box.center[2] - box.dims[2] / 2, box.center[2] + box.dims[2] / 2
    faces = []
    for i in range(4):
        a, b = c[i], c[(i + 1) % 4]
        faces.append(np.array([[*a, z0], [*b, z0], [*b, z1], [*a, z1]]))
    faces.append(np.array([[*p, z1] for p in c]))
    return faces


def wall_face(w: WallSpec):
    return np.array([[*w.start, 0.0], [*w.end, 0.0], [*w.end, w.height], [*w.start, w.height]])


def footprint(box: Box3D, z=0.0):
    return np.array([[*p, z] for p in box.bev_corners()])


def _surface_accumulator(spec, grid_spec, boxes, sem_of):
    acc = AreaAccumulator(grid_spec)
    o, vs, dims = grid_spec.origin, grid_spec.voxel_size, grid_spec.dims
    if spec.ground:
        g = sem_of[spec.ground_category]
        acc.add(*horizontal_rect_areas(o[0], o[0] + dims[0] * vs, o[1], o[1] + dims[1] * vs, 0.0, grid_spec), g)
        for b in boxes:
            acc.add_polygon(footprint(b), g, 0, sign=-1.0)
    for w in spec.walls:
        acc.add_polygon(wall_face(w), sem_of[w.category])
    return acc


def truth_occupancy(spec: ScenarioSpec, grid_spec, frames=None):
    """Exact per-frame occupancy: voxels touched by surface area, labeled by the largest area."""
    sem_of = {c: i for i, c in enumerate(spec.categories)}
    frames = range(spec.n_frames) if frames is None else frames
    static = [k for k, o in enumerate(spec.objects) if not o.moving]
    moving = [k for k, o in enumerate(spec.objects) if o.moving]
    base = _surface_accumulator(spec, grid_spec, [spec.objects[k].box_at(0.0) for k in static], sem_of)
    for k in static:
        for face in object_faces(spec.objects[k].box_at(0.0)):
            base.add_polygon(face, sem_of[spec.objects[k].category], k + 1)
    out = {}
    for f in frames:
        t = f * spec.dt
        acc = AreaAccumulator(grid_spec)
        g = sem_of[spec.ground_category]
        for k in moving:
            b = spec.objects[k].box_at(t)
            if spec.ground:
                acc.add_polygon(footprint(b), g, 0, sign=-1.0)
            for face in object_faces(b):
                acc.add_polygon(face, sem_of[spec.objects[k].category], k + 1)
        out[f] = base.merged(acc).grid(frame_index=f)
    return out


def _sample_polygon(poly, density, rng):
    """Uniform samples on a planar convex polygon (fan triangulation)."""
    poly = np.asarray(poly, dtype=float)
    tris = [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]
    out = []
    for a, b, c in tris:
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
        n = int(rng.poisson(area * density))
        r1, r2 = rng.uniform(size=(2, n))
        flip = r1 + r2 > 1
        r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
        out.append(a + r1[:, None] * (b - a) + r2[:, None] * (c - a))
    return np.concatenate(out) if out else np.zeros((0, 3))


def sample_surfaces(spec: ScenarioSpec, grid_spec, frame=0, density=400.0, seed=0):
    """Dense random samples of every surface at ``frame`` inside the grid.

    Returns (points, semantic, instance) in the global frame.
    """
    rng = np.random.default_rng(seed)
    sem_of = {c: i for i, c in enumerate(spec.categories)}
    t = frame * spec.dt
    boxes = [o.box_at(t) for o in spec.objects]
    P, S, I = [], [], []
    if spec.ground:
        o, vs, dims = grid_spec.origin, grid_spec.voxel_size, grid_spec.dims
        lo = np.array(o[:2])
        hi = lo + np.array(dims[:2]) * vs
        n = int(rng.poisson(np.prod(hi - lo) * density))
        xy = rng.uniform(lo, hi, size=(n, 2))
        keep = np.ones(n, dtype=bool)
        for b in boxes:
            keep &= ~b.contains(np.c_[xy, np.full(n, b.center[2])])
        P.append(np.c_[xy[keep], np.zeros(keep.sum())])
        S.append(np.full(keep.sum(), sem_of[spec.ground_category]))
        I.append(np.zeros(keep.sum(), dtype=np.int64))
    for w in spec.walls:
        p = _sample_polygon(wall_face(w), density, rng)
        P.append(p)
        S.append(np.full(len(p), sem_of[w.category]))
        I.append(np.zeros(len(p), dtype=np.int64))
    for k, (o, b) in enumerate(zip(spec.objects, boxes)):
        for face in object_faces(b):
            p = _sample_polygon(face, density, rng)
            P.append(p)
            S.append(np.full(len(p), sem_of[o.category]))
            I.append(np.full(len(p), k + 1))
    return np.concatenate(P), np.concatenate(S).astype(np.int64), np.concatenate(I).astype(np.int64)


def sample_box_surface(box: Box3D, density=400.0, seed=0, faces=None):
    """Uniform samples on the side and top faces of one box."""
    rng = np.random.default_rng(seed)
    all_faces = object_faces(box)
    faces = range(len(all_faces)) if faces is None else faces
    return np.concatenate([_sample_polygon(all_faces[i], density, rng) for i in faces])


# ---------------------------------------------------------------------------
# output


def write_truth(truth: GroundTruth, out_dir):
    out = Path(out_dir) / "truth"
    (out / "labels").mkdir(parents=True, exist_ok=True)
    write_box_table(out / "boxes.csv", truth.boxes)
    for f in sorted(truth.semantic):
        sem, inst = truth.semantic[f], truth.instance[f]
        idx = np.flatnonzero(sem >= 0)
        rec = np.empty(len(idx), dtype=LABEL_DTYPE)
        rec["point_index"], rec["semantic_id"], rec["instance_id"] = idx, sem[idx], inst[idx]
        rec.tofile(out / "labels" / f"{f:06d}.bin")
    if truth.occupancy:
        (out / "occupancy").mkdir(exist_ok=True)
        for f, g in sorted(truth.occupancy.items()):
            write_grid(out / "occupancy" / f"{f:06d}.occ", g)
    meta = {"mask_objects": [[v, l, g] for (v, l), g in sorted(truth.mask_objects.items())]}
    if truth.grid_spec is not None:
        s = truth.grid_spec
        meta["grid"] = {"origin": list(s.origin), "voxel_size": s.voxel_size, "dims": list(s.dims)}
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def write_scenario(spec: ScenarioSpec, out_dir):
    """Generate and write a bundle plus its ``truth/`` directory."""
    bundle, truth = generate(spec)
    save_bundle(bundle, out_dir)
    write_truth(truth, out_dir)
    return bundle, truth


# ---------------------------------------------------------------------------
# presets


def parallax_scene(seed=0, beams=128, azimuths=1600, car_distance=10.0, wall_gap=5.0, n_frames=1, **kw):
    """A car seen side-on with a wall ``wall_gap`` behind it, one narrow camera.

    The car's long axis is across the view, so its own depth spread is small.
    """
    L, W, H = 4.5, 1.8, 1.5
    cx = car_distance + W / 2
    wall_x = car_distance + W + wall_gap
    spec = dict(seed=seed, n_frames=n_frames,
                lidar=LidarSpec(beams=beams, azimuths=azimuths, elevation_deg=(-25.0, 5.0), azimuth_deg=(-60.0, 60.0)),
                cameras=CameraRig(n_views=1, image_width=1280, image_height=640, fx=1000.0),
                objects=[ObjectSpec("car", (L, W, H), (cx, 0.3), np.pi / 2)],
                walls=[WallSpec((wall_x, -20.0), (wall_x, 20.0), 4.1, "building")])
    spec.update(kw)
    return ScenarioSpec(**spec)


def _clear_of(obj, others, times, margin):
    """True when ``obj`` keeps a footprint-circle gap of ``margin`` from every other object at all times."""
    r = 0.5 * np.hypot(obj.dims[0], obj.dims[1])
    for o in others:
        ro = 0.5 * np.hypot(o.dims[0], o.dims[1])
        for t in times:
            a = np.asarray(obj.position) + t * np.asarray(obj.velocity)
            b = np.asarray(o.position) + t * np.asarray(o.velocity)
            if np.hypot(*(a - b)) < r + ro + margin:
                return False
    return True


def traffic_scene(seed=0, n_frames=50, n_views=3, n_objects=10, dt=0.1, ego_speed=5.0, lidar_beams=64,
                  lidar_azimuths=1024, image_width=480, image_height=240, dynamic_fraction=0.4, walls=True,
                  appearance_noise=0.05, truth_occupancy=False, corridor=1.5, **kw):
    """Street with parked and moving road users, optionally lined by buildings.

    The ego drives along +x. Every object keeps at least ``corridor`` metres of
    lateral clearance from the ego path, stays inside |y| < 10 m and never comes
    within 0.5 m of another object during the sequence. Movers travel exactly
    along the street. Buildings stand at y = +-12.3 m.
    """
    rng = np.random.default_rng(seed)
    kinds = [("car", (4.5, 1.8, 1.5)), ("car", (4.1, 1.75, 1.45)), ("truck", (7.5, 2.4, 2.7)),
             ("pedestrian", (0.7, 0.6, 1.7)), ("cyclist", (1.8, 0.7, 1.6))]
    x_lo, x_hi = -25.0, 25.0 + ego_speed * dt * n_frames
    times = np.linspace(0.0, dt * max(n_frames - 1, 0), max(n_frames, 1))
    n_dyn = int(round(dynamic_fraction * n_objects))
    objects = []
    for k in range(n_objects):
        moving = k < n_dyn
        for _ in range(500):
            cat, dims = kinds[int(rng.integers(len(kinds)))]
            dims = tuple(float(d) * float(rng.uniform(0.95, 1.05)) for d in dims)
            half = 0.5 * np.hypot(dims[0], dims[1])
            if moving:
                # lane-aligned so the lateral offset is constant
                heading = float(rng.choice([0.0, np.pi]))
                speed = {"pedestrian": 1.4, "cyclist": 4.0}.get(cat, 6.0) * float(rng.uniform(0.8, 1.2))
                vel = (speed * np.cos(heading), 0.0)
                off = dims[1] / 2
            else:
                heading = float(rng.choice([0.0, np.pi])) + float(rng.normal(0, 0.1))
                vel = (0.0, 0.0)
                off = half
            y_abs = rng.uniform(corridor + off, 10.0 - off)
            y = float(y_abs * rng.choice([-1.0, 1.0]))
            cand = ObjectSpec(cat, dims, (float(rng.uniform(x_lo, x_hi)), y), heading, vel)
            if _clear_of(cand, objects, times, 0.5):
                objects.append(cand)
                break
    wall_list = []
    if walls:
        wall_list = [WallSpec((x_lo - 40.3, 12.3), (x_hi + 40.3, 12.3), 6.1), WallSpec((x_lo - 40.3, -12.3), (x_hi + 40.3, -12.3), 6.1)]
    spec = dict(seed=seed, n_frames=n_frames, dt=dt, ego=EgoSpec((0.0, 0.0), 0.0, ego_speed),
                lidar=LidarSpec(beams=lidar_beams, azimuths=lidar_azimuths),
                cameras=CameraRig(n_views=n_views, image_width=image_width, image_height=image_height),
                objects=objects, walls=wall_list, appearance_noise=appearance_noise,
                truth_occupancy=truth_occupancy)
    spec.update(kw)
    return ScenarioSpec(**spec)


def association_scene(seed=0, n_views=3, per_view=6, appearance_noise=0.1, **kw):
    """One frame, no LiDAR: objects scattered around the ego for mask association."""
    rng = np.random.default_rng(seed)
    n = n_views * per_view
    taken = []
    objects = []
    for k in range(n):
        # spread evenly in bearing so no view holds more than ``per_view`` objects
        ang = 2 * np.pi * (k + rng.uniform(0.15, 0.85)) / n
        for _ in range(50):
            r = rng.uniform(6.0, 30.0)
            p = np.array([r * np.cos(ang), r * np.sin(ang)])
            if all(np.hypot(*(p - q)) > 5.0 for q in taken):
                break
        taken.append(p)
        cat = str(rng.choice(["car", "car", "pedestrian", "cyclist"]))
        dims = {"car": (4.5, 1.8, 1.5), "pedestrian": (0.7, 0.6, 1.7), "cyclist": (1.8, 0.7, 1.6)}[cat]
        objects.append(ObjectSpec(cat, dims, tuple(p), float(rng.uniform(-np.pi, np.pi))))
    spec = dict(seed=seed, n_frames=1, lidar=LidarSpec(beams=0), objects=objects,
                cameras=CameraRig(n_views=n_views, image_width=480, image_height=240),
                appearance_noise=appearance_noise)
    spec.update(kw)
    return ScenarioSpec(**spec)


PRESETS = {"parallax": parallax_scene, "traffic": traffic_scene, "association": association_scene}
