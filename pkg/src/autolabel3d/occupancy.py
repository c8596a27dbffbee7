"""Semantic occupancy grids with per-voxel flow.

Grids live in the global frame. A voxel is occupied when enough labeled points
fall inside it; its semantic and instance labels are majority votes of those
points. Grids are stored sparsely: only occupied voxels carry records.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import clip_polygon_to_aabb, polygon_area_3d, wrap_angle

FREE = -1
UNLABELED_OCCUPIED = -2  # occupied but no labeled point inside
UNLABELED_CODE = 0xFFFF  # how UNLABELED_OCCUPIED is written to disk

MAGIC = b"OCCG"
_HEADER = struct.Struct("<4s3ddIIIII")
RECORD_DTYPE = np.dtype([("index", "<u4"), ("semantic", "<u2"), ("instance", "<u4"), ("flow", "<f4", (3,))])


@dataclass(frozen=True)
class GridSpec:
    origin: tuple
    voxel_size: float
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))
        if self.voxel_size <= 0 or min(self.dims) <= 0:
            raise ValueError("voxel_size and dims must be positive")

    @property
    def size(self):
        return int(np.prod(self.dims))

    def voxel_of(self, points):
        """Integer voxel coordinates and an in-bounds mask."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        ijk = np.floor((p - np.array(self.origin)) / self.voxel_size).astype(np.int64)
        ok = ((ijk >= 0) & (ijk < np.array(self.dims))).all(axis=1)
        return ijk, ok

    def linear(self, ijk):
        return np.ravel_multi_index(np.asarray(ijk).T, self.dims)

    def centers(self, index):
        ijk = np.stack(np.unravel_index(np.asarray(index, dtype=np.int64), self.dims), axis=1)
        return np.array(self.origin) + (ijk + 0.5) * self.voxel_size


@dataclass
class OccupancyGrid:
    spec: GridSpec
    frame_index: int
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))  # sorted, occupied
    semantic: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    instance: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    flow: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    @property
    def n_occupied(self):
        return len(self.index)

    def dense_semantic(self):
        out = np.full(self.spec.size, FREE, dtype=np.int64)
        out[self.index] = self.semantic
        return out.reshape(self.spec.dims)

    def lookup(self, index):
        """Positions of ``index`` in this grid's records (-1 where free)."""
        pos = np.searchsorted(self.index, index)
        pos = np.minimum(pos, max(len(self.index) - 1, 0))
        hit = len(self.index) > 0
        found = (self.index[pos] == index) if hit else np.zeros(len(index), dtype=bool)
        return np.where(found, pos, -1)


def _majority(voxel, label):
    """Per-voxel majority label (ties -> smallest label); returns (voxels, labels)."""
    if len(voxel) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs, counts = np.unique(np.stack([voxel, label], axis=1), axis=0, return_counts=True)
    # sort by voxel, then count descending, then label ascending
    order = np.lexsort((pairs[:, 1], -counts, pairs[:, 0]))
    pairs = pairs[order]
    first = np.r_[True, pairs[1:, 0] != pairs[:-1, 0]]
    return pairs[first, 0], pairs[first, 1]


def voxelize(points, semantic, instance, spec: GridSpec, frame_index=0, min_points=1):
    """Occupancy grid of labeled points.

    ``semantic`` < 0 marks unlabeled points, ``instance`` 0 means no instance.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    semantic = np.asarray(semantic, dtype=np.int64).reshape(-1)
    instance = np.asarray(instance, dtype=np.int64).reshape(-1)
    ijk, ok = spec.voxel_of(pts)
    lin = spec.linear(ijk[ok]) if ok.any() else np.zeros(0, dtype=np.int64)
    semantic, instance = semantic[ok], instance[ok]
    vox, counts = np.unique(lin, return_counts=True)
    occ = vox[counts >= min_points]
    sem = np.full(len(occ), UNLABELED_OCCUPIED, dtype=np.int64)
    inst = np.zeros(len(occ), dtype=np.int64)
    keep = np.isin(lin, occ)
    lab = keep & (semantic >= 0)
    v, s = _majority(lin[lab], semantic[lab])
    sem[np.searchsorted(occ, v)] = s
    lab = keep & (instance > 0)
    v, s = _majority(lin[lab], instance[lab])
    inst[np.searchsorted(occ, v)] = s
    return OccupancyGrid(spec, frame_index, occ, sem, inst, np.zeros((len(occ), 3)))


def box_velocity(box_t, box_next, dt):
    """Linear velocity and yaw rate between two global-frame boxes."""
    v = (box_next.center - box_t.center) / dt
    omega = float(wrap_angle(box_next.heading - box_t.heading)) / dt
    return v, omega


def rigid_flow(positions, center, velocity, omega):
    r = np.asarray(positions, dtype=float).reshape(-1, 3) - center
    out = np.tile(np.asarray(velocity, dtype=float), (len(r), 1))
    out[:, 0] += -omega * r[:, 1]
    out[:, 1] += omega * r[:, 0]
    return out


def attach_flow(grid: OccupancyGrid, motions):
    """Fill per-voxel flow for occupied voxels inside moving boxes.

    ``motions`` is a list of (box at this frame, velocity, yaw rate); voxels
    are assigned by their centers and the first box that contains them.
    Everything else gets zero flow.
    """
    flow = np.zeros((grid.n_occupied, 3))
    centers = grid.spec.centers(grid.index)
    done = np.zeros(grid.n_occupied, dtype=bool)
    for box, vel, omega in motions:
        inside = box.contains(centers) & ~done
        flow[inside] = rigid_flow(centers[inside], box.center, vel, omega)
        done |= inside
    grid.flow = flow
    return grid


def occupancy_miou(pred: OccupancyGrid, truth: OccupancyGrid, classes, mask=None):
    """Per-class voxel IoU and their mean; ``mask`` restricts the evaluated voxels."""
    if pred.spec != truth.spec:
        raise ValueError("grid specs differ")
    ps, ts = pred.dense_semantic().ravel(), truth.dense_semantic().ravel()
    if mask is not None:
        m = np.asarray(mask, dtype=bool).ravel()
        ps, ts = ps[m], ts[m]
    per = {}
    for c in classes:
        p, t = ps == c, ts == c
        union = int(np.count_nonzero(p | t))
        if union == 0:
            continue
        per[c] = np.count_nonzero(p & t) / union
    miou = float(np.mean(list(per.values()))) if per else float("nan")
    return per, miou


# ---------------------------------------------------------------------------
# grid files


def write_grid(path, grid: OccupancyGrid):
    rec = np.zeros(grid.n_occupied, dtype=RECORD_DTYPE)
    rec["index"] = grid.index
    rec["semantic"] = np.where(grid.semantic < 0, UNLABELED_CODE, grid.semantic)
    rec["instance"] = grid.instance
    rec["flow"] = grid.flow
    s = grid.spec
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *s.origin, s.voxel_size, *s.dims, grid.frame_index, grid.n_occupied))
        fh.write(rec.tobytes())


def read_grid(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated grid header")
        magic, ox, oy, oz, vs, nx, ny, nz, frame, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a grid file")
        rec = np.frombuffer(fh.read(), dtype=RECORD_DTYPE)
    if len(rec) != count:
        raise ValueError(f"{path}: expected {count} records, found {len(rec)}")
    sem = rec["semantic"].astype(np.int64)
    sem[sem == UNLABELED_CODE] = UNLABELED_OCCUPIED
    order = np.argsort(rec["index"], kind="stable")
    return OccupancyGrid(GridSpec((ox, oy, oz), vs, (nx, ny, nz)), frame, rec["index"][order].astype(np.int64),
                         sem[order], rec["instance"][order].astype(np.int64), rec["flow"][order].astype(float))


# ---------------------------------------------------------------------------
# grid placement and masks


@dataclass
class GridConfig:
    voxel_size: float = 0.4
    xy_margin: float = 30.0  # metres around the ego trajectory
    z_min: float = -2.2  # relative to the first LiDAR pose
    z_max: float = 4.2
    min_points: int = 1


def grid_spec_for_poses(poses, cfg=None):
    """Global-frame lattice covering the ego trajectory plus a margin."""
    cfg = cfg or GridConfig()
    T = [np.asarray(getattr(p, "transform", p), dtype=float) for p in poses]
    xy = np.array([t[:2, 3] for t in T])
    vs = cfg.voxel_size
    lo = np.floor((xy.min(axis=0) - cfg.xy_margin) / vs) * vs
    hi = xy.max(axis=0) + cfg.xy_margin
    z0 = T[0][2, 3] + cfg.z_min
    dims = (*np.ceil((hi - lo) / vs - 1e-9).astype(int), int(np.ceil((cfg.z_max - cfg.z_min) / vs - 1e-9)))
    return GridSpec((lo[0], lo[1], z0), vs, dims)


def fov_voxel_mask(spec: GridSpec, calibs, pose):
    """Voxels whose centers project into at least one camera at this pose."""
    from .projection import in_any_view

    centers = spec.centers(np.arange(spec.size))
    T = np.asarray(getattr(pose, "transform", pose), dtype=float)
    local = (centers - T[:3, 3]) @ T[:3, :3]
    return in_any_view(local, calibs).reshape(spec.dims)


# ---------------------------------------------------------------------------
# exact occupancy of planar surfaces


def polygon_voxel_areas(poly, spec: GridSpec):
    """Area of a planar 3D polygon inside every voxel it touches.

    Returns (linear voxel indices, areas).
    """
    poly = np.asarray(poly, dtype=float)
    o, vs = np.array(spec.origin), spec.voxel_size
    lo = np.floor((poly.min(axis=0) - o) / vs).astype(int)
    hi = np.floor((poly.max(axis=0) - o) / vs).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.array(spec.dims) - 1)
    if (hi < lo).any():
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    idx, area = [], []
    rng = [range(lo[a], hi[a] + 1) for a in range(3)]
    for i in rng[0]:
        for j in rng[1]:
            for k in rng[2]:
                vlo = o + np.array([i, j, k]) * vs
                clipped = clip_polygon_to_aabb(poly, vlo, vlo + vs)
                a = polygon_area_3d(clipped)
                if a > 0:
                    idx.append((i, j, k))
                    area.append(a)
    if not idx:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return spec.linear(np.array(idx)), np.array(area)


def horizontal_rect_areas(x0, x1, y0, y1, z, spec: GridSpec):
    """Fast path for an axis-aligned horizontal rectangle."""
    o, vs = np.array(spec.origin), spec.voxel_size
    k = int(np.floor((z - o[2]) / vs))
    if not 0 <= k < spec.dims[2]:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    def overlaps(a, b, axis):
        n = spec.dims[axis]
        edges = o[axis] + np.arange(n + 1) * vs
        return np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0, None)

    ox, oy = overlaps(x0, x1, 0), overlaps(y0, y1, 1)
    ii, jj = np.nonzero(np.outer(ox, oy) > 0)
    area = ox[ii] * oy[jj]
    return spec.linear(np.stack([ii, jj, np.full(len(ii), k)], axis=1)), area


@dataclass
class AreaAccumulator:
    """Signed surface area per (voxel, semantic, instance)."""

    spec: GridSpec
    parts: list = field(default_factory=list)

    def add(self, index, area, semantic, instance=0, sign=1.0):
        if len(index):
            n = len(index)
            self.parts.append(np.stack([np.asarray(index, float), np.full(n, semantic, float),
                                        np.full(n, instance, float), sign * np.asarray(area, float)], axis=1))

    def add_polygon(self, poly, semantic, instance=0, sign=1.0):
        self.add(*polygon_voxel_areas(poly, self.spec), semantic, instance, sign)

    def merged(self, other):
        return AreaAccumulator(self.spec, self.parts + other.parts)

    def grid(self, frame_index=0, eps=1e-9):
        """Occupied where net area > eps; labels by largest area (ties -> smallest id)."""
        if not self.parts:
            return OccupancyGrid(self.spec, frame_index)
        a = np.concatenate(self.parts)
        keys, inv = np.unique(a[:, :3], axis=0, return_inverse=True)
        area = np.bincount(inv.ravel(), weights=a[:, 3])
        good = area > eps
        keys, area = keys[good], area[good]
        vox = keys[:, 0].astype(np.int64)
        occ = np.unique(vox)
        # semantic: total area per (voxel, semantic)
        sk, sinv = np.unique(keys[:, :2], axis=0, return_inverse=True)
        sarea = np.bincount(sinv.ravel(), weights=area)
        order = np.lexsort((sk[:, 1], -sarea, sk[:, 0]))
        sk = sk[order]
        first = np.r_[True, sk[1:, 0] != sk[:-1, 0]]
        sem = sk[first, 1].astype(np.int64)
        inst = np.zeros(len(occ), dtype=np.int64)
        th = keys[:, 2] > 0
        if th.any():
            ik, iinv = np.unique(keys[th][:, [0, 2]], axis=0, return_inverse=True)
            iarea = np.bincount(iinv.ravel(), weights=area[th])
            order = np.lexsort((ik[:, 1], -iarea, ik[:, 0]))
            ik = ik[order]
            first = np.r_[True, ik[1:, 0] != ik[:-1, 0]]
            inst[np.searchsorted(occ, ik[first, 0].astype(np.int64))] = ik[first, 1].astype(np.int64)
        return OccupancyGrid(self.spec, frame_index, occ, sem, inst, np.zeros((len(occ), 3)))
