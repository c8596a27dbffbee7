"""3D point labels from 2D masks, with parallax-occlusion and density filtering.

The LiDAR sits above the cameras, so background returns seen over the top of
an object project into that object's mask. :func:`parallax_filter` slides a
small window over each mask, and wherever the window mixes near and far
depths it builds a rectangle under the near points and drops the far points
inside it. Masks are processed near to far; a point kept by a nearer mask is
not offered to farther ones.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .projection import project_points
from .scene import index_map

log = logging.getLogger(__name__)

UNLABELED = -1

LABEL_DTYPE = np.dtype([("point_index", "<u4"), ("semantic_id", "<u2"), ("instance_id", "<u4")])


@dataclass
class ParallaxConfig:
    kernel_size: int = 15
    step_h: int = 10
    step_v: int = 5
    depth_ratio_threshold: float = 0.25
    pseudo_width: Optional[float] = None  # defaults to kernel_size
    stuff_search_radius: float = 30.0  # pixels, nearest background mask lookup for rejected points

    def __post_init__(self):
        if not (self.kernel_size > 0 and self.step_h > 0 and self.step_v > 0):
            raise ValueError("kernel_size and steps must be positive")
        if not self.depth_ratio_threshold > 0:
            raise ValueError("depth_ratio_threshold must be positive")
        if self.pseudo_width is not None and not self.pseudo_width > 0:
            raise ValueError("pseudo_width must be positive")

    @property
    def rect_width(self):
        return float(self.kernel_size if self.pseudo_width is None else self.pseudo_width)


@dataclass
class Candidates:
    """Every (point, mask) hit produced by projection, one row per hit."""

    point: np.ndarray
    mask: np.ndarray
    uv: np.ndarray
    depth: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 2)), np.zeros(0))

    def take(self, sel):
        return Candidates(self.point[sel], self.mask[sel], self.uv[sel], self.depth[sel])

    def __len__(self):
        return len(self.point)


@dataclass
class LabeledPointSet:
    points: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    view: np.ndarray  # index into ``views``, -1 if none
    depth: np.ndarray
    vocabulary: list
    views: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    candidates: Optional[Candidates] = None
    mask_depth: dict = field(default_factory=dict)
    mask_instance: Optional[np.ndarray] = None  # global ID per mask, 0 for background
    image_sizes: dict = field(default_factory=dict)

    @classmethod
    def unlabeled(cls, points, vocabulary, views=()):
        n = len(points)
        return cls(np.asarray(points, float).reshape(-1, 3), np.full(n, UNLABELED, np.int64),
                   np.zeros(n, np.int64), np.full(n, -1, np.int64), np.full(n, np.nan),
                   list(vocabulary), list(views))

    def __len__(self):
        return len(self.points)

    def copy(self):
        return LabeledPointSet(self.points, self.semantic.copy(), self.instance.copy(), self.view.copy(),
                               self.depth.copy(), self.vocabulary, self.views, self.masks,
                               self.candidates, dict(self.mask_depth), self.mask_instance, self.image_sizes)

    @property
    def labeled(self):
        return self.semantic != UNLABELED

    def instances(self):
        """global instance ID -> point indices (sorted by ID)."""
        ids = self.instance
        out = {}
        for gid in np.unique(ids[ids > 0]):
            out[int(gid)] = np.flatnonzero(ids == gid)
        return out

    def category_of(self, gid):
        idx = np.flatnonzero(self.instance == gid)
        return self.vocabulary[int(self.semantic[idx[0]])] if len(idx) else None


def _global_id(mask, id_map):
    if not mask.is_thing:
        return 0
    if id_map is None:
        return int(mask.instance_id)
    return int(id_map[(mask.view_id, mask.instance_id)])


def assign_by_projection(frame, calibs, masks, id_map, vocabulary):
    """Label every point that projects inside a mask.

    All (point, mask) hits are kept in ``candidates``. The provisional label
    of a point prefers foreground hits from the nearest mask (median depth),
    so a point seen in two views under the same global ID gets one label.
    """
    calibs = list(calibs.values()) if isinstance(calibs, dict) else list(calibs)
    views = [c.view_id for c in sorted(calibs, key=lambda c: c.panoramic_index)]
    masks = list(masks)
    out = LabeledPointSet.unlabeled(frame.points, vocabulary, views)
    out.masks = masks
    out.image_sizes = {c.view_id: (c.image_height, c.image_width) for c in calibs}
    parts = []
    for calib in calibs:
        mine = [i for i, m in enumerate(masks) if m.view_id == calib.view_id]
        if not mine:
            continue
        proj = project_points(frame.points, calib)
        if not len(proj):
            continue
        idx = index_map([masks[i] for i in mine], calib)
        px = proj.pixels
        k = idx[px[:, 1], px[:, 0]].astype(np.int64)
        hit = k > 0
        lookup = np.asarray(mine, dtype=np.int64)
        parts.append(Candidates(proj.indices[hit], lookup[k[hit] - 1], proj.uv[hit], proj.depth[hit]))
    cands = Candidates(*(np.concatenate(a) for a in zip(*((c.point, c.mask, c.uv, c.depth) for c in parts)))) \
        if parts else Candidates.empty()
    out.candidates = cands
    out.mask_depth = {int(m): float(np.median(cands.depth[cands.mask == m])) for m in np.unique(cands.mask)}
    sem = np.array([vocabulary.index(m.category) for m in masks], dtype=np.int64)
    gids = np.array([_global_id(m, id_map) for m in masks], dtype=np.int64)
    out.mask_instance = gids
    _resolve(out, cands, claimed=None, sem=sem, gids=gids)
    return out


def _first_wins(target, cands, rows, sort_keys):
    """target[point] = mask of the first row per point under lexsort(sort_keys)."""
    if not len(rows):
        return
    rows = rows[np.lexsort(sort_keys)]
    pts, first = np.unique(cands.point[rows], return_index=True)
    target[pts] = cands.mask[rows[first]]


def _resolve(out, cands, claimed, sem, gids, fallback=None):
    """Write final per-point labels.

    ``claimed`` maps point -> winning foreground mask (or -1); when None, the
    nearest foreground candidate wins. ``fallback`` maps point -> background
    mask for rejected points.
    """
    n = len(out)
    masks = out.masks
    view_of = np.array([out.views.index(m.view_id) for m in masks], dtype=np.int64) if masks else np.zeros(0, np.int64)
    mdepth = np.array([out.mask_depth.get(i, np.inf) for i in range(len(masks))])
    thing = np.array([m.is_thing for m in masks], dtype=bool)

    out.semantic[:] = UNLABELED
    out.instance[:] = 0
    out.view[:] = -1
    out.depth[:] = np.nan

    if claimed is None:
        claimed = np.full(n, -1, np.int64)
        rows = np.flatnonzero(thing[cands.mask]) if len(cands) else np.zeros(0, np.int64)
        _first_wins(claimed, cands, rows, (cands.mask[rows], mdepth[cands.mask[rows]]))
    nm = max(len(masks), 1)
    keys = cands.point * nm + cands.mask
    korder = np.argsort(keys, kind="stable")
    keys_sorted = keys[korder]

    # background: deepest covering background mask
    stuff_choice = np.full(n, -1, np.int64)
    bg = ~thing[cands.mask] if len(cands) else np.zeros(0, bool)
    if bg.any():
        rows = np.flatnonzero(bg)
        _first_wins(stuff_choice, cands, rows, (cands.mask[rows], -mdepth[cands.mask[rows]]))
    if fallback is not None:
        take = (fallback >= 0) & (stuff_choice < 0)
        stuff_choice[take] = fallback[take]

    for choice, is_fg in ((stuff_choice, False), (claimed, True)):
        pts = np.flatnonzero(choice >= 0)
        if not len(pts):
            continue
        m = choice[pts]
        out.semantic[pts] = sem[m]
        out.instance[pts] = gids[m] if is_fg else 0
        out.view[pts] = view_of[m]
        want = pts * nm + m
        pos = np.searchsorted(keys_sorted, want)
        pos_c = np.minimum(pos, max(len(keys_sorted) - 1, 0))
        found = (pos < len(keys_sorted)) & (keys_sorted[pos_c] == want) if len(keys_sorted) else np.zeros(len(want), bool)
        d = np.full(len(pts), np.nan)
        d[found] = cands.depth[korder[pos_c[found]]]
        out.depth[pts] = d


def parallax_filter(uv, depth, cfg, region=None):
    """Reject far points hiding behind near points in each sliding window.

    ``uv`` (N, 2) float pixels and ``depth`` (N,) of the points of one mask.
    ``region`` is (u_min, v_min, u_max, v_max) to sweep; defaults to the
    points' bounding box. Returns (kept, rejected) as index arrays.
    """
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    depth = np.asarray(depth, dtype=float).reshape(-1)
    n = len(depth)
    rejected = np.zeros(n, dtype=bool)
    if n < 2:
        return np.arange(n), np.zeros(0, np.int64)
    if region is None:
        region = (uv[:, 0].min(), uv[:, 1].min(), uv[:, 0].max() + 1, uv[:, 1].max() + 1)
    u0, v0, u1, v1 = region
    k, theta, rect_w = cfg.kernel_size, cfg.depth_ratio_threshold, cfg.rect_width

    order_u = np.argsort(uv[:, 0], kind="stable")
    us_sorted = uv[order_u, 0]
    wu = u0
    while True:
        lo, hi = np.searchsorted(us_sorted, [wu, wu + k], side="left")
        col = order_u[lo:hi]
        if len(col) >= 2:
            col = col[np.argsort(uv[col, 1], kind="stable")]
            vs = uv[col, 1]
            wv = v0
            while True:
                a, b = np.searchsorted(vs, [wv, wv + k], side="left")
                if b - a >= 2:
                    sel = col[a:b]
                    d = depth[sel]
                    dmin = d.min()
                    if (d.max() - dmin) / dmin > theta:
                        near = d <= dmin * (1.0 + theta)
                        pn = uv[sel[near]]
                        if len(pn) > 1:
                            left, right = pn[:, 0].min(), pn[:, 0].max()
                        else:
                            left = pn[0, 0]
                            right = left + rect_w
                        top, bottom = pn[:, 1].min(), wv + k
                        far = sel[~near]
                        fu, fv = uv[far, 0], uv[far, 1]
                        inside = (fu >= left) & (fu <= right) & (fv >= top) & (fv <= bottom)
                        rejected[far[inside]] = True
                wv += cfg.step_v
                if wv >= v1:
                    break
        wu += cfg.step_h
        if wu >= u1:
            break
    return np.flatnonzero(~rejected), np.flatnonzero(rejected)


def _nearest_stuff(out, view_id, stuff_ids, radius):
    """Per-pixel nearest background mask (index into out.masks) within ``radius``."""
    h, w = out.image_sizes[view_id]
    lab = np.zeros((h, w), dtype=np.int64)
    for i in stuff_ids:
        px = out.masks[i].pixels
        if len(px):
            lab[px[:, 1], px[:, 0]] = i + 1
    if not lab.any():
        return None
    dist, (iv, iu) = ndimage.distance_transform_edt(lab == 0, return_indices=True)
    near = lab[iv, iu] - 1
    near[dist > radius] = -1
    return near


def filter_scene(raw, masks, cfg):
    """Apply parallax filtering to every foreground mask, near to far.

    Rejected points drop their foreground label and fall back to the deepest
    background mask covering them (in any view, or the nearest background
    pixel in the rejecting view); otherwise they become unlabeled.
    """
    masks = list(masks) if masks is not None else raw.masks
    out = raw.copy()
    out.masks = masks
    cands = raw.candidates if raw.candidates is not None else Candidates.empty()
    vocab = raw.vocabulary
    sem = np.array([vocab.index(m.category) for m in masks], dtype=np.int64)
    if raw.mask_instance is not None:
        gids = raw.mask_instance
    else:
        gids = np.array([_global_id(m, None) for m in masks], dtype=np.int64)
    thing_masks = [i for i, m in enumerate(masks) if m.is_thing and i in raw.mask_depth]
    thing_masks.sort(key=lambda i: (raw.mask_depth[i], i))

    n = len(raw)
    claimed = np.full(n, -1, np.int64)
    drop = np.zeros(len(cands), dtype=bool)
    rejected_in = {}  # point -> view of the rejecting mask
    rows_of = {i: np.flatnonzero(cands.mask == i) for i in thing_masks}
    for i in thing_masks:
        rows = rows_of[i]
        rows = rows[claimed[cands.point[rows]] < 0]
        if not len(rows):
            continue
        kept, rej = parallax_filter(cands.uv[rows], cands.depth[rows], cfg, region=masks[i].box2d)
        claimed[cands.point[rows[kept]]] = i
        drop[rows[rej]] = True
        for r in rows[rej]:
            rejected_in.setdefault(int(cands.point[r]), masks[i].view_id)
    rejected_pts = np.array(sorted(p for p in rejected_in if claimed[p] < 0), dtype=np.int64)

    fallback = np.full(n, -1, np.int64)
    if len(rejected_pts):
        stuff_ids = [i for i, m in enumerate(masks) if not m.is_thing]
        by_view = {}
        for p in rejected_pts:
            by_view.setdefault(rejected_in[int(p)], []).append(p)
        for view_id, pts in by_view.items():
            near = _nearest_stuff(out, view_id, [i for i in stuff_ids if masks[i].view_id == view_id],
                                  cfg.stuff_search_radius)
            if near is None:
                continue
            pts = np.asarray(pts)
            rows = np.flatnonzero(np.isin(cands.point, pts))
            rows = rows[[masks[cands.mask[r]].view_id == view_id for r in rows]]
            px = np.floor(cands.uv[rows]).astype(np.int64)
            fallback[cands.point[rows]] = near[px[:, 1], px[:, 0]]

    out.candidates = cands.take(~drop)
    _resolve(out, out.candidates, claimed=claimed, sem=sem, gids=gids, fallback=fallback)
    return out


# ---------------------------------------------------------------------------
# density-based denoising


def dbscan(points, eps, min_pts):
    """DBSCAN with deterministic index-order expansion; noise is -1.

    Neighbourhoods are closed balls (distance <= eps) and include the point
    itself. Border points go to the first cluster that reaches them.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    points = np.asarray(points, dtype=float)
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    tree = cKDTree(points)
    neigh = tree.query_ball_point(points, r=eps)
    core = np.array([len(nb) >= min_pts for nb in neigh])
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = [i]
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            if not core[j]:
                continue
            for q in sorted(neigh[j]):
                if labels[q] == -1:
                    labels[q] = cluster
                    queue.append(q)
        cluster += 1
    return labels


def denoise_instances(labeled, eps=0.5, min_pts=5):
    """Keep only the largest DBSCAN cluster of every instance."""
    out = labeled.copy()
    for gid, idx in labeled.instances().items():
        labels = dbscan(labeled.points[idx], eps, min_pts)
        valid = labels >= 0
        if not valid.any():
            log.info("instance %d fully demoted by denoising (%d points)", gid, len(idx))
            keep = np.zeros(len(idx), dtype=bool)
        else:
            counts = np.bincount(labels[valid])
            keep = labels == int(counts.argmax())
        demote = idx[~keep]
        out.semantic[demote] = UNLABELED
        out.instance[demote] = 0
        out.view[demote] = -1
        out.depth[demote] = np.nan
    return out


# ---------------------------------------------------------------------------
# label files


def write_labels(path, labeled):
    idx = np.flatnonzero(labeled.labeled)
    rec = np.empty(len(idx), dtype=LABEL_DTYPE)
    rec["point_index"] = idx
    rec["semantic_id"] = labeled.semantic[idx]
    rec["instance_id"] = labeled.instance[idx]
    rec.tofile(path)


def read_labels(path, n_points):
    """(semantic, instance) arrays of length ``n_points`` from a label file."""
    rec = np.fromfile(path, dtype=LABEL_DTYPE)
    semantic = np.full(n_points, UNLABELED, np.int64)
    instance = np.zeros(n_points, np.int64)
    if len(rec) and rec["point_index"].max() >= n_points:
        raise ValueError(f"{path}: point index {int(rec['point_index'].max())} out of range {n_points}")
    semantic[rec["point_index"]] = rec["semantic_id"]
    instance[rec["point_index"]] = rec["instance_id"]
    return semantic, instance
