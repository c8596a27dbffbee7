"""Scene bundle types and on-disk bundle I/O.

A bundle directory looks like::

    calib.json              per-view extrinsics/intrinsics
    poses.jsonl             one record per frame (frame_index, timestamp, transform)
    vocab.txt               one category per line
    frames/NNNNNN.bin       float32 records (x, y, z, intensity)
    masks/VIEW/NNNNNN.idx   uint16 index map (height x width), 0 = no mask
    masks/VIEW/NNNNNN.json  sidecar: {"k": {instance_id, category, box2d, confidence, appearance}}

All binary data is little-endian.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-6
UNIT_TOL = 1e-6


class BundleError(ValueError):
    """Raised when a bundle cannot be loaded or fails validation."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


@dataclass(frozen=True)
class Diagnostic:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


@dataclass(eq=False)
class PointCloudFrame:
    frame_index: int
    timestamp: float
    points: np.ndarray  # (N, 3) LiDAR frame, meters
    intensity: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=float).reshape(-1)

    def __len__(self):
        return len(self.points)


@dataclass(eq=False)
class CameraCalibration:
    view_id: str
    rotation: np.ndarray  # LiDAR -> camera
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    panoramic_index: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def extrinsic(self):
        """4x4 LiDAR -> camera transform."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


@dataclass(eq=False)
class EgoPose:
    frame_index: int
    transform: np.ndarray  # 4x4 LiDAR -> global

    def __post_init__(self):
        self.transform = np.asarray(self.transform, dtype=float).reshape(4, 4)

    def to_global(self, points):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return points @ self.transform[:3, :3].T + self.transform[:3, 3]

    def to_local(self, points):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return (points - self.transform[:3, 3]) @ self.transform[:3, :3]

    @property
    def yaw(self):
        return float(np.arctan2(self.transform[1, 0], self.transform[0, 0]))


@dataclass(eq=False)
class MaskTrack2D:
    view_id: str
    frame_index: int
    instance_id: Optional[int]
    category: str
    pixels: np.ndarray  # (N, 2) integer (u, v)
    box2d: tuple
    appearance: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        self.appearance = np.asarray(self.appearance, dtype=float).reshape(-1)
        self.box2d = tuple(float(b) for b in self.box2d)

    @property
    def is_thing(self):
        return self.instance_id is not None

    @property
    def center_u(self):
        return 0.5 * (self.box2d[0] + self.box2d[2])


def tight_box(pixels):
    """Tight (u_min, v_min, u_max, v_max) of integer pixels; max edges are exclusive."""
    pixels = np.asarray(pixels).reshape(-1, 2)
    if len(pixels) == 0:
        return (0.0, 0.0, 0.0, 0.0)
    lo = pixels.min(axis=0)
    hi = pixels.max(axis=0) + 1
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


@dataclass(eq=False)
class SceneBundle:
    frames: list
    calibrations: list
    poses: list
    mask_tracks: list
    category_vocabulary: list
    _index: dict = field(default=None, init=False, repr=False)

    def calibration(self, view_id):
        for c in self.calibrations:
            if c.view_id == view_id:
                return c
        raise KeyError(f"unknown view {view_id!r}")

    @property
    def calib_by_view(self):
        return {c.view_id: c for c in self.calibrations}

    def frame(self, frame_index):
        for f in self.frames:
            if f.frame_index == frame_index:
                return f
        raise KeyError(f"unknown frame {frame_index}")

    def pose(self, frame_index):
        for p in self.poses:
            if p.frame_index == frame_index:
                return p
        raise KeyError(f"no pose for frame {frame_index}")

    def masks_of_frame(self, frame_index):
        if self._index is None:
            index = {}
            for m in self.mask_tracks:
                index.setdefault(m.frame_index, []).append(m)
            self._index = index
        return list(self._index.get(frame_index, []))

    def category_id(self, name):
        return self.category_vocabulary.index(name)

    @property
    def views_in_panoramic_order(self):
        return [c.view_id for c in sorted(self.calibrations, key=lambda c: c.panoramic_index)]


# ---------------------------------------------------------------------------
# validation


def _rotation_defect(R):
    return float(np.abs(R.T @ R - np.eye(3)).max())


def validate_bundle(bundle):
    """Return one :class:`Diagnostic` per violated invariant (empty if valid)."""
    diags = []
    add = lambda loc, msg: diags.append(Diagnostic(loc, msg))

    last_ts = None
    frame_ids = set()
    for f in bundle.frames:
        loc = f"frames/{f.frame_index:06d}.bin"
        if f.frame_index < 0:
            add(loc, "negative frame_index")
        if f.frame_index in frame_ids:
            add(loc, "duplicate frame_index")
        frame_ids.add(f.frame_index)
        if len(f.points) and not np.isfinite(f.points).all():
            add(loc, "non-finite point coordinates")
        if last_ts is not None and not f.timestamp > last_ts:
            add(loc, f"timestamp {f.timestamp} not strictly increasing (previous {last_ts})")
        last_ts = f.timestamp

    views = {}
    for c in bundle.calibrations:
        loc = f"calib.json[{c.view_id}]"
        if c.view_id in views:
            add(loc, "duplicate view_id")
        views[c.view_id] = c
        if _rotation_defect(c.rotation) >= ORTHO_TOL:
            add(loc, f"rotation not orthonormal (defect {_rotation_defect(c.rotation):.3g})")
        elif np.linalg.det(c.rotation) <= 0:
            add(loc, "rotation determinant is not +1")
        if not (c.fx > 0 and c.fy > 0):
            add(loc, "focal lengths must be positive")
        if not (c.image_width > 0 and c.image_height > 0):
            add(loc, "image size must be positive")
    pano = sorted(c.panoramic_index for c in bundle.calibrations)
    if pano != list(range(len(pano))):
        add("calib.json", f"panoramic_index values {pano} are not a permutation of 0..{len(pano) - 1}")

    pose_ids = set()
    for p in bundle.poses:
        loc = f"poses.jsonl[frame {p.frame_index}]"
        pose_ids.add(p.frame_index)
        T = p.transform
        if not np.isfinite(T).all():
            add(loc, "non-finite transform")
            continue
        if _rotation_defect(T[:3, :3]) >= ORTHO_TOL:
            add(loc, "rotation block not orthonormal")
        if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
            add(loc, "bottom row must be (0, 0, 0, 1)")
        if p.frame_index not in frame_ids:
            add(loc, "pose has no matching point-cloud frame")
    for fid in sorted(frame_ids - pose_ids):
        add(f"poses.jsonl[frame {fid}]", "frame has no pose")

    for m in bundle.mask_tracks:
        loc = f"masks/{m.view_id}/{m.frame_index:06d}.json[{m.instance_id}:{m.category}]"
        calib = views.get(m.view_id)
        if calib is None:
            add(loc, f"unknown view {m.view_id!r}")
            continue
        if m.frame_index not in frame_ids:
            add(loc, f"unknown frame {m.frame_index}")
        px = m.pixels
        if len(px):
            out = (px[:, 0] < 0) | (px[:, 0] >= calib.image_width) | (px[:, 1] < 0) | (px[:, 1] >= calib.image_height)
            if out.any():
                add(loc, f"{int(out.sum())} mask pixel(s) out of image bounds, first at {tuple(px[out][0])}")
            elif tuple(m.box2d) != tight_box(px):
                add(loc, f"box2d {m.box2d} does not tightly bound the mask {tight_box(px)}")
        norm = float(np.linalg.norm(m.appearance))
        if abs(norm - 1.0) > UNIT_TOL:
            add(loc, f"appearance norm {norm:.6g} is not 1")
        if not 0.0 <= m.confidence <= 1.0:
            add(loc, "confidence outside [0, 1]")
        if m.category not in bundle.category_vocabulary:
            add(loc, f"category {m.category!r} not in vocabulary")
    return diags


# ---------------------------------------------------------------------------
# disk I/O

POINT_DTYPE = np.dtype("<f4")


def read_points(path):
    raw = np.fromfile(path, dtype=POINT_DTYPE)
    if raw.size % 4:
        raise BundleError(f"{path}: size is not a multiple of 4 float32 records")
    return raw.reshape(-1, 4)


def write_points(path, points, intensity=None):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if intensity is None:
        intensity = np.zeros(len(points))
    rec = np.empty((len(points), 4), dtype=POINT_DTYPE)
    rec[:, :3] = points
    rec[:, 3] = intensity
    rec.tofile(path)


def _normalize(v, where):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not n > 0:
        raise BundleError(f"{where}: zero appearance vector")
    return v / n


def load_bundle(path):
    """Load and validate a bundle directory; raises :class:`BundleError`."""
    root = Path(path)
    if not root.is_dir():
        raise BundleError(f"{root}: not a directory")

    def need(rel):
        p = root / rel
        if not p.exists():
            raise BundleError(f"{p}: missing file")
        return p

    vocab = [ln.strip() for ln in need("vocab.txt").read_text().splitlines() if ln.strip()]

    try:
        calib_doc = json.loads(need("calib.json").read_text())
    except json.JSONDecodeError as e:
        raise BundleError(f"{root / 'calib.json'}: malformed JSON ({e})") from None
    calibs = []
    for view_id, c in calib_doc.items():
        try:
            calibs.append(CameraCalibration(
                view_id=view_id,
                rotation=np.array(c["rotation"], dtype=float).reshape(3, 3),
                translation=np.array(c["translation"], dtype=float).reshape(3),
                fx=float(c["fx"]), fy=float(c["fy"]), cx=float(c["cx"]), cy=float(c["cy"]),
                image_width=int(c["width"]), image_height=int(c["height"]),
                panoramic_index=int(c["panoramic_index"]),
            ))
        except (KeyError, ValueError, TypeError) as e:
            raise BundleError(f"{root / 'calib.json'}[{view_id}]: malformed record ({e!r})") from None

    poses, timestamps = [], {}
    for lineno, line in enumerate(need("poses.jsonl").read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            fid = int(rec["frame_index"])
            poses.append(EgoPose(fid, np.array(rec["transform"], dtype=float).reshape(4, 4)))
            timestamps[fid] = float(rec["timestamp"])
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as e:
            raise BundleError(f"{root / 'poses.jsonl'}:{lineno}: malformed record ({e!r})") from None

    frame_files = sorted(need("frames").glob("*.bin"))
    if not frame_files:
        raise BundleError(f"{root / 'frames'}: no point-cloud frames")
    frames = []
    for fp in frame_files:
        fid = int(fp.stem)
        if fid not in timestamps:
            raise BundleError(f"{fp}: no poses.jsonl record for frame {fid}")
        rec = read_points(fp).astype(float)
        frames.append(PointCloudFrame(fid, timestamps[fid], rec[:, :3], rec[:, 3]))

    masks = []
    mask_root = root / "masks"
    if mask_root.is_dir():
        for view_dir in sorted(p for p in mask_root.iterdir() if p.is_dir()):
            for idx_path in sorted(view_dir.glob("*.idx")):
                masks.extend(_load_mask_image(idx_path, view_dir.name, calibs))

    bundle = SceneBundle(frames, calibs, poses, masks, vocab)
    diags = validate_bundle(bundle)
    if diags:
        raise BundleError(f"{root}: {len(diags)} invariant violation(s); first: {diags[0]}", diags)
    return bundle


def _load_mask_image(idx_path, view_id, calibs):
    calib = next((c for c in calibs if c.view_id == view_id), None)
    if calib is None:
        raise BundleError(f"{idx_path}: view {view_id!r} has no calibration")
    side = idx_path.with_suffix(".json")
    if not side.exists():
        raise BundleError(f"{side}: missing file")
    idx = np.fromfile(idx_path, dtype="<u2")
    if idx.size != calib.image_width * calib.image_height:
        raise BundleError(f"{idx_path}: expected {calib.image_height}x{calib.image_width} uint16 map, got {idx.size} values")
    idx = idx.reshape(calib.image_height, calib.image_width)
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as e:
        raise BundleError(f"{side}: malformed JSON ({e})") from None
    frame_index = int(idx_path.stem)
    vs, us = np.nonzero(idx)
    ks = idx[vs, us]
    order = np.argsort(ks, kind="stable")
    vs, us, ks = vs[order], us[order], ks[order]
    out = []
    for key in sorted(meta, key=int):
        k = int(key)
        rec = meta[key]
        lo, hi = np.searchsorted(ks, k), np.searchsorted(ks, k, side="right")
        pixels = np.stack([us[lo:hi], vs[lo:hi]], axis=1)
        where = f"{side}[{key}]"
        try:
            out.append(MaskTrack2D(
                view_id=view_id,
                frame_index=frame_index,
                instance_id=None if rec.get("instance_id") is None else int(rec["instance_id"]),
                category=str(rec["category"]),
                pixels=pixels,
                box2d=tuple(rec["box2d"]),
                appearance=_normalize(rec["appearance"], where),
                confidence=float(rec.get("confidence", 1.0)),
            ))
        except (KeyError, ValueError, TypeError) as e:
            raise BundleError(f"{where}: malformed record ({e!r})") from None
    return out


def index_map(masks, calib):
    """Rasterize masks of one image into a uint16 index map (k = position + 1)."""
    idx = np.zeros((calib.image_height, calib.image_width), dtype=np.uint16)
    for k, m in enumerate(masks, 1):
        if len(m.pixels):
            idx[m.pixels[:, 1], m.pixels[:, 0]] = k
    return idx


def save_bundle(bundle, path):
    root = Path(path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    (root / "vocab.txt").write_text("".join(f"{c}\n" for c in bundle.category_vocabulary))
    calib_doc = {
        c.view_id: {
            "rotation": c.rotation.reshape(-1).tolist(),
            "translation": c.translation.tolist(),
            "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
            "width": c.image_width, "height": c.image_height,
            "panoramic_index": c.panoramic_index,
        }
        for c in bundle.calibrations
    }
    (root / "calib.json").write_text(json.dumps(calib_doc, indent=1))
    ts = {f.frame_index: f.timestamp for f in bundle.frames}
    with open(root / "poses.jsonl", "w") as fh:
        for p in sorted(bundle.poses, key=lambda p: p.frame_index):
            fh.write(json.dumps({"frame_index": p.frame_index, "timestamp": ts[p.frame_index],
                                 "transform": p.transform.reshape(-1).tolist()}) + "\n")
    for f in bundle.frames:
        write_points(root / "frames" / f"{f.frame_index:06d}.bin", f.points, f.intensity)

    groups = {}
    for m in bundle.mask_tracks:
        groups.setdefault((m.view_id, m.frame_index), []).append(m)
    calibs = bundle.calib_by_view
    for (view_id, fid), ms in sorted(groups.items()):
        d = root / "masks" / view_id
        d.mkdir(parents=True, exist_ok=True)
        if len(ms) > np.iinfo(np.uint16).max:
            raise BundleError(f"too many masks in {view_id}/{fid}")
        index_map(ms, calibs[view_id]).astype("<u2").tofile(d / f"{fid:06d}.idx")
        meta = {
            str(k): {
                "instance_id": m.instance_id,
                "category": m.category,
                "box2d": list(m.box2d),
                "confidence": m.confidence,
                "appearance": m.appearance.astype(np.float32).tolist(),
            }
            for k, m in enumerate(ms, 1)
        }
        (d / f"{fid:06d}.json").write_text(json.dumps(meta))
