"""Point-completion tooling: data pairs, Chamfer distance and completers.

Only the data side of a learned completer lives here. A completer is any
callable ``(points, category) -> points``; :class:`MirrorCompleter` is the
deterministic default and :class:`ExternalCompleter` shells out to a program.
"""
from __future__ import annotations

import logging
import os
import subprocess
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .boxes import Box3D, DegenerateFitError, l_shape_fit
from .sampling import farthest_point_indices, fps  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

COMPLETE = "complete"
PARTIAL = "partial"


@dataclass
class CompletenessReport:
    occupied_grid_ratio: float
    resolution: float
    verdict: str
    occupied: int = 0
    total: int = 0


def completeness(points, box: Box3D, resolution=0.2, threshold=0.6):
    """Fraction of the box lattice cells that hold at least one point."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("completeness of an empty point set")
    shape = np.maximum(np.ceil(box.dims / resolution - 1e-9).astype(int), 1)
    loc = box.to_local(pts) + box.dims / 2
    cell = np.floor(loc / resolution).astype(int)
    cell = np.clip(cell, 0, shape - 1)
    occupied = len(np.unique(np.ravel_multi_index(cell.T, shape)))
    total = int(np.prod(shape))
    ratio = occupied / total
    return CompletenessReport(ratio, resolution, COMPLETE if ratio >= threshold else PARTIAL, occupied, total)


def hidden_point_mask(points, viewpoint, radius_factor=100.0):
    """Visible points by hidden-point removal (spherical flipping + convex hull)."""
    p = np.asarray(points, dtype=float).reshape(-1, 3) - np.asarray(viewpoint, dtype=float)
    norm = np.linalg.norm(p, axis=1)
    norm = np.maximum(norm, 1e-12)
    R = norm.max() * radius_factor
    flipped = p + 2 * (R - norm)[:, None] * p / norm[:, None]
    visible = np.zeros(len(p), dtype=bool)
    if len(p) < 4:
        visible[:] = True
        return visible
    hull = ConvexHull(np.vstack([flipped, np.zeros((1, 3))]))
    v = hull.vertices[hull.vertices < len(p)]
    visible[v] = True
    return visible


def make_partial(points, viewpoint, removal_fraction, seed=0, dropout_share=0.1):
    """Drop ``removal_fraction`` of the points the way a single scan would.

    Most of the budget removes points hidden from ``viewpoint`` (farthest
    first); ``dropout_share`` of it is uniform random dropout. The result is a
    subset of the input in original order.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    n_remove = int(round(removal_fraction * n))
    if n_remove <= 0:
        return pts.copy()
    n_remove = min(n_remove, n - 1)
    rng = np.random.default_rng(seed)
    n_random = int(round(dropout_share * n_remove))
    dist = np.linalg.norm(pts - np.asarray(viewpoint, dtype=float), axis=1)
    visible = hidden_point_mask(pts, viewpoint)
    # hidden points first, then farther before nearer; index breaks ties
    order = np.lexsort((np.arange(n), -dist, visible))
    removed = np.zeros(n, dtype=bool)
    removed[order[: n_remove - n_random]] = True
    rest = np.flatnonzero(~removed)
    removed[rng.choice(rest, size=n_random, replace=False)] = True
    return pts[~removed]


@dataclass
class CompletionPair:
    partial: np.ndarray
    complete: np.ndarray
    structure: np.ndarray
    rotation: float = 0.0
    linear: np.ndarray = field(default_factory=lambda: np.eye(3))


def make_pair(complete, viewpoint, removal_fraction=0.5, n_structure=256, seed=0):
    complete = np.asarray(complete, dtype=float).reshape(-1, 3)
    partial = make_partial(complete, viewpoint, removal_fraction, seed=seed)
    m = min(n_structure, len(complete))
    return CompletionPair(partial, complete, fps(complete, m))


def augment(pair: CompletionPair, seed=0, epsilon=0.05):
    """Random yaw in [-pi/2, pi/2] and a near-identity linear map, applied to all sets.

    The transform is taken about the centroid of the complete set.
    """
    rng = np.random.default_rng(seed)
    angle = float(rng.uniform(-np.pi / 2, np.pi / 2))
    G = rng.standard_normal((3, 3))
    c, s = np.cos(angle), np.sin(angle)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    M = (np.eye(3) + epsilon * G) @ Rz
    centre = pair.complete.mean(axis=0)

    def tf(p):
        return (p - centre) @ M.T + centre

    return replace(pair, partial=tf(pair.partial), complete=tf(pair.complete), structure=tf(pair.structure),
                   rotation=angle, linear=np.eye(3) + epsilon * G)


def chamfer(a, b):
    """Symmetric Chamfer distance: mean squared NN distance a->b plus b->a."""
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance of an empty set")
    dab, _ = cKDTree(b).query(a)
    dba, _ = cKDTree(a).query(b)
    return float(np.mean(dab ** 2) + np.mean(dba ** 2))


# ---------------------------------------------------------------------------
# completers


@dataclass
class MirrorCompleter:
    """Reflect through a vertical plane of the fitted footprint and keep the union.

    Elongated footprints whose one long edge is barely supported are taken to
    be half-observed: the mirror plane is that edge. Anything else is mirrored
    through its own heading axis.
    """

    elongation: float = 3.0
    edge_support: float = 0.35
    band: float = 0.1  # metres; points this close to an edge support it

    def mirror_plane(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        rect = l_shape_fit(pts[:, :2])
        c, s = np.cos(rect.heading), np.sin(rect.heading)
        normal = np.array([-s, c])
        off = (pts[:, :2] - rect.center) @ normal
        half = rect.width / 2
        offset = 0.0
        if rect.width > 0 and rect.length / rect.width > self.elongation:
            near_pos = np.mean(off > half - self.band)
            near_neg = np.mean(off < -half + self.band)
            weak = min(near_pos, near_neg)
            if weak < self.edge_support * max(near_pos, near_neg):
                offset = half if near_pos < near_neg else -half
        return rect.center + offset * normal, normal

    def __call__(self, points, category=""):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("completion of an empty point set")
        try:
            origin, normal = self.mirror_plane(pts)
        except DegenerateFitError:
            log.info("mirror completion skipped: degenerate footprint")
            return pts.copy()
        d = (pts[:, :2] - origin) @ normal
        mirrored = pts.copy()
        mirrored[:, :2] -= 2 * d[:, None] * normal
        return np.vstack([pts, mirrored])


def complete_points(partial, category="", completer=None):
    """Run ``completer`` (default :class:`MirrorCompleter`) on ``partial``."""
    completer = completer or MirrorCompleter()
    return completer(partial, category)


def write_xyz(path, points):
    np.asarray(points, dtype="<f4").reshape(-1, 3).tofile(path)


def read_xyz(path):
    return np.fromfile(path, dtype="<f4").reshape(-1, 3).astype(float)


@dataclass
class ExternalCompleter:
    """Run ``command IN CATEGORY OUT`` on float32 xyz files."""

    command: list
    timeout: float = 600.0

    def __call__(self, points, category=""):
        with tempfile.TemporaryDirectory() as tmp:
            src, dst = os.path.join(tmp, "in.bin"), os.path.join(tmp, "out.bin")
            write_xyz(src, points)
            cmd = list(self.command) + [src, category, dst]
            proc = subprocess.run(cmd, capture_output=True, timeout=self.timeout)
            if proc.returncode != 0:
                raise RuntimeError(f"completer {cmd[0]!r} exited {proc.returncode}: "
                                   f"{proc.stderr.decode(errors='replace').strip()}")
            if not os.path.exists(dst):
                raise RuntimeError(f"completer {cmd[0]!r} wrote no output")
            return read_xyz(dst)
