"""Cross-view instance association on a panoramic strip.

Per-view mask tracks carry local instance IDs. Masks of neighbouring views in
the same frame are scored by appearance (cosine of unit features) and by
horizontal distance along the concatenated panorama, matched one-to-one,
and merged into global IDs that stay fixed over the sequence.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

log = logging.getLogger(__name__)


@dataclass
class AssociationConfig:
    appearance_weight: float = 0.5
    location_scale: Optional[float] = None  # pixels; default 0.05 * panorama width
    match_threshold: float = 0.55
    panorama_width: Optional[float] = None  # derived from the calibrations when None

    def __post_init__(self):
        if not 0.0 <= self.appearance_weight <= 1.0:
            raise ValueError("appearance_weight must lie in [0, 1]")
        if self.location_scale is not None and not self.location_scale > 0:
            raise ValueError("location_scale must be positive")
        if not 0.0 <= self.match_threshold <= 1.0:
            raise ValueError("match_threshold must lie in [0, 1]")

    def resolved(self, calibs):
        """Copy with panorama_width and location_scale filled in from ``calibs``."""
        width = self.panorama_width
        if width is None:
            width = float(sum(c.image_width for c in _calib_list(calibs)))
        scale = self.location_scale if self.location_scale is not None else 0.05 * width
        return AssociationConfig(self.appearance_weight, scale, self.match_threshold, width)


@dataclass
class GlobalIdMap:
    """(view_id, local_instance_id) -> global instance ID, plus match scores."""

    mapping: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.mapping[key]

    def get(self, view_id, local_id, default=None):
        return self.mapping.get((view_id, local_id), default)

    def __len__(self):
        return len(self.mapping)

    def groups(self):
        out = defaultdict(list)
        for key, gid in self.mapping.items():
            out[gid].append(key)
        return {g: sorted(v, key=str) for g, v in sorted(out.items())}

    def to_json(self):
        return {
            "mapping": [[v, l, g] for (v, l), g in sorted(self.mapping.items(), key=lambda kv: (kv[1], str(kv[0])))],
            "scores": [[list(a), list(b), s] for (a, b), s in sorted(self.scores.items(), key=lambda kv: str(kv[0]))],
        }

    @classmethod
    def from_json(cls, doc):
        mapping = {(v, l): g for v, l, g in doc["mapping"]}
        scores = {(tuple(a), tuple(b)): s for a, b, s in doc.get("scores", [])}
        return cls(mapping, scores)


def _calib_list(calibs):
    return list(calibs.values()) if isinstance(calibs, dict) else list(calibs)


def _calib_map(calibs):
    return calibs if isinstance(calibs, dict) else {c.view_id: c for c in calibs}


def view_offsets(calibs):
    """Left edge of each view on the panoramic strip."""
    offsets, acc = {}, 0.0
    for c in sorted(_calib_list(calibs), key=lambda c: c.panoramic_index):
        offsets[c.view_id] = acc
        acc += c.image_width
    return offsets


def panoramic_u(mask, calibs):
    offsets = view_offsets(calibs)
    if mask.view_id not in offsets:
        raise KeyError(f"unknown view {mask.view_id!r}")
    return offsets[mask.view_id] + mask.center_u


def _similarity(va, vb, ua, ub, cfg):
    d = abs(ua - ub)
    d = min(d, cfg.panorama_width - d)
    app = max(0.0, float(np.dot(va, vb)))
    return cfg.appearance_weight * app + (1.0 - cfg.appearance_weight) * float(np.exp(-d / cfg.location_scale))


def pair_similarity(a, b, cfg, calibs):
    """Combined appearance/location score in [0, 1].

    ``w * max(0, <va, vb>) + (1 - w) * exp(-du / scale)`` where ``du`` is the
    horizontal distance on the panorama, taking the shorter way around.
    """
    cfg = cfg.resolved(calibs)
    return _similarity(a.appearance, b.appearance, panoramic_u(a, calibs), panoramic_u(b, calibs), cfg)


def assign_pairs(score, threshold):
    """Maximum-total one-to-one assignment using only entries >= threshold.

    Returns a sorted list of (row, col) pairs.
    """
    score = np.asarray(score, dtype=float)
    if score.size == 0:
        return []
    eligible = score >= threshold
    weight = np.where(eligible, score, 0.0)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if eligible[r, c])


def _key(m):
    return (m.view_id, m.instance_id)


class _DisjointViews:
    """Union-find whose components never hold two members with the same slot."""

    def __init__(self, keys, slots):
        self.parent = {k: k for k in keys}
        self.slots = {k: set(slots[k]) for k in keys}

    def find(self, k):
        while self.parent[k] != k:
            self.parent[k] = self.parent[self.parent[k]]
            k = self.parent[k]
        return k

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return True
        if self.slots[ra] & self.slots[rb]:
            return False
        if str(rb) < str(ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.slots[ra] |= self.slots.pop(rb)
        return True

    def components(self):
        comp = defaultdict(list)
        for k in self.parent:
            comp[self.find(k)].append(k)
        return list(comp.values())


def _adjacent_view_pairs(calibs):
    views = [c.view_id for c in sorted(_calib_list(calibs), key=lambda c: c.panoramic_index)]
    n = len(views)
    if n < 2:
        return []
    pairs = [(views[i], views[i + 1]) for i in range(n - 1)]
    if n > 2:
        pairs.append((views[-1], views[0]))
    return pairs


def frame_edges(masks, calibs, cfg):
    """Matched cross-view pairs of one frame as ((key_a, key_b), score)."""
    cfg = cfg.resolved(calibs)
    offsets = view_offsets(calibs)
    by_view = defaultdict(list)
    for m in masks:
        if m.is_thing:
            by_view[m.view_id].append(m)
    for v in by_view:
        by_view[v].sort(key=lambda m: m.instance_id)
    edges = []
    for va, vb in _adjacent_view_pairs(calibs):
        A, B = by_view.get(va, []), by_view.get(vb, [])
        if not A or not B:
            continue
        S = np.full((len(A), len(B)), -1.0)
        for i, a in enumerate(A):
            for j, b in enumerate(B):
                if a.category == b.category:
                    S[i, j] = _similarity(a.appearance, b.appearance,
                                          offsets[va] + a.center_u, offsets[vb] + b.center_u, cfg)
        for i, j in assign_pairs(S, cfg.match_threshold):
            edges.append(((_key(A[i]), _key(B[j])), float(S[i, j])))
    return edges


def associate_frame(masks, calibs, cfg):
    """Global-ID fragment for the foreground masks of one frame.

    Global IDs in the fragment are 1..n, numbered by the smallest member in
    (panoramic index, local id) order.
    """
    calibs = _calib_map(calibs)
    things = [m for m in masks if m.is_thing]
    keys = sorted({_key(m) for m in things}, key=lambda k: (calibs[k[0]].panoramic_index, k[1]))
    uf = _DisjointViews(keys, {k: [k[0]] for k in keys})
    edges = frame_edges(things, calibs, cfg)
    scores = {}
    for (a, b), s in sorted(edges, key=lambda e: (-e[1], str(e[0]))):
        if uf.union(a, b):
            scores[(a, b)] = s
    order = {k: i for i, k in enumerate(keys)}
    comps = sorted((sorted(c, key=order.get) for c in uf.components()), key=lambda c: order[c[0]])
    mapping = {k: gid for gid, comp in enumerate(comps, 1) for k in comp}
    return GlobalIdMap(mapping, scores)


def unify_sequence(bundle, cfg):
    """Sequence-level global IDs: per-frame links merged by majority vote."""
    calibs = bundle.calib_by_view
    present = defaultdict(set)   # local track -> frames it appears in
    linked = defaultdict(int)    # (track_a, track_b) -> frames grouped together
    best = {}
    frame_ids = sorted({m.frame_index for m in bundle.mask_tracks if m.is_thing})
    for fid in frame_ids:
        masks = [m for m in bundle.masks_of_frame(fid) if m.is_thing]
        for m in masks:
            present[_key(m)].add(fid)
        frag = associate_frame(masks, calibs, cfg)
        for members in frag.groups().values():
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    pair = tuple(sorted((members[i], members[j]), key=str))
                    linked[pair] += 1
        for pair, s in frag.scores.items():
            pair = tuple(sorted(pair, key=str))
            best[pair] = max(best.get(pair, 0.0), s)

    keys = sorted(present, key=lambda k: (min(present[k]), calibs[k[0]].panoramic_index, k[1]))
    slots = {k: [(k[0], f) for f in present[k]] for k in keys}
    uf = _DisjointViews(keys, slots)
    votes = []
    for (a, b), n_link in linked.items():
        both = len(present[a] & present[b])
        if n_link * 2 > both:
            votes.append((n_link, n_link / both, (a, b)))
    scores = {}
    for n_link, frac, (a, b) in sorted(votes, key=lambda t: (-t[0], -t[1], str(t[2]))):
        if uf.union(a, b):
            scores[(a, b)] = best.get((a, b), 0.0)
        else:
            log.info("association conflict: %s and %s share a view in some frame; kept apart", a, b)
    order = {k: i for i, k in enumerate(keys)}
    comps = sorted((sorted(c, key=order.get) for c in uf.components()), key=lambda c: order[c[0]])
    mapping = {k: gid for gid, comp in enumerate(comps, 1) for k in comp}
    return GlobalIdMap(mapping, scores)
