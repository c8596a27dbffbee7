"""Detection, segmentation and occupancy metrics.

Detections are matched greedily per frame and class, either by BEV center
distance or by 3D IoU. Recall under the distance criterion is the mean of the
recalls at each distance threshold.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box3D
from .geometry import clip_convex, polygon_area
from .projection import in_any_view

IOU = "iou"
BEV_DISTANCE = "bev_distance"

VEHICLE_GROUP = ("car", "truck", "bus", "other-vehicle")


@dataclass
class MatchSpec:
    criterion: str = BEV_DISTANCE
    iou_thresholds: dict = field(default_factory=lambda: {"vehicle": 0.7, "car": 0.7, "truck": 0.7, "bus": 0.7,
                                                          "pedestrian": 0.5, "cyclist": 0.5})
    default_iou_threshold: float = 0.5
    distance_thresholds: tuple = (0.5, 1.0, 2.0, 4.0)
    fov_mask: bool = False
    range_bins: tuple = (0.0, 30.0, 50.0)

    def __post_init__(self):
        if self.criterion not in (IOU, BEV_DISTANCE):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        self.distance_thresholds = tuple(float(t) for t in self.distance_thresholds)
        self.range_bins = tuple(float(t) for t in self.range_bins)
        for name, seq in (("distance_thresholds", self.distance_thresholds), ("range_bins", self.range_bins)):
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ValueError(f"{name} must be strictly ascending")
        if any(t <= 0 for t in self.distance_thresholds):
            raise ValueError("distance thresholds must be positive")
        if any(t <= 0 for t in self.iou_thresholds.values()) or self.default_iou_threshold <= 0:
            raise ValueError("IoU thresholds must be positive")

    def iou_threshold(self, category):
        return float(self.iou_thresholds.get(category.lower(), self.default_iou_threshold))

    def bins(self):
        edges = list(self.range_bins) + [np.inf]
        return list(zip(edges[:-1], edges[1:]))


@dataclass
class Detection:
    frame_index: int
    category: str
    box: Box3D
    confidence: float = 1.0
    instance_id: int = 0


# ---------------------------------------------------------------------------
# box overlap


def bev_intersection_area(a: Box3D, b: Box3D):
    poly = clip_convex(a.bev_corners(), b.bev_corners())
    return abs(polygon_area(poly)) if len(poly) >= 3 else 0.0


def box_iou_3d(a: Box3D, b: Box3D):
    """Oriented 3D IoU: BEV overlap area times vertical overlap."""
    za = (a.center[2] - a.dims[2] / 2, a.center[2] + a.dims[2] / 2)
    zb = (b.center[2] - b.dims[2] / 2, b.center[2] + b.dims[2] / 2)
    dz = min(za[1], zb[1]) - max(za[0], zb[0])
    if dz <= 0:
        return 0.0
    inter = bev_intersection_area(a, b) * dz
    union = a.volume + b.volume - inter
    return float(inter / union) if union > 0 else 0.0


def bev_distance(a: Box3D, b: Box3D):
    return float(np.hypot(*(a.center[:2] - b.center[:2])))


# ---------------------------------------------------------------------------
# matching


@dataclass
class MatchResult:
    pairs: list  # (pred index, truth index, score)
    tp: int
    fp: int
    fn: int


def _greedy(preds, truths, criterion, threshold):
    cand = []
    for i, p in enumerate(preds):
        for j, t in enumerate(truths):
            if criterion == BEV_DISTANCE:
                d = bev_distance(p.box, t.box)
                if d <= threshold:
                    cand.append((d, i, j))
            else:
                s = box_iou_3d(p.box, t.box)
                if s >= threshold and s > 0:
                    cand.append((-s, i, j))
    cand.sort()
    used_p, used_t, pairs = set(), set(), []
    for key, i, j in cand:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        pairs.append((i, j, -key if criterion == IOU else key))
    return sorted(pairs)


def match_detections(preds, truths, spec: MatchSpec, threshold=None, calibs=None):
    """Greedy one-to-one matching per (frame, category).

    ``threshold`` defaults to the first distance threshold (distance
    criterion) or the per-class IoU threshold. With ``spec.fov_mask`` on,
    boxes whose center projects into no camera (``calibs`` with boxes in the
    LiDAR frame) are dropped first.
    """
    preds, truths = list(preds), list(truths)
    if spec.fov_mask:
        preds = fov_filter(preds, calibs)
        truths = fov_filter(truths, calibs)
    groups = defaultdict(lambda: ([], []))
    for i, p in enumerate(preds):
        groups[(p.frame_index, p.category)][0].append(i)
    for j, t in enumerate(truths):
        groups[(t.frame_index, t.category)][1].append(j)
    pairs = []
    for (frame, cat), (pi, ti) in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        th = threshold
        if th is None:
            th = spec.distance_thresholds[0] if spec.criterion == BEV_DISTANCE else spec.iou_threshold(cat)
        for a, b, s in _greedy([preds[i] for i in pi], [truths[j] for j in ti], spec.criterion, th):
            pairs.append((pi[a], ti[b], s))
    tp = len(pairs)
    return MatchResult(sorted(pairs), tp, len(preds) - tp, len(truths) - tp)


def fov_filter(dets, calibs):
    """Detections whose box center projects into at least one camera."""
    if calibs is None:
        raise ValueError("FOV masking needs camera calibrations")
    dets = list(dets)
    if not dets:
        return dets
    centers = np.array([d.box.center for d in dets])
    keep = in_any_view(centers, calibs)
    return [d for d, k in zip(dets, keep) if k]


def _by_class(dets):
    out = defaultdict(list)
    for d in dets:
        out[d.category].append(d)
    return out


def recall_at(preds, truths, spec, threshold):
    """Matched truths / truths, counted over the whole set."""
    res = match_detections(preds, truths, spec, threshold=threshold)
    n = res.tp + res.fn
    return res.tp / n if n else float("nan")


def recall_avg(preds, truths, spec: MatchSpec, calibs=None):
    """Per-class recall averaged over the distance thresholds.

    Returns {category: (mean recall, [recall per threshold])}.
    """
    if spec.criterion != BEV_DISTANCE:
        raise ValueError("recall_avg needs the BEV distance criterion")
    preds, truths = list(preds), list(truths)
    if spec.fov_mask:
        preds, truths = fov_filter(preds, calibs), fov_filter(truths, calibs)
    nofov = MatchSpec(**{**spec.__dict__, "fov_mask": False})
    pc, tc = _by_class(preds), _by_class(truths)
    out = {}
    for cat in sorted(tc):
        per = [recall_at(pc.get(cat, []), tc[cat], nofov, t) for t in spec.distance_thresholds]
        out[cat] = (float(np.mean(per)), per)
    return out


def interpolated_ap(tp_flags, n_truth, points=101):
    """Area under the interpolated PR curve, sampled at ``points`` recall levels."""
    if n_truth == 0:
        return float("nan")
    tp_flags = np.asarray(tp_flags, dtype=float)
    if len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(1.0 - tp_flags)
    recall = tp / n_truth
    precision = tp / (tp + fp)
    # precision envelope: best precision at recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    levels = np.linspace(0.0, 1.0, points)
    ap = 0.0
    for r in levels:
        hit = np.flatnonzero(recall >= r - 1e-12)
        ap += env[hit[0]] if len(hit) else 0.0
    return ap / points


def average_precision(preds, truths, spec: MatchSpec, threshold=None, calibs=None):
    """Per-class AP with predictions matched in descending confidence order.

    A prediction is a true positive when it matches a not-yet-matched truth
    of the same frame within the threshold (the closest, or highest IoU).
    """
    preds, truths = list(preds), list(truths)
    if spec.fov_mask:
        preds, truths = fov_filter(preds, calibs), fov_filter(truths, calibs)
    pc, tc = _by_class(preds), _by_class(truths)
    out = {}
    for cat in sorted(set(tc) | set(pc)):
        T = tc.get(cat, [])
        if not T:
            continue
        th = threshold
        if th is None:
            th = spec.distance_thresholds[0] if spec.criterion == BEV_DISTANCE else spec.iou_threshold(cat)
        P = sorted(pc.get(cat, []), key=lambda d: -d.confidence)
        by_frame = defaultdict(list)
        for j, t in enumerate(T):
            by_frame[t.frame_index].append(j)
        used = set()
        flags = []
        for p in P:
            best, best_key = None, None
            for j in by_frame.get(p.frame_index, []):
                if j in used:
                    continue
                if spec.criterion == BEV_DISTANCE:
                    d = bev_distance(p.box, T[j].box)
                    ok, key = d <= th, d
                else:
                    s = box_iou_3d(p.box, T[j].box)
                    ok, key = s >= th and s > 0, -s
                if ok and (best_key is None or key < best_key):
                    best, best_key = j, key
            if best is not None:
                used.add(best)
            flags.append(best is not None)
        out[cat] = interpolated_ap(flags, len(T))
    return out


def ap_distance_avg(preds, truths, spec: MatchSpec, calibs=None):
    """AP averaged over the distance thresholds, per class."""
    per = [average_precision(preds, truths, spec, threshold=t, calibs=calibs) for t in spec.distance_thresholds]
    cats = sorted(set().union(*per)) if per else []
    return {c: float(np.mean([p[c] for p in per if c in p])) for c in cats}


def range_breakdown(preds, truths, spec: MatchSpec, ego=None, calibs=None):
    """Recall per range bin; truths are binned by BEV distance from ``ego``.

    Predictions are binned the same way so each bin is evaluated on its own.
    Returns {(lo, hi): {category: recall}}.
    """
    ego = np.zeros(2) if ego is None else np.asarray(ego, dtype=float)[:2]

    def rng(d):
        return float(np.hypot(*(d.box.center[:2] - ego)))

    out = {}
    for lo, hi in spec.bins():
        P = [p for p in preds if lo <= rng(p) < hi]
        T = [t for t in truths if lo <= rng(t) < hi]
        if spec.criterion == BEV_DISTANCE:
            out[(lo, hi)] = {c: r for c, (r, _) in recall_avg(P, T, spec, calibs).items()}
        else:
            res = {}
            for c, ts in _by_class(T).items():
                ps = [p for p in P if p.category == c]
                m = match_detections(ps, ts, spec, calibs=calibs)
                res[c] = m.tp / (m.tp + m.fn) if (m.tp + m.fn) else float("nan")
            out[(lo, hi)] = res
    return out


def bin_of(distance, bins):
    for lo, hi in bins:
        if lo <= distance < hi:
            return (lo, hi)
    return None


# ---------------------------------------------------------------------------
# label metrics


def merge_labels(labels, vocabulary, groups=None):
    """Relabel so every category in a group shares the group's id.

    ``groups`` maps group name -> member names (default: car, truck, bus and
    other-vehicle become vehicle). Returns (new labels, new vocabulary).
    """
    groups = {"vehicle": VEHICLE_GROUP} if groups is None else groups
    member = {m: g for g, ms in groups.items() for m in ms}
    new_vocab = []
    for name in vocabulary:
        tgt = member.get(name, name)
        if tgt not in new_vocab:
            new_vocab.append(tgt)
    lut = np.array([new_vocab.index(member.get(n, n)) for n in vocabulary], dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    out = np.where(labels >= 0, lut[np.clip(labels, 0, None)], labels)
    return out, new_vocab


def segmentation_miou(pred, truth, classes):
    """Per-class point IoU over classes present in ``truth``, and their mean."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"label count mismatch: {pred.shape} vs {truth.shape}")
    per = {}
    for c in classes:
        t = truth == c
        if not t.any():
            continue
        p = pred == c
        per[c] = np.count_nonzero(p & t) / np.count_nonzero(p | t)
    miou = float(np.mean(list(per.values()))) if per else float("nan")
    return per, miou


# ---------------------------------------------------------------------------
# report


def _fmt(x):
    return "  -  " if x is None or (isinstance(x, float) and np.isnan(x)) else f"{100 * x:5.1f}"


def format_table(title, rows, columns):
    """Fixed-width text table; ``rows`` maps label -> {column: value in [0, 1]}."""
    width = max([len(str(r)) for r in rows] + [8])
    head = f"{'':<{width}} " + " ".join(f"{str(c):>8}" for c in columns)
    lines = [title, head, "-" * len(head)]
    for r, vals in rows.items():
        lines.append(f"{str(r):<{width}} " + " ".join(f"{_fmt(vals.get(c)):>8}" for c in columns))
    return "\n".join(lines)


def detection_report(preds, truths, spec: MatchSpec, calibs=None, ego=None):
    """Text report with one detection table per matching criterion plus ranges."""
    parts = []
    dist = MatchSpec(**{**spec.__dict__, "criterion": BEV_DISTANCE})
    iou = MatchSpec(**{**spec.__dict__, "criterion": IOU})
    cats = sorted({t.category for t in truths})
    rec = recall_avg(preds, truths, dist, calibs)
    apd = ap_distance_avg(preds, truths, dist, calibs)
    cols = ["AP", "Recall"] + [f"R@{t:g}m" for t in dist.distance_thresholds]
    rows = {}
    for c in cats:
        r, per = rec.get(c, (float("nan"), []))
        row = {"AP": apd.get(c), "Recall": r}
        row.update({f"R@{t:g}m": v for t, v in zip(dist.distance_thresholds, per)})
        rows[c] = row
    parts.append(format_table("Detection (BEV distance criterion)", rows, cols))

    api = average_precision(preds, truths, iou, calibs=calibs)
    rows = {}
    for c in cats:
        m = match_detections([p for p in preds if p.category == c], [t for t in truths if t.category == c], iou,
                             calibs=calibs)
        rows[c] = {"AP": api.get(c), "Recall": m.tp / (m.tp + m.fn) if (m.tp + m.fn) else None}
    parts.append(format_table("Detection (3D IoU criterion)", rows, ["AP", "Recall"]))

    rb = range_breakdown(preds, truths, dist, ego=ego, calibs=calibs)
    labels = [f"{lo:g}-{hi:g}m" if np.isfinite(hi) else f"{lo:g}m+" for lo, hi in rb]
    rows = {c: {lab: rb[k].get(c) for lab, k in zip(labels, rb)} for c in cats}
    parts.append(format_table("Recall by range (BEV distance criterion)", rows, labels))
    return "\n\n".join(parts)
