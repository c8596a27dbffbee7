"""End-to-end labeling run over a scene bundle.

Stages run in a fixed order and each writes its artifacts under
``<out>/<stage>/`` together with a ``manifest.json`` holding the stage
config, a hash of every input and a hash of every output. A stage whose
manifest matches the current config and inputs is skipped.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .association import AssociationConfig, GlobalIdMap, unify_sequence
from .boxes import (DYNAMIC, BoxConfig, BoxRecord, DegenerateFitError, ObjectTrack, box_from_points,
                    interpret_track, read_box_table, write_box_table)
from .completion import ExternalCompleter, MirrorCompleter, completeness
from .evaluation import (BEV_DISTANCE, IOU, Detection, MatchSpec, average_precision, detection_report,
                         recall_avg, segmentation_miou)
from .occupancy import (GridConfig, GridSpec, OccupancyGrid, attach_flow, box_velocity, fov_voxel_mask,
                        grid_spec_for_poses, read_grid, voxelize, write_grid)
from .scene import BundleError, load_bundle
from .segmentation import ParallaxConfig, assign_by_projection, denoise_instances, filter_scene, read_labels, \
    write_labels

log = logging.getLogger(__name__)

STAGES = ["assoc", "seg", "complete", "boxes", "occ", "eval"]
ALIASES = {"association": "assoc", "segmentation": "seg", "completion": "complete", "box": "boxes",
           "occupancy": "occ", "evaluation": "eval"}
DEPENDS = {"assoc": [], "seg": ["assoc"], "complete": ["seg"], "boxes": ["seg", "complete"],
           "occ": ["seg", "boxes"], "eval": ["seg", "boxes", "occ"]}


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"stage {stage!r}: {message}")
        self.stage = stage


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class DenoiseConfig:
    eps: float = 0.5
    min_pts: int = 5


@dataclass
class CompletionConfig:
    method: str = "none"  # none | mirror | external
    command: list = field(default_factory=list)  # external completer argv prefix
    resolution: float = 0.2
    threshold: float = 0.6
    only_partial: bool = True  # complete only tracks judged partial

    def __post_init__(self):
        if self.method not in ("none", "mirror", "external"):
            raise ConfigError(f"completion.method must be none, mirror or external, not {self.method!r}")
        if self.method == "external" and not self.command:
            raise ConfigError("completion.command is required for the external method")


@dataclass
class EvalConfig:
    criterion: str = BEV_DISTANCE
    iou_thresholds: dict = field(default_factory=lambda: dict(MatchSpec().iou_thresholds))
    default_iou_threshold: float = 0.5
    distance_thresholds: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    fov_mask: bool = True
    range_bins: list = field(default_factory=lambda: [0.0, 30.0, 50.0])

    def match_spec(self):
        return MatchSpec(self.criterion, dict(self.iou_thresholds), self.default_iou_threshold,
                         tuple(self.distance_thresholds), self.fov_mask, tuple(self.range_bins))


@dataclass
class PipelineConfig:
    association: AssociationConfig = field(default_factory=AssociationConfig)
    parallax: ParallaxConfig = field(default_factory=ParallaxConfig)
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    completion: CompletionConfig = field(default_factory=CompletionConfig)
    boxes: BoxConfig = field(default_factory=BoxConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    stages: list = field(default_factory=lambda: list(STAGES))
    jobs: int = 1
    seed: int = 0


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(doc).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    defaults = cls()
    for name, value in doc.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(doc):
    cfg = _build(PipelineConfig, doc or {}, "config")
    cfg.stages = normalize_stages(cfg.stages)
    return cfg


def load_config(path):
    import yaml

    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc or {})


def config_to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: config_to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [config_to_dict(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): config_to_dict(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def normalize_stages(stages):
    if isinstance(stages, str):
        stages = [s for s in stages.replace(" ", "").split(",") if s]
    out = []
    for s in stages:
        s = ALIASES.get(s, s)
        if s not in STAGES:
            raise ConfigError(f"unknown stage {s!r}; stages are {', '.join(STAGES)}")
        out.append(s)
    return [s for s in STAGES if s in out]


# ---------------------------------------------------------------------------
# hashing and manifests


def _sha(data: bytes):
    return hashlib.sha256(data).hexdigest()


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_hashes(root, exclude=("manifest.json",)):
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in exclude:
            out[p.relative_to(root).as_posix()] = file_hash(p)
    return out


def _digest(obj):
    return _sha(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_manifest(stage_dir):
    p = Path(stage_dir) / "manifest.json"
    return json.loads(p.read_text()) if p.exists() else None


# ---------------------------------------------------------------------------
# helpers shared by stages


def _pmap(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _frame_name(f):
    return f"{f:06d}"


def load_labels(run_dir, bundle):
    out = {}
    for fr in bundle.frames:
        path = Path(run_dir) / "seg" / "labels" / f"{_frame_name(fr.frame_index)}.bin"
        out[fr.frame_index] = read_labels(path, len(fr.points))
    return out


def build_tracks(bundle, labels):
    """ObjectTracks (LiDAR-frame point sets per frame) from per-frame labels."""
    vocab = bundle.category_vocabulary
    pts, sems = {}, {}
    for fr in bundle.frames:
        sem, inst = labels[fr.frame_index]
        for gid in np.unique(inst[inst > 0]):
            sel = inst == gid
            pts.setdefault(int(gid), {})[fr.frame_index] = fr.points[sel]
            sems.setdefault(int(gid), []).append(sem[sel])
    tracks = []
    for gid in sorted(pts):
        s = np.concatenate(sems[gid])
        s = s[s >= 0]
        cat = vocab[int(np.bincount(s).argmax())] if len(s) else ""
        tracks.append(ObjectTrack(gid, cat, pts[gid]))
    return tracks


def make_completer(cfg: CompletionConfig):
    if cfg.method == "mirror":
        return MirrorCompleter()
    if cfg.method == "external":
        return ExternalCompleter(list(cfg.command))
    return None


# ---------------------------------------------------------------------------
# stage bodies (module level so worker processes can pickle them)


def _segment_frame(args):
    frame, calibs, masks, id_map, vocab, pcfg, dcfg = args
    raw = assign_by_projection(frame, calibs, masks, id_map, vocab)
    filtered = filter_scene(raw, None, pcfg)
    return denoise_instances(filtered, dcfg.eps, dcfg.min_pts)


def _fit_track(args):
    track, poses, timestamps, bcfg, completer = args
    try:
        return interpret_track(track, poses, timestamps, bcfg, completer)
    except DegenerateFitError as exc:
        log.info("track %d: %s", track.instance_id, exc)
        track.boxes = {}
        return track


class Run:
    """One pipeline invocation over a bundle into an output directory."""

    def __init__(self, bundle_dir, out_dir, config: PipelineConfig):
        self.bundle_dir = Path(bundle_dir)
        self.out = Path(out_dir)
        self.cfg = config
        self._bundle = None
        self._bdig = None
        self.log = []  # (stage, "ran" | "skipped")

    @property
    def bundle(self):
        if self._bundle is None:
            self._bundle = load_bundle(self.bundle_dir)
        return self._bundle

    @property
    def truth_dir(self):
        t = self.bundle_dir / "truth"
        return t if t.is_dir() else None

    def stage_config(self, stage):
        c = self.cfg
        part = {"assoc": {"association": c.association},
                "seg": {"parallax": c.parallax, "denoise": c.denoise},
                "complete": {"completion": c.completion},
                "boxes": {"boxes": c.boxes},
                "occ": {"grid": c.grid},
                "eval": {"eval": c.eval}}[stage]
        doc = config_to_dict(part)
        doc["seed"] = c.seed
        return doc

    def stage_inputs(self, stage):
        inputs = {"bundle": self._bundle_digest()}
        for dep in DEPENDS[stage]:
            man = read_manifest(self.out / dep)
            if man is None:
                raise StageError(stage, f"missing dependency: stage {dep!r} has no output in {self.out}; run it first")
            inputs[dep] = _digest(man["outputs"])
        return inputs

    def _bundle_digest(self):
        if self._bdig is None:
            self._bdig = _digest(tree_hashes(self.bundle_dir))
        return self._bdig

    def execute(self, stages=None):
        stages = normalize_stages(stages if stages is not None else self.cfg.stages)
        if not self.bundle_dir.is_dir():
            raise BundleError(f"{self.bundle_dir}: not a directory")
        self.out.mkdir(parents=True, exist_ok=True)
        for stage in stages:
            if stage == "eval" and self.truth_dir is None:
                log.info("no truth/ directory in the bundle: eval skipped")
                self.log.append((stage, "no-truth"))
                continue
            cfg_doc = self.stage_config(stage)
            inputs = self.stage_inputs(stage)
            d = self.out / stage
            man = read_manifest(d)
            key = {"config_hash": _digest(cfg_doc), "inputs": inputs}
            if man is not None and {k: man.get(k) for k in key} == key and tree_hashes(d) == man.get("outputs"):
                self.log.append((stage, "skipped"))
                continue
            if d.exists():
                shutil.rmtree(d)
            d.mkdir(parents=True)
            try:
                getattr(self, f"_stage_{stage}")(d)
            except (StageError, BundleError):
                raise
            except Exception as exc:  # report with stage context
                raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
            manifest = {"stage": stage, "config": cfg_doc, **key, "outputs": tree_hashes(d)}
            _dump_json(d / "manifest.json", manifest)
            self.log.append((stage, "ran"))
        return self.log

    # -- stages -------------------------------------------------------------

    def _stage_assoc(self, d):
        ids = unify_sequence(self.bundle, self.cfg.association)
        _dump_json(d / "global_ids.json", ids.to_json())

    def _stage_seg(self, d):
        b = self.bundle
        ids = GlobalIdMap.from_json(json.loads((self.out / "assoc" / "global_ids.json").read_text()))
        (d / "labels").mkdir()
        jobs = [(fr, b.calibrations, b.masks_of_frame(fr.frame_index), ids, b.category_vocabulary,
                 self.cfg.parallax, self.cfg.denoise) for fr in b.frames]
        stats = {"frames": len(jobs), "points": 0, "labeled": 0, "instances": []}
        inst = set()
        for fr, res in zip(b.frames, _pmap(_segment_frame, jobs, self.cfg.jobs)):
            write_labels(d / "labels" / f"{_frame_name(fr.frame_index)}.bin", res)
            stats["points"] += len(res)
            stats["labeled"] += int(res.labeled.sum())
            inst.update(int(i) for i in np.unique(res.instance[res.instance > 0]))
        stats["instances"] = sorted(inst)
        _dump_json(d / "stats.json", stats)

    def _stage_complete(self, d):
        b = self.bundle
        cc = self.cfg.completion
        tracks = build_tracks(b, load_labels(self.out, b))
        rows = []
        for tr in tracks:
            best = max(tr.points, key=lambda f: len(tr.points[f]))
            pts = tr.points[best]
            row = {"instance_id": tr.instance_id, "category": tr.category, "frame_index": best,
                   "points": int(len(pts))}
            try:
                rep = completeness(pts, box_from_points(pts), cc.resolution, cc.threshold)
                row.update(ratio=rep.occupied_grid_ratio, verdict=rep.verdict)
            except (DegenerateFitError, ValueError):
                row.update(ratio=None, verdict="degenerate")
            row["complete"] = cc.method != "none" and (row["verdict"] == "partial" or not cc.only_partial)
            rows.append(row)
        _dump_json(d / "completion.json", {"method": cc.method, "tracks": rows})

    def _stage_boxes(self, d):
        b = self.bundle
        plan = {r["instance_id"]: r["complete"]
                for r in json.loads((self.out / "complete" / "completion.json").read_text())["tracks"]}
        completer = make_completer(self.cfg.completion)
        poses = {p.frame_index: p.transform for p in b.poses}
        ts = {fr.frame_index: fr.timestamp for fr in b.frames}
        tracks = build_tracks(b, load_labels(self.out, b))
        jobs = [(t, poses, ts, self.cfg.boxes, completer if plan.get(t.instance_id) else None) for t in tracks]
        done = _pmap(_fit_track, jobs, self.cfg.jobs)
        records, meta = [], []
        for t in done:
            for f, box in sorted(t.boxes.items()):
                records.append(BoxRecord(f, t.instance_id, t.category, box, t.motion_state, 1.0))
            meta.append({"instance_id": t.instance_id, "category": t.category, "motion_state": t.motion_state,
                         "anchor": None if t.anchor is None else [float(x) for x in t.anchor],
                         "frames": sorted(int(f) for f in t.boxes),
                         "interpolated": sorted(int(f) for f in t.interpolated)})
        write_box_table(d / "boxes.csv", records)
        _dump_json(d / "tracks.json", {"tracks": meta})

    def _stage_occ(self, d):
        b = self.bundle
        spec = grid_spec_for_poses(b.poses, self.cfg.grid)
        _dump_json(d / "grid.json", {"origin": list(spec.origin), "voxel_size": spec.voxel_size,
                                     "dims": list(spec.dims)})
        labels = load_labels(self.out, b)
        poses = {p.frame_index: p.transform for p in b.poses}
        records = read_box_table(self.out / "boxes" / "boxes.csv")
        dynamic = {}
        for r in records:
            if r.motion_state == DYNAMIC:
                dynamic.setdefault(r.instance_id, {})[r.frame_index] = r.box.transformed(poses[r.frame_index])
        grids = build_occupancy(b, labels, dynamic, spec, self.cfg.grid.min_points)
        for f, g in grids.items():
            write_grid(d / f"{_frame_name(f)}.occ", g)

    def _stage_eval(self, d):
        b = self.bundle
        truth = self.truth_dir
        results = evaluate_run(self.out, truth, self.cfg.eval.match_spec(), b)
        (d / "report.txt").write_text(results.pop("report") + "\n")
        _dump_json(d / "metrics.json", results)


# ---------------------------------------------------------------------------
# occupancy assembly


def build_occupancy(bundle, labels, dynamic, spec: GridSpec, min_points=1):
    """Per-frame grids: static evidence aggregated over the run, movers carved per frame.

    ``dynamic`` maps instance -> {frame: global Box3D}. Points of dynamic
    instances are gathered in their box frame over all frames and re-placed at
    each frame's box.
    """
    poses = {p.frame_index: p.transform for p in bundle.poses}
    ts = {fr.frame_index: fr.timestamp for fr in bundle.frames}
    S_pts, S_sem, S_inst = [], [], []
    local = {gid: ([], []) for gid in dynamic}
    for fr in bundle.frames:
        f = fr.frame_index
        sem, inst = labels[f]
        T = poses[f]
        g = fr.points @ T[:3, :3].T + T[:3, 3]
        dyn = np.isin(inst, list(dynamic)) if dynamic else np.zeros(len(inst), bool)
        S_pts.append(g[~dyn])
        S_sem.append(sem[~dyn])
        S_inst.append(inst[~dyn])
        for gid in dynamic:
            sel = inst == gid
            if sel.any() and f in dynamic[gid]:
                local[gid][0].append(dynamic[gid][f].to_local(g[sel]))
                local[gid][1].append(sem[sel])
    static = voxelize(np.concatenate(S_pts), np.concatenate(S_sem), np.concatenate(S_inst), spec, 0, min_points)
    centers = spec.centers(static.index)
    out = {}
    frames = sorted(ts)
    for f in frames:
        keep = np.ones(static.n_occupied, dtype=bool)
        D_pts, D_sem, D_inst, motions = [], [], [], []
        for gid, boxes in dynamic.items():
            if f not in boxes:
                continue
            box = boxes[f]
            keep &= ~box.contains(centers, inflate=0.05)
            if local[gid][0]:
                loc = np.concatenate(local[gid][0])
                c, s = np.cos(box.heading), np.sin(box.heading)
                gpts = np.stack([c * loc[:, 0] - s * loc[:, 1], s * loc[:, 0] + c * loc[:, 1], loc[:, 2]], 1) + box.center
                D_pts.append(gpts)
                D_sem.append(np.concatenate(local[gid][1]))
                D_inst.append(np.full(len(gpts), gid))
            nxt = [g for g in frames if g > f and g in boxes]
            prv = [g for g in frames if g < f and g in boxes]
            if nxt:
                v, w = box_velocity(box, boxes[nxt[0]], ts[nxt[0]] - ts[f])
            elif prv:
                v, w = box_velocity(boxes[prv[-1]], box, ts[f] - ts[prv[-1]])
            else:
                v, w = np.zeros(3), 0.0
            motions.append((box, v, w))
        if D_pts:
            dyn = voxelize(np.concatenate(D_pts), np.concatenate(D_sem), np.concatenate(D_inst), spec, f, min_points)
        else:
            dyn = OccupancyGrid(spec, f)
        # movers override static evidence where both claim a voxel
        st = np.isin(static.index[keep], dyn.index, invert=True)
        idx = np.concatenate([static.index[keep][st], dyn.index])
        order = np.argsort(idx, kind="stable")
        grid = OccupancyGrid(spec, f, idx[order],
                             np.concatenate([static.semantic[keep][st], dyn.semantic])[order],
                             np.concatenate([static.instance[keep][st], dyn.instance])[order],
                             np.zeros((len(idx), 3)))
        out[f] = attach_flow(grid, motions)
    return out


# ---------------------------------------------------------------------------
# evaluation against a truth directory


def _detections(records):
    return [Detection(r.frame_index, r.category, r.box, r.confidence, r.instance_id) for r in records]


def evaluate_run(run_dir, truth_dir, spec: MatchSpec, bundle):
    """Detection, segmentation and occupancy metrics of a run against truth/."""
    run_dir, truth_dir = Path(run_dir), Path(truth_dir)
    preds = _detections(read_box_table(run_dir / "boxes" / "boxes.csv"))
    truths = _detections(read_box_table(truth_dir / "boxes.csv"))
    calibs = bundle.calibrations
    vocab = bundle.category_vocabulary
    dist = MatchSpec(**{**spec.__dict__, "criterion": BEV_DISTANCE})
    iou = MatchSpec(**{**spec.__dict__, "criterion": IOU})
    metrics = {"detection": {
        "bev_distance": {c: {"recall": r, "per_threshold": per}
                         for c, (r, per) in recall_avg(preds, truths, dist, calibs).items()},
        "iou": {c: {"ap": ap} for c, ap in average_precision(preds, truths, iou, calibs=calibs).items()},
    }}
    lines = [detection_report(preds, truths, spec, calibs=calibs)]

    # segmentation
    labels_dir = run_dir / "seg" / "labels"
    if labels_dir.is_dir() and (truth_dir / "labels").is_dir():
        P, T = [], []
        for fr in bundle.frames:
            n = len(fr.points)
            P.append(read_labels(labels_dir / f"{_frame_name(fr.frame_index)}.bin", n)[0])
            T.append(read_labels(truth_dir / "labels" / f"{_frame_name(fr.frame_index)}.bin", n)[0])
        per, miou = segmentation_miou(np.concatenate(P), np.concatenate(T), range(len(vocab)))
        metrics["segmentation"] = {"per_class": {vocab[c]: v for c, v in per.items()}, "miou": miou}
        lines.append("Segmentation IoU\n" + "\n".join(f"{vocab[c]:<12} {100 * v:5.1f}" for c, v in per.items())
                     + f"\n{'mIoU':<12} {100 * miou:5.1f}")

    # occupancy
    occ_truth = truth_dir / "occupancy"
    occ_pred = run_dir / "occ"
    if occ_truth.is_dir() and occ_pred.is_dir():
        inter = np.zeros(len(vocab))
        union = np.zeros(len(vocab))
        n = 0
        for fr in bundle.frames:
            name = f"{_frame_name(fr.frame_index)}.occ"
            if not (occ_truth / name).exists() or not (occ_pred / name).exists():
                continue
            pg, tg = read_grid(occ_pred / name), read_grid(occ_truth / name)
            if pg.spec != tg.spec:
                lines.append("Occupancy: grid specs differ from truth; skipped")
                break
            mask = fov_voxel_mask(pg.spec, calibs, bundle.pose(fr.frame_index)).ravel() if spec.fov_mask else None
            ps, tsem = pg.dense_semantic().ravel(), tg.dense_semantic().ravel()
            if mask is not None:
                ps, tsem = ps[mask], tsem[mask]
            for c in range(len(vocab)):
                p, t = ps == c, tsem == c
                inter[c] += np.count_nonzero(p & t)
                union[c] += np.count_nonzero(p | t)
            n += 1
        if n:
            per = {vocab[c]: inter[c] / union[c] for c in range(len(vocab)) if union[c] > 0}
            miou = float(np.mean(list(per.values()))) if per else float("nan")
            metrics["occupancy"] = {"per_class": per, "miou": miou, "frames": n}
            lines.append("Occupancy IoU\n" + "\n".join(f"{c:<12} {100 * v:5.1f}" for c, v in per.items())
                         + f"\n{'mIoU':<12} {100 * miou:5.1f}")
    metrics["report"] = "\n\n".join(lines)
    return metrics


# ---------------------------------------------------------------------------
# report


def report(run_dir):
    """Human-readable summary of a finished run."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"{run_dir} is not a run directory")
    missing = [s for s in STAGES[:5] if read_manifest(run_dir / s) is None]
    if missing:
        raise FileNotFoundError(f"incomplete run: no output for stage(s) {', '.join(missing)}")
    lines = [f"Run {run_dir}"]
    seg = json.loads((run_dir / "seg" / "stats.json").read_text())
    lines.append(f"segmentation: {seg['frames']} frames, {seg['labeled']}/{seg['points']} points labeled, "
                 f"{len(seg['instances'])} instances")
    comp = json.loads((run_dir / "complete" / "completion.json").read_text())
    n_c = sum(1 for r in comp["tracks"] if r["complete"])
    lines.append(f"completion: method {comp['method']}, {n_c}/{len(comp['tracks'])} tracks completed")
    tracks = json.loads((run_dir / "boxes" / "tracks.json").read_text())["tracks"]
    n_box = sum(len(t["frames"]) for t in tracks)
    n_dyn = sum(1 for t in tracks if t["motion_state"] == DYNAMIC)
    lines.append(f"boxes: {len(tracks)} tracks ({n_dyn} dynamic), {n_box} boxes")
    occ = sorted((run_dir / "occ").glob("*.occ"))
    if occ:
        counts = [read_grid(p).n_occupied for p in occ]
        lines.append(f"occupancy: {len(occ)} grids, mean {np.mean(counts):.0f} occupied voxels")
    ev = run_dir / "eval" / "report.txt"
    if ev.exists():
        lines.append("")
        lines.append(ev.read_text().rstrip())
    else:
        lines.append("")
        lines.append("evaluation: no ground truth for this run; section omitted")
    return "\n".join(lines)
