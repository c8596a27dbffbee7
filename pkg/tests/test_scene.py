import json

import numpy as np
import pytest

from autolabel3d.scene import (BundleError, EgoPose, MaskTrack2D, PointCloudFrame, SceneBundle, index_map, load_bundle,
                               save_bundle, tight_box, validate_bundle)
from autolabel3d.synth import association_scene, generate, traffic_scene

from conftest import make_calib


def _small_bundle():
    spec = traffic_scene(seed=0, n_frames=3, n_objects=3, image_width=160, image_height=80, lidar_beams=16,
                         lidar_azimuths=256)
    return generate(spec)[0]


def test_tight_box_is_exclusive_on_max_edges():
    assert tight_box([[3, 4], [5, 9]]) == (3.0, 4.0, 6.0, 10.0)
    assert tight_box(np.zeros((0, 2))) == (0.0, 0.0, 0.0, 0.0)


def test_generated_bundle_is_valid():
    assert validate_bundle(_small_bundle()) == []


def test_roundtrip_preserves_content(tmp_path):
    bundle = _small_bundle()
    save_bundle(bundle, tmp_path)
    back = load_bundle(tmp_path)
    assert back.category_vocabulary == bundle.category_vocabulary
    assert [f.frame_index for f in back.frames] == [f.frame_index for f in bundle.frames]
    for a, b in zip(bundle.frames, back.frames):
        # points are stored as float32
        np.testing.assert_allclose(a.points, b.points, atol=1e-5)
    for a, b in zip(bundle.poses, back.poses):
        np.testing.assert_allclose(a.transform, b.transform, atol=1e-12)
    key = lambda m: (m.view_id, m.frame_index, str(m.instance_id), m.category)  # noqa: E731
    ma, mb = sorted(bundle.mask_tracks, key=key), sorted(back.mask_tracks, key=key)
    assert len(ma) == len(mb)
    for a, b in zip(ma, mb):
        assert key(a) == key(b)
        assert set(map(tuple, a.pixels)) == set(map(tuple, b.pixels))
        np.testing.assert_allclose(a.appearance, b.appearance, atol=1e-9)


def test_load_reports_missing_directory(tmp_path):
    with pytest.raises(BundleError):
        load_bundle(tmp_path / "nope")


def test_load_rejects_corrupt_bundle(tmp_path):
    bundle = _small_bundle()
    save_bundle(bundle, tmp_path)
    calib = json.loads((tmp_path / "calib.json").read_text())
    first = next(iter(calib.values()))
    first["rotation"] = [2.0, 0, 0, 0, 1, 0, 0, 0, 1]
    (tmp_path / "calib.json").write_text(json.dumps(calib))
    with pytest.raises(BundleError) as err:
        load_bundle(tmp_path)
    assert any("orthonormal" in str(d) for d in err.value.diagnostics)


def test_validation_catches_each_invariant():
    calib = make_calib()
    frames = [PointCloudFrame(0, 0.0, np.zeros((2, 3)), np.zeros(2)), PointCloudFrame(1, 0.0, np.zeros((1, 3)),
                                                                                        np.zeros(1))]
    poses = [EgoPose(0, np.eye(4))]
    bad_px = MaskTrack2D("cam0", 0, 1, "car", [[700, 10]], (700, 10, 701, 11), [1.0, 0.0])
    bad_box = MaskTrack2D("cam0", 0, 2, "car", [[10, 10], [12, 11]], (0, 0, 5, 5), [0.6, 0.8])
    bad_norm = MaskTrack2D("cam0", 0, 3, "car", [[1, 1]], (1, 1, 2, 2), [1.0, 1.0])
    bad_view = MaskTrack2D("camX", 0, 4, "car", [[1, 1]], (1, 1, 2, 2), [1.0, 0.0])
    bad_cat = MaskTrack2D("cam0", 0, 5, "boat", [[1, 1]], (1, 1, 2, 2), [1.0, 0.0])
    b = SceneBundle(frames, [calib], poses, [bad_px, bad_box, bad_norm, bad_view, bad_cat], ["road", "car"])
    text = "\n".join(map(str, validate_bundle(b)))
    for needle in ("not strictly increasing", "frame has no pose", "out of image bounds", "tightly bound",
                   "appearance norm", "unknown view", "not in vocabulary"):
        assert needle in text


def test_index_map_later_masks_win():
    calib = make_calib(width=8, height=4)
    a = MaskTrack2D("cam0", 0, 1, "car", [[1, 1], [2, 1]], (1, 1, 3, 2), [1.0])
    b = MaskTrack2D("cam0", 0, 2, "car", [[2, 1]], (2, 1, 3, 2), [1.0])
    idx = index_map([a, b], calib)
    assert idx.shape == (4, 8)
    assert idx[1, 1] == 1 and idx[1, 2] == 2 and idx[0, 0] == 0


def test_pose_transforms_roundtrip(rng):
    yaw = 0.7
    T = np.eye(4)
    T[:2, :2] = [[np.cos(yaw), -np.sin(yaw)], [np.sin(yaw), np.cos(yaw)]]
    T[:3, 3] = [3.0, -2.0, 1.0]
    p = EgoPose(0, T)
    pts = rng.normal(size=(20, 3))
    np.testing.assert_allclose(p.to_local(p.to_global(pts)), pts, atol=1e-12)
    assert p.yaw == pytest.approx(yaw)


def test_association_scene_respects_view_budget():
    bundle, truth = generate(association_scene(seed=4))
    per_view = {}
    for m in bundle.mask_tracks:
        if m.is_thing:
            per_view[m.view_id] = per_view.get(m.view_id, 0) + 1
    assert all(v >= 1 for v in per_view.values())
