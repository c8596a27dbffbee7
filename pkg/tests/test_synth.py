import numpy as np
import pytest

from autolabel3d.boxes import Box3D
from autolabel3d.projection import project_points
from autolabel3d.synth import (association_scene, cast, generate, ray_box, ray_ground, scenario_from_dict,
                               traffic_scene, write_scenario)
from autolabel3d.scene import load_bundle, validate_bundle

SMALL = dict(n_frames=3, n_objects=4, image_width=160, image_height=80, lidar_beams=16, lidar_azimuths=256)


def _ray_box_brute(origin, d, box, steps=20000, tmax=40.0):
    ts = np.linspace(0, tmax, steps)
    inside = box.contains(origin + ts[:, None] * d)
    return ts[np.argmax(inside)] if inside.any() else np.inf


def test_ray_box_against_marching(rng):
    box = Box3D([8.0, 1.0, 0.75], [4.0, 1.8, 1.5], 0.4)
    origin = np.array([0.0, 0.0, 1.0])
    dirs = rng.normal(size=(300, 3)) * [0.1, 0.3, 0.1] + [1.0, 0.1, 0.0]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    got = ray_box(origin, dirs, box)
    hits = 0
    for d, t in zip(dirs, got):
        ref = _ray_box_brute(origin, d, box)
        if np.isinf(ref):
            assert np.isinf(t)
        else:
            hits += 1
            assert t == pytest.approx(ref, abs=40.0 / 20000 + 1e-9)
    assert hits > 30


def test_ground_and_nearest_hit():
    origin = np.array([0.0, 0.0, 2.0])
    dirs = np.array([[1.0, 0, -1.0], [1.0, 0.0, 0.0]]) / np.array([[np.sqrt(2)], [1.0]])
    np.testing.assert_allclose(ray_ground(origin, dirs), [2 * np.sqrt(2), np.inf])
    box = Box3D([1.5, 0.0, 1.0], [1.0, 1.0, 3.0], 0.0)
    t, kind, idx = cast(origin, dirs, [box], [])
    assert idx.tolist() == [0, 0]
    np.testing.assert_allclose(t, [np.sqrt(2), 1.0])
    t, _, idx = cast(origin, dirs, [], [])
    assert idx.tolist() == [0, -1] and np.isinf(t[1])


def test_generation_is_deterministic():
    a, ta = generate(traffic_scene(seed=11, **SMALL))
    b, tb = generate(traffic_scene(seed=11, **SMALL))
    for fa, fb in zip(a.frames, b.frames):
        np.testing.assert_array_equal(fa.points, fb.points)
    assert [m.pixels.tobytes() for m in a.mask_tracks] == [m.pixels.tobytes() for m in b.mask_tracks]
    for k in ta.semantic:
        np.testing.assert_array_equal(ta.semantic[k], tb.semantic[k])
    c, _ = generate(traffic_scene(seed=12, **SMALL))
    assert not np.array_equal(a.frames[0].points, c.frames[0].points)


def test_generated_truth_is_consistent():
    bundle, truth = generate(traffic_scene(seed=1, **SMALL))
    assert validate_bundle(bundle) == []
    for f in bundle.frames:
        assert len(truth.semantic[f.frame_index]) == len(f.points)
    # every truth box holds the points labeled with its instance
    for rec in truth.boxes:
        sel = truth.instance[rec.frame_index] == rec.instance_id
        pts = bundle.frame(rec.frame_index).points[sel]
        assert rec.box.contains(pts, inflate=0.01).all()


def test_masks_cover_their_objects_points():
    bundle, truth = generate(traffic_scene(seed=3, **SMALL))
    calibs = bundle.calib_by_view
    for m in bundle.mask_tracks:
        if not m.is_thing:
            continue
        inst = truth.mask_objects[(m.view_id, m.instance_id)]
        f = bundle.frame(m.frame_index)
        pts = f.points[truth.instance[m.frame_index] == inst]
        proj = project_points(pts, calibs[m.view_id])
        if not len(proj):
            continue
        mask = np.zeros((calibs[m.view_id].image_height, calibs[m.view_id].image_width), bool)
        mask[m.pixels[:, 1], m.pixels[:, 0]] = True
        px = proj.pixels
        assert mask[px[:, 1], px[:, 0]].mean() > 0.5


def test_scene_keeps_ego_corridor_clear():
    spec = traffic_scene(seed=5, n_frames=20, n_objects=12)
    for o in spec.objects:
        for t in np.arange(20) * spec.dt:
            y = o.position[1] + t * o.velocity[1]
            assert abs(y) - 0.5 * np.hypot(*o.dims[:2]) >= 1.5 - 1e-9
            assert abs(y) < 10


def test_scenario_from_dict():
    spec = scenario_from_dict({"preset": "traffic", "seed": 4, "n_frames": 2})
    assert spec.n_frames == 2
    with pytest.raises(ValueError):
        scenario_from_dict({"preset": "nope"})
    with pytest.raises(ValueError):
        scenario_from_dict({"bogus": 1})


def test_association_preset_has_shared_objects():
    _, truth = generate(association_scene(seed=2))
    objects = list(truth.mask_objects.values())
    assert len(objects) > len(set(objects))  # some objects are seen by two views


def test_write_scenario_roundtrip(tmp_path):
    bundle, truth = write_scenario(traffic_scene(seed=0, **SMALL), tmp_path)
    back = load_bundle(tmp_path)
    assert len(back.frames) == len(bundle.frames)
    assert (tmp_path / "truth" / "boxes.csv").exists()
    assert (tmp_path / "truth" / "meta.json").exists()
